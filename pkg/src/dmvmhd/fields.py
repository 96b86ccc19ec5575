"""Analytic space-time fields backed by sympy expressions.

Boundary data, reference solutions and audit test functions are all given
in closed form, so derivatives (gradients, divergence, curl, time
derivatives) are exact rather than finite-differenced.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy as sp

t_sym, x_sym, y_sym, z_sym = sp.symbols("t x y z", real=True)
COORDS = (x_sym, y_sym, z_sym)
ARGS = (t_sym, x_sym, y_sym, z_sym)


def exact_float(v):
    """Sympy number that prints (and hence lambdifies) back to the same double."""
    v = float(v)
    return sp.Integer(int(v)) if v.is_integer() and abs(v) < 2**53 else sp.Float(v, 17)


def _coords(X):
    """Pad a tuple of 1..3 coordinate arrays to three (missing ones are zero)."""
    X = tuple(np.asarray(c, float) for c in X)
    shape = np.broadcast_shapes(*(c.shape for c in X)) if X else ()
    X = tuple(np.broadcast_to(c, shape) for c in X)
    return X + tuple(np.zeros(shape) for _ in range(3 - len(X))), shape


def _lambdify(expr):
    f = sp.lambdify(ARGS, expr, modules="numpy")

    def call(t, X):
        (x, y, z), shape = _coords(X)
        out = f(float(t), x, y, z)
        return np.broadcast_to(np.asarray(out, float), shape).copy()

    def many(times, X):
        (x, y, z), shape = _coords(X)
        tt = np.asarray(times, float).reshape((-1,) + (1,) * len(shape))
        out = f(tt, x[None], y[None], z[None])
        return np.broadcast_to(np.asarray(out, float), (tt.shape[0],) + shape).copy()

    call.many = many
    return call


@dataclass(frozen=True, eq=False)
class ScalarField:
    expr: sp.Expr
    name: str = ""

    @classmethod
    def constant(cls, value, name=""):
        return cls(exact_float(value), name)

    @cached_property
    def _f(self):
        return _lambdify(self.expr)

    def __call__(self, t, X):
        return self._f(t, X)

    def at_times(self, times, X):
        """Values ``(T, *shape)`` at several times in one vectorised call."""
        return self._f.many(times, X)

    @cached_property
    def dt(self):
        return ScalarField(sp.diff(self.expr, t_sym), f"d_t {self.name}")

    @cached_property
    def grad(self):
        return VectorField(tuple(sp.diff(self.expr, c) for c in COORDS), f"grad {self.name}")

    @cached_property
    def is_stationary(self):
        return sp.simplify(sp.diff(self.expr, t_sym)) == 0

    def __mul__(self, other):
        other = other.expr if isinstance(other, ScalarField) else sp.sympify(other)
        return ScalarField(self.expr * other, self.name)

    __rmul__ = __mul__

    def __add__(self, other):
        other = other.expr if isinstance(other, ScalarField) else sp.sympify(other)
        return ScalarField(self.expr + other, self.name)

    __radd__ = __add__


@dataclass(frozen=True, eq=False)
class VectorField:
    exprs: tuple
    name: str = ""

    def __post_init__(self):
        if len(self.exprs) != 3:
            raise ValueError("vector fields carry three components")

    @classmethod
    def constant(cls, vec, name=""):
        return cls(tuple(exact_float(v) for v in vec), name)

    @cached_property
    def _fs(self):
        return tuple(_lambdify(e) for e in self.exprs)

    def __call__(self, t, X):
        return np.stack([f(t, X) for f in self._fs])

    def at_times(self, times, X):
        """Values ``(T, 3, *shape)``."""
        return np.stack([f.many(times, X) for f in self._fs], axis=1)

    def component(self, i):
        return ScalarField(self.exprs[i], f"{self.name}[{i}]")

    @cached_property
    def dt(self):
        return VectorField(tuple(sp.diff(e, t_sym) for e in self.exprs), f"d_t {self.name}")

    @cached_property
    def div(self):
        return ScalarField(sum(sp.diff(e, c) for e, c in zip(self.exprs, COORDS)), f"div {self.name}")

    @cached_property
    def curl(self):
        a, b, c = self.exprs
        x, y, z = COORDS
        return VectorField(
            (sp.diff(c, y) - sp.diff(b, z), sp.diff(a, z) - sp.diff(c, x), sp.diff(b, x) - sp.diff(a, y)),
            f"curl {self.name}",
        )

    @cached_property
    def jacobian(self):
        """``J[i][k] = d_k v_i`` as nested tuples of scalar fields."""
        return tuple(tuple(ScalarField(sp.diff(e, c)) for c in COORDS) for e in self.exprs)

    def grad_values(self, t, X):
        """Array ``(3, 3, ...)`` with ``[i, k] = d_k v_i``."""
        return np.stack([np.stack([J(t, X) for J in row]) for row in self.jacobian])

    @cached_property
    def is_stationary(self):
        return all(sp.simplify(sp.diff(e, t_sym)) == 0 for e in self.exprs)

    def __mul__(self, s):
        s = s.expr if isinstance(s, ScalarField) else sp.sympify(s)
        return VectorField(tuple(e * s for e in self.exprs), self.name)

    __rmul__ = __mul__

    def __add__(self, other):
        return VectorField(tuple(a + b for a, b in zip(self.exprs, other.exprs)), self.name)


def is_symbolically_zero(expr):
    return sp.simplify(expr) == 0


__all__ = ["ScalarField", "VectorField", "t_sym", "x_sym", "y_sym", "z_sym", "COORDS", "is_symbolically_zero"]
