"""Run configuration, its JSON schema, and the theorem-shaped scenario presets.

A configuration is a JSON-compatible mapping. ``RunConfig.from_dict``
validates it against :data:`SCHEMA` and then builds every referenced object
(grid, closures, solver config) so that invalid input fails before any
compute. Presets pin the structural hypotheses of one uniqueness theorem
and provide a run-time monitor that aborts with a named
:class:`HypothesisViolation`.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import jsonschema
import numpy as np

from .constitutive import TransportModel
from .eos import IdealPolytropic, MonatomicRadiation, eos_from_spec, pressure_growth_constant
from .errors import ConfigError, HypothesisViolation
from .grid import Grid
from .relative_energy import CutoffSpec
from .solver import SolverConfig

logger = logging.getLogger(__name__)

PERTURBATIONS = ("none", "solenoidal-B", "velocity-bump", "temperature-bump", "mixed")
PRESETS = ("bounded-dmv", "constant-coefficients", "perfect-gas", "unconditional")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_pair = {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "string"}}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "dmvmhd run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"enum": list(PRESETS) + [None]},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["shape"],
            "properties": {
                "shape": {"type": "array", "minItems": 1, "maxItems": 3, "items": {"type": "integer", "minimum": 2}},
                "lengths": {"type": "array", "minItems": 1, "maxItems": 3, "items": _pos},
                "theta_bc": {"type": "array", "items": _pair},
                "magnetic_bc": {"type": "array", "items": _pair},
            },
        },
        "eos": {
            "type": "object",
            "required": ["name"],
            "properties": {
                "name": {"enum": ["ideal", "monatomic_radiation"]},
                "c_v": _pos,
                "p_infinity": _pos,
                "a": _nonneg,
                "P_table": {"type": ["string", "null"]},
                "entropy_mode": {"enum": ["auto", "closed", "table"]},
            },
            "additionalProperties": False,
        },
        "transport": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: _nonneg for k in ("mu0", "mu1", "eta0", "eta1", "kappa0", "kappa1", "zeta0", "zeta1")},
        },
        "equilibrium": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rho": _pos,
                "theta": _pos,
                "B": {"type": "array", "minItems": 3, "maxItems": 3, "items": _num},
            },
        },
        "perturbation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"kind": {"enum": list(PERTURBATIONS)}, "amplitude": _nonneg},
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "cfl": _pos,
                "t_end": _pos,
                "steps": {"type": ["integer", "null"], "minimum": 1},
                "div_control": {"enum": ["projection", "ct", "none"]},
                "snapshot_every": {"type": "integer", "minimum": 1},
                "fault_resistive_heating": {"type": "boolean"},
                "numerical_heating": {"type": "boolean"},
            },
        },
        "diagnostics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "relative_energy": {"type": "boolean"},
                "entropy_audit": {"type": "boolean"},
                "kp_ratio": {"type": "boolean"},
                "write_snapshots": {"type": "boolean"},
            },
        },
        "bounds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: _pos for k in ("rho_min", "rho_max", "theta_min", "theta_max", "u_max", "s_max")},
        },
        "cutoff_delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "rei_c": _nonneg,
        "C_audit": _pos,
        "C_cd": _nonneg,
        "ensemble": {"type": "integer", "minimum": 1},
        "dictionary_size": {"type": "integer", "minimum": 1},
        "amplitudes": {"type": "array", "minItems": 1, "items": _pos},
        "reference_factor": {"type": "integer", "minimum": 2},
        "out": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
}


@dataclass(frozen=True)
class Bounds:
    rho_min: float = 0.1
    rho_max: float = 10.0
    theta_min: float = 0.1
    theta_max: float = 10.0
    u_max: float = 2.0
    s_max: float = 10.0


@dataclass(frozen=True)
class RunConfig:
    grid: dict = field(default_factory=lambda: {"shape": [64]})
    eos: dict = field(default_factory=lambda: {"name": "monatomic_radiation"})
    transport: dict = field(default_factory=dict)
    equilibrium: dict = field(default_factory=lambda: {"rho": 1.0, "theta": 1.0, "B": [0.3, 0.0, 1.0]})
    perturbation: dict = field(default_factory=lambda: {"kind": "none", "amplitude": 0.0})
    solver: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    preset: str | None = None
    cutoff_delta: float = 0.05
    rei_c: float = 10.0
    C_audit: float = 10.0
    C_cd: float = 1.0
    ensemble: int = 4
    dictionary_size: int = 20
    amplitudes: tuple = (1e-1, 1e-2, 1e-3, 1e-4)
    reference_factor: int = 4
    out: str = "out"
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            jsonschema.validate(d, SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {path}: {exc.message}") from None
        d = copy.deepcopy(d)
        if "amplitudes" in d:
            d["amplitudes"] = tuple(d["amplitudes"])
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["amplitudes"] = list(self.amplitudes)
        return d

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        for k, v in changes.items():
            if isinstance(v, dict) and isinstance(d.get(k), dict):
                d[k] = {**d[k], **v}
            else:
                d[k] = v
        return RunConfig.from_dict(d)

    @property
    def hash(self) -> str:
        """sha256 of the canonical JSON text of the configuration.

        The output directory is left out: it does not affect any result.
        """
        d = self.to_dict()
        d.pop("out")
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    # -- builders -------------------------------------------------------------
    def build_grid(self, refine: int = 1) -> Grid:
        g = self.grid
        shape = tuple(int(n) * refine for n in g["shape"])
        return Grid(shape, g.get("lengths"), g.get("theta_bc"), g.get("magnetic_bc"))

    def build_eos(self):
        return eos_from_spec(self.eos)

    def build_transport(self) -> TransportModel:
        return TransportModel.from_dict(self.transport)

    def build_solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    def build_cutoff(self) -> CutoffSpec:
        return CutoffSpec(self.cutoff_delta)

    def build_bounds(self) -> Bounds:
        return Bounds(**self.bounds)

    @property
    def equilibrium_state(self):
        e = {"rho": 1.0, "theta": 1.0, "B": [0.3, 0.0, 1.0], **self.equilibrium}
        return float(e["rho"]), float(e["theta"]), tuple(float(v) for v in e["B"])

    @property
    def perturbation_kind(self):
        return self.perturbation.get("kind", "none")

    @property
    def amplitude(self):
        return float(self.perturbation.get("amplitude", 0.0))

    def validate(self):
        """Construct every referenced object; raise ConfigError on the first failure."""
        grid = self.build_grid()
        if len(self.grid.get("lengths") or grid.lengths) != grid.dim:
            raise ConfigError("grid lengths do not match the grid dimension")
        eos = self.build_eos()
        tm = self.build_transport()
        sc = self.build_solver_config()
        if sc.div_control == "ct" and grid.dim != 2:
            raise ConfigError("constrained transport needs a 2D grid")
        b = self.build_bounds()
        if not (b.rho_min < b.rho_max and b.theta_min < b.theta_max):
            raise ConfigError("bounds must satisfy min < max")
        self.build_cutoff()
        if self.perturbation_kind != "none" and self.amplitude == 0.0:
            logger.debug("perturbation %s with zero amplitude", self.perturbation_kind)
        if self.preset is not None:
            get_preset(self.preset).check(eos, tm)
        return self


# ---------------------------------------------------------------------------
# scenario presets
# ---------------------------------------------------------------------------


def _where(mask, grid_shape):
    idx = np.argwhere(mask)[0]
    return tuple(int(i) for i in idx)


@dataclass(frozen=True)
class ScenarioPreset:
    """Hypothesis set of one uniqueness theorem."""

    name: str
    hypotheses: tuple
    defaults: dict

    def check(self, eos, tm: TransportModel):
        """Structural hypotheses on the closures (raise HypothesisViolation)."""
        if self.name == "constant-coefficients":
            if not tm.is_constant:
                raise HypothesisViolation("ass_cc", "transport coefficients must be constant (mu1=eta1=kappa1=zeta1=0)")
            C = pressure_growth_constant(eos)
            if not np.isfinite(C):
                raise HypothesisViolation("ass_cc_p", "pressure growth constant is not finite")
        elif self.name in ("perfect-gas", "unconditional"):
            tag = "boyle_coeff" if self.name == "perfect-gas" else "ur_coeff"
            if not (tm.mu0 > 0 and tm.mu1 > 0):
                raise HypothesisViolation(tag, "mu(theta) = mu0 + mu1 theta needs mu0 > 0 and mu1 > 0")
            if tm.kappa1 != 0 or not tm.kappa0 > 0:
                raise HypothesisViolation(tag, "kappa must be a positive constant")
            if not tm.zeta0 > 0:
                raise HypothesisViolation(tag, "zeta0 must be positive")
            if tm.table is not None:
                raise HypothesisViolation(tag, "tabulated coefficients are not of the required affine form")
            if self.name == "perfect-gas" and not (isinstance(eos, IdealPolytropic) and eos.c_v > 1):
                raise HypothesisViolation("ass_pg", "needs the ideal gas law with c_v > 1")
            if self.name == "unconditional" and not isinstance(eos, MonatomicRadiation):
                raise HypothesisViolation("ur_coeff", "needs the monoatomic gas with radiation pressure")

    def monitor(self, eos, bounds: Bounds):
        """Callable ``monitor(state)`` enforcing the state hypotheses, or None."""
        if self.name == "unconditional":
            return None

        def fail(tag, what, mask, st, value):
            cell = _where(mask, st.grid.shape)
            raise HypothesisViolation(tag, f"{what} at cell {cell}, t={st.t:.6g} (value {value[cell]:.6g})")

        def check(st):
            theta = st.temperature(eos)
            if self.name == "bounded-dmv":
                rho = st.rho
                for arr, lo, hi, nm in ((rho, bounds.rho_min, bounds.rho_max, "rho"), (theta, bounds.theta_min, bounds.theta_max, "theta")):
                    if np.any(arr <= lo):
                        fail("ass_bmvs", f"{nm} fell below {lo}", arr <= lo, st, arr)
                    if np.any(arr >= hi):
                        fail("ass_bmvs", f"{nm} exceeded {hi}", arr >= hi, st, arr)
            elif self.name == "constant-coefficients":
                if np.any(theta > bounds.theta_max):
                    fail("ass_cc", f"theta exceeded {bounds.theta_max}", theta > bounds.theta_max, st, theta)
                speed = np.sqrt(np.sum(st.u**2, axis=0))
                if np.any(speed > bounds.u_max):
                    fail("ass_cc", f"|u| exceeded {bounds.u_max}", speed > bounds.u_max, st, speed)
            elif self.name == "perfect-gas":
                s = np.abs(eos.entropy(st.rho, theta))
                if np.any(s > bounds.s_max):
                    fail("ass_pg_s", f"|s| exceeded {bounds.s_max}", s > bounds.s_max, st, s)

        return check


_BOYLE = {"mu0": 0.05, "mu1": 0.05, "eta0": 0.0, "eta1": 0.0, "kappa0": 0.05, "zeta0": 0.05, "zeta1": 0.02}

_PRESETS = {
    "bounded-dmv": ScenarioPreset(
        "bounded-dmv",
        ("ass_bmvs",),
        {"eos": {"name": "monatomic_radiation"}, "transport": {"mu0": 0.05, "kappa0": 0.05, "zeta0": 0.05}},
    ),
    "constant-coefficients": ScenarioPreset(
        "constant-coefficients",
        ("ass_cc_p", "ass_cc"),
        {"eos": {"name": "monatomic_radiation"}, "transport": {"mu0": 0.05, "kappa0": 0.05, "zeta0": 0.05}},
    ),
    "perfect-gas": ScenarioPreset(
        "perfect-gas",
        ("boyle_coeff", "ass_pg", "ass_pg_s"),
        {"eos": {"name": "ideal", "c_v": 1.5}, "transport": dict(_BOYLE)},
    ),
    "unconditional": ScenarioPreset(
        "unconditional",
        ("ur_coeff",),
        {"eos": {"name": "monatomic_radiation"}, "transport": dict(_BOYLE)},
    ),
}


def get_preset(name) -> ScenarioPreset:
    try:
        return _PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario preset {name!r}; choose from {PRESETS}") from None


def preset_config(name, **overrides) -> RunConfig:
    """RunConfig carrying the preset's closures (overrides merged on top)."""
    p = get_preset(name)
    d = {"preset": name, **copy.deepcopy(p.defaults)}
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(d.get(k), dict):
            d[k] = {**d[k], **v}
        else:
            d[k] = v
    return RunConfig.from_dict(d)


__all__ = ["Bounds", "PERTURBATIONS", "PRESETS", "RunConfig", "SCHEMA", "ScenarioPreset", "get_preset", "preset_config"]
