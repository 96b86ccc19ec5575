"""Structured-grid MHD solver and relative-energy / measure-valued diagnostics."""
