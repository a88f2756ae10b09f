"""Numerical tolerances shared by every module.

Values can be overridden for a whole process through the ``QFB_TOL_OVERRIDE``
environment variable, which holds a JSON object mapping tolerance names to
positive floats, e.g. ``QFB_TOL_OVERRIDE='{"ineq": 1e-6}'``.
"""

from __future__ import annotations

import json
import os

DEFAULTS = {
    "herm": 1e-10,   # Hermiticity
    "psd": 1e-9,     # eigenvalue floor
    "tr": 1e-9,      # unit trace / unit norm / probability sums
    "eig": 1e-9,     # eigendecomposition reconstruction
    "eq": 1e-8,      # generic equality of derived quantities
    "tp": 1e-9,      # trace preservation of Kraus sets
    "clip": 1e-12,   # eigenvalues below this count as zero in entropies
    "log": 1e-12,    # eigenvalue floor inside gradient logarithms
    "ineq": 1e-7,    # inequality slack in the verification harness
    "abort": 1e-5,   # margin below -abort is a genuine counterexample
    "p_min": 1e-12,  # branch pruning threshold
}

ENV_VAR = "QFB_TOL_OVERRIDE"


def _load(raw: str | None = None) -> dict[str, float]:
    tol = dict(DEFAULTS)
    raw = os.environ.get(ENV_VAR) if raw is None else raw
    if raw:
        override = json.loads(raw)
        if not isinstance(override, dict):
            raise ValueError(f"{ENV_VAR} must hold a JSON object")
        for key, value in override.items():
            if key not in DEFAULTS:
                raise ValueError(f"unknown tolerance {key!r} in {ENV_VAR}")
            value = float(value)
            if not value > 0:
                raise ValueError(f"tolerance {key!r} must be positive")
            tol[key] = value
    return tol


TOL = _load()


def reload(override: str | None = None) -> dict[str, float]:
    """Rebuild the table in place from ``override`` (a JSON object) or the environment."""
    fresh = _load(override)
    TOL.clear()
    TOL.update(fresh)
    return TOL
