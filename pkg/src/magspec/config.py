"""Default numerical tolerances.

The library reads these at call time; the CLI may override them from the
``MAGSPEC_TOL`` environment variable (``cvp=1e-10,solver=1e-8`` or a bare
number, which sets ``cvp``).
"""

from __future__ import annotations

DEFAULTS = {
    "cvp": 1e-9,       # absolute, on distances
    "merge": 1e-9,     # relative, eigenvalue grouping
    "solver": 1e-9,    # eigen-residual
}

TOLERANCES = dict(DEFAULTS)


def tol(name: str) -> float:
    return TOLERANCES[name]


def parse_overrides(text: str) -> dict[str, float]:
    text = text.strip()
    if not text:
        return {}
    out = {}
    for part in text.split(","):
        if "=" in part:
            key, val = (s.strip() for s in part.split("=", 1))
        else:
            key, val = "cvp", part.strip()
        if key not in DEFAULTS:
            raise ValueError(f"unknown tolerance {key!r}; known: {', '.join(DEFAULTS)}")
        value = float(val)
        if not value > 0:
            raise ValueError(f"tolerance {key} must be positive")
        out[key] = value
    return out
