"""Conformal invariants of genus-one surfaces.

For the flat (p, q)-torus the supremum over parallel potentials of the
normalized ground state energy is attained at the circumcenter of the acute
dual triangle; the infimum of that supremum over moduli space sits at the
equilateral torus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .lattice import Lattice, ModuliPoint, circumcenter, inradius_sq, normalize_moduli
from .spectrum import PotentialForm

Q_MAX = 3.0
REFINE_TOL = 1e-10
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class InvariantReport:
    lambda1_class: float
    optimal_position: np.ndarray
    moduli: ModuliPoint

    def to_dict(self) -> dict:
        return {
            "lambda1_class": self.lambda1_class,
            "optimal_position": [float(v) for v in self.optimal_position],
            "moduli": self.moduli.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InvariantReport":
        return cls(
            float(data["lambda1_class"]),
            np.array(data["optimal_position"], dtype=float),
            ModuliPoint.from_dict(data["moduli"]),
        )


def _class_value(p, q):
    return math.pi**2 / q**3 * ((p * p + q * q - p) ** 2 + q * q)


def lambda1_class(m: ModuliPoint) -> float:
    """Lambda_1 of the conformal class of the (p, q)-torus."""
    if m.q <= 0:
        raise DomainError(f"q must be positive, got {m.q}")
    return _class_value(m.p, m.q)


def lambda1_class_of_lattice(L: Lattice) -> float:
    return lambda1_class(normalize_moduli(L).moduli)


def optimal_potential(m: ModuliPoint) -> PotentialForm:
    """Potential maximizing lambda_1 on the (p, q)-torus."""
    return PotentialForm(circumcenter(m))


def invariant_report(m: ModuliPoint) -> InvariantReport:
    return InvariantReport(lambda1_class(m), circumcenter(m), m)


def _q_floor(p):
    return np.maximum(p, np.sqrt(np.maximum(1.0 - p * p, 0.0)))


def _golden(f, lo, hi, tol):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    # the minimum of a convex-in-q slice is often on the boundary
    cands = [(f(a), a), (f(b), b), (f(0.5 * (a + b)), 0.5 * (a + b))]
    return min(cands)[1]


def global_minimum_search(grid_step: float, *, p_range=(0.0, 0.5), q_max: float = Q_MAX):
    """Minimize Lambda_1 over the fundamental domain.

    A grid of spacing ``grid_step`` is scanned, then the best grid point is
    polished by golden-section descent along each coordinate. ``p_range``
    restricts the search (``(0, 0)`` gives rectangular tori).

    Returns ``(ModuliPoint, value)``.
    """
    if not 0 < grid_step <= 1e-2:
        raise DomainError(f"grid_step must lie in (0, 1e-2], got {grid_step}")
    p_lo, p_hi = p_range
    if not 0.0 <= p_lo <= p_hi <= 0.5:
        raise DomainError(f"p_range must lie within [0, 1/2], got {p_range}")
    n_p = max(int(round((p_hi - p_lo) / grid_step)), 0) + 1
    ps = np.linspace(p_lo, p_hi, n_p)
    n_q = int(math.ceil(q_max / grid_step)) + 1
    t = np.linspace(0.0, 1.0, n_q)
    best = (math.inf, None, None)
    edge = math.inf
    for row in np.array_split(np.arange(n_p), max(1, n_p // 64)):
        p = ps[row][:, None]
        qlo = _q_floor(p)
        q = qlo + (q_max - qlo) * t[None, :]
        vals = _class_value(p, q)
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        if vals[i, j] < best[0]:
            best = (float(vals[i, j]), float(p[i, 0]), float(q[i, j]))
        edge = min(edge, float(vals[:, -1].min()))
    value, p, q = best
    if edge <= value:
        raise DomainError(f"minimum reaches the q = {q_max} edge of the search box")

    for _ in range(50):
        old = value
        q = _golden(lambda s: _class_value(p, s), float(_q_floor(p)), q_max, REFINE_TOL)
        lo_p = p_lo
        if q < 1.0:
            lo_p = max(lo_p, math.sqrt(max(1.0 - q * q, 0.0)))
        p = _golden(lambda s: _class_value(s, q), lo_p, p_hi, REFINE_TOL) if lo_p < p_hi else p_hi
        value = _class_value(p, q)
        if old - value <= REFINE_TOL:
            break
    if value > best[0]:
        value, p, q = best
    return ModuliPoint(p, q), value
