"""Closed-form magnetic spectra of flat tori.

For the torus R^d / L and the parallel potential A = 2 pi sum_i P_i dx_i, the
eigenfunctions are the plane waves exp(2 pi i <p*, x>), p* in the dual
lattice, with eigenvalues 4 pi^2 |P - p*|^2.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import config
from .errors import DataError, DomainError, ShapeError
from .lattice import (
    Lattice,
    ModuliPoint,
    closest_vectors,
    dual_lattice,
    lattice_points_in_ball,
)

FOUR_PI_SQ = 4.0 * math.pi**2
MERGE_ATOL = 1e-14


@dataclass(frozen=True, eq=False)
class PotentialForm:
    """Parallel 1-form A = 2 pi sum_i position[i] dx_i."""

    position: np.ndarray

    def __post_init__(self):
        pos = np.array(self.position, dtype=float).reshape(-1)
        if not np.all(np.isfinite(pos)):
            raise DomainError("potential position must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)

    @property
    def dim(self) -> int:
        return self.position.shape[0]

    def scaled(self, r: float) -> "PotentialForm":
        return PotentialForm(r * self.position)

    def norm_sq(self) -> float:
        """Pointwise Euclidean |A|^2 = 4 pi^2 |P|^2."""
        return FOUR_PI_SQ * float(self.position @ self.position)

    @classmethod
    def from_fluxes(cls, m: ModuliPoint, f: "FluxVector") -> "PotentialForm":
        # unique solution of Phi1 = alpha, Phi2 = p alpha + q beta
        phi1, phi2 = f.fluxes
        return cls([phi1, (phi2 - m.p * phi1) / m.q])

    def fluxes(self, m: ModuliPoint) -> "FluxVector":
        a, b = self.position
        return FluxVector([a, m.p * a + m.q * b])


@dataclass(frozen=True, eq=False)
class FluxVector:
    """Fluxes (Phi1, Phi2) of A around the loops w1 = (1, 0), w2 = (p, q)."""

    fluxes: np.ndarray

    def __post_init__(self):
        f = np.array(self.fluxes, dtype=float).reshape(-1)
        if f.shape != (2,) or not np.all(np.isfinite(f)):
            raise DomainError("fluxes must be two finite numbers")
        object.__setattr__(self, "fluxes", f)


@dataclass(frozen=True, eq=False)
class SpectrumSlice:
    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    dual_points: list[np.ndarray] = field(default_factory=list)
    cutoff: float = math.inf

    def expanded(self) -> np.ndarray:
        """Eigenvalues repeated according to multiplicity."""
        return np.repeat(self.eigenvalues, self.multiplicities)

    def to_dict(self) -> dict:
        return {
            "cutoff": self.cutoff,
            "eigenvalues": [
                {"value": float(v), "multiplicity": int(k), "dual_points": pts.tolist()}
                for v, k, pts in zip(self.eigenvalues, self.multiplicities, self.dual_points)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpectrumSlice":
        rows = data["eigenvalues"]
        return cls(
            eigenvalues=np.array([r["value"] for r in rows], dtype=float),
            multiplicities=np.array([r["multiplicity"] for r in rows], dtype=int),
            dual_points=[np.array(r.get("dual_points", []), dtype=float) for r in rows],
            cutoff=float(data.get("cutoff", math.inf)),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eigenvalue", "multiplicity"])
        for v, k in zip(self.eigenvalues, self.multiplicities):
            w.writerow([repr(float(v)), int(k)])
        return buf.getvalue()


@dataclass
class GroundStateTable:
    """Sampled ground state energies mu[(j, k, n)] with 1 <= j <= k <= size."""

    size: int
    entries: dict[tuple[int, int, int], float]
    mode: str = "flat-torus"
    flagged: set = field(default_factory=set)

    def __post_init__(self):
        if self.mode not in ("surface", "flat-torus"):
            raise DataError(f"unknown table mode {self.mode!r}")

    def n_values(self, j: int, k: int) -> list[int]:
        return sorted(n for (a, b, n) in self.entries if (a, b) == (j, k))

    def pairs(self) -> list[tuple[int, int]]:
        return sorted({(j, k) for (j, k, _) in self.entries})

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "mode": self.mode,
            "entries": [
                {"j": j, "k": k, "n": n, "mu": mu}
                for (j, k, n), mu in sorted(self.entries.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroundStateTable":
        try:
            rows = data["entries"]
        except (KeyError, TypeError):
            raise DataError("ground state table JSON needs an 'entries' list") from None
        entries = {}
        for i, row in enumerate(rows):
            try:
                key = (int(row["j"]), int(row["k"]), int(row["n"]))
                mu = float(row["mu"])
            except (KeyError, TypeError, ValueError):
                raise DataError(f"entry {i} needs integer j, k, n and a numeric mu") from None
            entries[key] = mu
        size = int(data.get("size", max((max(j, k) for j, k, _ in entries), default=0)))
        t = cls(size=size, entries=entries, mode=data.get("mode", "flat-torus"))
        t.validate()
        return t

    def validate(self) -> None:
        if not self.entries:
            raise DataError("ground state table is empty")
        for (j, k, n), mu in self.entries.items():
            if not (1 <= j <= k <= self.size) or n < 1:
                raise DataError(f"entry (j={j}, k={k}, n={n}) has an invalid index")
            if not math.isfinite(mu):
                raise DataError(f"entry (j={j}, k={k}, n={n}) is not finite")


def _check_dims(L: Lattice, A: PotentialForm) -> None:
    if A.dim != L.dim:
        raise ShapeError(f"potential has dimension {A.dim}, lattice has dimension {L.dim}")


def magnetic_spectrum(L: Lattice, A: PotentialForm, cutoff: float) -> SpectrumSlice:
    """All eigenvalues <= cutoff, grouped with multiplicities."""
    _check_dims(L, A)
    if not cutoff > 0:
        raise DomainError(f"cutoff must be positive, got {cutoff}")
    radius = math.sqrt(cutoff / FOUR_PI_SQ) + config.tol("cvp")
    pts = lattice_points_in_ball(dual_lattice(L), A.position, radius)
    vals = FOUR_PI_SQ * np.sum((pts - A.position) ** 2, axis=1)
    order = np.argsort(vals, kind="stable")
    return _group(vals[order], pts[order], cutoff)


def _group(vals: np.ndarray, pts: np.ndarray, cutoff: float) -> SpectrumSlice:
    rtol = config.tol("merge")
    eig, mult, groups = [], [], []
    start = 0
    for i in range(1, len(vals) + 1):
        if i == len(vals) or vals[i] - vals[start] > rtol * vals[i] + MERGE_ATOL:
            eig.append(float(np.mean(vals[start:i])))
            mult.append(i - start)
            groups.append(pts[start:i])
            start = i
    return SpectrumSlice(np.array(eig), np.array(mult, dtype=int), groups, cutoff)


def first_eigenvalues(L: Lattice, A: PotentialForm, count: int) -> np.ndarray:
    """The ``count`` smallest eigenvalues, repeated with multiplicity."""
    _check_dims(L, A)
    if count < 1:
        raise DomainError("count must be positive")
    dual = dual_lattice(L)
    d = L.dim
    # ball volume ~ count dual cells, then grow until enough points are in
    unit_ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    radius = (count * dual.covolume() / unit_ball) ** (1 / d)
    radius = max(radius, closest_vectors(dual, A.position).distance) * 1.2 + 1e-12
    while True:
        pts = lattice_points_in_ball(dual, A.position, radius)
        if len(pts) >= count:
            vals = np.sort(FOUR_PI_SQ * np.sum((pts - A.position) ** 2, axis=1))
            return vals[:count]
        radius *= 1.5


def lambda1(L: Lattice, A: PotentialForm) -> float:
    """Ground state energy 4 pi^2 dist(P_A, L*)^2."""
    _check_dims(L, A)
    return FOUR_PI_SQ * closest_vectors(dual_lattice(L), A.position).distance ** 2


def lambda1_normalized_from_fluxes(m: ModuliPoint, f: FluxVector) -> float:
    """|h| lambda_1 for the (p, q)-torus in terms of the fluxes of A.

    Minimizes q (Phi1 - k1)^2 + (p (Phi1 - k1) - (Phi2 - k2))^2 / q over
    integers (k1, k2), the dual points being p* = (k1, (k2 - p k1) / q).
    """
    p, q = m.p, m.q
    if q <= 0:
        raise DomainError(f"q must be positive, got {q}")
    phi1, phi2 = f.fluxes
    form = np.array([[q + p * p / q, -p / q], [-p / q, 1.0 / q]])
    ev = np.linalg.eigvalsh(form)
    # any minimizer satisfies lmin |u|^2 <= Q(u) <= Q(rounded) <= lmax / 2
    reach = math.ceil(math.sqrt(ev[1] / (2 * ev[0]))) + 1
    k1 = np.arange(round(phi1) - reach, round(phi1) + reach + 1)
    k2 = np.arange(round(phi2) - reach, round(phi2) + reach + 1)
    u1 = phi1 - k1[:, None]
    u2 = phi2 - k2[None, :]
    vals = q * u1**2 + (p * u1 - u2) ** 2 / q
    return FOUR_PI_SQ * float(vals.min())


def integral_dual_forms(L: Lattice) -> list[PotentialForm]:
    """Positions of the 1-forms with periods delta_jk on the basis loops."""
    dual = dual_lattice(L)
    return [PotentialForm(v / (2 * math.pi)) for v in dual.vectors]


def ground_state_spectrum(L: Lattice, n_values, mode: str | None = None) -> GroundStateTable:
    """mu[(j, k, n)] = lambda_1(L, (alpha_j + alpha_k) / n) for j <= k.

    Entries whose potential is not closer to the origin than to any other
    dual point (n below the gauge threshold) are listed in ``flagged``.
    """
    ns = sorted({int(n) for n in n_values})
    if not ns:
        raise DomainError("n_values must not be empty")
    if ns[0] < 1:
        raise DomainError("n values must be positive integers")
    dual = dual_lattice(L)
    d = L.dim
    entries, flagged = {}, set()
    for j in range(d):
        for k in range(j, d):
            base = (dual.vectors[j] + dual.vectors[k]) / (2 * math.pi)
            for n in ns:
                pos = base / n
                res = closest_vectors(dual, pos)
                entries[(j + 1, k + 1, n)] = FOUR_PI_SQ * res.distance**2
                origin_dist = float(np.linalg.norm(pos))
                if origin_dist > res.distance + config.tol("cvp") or len(res.nearest) > 1:
                    flagged.add((j + 1, k + 1, n))
    if mode is None:
        mode = "surface" if d == 2 else "flat-torus"
    return GroundStateTable(size=d, entries=entries, mode=mode, flagged=flagged)


def evaluate_eigenfunction(p_star, x) -> complex:
    """exp(2 pi i <p*, x>)."""
    p = np.asarray(p_star, dtype=float).reshape(-1)
    y = np.asarray(x, dtype=float).reshape(-1)
    if p.shape != y.shape:
        raise ShapeError("p_star and x must have the same length")
    return complex(np.exp(2j * math.pi * float(p @ y)))
