"""Full-rank lattices, dual lattices, exact closest-vector queries and the
geometry of two-dimensional lattices up to homothety.

Bases are stored row-per-vector (``vectors[i]`` is the i-th basis vector);
:attr:`Lattice.matrix` gives the column matrix ``W`` so that lattice points
are ``W @ c`` for integer ``c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import config
from .errors import DomainError, RankError, ShapeError, UnsupportedError

EPS_CVP = config.DEFAULTS["cvp"]
MAX_CVP_DIM = 8
# slack on the fundamental-domain inequalities when validating a ModuliPoint
MODULI_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class Lattice:
    """A full-rank lattice in d-dimensional Euclidean space."""

    vectors: np.ndarray

    def __post_init__(self):
        vec = np.array(self.vectors, dtype=float)
        if vec.ndim != 2 or vec.shape[0] != vec.shape[1] or vec.shape[0] == 0:
            raise ShapeError(f"basis must be d vectors of length d, got shape {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise DomainError("basis entries must be finite")
        d = vec.shape[0]
        scale = max(float(np.max(np.linalg.norm(vec, axis=1))), 1e-300)
        det = abs(float(np.linalg.det(vec)))
        if det <= 1e-12 * scale**d:
            raise RankError(f"basis vectors are linearly dependent (|det| = {det:.3e})")
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """Column matrix W of the basis."""
        return self.vectors.T

    def covolume(self) -> float:
        return abs(float(np.linalg.det(self.vectors)))

    def point(self, coeffs) -> np.ndarray:
        return self.matrix @ np.asarray(coeffs, dtype=float)

    def scaled(self, t: float) -> "Lattice":
        return Lattice(t * self.vectors)

    def transformed(self, rot) -> "Lattice":
        """Image of the lattice under the linear map ``rot``."""
        return Lattice((np.asarray(rot, dtype=float) @ self.matrix).T)

    @cached_property
    def _reduced(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        # reduced column basis B and its QR factors, reused by every query
        if self.dim == 2:
            B = _gauss_reduce(self.matrix)
        else:
            B = lll_reduce(self.matrix)
        Q, R = np.linalg.qr(B)
        signs = np.sign(np.diag(R))
        signs[signs == 0] = 1.0
        return B, Q * signs, (R.T * signs).T

    def to_dict(self) -> dict:
        return {"dim": self.dim, "basis": self.vectors.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Lattice":
        try:
            basis = data["basis"]
        except (KeyError, TypeError):
            raise ShapeError("lattice JSON needs a 'basis' field") from None
        lat = cls(np.array(basis, dtype=float))
        if "dim" in data and int(data["dim"]) != lat.dim:
            raise ShapeError(f"'dim' is {data['dim']} but 'basis' has {lat.dim} vectors")
        return lat

    def __repr__(self):
        return f"Lattice({self.vectors.tolist()!r})"


@dataclass(frozen=True)
class ModuliPoint:
    """Parameters (p, q) of the lattice with basis (1, 0), (p, q) in the
    fundamental domain 0 <= p <= 1/2, q >= p, p^2 + q^2 >= 1."""

    p: float
    q: float

    def __post_init__(self):
        p, q = float(self.p), float(self.q)
        if not (math.isfinite(p) and math.isfinite(q)):
            raise DomainError("moduli parameters must be finite")
        if q <= 0:
            raise DomainError(f"q must be positive, got {q}")
        s = MODULI_SLACK
        if p < -s or p > 0.5 + s or q < p - s or p * p + q * q < 1.0 - s:
            raise DomainError(f"(p, q) = ({p}, {q}) is outside the fundamental domain")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    def lattice(self) -> Lattice:
        return Lattice([[1.0, 0.0], [self.p, self.q]])

    def to_dict(self) -> dict:
        return {"p": self.p, "q": self.q}

    @classmethod
    def from_dict(cls, data: dict) -> "ModuliPoint":
        return cls(data["p"], data["q"])


@dataclass(frozen=True)
class CvpResult:
    nearest: list[np.ndarray]
    distance: float
    coefficients: list[tuple[int, ...]] = field(default_factory=list)


class NormalizedLattice(NamedTuple):
    moduli: ModuliPoint
    scale: float


def dual_lattice(L: Lattice) -> Lattice:
    """Dual lattice, with the dual basis: ``<w_i*, w_j> = delta_ij``."""
    W = L.matrix
    Wstar = np.linalg.inv(W).T
    return Lattice(Wstar.T)


def acute_dual_basis(m: ModuliPoint) -> tuple[np.ndarray, np.ndarray]:
    """The basis (v1*, v2*) of the dual of the (p, q)-lattice spanning an
    acute triangle together with the origin."""
    p, q = _pq(m)
    return np.array([1.0, (1.0 - p) / q]), np.array([0.0, 1.0 / q])


def circumcenter(m: ModuliPoint) -> np.ndarray:
    """Circumcenter of the triangle (0, v1*, v2*); the point of the plane
    farthest from the dual lattice."""
    p, q = _pq(m)
    return np.array([(p * p + q * q - p) / (2 * q * q), 1.0 / (2 * q)])


def inradius_sq(m: ModuliPoint) -> float:
    """Squared inradius (covering radius) of the dual of the (p, q)-lattice."""
    p, q = _pq(m)
    return ((p * p + q * q - p) ** 2 + q * q) / (4 * q**4)


def _pq(m: ModuliPoint) -> tuple[float, float]:
    if m.q <= 0:
        raise DomainError(f"q must be positive, got {m.q}")
    return m.p, m.q


def _gauss_reduce(W: np.ndarray) -> np.ndarray:
    """Lagrange-Gauss reduction of a 2x2 column basis."""
    b1 = W[:, 0].astype(float).copy()
    b2 = W[:, 1].astype(float).copy()
    if b1 @ b1 > b2 @ b2:
        b1, b2 = b2, b1
    for _ in range(200):
        mu = round(float(b1 @ b2) / float(b1 @ b1))
        if mu == 0:
            break
        b2 = b2 - mu * b1
        if b2 @ b2 < b1 @ b1:
            b1, b2 = b2, b1
        else:
            break
    return np.column_stack([b1, b2])


def lll_reduce(W: np.ndarray, delta: float = 0.99) -> np.ndarray:
    """Floating-point LLL reduction of a column basis (small dimensions)."""
    B = np.array(W, dtype=float, copy=True)
    d = B.shape[1]

    def gso(B):
        Bs = np.zeros_like(B)
        mu = np.zeros((d, d))
        for i in range(d):
            v = B[:, i].copy()
            for j in range(i):
                mu[i, j] = (B[:, i] @ Bs[:, j]) / (Bs[:, j] @ Bs[:, j])
                v -= mu[i, j] * Bs[:, j]
            Bs[:, i] = v
        return Bs, mu

    Bs, mu = gso(B)
    k = 1
    guard = 0
    while k < d:
        guard += 1
        if guard > 10000:
            break
        for j in range(k - 1, -1, -1):
            r = round(mu[k, j])
            if r:
                B[:, k] -= r * B[:, j]
                Bs, mu = gso(B)
        lhs = Bs[:, k] @ Bs[:, k]
        rhs = (delta - mu[k, k - 1] ** 2) * (Bs[:, k - 1] @ Bs[:, k - 1])
        if lhs >= rhs:
            k += 1
        else:
            B[:, [k - 1, k]] = B[:, [k, k - 1]]
            Bs, mu = gso(B)
            k = max(k - 1, 1)
    return B


def _enumerate(R: list[list[float]], y: list[float], radius_sq: float) -> list[tuple[int, ...]]:
    """All integer c with |R c - y|^2 <= radius_sq, for upper-triangular R."""
    d = len(y)
    out: list[tuple[int, ...]] = []
    c = [0] * d

    def rec(i: int, partial: float) -> None:
        s = y[i]
        row = R[i]
        for j in range(i + 1, d):
            s -= row[j] * c[j]
        rii = row[i]
        rem = radius_sq - partial
        if rem < 0:
            return
        half = math.sqrt(rem) / abs(rii)
        center = s / rii
        for v in range(math.ceil(center - half), math.floor(center + half) + 1):
            t = s - rii * v
            nxt = partial + t * t
            if nxt <= radius_sq:
                c[i] = v
                if i == 0:
                    out.append(tuple(c))
                else:
                    rec(i - 1, nxt)
        c[i] = 0

    rec(d - 1, 0.0)
    return out


def lattice_points_in_ball(L: Lattice, center, radius: float) -> np.ndarray:
    """Rows are all lattice points at distance <= radius from ``center``."""
    x = _check_point(L, center)
    if L.dim > MAX_CVP_DIM:
        raise UnsupportedError(f"enumeration supports d <= {MAX_CVP_DIM}, got {L.dim}")
    B, Q, R = L._reduced
    y = Q.T @ x
    coeffs = _enumerate(R.tolist(), y.tolist(), radius * radius)
    if not coeffs:
        return np.zeros((0, L.dim))
    pts = np.array(coeffs, dtype=float) @ B.T
    keep = np.linalg.norm(pts - x, axis=1) <= radius
    return pts[keep]


def closest_vectors(L: Lattice, x, want_all_ties: bool = True, eps: float | None = None) -> CvpResult:
    """Exact closest lattice vectors to ``x``.

    The basis is reduced (Lagrange-Gauss in 2-D, LLL otherwise), a Babai
    nearest-plane candidate fixes the search radius, and every lattice point
    in that ball is enumerated. Points within ``eps`` of the minimum distance
    are reported as ties.
    """
    eps = config.tol("cvp") if eps is None else eps
    x = _check_point(L, x)
    if L.dim > MAX_CVP_DIM:
        raise UnsupportedError(f"closest_vectors supports d <= {MAX_CVP_DIM}, got {L.dim}")
    B, Q, R = L._reduced
    y = Q.T @ x
    d = L.dim
    c = np.zeros(d)
    for i in range(d - 1, -1, -1):
        c[i] = round((y[i] - R[i, i + 1:] @ c[i + 1:]) / R[i, i])
    babai = float(np.linalg.norm(B @ c - x))
    radius = babai + 2 * eps
    coeffs = _enumerate(R.tolist(), y.tolist(), radius * radius)
    if not coeffs:  # rounding pushed the Babai point itself off the ball
        coeffs = [tuple(int(v) for v in c)]
    pts = np.array(coeffs, dtype=float) @ B.T
    dist = np.linalg.norm(pts - x, axis=1)
    dmin = float(dist.min())
    order = np.argsort(dist, kind="stable")
    chosen = [i for i in order if dist[i] <= dmin + eps]
    if not want_all_ties:
        chosen = chosen[:1]
    Winv = np.linalg.inv(L.matrix)
    nearest = [pts[i] for i in chosen]
    orig = [tuple(int(v) for v in np.rint(Winv @ p)) for p in nearest]
    return CvpResult(nearest=nearest, distance=dmin, coefficients=orig)


def distance_to_lattice(L: Lattice, x) -> float:
    return closest_vectors(L, x, want_all_ties=False).distance


def normalize_moduli(L: Lattice) -> NormalizedLattice:
    """Moduli point (p, q) and homothety factor of a 2-D lattice.

    ``L`` is congruent, after an SL(2, Z) change of basis, to ``scale`` times
    the lattice with basis (1, 0), (p, q).
    """
    if L.dim != 2:
        raise ShapeError(f"normalize_moduli needs a 2-D lattice, got d = {L.dim}")
    B = _gauss_reduce(L.matrix)
    b1, b2 = B[:, 0], B[:, 1]
    n1 = float(b1 @ b1)
    scale = math.sqrt(n1)
    p = float(b1 @ b2) / n1
    q = abs(float(b1[0] * b2[1] - b1[1] * b2[0])) / n1
    p = abs(p)
    if p > 0.5:  # rounding on the |p| = 1/2 boundary
        p = 1.0 - p if p < 0.5 + 1e-9 else p
    if p * p + q * q < 1.0:
        # |b2| ties |b1| up to rounding; the fundamental domain boundary
        p = min(p, 0.5)
        q = max(q, math.sqrt(max(1.0 - p * p, 0.0)))
    return NormalizedLattice(ModuliPoint(p, q), scale)


def moduli_of(p: float, q: float) -> NormalizedLattice:
    """Normalize the lattice with basis (1, 0), (p, q) for arbitrary q > 0."""
    if not q > 0:
        raise DomainError(f"q must be positive, got {q}")
    return normalize_moduli(Lattice([[1.0, 0.0], [p, q]]))


def named_lattice(name: str) -> Lattice:
    """Shorthands: ``Z2``, ``Zd`` (e.g. ``Z3``), ``hex``, ``rect:a,b``."""
    key = name.strip()
    if key.lower() == "hex":
        return Lattice([[1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    if key.lower().startswith("rect:"):
        parts = [float(v) for v in key[5:].split(",")]
        if len(parts) != 2:
            raise DomainError(f"rect needs two side lengths, got {key!r}")
        return Lattice(np.diag(parts))
    if key[:1] in "Zz" and key[1:].isdigit():
        return Lattice(np.eye(int(key[1:])))
    raise DomainError(f"unknown lattice shorthand {name!r}")


def _check_point(L: Lattice, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.shape[0] != L.dim:
        raise ShapeError(f"point has {arr.shape[0]} coordinates, lattice has dimension {L.dim}")
    return arr
