"""Gram matrices of the dual cohomology basis, the Hodge star matrix, the
Riemann relations and normalized period matrices.

Block conventions: a 2g x 2g Gram matrix is [[A, B], [B^t, D]] with g x g
blocks, and the intersection matrix is J = [[0, I], [-I, 0]].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, DomainError, InvalidGramError, ShapeError
from .lattice import Lattice

COND_MAX = 1e12
SYMMETRY_TOL = 1e-12
SURFACE_TOL = 1e-9


def _guarded_inv(M: np.ndarray, what: str = "matrix") -> np.ndarray:
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise DegenerateError(f"{what} is singular or badly conditioned (cond = {cond:.3e})")
    return np.linalg.solve(M, np.eye(M.shape[0]))


def intersection_matrix(g: int) -> np.ndarray:
    I = np.eye(g)
    Z = np.zeros((g, g))
    return np.block([[Z, I], [-I, Z]])


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Symmetric positive definite Gram matrix.

    With ``surface=True`` (size 2g) it must also be symplectic with unit
    determinant; flat d-tori use ``surface=False``.
    """

    matrix: np.ndarray
    surface: bool = True
    tol: float = SURFACE_TOL

    def __post_init__(self):
        G = np.array(self.matrix, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ShapeError(f"Gram matrix must be square, got shape {G.shape}")
        if not np.all(np.isfinite(G)):
            raise DomainError("Gram matrix entries must be finite")
        scale = max(1.0, float(np.abs(G).max()))
        if np.abs(G - G.T).max() > SYMMETRY_TOL * scale:
            raise InvalidGramError("Gram matrix is not symmetric")
        G = 0.5 * (G + G.T)
        if np.linalg.eigvalsh(G)[0] <= 0:
            raise InvalidGramError("Gram matrix is not positive definite")
        if self.surface:
            rep = check_riemann_relations(G)
            if rep.size % 2:
                raise InvalidGramError("surface Gram matrices have even size 2g")
            if rep.det_residual > self.tol or rep.symplectic_residual > self.tol:
                raise InvalidGramError(
                    "Riemann relations violated: "
                    f"|det - 1| = {rep.det_residual:.3e}, |GJG - J| = {rep.symplectic_residual:.3e}"
                )
        G.setflags(write=False)
        object.__setattr__(self, "matrix", G)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def genus(self) -> int:
        return self.size // 2

    def blocks(self):
        g = self.genus
        G = self.matrix
        return G[:g, :g], G[:g, g:], G[g:, :g], G[g:, g:]

    def to_dict(self) -> dict:
        return {"kind": "gram", "surface": self.surface, "matrix": self.matrix.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "GramMatrix":
        if data.get("kind", "gram") != "gram":
            raise DomainError(f"expected kind 'gram', got {data.get('kind')!r}")
        return cls(np.array(data["matrix"], dtype=float), surface=bool(data.get("surface", True)))


@dataclass(frozen=True, eq=False)
class PeriodMatrix:
    """Normalized period matrix (I, Z) with Z = X + iY, Y > 0."""

    Z: np.ndarray

    def __post_init__(self):
        Z = np.atleast_2d(np.array(self.Z, dtype=complex))
        if Z.shape[0] != Z.shape[1]:
            raise ShapeError(f"Z must be square, got shape {Z.shape}")
        X, Y = Z.real, Z.imag
        scale = max(1.0, float(np.abs(Z).max()))
        if np.abs(X - X.T).max() > SYMMETRY_TOL * scale or np.abs(Y - Y.T).max() > SYMMETRY_TOL * scale:
            raise DomainError("X and Y must be symmetric")
        if np.linalg.eigvalsh(0.5 * (Y + Y.T))[0] <= 0:
            raise DomainError("Im Z must be positive definite")
        Z.setflags(write=False)
        object.__setattr__(self, "Z", Z)

    @property
    def genus(self) -> int:
        return self.Z.shape[0]

    @property
    def X(self) -> np.ndarray:
        return self.Z.real

    @property
    def Y(self) -> np.ndarray:
        return self.Z.imag

    def to_dict(self) -> dict:
        return {
            "genus": self.genus,
            "real": {"kind": "period-real", "matrix": self.X.tolist()},
            "imag": {"kind": "period-imag", "matrix": self.Y.tolist()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PeriodMatrix":
        X = np.array(data["real"]["matrix"], dtype=float)
        Y = np.array(data["imag"]["matrix"], dtype=float)
        return cls(X + 1j * Y)


@dataclass(frozen=True)
class RiemannReport:
    size: int
    symmetry_residual: float
    min_eigenvalue: float
    det_residual: float
    symplectic_residual: float
    ad_minus_b2_residual: float
    db_residual: float
    ba_residual: float

    @property
    def positive(self) -> bool:
        return self.min_eigenvalue > 0

    def ok(self, tol: float = 1e-10) -> bool:
        return self.positive and max(
            self.symmetry_residual,
            self.det_residual,
            self.symplectic_residual,
            self.ad_minus_b2_residual,
            self.db_residual,
            self.ba_residual,
        ) <= tol

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["positive"] = self.positive
        return d


def check_riemann_relations(gamma) -> RiemannReport:
    """Residuals of symmetry, positivity, det = 1, GJG = J, and the block
    identities AD - B^2 = I, DB = B^t D, BA = A B^t."""
    G = np.array(gamma, dtype=float)
    n = G.shape[0]
    sym = float(np.abs(G - G.T).max())
    min_eig = float(np.linalg.eigvalsh(0.5 * (G + G.T))[0])
    det_res = abs(float(np.linalg.det(G)) - 1.0)
    if n % 2:
        nan = math.nan
        return RiemannReport(n, sym, min_eig, det_res, nan, nan, nan, nan)
    g = n // 2
    J = intersection_matrix(g)
    A, B, D = G[:g, :g], G[:g, g:], G[g:, g:]
    Ig = np.eye(g)
    return RiemannReport(
        size=n,
        symmetry_residual=sym,
        min_eigenvalue=min_eig,
        det_residual=det_res,
        symplectic_residual=float(np.abs(G @ J @ G - J).max()),
        ad_minus_b2_residual=float(np.abs(A @ D - B @ B - Ig).max()),
        db_residual=float(np.abs(D @ B - B.T @ D).max()),
        ba_residual=float(np.abs(B @ A - A @ B.T).max()),
    )


def gram_from_lattice(L: Lattice) -> GramMatrix:
    """Gamma = covol(L) (W^t W)^-1; the surface checks apply when d = 2."""
    W = L.matrix
    gamma = L.covolume() * _guarded_inv(W.T @ W, "W^t W")
    gamma = 0.5 * (gamma + gamma.T)
    return GramMatrix(gamma, surface=(L.dim == 2))


def gram_from_flat_metric_2d(a: float, b: float, c: float) -> GramMatrix:
    """Gram matrix of the metric [[a, b], [b, c]] on R^2 / Z^2."""
    disc = a * c - b * b
    if not (a > 0 and c > 0 and disc > 0):
        raise DomainError(f"metric ({a}, {b}, {c}) is not positive definite")
    return GramMatrix(np.array([[c, -b], [-b, a]]) / math.sqrt(disc))


def star_matrix(G: GramMatrix) -> np.ndarray:
    """Matrix of the Hodge star on harmonic forms, Gamma J."""
    if not G.surface:
        raise InvalidGramError("the star matrix needs a surface Gram matrix")
    S = G.matrix @ intersection_matrix(G.genus)
    if np.abs(S @ S + np.eye(G.size)).max() > SURFACE_TOL * max(1.0, float(np.abs(S).max()) ** 2):
        raise InvalidGramError("star matrix does not square to -I")
    return S


def period_from_gram(G: GramMatrix) -> PeriodMatrix:
    """Z = -D^-1 B^t + i D^-1."""
    if not G.surface:
        raise InvalidGramError("period matrices need a surface Gram matrix")
    _, B, _, D = G.blocks()
    Dinv = _guarded_inv(D, "D-block")
    X = -Dinv @ B.T
    Y = Dinv
    return PeriodMatrix(0.5 * (X + X.T) + 1j * 0.5 * (Y + Y.T))


def gram_from_period(Z: PeriodMatrix) -> GramMatrix:
    """Gamma = [[Y + X Y^-1 X, -X Y^-1], [-Y^-1 X, Y^-1]]."""
    X, Y = Z.X, Z.Y
    Yinv = _guarded_inv(Y, "Im Z")
    top = np.hstack([Y + X @ Yinv @ X, -X @ Yinv])
    bottom = np.hstack([-Yinv @ X, Yinv])
    gamma = np.vstack([top, bottom])
    return GramMatrix(0.5 * (gamma + gamma.T))
