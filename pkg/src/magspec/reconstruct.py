"""Recover volume, Gram matrix and (in 2-D) the flat representative from a
ground state table.

Along the sequence r = 1/n the ground state energies satisfy
n^2 mu[(j, k, n)] -> (Gamma_jj + Gamma_kk + 2 Gamma_jk) / vol, which fixes
Gamma / vol; the volume then follows from a determinant rule (det Gamma = 1
for surfaces, det Gamma = vol^(d - 2) for flat d-tori).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InconsistentSpectrumError
from .lattice import Lattice, ModuliPoint, normalize_moduli
from .riemann import GramMatrix
from .spectrum import GroundStateTable

log = logging.getLogger(__name__)

MODULI_DET_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    volume: float
    gram: GramMatrix
    limits: np.ndarray
    mode: str
    moduli: ModuliPoint | None = None
    residuals: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "volume": self.volume,
            "mode": self.mode,
            "gram": self.gram.to_dict(),
            "limits": self.limits.tolist(),
            "moduli": None if self.moduli is None else self.moduli.to_dict(),
            "residuals": {f"{j},{k}": r for (j, k), r in sorted(self.residuals.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReconstructionResult":
        res = {}
        for key, r in data.get("residuals", {}).items():
            j, k = (int(s) for s in key.split(","))
            res[(j, k)] = float(r)
        mod = data.get("moduli")
        return cls(
            volume=float(data["volume"]),
            gram=GramMatrix.from_dict(data["gram"]),
            limits=np.array(data["limits"], dtype=float),
            mode=data["mode"],
            moduli=None if mod is None else ModuliPoint.from_dict(mod),
            residuals=res,
        )


def estimate_limits(t: GroundStateTable, method: str = "richardson") -> tuple[np.ndarray, dict]:
    """Extrapolate M_jk = lim n^2 mu[(j, k, n)] under n^2 mu = M + c / n^2.

    ``method="richardson"`` eliminates c with the two largest n and reports
    the misfit at the third largest; ``method="lstsq"`` fits all n (for noisy
    or numerically computed tables) and reports the rms misfit.
    Returns ``(M, residuals)``.
    """
    if method not in ("richardson", "lstsq"):
        raise DataError(f"unknown extrapolation method {method!r}")
    size = t.size
    M = np.full((size, size), np.nan)
    residuals = {}
    for j in range(1, size + 1):
        for k in range(j, size + 1):
            ns = t.n_values(j, k)
            mus = []
            kept = []
            for n in ns:
                mu = t.entries[(j, k, n)]
                if mu < 0:
                    raise DataError(f"negative ground state energy at (j={j}, k={k}, n={n}): {mu}")
                if mu == 0:
                    log.warning("discarding mu = 0 at (j=%d, k=%d, n=%d): below gauge threshold", j, k, n)
                    continue
                kept.append(n)
                mus.append(mu)
            if len(kept) < 3:
                raise DataError(f"(j={j}, k={k}) needs at least 3 usable n values, has {len(kept)}")
            for (n0, m0), (n1, m1) in zip(zip(kept, mus), zip(kept[1:], mus[1:])):
                if m1 > m0 * (1 + 1e-12):
                    raise DataError(f"ground state energies increase with n at (j={j}, k={k}, n={n1})")
            n = np.array(kept, dtype=float)
            f = n**2 * np.array(mus)
            if method == "richardson":
                na, nb = n[-2], n[-1]
                lim = (nb**2 * f[-1] - na**2 * f[-2]) / (nb**2 - na**2)
                c = (f[-1] - lim) * nb**2
                res = abs(lim + c / n[-3] ** 2 - f[-3])
            else:
                X = np.column_stack([np.ones_like(n), 1.0 / n**2])
                coef, *_ = np.linalg.lstsq(X, f, rcond=None)
                lim = coef[0]
                res = float(np.sqrt(np.mean((X @ coef - f) ** 2)))
            M[j - 1, k - 1] = M[k - 1, j - 1] = lim
            residuals[(j, k)] = float(res)
    return M, residuals


def reconstruct_gram(M, mode: str = "surface", residuals: dict | None = None) -> ReconstructionResult:
    """Solve (Gamma_jj + Gamma_kk + 2 Gamma_jk) / vol = M_jk, then fix vol.

    ``mode="surface"``: det Gamma = 1, so vol = det(Gamma/vol)^(-1/D).
    ``mode="flat-torus"``: det Gamma = vol^(d-2), so vol = det(Gamma/vol)^(-1/2).
    """
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InconsistentSpectrumError(f"limit matrix must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InconsistentSpectrumError("limit matrix has non-finite entries")
    if mode not in ("surface", "flat-torus"):
        raise DataError(f"unknown mode {mode!r}")
    D = M.shape[0]
    diag = np.diag(M) / 4.0
    Mp = (M - diag[:, None] - diag[None, :]) / 2.0
    np.fill_diagonal(Mp, diag)
    Mp = 0.5 * (Mp + Mp.T)
    eig = np.linalg.eigvalsh(Mp)
    if eig[0] <= 0:
        raise InconsistentSpectrumError(
            f"Gamma / vol is not positive definite (smallest eigenvalue {eig[0]:.3e})"
        )
    det = float(np.prod(eig))
    if mode == "surface":
        if D % 2:
            raise InconsistentSpectrumError("surface mode needs an even-sized table")
        vol = det ** (-1.0 / D)
    else:
        vol = det ** (-0.5)
    gamma = vol * Mp
    surface = mode == "surface"
    gram = GramMatrix(gamma, surface=surface, tol=1e-6) if surface else GramMatrix(gamma, surface=False)
    result = ReconstructionResult(vol, gram, M, mode, residuals=dict(residuals or {}))
    if D == 2:
        result = ReconstructionResult(
            vol, gram, M, mode, moduli=reconstruct_moduli(result), residuals=result.residuals
        )
    return result


def lattice_from_gram(gram: GramMatrix, volume: float | None = None) -> Lattice:
    """A lattice whose Gram matrix is ``gram``: W^t W proportional to Gamma^-1.

    With ``volume`` given, the lattice is scaled to that covolume.
    """
    G = gram.matrix
    d = G.shape[0]
    metric = np.linalg.inv(G)
    metric = 0.5 * (metric + metric.T)
    W = np.linalg.cholesky(metric).T  # upper triangular, W^t W = metric
    lat = Lattice(W.T)
    if volume is not None:
        lat = lat.scaled((volume / lat.covolume()) ** (1.0 / d))
    return lat


def reconstruct_moduli(r: ReconstructionResult) -> ModuliPoint:
    """Flat representative (up to homothety) of a 2-D reconstruction."""
    G = r.gram.matrix
    if G.shape != (2, 2):
        raise DataError("moduli are only defined for 2-D reconstructions")
    det = float(np.linalg.det(G))
    if abs(det - 1.0) > MODULI_DET_TOL:
        raise InconsistentSpectrumError(f"Gram matrix determinant is {det}, expected 1")
    # metric [[a, b], [b, c]] with a = Gamma_22, b = -Gamma_12, c = Gamma_11
    a, b, c = G[1, 1], -G[0, 1], G[0, 0]
    lat = Lattice([[math.sqrt(a), 0.0], [b / math.sqrt(a), math.sqrt(c - b * b / a)]])
    return normalize_moduli(lat).moduli


@dataclass(frozen=True)
class IsospectralVerdict:
    isometric: bool
    volume_diff: float
    gram_diff: float
    moduli_diff: float | None
    first: ReconstructionResult
    second: ReconstructionResult

    def to_dict(self) -> dict:
        return {
            "isometric": self.isometric,
            "volume_diff": self.volume_diff,
            "gram_diff": self.gram_diff,
            "moduli_diff": self.moduli_diff,
            "first": self.first.to_dict(),
            "second": self.second.to_dict(),
        }


def reconstruct(t: GroundStateTable, method: str = "richardson", mode: str | None = None) -> ReconstructionResult:
    M, res = estimate_limits(t, method)
    return reconstruct_gram(M, mode or t.mode, res)


def isospectral_compare(t1: GroundStateTable, t2: GroundStateTable, tol: float = 1e-6,
                        method: str = "richardson") -> IsospectralVerdict:
    """Decide whether two tables come from isometric flat tori.

    In 2-D the verdict compares volumes and moduli (isometry up to a change
    of basis); otherwise it compares volumes and Gram matrices.
    """
    if {k[:2] for k in t1.entries} != {k[:2] for k in t2.entries} or t1.size != t2.size:
        raise DataError("tables have different index sets")
    r1 = reconstruct(t1, method)
    r2 = reconstruct(t2, method)
    vol_diff = abs(r1.volume - r2.volume) / max(r1.volume, r2.volume)
    gram_diff = float(np.abs(r1.gram.matrix - r2.gram.matrix).max())
    mod_diff = None
    if r1.moduli is not None and r2.moduli is not None:
        mod_diff = max(abs(r1.moduli.p - r2.moduli.p), abs(r1.moduli.q - r2.moduli.q))
    shape_diff = mod_diff if mod_diff is not None else gram_diff
    return IsospectralVerdict(
        isometric=bool(vol_diff <= tol and shape_diff <= tol),
        volume_diff=float(vol_diff),
        gram_diff=gram_diff,
        moduli_diff=mod_diff,
        first=r1,
        second=r2,
    )
