"""Gauge-covariant finite differences for the magnetic Laplacian on a
conformally flat 2-torus.

The torus R^2 / L is sampled on the periodic grid x = W (i/N, j/N). Each
edge carries the Peierls phase theta_e = 2 pi <P_A, edge vector>, the exact
line integral of the parallel potential. In fractional coordinates the flat
metric is W^t W; its inverse K sets the stiffness weights of a 9-point
stencil (axis edges K11, K22, diagonals +K12/2 and -K12/2). A conformal
factor h = exp(2 phi) (flat metric) only enters the node masses, since the
magnetic Dirichlet energy is conformally invariant in two dimensions.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import config
from .errors import ConvergenceError, ShapeError
from .lattice import Lattice
from .spectrum import PotentialForm, lambda1

MIN_RESOLUTION = 8


@dataclass(frozen=True, eq=False)
class DiscreteTorus:
    """Periodic N x N grid on R^2 / L with log conformal factor ``phi``.

    ``phi[i, j]`` is the value at fractional coordinates (i/N, j/N).
    """

    lattice: Lattice
    N: int
    phi: np.ndarray

    def __post_init__(self):
        if self.lattice.dim != 2:
            raise ShapeError("discretization is implemented for d = 2 only")
        if int(self.N) != self.N or self.N < MIN_RESOLUTION:
            raise ShapeError(f"resolution must be an integer >= {MIN_RESOLUTION}, got {self.N}")
        phi = np.array(self.phi, dtype=float)
        if phi.shape != (self.N, self.N):
            raise ShapeError(f"conformal factor must have shape ({self.N}, {self.N}), got {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise ShapeError("conformal factor must be finite")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def build(cls, lattice: Lattice, N: int, phi: Callable | float | None = None) -> "DiscreteTorus":
        """``phi`` is a constant or a function of fractional coordinates
        (s1, s2), 1-periodic in each."""
        s = np.arange(N) / N
        s1, s2 = np.meshgrid(s, s, indexing="ij")
        if phi is None:
            grid = np.zeros((N, N))
        elif callable(phi):
            grid = np.broadcast_to(np.asarray(phi(s1, s2), dtype=float), (N, N)).copy()
        else:
            grid = np.full((N, N), float(phi))
        return cls(lattice, N, grid)

    @property
    def size(self) -> int:
        return self.N * self.N

    def cell_area(self) -> float:
        return self.lattice.covolume() / self.N**2

    def node_weights(self) -> np.ndarray:
        """Mass weights exp(2 phi) * cell area, flattened in (i, j) order."""
        return (np.exp(2.0 * self.phi) * self.cell_area()).reshape(-1)

    def volume(self) -> float:
        return float(self.node_weights().sum())

    def form_norm_sq(self, A: PotentialForm) -> float:
        """Midpoint-rule ||A||^2 in L^2(h): integral of |A|_h^2 dv_h."""
        # |A|_h^2 = exp(-2 phi) |A|^2 and dv_h = exp(2 phi) dx: the factors
        # cancel (conformal invariance), but the quadrature is kept explicit
        e2phi = np.exp(2.0 * self.phi)
        density = (A.norm_sq() / e2phi) * e2phi
        return float(density.sum() * self.cell_area())


@dataclass(frozen=True, eq=False)
class MagneticOperator:
    """Hermitian pencil (S, diag(mass)): lambda solves S u = lambda M u."""

    stiffness: sp.csr_matrix
    mass: np.ndarray

    @property
    def size(self) -> int:
        return self.mass.shape[0]

    def apply(self, u: np.ndarray) -> np.ndarray:
        """The operator M^-1 S."""
        return (self.stiffness @ u) / self.mass if u.ndim == 1 else (self.stiffness @ u) / self.mass[:, None]

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        """Mass-weighted inner product <u, v> = sum conj(v) u m."""
        return complex(np.vdot(v, self.mass * u))

    def rayleigh_quotient(self, u: np.ndarray) -> float:
        return float(np.real(np.vdot(u, self.stiffness @ u)) / np.real(np.vdot(u, self.mass * u)))

    def hermiticity_residual(self, u: np.ndarray, v: np.ndarray) -> float:
        return abs(self.inner(self.apply(u), v) - self.inner(u, self.apply(v)))


def _edge_stencil(L: Lattice):
    K = np.linalg.inv(L.matrix.T @ L.matrix)
    cov = L.covolume()
    edges = [((1, 0), K[0, 0] * cov), ((0, 1), K[1, 1] * cov)]
    if abs(K[0, 1]) > 1e-15 * max(K[0, 0], K[1, 1]):
        edges += [((1, 1), 0.5 * K[0, 1] * cov), ((1, -1), -0.5 * K[0, 1] * cov)]
    return edges


def build_operator(t: DiscreteTorus, A: PotentialForm) -> MagneticOperator:
    """Assemble the magnetic Dirichlet form and node masses on ``t``."""
    if A.dim != 2:
        raise ShapeError(f"potential must be 2-D, got dimension {A.dim}")
    N = t.N
    W = t.lattice.matrix
    idx = np.arange(N * N).reshape(N, N)
    rows, cols, vals = [], [], []
    diag = np.zeros(N * N)
    for (a, b), w in _edge_stencil(t.lattice):
        theta = 2 * math.pi * float(A.position @ (W @ np.array([a, b], dtype=float))) / N
        link = w * np.exp(-1j * theta)
        src = idx.reshape(-1)
        dst = np.roll(np.roll(idx, -a, axis=0), -b, axis=1).reshape(-1)
        # w |e^{-i theta} u_dst - u_src|^2
        rows += [src, dst]
        cols += [dst, src]
        vals += [np.full(N * N, -link), np.full(N * N, -np.conj(link))]
        diag += 2 * w
    rows.append(np.arange(N * N))
    cols.append(np.arange(N * N))
    vals.append(diag.astype(complex))
    S = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N * N, N * N)
    )
    S.sum_duplicates()
    return MagneticOperator(S, t.node_weights())


def _m_orthonormalize(X: np.ndarray, sqrt_m: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(sqrt_m[:, None] * X)
    return Q / sqrt_m[:, None]


def _deflate(X: np.ndarray, locked: np.ndarray, m: np.ndarray) -> np.ndarray:
    if locked.shape[1] == 0:
        return X
    for _ in range(2):
        X = X - locked @ (locked.conj().T @ (m[:, None] * X))
    return X


def smallest_eigenvalues(op: MagneticOperator, k: int = 1, *, shift: float = -1e-8,
                         tol: float | None = None, max_iter: int = 500, guard: int | None = None,
                         seed: int = 0) -> list[tuple[float, np.ndarray]]:
    """The ``k`` smallest eigenpairs of S u = lambda M u.

    Block inverse iteration with the factorization of S - shift M,
    Rayleigh-Ritz on the block, and locking of converged pairs (later
    iterates are kept M-orthogonal to them). Convergence means
    ||M^-1 (S u - lambda M u)||_M < tol for M-normalized u.
    """
    tol = config.tol("solver") if tol is None else tol
    n = op.size
    if not 1 <= k <= 10:
        raise ValueError(f"k must be between 1 and 10, got {k}")
    S, m = op.stiffness, op.mass
    sqrt_m = np.sqrt(m)
    p = min(n, k + (guard if guard is not None else max(4, k)))
    lu = splu((S - shift * sp.diags(m)).tocsc())
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
    X = _m_orthonormalize(X, sqrt_m)
    locked = np.zeros((n, 0), dtype=complex)
    locked_vals: list[float] = []
    worst = math.inf
    for _ in range(max_iter):
        Y = lu.solve(np.ascontiguousarray(m[:, None] * X))
        Y = _deflate(Y, locked, m)
        Y = _m_orthonormalize(Y, sqrt_m)
        Y = _deflate(Y, locked, m)
        Y = _m_orthonormalize(Y, sqrt_m)
        H = Y.conj().T @ (S @ Y)
        theta, V = scipy.linalg.eigh(0.5 * (H + H.conj().T))
        X = Y @ V
        R = S @ X - (m[:, None] * X) * theta[None, :]
        res = np.sqrt(np.sum(np.abs(R) ** 2 / m[:, None], axis=0))
        need = k - len(locked_vals)
        nconv = 0
        while nconv < need and res[nconv] < tol:
            nconv += 1
        worst = float(res[:need].max())
        if nconv:
            locked = np.hstack([locked, X[:, :nconv]])
            locked_vals += [float(v) for v in theta[:nconv]]
            X = X[:, nconv:]
            if len(locked_vals) == k:
                break
    else:
        raise ConvergenceError(
            f"inverse iteration did not converge in {max_iter} iterations (residual {worst:.3e})",
            residual=worst,
        )
    order = np.argsort(locked_vals)
    return [(locked_vals[i], locked[:, i]) for i in order]


def discrete_lambda1(t: DiscreteTorus, A: PotentialForm, **kw) -> float:
    return smallest_eigenvalues(build_operator(t, A), 1, **kw)[0][0]


@dataclass
class AsymptoticsReport:
    r_values: list[float]
    normalized: list[float]
    limit: float
    quadratic: float
    form_norm_sq: float
    volume: float
    fitted_C: float
    upper_bound_ok: bool
    lower_bound_ok: bool
    relative_error: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "vol_lambda1_over_r2"])
        for r, y in zip(self.r_values, self.normalized):
            w.writerow([repr(r), repr(y)])
        return buf.getvalue()


def verify_asymptotics(t: DiscreteTorus, A: PotentialForm, r_values, **solver) -> AsymptoticsReport:
    """Check vol lambda_1(rA) / r^2 -> ||A||^2 and the two-sided bound.

    Fits vol lambda_1(rA) / r^2 = limit + c r^2 by least squares; the lower
    bound uses the fitted constant C = max(-c, 0) / vol.
    """
    rs = [float(r) for r in r_values]
    if any(not 0 < r < 0.5 for r in rs) or any(b >= a for a, b in zip(rs, rs[1:])):
        raise ValueError("r_values must be decreasing and lie in (0, 1/2)")
    vol = t.volume()
    norm_sq = t.form_norm_sq(A)
    lams = [discrete_lambda1(t, A.scaled(r), **solver) for r in rs]
    ys = [vol * lam / r**2 for lam, r in zip(lams, rs)]
    r2 = np.array(rs) ** 2
    X = np.column_stack([np.ones_like(r2), r2])
    (limit, quad), *_ = np.linalg.lstsq(X, np.array(ys), rcond=None)
    C = max(-quad, 0.0) / vol
    slack = 1e-9 * max(norm_sq, 1.0)
    upper = all(vol * lam <= norm_sq * r * r + slack * r * r for lam, r in zip(lams, rs))
    lower = all(lam >= norm_sq / vol * r * r - C * r**4 - slack * r * r for lam, r in zip(lams, rs))
    return AsymptoticsReport(
        r_values=rs,
        normalized=[float(y) for y in ys],
        limit=float(limit),
        quadratic=float(quad),
        form_norm_sq=norm_sq,
        volume=vol,
        fitted_C=float(C),
        upper_bound_ok=bool(upper),
        lower_bound_ok=bool(lower),
        relative_error=abs(float(limit) - norm_sq) / norm_sq,
    )


@dataclass
class FlatBestReport:
    N: int
    conformal_value: float
    flat_closed_form: float
    flat_discrete: float
    tolerance: float
    gap: float
    discrete_gap: float
    holds: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_flat_is_best(t: DiscreteTorus, A: PotentialForm, c: float = 5.0, **solver) -> FlatBestReport:
    """Compare |h| lambda_1(h) on the grid with |h_flat| lambda_1(h_flat).

    The inequality is asserted up to tau(N) = c / N^2 against the closed
    form; ``discrete_gap`` compares with the flat operator on the same grid,
    which isolates the conformal factor from discretization error.
    """
    vol = t.volume()
    conf = vol * discrete_lambda1(t, A, **solver)
    L = t.lattice
    closed = L.covolume() * lambda1(L, A)
    flat_grid = DiscreteTorus.build(L, t.N)
    flat_disc = L.covolume() * discrete_lambda1(flat_grid, A, **solver)
    tau = c / t.N**2
    return FlatBestReport(
        N=t.N,
        conformal_value=float(conf),
        flat_closed_form=float(closed),
        flat_discrete=float(flat_disc),
        tolerance=tau,
        gap=float(closed - conf),
        discrete_gap=float(flat_disc - conf),
        holds=bool(conf <= closed + tau),
    )


@dataclass
class ConvergenceReport:
    resolutions: list[int]
    values: list[float]
    exact: float
    errors: list[float]
    orders: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "lambda1", "error"])
        for N, v, e in zip(self.resolutions, self.values, self.errors):
            w.writerow([N, repr(v), repr(e)])
        return buf.getvalue()


def convergence_study(L: Lattice, A: PotentialForm, resolutions, **solver) -> ConvergenceReport:
    """Flat-torus lambda_1 against the closed form over several N; the
    observed order between consecutive N is log2(e(N) / e(2N)) scaled by the
    actual resolution ratio."""
    Ns = [int(N) for N in resolutions]
    exact = lambda1(L, A)
    vals = [discrete_lambda1(DiscreteTorus.build(L, N), A, **solver) for N in Ns]
    errs = [abs(v - exact) for v in vals]
    orders = [
        math.log(e0 / e1) / math.log(n1 / n0) if e0 > 0 and e1 > 0 else math.nan
        for (n0, e0), (n1, e1) in zip(zip(Ns, errs), zip(Ns[1:], errs[1:]))
    ]
    return ConvergenceReport(Ns, [float(v) for v in vals], exact, errs, orders)
