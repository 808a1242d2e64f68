"""Magnetic spectral geometry of flat tori.

Closed-form magnetic-Laplacian spectra, conformal invariants of genus-one
surfaces, Gram and period matrix algebra, reconstruction of a flat metric
from its ground state spectrum, and a gauge-covariant finite-difference
solver used to check the asymptotic and comparison results numerically.
"""

from .errors import (
    ConvergenceError,
    DataError,
    DegenerateError,
    DomainError,
    InconsistentSpectrumError,
    InvalidGramError,
    MagspecError,
    RankError,
    ShapeError,
    UnsupportedError,
)
from .lattice import (
    CvpResult,
    Lattice,
    ModuliPoint,
    acute_dual_basis,
    circumcenter,
    closest_vectors,
    dual_lattice,
    inradius_sq,
    normalize_moduli,
)
from .spectrum import (
    FluxVector,
    GroundStateTable,
    PotentialForm,
    SpectrumSlice,
    evaluate_eigenfunction,
    ground_state_spectrum,
    lambda1,
    lambda1_normalized_from_fluxes,
    magnetic_spectrum,
)
from .invariants import global_minimum_search, lambda1_class, optimal_potential
from .riemann import (
    GramMatrix,
    PeriodMatrix,
    check_riemann_relations,
    gram_from_flat_metric_2d,
    gram_from_lattice,
    gram_from_period,
    period_from_gram,
    star_matrix,
)
from .reconstruct import (
    estimate_limits,
    isospectral_compare,
    reconstruct_gram,
    reconstruct_moduli,
)

__version__ = "0.1.0"
