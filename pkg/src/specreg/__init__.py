"""Spectral regularization for linear inverse problems K phi = r with
estimated operator and right-hand side, including non-identified (rank
deficient) models: the estimator converges to the best approximation of the
target on the orthocomplement of the operator's null space.

Submodules
----------
grid        grid functions, quadrature, trigonometric basis, projections
operators   discrete operators, SVD, filters, regularized solves
flir        functional linear IV regression estimators
npiv        nonparametric IV kernel estimators
dgp         the Monte Carlo data-generating process
inference   confidence bands, chi-square mixtures, functional inference
bench       benchmark CLI (tables, figures, coverage, limit checks)
"""

from .errors import (
    ConfigError,
    DecompositionError,
    DegenerateDensityError,
    DegenerateFunctionalError,
    EnvelopeError,
    GridMismatchError,
    InvalidArgumentError,
    SpecregError,
)
from .grid import (
    BasisSpec,
    Grid,
    GridFunction,
    basis_matrix,
    inner,
    l2_norm,
    make_grid,
    on_grid,
    project_onto_span,
    sup_norm,
    trig_basis,
)
from .operators import (
    DiscreteOperator,
    FilterSpec,
    Qualification,
    SvdCache,
    adjoint,
    apply_operator,
    compose,
    filter_value,
    hs_norm,
    identity_operator,
    norm_2inf,
    operator_norm,
    operator_power,
    qualification,
    rank_one,
    regularize,
    source_element,
    svd,
    tikhonov_direct,
)

__version__ = "0.1.0"
