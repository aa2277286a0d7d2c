"""Identifiability of treatment effects in spatially confounded Gaussian models.

The package checks sufficient conditions for identifying the treatment
coefficient in ``Y = Z beta + U + eps`` under CAR, Leroux CAR, coregionalized
and Matern bivariate covariance models, builds explicit observationally
equivalent alternatives when identification fails, and fits the models by
multi-start maximum likelihood.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AllStartsFailed,
    CaseNotApplicable,
    ConvergenceFailure,
    DomainError,
    DuplicateParameter,
    GraphError,
    InvalidRegion,
    NoValidBetaFound,
    NotPositiveDefinite,
    SpatialIdentError,
    ZeroDegree,
)
from .forge import CONSTRUCTIONS, EquivalenceCertificate, forge  # noqa: E402
from .graph import (  # noqa: E402
    ProximityMatrix,
    as_proximity,
    complete_graph,
    connected_components,
    degree_matrix,
    distance_matrix,
    figure1_graphs,
    laplacian_spectrum,
    load_graph,
    normalized_spectrum,
    ring_graph,
)
from .identify import IdentifiabilityReport, Theorem, Tolerances, Verdict, check  # noqa: E402
from .mc import Dataset, FitResult, fit_mle, loglik, profile_beta, sample  # noqa: E402
from .models import (  # noqa: E402
    BivariateParams,
    CarSPParams,
    LerouxParams,
    LmcParams,
    ObservedMoments,
    ParsMaternParams,
    native_moments,
    observed_moments,
    spec_from_dict,
)
from .specfun import CovFamily, bessel_k, cov_eval, matern  # noqa: E402
