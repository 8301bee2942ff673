"""Functional periodic ARMA processes on a finite basis.

Library layout:

* :mod:`fparma.hilbert` -- coefficient vectors, operator arrays, block
  operators, spectral tools, regularized inverses
* :mod:`fparma.model` -- model objects, block companions, cycle operator,
  one-cycle noise aggregation, JSON documents
* :mod:`fparma.probe` -- stationarity evidence, exact covariances,
  whiteness and dependence-decay diagnostics
* :mod:`fparma.sim` -- named random streams, path simulation, coupled
  pairs, CSV round trip
* :mod:`fparma.estimate` -- regularized Yule-Walker cycle estimate and
  per-season operator extraction
* :mod:`fparma.cli` -- the ``fparma`` command
"""

from .hilbert import (
    BasisSpec,
    BlockOp,
    SpectralDecomp,
    hs_distance,
    hs_norm,
    operator_norm,
    projector_onto_leading,
    spectral_decomp,
    tensor_product,
    tikhonov_inverse,
)
from .model import (
    AssumptionViolation,
    FparmaModel,
    NoiseSpec,
    companion_ar,
    companion_ma,
    cycle_matrix,
    ma_aggregates,
    model_from_dict,
    model_to_dict,
    recursive_entry,
    season_of,
    validate,
)
from .probe import (
    NumericalFailure,
    check_stationarity,
    lagged_covariances,
    m_approx_decay,
    model_covariances,
    stationary_covariance,
    whiteness_diagnostic,
)
from .sim import RngStream, SamplePath, draw_noise, simulate, simulate_coupled
from .estimate import (
    RegularizationConfig,
    empirical_covariances,
    end_to_end_fit,
    estimate_cycle_matrix,
    extract_fpar_operators,
    submatrices,
)

__version__ = "0.1.0"
