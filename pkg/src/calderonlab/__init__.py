"""calderonlab: a numerical laboratory for invertible doubles of first-order
elliptic operators on the model cylinder, their Calderon projections,
sectorial spectral projections, and the structural invariants that come
with them."""

from .coefficients import CoefficientField
from .double import (
    CalderonBundle,
    DoubleOperator,
    assemble_double,
    calderon,
    correction_formula_check,
    ghost_solutions,
)
from .errors import (
    CalderonLabError,
    ConfigError,
    ContourResolutionError,
    EllipticityError,
    GeometryMismatchError,
    NumericalInconsistencyError,
    RankGapError,
    SpectralCuttingError,
)
from .geometry import (
    Discretization,
    GeometryConfig,
    TraceSystem,
    build_discretization,
    sobolev_weighted_norm,
    trace_and_dual,
)
from .operator import (
    AssembledOperator,
    CollarData,
    OperatorSpec,
    assemble_operator,
    cauchy_riemann_spec,
    check_ellipticity_and_sl,
    dirac_sigma1_spec,
    direct_sum_spec,
    green_defect,
    transmission_morphism,
)
from .oracle import (
    OracleCauchySpace,
    compare_to_oracle,
    constant_coeff_ucp,
    mode_oracle_cauchy,
)
from .sectorial import (
    SectorialContour,
    SpectralSplit,
    imaginary_signature_data,
    q_family,
    sectorial_projection,
    spectral_projection_oracle,
)
from .analysis import (
    MetricReport,
    SymplecticForm,
    UcpProfile,
    cauchy_space_direct,
    continuity_sweep,
    lagrangian_and_cobordism,
    operator_metrics,
    projection_invariants,
    ucp_defect_profile,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
