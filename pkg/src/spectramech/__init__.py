"""Auctions for shared radio resources under reported willingness to pay.

Two mechanisms over the same type model: exclusive bandwidth slices
(water-filling on virtual types) and a shared band with interference
(multistart power search).  Both price through the envelope construction
with explicit discretization error bounds, and a verification suite
audits truthfulness, participation, the payment identity, and interim
monotonicity statistically.
"""

from .distributions import (
    RegularityResult,
    TabulatedType,
    TruncatedLinearType,
    TruncatedPowerType,
    TypeDistribution,
    UniformType,
    VirtualTypeProfile,
    certify_regularity,
    sample_types,
    virtual_type,
)
from .errors import (
    ConfigError,
    DomainError,
    NumericsError,
    SolverError,
    SpectramechError,
    ValidationError,
)
from .fd import (
    FdOutcome,
    FdScenario,
    FdUser,
    fd_allocate,
    fd_expected_revenue,
    fd_interim,
    fd_payment,
    fd_payment_via_inverse_rates,
)
from .interim import InterimEstimate, RevenueEstimate
from .rates import (
    UNBOUNDED_DERIVATIVE,
    FdUserPhysical,
    GainDistribution,
    SsPhysical,
    expected_rate,
    expected_rate_derivative,
    expected_rate_second_derivative,
    interference_rate,
    interference_rate_gradient,
    interference_rates,
)
from .ss import (
    SsOutcome,
    SsScenario,
    build_starts,
    ss_allocate,
    ss_expected_revenue,
    ss_interim,
    ss_payment,
)
from .verify import (
    EqualSplitReportTax,
    FlatFeeMechanism,
    IcReport,
    IdentityReport,
    IrReport,
    MonotoneReport,
    fd_mechanism,
    ss_mechanism,
    verify_ic,
    verify_ir,
    verify_monotone_interim,
    verify_payment_identity,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "EqualSplitReportTax",
    "FdOutcome",
    "FdScenario",
    "FdUser",
    "FdUserPhysical",
    "FlatFeeMechanism",
    "GainDistribution",
    "IcReport",
    "IdentityReport",
    "InterimEstimate",
    "IrReport",
    "MonotoneReport",
    "NumericsError",
    "RegularityResult",
    "RevenueEstimate",
    "SolverError",
    "SpectramechError",
    "SsOutcome",
    "SsPhysical",
    "SsScenario",
    "TabulatedType",
    "TruncatedLinearType",
    "TruncatedPowerType",
    "TypeDistribution",
    "UNBOUNDED_DERIVATIVE",
    "UniformType",
    "ValidationError",
    "VirtualTypeProfile",
    "build_starts",
    "certify_regularity",
    "expected_rate",
    "expected_rate_derivative",
    "expected_rate_second_derivative",
    "fd_allocate",
    "fd_expected_revenue",
    "fd_interim",
    "fd_mechanism",
    "fd_payment",
    "fd_payment_via_inverse_rates",
    "interference_rate",
    "interference_rate_gradient",
    "interference_rates",
    "sample_types",
    "ss_allocate",
    "ss_expected_revenue",
    "ss_interim",
    "ss_mechanism",
    "ss_payment",
    "verify_ic",
    "verify_ir",
    "verify_monotone_interim",
    "verify_payment_identity",
    "virtual_type",
]
