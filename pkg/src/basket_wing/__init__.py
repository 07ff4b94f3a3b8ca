"""Extreme-strike implied volatility asymptotics for basket options.

Closed-form wing formulas for multidimensional Black-Scholes, time-changed
Black-Scholes and copula-coupled baskets, with Monte Carlo and quadrature
oracles to check them.
"""
from ._backend import BACKEND
from .black_scholes import (
    OptionQuote,
    PsiValue,
    bs_log_price,
    bs_price,
    implied_vol,
    implied_vol_from_log_price,
    iv_first_order,
    iv_zero_order,
    psi,
)
from .copula import (
    CopulaSpec,
    MarginalTailSpec,
    chi_archimedean,
    chi_gaussian,
    chi_numeric,
    chi_strong_dependence,
    nig_slope,
    tailwing_left,
    tailwing_right,
)
from .errors import (
    ArbitrageError,
    AssumptionWarning,
    BasketWingError,
    BoundaryError,
    ConditioningWarning,
    ConfigError,
    DomainError,
    InsufficientPathsWarning,
    IntegrationError,
    MatrixError,
    MomentError,
    OptimizationError,
    PrecisionWarning,
    RegimeError,
)
from .lognormal_asymptotics import (
    BasketSpec,
    IvExpansion,
    PutAsymptoticCoeffs,
    TwoAssetRegime,
    density_asymptotic,
    fractional_integral_f2,
    leftwing_iv_expansion,
    put_asymptotic,
    rightwing_iv_limit,
    two_asset_classify,
    two_asset_exceptional,
    two_asset_leftwing,
)
from .oracle import (
    IvCurvePoint,
    McEstimate,
    empirical_iv_curve,
    mc_basket_put,
    mc_timechanged_put,
    quad_put_2d,
)
from .simplex_opt import SaddlePoint, SimplexSolution, inner_max_weights, min_quadratic_simplex, saddle_cstar
from .timechange import (
    TcBasketSpec,
    TimeChangeSpec,
    laplace_transform,
    martingale_drift,
    tail_sandwich_check,
    tc_leftwing_leading,
    tc_rightwing_leading,
)

__version__ = "0.1.0"
