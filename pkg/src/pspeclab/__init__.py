"""Desk-scale numerical laboratory for semiclassical pseudospectra.

Quantizes phase-space symbols p(x, xi) into finite matrices, samples
the classical sets driven by Poisson brackets, builds WKB quasimodes,
and sweeps smallest singular values of P - z across h.
"""

from .symbols import SymbolExpr, PolySymbol, parse_symbol, symbol_from_poly
from .jets import Jet, eval_jet, compose_jet
from .brackets import (
    BracketReport,
    finite_type_order,
    poisson_bracket,
    repeated_brackets,
)
from .classical import (
    LevelSet,
    RangeAtlas,
    SigmaInfinity,
    sample_symbol_range,
    sigma_infinity,
    sign_sum,
    solve_level_set,
    winding_number,
)
from .quantize import (
    FBIField,
    FourierGrid,
    HermiteBasis,
    OperatorMatrix,
    fbi_transform,
    gaussian_smooth_poly,
    hermite_functions,
    moyal_product,
    moyal_terms,
    schrodinger_matrix,
    weyl_quantize_grid,
    weyl_quantize_poly,
    wick_quantize,
)
from .spectral import (
    ResolventGrid,
    ScalingFit,
    SpectrumReport,
    contour_extract,
    eigendecompose,
    pseudospectrum_grid,
    resolvent_norm,
    scaling_fit,
)
from .quasimodes import (
    Quasimode,
    build_quasimode,
    hessian_construct,
    localization_report,
    residual_sweep,
)
from .weights import (
    DissipativeOperator,
    EscapeWeight,
    boundary_exclusion_experiment,
    conjugate_operator,
    dissipative_build,
    dissipative_resolvent_check,
    escape_weight,
    quasimode_spectrum_proximity,
)

__version__ = "0.1.0"
