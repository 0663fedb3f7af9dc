"""Multiplierless OQAM-FBMC prototype filters via signed-power-of-two approximation."""

__version__ = "0.1.0"

from .sopot import (
    SopotApprox,
    SptTerm,
    merge_canonical,
    reconstruct,
    spt_count,
    to_matrix,
    unit_inf_scale,
)
from .quantizers import (
    FixedPointWord,
    QuantizerBudget,
    csd_recode,
    csd_vector,
    mpgbp_approximate,
    nearest_pow2_depth,
    quantize_fixed_point,
    sdl_approximate,
)
from .fbmc import (
    FbmcConfig,
    PrototypeFilter,
    analyze,
    interference_variance,
    oqam_demap,
    oqam_map,
    phydyas_prototype,
    synthesize,
)
