"""Certified lower bounds for L1 norms of exponential sums over finite
integer sets, with exact lattice bookkeeping, rigorous grid quadrature, and
replayable certificates."""

from .cdp import (
    CdpCertificate,
    SelectionState,
    VerifyReport,
    bound_1d_exponential,
    bound_2d,
    cdp_iterate,
    choose_t,
    davenport_select,
    feasibility_gauge,
    pichorides_lhs,
    verify_certificate,
    verify_selection,
)
from .config import LIMITS
from .errors import BudgetError, LabError, ValidationError, VerificationError
from .freiman import (
    FreimanMap,
    bound_3d_via_embedding,
    canonical_embedding,
    choose_k_reference,
    explicit_map,
    image_set,
    verify_freiman,
)
from .grid import GridFunction, evaluate_fft, evaluate_naive, inner_product
from .lattice import (
    LatticeSet,
    gen_ap,
    gen_box_progression,
    gen_cube,
    gen_lacunary,
    gen_prime_residue,
    gen_random_subset,
    planar_slices,
    rows,
    set_from_dict,
    set_to_dict,
    structure_profile,
    translate_to_positive,
)
from .norms import NormEstimate, l1_estimate, l2_exact, linf_exact
from .testfns import BaseTestFn, exponential_basis, floor_check, row_sign_basis

__version__ = "0.1.0"

__all__ = [
    "BaseTestFn",
    "BudgetError",
    "CdpCertificate",
    "FreimanMap",
    "GridFunction",
    "LIMITS",
    "LabError",
    "LatticeSet",
    "NormEstimate",
    "SelectionState",
    "ValidationError",
    "VerificationError",
    "VerifyReport",
    "bound_1d_exponential",
    "bound_2d",
    "bound_3d_via_embedding",
    "canonical_embedding",
    "cdp_iterate",
    "choose_k_reference",
    "choose_t",
    "davenport_select",
    "evaluate_fft",
    "evaluate_naive",
    "explicit_map",
    "exponential_basis",
    "feasibility_gauge",
    "floor_check",
    "gen_ap",
    "gen_box_progression",
    "gen_cube",
    "gen_lacunary",
    "gen_prime_residue",
    "gen_random_subset",
    "image_set",
    "inner_product",
    "l1_estimate",
    "l2_exact",
    "linf_exact",
    "pichorides_lhs",
    "planar_slices",
    "rows",
    "row_sign_basis",
    "set_from_dict",
    "set_to_dict",
    "structure_profile",
    "translate_to_positive",
    "verify_certificate",
    "verify_freiman",
    "verify_selection",
]
