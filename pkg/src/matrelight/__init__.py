"""Reference-guided scene relighting with material-weighted WLS layer decomposition."""

from matrelight.core import (
    ImageIOError,
    MaterialError,
    PipelineError,
    RelightError,
    SizingError,
    SolverError,
    forward_diff_x,
    forward_diff_y,
    gradient_magnitude,
    gray,
    luminance,
)
from matrelight.materials import (
    MaterialMap,
    MaterialPalette,
    default_palette,
    load_material_map,
    load_palette,
    material_gray_term,
    recolor,
)
from matrelight.patchmatch import (
    NearestNeighborField,
    PatchMatchParams,
    compute_nnf,
    init_nnf,
    patch_distance,
    propagate,
    random_search,
    warp,
)
from matrelight.relight import PipelineConfig, relight, relight_with_prewarped
from matrelight.wls import (
    WlsParams,
    WlsSystem,
    build_system,
    decompose,
    energy,
    lambda_map,
    solve,
)

__version__ = "0.1.0"
