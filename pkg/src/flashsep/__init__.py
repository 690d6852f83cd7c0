"""Flash/no-flash reflection separation toolkit."""

from .errors import (
    ConfigError,
    ContractError,
    DataError,
    FlashSepError,
    FormatError,
    StageError,
)
from .rawcore import (
    CaptureMeta,
    CFAPattern,
    Illumination,
    RawFrame,
    delinearize,
    linearize,
    saturation_mask,
)
from .isp import (
    GammaMode,
    IspConfig,
    StageSet,
    color_correct,
    demosaic_bilinear,
    gamma_decode,
    gamma_encode,
    run_isp,
    to_grayscale,
    white_balance,
)
from .flashcue import (
    FlashOnlyResult,
    FlashPair,
    PairSpace,
    compute_flash_only,
    flash_only_to_rgb,
    reconstruct_flash,
)
from .geometry import (
    CameraMotion,
    depth_reproject_flow,
    estimate_homography,
    find_correspondences,
    homography_to_flow,
    invert_flow,
    warp_by_flow,
)
from .synth import (
    SynthRecipe,
    SynthSample,
    compose_aligned,
    emit_dataset,
    prepare_source,
    synth_misaligned_depth,
    synth_misaligned_homography,
)
from .pipeline import (
    AlignSpec,
    Estimator,
    PipelineResult,
    align_preprocess,
    l2_loss,
    run_base,
    run_two_stage,
)
from .metrics import EvalReport, evaluate_manifest, psnr, ssim
from .formats import (
    read_lfr,
    read_pgm,
    read_ppm,
    read_raw_frame,
    write_lfr,
    write_pgm,
    write_ppm,
    write_raw_frame,
)

__version__ = "0.1.0"
