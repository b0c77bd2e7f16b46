"""Tooling for joint relighting and reconstruction pipelines.

Subpackages cover the distortion-free depth codec (:mod:`relightkit.inod`),
HDR illumination conditioning (:mod:`relightkit.envmap`), multi-modal latent
assembly (:mod:`relightkit.latents`), the reverse sampling harness
(:mod:`relightkit.sampling`), the evaluation protocol
(:mod:`relightkit.metrics`), file formats (:mod:`relightkit.fileio`) and the
CLI (:mod:`relightkit.cli`).
"""

from .envmap import HdrEnvMap, LdrConditionTriple, LedArray, decompose, leds_to_equirect, rotate, scale_intensity
from .errors import (
    DegenerateGeometryError,
    FileFormatError,
    NumericsError,
    RelightKitError,
    SchedulingError,
    ValidationError,
)
from .inod import (
    DepthMap,
    INodMap,
    IntrinsicsMatrix,
    NormalizationRecord,
    PointCloud,
    cutoff,
    dilate_foreground,
    encode,
    isotropic_normalize,
    project_inod,
    unproject,
    unproject_orthographic,
)
from .latents import (
    Dataset,
    ModalityId,
    ModalityTypeTable,
    TrainingModeSpec,
    apply_rope_2d,
    assemble,
    dispatch_mode,
    stack_modalities,
)
from .metrics import (
    AlignedImagePair,
    GeometryEvalReport,
    RigidTransform,
    chamfer_fscore,
    chromatic_align,
    evaluate_geometry,
    icp_align,
    normal_error,
    normalize_shared_cube,
    psnr,
    rmse,
    ssim,
)
from .sampling import (
    ConditionSet,
    NoiseSchedule,
    SamplerState,
    drop_to_zero,
    mock_vae_roundtrip,
    sample,
    seeded_noise,
)

__version__ = "0.1.0"
