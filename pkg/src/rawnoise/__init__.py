"""rawnoise: calibration, synthesis, and augmentation of raw sensor noise."""

__version__ = "0.1.0"

from .augment import AugmentResult, GainTriple, SnaConfig, augment_pair, sample_gains, shot_increments
from .container import PayloadKind, read_blob, read_container, write_blob, write_container
from .errors import (
    BinningError,
    CalibrationError,
    CalibrationFailedError,
    CapacityError,
    ChecksumError,
    ContainerError,
    CoverageError,
    DimensionError,
    DomainError,
    FormatError,
    FrameSetError,
    HeaderError,
    InputError,
    InsufficientDataError,
    PairingError,
    ProfileError,
    RankError,
    RawNoiseError,
    TruncatedError,
    VersionError,
)
from .frames import (
    BAYER_PATTERNS,
    CHANNEL_ORDER,
    PackedImage,
    RawFrame,
    SensorMeta,
    black_map,
    pack_bayer,
    subtract_black,
    unpack_bayer,
)
from .patches import Patch, PatchSpec, apply_transform, inverse_transform, sample_patches
from .ptc import PTCEstimate, estimate_gain_ptc
from .rng import make_rng
from .shading import (
    CalibrationProfile,
    DarkFrameSet,
    average_dark_frames,
    calibrate_dark_profile,
    compute_ble,
    correct_frame,
    fit_dark_shading,
    load_profile,
    reconstruct_dark_shading,
    save_profile,
)
from .synth import (
    SensorSpec,
    gaussian_fpn_maps,
    load_sensor_spec,
    sample_poisson,
    save_sensor_spec,
    simulate_dark_frame,
    simulate_flat_frame,
    synthesize_pg,
)
from .validate import (
    TestReport,
    histogram_chi2_test,
    majority_verdict,
    moment_match_test,
    ptc_linearity_test,
    residual_mean_test,
)

__all__ = [
    "__version__",
    "AugmentResult",
    "BAYER_PATTERNS",
    "BinningError",
    "CHANNEL_ORDER",
    "CalibrationError",
    "CalibrationFailedError",
    "CalibrationProfile",
    "CapacityError",
    "ChecksumError",
    "ContainerError",
    "CoverageError",
    "DarkFrameSet",
    "DimensionError",
    "DomainError",
    "FormatError",
    "FrameSetError",
    "GainTriple",
    "HeaderError",
    "InputError",
    "InsufficientDataError",
    "PTCEstimate",
    "PackedImage",
    "PairingError",
    "Patch",
    "PatchSpec",
    "PayloadKind",
    "ProfileError",
    "RankError",
    "RawFrame",
    "RawNoiseError",
    "SensorMeta",
    "SensorSpec",
    "SnaConfig",
    "TestReport",
    "TruncatedError",
    "VersionError",
    "apply_transform",
    "augment_pair",
    "average_dark_frames",
    "black_map",
    "calibrate_dark_profile",
    "compute_ble",
    "correct_frame",
    "estimate_gain_ptc",
    "fit_dark_shading",
    "gaussian_fpn_maps",
    "histogram_chi2_test",
    "inverse_transform",
    "load_profile",
    "load_sensor_spec",
    "majority_verdict",
    "make_rng",
    "moment_match_test",
    "pack_bayer",
    "ptc_linearity_test",
    "read_blob",
    "read_container",
    "reconstruct_dark_shading",
    "residual_mean_test",
    "sample_gains",
    "sample_patches",
    "sample_poisson",
    "save_profile",
    "save_sensor_spec",
    "shot_increments",
    "simulate_dark_frame",
    "simulate_flat_frame",
    "subtract_black",
    "synthesize_pg",
    "unpack_bayer",
    "write_blob",
    "write_container",
]
