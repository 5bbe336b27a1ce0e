"""waverom: reduced-order surrogate pipeline for 3D scalar wave fields.

Generate ground truth with an FDTD solver, compress snapshots with a
convolutional autoencoder, learn a direct (parameters, time) -> latent
map, and reconstruct field volumes at any time point without
time-stepping.
"""

from .fdtd import (
    FieldState,
    FieldVolume,
    MediumGrid,
    DampingGrid,
    SimulationConfig,
    build_medium,
    courant_dt,
    run_simulation,
    snapshot_times,
    source_amplitude,
    sponge_profile,
    step,
)
from .model import (
    ArchitectureSpec,
    LatentCode,
    ModelParams,
    ParamPoint,
    build_models,
    center_crop,
    crop_dims,
    decode,
    encode,
    approximate,
    num_downsample_layers,
    reconstruct,
)
from .training import (
    DatasetManifest,
    NormalizationSpec,
    TrainConfig,
    build_dataset,
    encode_dataset,
    fit_normalization,
    load_checkpoint,
    save_checkpoint,
    train_approximator,
    train_autoencoder,
)
from .evaluation import (
    ErrorReport,
    TraceSeries,
    dominant_period,
    evaluate_extrapolation,
    evaluate_interpolation,
    latent_trace,
    reconstruction_error,
    timing_comparison,
    voxel_trace,
)
from .formats import export_slice, read_volume, write_volume

__version__ = "0.1.0"
