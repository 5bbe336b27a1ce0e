"""Train the two-stage surrogate on a small parameter grid.

Stage 1 compresses field volumes with a convolutional autoencoder.
Stage 2 trains the projection approximator to map (radius, index, time)
directly to a latent code, so fields can later be reconstructed without
time-stepping.

This demo uses a reduced cell (25^3 grid) and short schedules so it
finishes in about a minute. The desk-scale run (48^3 crop, 2000 + 20000
iterations) is what the acceptance suite exercises; see the README.
"""

import os

import numpy as np

from waverom import SimulationConfig
from waverom.model import ArchitectureSpec, crop_dims
from waverom.training import (
    TrainConfig,
    build_dataset,
    encode_dataset,
    fit_normalization,
    save_checkpoint,
    save_latents,
    train_approximator,
    train_autoencoder,
)

OUT = os.path.join(os.path.dirname(__file__), "out", "train")
os.makedirs(OUT, exist_ok=True)

sim = SimulationConfig(
    sphere_radius=1.0,       # overridden per grid point below
    sphere_index=1.1,
    cell_extent=6.0,
    resolution=4,
    boundary_width=1.0,
    source_position=-2.0,
    source_size=(0.0, 2.0, 2.0),
    snapshot_interval=0.25,
    duration=4.0,
)
grid = [(r, n) for r in (1.0, 1.5) for n in (1.1, 1.3)]
manifest = build_dataset(grid, sim, os.path.join(OUT, "dataset"))
print(f"dataset: {len(manifest.entries)} simulations x {len(manifest.entries[0].files)} frames")

norm = fit_normalization(manifest)
print(f"field scale {norm.field_scale:.3f}, ranges {norm.param_ranges}")

arch = ArchitectureSpec(
    input_dims=crop_dims(manifest.grid_dims),  # 25^3 -> 24^3
    latent_size=16,
    base_channels=2,
)

params, norm, ae_losses = train_autoencoder(
    manifest, arch, TrainConfig(learning_rate=1e-3, num_iterations=300, batch_size=4), norm=norm
)
print(f"autoencoder L1: {np.mean(ae_losses[:10]):.4f} -> {np.mean(ae_losses[-10:]):.4f}")

codes, points, labels = encode_dataset(manifest, params, norm)
save_latents(os.path.join(OUT, "latents.json"), codes, points, labels)
print(f"encoded {codes.shape[0]} frames to latent size {codes.shape[1]}")

params, proj_losses = train_approximator(
    codes, points, params, TrainConfig(learning_rate=1e-3, num_iterations=2000, batch_size=16)
)
print(f"approximator L2: {np.mean(proj_losses[:50]):.5f} -> {np.mean(proj_losses[-50:]):.5f}")

ckpt = os.path.join(OUT, "surrogate.ckpt")
save_checkpoint(params, norm, ckpt)
print(f"checkpoint written to {ckpt}")
