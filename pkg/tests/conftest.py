"""Shared fixtures: small simulation configs and synthetic datasets."""

import numpy as np
import pytest

from waverom import SimulationConfig
from waverom.fdtd import FieldVolume
from waverom.formats import write_volume
from waverom.training import DatasetManifest, SimEntry


@pytest.fixture
def tiny_config():
    """25^3 grid, short run: fast enough for per-test simulation."""
    return SimulationConfig(
        sphere_radius=1.5,
        sphere_index=1.2,
        cell_extent=6.0,
        resolution=4,
        boundary_width=1.0,
        source_position=-2.0,
        source_size=(0.0, 2.0, 2.0),
        snapshot_interval=0.25,
        duration=2.0,
    )


def make_blob_volume(rng, dims, t):
    """Gaussian blob with random center/width, normalized to max 1."""
    axes = [np.linspace(-1, 1, d) for d in dims]
    x, y, z = np.meshgrid(*axes, indexing="ij", sparse=True)
    cx, cy, cz = rng.uniform(-0.5, 0.5, size=3)
    w = rng.uniform(0.2, 0.5)
    data = np.exp(-((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2) / w**2)
    data /= data.max()
    return FieldVolume(data=data.astype(np.float32), time=t, params=(1.0, 1.0))


@pytest.fixture
def blob_manifest(tmp_path):
    """Synthetic 16^3 dataset: 2 parameter points x 4 frames of blobs."""
    rng = np.random.default_rng(7)
    entries = []
    times = [0.0, 0.5, 1.0, 1.5]
    for r, n in [(1.0, 1.1), (2.0, 1.3)]:
        d = tmp_path / f"sim_r{r:g}_n{n:g}"
        d.mkdir()
        files = []
        for k, t in enumerate(times):
            vol = make_blob_volume(rng, (16, 16, 16), t)
            vol.params = (r, n)
            rel = f"{d.name}/frame_{k:04d}.evf"
            write_volume(vol, tmp_path / rel)
            files.append((t, rel))
        entries.append(SimEntry(r=r, n=n, directory=d.name, files=files))
    return DatasetManifest(
        grid_dims=(16, 16, 16),
        snapshot_interval=0.5,
        duration=1.5,
        sim_config={"sphere_radius": 1.0, "sphere_index": 1.1},
        entries=entries,
        base_dir=str(tmp_path),
    )
