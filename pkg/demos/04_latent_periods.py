"""Latent-space dynamics: the wave period survives compression.

Encodes every frame of one training simulation, extracts per-component
latent traces, and compares their dominant periods with the period of a
raw voxel trace. A sinusoidally driven field oscillates at the source
period (1.0 time units here); a faithful latent space shows the same
rhythm.

Run 02_train_surrogate.py first.
"""

import os

import numpy as np

from waverom.evaluation import dominant_period, latent_trace, voxel_trace
from waverom.formats import read_volume
from waverom.training import DatasetManifest, load_checkpoint

HERE = os.path.dirname(__file__)
OUT = os.path.join(HERE, "out", "train")
params, norm = load_checkpoint(os.path.join(OUT, "surrogate.ckpt"))
manifest = DatasetManifest.load(os.path.join(OUT, "dataset", "manifest.json"))

entry = manifest.entries[0]
volumes = [read_volume(manifest.volume_path(entry, i)) for i in range(len(entry.files))]
steady = [v for v in volumes if v.time >= 0.75]  # after ramp-up and arrival
print(f"simulation (r={entry.r}, n={entry.n}), {len(steady)} steady frames")

# raw voxel on the source-sphere axis
mid = volumes[0].data.shape[1] // 2
probe = (mid // 2, mid, mid)
vox = voxel_trace(steady, probe)
try:
    vox_period = dominant_period(vox)
    print(f"voxel {probe} period: {vox_period:.3f} (source period 1.0)")
except Exception as e:
    vox_period = None
    print(f"voxel {probe}: {e}")

# latent components, ranked by how close their period is to the voxel's
rows = []
for c in range(params.arch.latent_size):
    tr = latent_trace(params, norm, steady, c)
    try:
        rows.append((c, dominant_period(tr), np.ptp(tr.values)))
    except Exception:
        continue  # flat or aperiodic component

print(f"{len(rows)} of {params.arch.latent_size} components have a well-defined period")
rows.sort(key=lambda r: abs(r[1] - 1.0))
for c, period, swing in rows[:8]:
    print(f"  component {c:2d}: period {period:.3f}, swing {swing:.3f}")
