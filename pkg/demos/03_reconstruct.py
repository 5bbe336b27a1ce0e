"""Reconstruct fields at arbitrary time points, without time-stepping.

Loads the checkpoint written by 02_train_surrogate.py, fast-forwards to
any (radius, index, time) in one decoder pass, and compares against a
fresh FDTD ground-truth run. Also shows that reconstruction cost does
not depend on the requested time point.

Run 02_train_surrogate.py first.
"""

import os
import time

import numpy as np

from waverom import SimulationConfig, run_simulation
from waverom.evaluation import reconstruction_error
from waverom.model import ParamPoint, center_crop, reconstruct
from waverom.training import load_checkpoint

HERE = os.path.dirname(__file__)
CKPT = os.path.join(HERE, "out", "train", "surrogate.ckpt")
params, norm = load_checkpoint(CKPT)
print(f"loaded {params.parameter_count()} weights, input {params.arch.input_dims}")

# ground truth at an unseen interior parameter point
sim = SimulationConfig(
    sphere_radius=1.25,      # between the training radii 1.0 and 1.5
    sphere_index=1.2,        # between the training indices 1.1 and 1.3
    cell_extent=6.0,
    resolution=4,
    boundary_width=1.0,
    source_position=-2.0,
    source_size=(0.0, 2.0, 2.0),
    snapshot_interval=0.25,
    duration=4.0,
)
truth = run_simulation(sim)
row = reconstruction_error(truth, params, (sim.sphere_radius, sim.sphere_index), norm)
# the toy 2x2 parameter grid makes interpolation coarse; the 3x3 desk grid
# in the acceptance suite does noticeably better
print(f"interpolation point ({sim.sphere_radius}, {sim.sphere_index}): "
      f"mean normalized L1 = {row.mean_l1:.4f}")

# fast-forward property: the cost of t = 0.25 equals the cost of t = 4.0
for t in (0.25, 4.0):
    reps = []
    for _ in range(5):
        t0 = time.perf_counter()
        vol = reconstruct(params, ParamPoint(1.25, 1.2, t), norm)
        reps.append(time.perf_counter() - t0)
    print(f"reconstruct t = {t}: {np.median(reps) * 1e3:.1f} ms")

# side-by-side peek at one frame (center row of the mid-plane)
frame = truth[12]  # t = 3.0
ref = center_crop(frame.data, params.arch.input_dims) / norm.field_scale
pred = reconstruct(params, ParamPoint(1.25, 1.2, frame.time), norm).data
mid = ref.shape[0] // 2
np.set_printoptions(precision=2, suppress=True)
print("truth    :", ref[mid, mid, ::3])
print("surrogate:", pred[mid, mid, ::3])
