"""Surrogate quality metrics: reconstruction errors, traces, timing.

Errors are mean absolute differences on normalized fields (divided by
the training-time field scale), so magnitudes are resolution-independent
and comparable across runs. Period estimation uses the autocorrelation
function rather than a spectral peak, which stays robust on short
(tens of frames) series.
"""

from __future__ import annotations

import csv
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .fdtd import FieldVolume, courant_dt, build_medium, sponge_profile, step, FieldState
from .model import ModelParams, ParamPoint, center_crop, encode, reconstruct
from .training import NormalizationSpec


@dataclass
class ErrorRow:
    r: float
    n: float
    mean_l1: float
    per_frame: list
    mode: str  # "interpolation" | "extrapolation"


@dataclass
class ErrorReport:
    rows: list
    metadata: dict = field(default_factory=dict)

    def mean(self) -> float:
        return float(np.mean([row.mean_l1 for row in self.rows]))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "n", "mode", "mean_l1"])
            for row in self.rows:
                w.writerow([row.r, row.n, row.mode, f"{row.mean_l1:.6f}"])

    def summary(self) -> str:
        lines = [f"{len(self.rows)} simulations evaluated"]
        for row in self.rows:
            lines.append(
                f"  r={row.r:g} n={row.n:g} [{row.mode}] mean L1 = {row.mean_l1:.5f}"
            )
        return "\n".join(lines)


@dataclass
class TraceSeries:
    kind: str  # "latent-component" | "voxel"
    index: object
    values: np.ndarray
    times: np.ndarray

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "value"])
            for t, v in zip(self.times, self.values):
                w.writerow([f"{t:.6f}", f"{v:.8g}"])


def reconstruction_error(
    truth,
    params: ModelParams,
    point_params,
    norm: NormalizationSpec,
    mode="interpolation",
    predictions=None,
) -> ErrorRow:
    """Per-frame mean-absolute error between normalized truth and G(F(p,t)).

    ``predictions`` may supply precomputed volumes (e.g. the truth itself
    for the zero-error identity); otherwise each frame is reconstructed.
    """
    r, n = point_params
    per_frame = []
    for i, vol in enumerate(truth):
        t = vol.time
        ref = center_crop(np.asarray(vol.data), params.arch.input_dims) / norm.field_scale
        if predictions is not None:
            pred = center_crop(np.asarray(predictions[i].data), params.arch.input_dims)
            pred = pred / norm.field_scale
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                pred = reconstruct(params, ParamPoint(r, n, t), norm).data
        per_frame.append(float(np.mean(np.abs(ref - pred))))
    return ErrorRow(r=r, n=n, mean_l1=float(np.mean(per_frame)), per_frame=per_frame, mode=mode)


def _load_truth(manifest, entry):
    from . import formats

    return [formats.read_volume(manifest.volume_path(entry, i)) for i in range(len(entry.files))]


def evaluate_interpolation(params, norm, manifest) -> ErrorReport:
    """One row per held-out simulation lying strictly inside the hull."""
    rows = []
    for e in manifest.entries:
        if not norm.in_hull(e.r, e.n):
            raise ValidationError(
                f"({e.r}, {e.n}) lies outside the training ranges; "
                "it belongs to extrapolation"
            )
        rows.append(
            reconstruction_error(_load_truth(manifest, e), params, (e.r, e.n), norm, "interpolation")
        )
    return ErrorReport(rows=rows, metadata={"mode": "interpolation"})


def evaluate_extrapolation(params, norm, manifest) -> ErrorReport:
    """Rows for out-of-range simulations; each must exceed some bound."""
    rows = []
    for e in manifest.entries:
        if norm.in_hull(e.r, e.n):
            raise ValidationError(
                f"({e.r}, {e.n}) lies inside the training ranges; "
                "it belongs to interpolation"
            )
        rows.append(
            reconstruction_error(_load_truth(manifest, e), params, (e.r, e.n), norm, "extrapolation")
        )
    return ErrorReport(rows=rows, metadata={"mode": "extrapolation"})


def latent_trace(params, norm, volumes, component_index) -> TraceSeries:
    """Evolution of one latent component across a simulation's frames."""
    if not 0 <= component_index < params.arch.latent_size:
        raise ValidationError(f"latent component {component_index} out of range")
    values = []
    times = []
    for vol in volumes:
        cropped = center_crop(np.asarray(vol.data), params.arch.input_dims) / norm.field_scale
        code = encode(params, FieldVolume(data=cropped, time=vol.time, params=vol.params))
        values.append(float(code.values[component_index]))
        times.append(vol.time)
    return TraceSeries(
        kind="latent-component",
        index=component_index,
        values=np.asarray(values),
        times=np.asarray(times),
    )


def voxel_trace(volumes, coordinate) -> TraceSeries:
    """Raw field value at one voxel across frames."""
    cx, cy, cz = coordinate
    shape = np.asarray(volumes[0].data).shape
    if not (0 <= cx < shape[0] and 0 <= cy < shape[1] and 0 <= cz < shape[2]):
        raise ValidationError(f"voxel {coordinate} out of bounds for {shape}")
    values = np.asarray([float(v.data[cx, cy, cz]) for v in volumes])
    times = np.asarray([v.time for v in volumes])
    return TraceSeries(kind="voxel", index=tuple(coordinate), values=values, times=times)


def probe_voxel(config) -> tuple:
    """Default trace voxel: on-axis between the source-side interior edge
    and the sphere surface, so the wave arrives early and oscillates for
    most of the run even at short durations."""
    half = config.cell_extent / 2.0
    x = -(config.sphere_radius + (half - config.boundary_width)) / 2.0
    i = int(round((x + half) * config.resolution))
    mid = config.grid_points // 2
    return (i, mid, mid)


def dominant_period(series: TraceSeries) -> float:
    """Period from the first positive autocorrelation peak, parabola-refined."""
    v = np.asarray(series.values, dtype=np.float64)
    t = np.asarray(series.times, dtype=np.float64)
    if v.size < 8 or np.std(v) == 0:
        raise ValidationError("series is constant or too short for a period estimate")
    dt = float(np.median(np.diff(t)))
    x = v - v.mean()
    n = x.size
    ac = np.correlate(x, x, mode="full")[n - 1 :]
    # unbiased estimate: the raw sum has fewer terms at larger lags, which
    # tapers the curve and can hide the peak on short series
    ac /= np.arange(n, 0, -1, dtype=np.float64)
    ac /= ac[0]
    # large lags of the unbiased estimate are noisy; keep lags <= 2n/3
    ac = ac[: max(3, (2 * n) // 3)]
    # skip the zero-lag lobe: wait until the autocorrelation dips below zero
    lag = 1
    while lag < ac.size and ac[lag] > 0:
        lag += 1
    # first local maximum with positive correlation after the dip
    best = None
    for i in range(lag + 1, ac.size - 1):
        if ac[i] > 0 and ac[i] >= ac[i - 1] and ac[i] >= ac[i + 1]:
            best = i
            break
    if best is None:
        raise ValidationError("no periodic structure found in series")
    y0, y1, y2 = ac[best - 1], ac[best], ac[best + 1]
    denom = y0 - 2 * y1 + y2
    offset = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
    return (best + float(np.clip(offset, -0.5, 0.5))) * dt


def timing_comparison(params, norm, config, point: ParamPoint, repeats=5) -> dict:
    """Median wall time of one FDTD snapshot interval vs one reconstruct."""
    medium = build_medium(config)
    damping = sponge_profile(config)
    dt = courant_dt(config)
    steps_per_frame = max(1, int(round(config.snapshot_interval / dt)))
    shape = (config.grid_points,) * 3
    state = FieldState(
        e_curr=np.zeros(shape, dtype=np.float32),
        e_prev=np.zeros(shape, dtype=np.float32),
        step_index=0,
        dt=dt,
    )
    # warm-up
    state = step(state, medium, damping, config)
    fdtd_times = []
    for _ in range(repeats):
        t0 = _time.perf_counter()
        for _ in range(steps_per_frame):
            state = step(state, medium, damping, config)
        fdtd_times.append(_time.perf_counter() - t0)

    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        reconstruct(params, point, norm)  # warm-up
        sur_times = []
        for _ in range(repeats):
            t0 = _time.perf_counter()
            reconstruct(params, point, norm)
            sur_times.append(_time.perf_counter() - t0)

    fdtd_s = float(np.median(fdtd_times))
    sur_s = float(np.median(sur_times))
    return {
        "fdtd_seconds_per_frame": fdtd_s,
        "surrogate_seconds_per_frame": sur_s,
        "ratio": fdtd_s / sur_s if sur_s > 0 else float("inf"),
    }
