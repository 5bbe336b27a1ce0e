"""Dataset assembly, normalization, and sequential two-stage training.

The autoencoder is trained first on normalized field volumes (mean-L1
loss); latent codes of every training frame are then precomputed and the
projection approximator is trained on those codes alone (mean-squared
loss). The approximator never touches raw volumes.

One "iteration" is one optimizer update on one mini-batch. Fixed seeds
with single-threaded loading give identical loss logs and final weights.
"""

from __future__ import annotations

import json
import os
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import formats
from .autodiff import AdamState, Tensor, adam_step
from .errors import NumericalError, SpecMismatchError, ValidationError
from .fdtd import SimulationConfig, run_simulation, snapshot_times
from .model import (
    ArchitectureSpec,
    ModelParams,
    build_models,
    center_crop,
    decoder_forward,
    encoder_forward,
    approximator_forward,
)

DEFAULT_AE_LR = 1e-4
DEFAULT_PROJ_LR = 1e-3


@dataclass
class TrainConfig:
    learning_rate: float
    num_iterations: int
    batch_size: int
    seed: int = 0
    log_interval: int = 50

    def __post_init__(self):
        if min(self.learning_rate, self.num_iterations, self.batch_size) <= 0:
            raise ValidationError("TrainConfig values must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        for key in d:
            if key not in known:
                raise ValidationError(f"unknown training config key: {key!r}")
        return cls(**d)


@dataclass
class NormalizationSpec:
    """Global field scale plus per-parameter [-1, 1] mapping ranges."""

    field_scale: float
    param_ranges: dict  # {"r": (lo, hi), "n": (lo, hi), "t": (lo, hi)}

    def __post_init__(self):
        if self.field_scale <= 0:
            raise ValidationError("field_scale must be positive")
        for key, (lo, hi) in self.param_ranges.items():
            if not hi > lo:
                raise ValidationError(f"degenerate normalization range for {key!r}")

    def normalize_point(self, r, n, t):
        """(r, n, t) -> [-1, 1]^3 vector plus an in-range flag."""
        vec = []
        for key, val in (("r", r), ("n", n), ("t", t)):
            lo, hi = self.param_ranges[key]
            vec.append(2.0 * (val - lo) / (hi - lo) - 1.0)
        vec = np.asarray(vec, dtype=np.float64)
        return vec, bool(np.all(np.abs(vec) <= 1.0 + 1e-9))

    def in_hull(self, r, n) -> bool:
        _, ok = self.normalize_point(r, n, self.param_ranges["t"][0])
        return ok

    def to_dict(self):
        return {
            "field_scale": self.field_scale,
            "param_ranges": {k: list(v) for k, v in self.param_ranges.items()},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            field_scale=d["field_scale"],
            param_ranges={k: tuple(v) for k, v in d["param_ranges"].items()},
        )


@dataclass
class SimEntry:
    r: float
    n: float
    directory: str
    files: list  # [(time, relative path), ...]


@dataclass
class DatasetManifest:
    grid_dims: tuple
    snapshot_interval: float
    duration: float
    sim_config: dict
    entries: list
    base_dir: str = "."

    def frame_count(self) -> int:
        return sum(len(e.files) for e in self.entries)

    def volume_path(self, entry: SimEntry, idx: int) -> str:
        return os.path.join(self.base_dir, entry.files[idx][1])

    def save(self, path):
        doc = {
            "grid_dims": list(self.grid_dims),
            "snapshot_interval": self.snapshot_interval,
            "duration": self.duration,
            "sim_config": self.sim_config,
            "entries": [
                {
                    "r": e.r,
                    "n": e.n,
                    "directory": e.directory,
                    "files": [[t, p] for t, p in e.files],
                }
                for e in self.entries
            ],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path) as fh:
            doc = json.load(fh)
        for key in ("grid_dims", "snapshot_interval", "duration", "sim_config", "entries"):
            if key not in doc:
                raise ValidationError(f"manifest missing key: {key!r}")
        entries = [
            SimEntry(
                r=e["r"],
                n=e["n"],
                directory=e["directory"],
                files=[(t, p) for t, p in e["files"]],
            )
            for e in doc["entries"]
        ]
        dims = {tuple(doc["grid_dims"])}
        if len(dims) != 1:
            raise ValidationError("manifest entries disagree on grid dims")
        seen = set()
        for e in entries:
            if (e.r, e.n) in seen:
                raise ValidationError(f"duplicate parameter grid entry ({e.r}, {e.n})")
            seen.add((e.r, e.n))
        return cls(
            grid_dims=tuple(doc["grid_dims"]),
            snapshot_interval=doc["snapshot_interval"],
            duration=doc["duration"],
            sim_config=doc["sim_config"],
            entries=entries,
            base_dir=os.path.dirname(os.path.abspath(path)),
        )


def build_dataset(param_grid, sim_config: SimulationConfig, out_dir) -> DatasetManifest:
    """Run (or resume) one simulation per (r, n), writing EVF volumes."""
    os.makedirs(out_dir, exist_ok=True)
    times = snapshot_times(sim_config)
    entries = []
    for r, n in param_grid:
        cfg = SimulationConfig.from_dict(
            {**sim_config.to_dict(), "sphere_radius": r, "sphere_index": n}
        )
        dirname = f"sim_r{r:g}_n{n:g}"
        sim_dir = os.path.join(out_dir, dirname)
        os.makedirs(sim_dir, exist_ok=True)
        files = [
            (float(t), os.path.join(dirname, f"frame_{k:04d}.evf"))
            for k, t in enumerate(times)
        ]
        if not all(os.path.exists(os.path.join(out_dir, p)) for _, p in files):
            volumes = run_simulation(cfg)
            for (_, rel), vol in zip(files, volumes):
                formats.write_volume(vol, os.path.join(out_dir, rel))
        entries.append(SimEntry(r=r, n=n, directory=dirname, files=files))
    manifest = DatasetManifest(
        grid_dims=(cfg.grid_points,) * 3,
        snapshot_interval=sim_config.snapshot_interval,
        duration=sim_config.duration,
        sim_config=sim_config.to_dict(),
        entries=entries,
        base_dir=os.path.abspath(out_dir),
    )
    manifest.save(os.path.join(out_dir, "manifest.json"))
    return manifest


def fit_normalization(manifest: DatasetManifest) -> NormalizationSpec:
    """Max-abs field scale over all volumes plus parameter/time ranges."""
    if not manifest.entries:
        raise ValidationError("cannot fit normalization on an empty manifest")
    scale = 0.0
    for e in manifest.entries:
        for i in range(len(e.files)):
            vol = formats.read_volume(manifest.volume_path(e, i))
            scale = max(scale, float(np.max(np.abs(vol.data))))
    rs = [e.r for e in manifest.entries]
    ns = [e.n for e in manifest.entries]
    return NormalizationSpec(
        field_scale=scale,
        param_ranges={
            "r": (min(rs), max(rs)),
            "n": (min(ns), max(ns)),
            "t": (0.0, manifest.duration),
        },
    )


class VolumeCache:
    """LRU cache of cropped, normalized float32 volumes, byte-budgeted."""

    def __init__(self, manifest, norm, target_dims, budget_bytes=2 << 30):
        self.manifest = manifest
        self.norm = norm
        self.target_dims = tuple(target_dims)
        self.budget = budget_bytes
        self._cache = OrderedDict()
        self._bytes = 0
        self.index = [
            (e, i) for e in manifest.entries for i in range(len(e.files))
        ]

    def __len__(self):
        return len(self.index)

    def point(self, k):
        e, i = self.index[k]
        return e.r, e.n, e.files[i][0]

    def volume(self, k) -> np.ndarray:
        e, i = self.index[k]
        key = (id(e), i)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        vol = formats.read_volume(self.manifest.volume_path(e, i))
        data = (
            center_crop(vol.data, self.target_dims).astype(np.float32)
            / self.norm.field_scale
        )
        self._cache[key] = data
        self._bytes += data.nbytes
        while self._bytes > self.budget and len(self._cache) > 1:
            _, old = self._cache.popitem(last=False)
            self._bytes -= old.nbytes
        return data


class _EpochSampler:
    """Uniform over all (simulation, frame) pairs, seeded reshuffle per epoch."""

    def __init__(self, n, seed):
        self.n = n
        self.rng = np.random.default_rng(seed)
        self._order = []

    def take(self, count):
        out = []
        while len(out) < count:
            if not self._order:
                self._order = list(self.rng.permutation(self.n))
            out.append(self._order.pop())
        return out


def _train_loop(forward_loss, params_list, cfg: TrainConfig, tag):
    state = AdamState.for_params(params_list, cfg.learning_rate)
    losses = []
    for it in range(cfg.num_iterations):
        loss = forward_loss(it)
        value = float(loss.data)
        if not np.isfinite(value):
            raise NumericalError(f"{tag}: non-finite loss at iteration {it}")
        for p in params_list:
            p.zero_grad()
        loss.backward()
        grads = [
            p.grad if p.grad is not None else np.zeros_like(p.data)
            for p in params_list
        ]
        adam_step(params_list, grads, state)
        losses.append(value)
    return losses


def train_autoencoder(
    manifest: DatasetManifest,
    arch: ArchitectureSpec,
    cfg: TrainConfig,
    norm: NormalizationSpec | None = None,
    cache_budget=2 << 30,
):
    """Minimize mean L1 reconstruction error with Adam.

    Returns (ModelParams, NormalizationSpec, per-iteration loss list).
    """
    if norm is None:
        norm = fit_normalization(manifest)
    if any(w > g for w, g in zip(arch.input_dims, manifest.grid_dims)):
        raise ValidationError(
            f"architecture input {arch.input_dims} exceeds grid {manifest.grid_dims}"
        )
    cache = VolumeCache(manifest, norm, arch.input_dims, cache_budget)
    params = build_models(arch, cfg.seed)
    trainable = list(params.encoder_tensors().values()) + list(
        params.decoder_tensors().values()
    )
    sampler = _EpochSampler(len(cache), cfg.seed)

    def forward_loss(_it):
        idxs = sampler.take(cfg.batch_size)
        batch = np.stack([cache.volume(k) for k in idxs])[:, None]
        x = Tensor(batch)
        y = decoder_forward(params, encoder_forward(params, x))
        return ad.l1_loss(y, x)

    losses = _train_loop(forward_loss, trainable, cfg, "autoencoder")
    return params, norm, losses


def encode_dataset(manifest: DatasetManifest, params: ModelParams, norm: NormalizationSpec):
    """Precompute latent codes for every (simulation, frame) pair.

    Returns (codes (M, l) float32, points (M, 3) normalized float32,
    labels list of (r, n, t)).
    """
    cache = VolumeCache(manifest, norm, params.arch.input_dims, budget_bytes=1 << 26)
    codes = []
    points = []
    labels = []
    for k in range(len(cache)):
        x = Tensor(cache.volume(k)[None, None])
        z = encoder_forward(params, x)
        codes.append(z.data[0].copy())
        r, n, t = cache.point(k)
        vec, _ = norm.normalize_point(r, n, t)
        points.append(vec.astype(np.float32))
        labels.append((r, n, t))
    return np.stack(codes), np.stack(points), labels


def save_latents(path, codes, points, labels):
    """JSON metadata plus a raw float32 little-endian binary sidecar."""
    bin_path = path + ".bin"
    blob = np.ascontiguousarray(codes.astype("<f4")).tobytes() + np.ascontiguousarray(
        points.astype("<f4")
    ).tobytes()
    with open(bin_path, "wb") as fh:
        fh.write(blob)
    with open(path, "w") as fh:
        json.dump(
            {
                "count": int(codes.shape[0]),
                "latent_size": int(codes.shape[1]),
                "point_size": int(points.shape[1]),
                "sidecar": os.path.basename(bin_path),
                "labels": [list(l) for l in labels],
            },
            fh,
        )


def load_latents(path):
    with open(path) as fh:
        meta = json.load(fh)
    m, l, p = meta["count"], meta["latent_size"], meta["point_size"]
    with open(os.path.join(os.path.dirname(os.path.abspath(path)), meta["sidecar"]), "rb") as fh:
        blob = fh.read()
    need = (m * l + m * p) * 4
    if len(blob) != need:
        raise ValidationError(f"{path}: latent sidecar has {len(blob)} bytes, expected {need}")
    codes = np.frombuffer(blob[: m * l * 4], dtype="<f4").reshape(m, l).copy()
    points = np.frombuffer(blob[m * l * 4 :], dtype="<f4").reshape(m, p).copy()
    labels = [tuple(x) for x in meta["labels"]]
    return codes, points, labels


def train_approximator(codes, points, params: ModelParams, cfg: TrainConfig):
    """Minimize mean-squared latent error over (p, t) -> code pairs."""
    if codes.shape[0] == 0:
        raise ValidationError("latent dataset is empty")
    if codes.shape[1] != params.arch.latent_size:
        raise ValidationError(
            f"latent size {codes.shape[1]} != model latent {params.arch.latent_size}"
        )
    trainable = list(params.approximator_tensors().values())
    sampler = _EpochSampler(codes.shape[0], cfg.seed)

    def forward_loss(_it):
        idxs = sampler.take(cfg.batch_size)
        x = Tensor(points[idxs])
        target = Tensor(codes[idxs])
        return ad.l2_loss(approximator_forward(params, x), target)

    losses = _train_loop(forward_loss, trainable, cfg, "approximator")
    return params, losses


# ---------------------------------------------------------------------------
# checkpointing


def save_checkpoint(params: ModelParams, norm: NormalizationSpec, path) -> None:
    formats.write_checkpoint(
        path,
        params.arch.to_dict(),
        norm.to_dict(),
        params.rng_seed,
        {name: t.data for name, t in params.tensors.items()},
    )


def load_checkpoint(path, expected_latent_size=None):
    """Returns (ModelParams, NormalizationSpec); validates stored shapes."""
    arch_d, norm_d, seed, tensors = formats.read_checkpoint(path)
    arch = ArchitectureSpec.from_dict(arch_d)
    if expected_latent_size is not None and arch.latent_size != expected_latent_size:
        raise SpecMismatchError(
            f"checkpoint latent size {arch.latent_size} != requested {expected_latent_size}"
        )
    params = build_models(arch, seed)
    if set(tensors) != set(params.tensors):
        raise SpecMismatchError("checkpoint tensor names do not match the architecture")
    for name, t in params.tensors.items():
        stored = tensors[name]
        if stored.shape != t.data.shape:
            raise SpecMismatchError(
                f"checkpoint tensor {name}: shape {stored.shape} != derived {t.data.shape}"
            )
        t.data = stored.astype(np.float32)
    return params, NormalizationSpec.from_dict(norm_d)
