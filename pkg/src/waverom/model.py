"""Encoder/decoder/approximator networks of the reduced-order surrogate.

The encoder maps a normalized field volume to a latent vector, the
decoder maps it back, and the projection approximator maps normalized
simulation parameters plus a time stamp directly to a latent vector, so
a field at any time is reconstructed as decode(approximate(p, t)) with
no time-stepping.

Encoder layout: q repetitions of [4-conv block with an additive skip ->
stride-2 conv], one more 4-conv block, flatten, linear to the latent
size. The decoder mirrors it in reverse using nearest-neighbor x2
upsampling, ending in a single-channel stride-1 conv. The approximator
is a 4-layer MLP (input, two sine-activated hidden layers, linear
output). Channel counts double per downsample, capped at 8x the base.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ValidationError
from .fdtd import FieldVolume

CONV_BLOCK_DEPTH = 4
LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class ArchitectureSpec:
    """Shapes every weight tensor is derivable from."""

    input_dims: tuple
    latent_size: int = 64
    base_channels: int = 4
    param_count: int = 2
    approx_hidden_width: int | None = None  # default max(128, 2*latent_size)

    def __post_init__(self):
        object.__setattr__(self, "input_dims", tuple(int(d) for d in self.input_dims))
        if len(self.input_dims) != 3 or min(self.input_dims) < 8:
            raise ValidationError("input_dims must be three extents, each >= 8")
        if self.latent_size <= 0 or self.base_channels <= 0 or self.param_count <= 0:
            raise ValidationError("latent_size, base_channels, param_count must be positive")
        q = self.num_downsamples
        if any(d % (2**q) for d in self.input_dims):
            raise ValidationError(
                f"input_dims {self.input_dims} must be multiples of 2^q = {2**q}"
            )

    @property
    def num_downsamples(self) -> int:
        return num_downsample_layers(self.input_dims)

    @property
    def hidden_width(self) -> int:
        if self.approx_hidden_width is not None:
            return self.approx_hidden_width
        return max(128, 2 * self.latent_size)

    def channels(self) -> list:
        """Per-level channel counts, levels 0..q (level q is the top block)."""
        c0 = self.base_channels
        return [min(c0 * 2**j, 8 * c0) for j in range(self.num_downsamples + 1)]

    def reduced_dims(self) -> tuple:
        q = self.num_downsamples
        return tuple(d // 2**q for d in self.input_dims)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_dims"] = list(self.input_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        known = set(cls.__dataclass_fields__)
        for key in d:
            if key not in known:
                raise ValidationError(f"unknown architecture key: {key!r}")
        d = dict(d)
        d["input_dims"] = tuple(d["input_dims"])
        return cls(**d)


@dataclass
class LatentCode:
    values: np.ndarray
    provenance: tuple | str = "encoded"


@dataclass
class ParamPoint:
    r: float
    n: float
    t: float

    def __post_init__(self):
        if not all(np.isfinite([self.r, self.n, self.t])) or self.t < 0:
            raise ValidationError("ParamPoint entries must be finite with t >= 0")


@dataclass
class ModelParams:
    """All learnable weights plus the spec that shapes them."""

    arch: ArchitectureSpec
    rng_seed: int
    tensors: dict  # name -> Tensor, insertion-ordered

    def encoder_tensors(self):
        return {k: v for k, v in self.tensors.items() if k.startswith("enc.")}

    def decoder_tensors(self):
        return {k: v for k, v in self.tensors.items() if k.startswith("dec.")}

    def approximator_tensors(self):
        return {k: v for k, v in self.tensors.items() if k.startswith("approx.")}

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())


def num_downsample_layers(dims) -> int:
    """Largest q with min(dims)/2^q >= 4."""
    m = min(dims)
    if m < 8:
        raise ValidationError(f"minimum input extent must be >= 8, got {m}")
    q = 0
    while m / 2 ** (q + 1) >= 4:
        q += 1
    return q


def crop_dims(grid_dims) -> tuple:
    """Largest per-axis multiples of 2^q, q taken from the raw dims."""
    q = num_downsample_layers(grid_dims)
    return tuple((d // 2**q) * 2**q for d in grid_dims)


def center_crop(data: np.ndarray, target_dims) -> np.ndarray:
    """Center-crop a 3D array; cropped margins lie inside the sponge layer."""
    slices = []
    for have, want in zip(data.shape, target_dims):
        if want > have:
            raise ValidationError(f"cannot crop axis of size {have} to {want}")
        lo = (have - want) // 2
        slices.append(slice(lo, lo + want))
    return data[tuple(slices)]


def _uniform(rng, shape, fan_in, dtype=np.float32):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def build_models(arch: ArchitectureSpec, seed: int) -> ModelParams:
    """Create all weights deterministically from the seed."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}

    def conv_param(name, cout, cin, k=3):
        tensors[f"{name}.w"] = Tensor(
            _uniform(rng, (cout, cin, k, k, k), cin * k**3), requires_grad=True
        )
        tensors[f"{name}.b"] = Tensor(
            np.zeros(cout, dtype=np.float32), requires_grad=True
        )

    def linear_param(name, fin, fout):
        tensors[f"{name}.w"] = Tensor(_uniform(rng, (fin, fout), fin), requires_grad=True)
        tensors[f"{name}.b"] = Tensor(np.zeros(fout, dtype=np.float32), requires_grad=True)

    def block_params(prefix, cin, cout):
        ch = cin
        for i in range(CONV_BLOCK_DEPTH):
            conv_param(f"{prefix}.conv{i}", cout, ch)
            ch = cout
        if cin != cout:
            conv_param(f"{prefix}.skip", cout, cin, k=1)

    q = arch.num_downsamples
    chans = arch.channels()
    rd = arch.reduced_dims()
    flat = chans[q] * int(np.prod(rd))

    # encoder
    in_ch = 1
    for j in range(q):
        block_params(f"enc.block{j}", in_ch, chans[j])
        conv_param(f"enc.down{j}", chans[j], chans[j])
        in_ch = chans[j]
    block_params("enc.top", chans[q - 1], chans[q])
    linear_param("enc.fc", flat, arch.latent_size)

    # decoder (mirror)
    linear_param("dec.fc", arch.latent_size, flat)
    block_params("dec.top", chans[q], chans[q - 1])
    for j in range(q - 1, 0, -1):
        block_params(f"dec.block{j}", chans[j], chans[j - 1])
    block_params("dec.block0", chans[0], chans[0])
    conv_param("dec.out", 1, chans[0])

    # projection approximator: (k+1) -> H -> H -> l
    h = arch.hidden_width
    linear_param("approx.fc0", arch.param_count + 1, h)
    linear_param("approx.fc1", h, h)
    linear_param("approx.fc2", h, arch.latent_size)

    return ModelParams(arch=arch, rng_seed=seed, tensors=tensors)


# ---------------------------------------------------------------------------
# forward passes (differentiable; accept and return Tensors)


def _conv(params, name, x, stride=1):
    y = ad.conv3(x, params.tensors[f"{name}.w"], stride=stride, padding="same")
    return ad.bias_add(y, params.tensors[f"{name}.b"])


def _block(params, prefix, x):
    """4 convs with LeakyReLU, plus an additive skip around the block."""
    y = x
    for i in range(CONV_BLOCK_DEPTH):
        y = ad.leaky_relu(_conv(params, f"{prefix}.conv{i}", y), LEAKY_SLOPE)
    skip = x
    if f"{prefix}.skip.w" in params.tensors:
        skip = _conv(params, f"{prefix}.skip", x)
    return ad.add(y, skip)


def encoder_forward(params: ModelParams, x: Tensor) -> Tensor:
    arch = params.arch
    q = arch.num_downsamples
    for j in range(q):
        x = _block(params, f"enc.block{j}", x)
        x = ad.leaky_relu(_conv(params, f"enc.down{j}", x, stride=2), LEAKY_SLOPE)
    x = _block(params, "enc.top", x)
    x = ad.reshape(x, (x.shape[0], -1))
    return ad.linear(x, params.tensors["enc.fc.w"], params.tensors["enc.fc.b"])


def decoder_forward(params: ModelParams, z: Tensor) -> Tensor:
    arch = params.arch
    q = arch.num_downsamples
    chans = arch.channels()
    rd = arch.reduced_dims()
    x = ad.leaky_relu(
        ad.linear(z, params.tensors["dec.fc.w"], params.tensors["dec.fc.b"]),
        LEAKY_SLOPE,
    )
    x = ad.reshape(x, (z.shape[0], chans[q]) + rd)
    x = _block(params, "dec.top", x)
    for j in range(q - 1, -1, -1):
        x = ad.upsample_nearest(x)
        x = _block(params, f"dec.block{j}", x)
    return _conv(params, "dec.out", x)  # final layer: no activation


def approximator_forward(params: ModelParams, pt: Tensor) -> Tensor:
    x = ad.sin_activation(
        ad.linear(pt, params.tensors["approx.fc0.w"], params.tensors["approx.fc0.b"])
    )
    x = ad.sin_activation(
        ad.linear(x, params.tensors["approx.fc1.w"], params.tensors["approx.fc1.b"])
    )
    return ad.linear(x, params.tensors["approx.fc2.w"], params.tensors["approx.fc2.b"])


# ---------------------------------------------------------------------------
# inference wrappers (numpy in, domain objects out)


def encode(params: ModelParams, volume: FieldVolume) -> LatentCode:
    """Latent code of one normalized field volume."""
    data = np.asarray(volume.data, dtype=np.float32)
    if data.shape != params.arch.input_dims:
        raise ValidationError(
            f"encode: volume dims {data.shape} != model input {params.arch.input_dims}"
        )
    x = Tensor(data[None, None])
    z = encoder_forward(params, x)
    return LatentCode(values=z.data[0].copy(), provenance="encoded")


def decode(params: ModelParams, code: LatentCode) -> FieldVolume:
    """Normalized field volume decoded from a latent code."""
    values = np.asarray(code.values, dtype=np.float32)
    if values.shape != (params.arch.latent_size,):
        raise ValidationError(
            f"decode: code length {values.shape} != latent size {params.arch.latent_size}"
        )
    y = decoder_forward(params, Tensor(values[None]))
    time, p = 0.0, (np.nan, np.nan)
    if isinstance(code.provenance, tuple) and len(code.provenance) == 3:
        p = code.provenance[:2]
        time = code.provenance[2]
    return FieldVolume(data=y.data[0, 0].copy(), time=time, params=p)


def approximate(params: ModelParams, point: ParamPoint, norm) -> LatentCode:
    """Latent code predicted directly from (r, n, t)."""
    vec, in_range = norm.normalize_point(point.r, point.n, point.t)
    if not in_range:
        warnings.warn(
            f"parameter point (r={point.r}, n={point.n}, t={point.t}) lies outside "
            "the training ranges; extrapolating",
            stacklevel=2,
        )
    z = approximator_forward(params, Tensor(vec[None].astype(np.float32)))
    return LatentCode(values=z.data[0].copy(), provenance=(point.r, point.n, point.t))


def reconstruct(params: ModelParams, point: ParamPoint, norm) -> FieldVolume:
    """decode(approximate(p, t)): any time point at constant cost."""
    return decode(params, approximate(params, point, norm))
