"""Minimal reverse-mode automatic differentiation on numpy buffers.

Provides exactly the operations the surrogate networks need: 3D
convolution (stride 1 or 2, same/valid padding), nearest-neighbor
upsampling, affine layers, LeakyReLU, sine, L1/L2 losses, and Adam.
Execution is eager; each op records a backward closure on the produced
tensor, and ``Tensor.backward`` walks the tape in reverse topological
order. Gradients accumulate: running backward twice doubles them.

Tensors are at most 5-dimensional, laid out (batch, channels, depth,
height, width). Training runs in float32; float64 is used for
finite-difference verification (``grad_check``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ValidationError

__all__ = [
    "Tensor",
    "tensor",
    "add",
    "reshape",
    "bias_add",
    "conv3",
    "upsample_nearest",
    "linear",
    "leaky_relu",
    "sin_activation",
    "l1_loss",
    "l2_loss",
    "AdamState",
    "adam_step",
    "grad_check",
]


class Tensor:
    """A numpy array plus an optional gradient buffer and tape links."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        if arr.ndim > 5:
            raise ValidationError(f"tensors are limited to 5 dims, got {arr.ndim}")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Reverse-accumulate gradients from this (scalar) tensor."""
        if self.data.size != 1:
            raise ValidationError("backward() requires a scalar output")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        # each call contributes one independent pass: stash prior grads so
        # the seed and intermediate values never compound across calls
        prior = [(node, node.grad) for node in order]
        for node in order:
            node.grad = None
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node, old in prior:
            if old is not None:
                if node.grad is None:
                    node.grad = old
                else:
                    node.grad += old

    def __add__(self, other):
        return add(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def tensor(data, requires_grad=False, dtype=np.float32):
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _make(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# elementwise / shape ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValidationError(f"add: shape mismatch {a.shape} vs {b.shape}")
    y = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _make(y, (a, b), backward)


def reshape(t: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    y = t.data.reshape(shape)

    def backward(g):
        t._accumulate(g.reshape(t.data.shape))

    return _make(y, (t,), backward)


def leaky_relu(t: Tensor, slope: float = 0.2) -> Tensor:
    # derivative at exactly 0 is 1 (the x >= 0 branch)
    mask = t.data >= 0
    y = np.where(mask, t.data, slope * t.data)

    def backward(g):
        t._accumulate(np.where(mask, g, slope * g))

    return _make(y, (t,), backward)


def sin_activation(t: Tensor) -> Tensor:
    y = np.sin(t.data)

    def backward(g):
        t._accumulate(g * np.cos(t.data))

    return _make(y, (t,), backward)


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-channel bias (shape (C,)) to a (N, C, ...) tensor."""
    if x.data.ndim < 2 or b.data.shape != (x.data.shape[1],):
        raise ValidationError(
            f"bias_add: bias {b.shape} does not match channels of {x.shape}"
        )
    bshape = (1, x.data.shape[1]) + (1,) * (x.data.ndim - 2)
    y = x.data + b.data.reshape(bshape)
    reduce_axes = tuple(i for i in range(x.data.ndim) if i != 1)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g)
        if b.requires_grad:
            b._accumulate(g.sum(axis=reduce_axes))

    return _make(y, (x, b), backward)


# ---------------------------------------------------------------------------
# linear layer


def linear(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map: (B, F) @ (F, O) + (O,)."""
    if x.data.ndim != 2 or weights.data.ndim != 2:
        raise ValidationError("linear: input and weights must be 2-D")
    if x.data.shape[1] != weights.data.shape[0]:
        raise ValidationError(
            f"linear: inner dims disagree {x.shape} vs {weights.shape}"
        )
    if bias.data.shape != (weights.data.shape[1],):
        raise ValidationError(f"linear: bias shape {bias.shape} invalid")
    y = x.data @ weights.data + bias.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ weights.data.T)
        if weights.requires_grad:
            weights._accumulate(x.data.T @ g)
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=0))

    return _make(y, (x, weights, bias), backward)


# ---------------------------------------------------------------------------
# 3D convolution


def _pads(n, k, stride, padding):
    if padding == "same":
        out = -(-n // stride)
        total = max((out - 1) * stride + k - n, 0)
        return total // 2, total - total // 2
    if padding == "valid":
        if n < k:
            raise ValidationError(f"conv3: spatial dim {n} smaller than kernel {k}")
        return 0, 0
    raise ValidationError(f"conv3: unknown padding {padding!r}")


def _im2col(xp, k, stride):
    """(N, C, D, H, W) padded input -> (N*out_voxels, C*k^3) matrix."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k, k), axis=(2, 3, 4))
    win = win[:, :, ::stride, ::stride, ::stride]
    n, c, do, ho, wo = win.shape[:5]
    col = win.transpose(0, 2, 3, 4, 1, 5, 6, 7).reshape(n * do * ho * wo, c * k**3)
    return col, (do, ho, wo)


def _corr3(x, kernel, stride, pads3):
    """Cross-correlation core. Returns output and the padded input."""
    n = x.shape[0]
    cout = kernel.shape[0]
    k = kernel.shape[2]
    xp = np.pad(x, [(0, 0), (0, 0)] + list(pads3))
    col, (do, ho, wo) = _im2col(xp, k, stride)
    w = kernel.reshape(cout, -1).T
    y = (col @ w).reshape(n, do, ho, wo, cout).transpose(0, 4, 1, 2, 3)
    return np.ascontiguousarray(y), xp


def conv3(x: Tensor, kernel: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    """3D cross-correlation of (N, Cin, D, H, W) with (Cout, Cin, k, k, k).

    Kernels are cubic with k in {1, 3}; stride 2 with same-padding halves
    each spatial dim (output = ceil(in/2)).
    """
    if x.data.ndim != 5 or kernel.data.ndim != 5:
        raise ValidationError("conv3: expects 5-D input and kernel")
    cout, cin, kd, kh, kw = kernel.data.shape
    if not (kd == kh == kw) or kd not in (1, 3):
        raise ValidationError(f"conv3: kernel must be 1^3 or 3^3, got {kernel.shape}")
    if cin != x.data.shape[1]:
        raise ValidationError(
            f"conv3: channel mismatch input {x.shape} kernel {kernel.shape}"
        )
    if stride not in (1, 2):
        raise ValidationError(f"conv3: stride must be 1 or 2, got {stride}")
    k = kd
    spatial = x.data.shape[2:]
    pads3 = [_pads(nn, k, stride, padding) for nn in spatial]
    out_dims = tuple(
        (nn + pb + pa - k) // stride + 1 for nn, (pb, pa) in zip(spatial, pads3)
    )
    unpad = (slice(None), slice(None)) + tuple(
        slice(pb, pb + nn) for nn, (pb, pa) in zip(spatial, pads3)
    )

    # direct kernels win on large spatial volumes; im2col+GEMM wins once
    # the volume is small and channel counts are high
    use_numba = _kernels.HAVE_NUMBA and x.data.shape[-1] >= 16
    if use_numba:
        xp = np.pad(x.data, [(0, 0), (0, 0)] + list(pads3))
        y = np.zeros(x.data.shape[:1] + (cout,) + out_dims, dtype=x.data.dtype)
        _kernels.conv_fwd(xp, kernel.data, y, stride)
    else:
        y, xp = _corr3(x.data, kernel.data, stride, pads3)

    def backward(g):
        # g: (N, Cout, Do, Ho, Wo)
        g = np.ascontiguousarray(g)
        if use_numba:
            xp_b = np.pad(x.data, [(0, 0), (0, 0)] + list(pads3))
            if kernel.requires_grad:
                dk = np.zeros_like(kernel.data)
                _kernels.conv_bwd_dk(xp_b, g, dk, stride)
                kernel._accumulate(dk)
            if x.requires_grad:
                dxp = np.zeros_like(xp_b)
                _kernels.conv_bwd_dx(dxp, kernel.data, g, stride)
                x._accumulate(dxp[unpad])
            return
        if kernel.requires_grad:
            xp_b = np.pad(x.data, [(0, 0), (0, 0)] + list(pads3))
            col, _ = _im2col(xp_b, k, stride)
            gf = g.transpose(0, 2, 3, 4, 1).reshape(-1, cout)
            kernel._accumulate((col.T @ gf).T.reshape(kernel.data.shape))
        if x.requires_grad:
            # scatter g back: dilate by stride, pad by k-1, correlate with
            # the spatially flipped kernel (in/out channels swapped)
            if stride == 1:
                gd = g
            else:
                dil = tuple((s - 1) * stride + 1 for s in g.shape[2:])
                gd = np.zeros(g.shape[:2] + dil, dtype=g.dtype)
                gd[:, :, ::stride, ::stride, ::stride] = g
            kt = np.flip(kernel.data, axis=(2, 3, 4)).transpose(1, 0, 2, 3, 4)
            kt = np.ascontiguousarray(kt)
            dxp_core, _ = _corr3(gd, kt, 1, [(k - 1, k - 1)] * 3)
            padded_shape = tuple(
                nn + pb + pa for nn, (pb, pa) in zip(spatial, pads3)
            )
            dxp = np.zeros(x.data.shape[:2] + padded_shape, dtype=g.dtype)
            c1, c2, c3 = dxp_core.shape[2:]
            dxp[:, :, :c1, :c2, :c3] = dxp_core
            x._accumulate(dxp[unpad])

    return _make(y, (x, kernel), backward)


def upsample_nearest(x: Tensor) -> Tensor:
    """Double every spatial dim by voxel replication."""
    if x.data.ndim != 5:
        raise ValidationError("upsample_nearest: expects a 5-D tensor")
    y = x.data.repeat(2, axis=2).repeat(2, axis=3).repeat(2, axis=4)

    def backward(g):
        n, c, d, h, w = x.data.shape
        x._accumulate(g.reshape(n, c, d, 2, h, 2, w, 2).sum(axis=(3, 5, 7)))

    return _make(y, (x,), backward)


# ---------------------------------------------------------------------------
# losses


def l1_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference; subgradient at 0 is 0."""
    if a.shape != b.shape:
        raise ValidationError(f"l1_loss: shape mismatch {a.shape} vs {b.shape}")
    diff = a.data - b.data
    y = np.abs(diff).mean(dtype=diff.dtype)
    n = diff.size

    def backward(g):
        d = g * np.sign(diff) / n
        if a.requires_grad:
            a._accumulate(d)
        if b.requires_grad:
            b._accumulate(-d)

    return _make(y, (a, b), backward)


def l2_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared difference."""
    if a.shape != b.shape:
        raise ValidationError(f"l2_loss: shape mismatch {a.shape} vs {b.shape}")
    diff = a.data - b.data
    y = (diff * diff).mean(dtype=diff.dtype)
    n = diff.size

    def backward(g):
        d = g * 2.0 * diff / n
        if a.requires_grad:
            a._accumulate(d)
        if b.requires_grad:
            b._accumulate(-d)

    return _make(y, (a, b), backward)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Moment buffers and hyperparameters for the Adam optimizer."""

    learning_rate: float
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, learning_rate):
        return cls(
            learning_rate=learning_rate,
            first_moment=[np.zeros_like(p.data, dtype=np.float32) for p in params],
            second_moment=[np.zeros_like(p.data, dtype=np.float32) for p in params],
        )


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update, in place. Returns (params, state)."""
    if not (len(params) == len(grads) == len(state.first_moment)):
        raise ValidationError("adam_step: params/grads/state length mismatch")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        g = np.asarray(g)
        if g.shape != p.data.shape or m.shape != p.data.shape:
            raise ValidationError(
                f"adam_step: shape mismatch param {p.data.shape} grad {g.shape}"
            )
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# gradient verification


def grad_check(fn, inputs, max_coords_per_tensor=32, h_scale=1e-5, rng=None):
    """Compare reverse-mode gradients against central finite differences.

    ``fn(*inputs)`` must return a scalar Tensor. Runs in whatever dtype the
    inputs carry (use float64). Coordinates are subsampled for large
    tensors. Returns the worst relative error over all checked coordinates.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    for t in inputs:
        t.requires_grad = True
        t.zero_grad()
    out = fn(*inputs)
    if out.data.size != 1:
        raise ValidationError("grad_check: computation must yield a scalar")
    out.backward()
    worst = 0.0
    for t in inputs:
        flat = t.data.reshape(-1)
        gflat = t.grad.reshape(-1) if t.grad is not None else np.zeros_like(flat)
        n = flat.size
        if n > max_coords_per_tensor:
            idxs = rng.choice(n, size=max_coords_per_tensor, replace=False)
        else:
            idxs = np.arange(n)
        for i in idxs:
            orig = flat[i]
            h = h_scale * max(1.0, abs(orig))
            flat[i] = orig + h
            f_plus = fn(*inputs).data.item()
            flat[i] = orig - h
            f_minus = fn(*inputs).data.item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            analytic = float(gflat[i])
            scale = max(abs(numeric), abs(analytic), 1e-6)
            worst = max(worst, abs(numeric - analytic) / scale)
    return worst
