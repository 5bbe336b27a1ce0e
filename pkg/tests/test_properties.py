"""Property-based tests over randomized inputs."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

import waverom.autodiff as ad
from waverom.autodiff import Tensor
from waverom.fdtd import FieldVolume, source_amplitude
from waverom.formats import read_volume, write_volume
from waverom.model import center_crop
from waverom.training import NormalizationSpec

dims3 = st.tuples(
    st.integers(min_value=1, max_value=6),
    st.integers(min_value=1, max_value=6),
    st.integers(min_value=1, max_value=6),
)

finite32 = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False, width=32
)


@settings(max_examples=25, deadline=None)
@given(dims=dims3, seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_evf_round_trip_any_shape(tmp_path_factory, dims, seed):
    rng = np.random.default_rng(seed)
    vol = FieldVolume(
        data=rng.normal(size=dims).astype(np.float32),
        time=float(rng.uniform(0, 10)),
        params=(float(rng.uniform(1, 4)), float(rng.uniform(1, 2))),
    )
    path = tmp_path_factory.mktemp("evf") / "v.evf"
    write_volume(vol, path)
    back = read_volume(path)
    assert np.array_equal(back.data, vol.data)
    assert back.time == vol.time


@settings(max_examples=30, deadline=None)
@given(
    have=st.integers(min_value=1, max_value=12),
    want_frac=st.floats(min_value=0.0, max_value=1.0),
)
def test_center_crop_is_centered_slice(have, want_frac):
    want = max(1, int(round(have * want_frac)))
    data = np.arange(have**3).reshape(have, have, have)
    out = center_crop(data, (want, want, want))
    assert out.shape == (want, want, want)
    lo = (have - want) // 2
    assert out[0, 0, 0] == data[lo, lo, lo]


@settings(max_examples=40, deadline=None)
@given(
    r=st.floats(min_value=1.0, max_value=3.0),
    n=st.floats(min_value=1.0, max_value=1.5),
    t=st.floats(min_value=0.0, max_value=5.0),
)
def test_normalize_point_in_hull_and_invertible(r, n, t):
    norm = NormalizationSpec(
        field_scale=1.0,
        param_ranges={"r": (1.0, 3.0), "n": (1.0, 1.5), "t": (0.0, 5.0)},
    )
    vec, ok = norm.normalize_point(r, n, t)
    assert ok
    assert np.all(np.abs(vec) <= 1.0 + 1e-9)
    for key, raw, v in zip("rnt", (r, n, t), vec):
        lo, hi = norm.param_ranges[key]
        assert (v + 1.0) / 2.0 * (hi - lo) + lo == pytest.approx(raw, abs=1e-7)


@settings(max_examples=50, deadline=None)
@given(t=st.floats(min_value=0.0, max_value=100.0))
def test_source_amplitude_bounded_by_ramp(t):
    a = source_amplitude(t, 1.0)
    assert abs(a) <= min(1.0, t) + 1e-12


@settings(max_examples=25, deadline=None)
@given(
    arr=hnp.arrays(np.float32, hnp.array_shapes(min_dims=1, max_dims=3, max_side=5),
                   elements=finite32)
)
def test_losses_match_numpy_oracles(arr):
    a = Tensor(arr, dtype=np.float64)
    b = Tensor(np.zeros_like(arr), dtype=np.float64)
    assert ad.l1_loss(a, b).item() == pytest.approx(
        np.mean(np.abs(arr.astype(np.float64))), rel=1e-12, abs=1e-12
    )
    assert ad.l2_loss(a, b).item() == pytest.approx(
        np.mean(arr.astype(np.float64) ** 2), rel=1e-12, abs=1e-12
    )


@settings(max_examples=25, deadline=None)
@given(
    arr=hnp.arrays(np.float32, hnp.array_shapes(min_dims=1, max_dims=3, max_side=5),
                   elements=finite32),
    slope=st.floats(min_value=0.0, max_value=1.0),
)
def test_pointwise_ops_match_numpy(arr, slope):
    t = Tensor(arr)
    lr = ad.leaky_relu(t, slope).data
    assert np.array_equal(lr, np.where(arr >= 0, arr, slope * arr).astype(np.float32))
    s = ad.sin_activation(t).data
    assert np.allclose(s, np.sin(arr), atol=1e-6)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(min_value=0, max_value=1000))
def test_upsample_then_downsample_recovers(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(1, 2, 3, 3, 3)).astype(np.float32)
    y = ad.upsample_nearest(Tensor(x)).data
    assert np.array_equal(y[:, :, ::2, ::2, ::2], x)
