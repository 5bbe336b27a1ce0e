"""Network construction and inference-wrapper tests."""

import warnings

import numpy as np
import pytest

import waverom.autodiff as ad
from waverom.autodiff import Tensor
from waverom.errors import ValidationError
from waverom.fdtd import FieldVolume
from waverom.model import (
    ArchitectureSpec,
    LatentCode,
    ParamPoint,
    approximate,
    approximator_forward,
    build_models,
    center_crop,
    crop_dims,
    decode,
    decoder_forward,
    encode,
    encoder_forward,
    num_downsample_layers,
    reconstruct,
)
from waverom.training import NormalizationSpec

SMALL = ArchitectureSpec(input_dims=(16, 16, 16), latent_size=8, base_channels=2)


def small_norm():
    return NormalizationSpec(
        field_scale=1.0,
        param_ranges={"r": (1.0, 3.0), "n": (1.0, 1.5), "t": (0.0, 5.0)},
    )


# ---------------------------------------------------------------------------
# shape arithmetic


def test_num_downsample_layers():
    assert num_downsample_layers((48, 48, 48)) == 3
    assert num_downsample_layers((16, 16, 16)) == 2
    assert num_downsample_layers((192, 192, 192)) == 5
    with pytest.raises(ValidationError):
        num_downsample_layers((4, 4, 4))


def test_crop_dims_desk_and_full_scale():
    assert crop_dims((49, 49, 49)) == (48, 48, 48)
    assert crop_dims((193, 193, 193)) == (192, 192, 192)


def test_center_crop_content_and_bounds():
    data = np.arange(5 * 5 * 5).reshape(5, 5, 5)
    out = center_crop(data, (3, 3, 3))
    assert np.array_equal(out, data[1:4, 1:4, 1:4])
    with pytest.raises(ValidationError):
        center_crop(data, (6, 5, 5))


def test_architecture_channel_progression_and_cap():
    big = ArchitectureSpec(input_dims=(192, 192, 192), latent_size=64, base_channels=4)
    assert big.channels() == [4, 8, 16, 32, 32, 32]  # capped at 8x base
    assert SMALL.channels() == [2, 4, 8]
    assert SMALL.reduced_dims() == (4, 4, 4)


def test_architecture_rejects_indivisible_dims():
    with pytest.raises(ValidationError):
        ArchitectureSpec(input_dims=(49, 49, 49))
    with pytest.raises(ValidationError):
        ArchitectureSpec(input_dims=(16, 16), latent_size=8)
    with pytest.raises(ValidationError):
        ArchitectureSpec.from_dict({"input_dims": [16, 16, 16], "latent": 8})


def test_architecture_dict_round_trip():
    assert ArchitectureSpec.from_dict(SMALL.to_dict()) == SMALL


# ---------------------------------------------------------------------------
# weight construction


def test_build_models_deterministic():
    a, b = build_models(SMALL, seed=5), build_models(SMALL, seed=5)
    assert set(a.tensors) == set(b.tensors)
    for name in a.tensors:
        assert np.array_equal(a.tensors[name].data, b.tensors[name].data)
    c = build_models(SMALL, seed=6)
    assert not np.array_equal(a.tensors["enc.fc.w"].data, c.tensors["enc.fc.w"].data)


def test_parameter_count_matches_hand_enumeration():
    # spec(16^3, l=8, c0=2): q=2, channels [2, 4, 8], reduced 4^3, flat 512
    def conv(cout, cin, k=3):
        return cout * cin * k**3 + cout

    def block(cin, cout):
        total = conv(cout, cin) + 3 * conv(cout, cout)
        if cin != cout:
            total += conv(cout, cin, k=1)
        return total

    flat = 8 * 4**3
    h = max(128, 2 * 8)
    expected = (
        block(1, 2) + conv(2, 2)          # enc.block0 + enc.down0
        + block(2, 4) + conv(4, 4)        # enc.block1 + enc.down1
        + block(4, 8)                     # enc.top
        + flat * 8 + 8                    # enc.fc
        + 8 * flat + flat                 # dec.fc
        + block(8, 4)                     # dec.top
        + block(4, 2)                     # dec.block1
        + block(2, 2)                     # dec.block0
        + conv(1, 2)                      # dec.out
        + 3 * h + h + h * h + h + h * 8 + 8  # approximator MLP
    )
    params = build_models(SMALL, seed=0)
    assert params.parameter_count() == expected


def test_tensor_group_prefixes_cover_everything():
    params = build_models(SMALL, seed=0)
    grouped = (
        set(params.encoder_tensors())
        | set(params.decoder_tensors())
        | set(params.approximator_tensors())
    )
    assert grouped == set(params.tensors)


# ---------------------------------------------------------------------------
# forward passes


def test_encoder_decoder_shapes():
    params = build_models(SMALL, seed=0)
    x = Tensor(np.random.default_rng(0).normal(size=(2, 1, 16, 16, 16)).astype(np.float32))
    z = encoder_forward(params, x)
    assert z.shape == (2, 8)
    y = decoder_forward(params, z)
    assert y.shape == (2, 1, 16, 16, 16)


def test_approximator_shape_and_determinism():
    params = build_models(SMALL, seed=0)
    pt = Tensor(np.array([[0.1, -0.2, 0.3]], dtype=np.float32))
    a = approximator_forward(params, pt).data
    b = approximator_forward(params, pt).data
    assert a.shape == (1, 8)
    assert np.array_equal(a, b)
    assert np.all(np.isfinite(a))


def test_gradient_flows_to_every_weight():
    # one training step on one batch: no dead branches anywhere
    params = build_models(SMALL, seed=0)
    x = Tensor(np.random.default_rng(1).normal(size=(2, 1, 16, 16, 16)).astype(np.float32))
    loss = ad.l1_loss(decoder_forward(params, encoder_forward(params, x)), x)
    pt = Tensor(np.array([[0.1, 0.2, 0.3]], dtype=np.float32))
    z = approximator_forward(params, pt)
    loss2 = ad.l2_loss(z, Tensor(np.zeros(z.shape)))
    loss.backward()
    loss2.backward()
    for name, t in params.tensors.items():
        assert t.grad is not None, name
        assert np.linalg.norm(t.grad) > 0.0, name


# ---------------------------------------------------------------------------
# inference wrappers


def test_encode_decode_round_trip_shapes():
    params = build_models(SMALL, seed=0)
    vol = FieldVolume(
        data=np.random.default_rng(2).normal(size=(16, 16, 16)).astype(np.float32),
        time=1.0,
        params=(2.0, 1.2),
    )
    code = encode(params, vol)
    assert code.values.shape == (8,)
    assert np.all(np.isfinite(code.values))
    again = encode(params, vol)
    assert np.array_equal(code.values, again.values)
    out = decode(params, code)
    assert out.data.shape == (16, 16, 16)


def test_encode_rejects_wrong_dims():
    params = build_models(SMALL, seed=0)
    vol = FieldVolume(data=np.zeros((8, 8, 8)), time=0.0, params=(1.0, 1.0))
    with pytest.raises(ValidationError):
        encode(params, vol)


def test_decode_rejects_wrong_code_length():
    params = build_models(SMALL, seed=0)
    with pytest.raises(ValidationError):
        decode(params, LatentCode(values=np.zeros(9)))


def test_zero_code_decodes_to_finite_volume():
    params = build_models(SMALL, seed=0)
    out = decode(params, LatentCode(values=np.zeros(8)))
    assert out.data.shape == (16, 16, 16)
    assert np.all(np.isfinite(out.data))


def test_approximate_warns_out_of_range():
    params = build_models(SMALL, seed=0)
    norm = small_norm()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        approximate(params, ParamPoint(2.0, 1.2, 3.0), norm)  # in range: silent
    with pytest.warns(UserWarning):
        approximate(params, ParamPoint(2.0, 1.9, 3.0), norm)


def test_reconstruct_is_decode_of_approximate():
    params = build_models(SMALL, seed=0)
    norm = small_norm()
    point = ParamPoint(2.0, 1.2, 3.0)
    direct = reconstruct(params, point, norm)
    composed = decode(params, approximate(params, point, norm))
    assert np.array_equal(direct.data, composed.data)
    assert direct.time == 3.0
    assert direct.params == (2.0, 1.2)


def test_param_point_validation():
    with pytest.raises(ValidationError):
        ParamPoint(1.0, 1.0, -1.0)
    with pytest.raises(ValidationError):
        ParamPoint(np.nan, 1.0, 0.0)
