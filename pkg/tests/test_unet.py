import numpy as np
import pytest
import torch

from visioblend.diffusion import ConditionPair
from visioblend.unet import (
    IN_CHANNELS,
    OUT_CHANNELS,
    NetworkConfig,
    UNet,
    assemble_input,
    make_denoiser,
    predict_noise,
    timestep_embedding,
)

from conftest import micro_net_config, tiny_net_config


def test_channel_constants():
    assert IN_CHANNELS == 7
    assert OUT_CHANNELS == 3


def test_network_config_round_trip_and_validation():
    cfg = tiny_net_config()
    d = cfg.to_dict()
    assert d["input_channels"] == 7 and d["output_channels"] == 3
    assert NetworkConfig.from_dict(d) == cfg
    with pytest.raises(ValueError):
        NetworkConfig(base_channels=0)
    with pytest.raises(ValueError):
        NetworkConfig(channel_multipliers=())
    with pytest.raises(ValueError):
        NetworkConfig(time_embed_dim=7)


def test_assemble_input_channel_order():
    h, w = 4, 6
    x = np.full((h, w, 3), 0.1, np.float32)
    sk = np.full((h, w, 1), -1.0, np.float32)
    st = np.full((h, w, 3), 0.7, np.float32)
    out = assemble_input(x, ConditionPair(sketch=sk, stroke=st))
    assert out.shape == (h, w, 7)
    assert np.all(out[:, :, :3] == 0.1)
    assert np.all(out[:, :, 3] == -1.0)
    assert np.all(out[:, :, 4:] == 0.7)


def test_assemble_input_absent_conditions_are_gray():
    x = np.full((4, 4, 3), 0.5, np.float32)
    out = assemble_input(x, ConditionPair())
    assert np.all(out[:, :, 3:] == 0.0)
    half = assemble_input(x, ConditionPair(stroke=np.full((4, 4, 3), 0.2, np.float32)))
    assert np.all(half[:, :, 3] == 0.0)
    assert np.all(half[:, :, 4:] == 0.2)


def test_assemble_input_shape_mismatch():
    x = np.zeros((4, 4, 3), np.float32)
    with pytest.raises(ValueError):
        assemble_input(x, ConditionPair(sketch=np.zeros((5, 4, 1), np.float32)))
    with pytest.raises(ValueError):
        assemble_input(x, ConditionPair(stroke=np.zeros((4, 5, 3), np.float32)))


def test_timestep_embedding_hand_values():
    emb = timestep_embedding(1, 4)
    # layout [sin(t*w0), sin(t*w1), cos(t*w0), cos(t*w1)], w0=1, w1=10^-2
    np.testing.assert_allclose(
        emb.numpy(), [0.841471, 0.0099998, 0.540302, 0.99995], atol=1e-5)
    emb0 = timestep_embedding(0, 6).numpy()
    np.testing.assert_allclose(emb0[:3], 0.0, atol=0)
    np.testing.assert_allclose(emb0[3:], 1.0, atol=0)


def test_timestep_embedding_batched_and_bounded():
    emb = timestep_embedding(torch.tensor([1, 5, 100]), 16)
    assert emb.shape == (3, 16)
    assert np.all(np.abs(emb.numpy()) <= 1.0 + 1e-6)
    with pytest.raises(ValueError):
        timestep_embedding(1, 5)


def test_unet_forward_shape_and_finiteness():
    torch.manual_seed(0)
    model = UNet(tiny_net_config())
    x = torch.randn(2, 7, 8, 8)
    out = model(x, torch.tensor([3, 9]))
    assert out.shape == (2, 3, 8, 8)
    assert torch.isfinite(out).all()
    # same weights, another valid spatial size
    out16 = model(torch.randn(1, 7, 16, 16), torch.tensor([1]))
    assert out16.shape == (1, 3, 16, 16)


def test_unet_rejects_bad_input_shapes():
    torch.manual_seed(0)
    model = UNet(tiny_net_config())  # two levels -> size must be even
    with pytest.raises(ValueError):
        model(torch.randn(1, 3, 8, 8), torch.tensor([1]))
    with pytest.raises(ValueError):
        model(torch.randn(1, 7, 9, 9), torch.tensor([1]))


def test_unet_init_is_seed_deterministic():
    torch.manual_seed(123)
    a = UNet(tiny_net_config())
    torch.manual_seed(123)
    b = UNet(tiny_net_config())
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        assert torch.equal(pa, pb)


def test_unet_first_conv_consumes_seven_channels():
    model = UNet(micro_net_config())
    assert model.stem.weight.shape[1] == 7
    assert model.out_conv.weight.shape[0] == 3


def test_predict_noise_numpy_bridge():
    torch.manual_seed(1)
    model = UNet(micro_net_config())
    x7 = np.random.default_rng(0).standard_normal((8, 8, 7)).astype(np.float32)
    out = predict_noise(model, x7, 3)
    assert out.shape == (8, 8, 3)
    assert out.dtype == np.float32
    den = make_denoiser(model)
    assert np.array_equal(den(x7, 3), out)


def test_predict_noise_depends_on_timestep():
    torch.manual_seed(2)
    model = UNet(micro_net_config())
    x7 = np.zeros((8, 8, 7), np.float32)
    a = predict_noise(model, x7, 1)
    b = predict_noise(model, x7, 50)
    assert not np.array_equal(a, b)
