import numpy as np
import pytest

from motionforge import diffcore as dc
from motionforge.diffcore import Tensor
from motionforge.model import (
    Classifier,
    Critic,
    Generator,
    ModelConfig,
    Networks,
    SelfAttention,
    classifier_forward,
    critic_forward,
    generator_forward,
    layer_inventory,
    load_checkpoint,
    save_checkpoint,
    self_attention_forward,
)
from motionforge.model.checkpoint import CheckpointError
from oracles import check_module_gradients

TINY = ModelConfig(
    n_joints=4,
    window_T=8,
    encoder_widths=(6, 8),
    latent=10,
    decoder_widths=(8, 6),
    critic_widths=(6, 8, 8),
    classifier_widths=(6, 8),
)


def seeds(cfg, b=3, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(b, cfg.window_T, cfg.n_joints, 3)), np.eye(cfg.n_classes)[rng.integers(0, 4, b)]


def attention_layer(c=16, seed=0, gamma=0.7):
    layer = SelfAttention(c, 8, np.random.default_rng(seed))
    layer.gamma.data = np.array(gamma)
    return layer


# ---------------------------------------------------------------- attention


def test_attention_identity_at_zero_gamma():
    layer = SelfAttention(16, 8, np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=(16, 11))
    assert layer.gamma.data == 0.0
    assert np.array_equal(self_attention_forward(x, layer), x)


def test_attention_columns_sum_to_one():
    layer = attention_layer()
    x = Tensor(np.random.default_rng(2).normal(size=(3, 16, 9)) * 4)
    _, beta = layer.attend(x)
    np.testing.assert_allclose(beta.data.sum(axis=1), 1.0, atol=1e-9)


def test_attention_single_location_by_hand():
    layer = SelfAttention(2, 2, np.random.default_rng(0))
    layer.w_h.data = np.array([[0.5, -1.0]])
    layer.w_v.data = np.array([[2.0], [3.0]])
    layer.gamma.data = np.array(0.5)
    x = np.array([[1.0], [2.0]])
    # beta = 1 for N = 1, so o = W_v W_h x = [2, 3] * (0.5 - 2) = [-3, -4.5]
    o, beta = layer.attend(Tensor(x[None]))
    np.testing.assert_array_equal(beta.data, [[[1.0]]])
    np.testing.assert_allclose(o.data[0], [[-3.0], [-4.5]], atol=1e-15)
    np.testing.assert_allclose(self_attention_forward(x, layer), x + 0.5 * np.array([[-3.0], [-4.5]]))


def test_attention_channel_mismatch():
    with pytest.raises(dc.ShapeError, match="self_attention"):
        attention_layer(16)(Tensor(np.zeros((1, 8, 4))))


def test_attention_gradients():
    layer = attention_layer(8, gamma=0.3)
    x = Tensor(np.random.default_rng(3).normal(size=(2, 8, 5)))
    err = check_module_gradients(layer, lambda: dc.tensor.sum_(layer(x) ** 2))
    assert err < 1e-4


# ---------------------------------------------------------------- networks


def test_generator_shape_determinism_finiteness():
    cfg = ModelConfig()
    g = Generator(cfg, np.random.default_rng(0))
    x, y = seeds(cfg, 2)
    a = g(x, y).data
    assert a.shape == (2, 25, 16, 3)
    assert np.isfinite(a).all()
    assert a.tobytes() == g(x, y).data.tobytes()
    single = generator_forward(g, x[0], y[0])
    np.testing.assert_allclose(single, a[0], atol=1e-12)


def test_generator_rejects_wrong_extents():
    g = Generator(TINY)
    x, y = seeds(TINY)
    with pytest.raises(dc.ShapeError, match="T=8"):
        g(x[:, :5], y)
    with pytest.raises(dc.ShapeError, match="control"):
        g(x, y[:, :3])


def test_generator_nonfinite_output_is_reported():
    g = Generator(TINY)
    g.head.bias.data[:] = np.nan
    x, y = seeds(TINY)
    with pytest.raises(FloatingPointError, match="non-finite"):
        g(x, y)


def test_critic_scores_batch_and_duplicates():
    cfg = TINY
    c = Critic(cfg)
    x, y = seeds(cfg, 3)
    m = np.concatenate([x, x[::-1]], axis=1)
    m[2] = m[0]
    y[2] = y[0]
    s = critic_forward(c, m, y)
    assert s.shape == (3,)
    assert s[2] == s[0]


def test_critic_rejects_wrong_length():
    x, y = seeds(TINY)
    with pytest.raises(dc.ShapeError, match="2T=16"):
        Critic(TINY)(x, y)


def test_classifier_probabilities():
    clf = Classifier(ModelConfig())
    x = np.random.default_rng(0).normal(size=(5, 100, 16, 3))
    p = classifier_forward(clf, x)
    assert p.shape == (5, 4)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert p.tobytes() == classifier_forward(clf, x).tobytes()


def test_default_layer_inventory():
    nets = Networks.build(ModelConfig())
    gen = layer_inventory(nets.generator)
    assert gen.count("SelfAttention") == 1
    assert gen.count("Conv1d") == 3 + 2 + 1
    assert gen.count("LayerNorm") == 5
    crit = layer_inventory(nets.critic)
    assert crit.count("SelfAttention") == 1 and crit.count("Conv1d") == 4
    assert nets.generator.dec_attn is not None and nets.generator.enc_attn is None
    shapes = [p.shape for _, p in nets.generator.named_parameters() if _.endswith("conv.weight")]
    assert shapes[:3] == [(64, 52, 5), (128, 64, 5), (256, 128, 5)]


def test_attention_placement_options():
    cfg = ModelConfig(**{**TINY.to_dict(), "generator_attention": "encoder", "critic_attention": False})
    nets = Networks.build(cfg)
    assert nets.generator.enc_attn is not None and nets.generator.dec_attn is None
    assert "SelfAttention" not in layer_inventory(nets.critic)
    cfg = ModelConfig(**{**TINY.to_dict(), "generator_attention": None})
    assert "SelfAttention" not in layer_inventory(Generator(cfg))
    with pytest.raises(ValueError):
        ModelConfig(generator_attention="middle")


@pytest.mark.parametrize("net", ["generator", "critic", "classifier"])
def test_network_gradients(net):
    nets = Networks.build(TINY, seed=4)
    # open the attention gates so their parameters carry gradient
    nets.generator.dec_attn.gamma.data = np.array(0.5)
    nets.critic.attn.gamma.data = np.array(0.5)
    x, y = seeds(TINY, 2, seed=5)
    w = Tensor(np.random.default_rng(6).normal(size=(2, 4)))
    if net == "generator":
        module, loss = nets.generator, lambda: dc.tensor.sum_(nets.generator(x, y) ** 2)
    elif net == "critic":
        m = np.concatenate([x, x * 0.5], axis=1)
        module, loss = nets.critic, lambda: dc.tensor.sum_(nets.critic(m, y) ** 2)
    else:
        module, loss = nets.classifier, lambda: dc.tensor.sum_(nets.classifier(x) * w)
    assert check_module_gradients(module, loss, max_entries=8) < 1e-4


# ---------------------------------------------------------------- checkpoint


def test_checkpoint_round_trip(tmp_path):
    nets = Networks.build(TINY, seed=1)
    nets.generator.dec_attn.gamma.data = np.array(0.25)
    tensors = nets.generator.state_dict()
    save_checkpoint(tmp_path / "c.bin", tensors, TINY.to_dict(), {"alpha": 0.001}, {"note": "x"})
    back, header = load_checkpoint(tmp_path / "c.bin")
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == np.shape(tensors[k])
        assert back[k].tobytes() == np.asarray(tensors[k]).tobytes()
    assert ModelConfig.from_dict(header["model_config"]) == TINY
    assert header["extra"] == {"note": "x"}
    fresh = Generator(TINY, np.random.default_rng(9))
    fresh.load_state_dict(back)
    x, y = seeds(TINY)
    assert fresh(x, y).data.tobytes() == nets.generator(x, y).data.tobytes()


def test_checkpoint_bad_magic_and_truncation(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "x.bin")
    save_checkpoint(tmp_path / "c.bin", {"w": np.ones(10)}, {})
    raw = (tmp_path / "c.bin").read_bytes()
    (tmp_path / "c.bin").write_bytes(raw[:-16])
    with pytest.raises(CheckpointError, match="past end"):
        load_checkpoint(tmp_path / "c.bin")


def test_load_state_dict_rejects_mismatch():
    g = Generator(TINY)
    state = g.state_dict()
    state.pop(next(iter(state)))
    with pytest.raises((KeyError, ValueError)):
        g.load_state_dict(state)
