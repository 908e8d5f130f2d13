import numpy as np
import pytest

import scaleform.numerics as nx
from scaleform.errors import ConfigError, ShapeError
from scaleform.ffup import ScalePair
from scaleform.harness import gradcheck as runner
from scaleform.harness.model import RestorationNet
from scaleform.objective import total_loss
from scaleform.toygen import GenConfig, ToyGenerator, decode, map_latent

from conftest import SEEDS


def make_gen(rng, cfg=None, semantic=8, skips=None):
    cfg = cfg or GenConfig(stages=4, channels=8, latent_dim=6, hidden=10)
    skips = skips if skips is not None else [None] * cfg.stages
    return ToyGenerator(semantic, skips, cfg, rng)


def test_zero_semantic_with_zero_bias_gives_zero_codes(rng):
    gen = make_gen(rng)
    gen.map1.bias.data[:] = 0
    gen.map2.bias.data[:] = 0
    codes = map_latent(np.zeros((2, 8, 4, 4)), gen)
    assert len(codes) == 4
    assert all(c.shape == (2, 6) and np.all(c.data == 0) for c in codes)


def test_four_stages_from_4x4_to_64x64(rng):
    gen = make_gen(rng)
    latent = [nx.Tensor(np.zeros((1, 6))) for _ in range(4)]
    out = decode(latent, [None] * 4, gen)
    assert out.shape == (1, 3, 64, 64)
    assert np.all(np.isfinite(out.data))


def test_resolution_doubles_per_stage(rng):
    for stages in (1, 2, 3):
        cfg = GenConfig(stages=stages, channels=4, latent_dim=3, hidden=5, const_size=2)
        gen = make_gen(rng, cfg)
        out = decode(map_latent(rng.normal(size=(1, 8, 2, 2)), gen), [None] * stages, gen)
        assert out.shape[-1] == 2 * 2**stages


def test_output_in_range(rng):
    gen = make_gen(rng)
    for p in gen.parameters():
        p.data = p.data * 20
    out = decode(map_latent(rng.normal(size=(2, 8, 4, 4)) * 10, gen), [None] * 4, gen,
                 base_logits=rng.normal(size=(2, 3, 64, 64)) * 10).data
    assert out.min() >= -1.0 and out.max() <= 1.0


def test_skips_and_skip_mismatch(rng):
    cfg = GenConfig(stages=2, channels=4, latent_dim=3, hidden=5, const_size=4, first_stage_upsample=False)
    gen = ToyGenerator(8, [5, 5], cfg, rng)
    latent = map_latent(rng.normal(size=(1, 8, 2, 2)), gen)
    out = decode(latent, [rng.normal(size=(1, 5, 4, 4)), rng.normal(size=(1, 5, 8, 8))], gen)
    assert out.shape == (1, 3, 8, 8)
    with pytest.raises(ShapeError):
        decode(latent, [rng.normal(size=(1, 5, 4, 4)), rng.normal(size=(1, 5, 6, 6))], gen)
    with pytest.raises(ShapeError):
        decode(latent[:1], [None], gen)


def test_stage_count_mismatch_in_constructor(rng):
    with pytest.raises(ConfigError):
        ToyGenerator(4, [None, None], GenConfig(stages=3), rng)


def test_parameter_names(rng):
    names = [n for n, _ in make_gen(rng).named_parameters()]
    assert "stage0.conv.weight" in names and "stage3.affine.bias" in names


@pytest.mark.parametrize("seed", SEEDS)
def test_gradients(seed):
    report = runner.check_toygen(seed)
    assert report.ok, report.failures


@pytest.mark.parametrize("seed", SEEDS)
def test_first_step_reduces_loss(seed):
    """One small gradient step on a fixed batch lowers the loss."""
    rng = np.random.default_rng(seed)
    net = RestorationNet(runner.tiny_model_config(), seed)
    lq = rng.uniform(-1, 1, (2, 3, 4, 4))
    hq = rng.uniform(-1, 1, (2, 3, 8, 8))
    s = ScalePair(2, 2)

    def loss():
        out = net(lq, s)
        return total_loss(out["y_up"], out["y_hat"], hq)

    report = loss()
    nx.backward(report.graph)
    grads = [p.grad for p in net.parameters()]
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    for p, g in zip(net.parameters(), grads):
        p.data = p.data - 1e-3 * g / norm
    with nx.no_grad():
        after = loss().l_total
    assert after < report.l_total


@pytest.mark.parametrize("seed", range(3))
def test_pipeline_gradients(seed):
    report = runner.check_pipeline(seed)
    assert report.ok, report.failures
