"""Finite-difference checks over each module at toy sizes."""

from __future__ import annotations

import numpy as np

from scaleform import numerics as nx
from scaleform import rng as rngmod
from scaleform.errors import UsageError
from scaleform.ffe import FFE, StbConfig, SwinBlock, extract_semantic, stb_block
from scaleform.ffup import FFUP, ScalePair, upsample
from scaleform.harness.model import ModelConfig, RestorationNet
from scaleform.numerics import gradcheck as gc
from scaleform.numerics.nn import Module
from scaleform.numerics.tensor import Tensor
from scaleform.objective import LossWeights, total_loss
from scaleform.toygen import GenConfig, ToyGenerator, decode, map_latent

SELECTORS = ("numerics", "ffup", "ffe", "toygen", "objective", "pipeline")


def _jitter(module: Module, rng: np.random.Generator, amount: float = 0.1) -> None:
    """Move every parameter off its (often zero) initial value so all paths carry gradient."""
    for _, p in module.named_parameters():
        p.data = p.data + rng.normal(0.0, amount, p.data.shape)


def _leaf(rng, shape, scale=1.0) -> Tensor:
    return Tensor(rng.normal(0.0, scale, shape), requires_grad=True)


def _projected(out: Tensor, rng) -> np.ndarray:
    """A fixed random projection makes every output coordinate matter."""
    return rng.normal(0.0, 1.0, out.shape)


def check_numerics(seed: int, max_entries: int | None = 12) -> gc.GradcheckReport:
    rng = rngmod.stream(seed, "gradcheck.numerics")
    report = gc.GradcheckReport()
    x = _leaf(rng, (2, 3, 5, 7))
    w = _leaf(rng, (4, 3, 3, 3), 0.3)
    b = _leaf(rng, (4,))
    w2 = _leaf(rng, (3, 3, 2, 2), 0.3)
    v = _leaf(rng, (4, 7))
    lw = _leaf(rng, (7, 5), 0.3)
    mask = np.zeros((4, 7), dtype=bool)
    mask[1, 2:5] = True
    f = _leaf(rng, (2, 3, 4, 5))
    px = rng.uniform(-0.7, 4.7, (6, 7))
    py = rng.uniform(-0.7, 3.7, (6, 7))
    cases = {
        "conv2d": (lambda: nx.conv2d(x, w, b, stride=1, pad=1), (x, w, b)),
        "conv2d_strided": (lambda: nx.conv2d(x, w, b, stride=2, pad=1), (x, w, b)),
        "conv2d_patch": (lambda: nx.conv2d(nx.pad2d(x, (1, 0, 1, 0)), w2, None, stride=2, pad=0), (x, w2)),
        "linear_gelu": (lambda: nx.gelu(nx.linear(v, lw, None)), (v, lw)),
        "gelu_erf": (lambda: nx.gelu(v, approximate="none"), (v,)),
        "softmax_masked": (lambda: nx.softmax(v, axis=-1, mask=mask), (v,)),
        "layernorm": (lambda: nx.layernorm(v, axis=-1), (v,)),
        "tanh_relu": (lambda: nx.tanh(v) * nx.relu(v), (v,)),
        "grid_sample": (lambda: nx.grid_sample(f, px, py), (f,)),
        "roll_pad": (lambda: nx.pad2d(nx.roll(f, (1, -2), (2, 3)), (1, 2, 2, 1), mode="reflect"), (f,)),
        "upsample_nearest": (lambda: nx.upsample_nearest2x(f), (f,)),
    }
    for name, (fn, leaves) in cases.items():
        proj = _projected(fn(), rng)
        sub = gc.check(lambda fn=fn, proj=proj: nx.sum(fn() * proj), [(f"{name}.{i}", t) for i, t in enumerate(leaves)],
                       max_entries=max_entries, rng=rng)
        report.merge(sub)
    return report


def check_ffup(seed: int, max_entries: int | None = 12, scale=(1.5, 1.7), k: int = 2) -> gc.GradcheckReport:
    rng = rngmod.stream(seed, "gradcheck.ffup")
    mod = FFUP(8, rng, squeeze_ratio=2, hidden=16, k=k)
    _jitter(mod, rng)
    x = _leaf(rng, (1, 8, 5, 4))
    s = ScalePair(*scale)
    proj = _projected(upsample(x, s, mod), rng)
    tensors = [("input", x)] + list(mod.named_parameters())
    return gc.check(lambda: nx.sum(upsample(x, s, mod) * proj), tensors, max_entries=max_entries, rng=rng)


def check_ffe(seed: int, max_entries: int | None = 12) -> gc.GradcheckReport:
    """A shifted two-block stack plus the full extractor at toy width."""
    rng = rngmod.stream(seed, "gradcheck.ffe")
    report = gc.GradcheckReport()
    blocks = [SwinBlock(8, 2, 2, shifted=(j % 2 == 1), rng=rng) for j in range(2)]
    for b in blocks:
        _jitter(b, rng)
    x = _leaf(rng, (1, 8, 4, 6))

    def stack():
        h = x
        for blk in blocks:
            h = stb_block(h, blk)
        return h

    proj = _projected(stack(), rng)
    tensors = [("input", x)] + [(f"block{j}.{n}", p) for j, b in enumerate(blocks) for n, p in b.named_parameters()]
    report.merge(gc.check(lambda: nx.sum(stack() * proj), tensors, max_entries=max_entries, rng=rng), "stack.")

    cfg = StbConfig(depths=[1, 1], heads=2, window=2, dim=8, base_size=4)
    ffe = FFE(6, cfg, rng)
    _jitter(ffe, rng)
    f = _leaf(rng, (1, 6, 4, 4))

    def full():
        sem, spatial = extract_semantic(f, ffe)
        return sem, spatial

    sem, spatial = full()
    p_sem = _projected(sem, rng)
    p_sp = [_projected(t, rng) for t in spatial]

    def loss():
        sem, spatial = full()
        total = nx.sum(sem * p_sem)
        for t, p in zip(spatial, p_sp):
            total = total + nx.sum(t * p)
        return total

    tensors = [("input", f)] + list(ffe.named_parameters())
    report.merge(gc.check(loss, tensors, max_entries=max_entries, rng=rng), "extractor.")
    return report


def check_toygen(seed: int, max_entries: int | None = 12) -> gc.GradcheckReport:
    rng = rngmod.stream(seed, "gradcheck.toygen")
    cfg = GenConfig(stages=2, channels=6, latent_dim=5, hidden=7, const_size=2)
    gen = ToyGenerator(4, [3, None], cfg, rng)
    _jitter(gen, rng)
    sem = _leaf(rng, (2, 4, 2, 2))
    skip = _leaf(rng, (2, 3, 4, 4))
    base = _leaf(rng, (2, 3, 8, 8), 0.5)

    def run():
        return decode(map_latent(sem, gen), [skip, None], gen, base_logits=base)

    proj = _projected(run(), rng)
    tensors = [("semantic", sem), ("skip", skip), ("base", base)] + list(gen.named_parameters())
    return gc.check(lambda: nx.sum(run() * proj), tensors, max_entries=max_entries, rng=rng)


def check_objective(seed: int, max_entries: int | None = 12) -> gc.GradcheckReport:
    rng = rngmod.stream(seed, "gradcheck.objective")
    y = rng.uniform(-1, 1, (2, 3, 6, 6))
    y_up = _leaf(rng, (2, 3, 4, 4))
    y_hat = _leaf(rng, (2, 3, 6, 6))
    plugins = {"id": lambda a, b: nx.mean(a * a)}
    tensors = [("y_up", y_up), ("y_hat", y_hat)]
    return gc.check(lambda: total_loss(y_up, y_hat, y, LossWeights(), plugins).graph, tensors,
                    max_entries=max_entries, rng=rng)


def tiny_model_config() -> ModelConfig:
    return ModelConfig(channels=8, squeeze_ratio=2, ffup_hidden=8,
                       stb=StbConfig(depths=[1, 1], heads=2, window=2, dim=8, base_size=8),
                       latent_dim=6, gen_hidden=8)


def check_pipeline(seed: int, max_entries: int | None = 4) -> gc.GradcheckReport:
    """End to end through the restoration network."""
    rng = rngmod.stream(seed, "gradcheck.pipeline")
    net = RestorationNet(tiny_model_config(), seed)
    _jitter(net, rng, 0.05)
    lq = rng.uniform(-0.8, 0.8, (1, 3, 5, 4))
    s = ScalePair(1.5, 1.6)
    out = net(lq, s)
    p_up, p_hat = _projected(out["y_up"], rng), _projected(out["y_hat"], rng)

    # the loss weights would shrink gradients far below the error floor, so project outputs directly
    def loss():
        out = net(lq, s)
        return nx.sum(out["y_up"] * p_up) + nx.sum(out["y_hat"] * p_hat)

    return gc.check(loss, list(net.named_parameters()), max_entries=max_entries, rng=rng)


CHECKS = {
    "numerics": check_numerics,
    "ffup": check_ffup,
    "ffe": check_ffe,
    "toygen": check_toygen,
    "objective": check_objective,
    "pipeline": check_pipeline,
}


def gradcheck(selector: str, seed: int) -> gc.GradcheckReport:
    """Run one selector (or ``all``) and return the merged report."""
    names = SELECTORS if selector == "all" else (selector,)
    report = gc.GradcheckReport()
    for name in names:
        if name not in CHECKS:
            raise UsageError(f"unknown gradcheck module {name!r}; choose from {', '.join(SELECTORS)} or all")
        report.merge(CHECKS[name](seed), f"{name}:")
    return report
