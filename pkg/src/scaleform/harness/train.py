"""Deterministic training loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from scaleform import numerics as nx
from scaleform import rng as rngmod
from scaleform.degrade import MIN_LQ_SIZE, DegradationRanges, degrade, sample_spec
from scaleform.errors import ConfigError, UsageError
from scaleform.ffup import ScalePair
from scaleform.harness import checkpoint as ckpt
from scaleform.harness.data import Dataset
from scaleform.harness.model import ModelConfig, RestorationNet, to_net
from scaleform.harness.optim import AdamState, adam_step, lr_schedule
from scaleform.objective import LossReport, LossWeights, l1, total_loss

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "lr", "l_up", "l_rec", "l_rest", "l_total")


@dataclass
class TrainConfig:
    lr: float = 2e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    total_iters: int = 2000
    milestones: list[int] = field(default_factory=lambda: [1750, 1875])
    decay: float = 0.5
    batch: int = 4
    seed: int = 7
    scale_range: tuple[float, float] = (1.0, 8.0)
    ckpt_every: int = 0
    augment: bool = True
    ranges: DegradationRanges = field(default_factory=DegradationRanges)
    weights: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        ms = list(self.milestones)
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ConfigError(f"milestones must be strictly increasing, got {ms}")
        if ms and ms[-1] >= self.total_iters:
            raise ConfigError(f"milestones {ms} must be < total_iters {self.total_iters}")
        if self.batch < 1 or self.total_iters < 0:
            raise ConfigError("batch must be >= 1 and total_iters >= 0")
        lo, hi = self.scale_range
        if not 1.0 <= lo <= hi:
            raise ConfigError(f"bad scale range {self.scale_range}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        ranges = DegradationRanges(**{k: tuple(v) for k, v in d.pop("ranges", {}).items()})
        weights = LossWeights(**d.pop("weights", {}))
        model = ModelConfig.from_dict(d.pop("model", {}))
        for key in ("betas", "scale_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(ranges=ranges, weights=weights, model=model, **d)


@dataclass
class LogRow:
    iteration: int
    lr: float
    report: LossReport

    def tsv(self) -> str:
        r = self.report
        return "\t".join([str(self.iteration)] + [repr(float(v)) for v in (self.lr, r.l_up, r.l_rec, r.l_rest, r.l_total)])


@dataclass
class TrainResult:
    net: RestorationNet
    state: AdamState
    config: TrainConfig
    log: list[LogRow]
    iteration: int

    def checkpoint(self) -> ckpt.Checkpoint:
        return make_checkpoint(self.net, self.state, self.config, self.iteration)


def make_checkpoint(net: RestorationNet, state: AdamState, cfg: TrainConfig, iteration: int) -> ckpt.Checkpoint:
    meta = {
        "train": cfg.to_dict(),
        "model": cfg.model.to_dict(),
        "adam_step": state.step,
        "rng": {"seed": cfg.seed, "next_iter": iteration},
    }
    return ckpt.Checkpoint(iteration, net.state_dict(), {k: v.copy() for k, v in state.m.items()},
                           {k: v.copy() for k, v in state.v.items()}, meta)


def restore_training(ck: ckpt.Checkpoint) -> tuple[TrainConfig, RestorationNet, AdamState]:
    cfg = TrainConfig.from_dict(ck.meta["train"])
    net = RestorationNet(cfg.model, cfg.seed)
    net.load_state_dict(ck.params)
    state = AdamState(ck.meta.get("adam_step", ck.iteration), dict(ck.adam_m), dict(ck.adam_v))
    return cfg, net, state


def batch_indices(n: int, batch: int, seed: int, iteration: int) -> np.ndarray:
    if batch >= n:
        return np.arange(n)
    return rngmod.stream(seed, "batch", iteration).permutation(n)[:batch]


def dihedral(img: np.ndarray, code: int) -> np.ndarray:
    """Apply one of eight flips/transposes to a (C, H, W) image; codes >= 4 transpose."""
    if code & 1:
        img = img[:, :, ::-1]
    if code & 2:
        img = img[:, ::-1, :]
    if code & 4:
        img = img.transpose(0, 2, 1)
    return np.ascontiguousarray(img)


def augment_codes(cfg: TrainConfig, iteration: int, n: int, square: bool) -> np.ndarray:
    if not cfg.augment:
        return np.zeros(n, dtype=int)
    return rngmod.stream(cfg.seed, "augment", iteration).integers(0, 8 if square else 4, n)


def make_batch(dataset: Dataset, idx: np.ndarray, cfg: TrainConfig, iteration: int, augment: bool = True):
    """Return (lq, hq, scale) with images in the network domain."""
    h, w = dataset.hq[0].shape[-2:]
    codes = augment_codes(cfg, iteration, len(idx), h == w) if augment else np.zeros(len(idx), dtype=int)
    hq = np.stack([dihedral(dataset.hq[i], c) for i, c in zip(idx, codes)])
    if dataset.paired:
        lq = np.stack([dihedral(dataset.lq[i], c) for i, c in zip(idx, codes)])
    else:
        h, w = hq.shape[-2:]
        r_hi = min(cfg.ranges.r[1], cfg.scale_range[1], min(h, w) / MIN_LQ_SIZE)
        r_lo = min(max(cfg.ranges.r[0], cfg.scale_range[0]), r_hi)
        r = float(rngmod.stream(cfg.seed, "r", iteration).uniform(r_lo, r_hi))
        lqs = []
        for k, i in enumerate(idx):
            spec = sample_spec(cfg.ranges, cfg.seed, iteration, int(i))
            spec.r = r
            lqs.append(degrade(hq[k], spec).image)
        lq = np.stack(lqs)
    (h, w), (hl, wl) = hq.shape[-2:], lq.shape[-2:]
    if h < hl or w < wl:
        raise ConfigError(f"LQ {hl}x{wl} larger than HQ {h}x{w}")
    return to_net(lq), to_net(hq), ScalePair(w / wl, h / hl)


def train(
    cfg: TrainConfig,
    dataset: Dataset,
    resume: ckpt.Checkpoint | None = None,
    stop_after: int | None = None,
    out_dir=None,
    log_path=None,
    on_step: Callable[[LogRow], None] | None = None,
) -> TrainResult:
    """Run iterations ``start .. min(stop_after, total_iters) - 1``.

    With ``resume`` the network, Adam moments and iteration counter come
    from the checkpoint; ``cfg`` should be the configuration it was saved
    with. Checkpoints are written to ``out_dir`` every ``ckpt_every``
    iterations and at the end.
    """
    if len(dataset) == 0:
        raise UsageError("dataset is empty")
    if resume is not None:
        _, net, state = restore_training(resume)
        start = resume.iteration
    else:
        net = RestorationNet(cfg.model, cfg.seed)
        state = AdamState()
        start = 0
    end = cfg.total_iters if stop_after is None else min(stop_after, cfg.total_iters)
    params = dict(net.named_parameters())
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    log_fh = None
    if log_path is not None:
        fresh = resume is None or not Path(log_path).exists()
        log_fh = open(log_path, "w" if fresh else "a")
        if fresh:
            log_fh.write("\t".join(LOG_COLUMNS) + "\n")
    rows: list[LogRow] = []
    try:
        for it in range(start, end):
            lr = lr_schedule(it, cfg.lr, cfg.milestones, cfg.decay)
            lq, hq, scale = make_batch(dataset, batch_indices(len(dataset), cfg.batch, cfg.seed, it), cfg, it)
            net.zero_grad()
            out = net(lq, scale)
            report = total_loss(out["y_up"], out["y_hat"], hq, cfg.weights)
            nx.backward(report.graph)
            report.graph = None
            adam_step(params, {k: p.grad for k, p in params.items()}, state, lr, cfg.betas, cfg.eps)
            row = LogRow(it, lr, report)
            rows.append(row)
            if log_fh is not None:
                log_fh.write(row.tsv() + "\n")
            if on_step is not None:
                on_step(row)
            if it % 100 == 0:
                log.info("iter %d lr %.3g l_rec %.5f l_total %.6g", it, lr, report.l_rec, report.l_total)
            done = it + 1
            if out_dir is not None and cfg.ckpt_every and done % cfg.ckpt_every == 0:
                ckpt.save(out_dir / f"ckpt_{done:07d}.ffck", make_checkpoint(net, state, cfg, done))
    finally:
        if log_fh is not None:
            log_fh.close()
    net.zero_grad()
    result = TrainResult(net, state, cfg, rows, max(start, end))
    if out_dir is not None:
        ckpt.save(out_dir / "last.ffck", result.checkpoint())
    return result


def evaluate_l1(net: RestorationNet, dataset: Dataset, cfg: TrainConfig) -> float:
    """Mean reconstruction L1 (network domain) over the whole dataset."""
    with nx.no_grad():
        lq, hq, scale = make_batch(dataset, np.arange(len(dataset)), cfg, 0, augment=False)
        return l1(net(lq, scale)["y_hat"], hq).item()


def read_log(path) -> list[str]:
    return Path(path).read_text().splitlines()[1:]
