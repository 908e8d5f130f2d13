"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 numeric failure (non-finite
values or a gradient check violation).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from scaleform import rng as rngmod
from scaleform.degrade import DegradationRanges, degrade, sample_spec
from scaleform.errors import NonFiniteError, ScaleformError, UsageError
from scaleform.ffup import ScalePair, build_grid, resize_bilinear
from scaleform.harness import checkpoint as ckpt
from scaleform.harness.config import load_config, read_sections
from scaleform.harness.data import TOY_RANGES, Dataset, make_toy_pairs, synth_face, write_pairs
from scaleform.harness.gradcheck import SELECTORS, gradcheck
from scaleform.harness.imageio import list_images, read_image, write_image
from scaleform.harness.model import RestorationNet, identity_model
from scaleform.harness.optim import AdamState
from scaleform.harness.restore import load_model, restore
from scaleform.harness.train import TrainConfig, make_checkpoint, train
from scaleform.objective import psnr, ssim

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
MANIFEST = "manifest.tsv"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(args, fallback: int) -> int:
    return rngmod.default_seed(args.seed, fallback)


def _inputs(path: Path) -> list[Path]:
    if path.is_dir():
        files = list_images(path)
        if not files:
            raise UsageError(f"no images in {path}")
        return files
    if not path.is_file():
        raise UsageError(f"{path} does not exist")
    return [path]


def _range_overrides(args, names) -> dict[str, str]:
    return {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}


# -- degrade ---------------------------------------------------------------

def cmd_degrade(args) -> int:
    sections = read_sections(args.config) if args.config else {}
    cfg = load_config(None, {"degrade": {**sections.get("degrade", {}),
                                         **_range_overrides(args, ("sigma", "r", "delta", "q", "jitter"))}})
    ranges: DegradationRanges = cfg.ranges
    seed = _seed(args, 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["filename\tsigma\tr\tdelta\tq\tjitter_brightness\tjitter_contrast\tjitter_saturation"]
    for i, path in enumerate(_inputs(Path(args.inp))):
        hq = read_image(path)
        spec = sample_spec(ranges, seed, i)
        result = degrade(hq, spec, jitter=not args.no_jitter)
        img = result.image
        if args.resize_back:
            img = resize_bilinear(img, *hq.shape[-2:])
        write_image(out / path.name, img)
        f = result.manifest_fields()
        lines.append("\t".join([path.name] + [repr(float(f[k])) for k in ("sigma", "r", "delta")]
                               + [str(int(f["q"]))] + [repr(float(d)) for d in f["jitter_draws"]]))
    (out / MANIFEST).write_text("\n".join(lines) + "\n")
    print(f"degraded {len(lines) - 1} image(s) into {out}")
    return EXIT_OK


# -- toyset / init ----------------------------------------------------------

def cmd_toyset(args) -> int:
    seed = _seed(args, 7)
    out = Path(args.out)
    if args.hq_only:
        out.mkdir(parents=True, exist_ok=True)
        for i in range(args.n):
            write_image(out / f"face{i:03d}{args.suffix}", synth_face(seed, i, args.size))
    else:
        write_pairs(out, make_toy_pairs(args.n, seed, args.size, ranges=TOY_RANGES), args.suffix)
    print(f"wrote {args.n} toy face(s) to {out}")
    return EXIT_OK


def cmd_init(args) -> int:
    cfg = _train_config(args)
    net = identity_model(cfg.model, cfg.seed) if args.identity else RestorationNet(cfg.model, cfg.seed)
    ckpt.save(args.out, make_checkpoint(net, AdamState(), cfg, 0))
    print(f"wrote {'identity' if args.identity else 'untrained'} checkpoint {args.out}")
    return EXIT_OK


# -- train ------------------------------------------------------------------

def _train_config(args) -> TrainConfig:
    sections = read_sections(args.config) if args.config else {}
    flags = {
        "total_iters": args.iters, "milestones": args.milestones, "batch": args.batch, "lr": args.lr,
        "scale_range": args.scale_range, "ckpt_every": args.ckpt_every,
    }
    train_sec = dict(sections.get("train", {}))
    train_sec.update({k: str(v) for k, v in flags.items() if v is not None})
    if "seed" not in train_sec or args.seed is not None:
        train_sec["seed"] = str(_seed(args, TrainConfig.seed))
    if "total_iters" in train_sec and "milestones" not in train_sec:
        # keep the default schedule shape: halvings at 7/8 and 15/16 of the run
        n = int(train_sec["total_iters"])
        train_sec["milestones"] = ",".join(str(m) for m in sorted({n * 7 // 8, n * 15 // 16}) if 0 < m < n)
    sections["train"] = train_sec
    return load_config(None, sections)


def cmd_train(args) -> int:
    resume = ckpt.load(args.resume) if args.resume else None
    if resume is not None:
        cfg = TrainConfig.from_dict(resume.meta["train"])
        if args.iters is not None:
            cfg = dataclasses.replace(cfg, total_iters=args.iters)
    else:
        cfg = _train_config(args)
    dataset = Dataset.from_dir(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(cfg, dataset, resume=resume, out_dir=out, log_path=out / "loss.tsv")
    last = result.log[-1] if result.log else None
    summary = f"l_total {last.report.l_total:.6g} l_rec {last.report.l_rec:.6g}" if last else "no steps run"
    print(f"trained to iteration {result.iteration}: {summary}; checkpoint {out / 'last.ffck'}")
    return EXIT_OK


# -- restore / eval ---------------------------------------------------------

def _scale_floats(text: str) -> tuple[float, float]:
    """Parse without range checks; restore clamps and warns."""
    parts = [float(p) for p in text.split(",")]
    if len(parts) not in (1, 2):
        raise UsageError(f"cannot parse scale {text!r}")
    return (parts[0], parts[-1])


def cmd_restore(args) -> int:
    model = load_model(args.ckpt)
    scale = _scale_floats(args.scale) if args.scale else None
    files = _inputs(Path(args.inp))
    out = Path(args.out)
    single = len(files) == 1 and not out.is_dir() and out.suffix in (".ppm", ".ftns")
    if not single:
        out.mkdir(parents=True, exist_ok=True)
    for path in files:
        lq = read_image(path)
        s = scale
        if s is None:
            if args.size is None:
                raise UsageError("give --scale or --size")
            h, w = args.size
            s = (w / lq.shape[-1], h / lq.shape[-2])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            y = restore(model, lq, s, float32=args.float32)
        for wmsg in caught:
            print(f"warning: {path.name}: {wmsg.message}", file=sys.stderr)
        write_image(out if single else out / path.name, y)
    print(f"restored {len(files)} image(s)")
    return EXIT_OK


def cmd_eval(args) -> int:
    preds = {p.stem: p for p in _inputs(Path(args.pred))}
    refs = {p.stem: p for p in _inputs(Path(args.ref))}
    names = sorted(set(preds) & set(refs))
    if not names:
        raise UsageError("no matching file names between prediction and reference")
    print("name\tpsnr\tssim")
    scores = []
    for name in names:
        a, b = read_image(preds[name]), read_image(refs[name])
        if a.shape != b.shape:
            raise UsageError(f"{name}: prediction {a.shape} vs reference {b.shape}")
        p, s = psnr(a, b), ssim(a, b)
        scores.append((p, s))
        print(f"{name}\t{p:.4f}\t{s:.6f}")
    mean = np.mean(scores, axis=0)
    print(f"mean\t{mean[0]:.4f}\t{mean[1]:.6f}")
    return EXIT_OK


# -- gradcheck / inspect-grid -------------------------------------------------

def cmd_gradcheck(args) -> int:
    report = gradcheck(args.module, _seed(args, 0))
    print("parameter\thybrid_rel_err\tstatus")
    for name, err in report.errors.items():
        print(f"{name}\t{err:.3e}\t{'ok' if err <= report.tolerance else 'FAIL'}")
    if report.ok:
        print(f"gradcheck {args.module}: pass (max {report.max_error:.3e} <= {report.tolerance:g})")
        return EXIT_OK
    print(f"gradcheck {args.module}: FAIL in {', '.join(report.failures)}", file=sys.stderr)
    return EXIT_NUMERIC


def cmd_inspect_grid(args) -> int:
    scale = ScalePair.parse(args.scale)
    h_out, w_out = scale.output_size(args.height, args.width)
    grid = build_grid(h_out, w_out, scale)
    print("x,y,x_prime,y_prime,rx,ry")
    for row in grid.rows():
        print(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _pair(text: str) -> tuple[int, int]:
    parts = text.lower().replace("x", ",").split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected H,W got {text!r}")
    return int(parts[0]), int(parts[1])


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scaleform", description="Arbitrary-scale face restoration toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def seeded(sp):
        sp.add_argument("--seed", type=int, default=None, help="falls back to $SCALEFORM_SEED")
        return sp

    d = seeded(sub.add_parser("degrade", help="synthesize LQ images from HQ ones"))
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--config")
    for name in ("sigma", "r", "delta", "q"):
        d.add_argument(f"--{name}", metavar="A,B")
    d.add_argument("--jitter", metavar="B,C,S", help="color jitter amplitudes")
    d.add_argument("--no-jitter", action="store_true")
    d.add_argument("--resize-back", action="store_true", help="resize LQ back to the HQ size")
    d.set_defaults(func=cmd_degrade)

    t = seeded(sub.add_parser("toyset", help="write procedural toy faces"))
    t.add_argument("--out", required=True)
    t.add_argument("--n", type=int, default=8)
    t.add_argument("--size", type=int, default=32)
    t.add_argument("--suffix", default=".ppm", choices=(".ppm", ".ftns"))
    t.add_argument("--hq-only", action="store_true")
    t.set_defaults(func=cmd_toyset)

    def train_flags(sp):
        sp.add_argument("--config")
        sp.add_argument("--iters", type=int)
        sp.add_argument("--milestones", metavar="M1,M2")
        sp.add_argument("--batch", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--scale-range", metavar="LO,HI")
        sp.add_argument("--ckpt-every", type=int)
        return sp

    i = train_flags(seeded(sub.add_parser("init", help="write an untrained checkpoint")))
    i.add_argument("--out", required=True)
    i.add_argument("--identity", action="store_true", help="generator output zeroed: scale 1 reproduces the input")
    i.set_defaults(func=cmd_init)

    tr = train_flags(seeded(sub.add_parser("train", help="train on a dataset directory")))
    tr.add_argument("--data", required=True, help="hq/+lq/ pairs, or a folder of HQ images")
    tr.add_argument("--out", required=True)
    tr.add_argument("--resume")
    tr.set_defaults(func=cmd_train)

    r = sub.add_parser("restore", help="restore images with a checkpoint")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--scale", metavar="S[,SV]")
    r.add_argument("--size", type=_pair, metavar="H,W", help="target size instead of --scale")
    r.add_argument("--float32", action="store_true", help="single-precision inference")
    r.set_defaults(func=cmd_restore)

    e = sub.add_parser("eval", help="PSNR/SSIM between two folders")
    e.add_argument("--pred", required=True)
    e.add_argument("--ref", required=True)
    e.set_defaults(func=cmd_eval)

    g = seeded(sub.add_parser("gradcheck", help="finite-difference check of backward rules"))
    g.add_argument("--module", default="all", choices=SELECTORS + ("all",))
    g.set_defaults(func=cmd_gradcheck)

    ig = sub.add_parser("inspect-grid", help="dump the sampling grid as CSV")
    ig.add_argument("--height", type=int, required=True, help="input height")
    ig.add_argument("--width", type=int, required=True, help="input width")
    ig.add_argument("--scale", required=True, metavar="S[,SV]")
    ig.set_defaults(func=cmd_inspect_grid)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (NonFiniteError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ScaleformError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
