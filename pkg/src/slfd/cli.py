"""``slfd`` command line: gen-data, distill, eval, ablate-rank, report.

Exit codes: 0 success, 1 usage or config error, 2 numerical abort,
3 IO or format error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config, parse_int_list, parse_ranks
from .data import gen_procedural, load_dataset, save_dataset
from .distill import DistillTrace, run_distillation
from .errors import ConfigError, FormatError, NumericalAbort
from .evaluation import ArchPool, cross_arch_report, parse_report_csv
from .generator import Generator, load_generator, save_generator

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def version_string():
    """Package version plus ``git describe`` of the source tree when available."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# --------------------------------------------------------------------------
# run directory


def _prepare_out(args, cfg, command):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.text:
        (out / "config.ini").write_text(cfg.text)
    (out / "config.effective.ini").write_text(cfg.render())
    seeds = {
        "command": command,
        "root_seed": cfg.root_seed,
        "data_seed": cfg.data_seed(),
        "distill_seed": cfg.distill_config().seed,
        "eval_seeds": cfg.eval_seeds(),
    }
    (out / "seeds.json").write_text(json.dumps(seeds, indent=2) + "\n")
    (out / "VERSION").write_text(version_string() + "\n")
    return out


def _load_cfg(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.run = dataclasses.replace(cfg.run, seed=args.seed)
    return cfg


def _datasets(cfg):
    d = cfg.data
    if d.train_path:
        train = load_dataset(d.train_path, "train")
        test = load_dataset(d.test_path, "test") if d.test_path else None
        return train, test
    return gen_procedural(d.num_classes, d.n_train_per_class, d.n_test_per_class, d.res,
                          cfg.data_seed(), d.jitter, d.amp_sigma, d.pix_sigma)


def _generator(cfg, image_shape):
    if cfg.generator.weights:
        gen = load_generator(cfg.generator.weights)
        if gen.spec.img_shape != tuple(image_shape):
            raise ConfigError(f"generator produces {gen.spec.img_shape}, data is {image_shape}")
        return gen
    return Generator(cfg.generator_spec(image_shape))


def _summary(name, d):
    counts = " ".join(str(int(c)) for c in d.class_counts())
    ch, h, w = d.image_shape
    return f"{name}: N={len(d)} C={d.class_count} res={h}x{w} channels={ch} per-class=[{counts}]"


# --------------------------------------------------------------------------
# commands


def cmd_gen_data(args):
    cfg = _load_cfg(args)
    out = _prepare_out(args, cfg, "gen-data")
    d = cfg.data
    train, test = gen_procedural(d.num_classes, d.n_train_per_class, d.n_test_per_class, d.res,
                                 cfg.data_seed(), d.jitter, d.amp_sigma, d.pix_sigma)
    save_dataset(train, out / "train.slfd")
    save_dataset(test, out / "test.slfd")
    print(_summary("train", train))
    print(_summary("test", test))
    return EXIT_OK


def _distill_once(cfg, train, out, resume=None, echo=True, **overrides):
    dcfg = cfg.distill_config(**overrides)
    gen = _generator(cfg, train.image_shape)
    save_generator(gen, out / "generator.bin")
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    records = []

    def on_epoch(rec):
        records.append(rec)
        if echo and (rec.epoch % 50 == 0 or rec.epoch == dcfg.epochs - 1):
            print(f"epoch {rec.epoch:4d}  loss {rec.total_loss:.5f}  {rec.seconds:.2f}s", flush=True)

    try:
        syn, trace = run_distillation(dcfg, train, gen, checkpoint_dir=ckpt_dir,
                                      resume=resume, on_epoch=on_epoch)
    except NumericalAbort as exc:
        DistillTrace(records).to_csv(out / "trace.csv")
        rec = dataclasses.asdict(exc.record) if exc.record is not None else {}
        (out / "abort.json").write_text(json.dumps(rec, indent=2, default=float) + "\n")
        raise
    save_dataset(syn, out / "synset.slfd")
    trace.to_csv(out / "trace.csv")
    (out / "batch_hashes.txt").write_text("".join(f"{r.epoch} {r.batch_hash}\n" for r in trace.records))
    return syn, trace


def cmd_distill(args):
    cfg = _load_cfg(args)
    out = _prepare_out(args, cfg, "distill")
    train, _ = _datasets(cfg)
    print(_summary("train", train))
    syn, trace = _distill_once(cfg, train, out, resume=args.resume)
    print(f"wrote {len(syn)} synthetic images and {len(trace)} trace rows to {out}")
    return EXIT_OK


def _report(cfg, synset, testset, seeds=None):
    pool = ArchPool(cfg.eval_archs(), cfg.eval.seen)
    return cross_arch_report(synset, testset, pool, seeds or cfg.eval_seeds(),
                             cfg.eval.epochs, cfg.eval.lr)


def cmd_eval(args):
    cfg = _load_cfg(args)
    if args.seeds:
        cfg.eval = dataclasses.replace(cfg.eval, seeds=args.seeds)
    out = _prepare_out(args, cfg, "eval")
    synset = load_dataset(args.synset, "train")
    if args.test:
        testset = load_dataset(args.test, "test")
    else:
        _, testset = _datasets(cfg)
        if testset is None:
            raise ConfigError("no test set: pass --test or set [data] test_path")
    rep = _report(cfg, synset, testset)
    (out / "report.csv").write_text(rep.to_csv())
    print(rep.summary_table())
    return EXIT_OK


def cmd_ablate_rank(args):
    cfg = _load_cfg(args)
    ranks = parse_ranks(args.ranks) if args.ranks else cfg.ranks()
    seeds = parse_int_list(args.distill_seeds, "--distill-seeds")
    out = _prepare_out(args, cfg, "ablate-rank")
    train, test = _datasets(cfg)
    if test is None:
        raise ConfigError("ablate-rank needs a test split")
    rows = []
    for rank in ranks:
        label = "full" if rank == -1 else str(rank)
        scores = []
        for seed in seeds:
            sub = out / f"rank_{label}" / f"seed_{seed}"
            sub.mkdir(parents=True, exist_ok=True)
            print(f"rank={label} seed={seed}", flush=True)
            syn, _ = _distill_once(cfg, train, sub, echo=False, rank=rank, seed=seed)
            rep = _report(cfg, syn, test)
            (sub / "report.csv").write_text(rep.to_csv())
            scores.append(rep.cross_arch)
        scores = np.array(scores)
        std = float(scores.std(ddof=1)) if len(scores) > 1 else 0.0
        rows.append((label, float(scores.mean()), std))
        print(f"rank={label} cross_arch={scores.mean():.4f} +- {std:.4f}", flush=True)
    with open(out / "ablation.csv", "w") as fh:
        fh.write("rank,cross_arch_mean,cross_arch_std\n")
        for label, m, s in rows:
            fh.write(f"{label},{m!r},{s!r}\n")
    return EXIT_OK


def cmd_report(args):
    path = Path(args.path)
    if path.is_dir():
        path = path / "report.csv"
    report, summary, cross = parse_report_csv(path.read_text(), seen=args.seen)
    # recompute from raw rows; the summary block must agree exactly
    for arch, (m, s) in summary.items():
        if abs(report.mean(arch) - m) > 1e-12 or abs(report.std(arch) - s) > 1e-12:
            raise FormatError(f"{path}: summary for {arch} disagrees with raw rows")
    if abs(report.cross_arch - cross) > 1e-12:
        raise FormatError(f"{path}: cross_arch line disagrees with raw rows")
    print(report.summary_table())
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="slfd", description="Latent feature distillation at desk scale.")
    p.add_argument("--version", action="version", version=f"slfd {version_string()}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="sectioned key = value file")
        sp.add_argument("--out", required=out_required, help="run directory")
        sp.add_argument("--seed", type=int, help="root seed; overrides [run] seed")

    sp = sub.add_parser("gen-data", help="write train/test SLFDSET1 files")
    common(sp)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("distill", help="distill a synthetic set")
    common(sp)
    sp.add_argument("--resume", help="checkpoint to continue from")
    sp.set_defaults(func=cmd_distill)

    sp = sub.add_parser("eval", help="cross-architecture evaluation of a synthetic set")
    common(sp)
    sp.add_argument("--synset", required=True, help="SLFDSET1 synthetic set")
    sp.add_argument("--test", help="SLFDSET1 test set (default: from [data])")
    sp.add_argument("--seeds", help="comma-separated training seeds (overrides [eval] seeds)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate-rank", help="distill + eval for several covariance ranks")
    common(sp)
    sp.add_argument("--ranks", help="comma-separated ranks, 'full' allowed (overrides [run] ranks)")
    sp.add_argument("--distill-seeds", default="0,1,2,3,4", help="seeds shared by every rank")
    sp.set_defaults(func=cmd_ablate_rank)

    sp = sub.add_parser("report", help="check and print a report CSV")
    sp.add_argument("path", help="report.csv or a run directory containing one")
    sp.add_argument("--seen", default=ArchPool().seen)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalAbort as exc:
        print(f"slfd: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FormatError as exc:
        print(f"slfd: format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"slfd: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"slfd: io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
