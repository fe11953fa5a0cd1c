"""Command-line interface: ``gen``, ``train``, ``eval``, ``register``, ``icp``."""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import geometry as G
from . import pipeline as P
from .checkpoint import CheckpointError
from .config import ConfigError, load_config
from .matching import icp

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ------------------------------------------------------------ gen

def _gen_one(args):
    seed, index, shape, mode, points, out = args
    rng = np.random.default_rng([seed, index])
    name = G.SHAPES[index % len(G.SHAPES)] if shape == "mixed" else shape
    pair = G.make_pair(G.sample_shape(name, points, rng), mode, rng)
    G.save_pair(Path(out) / f"pair_{index:05d}", pair)
    return index


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def cmd_gen(a):
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(a.seed, i, a.shape, a.mode, a.points, str(out)) for i in range(a.pairs)]
    _map(_gen_one, jobs, a.workers)
    print(f"wrote {a.pairs} pairs to {out}")


# ------------------------------------------------------------ config plumbing

_KNOBS = {"lam": "lam", "tau": "tau", "ks": "k_s", "km": "k_m", "temperature": "temperature",
          "lr": "lr", "epochs": "epochs", "seed": "seed", "mode": "mode", "layers": "layers",
          "depth": "depth", "d_model": "d_model", "heads": "heads", "k": "k",
          "alpha": "alpha", "beta": "beta", "r_inlier": "r_inlier"}
_FLAGS = ("no_pse", "shallow_wide", "no_pos_enc", "no_gmcce", "literal_losses")


def _add_knobs(p, model: bool = True):
    g = p.add_argument_group("pipeline knobs (override --config)")
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--tau", type=float)
    g.add_argument("--ks", type=int)
    g.add_argument("--km", type=int)
    g.add_argument("--temperature", type=float)
    g.add_argument("--no-gmcce", dest="no_gmcce", action="store_true", default=None)
    if model:
        g.add_argument("--config", help="key = value configuration file")
        for name, kind in (("lr", float), ("epochs", int), ("seed", int), ("layers", int), ("depth", int),
                           ("d_model", int), ("heads", int), ("k", int), ("alpha", float),
                           ("beta", float), ("r_inlier", float)):
            g.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind)
        g.add_argument("--mode", choices=G.PAIR_MODES)
        for flag in ("no_pse", "shallow_wide", "no_pos_enc", "literal_losses"):
            g.add_argument(f"--{flag.replace('_', '-')}", dest=flag, action="store_true", default=None)


def _overrides(a) -> dict:
    out = {}
    for attr, key in _KNOBS.items():
        if getattr(a, attr, None) is not None:
            out[key] = getattr(a, attr)
    for flag in _FLAGS:
        if getattr(a, flag, None):
            out[flag] = True
    return out


# ------------------------------------------------------------ train / eval

def cmd_train(a):
    cfg = load_config(a.config, _overrides(a))
    _, pairs = P.load_dataset(a.data)
    val = P.load_dataset(a.val)[1] if a.val else None
    P.train(cfg, pairs, checkpoint_dir=a.out, val_pairs=val, log_fn=print)
    print(f"checkpoint written to {a.out}")


_WORKER_STATE = {}


def _eval_init(checkpoint, overrides, method):
    if method == "dit":
        _WORKER_STATE["model"] = P.load_checkpoint(checkpoint, overrides)
    else:
        _WORKER_STATE["model"] = (None, load_config(None, overrides))
    _WORKER_STATE["method"] = method


def _eval_one(pair_dir):
    params, cfg = _WORKER_STATE["model"]
    pair = G.load_pair(pair_dir)
    _, results = P.evaluate_pairs([pair], params, cfg, method=_WORKER_STATE["method"])
    return results[0]


def run_evaluation(data, out, checkpoint=None, overrides=None, method="dit", workers=1,
                   record_time=True, name=None):
    dirs = G.list_pairs(data)
    init_args = (checkpoint, overrides or {}, method)
    if workers <= 1:
        _eval_init(*init_args)
        results = [_eval_one(d) for d in dirs]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_eval_init, initargs=init_args) as pool:
            results = list(pool.map(_eval_one, dirs))
    from .metrics import aggregate_metrics

    report = aggregate_metrics([r.rotation_error for r in results], [r.translation_error for r in results])
    P.write_evaluation(out, [d.name for d in dirs], results, report,
                       name or ("ICP" if method == "icp" else "DIT"), record_time)
    return report, results


def cmd_eval(a):
    method = "icp" if a.icp else "dit"
    if method == "dit" and not a.checkpoint:
        raise UsageError("eval: --checkpoint is required unless --icp is given")
    report, results = run_evaluation(a.data, a.out, a.checkpoint, _overrides(a), method, a.workers,
                                     record_time=not a.deterministic)
    failed = sum(not r.ok for r in results)
    print(report.row("ICP" if a.icp else "DIT"))
    if failed:
        print(f"{failed} pairs returned a degenerate estimate")


def cmd_register(a):
    params, cfg = P.load_checkpoint(a.checkpoint, _overrides(a))
    res = P.register_pair(G.load_xyz(a.src), G.load_xyz(a.tgt), params, cfg)
    if not res.ok:
        print(f"warning: {res.message}", file=sys.stderr)
    sys.stdout.write(G.format_matrix(res.transform))


def cmd_icp(a):
    est = icp(G.load_xyz(a.src), G.load_xyz(a.tgt), max_iters=a.iters)
    sys.stdout.write(G.format_matrix(est))


# ------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ditreg", description="Point cloud registration with deep feature interaction.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="generate synthetic registration pairs")
    p.add_argument("--shape", default="mixed", choices=("mixed",) + G.SHAPES)
    p.add_argument("--pairs", type=int, required=True)
    p.add_argument("--mode", default="clean", choices=G.PAIR_MODES)
    p.add_argument("--points", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--val")
    p.add_argument("--out", required=True, help="checkpoint directory")
    _add_knobs(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint (or ICP) on a dataset")
    p.add_argument("--checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="directory for pairs.csv, curve.txt, metrics.txt")
    p.add_argument("--icp", action="store_true", help="evaluate the ICP baseline instead")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--deterministic", action="store_true", help="write time_ms as 0 for byte-stable output")
    _add_knobs(p, model=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("register", help="register two .xyz clouds; prints the 4x4 matrix")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    _add_knobs(p, model=False)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("icp", help="point-to-point ICP between two .xyz clouds")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--iters", type=int, default=50)
    p.set_defaults(func=cmd_icp)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        args.func(args)
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (UsageError, ConfigError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, CheckpointError, P.TrainingAborted) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
