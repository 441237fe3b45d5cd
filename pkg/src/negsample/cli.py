"""Command-line entry point: ``negsample <verb> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from dataclasses import fields, replace
from pathlib import Path

from . import __version__
from .analysis import monte_carlo_bound_check
from .corpus import (ConllFormatError, attach_hidden, format_conll, format_hidden_sidecar,
                     parse_conll, sparsity_csv, sparsity_report)
from .corruption import CorruptionConfig, mask_entities
from .rng import stream
from .span_model import HashedLinearScorer
from .synthetic import planted_corpus
from .trainer import TrainConfig, compare_samplers, evaluate, format_trace, train

log = logging.getLogger("negsample")

EXIT_CONFIG = 2
EXIT_DATA = 3

TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
PATH_KEYS = {"train", "train_hidden", "dev", "dev_hidden", "oracle", "out_dir"}


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None


def _load_dataset(path, hidden_path=None):
    try:
        data = parse_conll(_read_text(path))
        if hidden_path:
            data = attach_hidden(data, _read_text(hidden_path))
    except (ConllFormatError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if not data:
        raise DataError(f"{path}: no sentences")
    return data


def _write_all(files: dict[str, bytes | str], base: Path | None = None) -> None:
    """Write every output or none: stage in a temp dir, then move into place."""
    targets = {(base / name if base else Path(name)): data for name, data in files.items()}
    parent = next(iter(targets)).parent
    parent.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=parent) as tmp:
        staged = []
        for i, (dest, data) in enumerate(targets.items()):
            path = Path(tmp) / str(i)
            path.write_bytes(data.encode("utf-8") if isinstance(data, str) else data)
            staged.append((path, dest))
        for path, dest in staged:
            dest.parent.mkdir(parents=True, exist_ok=True)
            os.replace(path, dest)


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_run_config(path, overrides=()) -> dict:
    """Read a JSON config and apply ``key=value`` overrides; unknown keys are rejected."""
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        cfg[key.strip()] = _parse_value(raw)
    unknown = sorted(set(cfg) - TRAIN_KEYS - PATH_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    if "train" not in cfg:
        raise ConfigError("config needs a 'train' dataset path")
    return cfg


def _train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig(**{k: v for k, v in cfg.items() if k in TRAIN_KEYS})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _resolved(cfg: dict, tc: TrainConfig) -> dict:
    out = {k: cfg[k] for k in sorted(PATH_KEYS & set(cfg))}
    out.update(tc.to_dict())
    out["version"] = __version__
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> None:
    data = planted_corpus(args.sentences, args.seed)
    _write_all({args.out: format_conll(data)})


def cmd_corrupt(args) -> None:
    try:
        config = CorruptionConfig(args.p, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    data = _load_dataset(args.input)
    try:
        corrupted = mask_entities(data, config)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    resolved = {"input": str(args.input), "mask_prob": args.p, "seed": args.seed, "version": __version__}
    _write_all({
        args.out: format_conll(corrupted),
        args.out + ".hidden": format_hidden_sidecar(corrupted),
        args.out + ".config.json": _dumps(resolved),
    })


def cmd_stats(args) -> None:
    data = _load_dataset(args.input, args.hidden)
    rows = sparsity_report(data, args.min_support)
    _write_all({args.out: sparsity_csv(rows)})


def _load_train_inputs(cfg: dict, tc: TrainConfig):
    train_set = _load_dataset(cfg["train"], cfg.get("train_hidden"))
    dev_set = _load_dataset(cfg["dev"], cfg.get("dev_hidden")) if cfg.get("dev") else None
    oracle = None
    if tc.mode == "weighted_fixed":
        if not cfg.get("oracle"):
            raise ConfigError("weighted_fixed mode needs an 'oracle' checkpoint path")
        try:
            oracle = HashedLinearScorer.load(cfg["oracle"])
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"{cfg['oracle']}: {exc}") from None
    return train_set, dev_set, oracle


def cmd_train(args) -> None:
    cfg = load_run_config(args.config, args.set)
    tc = _train_config(cfg)
    out_dir = Path(args.out_dir or cfg.get("out_dir") or "run")
    train_set, dev_set, oracle = _load_train_inputs(cfg, tc)
    labels = oracle.labels if oracle is not None else None
    trace = [] if getattr(args, "trace", False) else None
    result = train(train_set, dev_set, tc, oracle=oracle, labels=labels, trace=trace)

    ckpt = io.BytesIO()
    result.scorer.save(ckpt)
    files = {
        "config.json": _dumps(_resolved(cfg, tc)),
        "epochs.jsonl": "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in result.reports),
        "model.npz": ckpt.getvalue(),
    }
    if trace is not None:
        files["negatives.tsv"] = format_trace(trace)
    if dev_set:
        files["eval.json"] = _dumps(evaluate(result.scorer, dev_set).to_dict())
    _write_all(files, out_dir)


def cmd_compare(args) -> None:
    cfg = load_run_config(args.config, args.set)
    tc = _train_config(cfg)
    if not cfg.get("dev"):
        raise ConfigError("compare needs a 'dev' dataset path")
    out_dir = Path(args.out_dir or cfg.get("out_dir") or "compare")
    train_set, dev_set, _ = _load_train_inputs(cfg, replace(tc, mode="uniform"))
    report = compare_samplers(train_set, dev_set, tc)
    _write_all({"config.json": _dumps(_resolved(cfg, tc)), "trend.json": _dumps(report)}, out_dir)


def cmd_eval(args) -> None:
    try:
        scorer = HashedLinearScorer.load(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"{args.model}: {exc}") from None
    data = _load_dataset(args.data, args.hidden)
    report = evaluate(scorer, data).to_dict()
    if args.out:
        _write_all({args.out: _dumps(report)})
    else:
        sys.stdout.write(_dumps(report))


BOUND_COLUMNS = ("n", "lambda", "m", "h", "k", "exact_q", "bound", "empirical", "trials",
                 "in_premise", "consistent")


def cmd_verify_bound(args) -> None:
    if any(n < 2 for n in args.n):
        raise ConfigError("every n must be >= 2")
    if any(not 0 < lam < 1 for lam in args.lam):
        raise ConfigError("every lambda must lie in (0, 1)")
    if args.trials < 1:
        raise ConfigError("trials must be >= 1")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BOUND_COLUMNS)
    row = 0
    for n in args.n:
        hs = args.hidden if args.hidden is not None else [math.isqrt(n) - args.visible]
        for lam in args.lam:
            for h in hs:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    rep = monte_carlo_bound_check(n, lam, max(h, 0), args.visible, args.trials,
                                                  stream(args.seed, "verify-bound", row))
                row += 1
                if not rep.in_premise:
                    log.warning("n=%d m=%d h=%d violates the sparsity premise", n, rep.m, rep.h)
                writer.writerow([rep.n, repr(rep.lam), rep.m, rep.h, rep.k, repr(rep.exact_q),
                                 repr(rep.lower_bound), repr(rep.empirical_prob), rep.trials,
                                 int(rep.in_premise), int(rep.consistent)])
    resolved = {"n": args.n, "lambda": args.lam, "hidden": args.hidden, "visible": args.visible,
                "trials": args.trials, "seed": args.seed, "version": __version__}
    _write_all({args.out: buf.getvalue(), args.out + ".config.json": _dumps(resolved)})


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="negsample", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap (computation is single-threaded)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a planted toy corpus in CoNLL format")
    p.add_argument("out")
    p.add_argument("--sentences", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("corrupt", help="mask entities at random; writes OUT and OUT.hidden")
    p.add_argument("input")
    p.add_argument("out")
    p.add_argument("--p", type=float, required=True, help="masking probability")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("stats", help="entity sparsity per sentence length (CSV)")
    p.add_argument("input")
    p.add_argument("out")
    p.add_argument("--hidden", help="hidden-span sidecar to count as entities")
    p.add_argument("--min-support", type=int, default=20)
    p.set_defaults(func=cmd_stats)

    for name, func, text in (("train", cmd_train, "train one model from a JSON config"),
                             ("compare", cmd_compare, "uniform vs weighted_adaptive trend report")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--out-dir")
        if name == "train":
            p.add_argument("--trace", action="store_true",
                           help="also write negatives.tsv, one row per sampled negative")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="span F1 of a checkpoint on a CoNLL file")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--hidden", help="hidden-span sidecar; hidden entities count as gold")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify-bound", help="Monte Carlo check of the zero-missampling bound (CSV)")
    p.add_argument("out")
    p.add_argument("--n", type=int, nargs="+", default=[20, 50, 100])
    p.add_argument("--lam", type=float, nargs="+", default=[0.35])
    p.add_argument("--hidden", type=int, nargs="+",
                   help="hidden entity counts (default: floor(sqrt(n)) - visible)")
    p.add_argument("--visible", type=int, default=0)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_bound)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s %(levelname)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"negsample {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"negsample {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
