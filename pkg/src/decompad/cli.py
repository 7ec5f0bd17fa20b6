"""Command-line entry point.

    decompad decompose series.csv -o parts.csv [--no-period | --period T]
    decompad augment series.csv -o out.csv --transform phase --seed 3
    decompad train corpus/ -o model.rtad [--config cfg.json] [--variant dewa]
    decompad evaluate model.rtad corpus/ [--baseline] [--m 3] [-o report.json]
    decompad stream model.rtad [--history train.csv] < values.txt
    decompad synth corpus/ [--n 20] [--seed 0]

Configuration files are JSON objects mirroring :class:`PipelineConfig`
(``{"stride": 4, "net": {"epochs": 5}, "decompose": {"lam2": 20}}``);
command-line flags override them. Exit codes: 0 success, 2 usage error,
3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from dataclasses import replace
from typing import List, Optional, Tuple

import numpy as np

from . import __version__
from .augment import augment_series
from .core import DataError, LabeledSeries, load_csv, save_csv, split_train_test
from .decompose import DecomposeConfig, decompose, save_decomposition_csv
from .metrics import evaluate
from .net import ModelFormatError, Network, NumericError
from .stream import StreamDetector
from .synthetic import make_corpus, write_corpus
from .train import (VARIANTS, Detector, PipelineConfig, baseline_results,
                    evaluate_batch, train_model)
from .trend import SolverError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("decompad")


class UsageError(Exception):
    pass


def _load_config(path: Optional[str]) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise DataError(f"{path}: invalid JSON ({err})")
    if not isinstance(doc, dict):
        raise DataError(f"{path}: config must be a JSON object")
    try:
        return PipelineConfig.from_dict(doc)
    except (TypeError, ValueError) as err:
        raise DataError(f"{path}: {err}")


def _apply_flags(cfg: PipelineConfig, args) -> PipelineConfig:
    kw = {}
    if getattr(args, "window", None) is not None:
        w = args.window
        kw.update(window=w, net=replace(cfg.net, window=w),
                  stream=replace(cfg.stream, window=w, buffer=max(w, cfg.stream.buffer)))
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "stride", None) is not None:
        kw["stride"] = args.stride
    if getattr(args, "threshold", None) is not None:
        kw["threshold"] = args.threshold
        kw["stream"] = replace(kw.get("stream", cfg.stream), threshold=args.threshold)
    if getattr(args, "q", None) is not None:
        kw["stream"] = replace(kw.get("stream", cfg.stream), q=args.q)
    if getattr(args, "m", None) is not None:
        kw["m"] = args.m
    if getattr(args, "epochs", None) is not None:
        kw["net"] = replace(kw.get("net", cfg.net), epochs=args.epochs)
    try:
        cfg = replace(cfg, **kw)
        if getattr(args, "variant", None):
            cfg = cfg.variant(args.variant)
    except ValueError as err:
        raise UsageError(str(err))
    return cfg


def _load_series(path: str) -> LabeledSeries:
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    return load_csv(path)


def _load_corpus(directory: str) -> Tuple[List[str], List[LabeledSeries]]:
    if not os.path.isdir(directory):
        raise DataError(f"not a directory: {directory}")
    names, corpus = [], []
    for path in sorted(glob.glob(os.path.join(directory, "*.csv"))):
        try:
            corpus.append(load_csv(path))
            names.append(path)
        except DataError as err:
            log.warning("skipping %s: %s", path, err)
    if not corpus:
        raise DataError(f"no readable series in {directory}")
    return names, corpus


def _load_model(path: str, cfg: Optional[PipelineConfig] = None):
    if not os.path.exists(path):
        raise DataError(f"no such model file: {path}")
    try:
        net, meta = Network.load(path, expect=cfg.net if cfg is not None else None)
    except ModelFormatError as err:
        raise DataError(f"{path}: {err}")
    stored = PipelineConfig.from_dict(meta["pipeline"]) if "pipeline" in meta else PipelineConfig()
    return net, stored


# -- commands -------------------------------------------------------------

def cmd_decompose(args) -> int:
    s = _load_series(args.input)
    cfg = _load_config(args.config).decompose
    if args.no_period:
        cfg = replace(cfg, periodic=False, period=None)
    elif args.period is not None:
        cfg = replace(cfg, period=args.period)
    dec = decompose(s, cfg)
    out = args.output or sys.stdout
    save_decomposition_csv(s, dec, out)
    if args.output:
        kind = f"period {dec.period}" if dec.period else "no period"
        print(f"wrote {args.output} ({len(dec)} points, {kind})", file=sys.stderr)
    return EXIT_OK


def cmd_augment(args) -> int:
    s = _load_series(args.input)
    cfg = _load_config(args.config)
    policy = cfg.augment if args.seed is None else cfg.augment.with_seed(args.seed)
    if args.transform != "all":
        only = {name: name == args.transform for name in
                ("flip", "downsample", "crop", "label_expansion", "magnitude", "phase")}
        policy = replace(policy, **only)
    if args.remainder:
        s = s.with_values(decompose(s, cfg.decompose).remainder)
    rng = np.random.default_rng(policy.seed)
    outputs = augment_series(s, policy, rng)
    if not outputs:
        raise DataError("no transform applied (series too short or all disabled)")
    base, ext = os.path.splitext(args.output)
    for name, series in outputs:
        path = args.output if len(outputs) == 1 else f"{base}_{name}{ext or '.csv'}"
        save_csv(series, path)
        print(f"wrote {path} ({name}, {len(series)} points)", file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _apply_flags(_load_config(args.config), args)
    names, corpus = _load_corpus(args.corpus)
    if all(len(s) < 2 * cfg.window for s in corpus):
        raise DataError(f"every series is shorter than {2 * cfg.window} points")
    det, report = train_model(corpus, cfg)
    report["skipped"] = [names[i] for i in report["skipped"]]
    meta = {"pipeline": cfg.to_dict(), "beta_label": report["beta_label"],
            "windows": report["windows"], "per_transform": report["per_transform"]}
    det.net.save(args.output, meta)
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report, fh, indent=1, sort_keys=True)
    print(f"trained on {report['windows']} windows "
          f"({', '.join(f'{k}={v}' for k, v in sorted(report['per_transform'].items()))}); "
          f"final loss {report['epoch_loss'][-1] if report['epoch_loss'] else float('nan'):.4f}",
          file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    given = _load_config(args.config) if args.config else None
    net, stored = _load_model(args.model, given)
    cfg = _apply_flags(given or stored, args)
    # the model decides how its inputs were built
    cfg = replace(cfg, use_decomposition=stored.use_decomposition, standardize=stored.standardize)
    names, corpus = _load_corpus(args.corpus)
    det = Detector(net, cfg.standardize)
    kept = [(n, s) for n, s in zip(names, corpus) if len(s) >= 2 * cfg.window]
    if not kept:
        raise DataError(f"every series is shorter than {2 * cfg.window} points")
    results = evaluate_batch(det, [s for _, s in kept], cfg)
    rep = evaluate([r.predictions for r in results], [r.labels for r in results], cfg.m)
    out = {"model": rep.to_dict()}
    print(f"model:    {rep.summary()}")
    bres = None
    if args.baseline:
        thr, bres = baseline_results([s for _, s in kept], args.baseline_window, cfg.m,
                                      min_length=2 * cfg.window)
        brep = evaluate([r.predictions for r in bres], [r.labels for r in bres], cfg.m)
        out["baseline"] = dict(brep.to_dict(), threshold=thr, window=args.baseline_window)
        print(f"baseline: {brep.summary()}")
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(out, fh, indent=1, sort_keys=True)
    if args.scores:
        _write_scores(args.scores, kept, results, bres)
    return EXIT_OK


def _write_scores(path, kept, results, bres):
    lines = ["series,timestamp,value,is_anomaly,score,prediction"
             + (",baseline_score,baseline_prediction" if bres else "")]
    for i, ((name, s), r) in enumerate(zip(kept, results)):
        _, test = split_train_test(s)
        for j in range(len(test)):
            row = [os.path.basename(name), str(int(test.timestamps[j])),
                   repr(float(test.values[j])), str(int(test.labels[j])),
                   repr(float(r.scores[j])), str(int(r.predictions[j]))]
            if bres:
                row += [repr(float(bres[i].scores[j])), str(int(bres[i].predictions[j]))]
            lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_stream(args, stdin=None, stdout=None) -> int:
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    net, stored = _load_model(args.model)
    cfg = _apply_flags(stored, args)
    history = _load_series(args.history).values if args.history else None
    if not cfg.use_decomposition:
        raise DataError("streaming needs a model trained on remainders")
    det = StreamDetector(Detector(net, cfg.standardize), cfg.stream, history)
    index = 0
    for lineno, line in enumerate(stdin, start=1):
        text = line.strip()
        if not text:
            continue
        field = text.split(",")[-1].strip()
        try:
            value = float(field)
        except ValueError:
            raise DataError(f"line {lineno}: not a number: {text!r}")
        if not np.isfinite(value):
            raise DataError(f"line {lineno}: non-finite value")
        v = det.push(value)
        stdout.write(f"{index},{v.score!r},{int(v.is_anomaly)}\n")
        index += 1
    stdout.flush()
    return EXIT_OK


def cmd_synth(args) -> int:
    corpus = make_corpus(args.n, args.length, args.period, args.rate, args.seed)
    paths = write_corpus(args.directory, corpus)
    print(f"wrote {len(paths)} series to {args.directory}", file=sys.stderr)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="decompad", description="Decomposition-based time-series anomaly detection.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decompose", help="split a series into trend, seasonal and remainder")
    d.add_argument("input")
    d.add_argument("-o", "--output")
    d.add_argument("--config")
    g = d.add_mutually_exclusive_group()
    g.add_argument("--no-period", action="store_true", help="force the trend-only path")
    g.add_argument("--period", type=int)
    d.set_defaults(func=cmd_decompose)

    a = sub.add_parser("augment", help="write augmented copies of a series")
    a.add_argument("input")
    a.add_argument("-o", "--output", required=True)
    a.add_argument("--config")
    a.add_argument("--transform", default="all",
                   choices=["all", "flip", "downsample", "crop", "label_expansion",
                            "magnitude", "phase"])
    a.add_argument("--remainder", action="store_true", help="augment the decomposed remainder")
    a.add_argument("--seed", type=int)
    a.set_defaults(func=cmd_augment)

    t = sub.add_parser("train", help="train a detector on the train halves of a corpus")
    t.add_argument("corpus")
    t.add_argument("-o", "--output", required=True)
    t.add_argument("--config")
    t.add_argument("--report")
    t.add_argument("--variant", choices=sorted(VARIANTS))
    t.add_argument("--window", type=int)
    t.add_argument("--stride", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score the test halves of a corpus")
    e.add_argument("model")
    e.add_argument("corpus")
    e.add_argument("--config")
    e.add_argument("-o", "--output")
    e.add_argument("--scores", help="per-point score CSV")
    e.add_argument("--m", type=int, default=None, help="lag for relaxed F1 (default 3)")
    e.add_argument("--threshold", type=float)
    e.add_argument("--q", type=int)
    e.add_argument("--window", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--baseline", action="store_true", help="also run the rolling z-score baseline")
    e.add_argument("--baseline-window", type=int, default=48)
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("stream", help="score values read from stdin, one per line")
    s.add_argument("model")
    s.add_argument("--history", help="CSV whose values pre-fill the buffer")
    s.add_argument("--threshold", type=float)
    s.add_argument("--q", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_stream)

    y = sub.add_parser("synth", help="write a synthetic labeled corpus")
    y.add_argument("directory")
    y.add_argument("--n", type=int, default=20)
    y.add_argument("--length", type=int, default=1440)
    y.add_argument("--period", type=int, default=24)
    y.add_argument("--rate", type=float, default=0.01)
    y.add_argument("--seed", type=int, default=0)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, IsADirectoryError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, NumericError, FloatingPointError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
