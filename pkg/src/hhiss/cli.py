"""Command-line front end: ``hhiss {extract,synth,train,eval,bench}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, format_run_config, load_run_config
from .data import (
    FeatureDataset,
    kfold_person_disjoint,
    load_feature_dataset,
    load_feature_datasets,
    person_disjoint_split,
    write_feature_dataset,
)
from .errors import ConfigError, DataError, NumericalError
from .metrics import evaluate, format_table, ood_mean, saliency_map
from .net import predict
from .synthgen import bayes_oracle_accuracy, generate_domains
from .trainer import METHODS, fit

log = logging.getLogger("hhiss")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _run_config(args) -> RunConfig:
    overrides = list(getattr(args, "set", None) or [])
    if getattr(args, "seed", None) is not None:
        overrides += [f"train.seed={args.seed}", f"split.seed={args.seed}", f"synth.seed={args.seed}"]
    return load_run_config(getattr(args, "config", None), overrides)


# --- extract -----------------------------------------------------------------


def cmd_extract(args) -> int:
    from .features import default_registry, extract_dataset, find_sessions, load_session

    dirs = find_sessions(args.raw_dir)
    if not dirs:
        raise DataError(f"no sessions found under {args.raw_dir}")
    registry = default_registry()
    sessions = []
    for d in dirs:
        try:
            sessions.append(load_session(d))
        except DataError as exc:
            log.error("skipping %s: %s", d, exc)
    if not sessions:
        raise DataError("every session failed to parse")
    ds = extract_dataset(sessions, registry, name=Path(args.out).stem, normalize=not args.no_normalize)
    write_feature_dataset(ds, args.out, run_config={"command": "extract", "raw_dir": str(args.raw_dir)})
    print(f"rows\t{len(ds)}\nsubjects\t{len(ds.subject_ids)}\nfeatures\t{ds.n_features}\nregistry_hash\t{ds.registry_hash}")
    return EXIT_OK


# --- synth -------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _run_config(args)
    train, ood = generate_domains(cfg.synth)
    out = Path(args.out_dir)
    rc = {"command": "synth", **cfg.to_dict()}
    write_feature_dataset(train, out / "train.csv", run_config=rc)
    write_feature_dataset(ood, out / "ood.csv", run_config=rc)
    print(f"train\t{out / 'train.csv'}\t{len(train)}\nood\t{out / 'ood.csv'}\t{len(ood)}")
    print(f"bayes_oracle_accuracy\t{bayes_oracle_accuracy(cfg.synth):.6f}")
    return EXIT_OK


# --- train -------------------------------------------------------------------


def _split(ds: FeatureDataset, cfg: RunConfig):
    s = cfg.split
    if s.protocol == "none":
        return ds, None, None
    if s.protocol == "holdout":
        plan = person_disjoint_split(ds, s.n_train, s.seed, s.key)
    else:
        plans = kfold_person_disjoint(ds, s.k, s.seed, s.key)
        if not 0 <= s.fold < len(plans):
            raise ConfigError(f"fold must be in [0, {len(plans)})")
        plan = plans[s.fold]
    return ds.select(plan.train, s.key, "train"), ds.select(plan.test, s.key, "test"), plan


def cmd_train(args) -> int:
    cfg = _run_config(args)
    ds = load_feature_datasets(args.features)
    train, test, plan = _split(ds, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.jsonl"
    trace_path.write_text("")

    def on_round(trace):
        with open(trace_path, "a") as fh:
            fh.write(trace.to_json() + "\n")

    res = fit(args.method, train, cfg.train, on_round)
    train_ba = evaluate(train.y, predict(res.params, train.X), "train").balanced_accuracy
    summary = {"method": args.method, "train_ba": train_ba, "val_ba": res.val_ba}
    if test is not None:
        summary["test_ba"] = evaluate(test.y, predict(res.params, test.X), "test").balanced_accuracy
        (out / "split.json").write_text(plan.to_json() + "\n")
    save_checkpoint(
        Checkpoint(res.params, args.method, ds.registry_hash, ds.feature_names, cfg.train.to_dict(), {"summary": summary}),
        out / "model.ckpt",
    )
    _write_json(
        out / "train_manifest.json",
        {
            "command": "train",
            "version": __version__,
            "features": [str(p) for p in args.features],
            "registry_hash": ds.registry_hash,
            "config_fingerprint": cfg.train.fingerprint(),
            "run_config": cfg.to_dict(),
            "dataset": train.manifest(),
            "split": None if plan is None else asdict(plan),
            "summary": summary,
            "stage1_history": res.history,
        },
    )
    if res.traces:
        from .plotting import plot_retention

        plot_retention(res.traces, out / "retention.png", cfg.train.prune_fraction)
    for k, v in summary.items():
        print(f"{k}\t{v if isinstance(v, str) or v is None else f'{v:.4f}'}")
    print(f"rounds\t{len(res.traces)}")
    return EXIT_OK


# --- eval --------------------------------------------------------------------


def _tagged(specs) -> list[tuple[str, str]]:
    out = []
    for s in specs:
        tag, sep, path = s.partition("=")
        if not sep:
            tag, path = Path(s).stem, s
        out.append((tag, path))
    return out


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    reports, scores = {}, {}
    sal_rows = []
    for tag, path in _tagged(args.data):
        ds = load_feature_dataset(path)
        if ds.registry_hash != ckpt.registry_hash or ds.feature_names != ckpt.feature_names:
            raise DataError(f"{path}: registry hash {ds.registry_hash} does not match checkpoint {ckpt.registry_hash}")
        r = evaluate(ds.y, predict(ckpt.params, ds.X), tag)
        reports[tag] = r
        scores[tag] = r.balanced_accuracy
        if args.saliency:
            sal_rows.append(saliency_map(ckpt.params, ds.X))
    ood = [t.strip() for t in args.ood.split(",")] if args.ood else []
    table = format_table({args.name or ckpt.method: reports}, ood)
    print(table)
    if args.out_dir:
        from .plotting import plot_saliency, plot_scores

        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.tsv").write_text(table + "\n")
        payload = {"checkpoint": str(args.checkpoint), "reports": {t: r.to_dict() for t, r in reports.items()}}
        if ood:
            payload["ood_mean"] = ood_mean(reports, ood)
        _write_json(out / "metrics.json", payload)
        plot_scores({args.name or ckpt.method: scores}, out / "scores.png")
        if sal_rows:
            sal = np.vstack(sal_rows)
            np.savetxt(out / "saliency.csv", sal, delimiter=",", header=",".join(ckpt.feature_names), comments="", fmt="%.10g")
            plot_saliency(sal, ckpt.feature_names, out / "saliency.png")
    return EXIT_OK


# --- bench -------------------------------------------------------------------


def cmd_bench(args) -> int:
    from .bench import run_benchmark

    overrides = list(args.set or [])
    if args.seeds:
        overrides.append(f"bench.seeds={args.seeds}")
    if args.methods:
        overrides.append(f"bench.methods={args.methods}")
    cfg = load_run_config(args.config, overrides)

    def on_row(r):
        log.info("seed %d %s ood_ba=%.4f (%.1fs)", r.seed, r.method, r.ood_ba, r.seconds)

    res = run_benchmark(cfg, on_row)
    text = res.format()
    print(text)
    if args.out_dir:
        from .plotting import plot_bench, plot_retention

        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.tsv").write_text(text + "\n")
        (out / "run_config.ini").write_text(format_run_config(cfg))
        plot_bench(res.per_method(), out / "bench.png", res.oracle)
        for (seed, m), traces in res.traces.items():
            plot_retention(traces, out / f"retention_{m}_seed{seed}.png", cfg.train.prune_fraction)
    return EXIT_OK


# --- entry point -------------------------------------------------------------


def _common(p: argparse.ArgumentParser, seed: bool = True):
    p.add_argument("--config", type=Path, help="INI file with [train], [split], [synth], [bench] sections")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
    if seed:
        p.add_argument("--seed", type=int, help="shortcut for the train, split and synth seeds")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hhiss", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("extract", help="raw sessions -> windowed feature file")
    e.add_argument("raw_dir", type=Path)
    e.add_argument("-o", "--out", type=Path, required=True)
    e.add_argument("--no-normalize", action="store_true", help="skip change-score normalisation")
    e.set_defaults(func=cmd_extract)

    s = sub.add_parser("synth", help="write synthetic train/ood feature files")
    s.add_argument("-o", "--out-dir", type=Path, required=True)
    _common(s)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train one method on feature files")
    t.add_argument("features", type=Path, nargs="+")
    t.add_argument("--method", choices=METHODS, default="hhiss")
    t.add_argument("-o", "--out-dir", type=Path, required=True)
    _common(t)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("eval", help="score a checkpoint on tagged feature files")
    v.add_argument("checkpoint", type=Path)
    v.add_argument("data", nargs="+", metavar="TAG=PATH")
    v.add_argument("--ood", help="comma-separated tags averaged into the OOD mean")
    v.add_argument("--name", help="approach name in the report")
    v.add_argument("--saliency", action="store_true", help="export absolute input-gradient saliency")
    v.add_argument("-o", "--out-dir", type=Path)
    v.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="ERM vs HHISS (and others) on the synthetic benchmark")
    b.add_argument("--seeds", help="comma-separated seeds")
    b.add_argument("--methods", help="comma-separated methods")
    b.add_argument("-o", "--out-dir", type=Path)
    _common(b, seed=False)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help and --version
        return exc.code
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"hhiss: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"hhiss: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"hhiss: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
