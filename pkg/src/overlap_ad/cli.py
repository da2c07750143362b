"""Command-line entry point: ``overlap-ad {run,synth,report,dump-embeddings}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench
from .data import load_csv, write_csv
from .synth import ANOMALY_TYPES, SynthSpec, make_synthetic_dataset, two_blob_source

log = logging.getLogger("overlap_ad")


def _load_configs(path) -> list[bench.ExperimentConfig]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(raw, dict) and "runs" in raw:
        raw = raw["runs"]
    if isinstance(raw, dict):
        raw = [raw]
    if not isinstance(raw, list) or not all(isinstance(r, dict) for r in raw):
        raise ValueError("config must be an object, a list of objects, or {'runs': [...]}")
    return [bench.ExperimentConfig.from_dict(r) for r in raw]


def cmd_run(args) -> int:
    configs = _load_configs(args.config)
    failed = 0
    for cfg in configs:
        out = args.out or cfg.output
        records = bench.run_suite(cfg, out=out)
        for rec in records:
            if rec.status != "ok":
                failed += 1
            if out is None:
                print(rec.to_json())
    if failed:
        log.error("%d run(s) failed", failed)
        return 1
    return 0


def cmd_synth(args) -> int:
    if args.source:
        base = load_csv(args.source)
        X = base.features[base.labels == 0]
    else:
        X = two_blob_source(seed=args.seed)
    spec = SynthSpec(anomaly_type=args.type, alpha=args.alpha, n_normals=args.n_normals,
                     anomaly_ratio=args.ratio, seed=args.seed)
    ds = make_synthetic_dataset(X, spec)
    write_csv(ds, args.out)
    print(f"wrote {len(ds)} rows ({ds.n_anomalies} anomalies) to {args.out}")
    return 0


def cmd_report(args) -> int:
    records = bench.read_records(args.infile)
    group = tuple(g.strip() for g in args.group.split(",") if g.strip())
    rep = bench.report(records, group=group, baseline=args.baseline, metric=args.metric)
    if args.json:
        print(json.dumps(rep, indent=2, sort_keys=True))
    else:
        print(bench.format_report(rep))
    return 0


def cmd_dump(args) -> int:
    configs = _load_configs(args.config)
    if len(configs) != 1:
        raise ValueError("dump-embeddings takes a config with exactly one run")
    n = bench.dump_embeddings(configs[0], args.out)
    print(f"wrote {n} embedded test rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="overlap-ad", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train and evaluate every run in a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="results file (JSON lines, appended)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("synth", help="write a synthetic anomaly dataset as CSV")
    s.add_argument("--type", required=True, choices=ANOMALY_TYPES)
    s.add_argument("--source", help="CSV whose label-0 rows seed the generator (default: built-in two-blob sample)")
    s.add_argument("--out", required=True)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--ratio", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-normals", type=int, default=950)
    s.set_defaults(func=cmd_synth)

    rp = sub.add_parser("report", help="aggregate a results file with significance marks")
    rp.add_argument("--in", dest="infile", required=True)
    rp.add_argument("--group", default="loss,dataset")
    rp.add_argument("--baseline", default="overlap")
    rp.add_argument("--metric", default="auc_pr", choices=("auc_pr", "auc_roc"))
    rp.add_argument("--json", action="store_true")
    rp.set_defaults(func=cmd_report)

    d = sub.add_parser("dump-embeddings", help="write hidden-layer outputs for each test row")
    d.add_argument("--config", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_dump)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
