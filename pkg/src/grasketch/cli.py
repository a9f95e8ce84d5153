"""Command-line interface.

Subcommands: gen, ingest, sketch, mc-validate, classify-synth, classify-images,
bench. Exit codes: 0 success, 1 validation failure, 2 config/data errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from grasketch import harness
from grasketch import sketch as sk
from grasketch.data import ManifestError, load_manifest, materialise, synth_benchmark
from grasketch.harness import ConfigError
from grasketch.subspace import DimensionError, Subspace


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--features", type=int, help="sketch feature count m")
    parser.add_argument("--out", default=None, help="output path")
    parser.add_argument("--threads", type=int, default=1, help="worker threads (advisory)")
    parser.add_argument("--config", default=None, help="JSON config file")


def _load_config(args, m_key: str | None = None) -> dict:
    config = {}
    if args.config:
        with open(args.config) as fh:
            config = json.load(fh)
    if m_key and args.features:
        config[m_key] = args.features
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grasketch",
        description="Grassmannian kernels, rank-one-projection sketches, and "
        "subspace classification experiments.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen", help="generate a synthetic subspace dataset")
    _add_common(p)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--per-class-train", type=int, default=20)
    p.add_argument("--per-class-test", type=int, default=20)
    p.add_argument("--ambient", type=int, default=256)
    p.add_argument("--subdim", type=int, default=5)
    p.add_argument("--sigma", type=float, default=0.1)

    p = subs.add_parser("ingest", help="build subspaces from a dataset manifest")
    _add_common(p)
    p.add_argument("manifest")
    p.add_argument("--base-dir", default=".")

    p = subs.add_parser("sketch", help="sketch serialised subspaces")
    _add_common(p)
    p.add_argument("inputs", nargs="+", help="subspace .bin files")
    p.add_argument("--kind", choices=["real", "bits"], default="real")

    p = subs.add_parser("mc-validate", help="Monte Carlo validation of the closed forms")
    _add_common(p)

    p = subs.add_parser("classify-synth", help="synthetic classification experiment")
    _add_common(p)

    p = subs.add_parser("classify-images", help="image-set classification experiment")
    _add_common(p)
    p.add_argument("--manifest", default=None)

    p = subs.add_parser("bench", help="storage and timing benchmark")
    _add_common(p)
    return parser


def _cmd_gen(args) -> int:
    out = args.out or "dataset"
    os.makedirs(out, exist_ok=True)
    train, test = synth_benchmark(
        args.classes,
        args.per_class_train,
        args.per_class_test,
        args.ambient,
        args.subdim,
        args.sigma,
        args.seed,
    )
    entries = []
    for role, dataset in (("train", train), ("test", test)):
        for i, (sample, label) in enumerate(zip(dataset.samples, dataset.labels)):
            name = f"{role}_{i:04d}"
            sample.save(os.path.join(out, name + ".bin"))
            entries.append({"id": name, "label": int(label), "role": role})
    with open(os.path.join(out, "dataset.json"), "w") as fh:
        json.dump(
            {
                "n": args.ambient,
                "k": args.subdim,
                "sigma": args.sigma,
                "seed": args.seed,
                "entries": entries,
            },
            fh,
            indent=2,
        )
    print(f"wrote {len(entries)} subspaces to {out}/")
    return 0


def _cmd_ingest(args) -> int:
    manifest = load_manifest(args.manifest)
    dataset = materialise(manifest, base_dir=args.base_dir)
    out = args.out or "ingested"
    os.makedirs(out, exist_ok=True)
    for entry, sample in zip(manifest.entries, dataset.samples):
        sample.save(os.path.join(out, f"{entry.id}.bin"))
    print(f"wrote {len(dataset)} subspaces to {out}/")
    return 0


def _cmd_sketch(args) -> int:
    m = args.features or 10_000
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    for path in args.inputs:
        sub = Subspace.load(path)
        ensemble = sk.RopEnsemble(args.seed, m, sub.n)
        real = sk.rop_sketch(sub, ensemble)
        result = sk.binarise(real) if args.kind == "bits" else real
        stem = os.path.splitext(os.path.basename(path))[0]
        target = os.path.join(out, f"{stem}.{args.kind}.gskt")
        sk.write_sketch(target, result)
        print(f"{path} -> {target}")
    return 0


def _report_out(report: dict, args, default_name: str) -> None:
    path = args.out or default_name
    harness.write_report(report, path)
    print(f"report written to {path}")


def _cmd_mc_validate(args) -> int:
    report = harness.mc_validate(_load_config(args, m_key="m"))
    path = args.out or "mc_validate.csv"
    with open(path, "w") as fh:
        fh.write(harness.mc_report_csv(report))
    harness.write_report(report, path + ".json")
    for key, ok in report["verdicts"].items():
        print(f"{key}: {'pass' if ok else 'FAIL'}")
    print(f"report written to {path} and {path}.json")
    return 0 if report["ok"] else 1


def _cmd_classify_synth(args) -> int:
    report = harness.synth_experiment(_load_config(args))
    _report_out(report, args, "synth_classify.json")
    print(
        f"exact svm acc {report['exact']['svm_accuracy']:.3f}; "
        f"k1 acc @ largest m {report['k1']['mean'][-1]:.3f}; "
        f"k3 acc @ largest m {report['k3']['mean'][-1]:.3f}"
    )
    return 0


def _cmd_classify_images(args) -> int:
    config = _load_config(args)
    if args.manifest:
        config["manifest"] = args.manifest
    report = harness.imageset_experiment(config)
    _report_out(report, args, "imageset_classify.json")
    return 0


def _cmd_bench(args) -> int:
    report = harness.bench(_load_config(args))
    _report_out(report, args, "bench.json")
    for row in report["storage"]:
        print(f"m={row['m']}: payload ratio {row['payload_ratio']:.2f}")
    print(f"pm1_dot speedup over float dot: {report['timing']['speedup']:.1f}x")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "ingest": _cmd_ingest,
    "sketch": _cmd_sketch,
    "mc-validate": _cmd_mc_validate,
    "classify-synth": _cmd_classify_synth,
    "classify-images": _cmd_classify_images,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ManifestError, DimensionError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
