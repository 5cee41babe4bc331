"""Command-line pipeline driver.

Every command works against a workspace directory (``--out``) holding the
pipeline artifacts, honors ``--seed``, and accepts ``--config`` as inline JSON
or a JSON file of :class:`~combustor_inn.workflow.PipelineConfig` overrides.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

# BLAS threading hurts at this problem's matrix sizes (and single-thread keeps
# runs bit-reproducible across machines with different core counts).
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")


def _load_config(args) -> "PipelineConfig":
    from .workflow import PipelineConfig

    overrides = {}
    if args.config:
        text = args.config
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text()
        overrides = json.loads(text)
    config = PipelineConfig.from_dict(overrides)
    if args.seed is not None:
        from dataclasses import replace

        config = replace(config, seed=args.seed)
    return config


def _stage_command(stages):
    def run(args):
        from .workflow import run_pipeline

        config = _load_config(args)
        manifest = run_pipeline(args.out, config, stages=stages)
        print(json.dumps({"out": str(args.out), "files": manifest["files"]}, indent=1))
        return 0

    return run


def cmd_tune(args) -> int:
    from .domain import dataset_read
    from .surrogate import surrogates_load
    from .tuning import HyperparamSpace, InnTuningRunner, hyperband, write_trace_jsonl
    from .workflow import target_grid

    out = Path(args.out)
    config = _load_config(args)
    dataset = dataset_read(out / "dataset.csv").subset(slice(0, config.train_rows))
    surrogates = surrogates_load(out / "surrogates.json")
    runner = InnTuningRunner(dataset, surrogates, target_grid(), m=args.m)
    result = hyperband(HyperparamSpace(), args.budget, args.eta, runner, seed=config.seed)
    write_trace_jsonl(out / "tuning_trace.jsonl", result["trace"])
    best = {
        "best_config": result["best_config"].as_dict(),
        "best_objective": result["best_objective"],
        "epochs_total": result["epochs_total"],
    }
    (out / "tuning_best.json").write_text(json.dumps(best, indent=1, sort_keys=True))
    print(json.dumps(best, indent=1, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    from .workflow import render_accuracy_table, render_comparison_table

    out = Path(args.out)
    report = json.loads((out / "report.json").read_text())
    sections = []
    if "inn" in report:
        sections.append("Generated-design accuracy (oracle-validated)")
        sections.append(render_accuracy_table(report["inn"]["rows"]))
        sections.append(f"mean yield: {report['inn']['mean_yield']:.3f}")
    if "comparison" in report:
        sections.append("")
        sections.append("Baseline comparison (surrogate-scored GP vs oracle-scored flow)")
        sections.append(render_comparison_table(report["comparison"]))
    text = "\n".join(sections)
    (out / "report.txt").write_text(text + "\n")
    print(text)
    return 0


def cmd_serve(args) -> int:
    from .domain import dataset_read
    from .flow import model_load
    from .server import DesignService, build_http_server
    from .surrogate import surrogates_load

    out = Path(args.out)
    baseline_data = None
    dataset_path = out / "dataset.csv"
    if dataset_path.exists():
        baseline_data = dataset_read(dataset_path).subset(slice(0, _load_config(args).train_rows))
    service = DesignService(
        model_load(out / "model.json"),
        surrogates_load(out / "surrogates.json"),
        baseline_data=baseline_data,
    )
    try:
        server = build_http_server(service, host=args.host, port=args.port)
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 1
    print(f"serving on http://{args.host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_rerun(args) -> int:
    from .workflow import rerun_from_manifest

    manifest = rerun_from_manifest(args.manifest, args.out)
    print(json.dumps({"out": str(args.out), "files": manifest["files"]}, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="combustor-inn",
        description="Generative inverse design of combustor geometries with an invertible flow.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, func, **extra):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--out", default="workspace", help="workspace directory")
        cmd.add_argument("--seed", type=int, default=None, help="master seed override")
        cmd.add_argument("--config", default=None, help="JSON string or file of config overrides")
        for flag, kwargs in extra.items():
            cmd.add_argument(flag, **kwargs)
        cmd.set_defaults(func=func)
        return cmd

    add("datagen", "sample designs and evaluate ground-truth labels",
        _stage_command(("datagen",)))
    add("train-surrogates", "fit the per-label forward surrogates",
        _stage_command(("datagen", "surrogates")))
    add("augment", "surrogate-label a larger sampled design set",
        _stage_command(("datagen", "augment")))
    add("train-inn", "train the invertible flow on oracle + augmented rows",
        _stage_command(("datagen", "train")))
    add("generate", "generate, filter and select designs for the target grid",
        _stage_command(("datagen", "generate")))
    add("validate", "oracle-validate selected designs and build the accuracy report",
        _stage_command(("datagen", "generate", "validate")))
    add("baseline", "run the GP + simplex-descent baseline and the comparison report",
        _stage_command(("datagen", "generate", "validate", "baseline")))
    add("pipeline", "run every stage end to end",
        _stage_command(("datagen", "surrogates", "augment", "train", "generate",
                        "validate", "baseline")))
    add("tune", "hyperband search over flow hyperparameters", cmd_tune,
        **{"--budget": {"type": int, "default": 243, "help": "max epochs per config"},
           "--eta": {"type": int, "default": 3},
           "--m": {"type": int, "default": 200, "help": "designs per target in the objective"}})
    add("report", "re-render report tables from report.json", cmd_report)
    add("serve", "serve the interactive design API over HTTP", cmd_serve,
        **{"--port": {"type": int, "default": 8123},
           "--host": {"default": "127.0.0.1"}})
    add("rerun", "re-execute a recorded pipeline manifest", cmd_rerun,
        **{"--manifest": {"required": True, "help": "path to manifest.json"}})
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
