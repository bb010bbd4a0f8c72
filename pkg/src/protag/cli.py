"""Command-line entry point: ``protag {simulate,run,cv-tau,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench import (
    ExperimentConfig,
    THREADS_ENV,
    emit_report,
    from_json,
    make_trial_data,
    markdown_table,
    run_experiment,
    summary_csv,
    trial_rng,
)
from .data import save_csv
from .exceptions import ProtagError
from .selection import select_tau_cv
from .tagging import SimulatedExpert


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if getattr(args, "out", None) is not None:
        changes["output"] = args.out
    return cfg.replace(**changes) if changes else cfg


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.output)
    for t in range(cfg.trials):
        data = make_trial_data(cfg, t)
        d = out / f"trial_{t:04d}"
        d.mkdir(parents=True, exist_ok=True)
        save_csv(data.noisy, d / "noisy.csv")
        save_csv(data.audited, d / "audited.csv")
        with open(d / "eval.csv", "w") as fh:
            ncol = data.eval_features.shape[1]
            fh.write(",".join([f"x{j}" for j in range(ncol)] + ["y", "eta"]) + "\n")
            eta = data.oracle.eta_fn(data.eval_features)
            for x, y, e in zip(data.eval_features, data.eval_labels, eta):
                fh.write(",".join(repr(float(v)) for v in x) + f",{int(y)},{float(e)!r}\n")
    print(f"wrote {cfg.trials} trial(s) to {out}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    result = run_experiment(cfg, threads=args.threads)
    paths = emit_report(result, cfg.output)
    if result.failures:
        print(f"warning: {len(result.failures)} trial(s) failed and were excluded", file=sys.stderr)
    for fmt, p in paths.items():
        print(f"{fmt}: {p}")
    return 0


def cmd_cv_tau(args) -> int:
    cfg = _load_config(args)
    data = make_trial_data(cfg, args.trial)
    rng = trial_rng(cfg, args.trial)
    expert = SimulatedExpert(data.oracle.eta_fn, rng.child("cv_expert", args.mode))
    rep = select_tau_cv(cfg.tau.grid, data.noisy, data.audited, args.mode, cfg.pipeline_spec,
                        rng.child("cv", args.mode), expert=expert, folds=cfg.tau.folds)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    rep.to_csv(out / "cv_tau.csv")
    (out / "cv_tau.json").write_text(rep.to_json())
    print(f"tau* = {rep.tau_star}")
    return 0


def cmd_report(args) -> int:
    results = [from_json(Path(p).read_text()) for p in args.inputs]
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    for p, r in zip(args.inputs, results):
        (out / f"{Path(p).stem}.summary.csv").write_text(summary_csv(r))
    (out / "table.md").write_text(markdown_table(results, args.labels))
    print(markdown_table(results, args.labels), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="protag", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials=True):
        sp.add_argument("--config", help="YAML/JSON experiment config")
        sp.add_argument("--seed", type=int, help="base seed (overrides the config)")
        if trials:
            sp.add_argument("--trials", type=int, help="number of trials (overrides the config)")
        sp.add_argument("--out", help="output directory (overrides the config)")

    sp = sub.add_parser("simulate", help="write the datasets of each trial as CSV")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("run", help="run a full experiment and write the report")
    common(sp)
    sp.add_argument("--threads", type=int, default=None,
                    help=f"worker processes (default: ${THREADS_ENV} or 1)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("cv-tau", help="cross-validate the security margin on one trial")
    common(sp, trials=False)
    sp.add_argument("--mode", default="AT", choices=["AT", "PT", "HYBRID", "BO"])
    sp.add_argument("--trial", type=int, default=0)
    sp.set_defaults(func=cmd_cv_tau)

    sp = sub.add_parser("report", help="re-aggregate stored trials.json files")
    sp.add_argument("inputs", nargs="+", help="trials.json files")
    sp.add_argument("--labels", nargs="*", help="column label per input")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ProtagError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
