"""
bifikle command line

Runs active-learning campaigns for bifidelity KLE surrogates, ingests
external snapshots, emits plot-ready report data and starts the tool server.
"""

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

# Add the project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from src import __version__
from src.campaign.driver import cross_policy_test, run_campaign, run_replicates
from src.campaign.ingest import append_runs, ingest, reingest, write_model_runs
from src.campaign.report import write_report
from src.campaign.store import CampaignStore, save_field
from src.config.campaign import load_campaign_config, model_only_config
from src.config.flat_format import split_list
from src.config.settings import RuntimeConfig, load_runtime_config
from src.core.exceptions import BifikleError, InvalidArgumentError
from src.core.logging_config import setup_logging
from src.problems.registry import get_problem
from src.surrogates.bifidelity import propagate_uq

POLICIES = ("ei_max", "ei_min", "random")

_logger = None


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in split_list(text)]
    except ValueError:
        raise InvalidArgumentError(f"Expected comma-separated numbers, got '{text}'")


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    if getattr(args, "policy", None):
        overrides["acquisition.policy"] = args.policy
    return overrides


def cmd_run(args: argparse.Namespace, runtime: RuntimeConfig) -> int:
    config = load_campaign_config(args.config, overrides=_overrides(args))
    history = run_campaign(config, resume=args.resume, n_jobs=runtime.threads)
    final = history.final
    _logger.info(f"Campaign {history.status}: {len(history.records)} stage(s), "
                 f"{final.n_hf} HF runs, final CV mean {final.cv.mean():.4e}")
    return 0


def cmd_replicates(args: argparse.Namespace, runtime: RuntimeConfig) -> int:
    config = load_campaign_config(args.config, overrides=_overrides(args))
    policies = split_list(args.policies) if args.policies else None
    for policy in policies or []:
        if policy not in POLICIES:
            raise InvalidArgumentError(f"Unknown policy '{policy}'; choose from {', '.join(POLICIES)}")
    aggregated = run_replicates(config, replicates=args.replicates, policies=policies, n_jobs=runtime.threads)
    _logger.info(f"Aggregated {len(aggregated)} policy/stage rows into {Path(config.output_dir) / 'replicates.csv'}")
    return 0


def cmd_cross_policy(args: argparse.Namespace, runtime: RuntimeConfig) -> int:
    table, excluded = cross_policy_test(args.campaign_a, args.campaign_b, out=args.out)
    _logger.info(f"Cross-policy test: {len(table)} point errors, excluded {excluded}")
    return 0


def cmd_ingest(args: argparse.Namespace, runtime: RuntimeConfig) -> int:
    if args.append_to:
        if not args.design:
            raise InvalidArgumentError("--append-to needs --design")
        bundle = append_runs(args.append_to, args.design, base_dir=args.base_dir)
    elif args.from_bundle:
        if not args.out:
            raise InvalidArgumentError("--from-bundle needs --out")
        bundle = reingest(args.from_bundle, args.out)
    else:
        if not (args.design and args.meta and args.out):
            raise InvalidArgumentError("ingest needs --design, --meta and --out")
        bundle = ingest(args.design, args.meta, args.out, base_dir=args.base_dir)
    _logger.info(f"Bundle holds {bundle.n_lf} LF and {bundle.n_hf} HF runs for {list(bundle.qois)}")
    return 0


def cmd_report(args: argparse.Namespace, runtime: RuntimeConfig) -> int:
    report = write_report(args.campaign, out=args.out)
    _logger.info(f"Wrote {sorted(report.files)}")
    return 0


def cmd_models_eval(args: argparse.Namespace, runtime: RuntimeConfig) -> int:
    if args.config:
        config = load_campaign_config(args.config)
    else:
        config = model_only_config(args.problem)
    problem = get_problem(config, n_jobs=runtime.threads)
    if args.design:
        if args.theta or not args.out:
            raise InvalidArgumentError("--design needs --out and excludes --theta")
        manifest = write_model_runs(problem, args.design, args.out, fidelity=args.fidelity)
        _logger.info(f"Run manifest written to {manifest}")
        return 0
    if not args.theta:
        raise InvalidArgumentError("models eval needs --theta or --design")
    thetas = np.atleast_2d(_floats(args.theta))
    values = problem.evaluate(args.fidelity, thetas)[:, 0]
    if args.out:
        save_field(args.out, values, problem.grid)
        _logger.info(f"{problem.name} {args.fidelity.upper()} field written to {args.out}")
    else:
        print(json.dumps({"problem": problem.name, "fidelity": args.fidelity, "theta": thetas[0].tolist(),
                          "values": values.tolist()}))
    return 0


def cmd_uq(args: argparse.Namespace, runtime: RuntimeConfig) -> int:
    store = CampaignStore(args.campaign)
    qois = store.surrogate_qois()
    if not qois:
        raise InvalidArgumentError(f"{store.root} holds no surrogate")
    out = Path(args.out) if args.out else store.root / "uq"
    for qoi in qois:
        mean, std = propagate_uq(store.load_surrogate(qoi), args.samples, args.seed)
        save_field(out / f"uq_{qoi}_mean.csv", mean)
        save_field(out / f"uq_{qoi}_std.csv", std)
    _logger.info(f"Propagated {args.samples} samples for {qois} into {out}")
    return 0


def cmd_serve(args: argparse.Namespace, runtime: RuntimeConfig) -> int:
    from src.server import serve
    serve()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bifikle", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR (default: $LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run or resume one campaign")
    run.add_argument("--config", required=True, help="Flat key = value campaign config")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--resume", action="store_true", help="Continue an existing campaign directory")
    run.add_argument("--out", default=None, help="Campaign directory (overrides output_dir)")
    run.add_argument("--policy", choices=POLICIES, default=None)
    run.set_defaults(handler=cmd_run)

    reps = sub.add_parser("replicates", help="Run replicate campaigns per policy and aggregate")
    reps.add_argument("--config", required=True)
    reps.add_argument("--replicates", type=int, default=None, help="Replicate count (default: config)")
    reps.add_argument("--policies", default=None, help="Comma-separated policies (default: config policy)")
    reps.add_argument("--seed", type=int, default=None)
    reps.add_argument("--out", default=None)
    reps.set_defaults(handler=cmd_replicates)

    cross = sub.add_parser("cross-policy", help="Test each campaign's surrogate on the other's acquired points")
    cross.add_argument("campaign_a")
    cross.add_argument("campaign_b")
    cross.add_argument("--out", default=None, help="Output CSV (default: <campaign_a>/cross_policy.csv)")
    cross.set_defaults(handler=cmd_cross_policy)

    ing = sub.add_parser("ingest", help="Validate external snapshots into a bundle")
    ing.add_argument("--design", default=None, help="Run table (fidelity, parameters, file or qoi_<name>)")
    ing.add_argument("--meta", default=None, help="Flat grid.* and params.* metadata")
    ing.add_argument("--out", default=None, help="Bundle directory to write")
    ing.add_argument("--base-dir", default=None, help="Directory snapshot paths are relative to")
    ing.add_argument("--from-bundle", default=None, help="Re-validate and rewrite an existing bundle")
    ing.add_argument("--append-to", default=None, help="Append new runs to an existing bundle")
    ing.set_defaults(handler=cmd_ingest)

    rep = sub.add_parser("report", help="Write plot-ready CSVs for a campaign")
    rep.add_argument("campaign")
    rep.add_argument("--out", default=None, help="Output directory (default: <campaign>/report)")
    rep.set_defaults(handler=cmd_report)

    models = sub.add_parser("models", help="Built-in forward models")
    models_sub = models.add_subparsers(dest="models_command", required=True)
    ev = models_sub.add_parser("eval", help="Evaluate a model at one point or over a design table")
    ev.add_argument("--problem", choices=("pulse_c1", "pulse_c2", "convdiff"), default="pulse_c1")
    ev.add_argument("--config", default=None, help="Campaign config supplying grid settings")
    ev.add_argument("--fidelity", choices=("hf", "lf"), default="hf")
    ev.add_argument("--theta", default=None, help="Comma-separated physical parameters")
    ev.add_argument("--design", default=None,
                    help="CSV with one column per parameter, optional fidelity and design_id columns")
    ev.add_argument("--out", default=None,
                    help="Field CSV, or the run directory with --design (default: JSON on stdout)")
    ev.set_defaults(handler=cmd_models_eval)

    uq = sub.add_parser("uq", help="Monte-Carlo mean/std fields through a campaign's surrogate")
    uq.add_argument("campaign")
    uq.add_argument("--samples", type=int, default=2000)
    uq.add_argument("--seed", type=int, default=2024)
    uq.add_argument("--out", default=None)
    uq.set_defaults(handler=cmd_uq)

    serve = sub.add_parser("serve", help="Start the tool server")
    serve.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit status."""
    global _logger
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        runtime = load_runtime_config(log_level=args.log_level)
        _logger = setup_logging(level=runtime.log_level)
        return args.handler(args, runtime)
    except BifikleError as e:
        if _logger is None:
            _logger = setup_logging()
        key = getattr(e, "key", None)
        _logger.error(f"{type(e).__name__}: {e}" + (f" (key: {key})" if key else ""))
        return e.exit_code
    except KeyboardInterrupt:
        if _logger:
            _logger.warning("Interrupted; committed stages can be resumed with --resume")
        return 130


if __name__ == "__main__":
    sys.exit(main())
