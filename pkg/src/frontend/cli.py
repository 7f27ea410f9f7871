"""
Command Line Interface
Entry point for the simulator: gain validation, excitation checks, stability
probes, experiment runs and the baseline figure data.

Every subcommand prints a JSON report with a "success" flag and exits 0 on
success, 1 otherwise. Usage errors exit 2.

Usage:
    python -m src.frontend.cli validate-gains --a-exp 0.6 --b-exp 1.0 --horizon 100000
    python -m src.frontend.cli pe-check --config src/config/baseline.toml --replicates 200
    python -m src.frontend.cli stability-probe --kind contraction
    python -m src.frontend.cli run --config src/config/baseline.toml --steps 1000 --seed 7
    python -m src.frontend.cli reproduce-fig1 --output-dir results/fig1
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from src.backend.diagnostics import collect_windows, mean_excitation_spectrum, write_pe_report
from src.backend.errors import ConfigValidationError, SimulatorError
from src.backend.learner import GainSchedule, validate_gains
from src.backend.runner import reproduce_fig1, run_experiment
from src.backend.stability import (RandomRecursionSpec, lp_boundedness, lpq_stability_probe,
                                   moment_condition_probe, product_contraction,
                                   restricted_network_operator_sampler, simulate_recursion,
                                   unit_test_vectors)
from src.backend.streams import Channel, derive_rng
from src.config.experiment import load_experiment
from src.config.settings import get_logger
from src.utils.helpers import write_csv

logger = get_logger(__name__)

PE_DICTIONARY_SIZE = 12
PROBE_DICTIONARY_SIZE = 6


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _emit(report: dict) -> int:
    print(json.dumps(report, indent=2, default=_json_default))
    return 0 if report.get("success") else 1


def _dictionary(cfg, size: int) -> np.ndarray:
    return np.linspace(cfg.kernel.lo, cfg.kernel.hi, size)


def _overrides(args) -> dict:
    overrides = {}
    if getattr(args, 'steps', None) is not None:
        overrides['steps'] = args.steps
        # snapshots of the file may lie beyond the new horizon
        overrides['snapshots'] = []
    if getattr(args, 'snapshot', None):
        overrides['snapshots'] = args.snapshot
    if getattr(args, 'replicates', None) is not None:
        overrides['replicates'] = args.replicates
    if getattr(args, 'mode', None) is not None:
        overrides['mode'] = args.mode
    if getattr(args, 'output_dir', None) is not None:
        overrides['output_dir'] = args.output_dir
    if getattr(args, 'seed', None) is not None:
        overrides['stream'] = {'master_seed': args.seed}
    return overrides


def _seed_override(args) -> dict:
    return {} if args.seed is None else {"stream": {"master_seed": args.seed}}


def cmd_validate_gains(args) -> dict:
    report = validate_gains(GainSchedule(args.a_exp, args.b_exp, args.a_scale, args.b_scale), args.horizon)
    return {"success": report.all_pass, "horizon": args.horizon, **report.to_dict()}


def cmd_pe_check(args) -> dict:
    cfg = load_experiment(args.config, _seed_override(args))
    kernel, stream = cfg.build_kernel(), cfg.build_stream()
    dictionary = _dictionary(cfg, args.dictionary_size)
    spectra = []
    for w in range(args.windows):
        windows = collect_windows(stream, cfg.graph.n_nodes, w, args.window_length, args.replicates)
        spectra.append(mean_excitation_spectrum(windows, kernel, dictionary))
        logger.info("Window %d: min_eig %.6g", w, spectra[-1].min_eig)
    if args.output:
        write_pe_report(spectra, args.output)
    min_eigs = [s.min_eig for s in spectra]
    return {
        "success": all(v > 0.0 for v in min_eigs),
        "dictionary_size": args.dictionary_size,
        "window_length": args.window_length,
        "replicates": args.replicates,
        "min_eig": min_eigs,
    }


def _probe_recursion(cfg, args) -> dict:
    schedule = cfg.build_schedule()
    spec = RandomRecursionSpec(
        dim=1,
        F_sampler=lambda k, rng: np.array([[schedule.a(k)]]),
        G_sampler=lambda k, rng: np.array([[schedule.a(k)]]),
        u_sampler=lambda k, rng: rng.standard_normal(1),
        x0=np.ones(1),
    )
    frame = simulate_recursion(spec, args.horizon, args.replicates, cfg.master_seed)
    if args.output:
        write_csv(frame, args.output)
    readout = lp_boundedness(frame)
    return {"success": readout["bounded"] and readout["decaying"],
            "terminal_mean_sq_norm": float(frame['mean_sq_norm'].iloc[-1]), **readout}


def _network_sampler(cfg, args):
    return restricted_network_operator_sampler(cfg.build_graph(), cfg.build_kernel(), cfg.build_stream(),
                                               cfg.build_schedule(), _dictionary(cfg, args.dictionary_size))


def _probe_lpq(cfg, args) -> dict:
    sampler = _network_sampler(cfg, args)
    dim = cfg.graph.n_nodes * args.dictionary_size
    result = lpq_stability_probe(sampler, unit_test_vectors(dim), p=2.0, q=2.0, horizon=args.horizon,
                                 replicates=args.replicates, master_seed=cfg.master_seed)
    if args.output:
        write_csv(result.table, args.output)
    return {"success": result.passed, **result.to_dict()}


def _probe_moment(cfg, args) -> dict:
    frame = moment_condition_probe(_network_sampler(cfg, args), args.horizon, max(args.replicates, 10),
                                   cfg.master_seed)
    if args.output:
        write_csv(frame, args.output)
    partial = frame['partial_sum'].to_numpy()
    tail_growth = float(partial[-1] - partial[len(partial) // 2])
    return {"success": bool(np.isfinite(partial[-1])), "partial_sum": float(partial[-1]),
            "second_half_growth": tail_growth}


def _probe_contraction(cfg, args) -> dict:
    rng = derive_rng(cfg.master_seed, 0, 0, 0, Channel.RECURSION)
    root = rng.standard_normal((args.dim, args.dim))
    H = root @ root.T + 0.1 * np.eye(args.dim)
    x = rng.standard_normal(args.dim)
    schedule = cfg.build_schedule()
    result = product_contraction(H, lambda j: float(schedule.a(j)), x, args.horizon)
    return {"success": result.within_bound, **result.to_dict()}


PROBES = {
    'recursion': _probe_recursion,
    'lpq': _probe_lpq,
    'moment': _probe_moment,
    'contraction': _probe_contraction,
}


def cmd_stability_probe(args) -> dict:
    cfg = load_experiment(args.config, _seed_override(args))
    return {"kind": args.kind, **PROBES[args.kind](cfg, args)}


def cmd_run(args) -> dict:
    cfg = load_experiment(args.config, _overrides(args))
    return run_experiment(cfg).to_dict()


def cmd_reproduce_fig1(args) -> dict:
    return reproduce_fig1(args.output_dir, args.seed, steps=args.steps)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='rkhs-sim', description="Decentralized RKHS learning simulator")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('validate-gains', help="check the step-size conditions of a gain schedule")
    p.add_argument('--a-exp', type=float, default=0.6)
    p.add_argument('--b-exp', type=float, default=1.0)
    p.add_argument('--a-scale', type=float, default=1.0)
    p.add_argument('--b-scale', type=float, default=1.0)
    p.add_argument('--horizon', type=int, default=100000)
    p.set_defaults(handler=cmd_validate_gains)

    p = sub.add_parser('pe-check', help="restricted excitation spectrum of the input stream")
    p.add_argument('--config', type=Path, default=None)
    p.add_argument('--windows', type=int, default=1, help="number of consecutive windows to check")
    p.add_argument('--replicates', type=int, default=200, help="Monte-Carlo windows averaged per check")
    p.add_argument('--window-length', type=int, default=2)
    p.add_argument('--dictionary-size', type=int, default=PE_DICTIONARY_SIZE,
                   help="equispaced test points on the kernel domain; 12 by default, since with the "
                        "unit Gaussian kernel 25 points exceed DICTIONARY_CONDITION_LIMIT")
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--output', type=Path, default=None)
    p.set_defaults(handler=cmd_pe_check)

    p = sub.add_parser('stability-probe', help="Monte-Carlo stability probes")
    p.add_argument('--kind', choices=sorted(PROBES), default='contraction')
    p.add_argument('--config', type=Path, default=None)
    p.add_argument('--horizon', type=int, default=1000)
    p.add_argument('--replicates', type=int, default=50)
    p.add_argument('--dictionary-size', type=int, default=PROBE_DICTIONARY_SIZE)
    p.add_argument('--dim', type=int, default=5, help="matrix size of the contraction probe")
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--output', type=Path, default=None)
    p.set_defaults(handler=cmd_stability_probe)

    p = sub.add_parser('run', help="run an experiment and write CSV outputs")
    p.add_argument('--config', type=Path, default=None)
    p.add_argument('--steps', type=int, default=None)
    p.add_argument('--replicates', type=int, default=None)
    p.add_argument('--mode', choices=['grid', 'expansion', 'finite_dim'], default=None)
    p.add_argument('--snapshot', type=int, action='append', default=None,
                   help="step at which all node estimates are written; repeatable")
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--output-dir', type=str, default=None)
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser('reproduce-fig1', help="figure data of the baseline experiment")
    p.add_argument('--output-dir', type=str, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--steps', type=int, default=100000)
    p.set_defaults(handler=cmd_reproduce_fig1)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = args.handler(args)
    except ConfigValidationError as e:
        logger.error("Invalid configuration: %s", e)
        report = e.to_dict()
    except SimulatorError as e:
        logger.error("%s failed: %s", args.command, e)
        report = {"success": False, "error": str(e)}
    return _emit(report)


if __name__ == "__main__":
    sys.exit(main())
