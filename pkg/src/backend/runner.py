"""
Runner Module
Seeded execution of experiments: Monte-Carlo replicates, trajectory logging and
CSV persistence, plus the figure-data command for the baseline experiment.

Output layout of run_experiment:
    <output_dir>/summary.csv                       replicate,node,sup_err,rmse,consensus_gap
    <output_dir>/replicate_XXX/trajectory.csv      k,node,sup_err,rmse,consensus_gap,a_k,b_k
    <output_dir>/replicate_XXX/final_functions.csv x,node_1..node_N,f_star
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.backend.diagnostics import TrajectoryRecord, consensus_gap, logging_schedule
from src.backend.errors import RunnerError
from src.backend.funcspace import GridFunction, expansion_to_grid, grid_error_metrics
from src.backend.learner import (NetworkState, finite_dim_step, initial_state, network_step)
from src.backend.streams import Channel, derive_rng, draw_observations
from src.config.experiment import ExperimentConfig, baseline_experiment
from src.config.settings import get_config, get_logger
from src.utils.helpers import ensure_writable_dir, write_csv

logger = get_logger(__name__)

SUMMARY_COLUMNS = ['replicate', 'node', 'sup_err', 'rmse', 'consensus_gap']


@dataclass
class ReplicateResult:
    replicate: int
    record: TrajectoryRecord
    final_state: NetworkState
    snapshots: Dict[int, NetworkState] = field(default_factory=dict)


def _node_errors(state: NetworkState, truth_grid, truth_vector) -> Tuple[list, list]:
    if state.mode == 'finite_dim':
        diffs = [f - truth_vector for f in state.estimates]
        return ([float(np.max(np.abs(d))) for d in diffs],
                [float(np.sqrt(np.mean(d ** 2))) for d in diffs])
    metrics = [grid_error_metrics(_as_grid(f, truth_grid.grid), truth_grid) for f in state.estimates]
    return [m.sup for m in metrics], [m.rmse for m in metrics]


def _as_grid(f, grid) -> GridFunction:
    return f if isinstance(f, GridFunction) else expansion_to_grid(f, grid)


def _finite_dim_noise(cfg: ExperimentConfig, replicate: int, step: int, obs_dims: Sequence[int]) -> List[np.ndarray]:
    std = np.sqrt(cfg.stream.noise_variance)
    if cfg.stream.noise == 'zero' or std == 0.0:
        return [np.zeros(m) for m in obs_dims]
    return [derive_rng(cfg.master_seed, replicate, i, step, Channel.NOISE).normal(0.0, std, size=m)
            for i, m in enumerate(obs_dims)]


def run_replicate(cfg: ExperimentConfig, replicate: int = 0,
                  snapshots: Optional[Sequence[int]] = None) -> ReplicateResult:
    """
    Simulate one Monte-Carlo replicate.

    Args:
        cfg (ExperimentConfig): validated experiment
        replicate (int): replicate index, selects the derived random streams
        snapshots: steps at which the full network state is kept; cfg.snapshots by default

    Returns:
        ReplicateResult: logged trajectory, final state and requested snapshots
    """
    graph = cfg.build_graph()
    schedule = cfg.build_schedule()
    keep = set(cfg.snapshots if snapshots is None else snapshots)
    logged = set(logging_schedule(cfg.steps, cfg.logging.stride))
    record = TrajectoryRecord(stride=cfg.logging.stride)
    kept: Dict[int, NetworkState] = {}

    truth_grid = truth_vector = None
    if cfg.mode == 'finite_dim':
        model = cfg.build_finite_dim_model()
        truth_vector = model.truth
        state = initial_state(graph.n_nodes, 'finite_dim', dim=model.dim)
    else:
        kernel = cfg.build_kernel()
        stream = cfg.build_stream()
        grid = cfg.build_grid()
        truth = cfg.build_truth()
        truth_grid = expansion_to_grid(truth, grid)
        state = initial_state(graph.n_nodes, cfg.mode, kernel=kernel, grid=grid)

    for k in range(cfg.steps + 1):
        if k in logged:
            sup_errors, rmses = _node_errors(state, truth_grid, truth_vector)
            a_k, b_k = schedule.gains(k)
            record.record(k, sup_errors, rmses, consensus_gap(state), a_k, b_k)
        if k in keep:
            kept[k] = state
        if k == cfg.steps:
            break
        if cfg.mode == 'finite_dim':
            operators = model.sample_operators(
                k, [derive_rng(cfg.master_seed, replicate, i, k, Channel.OPERATOR) for i in range(graph.n_nodes)])
            noise = _finite_dim_noise(cfg, replicate, k, model.obs_dims)
            state = finite_dim_step(state, graph, schedule, model, noise, operators=operators)
        else:
            observations = draw_observations(stream, truth.evaluate, replicate, k, graph.n_nodes)
            state = network_step(state, graph, schedule, observations, kernel=kernel,
                                 compaction_interval=get_config().COMPACTION_INTERVAL)

    logger.info("Replicate %d finished after %d steps (max terminal sup error %.4g)",
                replicate, cfg.steps, record.terminal()['sup_err'].max())
    return ReplicateResult(replicate, record, state, kept)


def functions_frame(state: NetworkState, cfg: ExperimentConfig) -> pd.DataFrame:
    """
    Node estimates side by side with the truth.

    Grid and expansion modes give columns x, node_1..node_N, f_star on the grid;
    finite-dimensional mode gives index, node_1..node_N, f0.
    """
    if state.mode == 'finite_dim':
        frame = pd.DataFrame({'index': np.arange(state.estimates[0].size)})
        for i, f in enumerate(state.estimates, start=1):
            frame[f'node_{i}'] = f
        frame['f0'] = cfg.build_finite_dim_model().truth
        return frame
    grid = cfg.build_grid()
    columns = {'x': grid.points}
    for i, f in enumerate(state.estimates, start=1):
        columns[f'node_{i}'] = _as_grid(f, grid).values
    columns['f_star'] = expansion_to_grid(cfg.build_truth(), grid).values
    return pd.DataFrame(columns)


@dataclass
class ExperimentOutcome:
    output_dir: Path
    summary: pd.DataFrame
    files: List[Path]

    def to_dict(self) -> dict:
        return {
            "success": True,
            "output_dir": str(self.output_dir),
            "files": [str(p) for p in self.files],
            "max_sup_err": float(self.summary['sup_err'].max()) if len(self.summary) else None,
            "max_consensus_gap": float(self.summary['consensus_gap'].max()) if len(self.summary) else None,
        }


def _prepare_output_dir(path: Union[str, Path]) -> Path:
    try:
        return ensure_writable_dir(path)
    except OSError as e:
        raise RunnerError(f"output directory {path} is not writable: {e}") from e


def run_experiment(cfg: ExperimentConfig, output_dir: Optional[Union[str, Path]] = None) -> ExperimentOutcome:
    """
    Run every replicate of ``cfg`` and persist trajectories, final functions and a summary.

    Replicates run on a thread pool of MAX_WORKERS; files are written afterwards in
    replicate order, so output bytes do not depend on the worker count.

    Raises:
        RunnerError: when the output directory cannot be written
    """
    out = _prepare_output_dir(output_dir or cfg.resolved_output_dir())
    logger.info("Running %d replicate(s) of %d steps in %s mode -> %s",
                cfg.replicates, cfg.steps, cfg.mode, out)

    results = Parallel(n_jobs=get_config().MAX_WORKERS, prefer='threads')(
        delayed(run_replicate)(cfg, r) for r in range(cfg.replicates))

    float_format = get_config().CSV_FLOAT_FORMAT
    files, summary_rows = [], []
    for result in results:
        rep_dir = out / f"replicate_{result.replicate:03d}"
        files.append(result.record.to_csv(rep_dir / 'trajectory.csv'))
        files.append(write_csv(functions_frame(result.final_state, cfg), rep_dir / 'final_functions.csv',
                               float_format=float_format))
        for step, state in sorted(result.snapshots.items()):
            files.append(write_csv(functions_frame(state, cfg), rep_dir / f'functions_k{step}.csv',
                                   float_format=float_format))
        terminal = result.record.terminal()
        for row in terminal.itertuples(index=False):
            summary_rows.append({'replicate': result.replicate, 'node': row.node, 'sup_err': row.sup_err,
                                 'rmse': row.rmse, 'consensus_gap': row.consensus_gap})

    summary = pd.DataFrame(summary_rows, columns=SUMMARY_COLUMNS)
    files.append(write_csv(summary, out / 'summary.csv', float_format=float_format))
    logger.info("Wrote %d file(s) to %s", len(files), out)
    return ExperimentOutcome(out, summary, files)


def reproduce_fig1(out_dir: Optional[Union[str, Path]] = None, master_seed: Optional[int] = None,
                   steps: int = 100000, early_step: int = 1000) -> dict:
    """
    Figure data of the baseline experiment from one seeded run.

    Writes fig1a.csv (estimates at ``early_step``) and fig1b.csv (estimates at
    ``steps``), both with columns x, node_1..node_10, f_star.

    Returns:
        dict: result report with file paths and the per-node sup errors of both snapshots
    """
    seed = get_config().DEFAULT_MASTER_SEED if master_seed is None else master_seed
    early = min(early_step, steps)
    cfg = baseline_experiment(steps=steps, snapshots=[early], stream={'master_seed': seed})
    out = _prepare_output_dir(out_dir or cfg.resolved_output_dir())
    result = run_replicate(cfg, 0)

    float_format = get_config().CSV_FLOAT_FORMAT
    early_frame = functions_frame(result.snapshots[early], cfg)
    final_frame = functions_frame(result.final_state, cfg)
    path_a = write_csv(early_frame, out / 'fig1a.csv', float_format=float_format)
    path_b = write_csv(final_frame, out / 'fig1b.csv', float_format=float_format)
    logger.info("Wrote figure data %s and %s", path_a, path_b)

    def sup_errors(frame: pd.DataFrame) -> List[float]:
        nodes = [c for c in frame.columns if c.startswith('node_')]
        return [float(np.max(np.abs(frame[c] - frame['f_star']))) for c in nodes]

    return {
        "success": True,
        "master_seed": seed,
        "files": [str(path_a), str(path_b)],
        "sup_err_early": sup_errors(early_frame),
        "sup_err_final": sup_errors(final_frame),
        "consensus_gap_final": consensus_gap(result.final_state),
    }
