"""
Experiment Configuration Module
Typed experiment descriptions loaded from TOML files.

Every field defaults to the baseline experiment (10-node weighted network,
Gaussian kernel on [-2, 4], shifting uniform inputs, gains (k+1)^-0.6 and
(k+1)^-1), so an empty file is a valid experiment. Validation runs in one pass
and reports every problem it finds.
"""

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from src.backend.errors import ConfigValidationError, SimulatorError
from src.backend.funcspace import KernelExpansion, SplineGrid, baseline_grid
from src.backend.graph import BASELINE_EDGES, Graph, is_connected
from src.backend.kernel import Kernel
from src.backend.learner import FiniteDimModel, GainSchedule, gaussian_observation_model, validate_gains
from src.backend.streams import StreamSpec
from src.config.settings import get_config, get_logger

logger = get_logger(__name__)

# Gain conditions are asymptotic; short runs are still checked over this many steps.
GAIN_CHECK_HORIZON = 1000

# Top-level keys each cross-field check reads besides its own section.
CROSS_CHECK_INPUTS = {
    'snapshots': {'steps'},
    'graph': {'assert_hypotheses'},
    'gains': {'steps', 'assert_hypotheses'},
    'stream': {'kernel', 'mode'},
    'truth': {'kernel', 'mode'},
    'grid': {'kernel', 'stream', 'mode'},
    'finite_dim': {'mode'},
}


@dataclass(frozen=True)
class ConfigIssue:
    """One violated configuration rule."""

    field: str
    code: str
    message: str

    def to_dict(self) -> dict:
        return {"field": self.field, "code": self.code, "message": self.message}


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class GraphSection(_Section):
    n_nodes: int = Field(10, ge=1)
    edges: List[Tuple[int, int, float]] = Field(default_factory=lambda: [list(e) for e in BASELINE_EDGES])


class KernelSection(_Section):
    family: Literal['gaussian', 'laplace', 'polynomial'] = 'gaussian'
    lo: float = -2.0
    hi: float = 4.0
    gamma: float = 1.0
    scale: float = 1.0
    degree: int = 2
    offset: float = 1.0
    strict: bool = True


class GainsSection(_Section):
    a_exp: float = Field(0.6, gt=0)
    b_exp: float = Field(1.0, gt=0)
    a_scale: float = Field(1.0, gt=0)
    b_scale: float = Field(1.0, gt=0)


class StreamSection(_Section):
    rule: Literal['shifting_uniform', 'iid_uniform', 'iid_custom'] = 'shifting_uniform'
    lo: float = -2.0
    hi: float = 4.0
    shift: float = 3.0
    sampler: str = ''
    noise: Literal['gaussian', 'zero'] = 'gaussian'
    noise_variance: float = Field(0.1, ge=0)
    master_seed: int = Field(default_factory=lambda: get_config().DEFAULT_MASTER_SEED, ge=0)


class GridSection(_Section):
    count: int = Field(1000, ge=4)
    lo: float = -2.0
    hi: float = 4.0
    include_right_endpoint: bool = True


class TruthSection(_Section):
    centers: List[float] = Field(default_factory=lambda: [1.0])
    coefficients: List[float] = Field(default_factory=lambda: [1.0])


class FiniteDimSection(_Section):
    dim: int = Field(4, ge=1)
    obs_dim: int = Field(1, ge=1)
    truth: Optional[List[float]] = None
    scale: float = Field(1.0, gt=0)


class LoggingSection(_Section):
    stride: int = Field(1000, ge=1)


class ExperimentConfig(_Section):
    """
    A full experiment.

    mode selects the representation: grid (knot values, the default), expansion
    (exact kernel expansions) or finite_dim (linear parameter estimation).
    """

    mode: Literal['grid', 'expansion', 'finite_dim'] = 'grid'
    steps: int = Field(100000, ge=0)
    replicates: int = Field(1, ge=1)
    output_dir: Optional[str] = None
    assert_hypotheses: bool = True
    snapshots: List[int] = Field(default_factory=list)
    graph: GraphSection = Field(default_factory=GraphSection)
    kernel: KernelSection = Field(default_factory=KernelSection)
    gains: GainsSection = Field(default_factory=GainsSection)
    stream: StreamSection = Field(default_factory=StreamSection)
    grid: GridSection = Field(default_factory=GridSection)
    truth: TruthSection = Field(default_factory=TruthSection)
    finite_dim: FiniteDimSection = Field(default_factory=FiniteDimSection)
    logging: LoggingSection = Field(default_factory=LoggingSection)

    @property
    def master_seed(self) -> int:
        return self.stream.master_seed

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir) if self.output_dir else Path(get_config().OUTPUT_DIR)

    def build_graph(self) -> Graph:
        return Graph.from_edges(self.graph.n_nodes, self.graph.edges)

    def build_kernel(self) -> Kernel:
        k = self.kernel
        return Kernel(k.family, lo=k.lo, hi=k.hi, gamma=k.gamma, scale=k.scale, degree=k.degree,
                      offset=k.offset, strict=k.strict)

    def build_schedule(self) -> GainSchedule:
        g = self.gains
        return GainSchedule(g.a_exp, g.b_exp, g.a_scale, g.b_scale)

    def build_stream(self) -> StreamSpec:
        s = self.stream
        return StreamSpec(input_rule=s.rule, lo=s.lo, hi=s.hi, shift=s.shift, sampler=s.sampler,
                          noise_rule=s.noise, noise_variance=s.noise_variance, master_seed=s.master_seed)

    def build_grid(self) -> SplineGrid:
        g = self.grid
        return baseline_grid(g.include_right_endpoint, g.count, g.lo, g.hi)

    def build_truth(self) -> KernelExpansion:
        return KernelExpansion(self.build_kernel(), self.truth.centers, self.truth.coefficients)

    def build_finite_dim_model(self) -> FiniteDimModel:
        fd = self.finite_dim
        return gaussian_observation_model(fd.dim, self.graph.n_nodes, fd.obs_dim, fd.truth, fd.scale)


def _stream_support(cfg: ExperimentConfig) -> Tuple[float, float]:
    return cfg.stream.lo, cfg.stream.hi


def _grid_hull(cfg: ExperimentConfig) -> Tuple[float, float]:
    g = cfg.grid
    last = g.hi if g.include_right_endpoint else g.lo + (g.hi - g.lo) * (g.count - 1) / g.count
    return g.lo, last


def collect_config_issues(cfg: ExperimentConfig) -> List[ConfigIssue]:
    """
    Cross-field checks that type validation cannot express.

    Returns:
        list: every ConfigIssue found; empty when the experiment is consistent
    """
    issues: List[ConfigIssue] = []

    def attempt(field: str, code: str, build):
        try:
            return build()
        except SimulatorError as e:
            issues.append(ConfigIssue(field, code, str(e)))
            return None

    graph = attempt('graph.edges', 'invalid_graph', cfg.build_graph)
    if graph is not None and cfg.assert_hypotheses and not is_connected(graph):
        issues.append(ConfigIssue('graph.edges', 'disconnected',
                                  "graph is not connected; set assert_hypotheses = false to run anyway"))

    kernel = attempt('kernel', 'invalid_kernel', cfg.build_kernel)
    attempt('stream', 'invalid_stream', cfg.build_stream)

    if cfg.assert_hypotheses:
        horizon = max(cfg.steps, GAIN_CHECK_HORIZON)
        report = attempt('gains', 'invalid_gains', lambda: validate_gains(cfg.build_schedule(), horizon))
        if report is not None and not report.all_pass:
            failed = [name for name, ok in report.to_dict().items()
                      if name.startswith('cond') and not ok]
            issues.append(ConfigIssue('gains', 'gain_conditions', f"gain conditions not met: {', '.join(failed)}"))

    lo, hi = _stream_support(cfg)
    if cfg.mode != 'finite_dim' and kernel is not None:
        if lo < kernel.lo[0] or hi > kernel.hi[0]:
            issues.append(ConfigIssue('stream', 'support_outside_domain',
                                      f"stream support [{lo}, {hi}] leaves the kernel domain "
                                      f"[{kernel.lo[0]}, {kernel.hi[0]}]"))
        if len(cfg.truth.centers) != len(cfg.truth.coefficients):
            issues.append(ConfigIssue('truth', 'length_mismatch', "centers and coefficients differ in length"))
        elif not kernel.contains(np.asarray(cfg.truth.centers)):
            issues.append(ConfigIssue('truth.centers', 'outside_domain', "truth centers leave the kernel domain"))

    if cfg.mode in ('grid', 'expansion'):
        g_lo, g_hi = _grid_hull(cfg)
        if not cfg.grid.lo < cfg.grid.hi:
            issues.append(ConfigIssue('grid', 'empty_range', f"grid range [{cfg.grid.lo}, {cfg.grid.hi}] is empty"))
        elif lo < g_lo or hi > g_hi:
            issues.append(ConfigIssue('grid', 'grid_hull',
                                      f"stream support [{lo}, {hi}] is not covered by the grid hull [{g_lo}, {g_hi:.6g}]"))
        if kernel is not None and (cfg.grid.lo < kernel.lo[0] or cfg.grid.hi > kernel.hi[0]):
            issues.append(ConfigIssue('grid', 'outside_domain', "grid knots leave the kernel domain"))

    if cfg.mode == 'finite_dim' and cfg.finite_dim.truth is not None and len(cfg.finite_dim.truth) != cfg.finite_dim.dim:
        issues.append(ConfigIssue('finite_dim.truth', 'length_mismatch',
                                  f"truth has {len(cfg.finite_dim.truth)} entries for dimension {cfg.finite_dim.dim}"))

    bad_snapshots = [s for s in cfg.snapshots if not 0 <= s <= cfg.steps]
    if bad_snapshots:
        issues.append(ConfigIssue('snapshots', 'out_of_range', f"snapshot steps {bad_snapshots} not in [0, {cfg.steps}]"))

    return issues


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _drop_invalid(data: Dict[str, Any], loc: Tuple) -> Optional[str]:
    """Remove the value at ``loc`` so its default applies; returns the removed top-level key."""
    if not loc or not isinstance(loc[0], str) or loc[0] not in data:
        return None
    top = loc[0]
    section = data[top]
    if len(loc) > 1 and isinstance(loc[1], str) and isinstance(section, dict) and loc[1] in section:
        del section[loc[1]]
    else:
        del data[top]
    return top


def _type_issues(error: ValidationError) -> List[ConfigIssue]:
    return [ConfigIssue('.'.join(str(part) for part in err['loc']) or '<root>', err['type'], err['msg'])
            for err in error.errors()]


def _affected(issue: ConfigIssue, dropped: set) -> bool:
    top = issue.field.split('.')[0]
    return top in dropped or bool(CROSS_CHECK_INPUTS.get(top, set()) & dropped)


def validate_experiment(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Build and cross-check an ExperimentConfig from plain data.

    When some values fail type validation, the cross-field checks still run with
    those values reset to their defaults, and only the issues that do not depend on
    the reset values are reported next to the type errors.

    Raises:
        ConfigValidationError: listing every type and consistency problem
    """
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        issues = _type_issues(e)
        if not isinstance(data, dict):
            raise ConfigValidationError(issues) from e
        pruned, dropped = copy.deepcopy(data), set()
        for _ in range(3):
            for err in e.errors():
                top = _drop_invalid(pruned, tuple(err['loc']))
                if top:
                    dropped.add(top)
            try:
                partial = ExperimentConfig.model_validate(pruned)
            except ValidationError as again:
                e = again
                continue
            issues += [i for i in collect_config_issues(partial) if not _affected(i, dropped)]
            break
        raise ConfigValidationError(issues) from e
    issues = collect_config_issues(cfg)
    if issues:
        raise ConfigValidationError(issues)
    return cfg


def load_experiment(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Load an experiment from a TOML file, applying nested overrides before validation.

    Args:
        path: TOML file; the built-in baseline experiment when None
        overrides (dict): values merged over the file, e.g. {"stream": {"master_seed": 7}}

    Returns:
        ExperimentConfig: the validated experiment
    """
    source = Path(path) if path else get_config().DEFAULT_EXPERIMENT_FILE
    try:
        with open(source, 'rb') as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigValidationError([ConfigIssue('<file>', 'not_found', f"no such file: {source}")])
    except tomllib.TOMLDecodeError as e:
        raise ConfigValidationError([ConfigIssue('<file>', 'parse_error', f"{source}: {e}")])
    cfg = validate_experiment(_merge(data, overrides or {}))
    logger.info("Loaded experiment from %s (mode=%s, steps=%d, replicates=%d)",
                source, cfg.mode, cfg.steps, cfg.replicates)
    return cfg


def baseline_experiment(**overrides) -> ExperimentConfig:
    """The built-in baseline experiment, without touching the filesystem."""
    return validate_experiment(overrides)
