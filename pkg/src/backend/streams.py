"""
Streams Module
Reproducible per-node input points and measurement noise.

Every draw comes from its own counter-based generator keyed by
(master_seed, replicate) and addressed by (step, node, channel), so a trajectory
does not depend on the order in which nodes, steps or replicates are simulated.
"""

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import Callable, Dict, List, Tuple

import numpy as np

from src.backend.errors import StreamError
from src.config.settings import get_logger

logger = get_logger(__name__)

InputSampler = Callable[[np.random.Generator, float, float], float]

INPUT_RULES = ('shifting_uniform', 'iid_uniform', 'iid_custom')
NOISE_RULES = ('gaussian', 'zero')


class Channel(IntEnum):
    INPUT = 0
    NOISE = 1
    OPERATOR = 2
    RECURSION = 3


_INPUT_SAMPLERS: Dict[str, InputSampler] = {}


def register_input_sampler(name: str):
    """
    Decorator registering a custom i.i.d. input law under ``name``.

    The sampler receives (rng, lo, hi) and must return a point of [lo, hi].
    """
    def decorator(func: InputSampler) -> InputSampler:
        if name in _INPUT_SAMPLERS:
            raise StreamError(f"input sampler '{name}' is already registered")
        _INPUT_SAMPLERS[name] = func
        return func
    return decorator


def input_sampler_names() -> List[str]:
    return sorted(_INPUT_SAMPLERS)


@register_input_sampler('triangular')
def _triangular(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(rng.triangular(lo, 0.5 * (lo + hi), hi))


@register_input_sampler('beta22')
def _beta22(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(lo + (hi - lo) * rng.beta(2.0, 2.0))


@dataclass(frozen=True)
class StreamSpec:
    """
    Input and noise laws of an experiment.

    Args:
        input_rule (str): shifting_uniform, iid_uniform or iid_custom
        lo, hi (float): input domain
        shift (float): width removed from each half-window at k = 0 (shifting_uniform)
        sampler (str): registered sampler name (iid_custom)
        noise_rule (str): gaussian or zero
        noise_variance (float): variance of the Gaussian noise
        master_seed (int): root of every derived generator
    """

    input_rule: str = 'shifting_uniform'
    lo: float = -2.0
    hi: float = 4.0
    shift: float = 3.0
    sampler: str = ''
    noise_rule: str = 'gaussian'
    noise_variance: float = 0.1
    master_seed: int = 42

    def __post_init__(self):
        if self.input_rule not in INPUT_RULES:
            raise StreamError(f"unknown input rule '{self.input_rule}', expected one of {INPUT_RULES}")
        if self.noise_rule not in NOISE_RULES:
            raise StreamError(f"unknown noise rule '{self.noise_rule}', expected one of {NOISE_RULES}")
        if not self.lo < self.hi:
            raise StreamError(f"empty input interval [{self.lo}, {self.hi}]")
        if self.input_rule == 'shifting_uniform' and not 0.0 <= self.shift < self.hi - self.lo:
            raise StreamError(f"shift must lie in [0, {self.hi - self.lo}), got {self.shift}")
        if self.input_rule == 'iid_custom' and self.sampler not in _INPUT_SAMPLERS:
            raise StreamError(f"no input sampler registered as '{self.sampler}'")
        if not (self.noise_variance >= 0 and np.isfinite(self.noise_variance)):
            raise StreamError(f"noise variance must be finite and >= 0, got {self.noise_variance}")
        if self.master_seed < 0:
            raise StreamError("master_seed must be nonnegative")


@lru_cache(maxsize=256)
def _philox_key(master_seed: int, replicate: int) -> Tuple[int, int]:
    state = np.random.SeedSequence([master_seed, replicate]).generate_state(2, dtype=np.uint64)
    return int(state[0]), int(state[1])


def derive_rng(master_seed: int, replicate: int, node: int, step: int,
               channel: Channel = Channel.INPUT) -> np.random.Generator:
    """
    Counter-based generator for one (replicate, node, step, channel) cell.

    The Philox key depends only on (master_seed, replicate); the counter encodes
    (step, node, channel), so identical arguments give identical streams everywhere.
    """
    if min(master_seed, replicate, node, step, int(channel)) < 0:
        raise StreamError("derive_rng arguments must be nonnegative")
    bit_generator = np.random.Philox(key=np.array(_philox_key(master_seed, replicate), dtype=np.uint64),
                                     counter=np.array([0, step, node, int(channel)], dtype=np.uint64))
    return np.random.Generator(bit_generator)


def input_support(spec: StreamSpec, step: int) -> Tuple[float, float]:
    """
    Interval of the input law at instant ``step``.

    For shifting_uniform, with k = step // 2, even steps draw from
    [lo, hi - shift/(k+1)] and odd steps from [lo + shift/(k+1), hi].
    """
    if step < 0:
        raise StreamError(f"step must be nonnegative, got {step}")
    if spec.input_rule != 'shifting_uniform':
        return spec.lo, spec.hi
    cut = spec.shift / (step // 2 + 1)
    if step % 2 == 0:
        return spec.lo, spec.hi - cut
    return spec.lo + cut, spec.hi


def sample_input(spec: StreamSpec, node: int, step: int, rng: np.random.Generator) -> float:
    lo, hi = input_support(spec, step)
    if spec.input_rule == 'iid_custom':
        return _INPUT_SAMPLERS[spec.sampler](rng, lo, hi)
    return float(rng.uniform(lo, hi))


def sample_noise(spec: StreamSpec, node: int, step: int, rng: np.random.Generator) -> float:
    if spec.noise_rule == 'zero' or spec.noise_variance == 0.0:
        return 0.0
    return float(rng.normal(0.0, np.sqrt(spec.noise_variance)))


def draw_observations(spec: StreamSpec, truth: Callable, replicate: int, step: int,
                      n_nodes: int) -> List[Tuple[float, float]]:
    """
    Inputs and noisy measurements of every node at one instant.

    Args:
        spec (StreamSpec): stream laws
        truth: callable evaluating the target function at a point
        replicate (int): Monte-Carlo replicate index
        step (int): instant
        n_nodes (int): number of nodes

    Returns:
        list: (x_i, y_i) pairs with y_i = truth(x_i) + v_i
    """
    observations = []
    for node in range(n_nodes):
        x = sample_input(spec, node, step, derive_rng(spec.master_seed, replicate, node, step, Channel.INPUT))
        v = sample_noise(spec, node, step, derive_rng(spec.master_seed, replicate, node, step, Channel.NOISE))
        observations.append((x, float(truth(x)) + v))
    return observations


def draw_inputs(spec: StreamSpec, replicate: int, steps: range, n_nodes: int) -> np.ndarray:
    """Inputs only, as a (len(steps), n_nodes) array."""
    return np.array([[sample_input(spec, i, t, derive_rng(spec.master_seed, replicate, i, t, Channel.INPUT))
                      for i in range(n_nodes)] for t in steps]).reshape(len(steps), n_nodes)
