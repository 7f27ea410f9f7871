"""
Learner Module
The consensus+innovations recursion, in its RKHS and finite-dimensional forms.

Each node i holds an estimate f_i(k) and, at every step, moves it toward its own
fresh measurement (innovation, gain a(k)) and toward its neighbors' estimates
(consensus, gain b(k)):

    f_i(k+1) = f_i(k) + a(k) H_i*(k)(y_i(k) - H_i(k) f_i(k)) + b(k) sum_j a_ij (f_j(k) - f_i(k))

In the RKHS form H_i(k) is evaluation at the random input x_i(k), so its adjoint
maps a scalar r to r K(x_i(k), .).
"""

from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import block_diag

from src.backend.errors import (DimensionMismatchError, LearnerError,
                                RepresentationMismatchError)
from src.backend.funcspace import GridFunction, KernelExpansion, SplineGrid
from src.backend.graph import Graph, laplacian
from src.backend.kernel import Kernel
from src.config.settings import get_config, get_logger

logger = get_logger(__name__)

Estimate = Union[KernelExpansion, GridFunction, np.ndarray]
OperatorSampler = Callable[[int, int, np.random.Generator], np.ndarray]

MIN_GAIN_HORIZON = 10
RATE_TREND_TOLERANCE = 1e-2


@dataclass(frozen=True)
class GainSchedule:
    """
    Polynomially decaying gains a(k) = a_scale (k+1)^-a_exponent, b(k) = b_scale (k+1)^-b_exponent.
    """

    a_exponent: float = 0.6
    b_exponent: float = 1.0
    a_scale: float = 1.0
    b_scale: float = 1.0

    def a(self, k):
        return self.a_scale * np.power(np.asarray(k, dtype=float) + 1.0, -self.a_exponent)

    def b(self, k):
        return self.b_scale * np.power(np.asarray(k, dtype=float) + 1.0, -self.b_exponent)

    def gains(self, k: int) -> Tuple[float, float]:
        return float(self.a(k)), float(self.b(k))


@dataclass(frozen=True)
class GainReport:
    cond1: bool
    cond2: bool
    cond3_sum: bool
    cond3_rate: bool
    rate_sup: float

    @property
    def all_pass(self) -> bool:
        return self.cond1 and self.cond2 and self.cond3_sum and self.cond3_rate

    def to_dict(self) -> dict:
        return {
            "cond1": self.cond1,
            "cond2": self.cond2,
            "cond3_sum": self.cond3_sum,
            "cond3_rate": self.cond3_rate,
            "rate_sup": self.rate_sup,
            "all_pass": self.all_pass,
        }


def _sup_converges(running_sup: np.ndarray, horizon: int) -> bool:
    """
    Whether a nondecreasing sequence levels off, from two increments over geometric steps.

    A sequence approaching a finite limit like L - C k^-p has increments shrinking by
    about q^-p per geometric step q; polynomial or logarithmic growth does not shrink them.
    """
    k1, k2 = horizon // 10, int(round(horizon / np.sqrt(10.0)))
    s1, s2, s3 = running_sup[k1], running_sup[k2], running_sup[horizon]
    first, second = s2 - s1, s3 - s2
    if second <= RATE_TREND_TOLERANCE * max(abs(s3), 1e-12):
        return True
    return bool(first > 0 and second <= (1.0 - RATE_TREND_TOLERANCE) * first)


def validate_gains(schedule: GainSchedule, horizon: int) -> GainReport:
    """
    Check the step-size conditions of the convergence theory over a finite horizon.

    cond1: gains positive and decreasing; cond2: both square-summable;
    cond3_sum: sum of a(k) diverges; cond3_rate: the running supremum of
    max{a(k)-a(k+1), b(k)-a(k)} / (a(k)^2 + b(k)^2) is finite and converges, judged
    from its increments over the geometric steps horizon/10, horizon/sqrt(10), horizon.
    The rate check is evidence, not a proof.

    Args:
        schedule (GainSchedule): gains to check
        horizon (int): last step inspected, >= 10

    Returns:
        GainReport: the four flags and the supremum of the rate ratio

    Raises:
        LearnerError: on a short horizon or nonpositive exponents
    """
    if horizon < MIN_GAIN_HORIZON:
        raise LearnerError(f"horizon must be >= {MIN_GAIN_HORIZON}, got {horizon}")
    if schedule.a_exponent <= 0 or schedule.b_exponent <= 0:
        raise LearnerError("gain exponents must be positive")

    cond1 = schedule.a_scale > 0 and schedule.b_scale > 0
    cond2 = schedule.a_exponent > 0.5 and schedule.b_exponent > 0.5
    cond3_sum = schedule.a_exponent <= 1.0

    k = np.arange(horizon + 1)
    a, b = schedule.a(k), schedule.b(k)
    ratio = np.maximum(a - schedule.a(k + 1), b - a) / (a * a + b * b)
    running_sup = np.maximum.accumulate(ratio)
    rate_sup = float(running_sup[-1])
    converging = _sup_converges(running_sup, horizon)
    cond3_rate = bool(np.isfinite(rate_sup) and converging)
    if not converging:
        logger.warning("Gain rate ratio still growing at horizon %d (sup %.4g)", horizon, rate_sup)

    return GainReport(bool(cond1), bool(cond2), bool(cond3_sum), cond3_rate, rate_sup)


class ContractionOnset(NamedTuple):
    t0: int
    j0: float


def operator_norm_bound(n_nodes: int, kernel: Kernel) -> float:
    """rho0 = N sup_x K(x, x), a uniform bound on ||H*(k) H(k)||."""
    return float(n_nodes * kernel.sup_diag_bound())


def contraction_onset(schedule: GainSchedule, rho0: float, laplacian_norm: float,
                      horizon: int = 100000) -> ContractionOnset:
    """
    Step after which the homogeneous recursion operator is a contraction.

    t0 is the first step with (a(k) + b(k))(4 rho0 + 4||L||) <= 1 for every later k up
    to ``horizon``; j0 = sup_k (4 rho0 a(k) + 4 ||L|| b(k)). Together they give the
    deterministic fourth-moment certificate gamma(k) = j0 for k < t0 and 0 afterwards.

    Raises:
        LearnerError: when the condition never holds before ``horizon``
    """
    k = np.arange(horizon + 1)
    a, b = schedule.a(k), schedule.b(k)
    violated = np.flatnonzero((a + b) * (4.0 * rho0 + 4.0 * laplacian_norm) > 1.0)
    t0 = 0 if violated.size == 0 else int(violated[-1]) + 1
    if t0 > horizon:
        raise LearnerError(f"no contraction onset within {horizon} steps")
    j0 = float(np.max(4.0 * rho0 * a + 4.0 * laplacian_norm * b))
    return ContractionOnset(t0, j0)


@dataclass(frozen=True)
class NetworkState:
    """
    Estimates of all nodes at step ``step``.

    The estimates share one representation: all KernelExpansion with one kernel,
    all GridFunction on one grid, or all real vectors of one length.
    """

    step: int
    estimates: Tuple[Estimate, ...]

    def __post_init__(self):
        estimates = tuple(self.estimates)
        object.__setattr__(self, 'estimates', estimates)
        if self.step < 0:
            raise LearnerError(f"step must be nonnegative, got {self.step}")
        if not estimates:
            raise LearnerError("a network state needs at least one estimate")
        first = estimates[0]
        if isinstance(first, KernelExpansion):
            if not all(isinstance(f, KernelExpansion) and f.kernel == first.kernel for f in estimates):
                raise RepresentationMismatchError("estimates do not share one kernel expansion space")
        elif isinstance(first, GridFunction):
            if not all(isinstance(f, GridFunction) and f.grid == first.grid for f in estimates):
                raise RepresentationMismatchError("estimates do not share one grid")
        else:
            vectors = tuple(np.asarray(f, dtype=float) for f in estimates)
            if any(v.ndim != 1 or v.shape != vectors[0].shape for v in vectors):
                raise RepresentationMismatchError("finite-dimensional estimates must be vectors of one length")
            object.__setattr__(self, 'estimates', vectors)

    @property
    def n_nodes(self) -> int:
        return len(self.estimates)

    @property
    def mode(self) -> str:
        first = self.estimates[0]
        if isinstance(first, KernelExpansion):
            return 'expansion'
        if isinstance(first, GridFunction):
            return 'grid'
        return 'finite_dim'

    def stacked(self) -> np.ndarray:
        """Finite-dimensional estimates stacked into one Nn-vector."""
        if self.mode != 'finite_dim':
            raise RepresentationMismatchError("only finite-dimensional states can be stacked")
        return np.concatenate(self.estimates)


def initial_state(n_nodes: int, mode: str, kernel: Optional[Kernel] = None,
                  grid: Optional[SplineGrid] = None, dim: Optional[int] = None) -> NetworkState:
    """Zero estimates at step 0 in the requested representation."""
    if mode == 'expansion':
        if kernel is None:
            raise LearnerError("expansion mode needs a kernel")
        zero = KernelExpansion.zero(kernel)
    elif mode == 'grid':
        if grid is None:
            raise LearnerError("grid mode needs a grid")
        zero = GridFunction.zero(grid)
    elif mode == 'finite_dim':
        if not dim:
            raise LearnerError("finite-dimensional mode needs a dimension")
        zero = np.zeros(dim)
    else:
        raise LearnerError(f"unknown mode '{mode}'")
    return NetworkState(0, tuple(zero for _ in range(n_nodes)))


def rkhs_node_update(f_i: Union[KernelExpansion, GridFunction],
                     neighbors: Sequence[Tuple[float, Union[KernelExpansion, GridFunction]]],
                     x: float, y: float, a: float, b: float,
                     kernel: Optional[Kernel] = None) -> Union[KernelExpansion, GridFunction]:
    """
    One consensus+innovations update of a single node.

    Args:
        f_i: current estimate of the node
        neighbors: (a_ij, f_j) pairs
        x (float): the node's input point
        y (float): the node's measurement at x
        a (float): innovation gain
        b (float): consensus gain
        kernel (Kernel): required in grid mode, where it supplies K(x, .) on the knots

    Returns:
        The updated estimate, in the representation of ``f_i``
    """
    if a < 0 or b < 0:
        raise LearnerError("gains must be nonnegative")
    if isinstance(f_i, KernelExpansion):
        for _, f_j in neighbors:
            if not isinstance(f_j, KernelExpansion) or f_j.kernel != f_i.kernel:
                raise RepresentationMismatchError("neighbor estimate is not in the node's expansion space")
        innovation = a * (y - f_i.evaluate(x))
        terms = [(1.0, f_i), (innovation, KernelExpansion.atom(f_i.kernel, x))]
        for weight, f_j in neighbors:
            terms.append((b * weight, f_j))
            terms.append((-b * weight, f_i))
        return KernelExpansion.combine(terms)

    if isinstance(f_i, GridFunction):
        if kernel is None:
            raise LearnerError("grid mode updates need the kernel")
        for _, f_j in neighbors:
            if not isinstance(f_j, GridFunction):
                raise RepresentationMismatchError("neighbor estimate is not a grid function")
            f_i.require_same_grid(f_j)
        innovation = a * (y - f_i.value_at(x))
        values = f_i.values + innovation * kernel.cross(x, f_i.grid.points)[0]
        for weight, f_j in neighbors:
            values = values + b * weight * (f_j.values - f_i.values)
        return GridFunction(f_i.grid, values)

    raise RepresentationMismatchError(f"unsupported estimate type {type(f_i).__name__}")


def _grid_network_update(state: NetworkState, g: Graph, observations, a: float, b: float,
                         kernel: Kernel) -> Tuple[GridFunction, ...]:
    grid = state.estimates[0].grid
    values = np.stack([f.values for f in state.estimates])
    xs = np.array([x for x, _ in observations], dtype=float)
    ys = np.array([y for _, y in observations], dtype=float)
    at_inputs = np.einsum('il,il->i', grid.weights(xs), values)
    update = (a * (ys - at_inputs))[:, None] * kernel.cross(xs, grid.points)
    # explicit pairwise differences keep equal estimates exactly fixed
    update += b * np.einsum('ij,ijl->il', g.weights, values[None, :, :] - values[:, None, :])
    return tuple(GridFunction(grid, row) for row in values + update)


def network_step(state: NetworkState, g: Graph, schedule: GainSchedule,
                 observations: Sequence[Tuple[float, float]], kernel: Optional[Kernel] = None,
                 compaction_interval: Optional[int] = None) -> NetworkState:
    """
    Synchronous update of every node from the estimates frozen at step k.

    Args:
        state (NetworkState): estimates at step k (RKHS representations)
        g (Graph): communication graph
        schedule (GainSchedule): gains a(k), b(k)
        observations: one (x_i, y_i) pair per node
        kernel (Kernel): required in grid mode
        compaction_interval (int): in expansion mode, compact every this many steps

    Returns:
        NetworkState: estimates at step k+1
    """
    if len(observations) != state.n_nodes or g.n_nodes != state.n_nodes:
        raise LearnerError(
            f"{len(observations)} observations and {g.n_nodes} graph nodes for {state.n_nodes} estimates")
    a, b = schedule.gains(state.step)

    if state.mode == 'grid':
        if kernel is None:
            raise LearnerError("grid mode updates need the kernel")
        return NetworkState(state.step + 1, _grid_network_update(state, g, observations, a, b, kernel))
    if state.mode != 'expansion':
        raise RepresentationMismatchError("network_step needs RKHS estimates; use finite_dim_step")

    updated = []
    for i, (x, y) in enumerate(observations):
        neighbors = [(w, state.estimates[j]) for j, w in g.neighbors(i)]
        f = rkhs_node_update(state.estimates[i], neighbors, x, y, a, b)
        if compaction_interval and (state.step + 1) % compaction_interval == 0:
            f = f.compact()
        updated.append(f)
    return NetworkState(state.step + 1, tuple(updated))


@dataclass(frozen=True)
class FiniteDimModel:
    """
    Linear parameter-estimation model y_i(k) = H_i(k) f0 + v_i(k).

    Args:
        dim (int): parameter dimension n
        truth: the unknown f0, an n-vector
        sampler: (node, step, rng) -> m_i x n observation matrix
        obs_dims: m_i per node; the sampler output is checked against it
    """

    dim: int
    truth: np.ndarray
    sampler: OperatorSampler = field(repr=False)
    obs_dims: Tuple[int, ...] = ()

    def __post_init__(self):
        truth = np.asarray(self.truth, dtype=float).ravel()
        if truth.size != self.dim:
            raise DimensionMismatchError(f"truth has {truth.size} entries for dimension {self.dim}")
        object.__setattr__(self, 'truth', truth)
        object.__setattr__(self, 'obs_dims', tuple(int(m) for m in self.obs_dims))

    @property
    def n_nodes(self) -> int:
        return len(self.obs_dims)

    def sample_operators(self, k: int, rng) -> List[np.ndarray]:
        """
        Draw H_i(k) for every node.

        Args:
            k (int): step
            rng: one Generator shared by all nodes, or a sequence of per-node Generators
        """
        rngs = rng if isinstance(rng, (list, tuple)) else [rng] * self.n_nodes
        operators = []
        for i, m in enumerate(self.obs_dims):
            h = np.asarray(self.sampler(i, k, rngs[i]), dtype=float)
            if h.shape != (m, self.dim):
                raise DimensionMismatchError(
                    f"node {i} operator has shape {h.shape}, expected {(m, self.dim)}")
            operators.append(h)
        return operators

    def observe(self, operators: Sequence[np.ndarray], noise: Sequence[np.ndarray]) -> List[np.ndarray]:
        """Measurements H_i f0 + v_i."""
        if len(noise) != len(operators):
            raise DimensionMismatchError(f"{len(noise)} noise vectors for {len(operators)} nodes")
        out = []
        for h, v in zip(operators, noise):
            v = np.atleast_1d(np.asarray(v, dtype=float))
            if v.shape != (h.shape[0],):
                raise DimensionMismatchError(f"noise shape {v.shape} does not match {h.shape[0]} observations")
            out.append(h @ self.truth + v)
        return out


def gaussian_observation_model(dim: int, n_nodes: int, obs_dim: int = 1, truth=None,
                               scale: float = 1.0) -> FiniteDimModel:
    """Model whose observation matrices have i.i.d. N(0, scale^2) entries."""
    truth = np.ones(dim) if truth is None else truth

    def sampler(node: int, step: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(0.0, scale, size=(obs_dim, dim))

    return FiniteDimModel(dim, truth, sampler, (obs_dim,) * n_nodes)


def _check_operators(model: FiniteDimModel, operators: Sequence[np.ndarray]):
    if len(operators) != model.n_nodes:
        raise DimensionMismatchError(f"{len(operators)} operators for {model.n_nodes} nodes")
    for i, h in enumerate(operators):
        if h.shape != (model.obs_dims[i], model.dim):
            raise DimensionMismatchError(f"node {i} operator has shape {h.shape}")


def finite_dim_step(state: NetworkState, g: Graph, schedule: GainSchedule, model: FiniteDimModel,
                    noise: Sequence[np.ndarray], rng=None,
                    operators: Optional[Sequence[np.ndarray]] = None) -> NetworkState:
    """
    One synchronous step of the finite-dimensional recursion; the adjoint is the transpose.

    Operators are drawn from ``model`` with ``rng`` unless given explicitly, which is
    how a paired error-recursion run shares the same samples.
    """
    if state.mode != 'finite_dim' or state.estimates[0].shape != (model.dim,):
        raise DimensionMismatchError("state does not match the model dimension")
    if g.n_nodes != state.n_nodes or model.n_nodes != state.n_nodes:
        raise DimensionMismatchError("graph, model and state disagree on the number of nodes")
    if operators is None:
        if rng is None:
            raise LearnerError("either operators or an rng is required")
        operators = model.sample_operators(state.step, rng)
    _check_operators(model, operators)
    measurements = model.observe(operators, noise)
    a, b = schedule.gains(state.step)

    f = state.estimates
    updated = []
    for i in range(state.n_nodes):
        h = operators[i]
        consensus = sum((w * (f[j] - f[i]) for j, w in g.neighbors(i)), np.zeros(model.dim))
        updated.append(f[i] + a * h.T @ (measurements[i] - h @ f[i]) + b * consensus)
    return NetworkState(state.step + 1, tuple(updated))


def error_recursion_trajectory(model: FiniteDimModel, g: Graph, schedule: GainSchedule,
                               e0: np.ndarray, noises: Sequence[Sequence[np.ndarray]],
                               operator_samples: Sequence[Sequence[np.ndarray]],
                               start_step: int = 0) -> List[np.ndarray]:
    """
    Iterate the stacked error equation
    e(k+1) = (I - a(k) H*(k) H(k) - b(k) L (x) I) e(k) + a(k) H*(k) v(k).

    Args:
        model (FiniteDimModel): supplies dimensions
        g (Graph): communication graph
        schedule (GainSchedule): gains
        e0: initial stacked error, length N n
        noises: per step, the per-node noise vectors
        operator_samples: per step, the per-node observation matrices
        start_step (int): step index of e0

    Returns:
        list: e(start_step), ..., e(start_step + len(operator_samples))
    """
    n, N = model.dim, model.n_nodes
    e = np.asarray(e0, dtype=float).ravel()
    if e.size != n * N or g.n_nodes != N:
        raise DimensionMismatchError(f"stacked error has {e.size} entries, expected {n * N}")
    if len(noises) != len(operator_samples):
        raise DimensionMismatchError("noise and operator sequences differ in length")
    lifted = np.kron(laplacian(g), np.eye(n))
    identity = np.eye(n * N)
    trajectory = [e]
    for offset, (operators, noise) in enumerate(zip(operator_samples, noises)):
        _check_operators(model, operators)
        a, b = schedule.gains(start_step + offset)
        H = block_diag(*operators)
        v = np.concatenate([np.atleast_1d(np.asarray(vi, dtype=float)) for vi in noise])
        if v.size != H.shape[0]:
            raise DimensionMismatchError("noise does not match the observation dimensions")
        e = (identity - a * H.T @ H - b * lifted) @ e + a * H.T @ v
        trajectory.append(e)
    return trajectory


LossSample = Tuple[Sequence[np.ndarray], Sequence[np.ndarray]]


def draw_loss_samples(model: FiniteDimModel, count: int, rng: np.random.Generator,
                      noise_std: float = 0.0, step: int = 0) -> List[LossSample]:
    """(operators, measurements) pairs used as the empirical expectation of the loss."""
    samples = []
    for _ in range(count):
        operators = model.sample_operators(step, rng)
        noise = [rng.normal(0.0, noise_std, size=m) if noise_std > 0 else np.zeros(m)
                 for m in model.obs_dims]
        samples.append((operators, model.observe(operators, noise)))
    return samples


def _stacked_estimates(f, n_nodes: int) -> np.ndarray:
    arr = np.asarray(f, dtype=float)
    return arr.reshape(n_nodes, -1)


def laplacian_loss(f, g: Graph, samples: Sequence[LossSample]) -> float:
    """
    J(f) = 1/2 (mean ||y - H f||^2 + <(L (x) I) f, f>).

    <(L (x) I) f, f> equals 1/2 sum_i sum_j a_ij ||f_i - f_j||^2.

    Raises:
        LearnerError: on an empty sample list
    """
    if not samples:
        raise LearnerError("laplacian_loss needs at least one sample")
    fs = _stacked_estimates(f, g.n_nodes)
    misfit = np.mean([sum(float(np.sum((y - h @ fi) ** 2)) for h, y, fi in zip(hs, ys, fs))
                      for hs, ys in samples])
    regulariser = float(np.sum(fs * (laplacian(g) @ fs)))
    return 0.5 * (misfit + regulariser)


def laplacian_loss_gradient(f, g: Graph, samples: Sequence[LossSample]) -> np.ndarray:
    """-mean H*(y - H f) + (L (x) I) f, returned stacked like ``f``."""
    if not samples:
        raise LearnerError("laplacian_loss_gradient needs at least one sample")
    fs = _stacked_estimates(f, g.n_nodes)
    innovation = np.mean([np.stack([h.T @ (y - h @ fi) for h, y, fi in zip(hs, ys, fs)])
                          for hs, ys in samples], axis=0)
    return (-innovation + laplacian(g) @ fs).ravel()


def mean_observation_gram(model: FiniteDimModel, samples: int, rng: np.random.Generator,
                          step: int = 0) -> np.ndarray:
    """Monte-Carlo estimate of sum_j E[H_j^T H_j]."""
    if samples < 1:
        raise LearnerError("samples must be >= 1")
    total = np.zeros((model.dim, model.dim))
    for _ in range(samples):
        for h in model.sample_operators(step, rng):
            total += h.T @ h
    return total / samples


def finite_dim_excitation_check(model: FiniteDimModel, samples: int, rng: np.random.Generator,
                                step: int = 0) -> dict:
    """Minimum eigenvalue of sum_j E[H_j^T H_j]; positive means the network is jointly excited."""
    min_eig = float(np.linalg.eigvalsh(mean_observation_gram(model, samples, rng, step))[0])
    return {"min_eig": min_eig, "positive": min_eig > get_config().EIGEN_TOLERANCE}
