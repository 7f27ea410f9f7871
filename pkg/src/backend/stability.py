"""
Stability Module
Monte-Carlo laboratory for random difference equations

    x(k+1) = (I - F(k)) x(k) + G(k) u(k)

in finite-dimensional truncations: mean-square trajectories, L_p^q-stability
probes of random operator products, the fourth-moment condition, and the
deterministic product contraction with its uniform bound.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.linalg import block_diag

from src.backend.diagnostics import dictionary_gram
from src.backend.errors import StabilityError
from src.backend.graph import Graph, laplacian
from src.backend.kernel import Kernel
from src.backend.learner import GainSchedule
from src.backend.streams import Channel, StreamSpec, derive_rng, sample_input
from src.config.settings import get_config, get_logger

logger = get_logger(__name__)

MatrixSampler = Callable[[int, np.random.Generator], np.ndarray]
VectorSampler = Callable[[int, np.random.Generator], np.ndarray]
TestVectors = Callable[[int, np.random.Generator, List[np.ndarray]], np.ndarray]

ZERO_MEAN_DRAWS = 2000


def _check_probe_dim(dim: int):
    limit = get_config().PROBE_MAX_DIM
    if dim > limit:
        raise StabilityError(f"probe dimension {dim} exceeds the cap of {limit}")


def _parallel(jobs):
    return Parallel(n_jobs=get_config().MAX_WORKERS, prefer='threads')(jobs)


@dataclass(frozen=True)
class RandomRecursionSpec:
    """
    Args:
        dim (int): state dimension n
        F_sampler: (k, rng) -> n x n matrix F(k)
        G_sampler: (k, rng) -> n x m matrix G(k); None for a homogeneous recursion
        u_sampler: (k, rng) -> zero-mean m-vector u(k)
        x0: initial state
    """

    dim: int
    F_sampler: MatrixSampler = field(repr=False)
    G_sampler: Optional[MatrixSampler] = field(default=None, repr=False)
    u_sampler: Optional[VectorSampler] = field(default=None, repr=False)
    x0: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        _check_probe_dim(self.dim)
        x0 = np.ones(self.dim) if self.x0 is None else np.asarray(self.x0, dtype=float).ravel()
        if x0.shape != (self.dim,):
            raise StabilityError(f"x0 has shape {x0.shape}, expected ({self.dim},)")
        if (self.G_sampler is None) != (self.u_sampler is None):
            raise StabilityError("G_sampler and u_sampler must be given together")
        object.__setattr__(self, 'x0', x0)

    def step(self, k: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        F = np.atleast_2d(np.asarray(self.F_sampler(k, rng), dtype=float))
        if F.shape != (self.dim, self.dim):
            raise StabilityError(f"F({k}) has shape {F.shape}, expected {(self.dim, self.dim)}")
        nxt = x - F @ x
        if self.G_sampler is not None:
            G = np.atleast_2d(np.asarray(self.G_sampler(k, rng), dtype=float))
            u = np.atleast_1d(np.asarray(self.u_sampler(k, rng), dtype=float))
            if G.shape[0] != self.dim or G.shape[1] != u.shape[0]:
                raise StabilityError(f"G({k}) of shape {G.shape} does not fit u({k}) of length {u.shape[0]}")
            nxt = nxt + G @ u
        return nxt


def _recursion_replicate(spec: RandomRecursionSpec, steps: int, master_seed: int, replicate: int) -> np.ndarray:
    rng = derive_rng(master_seed, replicate, 0, 0, Channel.RECURSION)
    x = spec.x0
    sq = np.empty(steps + 1)
    sq[0] = x @ x
    for k in range(steps):
        x = spec.step(k, x, rng)
        sq[k + 1] = x @ x
    return sq


def simulate_recursion(spec: RandomRecursionSpec, steps: int, replicates: int = 100,
                       master_seed: int = 42) -> pd.DataFrame:
    """
    Monte-Carlo estimate of E||x(k)||^2 for k = 0..steps.

    The input sampler, when present, must pass check_zero_mean on ZERO_MEAN_DRAWS
    draws at k = 0 before anything is simulated.

    Returns:
        pd.DataFrame: columns k, mean_sq_norm

    Raises:
        StabilityError: on a biased input sampler or no replicates
    """
    if replicates < 1:
        raise StabilityError("replicates must be >= 1")
    if spec.u_sampler is not None:
        rng = derive_rng(master_seed, 0, 0, 0, Channel.NOISE)
        verdict = check_zero_mean(spec.u_sampler, ZERO_MEAN_DRAWS, rng)
        if not verdict["passed"]:
            raise StabilityError(f"input sampler is not zero-mean: a component mean lies "
                                 f"{verdict['max_z']:.3g} standard errors from 0")
    runs = _parallel(delayed(_recursion_replicate)(spec, steps, master_seed, r) for r in range(replicates))
    return pd.DataFrame({'k': np.arange(steps + 1), 'mean_sq_norm': np.mean(runs, axis=0)})


def lp_boundedness(frame: pd.DataFrame, column: str = 'mean_sq_norm', fraction: float = 0.1,
                   trailing: float = 0.1) -> dict:
    """
    L_p readouts of a moment trajectory.

    Args:
        frame: table with one moment per row, in step order
        column (str): moment column
        fraction (float): decay target relative to the first value
        trailing (float): share of the trajectory forming the trailing window

    Returns:
        dict: sup of the moment (boundedness) and whether the trailing window
        stays below ``fraction`` of the initial moment (asymptotic decay)
    """
    values = frame[column].to_numpy(dtype=float)
    if values.size == 0:
        raise StabilityError("empty moment trajectory")
    tail = values[-max(1, int(np.ceil(trailing * values.size))):]
    return {
        "sup": float(np.max(values)),
        "bounded": bool(np.all(np.isfinite(values))),
        "decaying": bool(np.max(tail) <= fraction * values[0]),
    }


def check_zero_mean(u_sampler: VectorSampler, draws: int, rng: np.random.Generator,
                    k: int = 0, sigmas: float = 4.0) -> dict:
    """Empirical zero-mean test: every component mean within ``sigmas`` standard errors of 0."""
    if draws < 2:
        raise StabilityError("draws must be >= 2")
    samples = np.array([np.atleast_1d(u_sampler(k, rng)) for _ in range(draws)], dtype=float)
    std_err = samples.std(axis=0, ddof=1) / np.sqrt(draws)
    means = samples.mean(axis=0)
    z = np.abs(means) / np.where(std_err > 0, std_err, np.inf)
    z = np.where((std_err == 0) & (means != 0), np.inf, z)
    return {"max_z": float(np.max(z)), "passed": bool(np.max(z) <= sigmas)}


def unit_test_vectors(dim: int) -> TestVectors:
    """Uniformly random unit vectors drawn after the history up to the probe start."""
    def draw(n: int, rng: np.random.Generator, history: List[np.ndarray]) -> np.ndarray:
        v = rng.standard_normal(dim)
        return v / np.linalg.norm(v)
    return draw


def _probe_replicate(A_sampler: MatrixSampler, test_vectors: TestVectors, p: float, q: float,
                     start: int, horizon: int, master_seed: int, replicate: int):
    rng = derive_rng(master_seed, replicate, start, 0, Channel.RECURSION)
    history = [np.asarray(A_sampler(k, rng), dtype=float) for k in range(start + 1)]
    x = np.asarray(test_vectors(start, rng, history), dtype=float)
    norms = np.empty(horizon - start + 1)
    norms[0] = np.linalg.norm(x)
    for offset, m in enumerate(range(start + 1, horizon + 1), start=1):
        x = np.asarray(A_sampler(m, rng), dtype=float) @ x
        norms[offset] = np.linalg.norm(x)
    return norms ** p, norms[0] ** q


@dataclass
class LpqProbeResult:
    table: pd.DataFrame
    passed: bool
    start_q_moments: dict

    def to_dict(self) -> dict:
        return {"passed": self.passed, "start_q_moments": self.start_q_moments, "rows": len(self.table)}


def lpq_stability_probe(A_sampler: MatrixSampler, test_vectors: TestVectors, p: float = 2.0,
                        q: float = 2.0, horizon: int = 200, replicates: int = 50,
                        starts: Sequence[int] = (0, 10, 50), decay_fraction: float = 0.1,
                        master_seed: int = 42) -> LpqProbeResult:
    """
    Estimate E||A(m) ... A(n+1) x(n)||^p for each start n and every m up to ``horizon``.

    Args:
        A_sampler: (k, rng) -> random operator A(k)
        test_vectors: (n, rng, history) -> adapted starting vector x(n); ``history``
            holds A(0..n) drawn before it
        p (float): moment order of the decay table
        q (float): moment order reported for the starting vectors
        horizon (int): last step m
        replicates (int): Monte-Carlo replicates per start
        starts: probe starts n < horizon
        decay_fraction (float): a row passes when its last moment is below this
            fraction of its first
        master_seed (int): seed of the derived generators

    Returns:
        LpqProbeResult: table with columns n, m, moment; overall pass flag
    """
    if p <= 0 or q <= 0:
        raise StabilityError("p and q must be positive")
    starts = [n for n in starts if n < horizon]
    if not starts:
        raise StabilityError(f"no probe start below the horizon {horizon}")
    frames, passed, q_moments = [], True, {}
    for n in starts:
        runs = _parallel(delayed(_probe_replicate)(A_sampler, test_vectors, p, q, n, horizon, master_seed, r)
                         for r in range(replicates))
        moments = np.mean([r[0] for r in runs], axis=0)
        q_moments[int(n)] = float(np.mean([r[1] for r in runs]))
        frames.append(pd.DataFrame({'n': n, 'm': np.arange(n, horizon + 1), 'moment': moments}))
        row_passed = bool(moments[-1] <= decay_fraction * moments[0])
        passed = passed and row_passed
        logger.debug("L_p^q probe start %d: moment %.4g -> %.4g", n, moments[0], moments[-1])
    return LpqProbeResult(pd.concat(frames, ignore_index=True), passed, q_moments)


def _moment_replicate(A_sampler: MatrixSampler, horizon: int, master_seed: int, replicate: int) -> np.ndarray:
    out = np.empty(horizon + 1)
    for k in range(horizon + 1):
        rng = derive_rng(master_seed, replicate, 0, k, Channel.OPERATOR)
        out[k] = np.linalg.norm(np.atleast_2d(A_sampler(k, rng)), ord=2) ** 4
    return out


def moment_condition_probe(A_sampler: MatrixSampler, horizon: int = 1000, replicates: int = 50,
                           master_seed: int = 42) -> pd.DataFrame:
    """
    Fourth-moment condition E||I - F(k)||^4 <= 1 + gamma(k) with summable gamma.

    ``A_sampler`` returns I - F(k). Norms are spectral norms.

    Returns:
        pd.DataFrame: columns k, gamma_hat, partial_sum, max_norm4; max_norm4 is the largest
        sampled ||I - F(k)||^4 across replicates, a check on heavy tails behind the mean
    """
    if replicates < 10:
        raise StabilityError("the moment probe needs at least 10 replicates")
    norms4 = np.array(_parallel(delayed(_moment_replicate)(A_sampler, horizon, master_seed, r)
                                for r in range(replicates)))
    gamma_hat = np.maximum(norms4.mean(axis=0) - 1.0, 0.0)
    return pd.DataFrame({
        'k': np.arange(horizon + 1),
        'gamma_hat': gamma_hat,
        'partial_sum': np.cumsum(gamma_hat),
        'max_norm4': norms4.max(axis=0),
    })


@dataclass
class ContractionResult:
    norms: np.ndarray
    M: float
    d: int
    bound: float

    @property
    def within_bound(self) -> bool:
        return bool(np.all(self.norms <= self.bound * (1.0 + 1e-12)))

    def to_dict(self) -> dict:
        return {"M": self.M, "d": self.d, "bound": self.bound, "final_norm": float(self.norms[-1]),
                "within_bound": self.within_bound}


def _require_spd(H: np.ndarray) -> np.ndarray:
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape[0] != H.shape[1] or not np.allclose(H, H.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(H).max())):
        raise StabilityError("H must be a symmetric square matrix")
    if np.linalg.eigvalsh(H)[0] <= 0.0:
        raise StabilityError("H must be positive definite")
    return H


def product_contraction(H, mu: Callable[[int], float], x, steps: int) -> ContractionResult:
    """
    Norms of (I - mu(k) H) ... (I - mu(0) H) x for k = 0..steps-1.

    With d the first index where mu(j) ||H|| <= 1 and M the largest norm of the
    earlier factors (at least 1), every norm is bounded by M^d ||x||.

    Raises:
        StabilityError: when H is not symmetric positive definite
    """
    H = _require_spd(H)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (H.shape[0],):
        raise StabilityError(f"x has shape {x.shape}, expected ({H.shape[0]},)")
    initial_norm = float(np.linalg.norm(x))
    n = H.shape[0]
    h_norm = float(np.linalg.eigvalsh(H)[-1])
    identity = np.eye(n)
    mus = np.array([float(mu(j)) for j in range(steps)])
    small = np.flatnonzero(mus * h_norm <= 1.0)
    d = int(small[0]) if small.size else steps
    M = max([1.0] + [float(np.linalg.norm(identity - mus[j] * H, ord=2)) for j in range(d)])
    norms = np.empty(steps)
    for j in range(steps):
        x = (identity - mus[j] * H) @ x
        norms[j] = np.linalg.norm(x)
    return ContractionResult(norms, M, d, M ** d * initial_norm)


def restricted_network_operator_sampler(graph: Graph, kernel: Kernel, stream: StreamSpec,
                                        schedule: GainSchedule, dictionary) -> MatrixSampler:
    """
    Sampler of A(k) = I - a(k) H*(k) H(k) - b(k) L (x) I restricted to span{K_z}.

    Coordinates are orthonormal in the RKHS: with G = U diag(lambda) U^T, the basis
    e_r = sum_l (U lambda^-1/2)[l, r] K_{z_l}. Evaluation at x then restricts to the
    row vector phi(x) = lambda^-1/2 U^T K(z, x), and H_i* H_i to phi phi^T.

    The inputs x_i(k) are drawn from the stream law with the ``rng`` handed to the
    returned sampler.
    """
    points, gram = dictionary_gram(kernel, dictionary)
    m = points.shape[0]
    _check_probe_dim(graph.n_nodes * m)
    eigvals, eigvecs = np.linalg.eigh(gram)
    transform = eigvecs / np.sqrt(eigvals)
    lifted = np.kron(laplacian(graph), np.eye(m))
    identity = np.eye(graph.n_nodes * m)

    def sample(k: int, rng: np.random.Generator) -> np.ndarray:
        a, b = schedule.gains(k)
        blocks = []
        for i in range(graph.n_nodes):
            x = sample_input(stream, i, k, rng)
            phi = transform.T @ kernel.cross(points, x)[:, 0]
            blocks.append(np.outer(phi, phi))
        return identity - a * block_diag(*blocks) - b * lifted

    return sample


def exponential_stability_counterexample(F, lengths: Sequence[int] = (1, 2, 4, 8)) -> List[float]:
    """
    ||(I - F)^(2^l)|| for each l in ``lengths``.

    For a fixed PSD F with a zero eigenvalue and ||I - F|| <= 1 every value is 1,
    so no bound of the form M lambda^(m-n) with lambda < 1 can hold.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape[0] != F.shape[1] or not np.allclose(F, F.T):
        raise StabilityError("F must be a symmetric square matrix")
    step = np.eye(F.shape[0]) - F
    return [float(np.linalg.norm(np.linalg.matrix_power(step, 2 ** int(l)), ord=2)) for l in lengths]
