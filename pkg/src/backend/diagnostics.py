"""
Diagnostics Module
Convergence and excitation readouts for a running network.

- consensus gap and estimation errors, logged into a TrajectoryRecord
- restricted spectra of the empirical excitation operator sum_j sum_i K_x (x) K_x
  on the span of a test dictionary
- the joint positivity check of diag{H_i} + L (x) I
"""

from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.linalg import block_diag, eigh

from src.backend.errors import DegenerateDictionaryError, DiagnosticsError
from src.backend.funcspace import KernelExpansion
from src.backend.graph import Graph, laplacian
from src.backend.kernel import Kernel
from src.backend.learner import NetworkState
from src.backend.streams import Channel, StreamSpec, derive_rng, draw_inputs, sample_input
from src.config.settings import get_config, get_logger
from src.utils.helpers import write_csv

logger = get_logger(__name__)

TRAJECTORY_COLUMNS = ['k', 'node', 'sup_err', 'rmse', 'consensus_gap', 'a_k', 'b_k']


@dataclass
class TrajectoryRecord:
    """
    Per-node errors, consensus gap and gains at the logged steps of one replicate.

    Nodes are stored 1-based, as they appear in the CSV output.
    """

    stride: int = 1000
    rows: List[dict] = field(default_factory=list)

    @property
    def last_step(self) -> Optional[int]:
        return self.rows[-1]['k'] if self.rows else None

    def record(self, k: int, sup_errors: Sequence[float], rmses: Sequence[float],
               gap: float, a_k: float, b_k: float):
        if self.last_step is not None and k <= self.last_step:
            raise DiagnosticsError(f"logged steps must increase: {k} after {self.last_step}")
        if len(sup_errors) != len(rmses):
            raise DiagnosticsError("one sup error and one rmse per node are required")
        values = list(sup_errors) + list(rmses) + [gap]
        if any(v < 0 for v in values):
            raise DiagnosticsError("error readouts must be nonnegative")
        for node, (sup_err, rmse) in enumerate(zip(sup_errors, rmses), start=1):
            self.rows.append({'k': int(k), 'node': node, 'sup_err': float(sup_err), 'rmse': float(rmse),
                              'consensus_gap': float(gap), 'a_k': float(a_k), 'b_k': float(b_k)})
        logger.debug("k=%d max sup error %.4g, consensus gap %.4g", k, max(sup_errors, default=0.0), gap)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=TRAJECTORY_COLUMNS)

    def terminal(self) -> pd.DataFrame:
        frame = self.to_frame()
        return frame[frame['k'] == self.last_step] if self.rows else frame

    def to_csv(self, path: Union[str, Path], float_format: Optional[str] = None) -> Path:
        return write_csv(self.to_frame(), path, float_format=float_format or get_config().CSV_FLOAT_FORMAT)


def logging_schedule(steps: int, stride: int = 1000) -> List[int]:
    """Logged steps: 0, 1, 10, 100, every multiple of ``stride`` and the final step."""
    if steps < 0 or stride < 1:
        raise DiagnosticsError("steps must be >= 0 and stride >= 1")
    logged = {k for k in (0, 1, 10, 100) if k <= steps}
    logged.update(range(0, steps + 1, stride))
    logged.add(steps)
    return sorted(logged)


def consensus_gap(state: NetworkState) -> float:
    """
    Largest distance between two node estimates.

    Sup over the grid in grid mode, RKHS norm in expansion mode, Euclidean norm in
    finite-dimensional mode. A single node has gap 0.
    """
    if state.n_nodes < 2:
        return 0.0
    if state.mode == 'grid':
        values = np.stack([f.values for f in state.estimates])
        return float(np.max(values.max(axis=0) - values.min(axis=0)))
    if state.mode == 'expansion':
        return max((f - g).rkhs_norm() for f, g in combinations(state.estimates, 2))
    vectors = np.stack(state.estimates)
    return max(float(np.linalg.norm(u - v)) for u, v in combinations(vectors, 2))


def rkhs_error(f: KernelExpansion, f0: KernelExpansion) -> float:
    """||f - f0||_K."""
    return (f - f0).rkhs_norm()


class ExcitationSpectrum(NamedTuple):
    min_eig: float
    eigs: np.ndarray

    def to_dict(self) -> dict:
        return {"min_eig": self.min_eig, "eigs": [float(v) for v in self.eigs]}


def dictionary_gram(kernel: Kernel, dictionary) -> tuple:
    points = kernel.check_domain(dictionary)
    if points.shape[0] < 1:
        raise DiagnosticsError("test dictionary is empty")
    if np.unique(points, axis=0).shape[0] != points.shape[0]:
        raise DiagnosticsError("test dictionary points must be distinct")
    gram = kernel.gram(points)
    condition = np.linalg.cond(gram)
    limit = get_config().DICTIONARY_CONDITION_LIMIT
    if not condition <= limit:
        raise DegenerateDictionaryError(
            f"dictionary degenerate: Gram condition number {condition:.3g} exceeds {limit:.3g}")
    return points, gram


def _flatten_inputs(kernel: Kernel, inputs) -> np.ndarray:
    chunks = [kernel.points(node_inputs) for node_inputs in inputs if np.size(node_inputs)]
    if not chunks:
        return np.zeros((0, kernel.dim))
    return np.concatenate(chunks, axis=0)


def _excitation_matrix(kernel: Kernel, points: np.ndarray, inputs) -> np.ndarray:
    xs = _flatten_inputs(kernel, inputs)
    if xs.shape[0] == 0:
        return np.zeros((points.shape[0], points.shape[0]))
    cross = kernel.cross(points, xs)
    return cross @ cross.T


def _restricted_spectrum(excitation: np.ndarray, gram: np.ndarray) -> ExcitationSpectrum:
    eigs = eigh(0.5 * (excitation + excitation.T), gram, eigvals_only=True)
    return ExcitationSpectrum(float(eigs[0]), eigs)


def excitation_spectrum(inputs, kernel: Kernel, dictionary) -> ExcitationSpectrum:
    """
    Spectrum of sum over nodes and window steps of K_x (x) K_x, restricted to span{K_z}.

    For g = sum_l c_l K_{z_l} the quadratic form is sum_x g(x)^2 = c^T B B^T c with
    B[l, s] = K(z_l, x_s), and ||g||^2 = c^T G c, so the restricted eigenvalues solve
    B B^T c = lambda G c.

    Args:
        inputs: per-node sequences of input points over the window
        kernel (Kernel): the kernel
        dictionary: distinct test points z_l

    Returns:
        ExcitationSpectrum: minimum eigenvalue and the ascending spectrum

    Raises:
        DegenerateDictionaryError: when the dictionary Gram matrix is numerically singular
    """
    points, gram = dictionary_gram(kernel, dictionary)
    return _restricted_spectrum(_excitation_matrix(kernel, points, inputs), gram)


def mean_excitation_spectrum(windows: Sequence, kernel: Kernel, dictionary) -> ExcitationSpectrum:
    """Restricted spectrum of the Monte-Carlo mean excitation operator over ``windows``."""
    if not windows:
        raise DiagnosticsError("at least one window is required")
    points, gram = dictionary_gram(kernel, dictionary)
    mean = sum(_excitation_matrix(kernel, points, w) for w in windows) / len(windows)
    return _restricted_spectrum(mean, gram)


def collect_windows(spec: StreamSpec, n_nodes: int, window_index: int, h: int,
                    replicates: int) -> List[List[np.ndarray]]:
    """
    Inputs of steps [window_index h, (window_index + 1) h) for each replicate.

    Returns:
        list: per replicate, per node, the window's input points
    """
    if h < 1 or replicates < 1 or window_index < 0:
        raise DiagnosticsError("window length and replicate count must be positive")
    steps = range(window_index * h, (window_index + 1) * h)
    return [list(draw_inputs(spec, r, steps, n_nodes).T) for r in range(replicates)]


def covariance_operator_spectrum(spec: StreamSpec, kernel: Kernel, dictionary, step: int = 0,
                                 draws: int = 2000, replicate: int = 0) -> ExcitationSpectrum:
    """Restricted spectrum of E[K_x (x) K_x] for the input law of ``step``, by Monte Carlo."""
    if draws < 1:
        raise DiagnosticsError("draws must be >= 1")
    rng = derive_rng(spec.master_seed, replicate, 0, step, Channel.INPUT)
    xs = np.array([sample_input(spec, 0, step, rng) for _ in range(draws)])
    points, gram = dictionary_gram(kernel, dictionary)
    return _restricted_spectrum(_excitation_matrix(kernel, points, [xs]) / draws, gram)


def write_pe_report(spectra: Sequence[ExcitationSpectrum], path: Union[str, Path]) -> Path:
    """CSV ``window,min_eig`` listing."""
    frame = pd.DataFrame({'window': np.arange(len(spectra)), 'min_eig': [s.min_eig for s in spectra]})
    return write_csv(frame, path, float_format=get_config().CSV_FLOAT_FORMAT)


def joint_positivity_check(g: Graph, H_list: Sequence[np.ndarray]) -> dict:
    """
    Minimum eigenvalue of diag{H_1, ..., H_N} + L (x) I_n.

    Args:
        g (Graph): graph with N nodes
        H_list: N symmetric PSD n x n matrices

    Returns:
        dict: {"min_eig": float, "positive": bool}
    """
    if len(H_list) != g.n_nodes:
        raise DiagnosticsError(f"{len(H_list)} matrices for {g.n_nodes} nodes")
    mats = [np.atleast_2d(np.asarray(h, dtype=float)) for h in H_list]
    n = mats[0].shape[0]
    for h in mats:
        if h.shape != (n, n):
            raise DiagnosticsError(f"matrix of shape {h.shape}, expected {(n, n)}")
        if not np.allclose(h, h.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(h))))):
            raise DiagnosticsError("observation matrices must be symmetric")
    assembled = block_diag(*mats) + np.kron(laplacian(g), np.eye(n))
    min_eig = float(np.linalg.eigvalsh(assembled)[0])
    return {"min_eig": min_eig, "positive": min_eig > get_config().EIGEN_TOLERANCE}
