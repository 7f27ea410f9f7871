"""
Function Space Module
Representations of RKHS members used by the learner.

Two representations are supported:
- KernelExpansion: f = sum_i c_i K(centers_i, .), exact; the RKHS inner product is
  computed through the Gram matrix of the centers.
- GridFunction: values of f on a fixed knot vector, read between knots with a natural
  cubic spline. The spline basis is built once per SplineGrid so that evaluating any
  function on that grid costs one sparse-ish dot product.
"""

import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline

from src.backend.errors import (ExtrapolationError, FuncSpaceError, GridMismatchError,
                                KernelMismatchError)
from src.backend.kernel import Kernel
from src.utils.helpers import frozen, write_csv

COMPACTION_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class KernelExpansion:
    """
    Finite kernel expansion sum_i coefficients[i] * K(centers[i], .).

    Duplicate centers are allowed; ``compact`` merges them without changing the function.
    """

    kernel: Kernel
    centers: np.ndarray = field(default=None, repr=False)
    coefficients: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        centers = np.zeros((0, self.kernel.dim)) if self.centers is None else self.kernel.points(self.centers)
        coefficients = np.zeros(0) if self.coefficients is None else np.asarray(self.coefficients, dtype=float).ravel()
        if centers.shape[0] != coefficients.shape[0]:
            raise FuncSpaceError(
                f"{centers.shape[0]} centers but {coefficients.shape[0]} coefficients")
        if centers.shape[0]:
            self.kernel.check_domain(centers)
        object.__setattr__(self, 'centers', frozen(centers))
        object.__setattr__(self, 'coefficients', frozen(coefficients))

    @classmethod
    def zero(cls, kernel: Kernel) -> 'KernelExpansion':
        return cls(kernel)

    @classmethod
    def atom(cls, kernel: Kernel, x, coefficient: float = 1.0) -> 'KernelExpansion':
        """The function coefficient * K_x."""
        return cls(kernel, kernel.points(x)[:1], [coefficient])

    def __len__(self) -> int:
        return self.coefficients.shape[0]

    def _require_same_kernel(self, other: 'KernelExpansion'):
        if self.kernel != other.kernel:
            raise KernelMismatchError(f"kernel mismatch: {self.kernel} vs {other.kernel}")

    def evaluate(self, x) -> Union[float, np.ndarray]:
        """
        Point evaluation through the reproducing property.

        Returns a float for a single point and an array for several.
        """
        pts = self.kernel.check_domain(x)
        if len(self) == 0:
            values = np.zeros(pts.shape[0])
        else:
            values = self.kernel.cross(pts, self.centers) @ self.coefficients
        return float(values[0]) if np.ndim(x) == 0 or (self.kernel.dim > 1 and np.ndim(x) == 1) else values

    def __call__(self, x):
        return self.evaluate(x)

    def inner_product(self, other: 'KernelExpansion') -> float:
        """<f, g>_K = sum_i sum_j c_i d_j K(center_i, center_j)."""
        self._require_same_kernel(other)
        if len(self) == 0 or len(other) == 0:
            return 0.0
        if other is self:
            return float(self.coefficients @ self.kernel.gram(self.centers) @ self.coefficients)
        return float(self.coefficients @ self.kernel.cross(self.centers, other.centers) @ other.coefficients)

    def rkhs_norm(self) -> float:
        # Gram matrices are PSD only up to rounding
        return float(np.sqrt(max(self.inner_product(self), 0.0)))

    @staticmethod
    def combine(terms: Iterable[Tuple[float, 'KernelExpansion']]) -> 'KernelExpansion':
        """
        Linear combination sum_t w_t f_t with identical centers merged exactly.

        Args:
            terms: (weight, expansion) pairs sharing one kernel
        """
        terms = list(terms)
        if not terms:
            raise FuncSpaceError("cannot combine an empty list of expansions")
        kernel = terms[0][1].kernel
        for _, f in terms[1:]:
            terms[0][1]._require_same_kernel(f)
        centers = np.concatenate([f.centers for _, f in terms], axis=0)
        coefficients = np.concatenate([w * f.coefficients for w, f in terms])
        if centers.shape[0] == 0:
            return KernelExpansion(kernel)
        unique, inverse = np.unique(centers, axis=0, return_inverse=True)
        merged = np.zeros(unique.shape[0])
        np.add.at(merged, inverse.ravel(), coefficients)
        return KernelExpansion(kernel, unique, merged)

    def __add__(self, other: 'KernelExpansion') -> 'KernelExpansion':
        return KernelExpansion.combine([(1.0, self), (1.0, other)])

    def __sub__(self, other: 'KernelExpansion') -> 'KernelExpansion':
        return KernelExpansion.combine([(1.0, self), (-1.0, other)])

    def __mul__(self, alpha: float) -> 'KernelExpansion':
        return KernelExpansion(self.kernel, self.centers, alpha * self.coefficients)

    __rmul__ = __mul__

    def append(self, x, coefficient: float) -> 'KernelExpansion':
        """Return a copy with one more center."""
        centers = np.concatenate([self.centers, self.kernel.points(x)[:1]], axis=0)
        return KernelExpansion(self.kernel, centers, np.append(self.coefficients, coefficient))

    def compact(self, tol: float = COMPACTION_TOLERANCE) -> 'KernelExpansion':
        """
        Merge centers closer than ``tol`` (max-norm) and drop zero coefficients.

        Centers are lexicographically sorted and merged into the first member of each
        run of near-identical neighbors.
        """
        if len(self) == 0:
            return self
        order = np.lexsort(self.centers.T[::-1])
        centers = self.centers[order]
        coefficients = self.coefficients[order]
        gaps = np.max(np.abs(np.diff(centers, axis=0)), axis=1) if len(self) > 1 else np.zeros(0)
        starts = np.concatenate([[True], gaps >= tol])
        group = np.cumsum(starts) - 1
        merged = np.zeros(int(group[-1]) + 1)
        np.add.at(merged, group, coefficients)
        keep = merged != 0.0
        return KernelExpansion(self.kernel, centers[starts][keep], merged[keep])

    def to_grid(self, grid: 'SplineGrid') -> 'GridFunction':
        return expansion_to_grid(self, grid)

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write ``center,coefficient`` rows after a JSON kernel header line."""
        if self.kernel.dim != 1:
            raise FuncSpaceError("CSV export supports one-dimensional centers only")
        frame = pd.DataFrame({'center': self.centers[:, 0], 'coefficient': self.coefficients})
        return write_csv(frame, path, float_format='%.17g',
                         header_lines=[f"kernel = {json.dumps(self.kernel.describe())}"])

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> 'KernelExpansion':
        with open(path) as fh:
            header = fh.readline()
        if not header.startswith('# kernel = '):
            raise FuncSpaceError(f"{path} has no kernel header line")
        kernel = Kernel.from_description(json.loads(header[len('# kernel = '):]))
        frame = pd.read_csv(path, comment='#')
        return cls(kernel, frame['center'].to_numpy(), frame['coefficient'].to_numpy())


class SplineGrid:
    """
    Strictly increasing knot vector with its natural cubic-spline cardinal basis.

    The basis is the spline interpolant of the identity matrix, so the spline of
    any value vector v at x equals basis(x) @ v. It is computed on first use and
    then shared by every GridFunction on this grid.
    """

    def __init__(self, points: Sequence[float]):
        pts = np.asarray(points, dtype=float).ravel()
        if pts.size < 4:
            raise FuncSpaceError(f"a spline grid needs at least 4 knots, got {pts.size}")
        if not np.all(np.diff(pts) > 0):
            raise FuncSpaceError("grid knots must be strictly increasing")
        self.points = frozen(pts)

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        return isinstance(other, SplineGrid) and (
            other is self or np.array_equal(self.points, other.points))

    def __hash__(self) -> int:
        return hash(self.points.tobytes())

    def __repr__(self) -> str:
        return f"SplineGrid({self.points[0]:g}..{self.points[-1]:g}, {len(self)} knots)"

    @property
    def lo(self) -> float:
        return float(self.points[0])

    @property
    def hi(self) -> float:
        return float(self.points[-1])

    @cached_property
    def basis(self) -> CubicSpline:
        return CubicSpline(self.points, np.eye(len(self)), bc_type='natural')

    def check_range(self, x) -> np.ndarray:
        xs = np.asarray(x, dtype=float).ravel()
        if np.any(xs < self.lo) or np.any(xs > self.hi):
            raise ExtrapolationError(
                f"extrapolation refused: query outside grid range [{self.lo}, {self.hi}]")
        return xs

    def knot_index(self, x) -> np.ndarray:
        """Index of the knot equal to each query, or -1 when the query is off-grid."""
        xs = np.asarray(x, dtype=float).ravel()
        idx = np.clip(np.searchsorted(self.points, xs), 0, len(self) - 1)
        return np.where(self.points[idx] == xs, idx, -1)

    def weights(self, x) -> np.ndarray:
        """(m, L) matrix of cardinal weights; exact unit rows at knots."""
        xs = self.check_range(x)
        w = np.atleast_2d(self.basis(xs))
        idx = self.knot_index(xs)
        on_knot = idx >= 0
        if np.any(on_knot):
            w[on_knot] = 0.0
            w[np.flatnonzero(on_knot), idx[on_knot]] = 1.0
        return w


@lru_cache(maxsize=8)
def baseline_grid(include_right_endpoint: bool = True, count: int = 1000,
                  lo: float = -2.0, hi: float = 4.0) -> SplineGrid:
    """
    Equispaced knots z_l = lo + (hi - lo)(l - 1)/count, l = 1..count.

    With ``include_right_endpoint`` one more knot is added at ``hi`` so every input
    of the domain lies inside the grid's hull.
    """
    n = count + 1 if include_right_endpoint else count
    return SplineGrid(lo + (hi - lo) * np.arange(n) / count)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Knot values of a function on a SplineGrid, interpolated by a natural cubic spline."""

    grid: SplineGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not isinstance(self.grid, SplineGrid):
            object.__setattr__(self, 'grid', SplineGrid(self.grid))
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != len(self.grid):
            raise FuncSpaceError(f"{values.size} values for {len(self.grid)} knots")
        object.__setattr__(self, 'values', frozen(values))

    @classmethod
    def zero(cls, grid: SplineGrid) -> 'GridFunction':
        return cls(grid, np.zeros(len(grid)))

    def require_same_grid(self, other: 'GridFunction'):
        if self.grid != other.grid:
            raise GridMismatchError(f"grid mismatch: {self.grid} vs {other.grid}")

    def interpolate(self, x) -> Union[float, np.ndarray]:
        """
        Natural cubic spline value, exact at knots.

        Raises:
            ExtrapolationError: "extrapolation refused" outside [grid.first, grid.last]
        """
        out = self.grid.weights(x) @ self.values
        return float(out[0]) if np.ndim(x) == 0 else out

    def value_at(self, x) -> float:
        """Table lookup when ``x`` is a knot, spline otherwise."""
        idx = int(self.grid.knot_index(x)[0])
        if idx >= 0:
            return float(self.values[idx])
        return self.interpolate(float(x))

    def __add__(self, other: 'GridFunction') -> 'GridFunction':
        self.require_same_grid(other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: 'GridFunction') -> 'GridFunction':
        self.require_same_grid(other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, alpha: float) -> 'GridFunction':
        return GridFunction(self.grid, alpha * self.values)

    __rmul__ = __mul__

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'x': self.grid.points, 'value': self.values})

    def to_csv(self, path: Union[str, Path]) -> Path:
        return write_csv(self.to_frame(), path, float_format='%.17g')

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> 'GridFunction':
        frame = pd.read_csv(path, comment='#')
        return cls(SplineGrid(frame['x'].to_numpy()), frame['value'].to_numpy())


def expansion_to_grid(f: KernelExpansion, grid: SplineGrid) -> GridFunction:
    """Sample a kernel expansion on the knots of ``grid``."""
    return GridFunction(grid, np.atleast_1d(f.evaluate(grid.points)))


class ErrorMetrics(NamedTuple):
    sup: float
    rmse: float


def grid_error_metrics(f: GridFunction, g: GridFunction) -> ErrorMetrics:
    """Sup and root-mean-square distance between two functions on the same grid."""
    f.require_same_grid(g)
    diff = f.values - g.values
    return ErrorMetrics(sup=float(np.max(np.abs(diff))), rmse=float(np.sqrt(np.mean(diff ** 2))))


def pointwise_error_bound(f: KernelExpansion, f0: KernelExpansion, x) -> float:
    """Cauchy-Schwarz bound |f(x) - f0(x)| <= ||f - f0||_K sqrt(K(x, x))."""
    return (f - f0).rkhs_norm() * float(np.sqrt(f.kernel.diag(x)[0]))
