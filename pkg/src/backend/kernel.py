"""
Kernel Module
Mercer kernels on a compact box: pointwise evaluation, Gram matrices and the
sup_x K(x, x) bound that keeps the random forward operators uniformly bounded.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np

from src.backend.errors import KernelDomainError, KernelError
from src.utils.helpers import as_float_array

Point = Union[float, np.ndarray]


class KernelFamily(str, Enum):
    GAUSSIAN = 'gaussian'
    LAPLACE = 'laplace'
    POLYNOMIAL = 'polynomial'


def _as_bounds(value) -> Tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(value, dtype=float)))


@dataclass(frozen=True)
class Kernel:
    """
    A Mercer kernel on the box [lo, hi] of R^d.

    Args:
        family (KernelFamily): gaussian exp(-gamma |x-y|^2), laplace exp(-|x-y| / scale),
            or polynomial (x.y + offset)^degree
        lo, hi: box corners, scalars for an interval
        gamma (float): Gaussian bandwidth parameter, > 0
        scale (float): Laplace length scale, > 0
        degree (int): polynomial degree, >= 1
        offset (float): polynomial offset, >= 0
        strict (bool): reject points outside the domain; otherwise clamp them
    """

    family: KernelFamily = KernelFamily.GAUSSIAN
    lo: Tuple[float, ...] = (-2.0,)
    hi: Tuple[float, ...] = (4.0,)
    gamma: float = 1.0
    scale: float = 1.0
    degree: int = 2
    offset: float = 1.0
    strict: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'family', KernelFamily(self.family))
        object.__setattr__(self, 'lo', _as_bounds(self.lo))
        object.__setattr__(self, 'hi', _as_bounds(self.hi))
        if len(self.lo) != len(self.hi):
            raise KernelError("domain corners have different dimensions")
        if any(lo > hi for lo, hi in zip(self.lo, self.hi)):
            raise KernelError(f"empty domain [{self.lo}, {self.hi}]")
        if self.family is KernelFamily.GAUSSIAN and not self.gamma > 0:
            raise KernelError(f"gaussian bandwidth must be positive, got {self.gamma}")
        if self.family is KernelFamily.LAPLACE and not self.scale > 0:
            raise KernelError(f"laplace scale must be positive, got {self.scale}")
        if self.family is KernelFamily.POLYNOMIAL:
            if int(self.degree) != self.degree or self.degree < 1:
                raise KernelError(f"polynomial degree must be an integer >= 1, got {self.degree}")
            if self.offset < 0:
                raise KernelError(f"polynomial offset must be >= 0, got {self.offset}")

    @classmethod
    def gaussian(cls, gamma: float = 1.0, lo=-2.0, hi=4.0, **kwargs) -> 'Kernel':
        return cls(KernelFamily.GAUSSIAN, lo=lo, hi=hi, gamma=gamma, **kwargs)

    @classmethod
    def laplace(cls, scale: float = 1.0, lo=-2.0, hi=4.0, **kwargs) -> 'Kernel':
        return cls(KernelFamily.LAPLACE, lo=lo, hi=hi, scale=scale, **kwargs)

    @classmethod
    def polynomial(cls, degree: int = 2, offset: float = 1.0, lo=-2.0, hi=4.0, **kwargs) -> 'Kernel':
        return cls(KernelFamily.POLYNOMIAL, lo=lo, hi=hi, degree=degree, offset=offset, **kwargs)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def points(self, x) -> np.ndarray:
        """Coerce ``x`` to an (m, d) array of points without domain checks."""
        arr = np.asarray(x, dtype=float)
        if self.dim == 1:
            return arr.reshape(-1, 1)
        return as_float_array(arr, ndim=2, name="points").reshape(-1, self.dim)

    def contains(self, x) -> bool:
        pts = self.points(x)
        return bool(np.all(pts >= np.asarray(self.lo)) and np.all(pts <= np.asarray(self.hi)))

    def check_domain(self, x) -> np.ndarray:
        """
        Validate points against the domain.

        Returns:
            np.ndarray: (m, d) points, clamped into the box in lenient mode

        Raises:
            KernelDomainError: "out of domain" in strict mode
        """
        pts = self.points(x)
        if self.contains(pts):
            return pts
        if self.strict:
            bad = pts[np.any((pts < np.asarray(self.lo)) | (pts > np.asarray(self.hi)), axis=1)]
            raise KernelDomainError(
                f"out of domain: {bad[:3].ravel().tolist()} not in [{self.lo}, {self.hi}]")
        return np.clip(pts, np.asarray(self.lo), np.asarray(self.hi))

    def cross(self, xs, ys) -> np.ndarray:
        """Matrix of kernel values K(xs[i], ys[j])."""
        a = self.check_domain(xs)
        b = self.check_domain(ys)
        if self.family is KernelFamily.POLYNOMIAL:
            return np.power(a @ b.T + self.offset, int(self.degree))
        sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * a @ b.T
              if self.dim > 1 else (a - b.T) ** 2)
        sq = np.maximum(sq, 0.0)
        if self.family is KernelFamily.GAUSSIAN:
            return np.exp(-self.gamma * sq)
        return np.exp(-np.sqrt(sq) / self.scale)

    def eval(self, x: Point, y: Point) -> float:
        """Kernel value K(x, y) at two points."""
        return float(self.cross(x, y)[0, 0])

    def gram(self, points) -> np.ndarray:
        """
        Gram matrix G[i][j] = K(points[i], points[j]).

        An empty point list gives a 0 x 0 matrix.
        """
        pts = self.points(points)
        if pts.shape[0] == 0:
            return np.zeros((0, 0))
        g = self.cross(pts, pts)
        return 0.5 * (g + g.T)

    def diag(self, points) -> np.ndarray:
        """K(x, x) for every point."""
        pts = self.check_domain(points)
        if self.family is KernelFamily.POLYNOMIAL:
            return np.power(np.sum(pts * pts, axis=1) + self.offset, int(self.degree))
        return np.ones(pts.shape[0])

    def sup_diag_bound(self) -> float:
        """
        Upper bound on K(x, x) over the domain.

        Exactly 1 for the translation-invariant families; for the polynomial kernel
        the maximum of (|x|^2 + offset)^degree over the box corners.
        """
        if self.family is not KernelFamily.POLYNOMIAL:
            return 1.0
        max_sq = sum(max(lo * lo, hi * hi) for lo, hi in zip(self.lo, self.hi))
        return float((max_sq + self.offset) ** int(self.degree))

    def describe(self) -> dict:
        """Plain-dict description, used for CSV headers and logs."""
        info = {'family': self.family.value, 'domain': [list(self.lo), list(self.hi)]}
        if self.family is KernelFamily.GAUSSIAN:
            info['gamma'] = self.gamma
        elif self.family is KernelFamily.LAPLACE:
            info['scale'] = self.scale
        else:
            info['degree'] = int(self.degree)
            info['offset'] = self.offset
        return info

    @classmethod
    def from_description(cls, info: dict) -> 'Kernel':
        lo, hi = info['domain']
        params = {k: v for k, v in info.items() if k not in ('family', 'domain')}
        return cls(KernelFamily(info['family']), lo=lo, hi=hi, **params)
