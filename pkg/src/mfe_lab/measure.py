"""Grids, populations on grids, and stochastic-order comparisons.

Populations are probability weight vectors over the nodes of a rectangular
grid (one or two sorted axes).  Off-grid points enter through mass-splitting
linear interpolation, which preserves the barycenter and first-order
stochastic dominance; that projection is the single place where continuous
dynamics meet the discrete grid, so everything downstream (kernels, fixed
points, simulation binning) shares it.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import GridMismatch, MarginalMismatch, MassSumViolation, PointOutOfBounds

# Absolute slack for points that land just outside a grid axis; anything
# farther out is a hard error rather than a silent clamp.
SNAP_TOL = 1e-12

# Default tolerance for weight and CDF comparisons.
COMPARE_TOL = 1e-9


class Ordering(Enum):
    """Outcome of a first-order stochastic dominance comparison."""

    DOMINATES = "dominates"
    DOMINATED_BY = "dominated_by"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


class Grid:
    """Rectangular grid with one or two strictly increasing axes.

    Nodes are enumerated in row-major order: on a 2-D grid the flat index of
    node (i, j) is ``i * len(axes[1]) + j``.
    """

    __slots__ = ("axes",)

    def __init__(self, *axes):
        if not 1 <= len(axes) <= 2:
            raise GridMismatch(f"grids have 1 or 2 axes, got {len(axes)}")
        clean = []
        for k, ax in enumerate(axes):
            arr = np.asarray(ax, dtype=float).copy()
            if arr.ndim != 1 or arr.size < 1:
                raise GridMismatch(f"axis {k} must be a nonempty 1-D array")
            if not np.all(np.isfinite(arr)):
                raise GridMismatch(f"axis {k} has non-finite nodes")
            if arr.size > 1 and not np.all(np.diff(arr) > 0):
                raise GridMismatch(f"axis {k} must be strictly increasing")
            arr.setflags(write=False)
            clean.append(arr)
        object.__setattr__(self, "axes", tuple(clean))

    def __setattr__(self, name, value):
        raise AttributeError("Grid is immutable")

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(ax.size for ax in self.axes)

    @property
    def n(self) -> int:
        return int(np.prod(self.shape))

    def node_coords(self):
        """Per-axis coordinates of every node, each as a flat length-n array."""
        if self.ndim == 1:
            return (self.axes[0],)
        a1, a2 = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
        return (a1.ravel(), a2.ravel())

    def bounds(self, axis=0):
        ax = self.axes[axis]
        return float(ax[0]), float(ax[-1])

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self.ndim == other.ndim and all(
            np.array_equal(a, b) for a, b in zip(self.axes, other.axes)
        )

    def __hash__(self):
        return hash(tuple(ax.tobytes() for ax in self.axes))

    def __repr__(self):
        dims = " x ".join(str(s) for s in self.shape)
        spans = ", ".join(f"[{ax[0]:g}, {ax[-1]:g}]" for ax in self.axes)
        return f"Grid({dims} nodes on {spans})"


def _require_same_grid(a, b, what="populations"):
    if a.grid != b.grid:
        raise GridMismatch(f"{what} live on different grids")


class PopulationState:
    """Probability weights over the nodes of a grid.

    Weights are validated to be nonnegative and to sum to one within 1e-12;
    tiny negative round-off (within the same tolerance) is clipped to zero.
    """

    __slots__ = ("grid", "weights")

    def __init__(self, grid: Grid, weights):
        w = np.asarray(weights, dtype=float).ravel().copy()
        if w.size != grid.n:
            raise GridMismatch(
                f"weight vector has {w.size} entries for a grid of {grid.n} nodes"
            )
        if not np.all(np.isfinite(w)):
            raise MassSumViolation("weights must be finite")
        neg = w < 0.0
        if np.any(w[neg] < -SNAP_TOL):
            raise MassSumViolation(f"negative weight {w[neg].min():.3e}")
        w[neg] = 0.0
        total = w.sum()
        if abs(total - 1.0) > 1e-12:
            raise MassSumViolation(f"weights sum to {total!r}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "weights", w)

    def __setattr__(self, name, value):
        raise AttributeError("PopulationState is immutable")

    @classmethod
    def dirac(cls, grid: Grid, node: int) -> "PopulationState":
        """All mass on one flat node index (negative indices count from the end)."""
        w = np.zeros(grid.n)
        w[node] = 1.0
        return cls(grid, w)

    @classmethod
    def uniform(cls, grid: Grid) -> "PopulationState":
        return cls(grid, np.full(grid.n, 1.0 / grid.n))

    def cdf(self) -> np.ndarray:
        """Joint CDF over nodes (cumulative along every axis), flat layout."""
        if self.grid.ndim == 1:
            return np.cumsum(self.weights)
        m = self.weights.reshape(self.grid.shape)
        return np.cumsum(np.cumsum(m, axis=0), axis=1).ravel()

    def marginal(self, axis: int) -> np.ndarray:
        """Weight vector of the marginal along one axis of a 2-D grid."""
        if self.grid.ndim != 2:
            raise GridMismatch("marginal requires a 2-D grid")
        other = 1 - axis
        return self.weights.reshape(self.grid.shape).sum(axis=other)

    def mean(self, axis: int = 0) -> float:
        coords = self.grid.node_coords()[axis]
        return float(self.weights @ coords)

    def __repr__(self):
        return f"PopulationState({self.grid!r}, support={np.count_nonzero(self.weights)})"


def _bracket_axis(ax: np.ndarray, pts: np.ndarray):
    """Clamp points onto one axis and bracket them between adjacent nodes.

    Returns (lo_index, upper_weight); a point sitting on a node gets weight
    0 or 1 so its mass lands on that node alone.  Points off the axis by more
    than SNAP_TOL raise PointOutOfBounds.
    """
    pts = np.asarray(pts, dtype=float)
    lo_b, hi_b = ax[0], ax[-1]
    below = pts < lo_b
    above = pts > hi_b
    if np.any(pts < lo_b - SNAP_TOL) or np.any(pts > hi_b + SNAP_TOL):
        worst = pts[pts < lo_b - SNAP_TOL].min() if np.any(pts < lo_b - SNAP_TOL) else pts[above].max()
        raise PointOutOfBounds(
            f"point {worst!r} outside axis [{lo_b!r}, {hi_b!r}] by more than {SNAP_TOL:g}"
        )
    if np.any(below) or np.any(above):
        pts = np.clip(pts, lo_b, hi_b)
    if ax.size == 1:
        return np.zeros(pts.shape, dtype=np.intp), np.zeros(pts.shape)
    lo = np.searchsorted(ax, pts, side="right") - 1
    np.clip(lo, 0, ax.size - 2, out=lo)
    t = (pts - ax[lo]) / (ax[lo + 1] - ax[lo])
    return lo, t


def project_mass(point, grid: Grid) -> PopulationState:
    """Project a point onto the grid by mass-splitting linear interpolation.

    A point strictly between two adjacent nodes splits its mass so the
    barycenter is preserved exactly; a point on a node keeps all mass there.
    On a 2-D grid the split is the product of the per-axis splits (at most
    four atoms).  ``point`` is a scalar for 1-D grids, a pair for 2-D.
    """
    if grid.ndim == 1:
        pt = (point,)
    else:
        pt = tuple(point)
        if len(pt) != 2:
            raise GridMismatch("2-D grid requires a coordinate pair")
    w = np.zeros(grid.n)
    parts = []
    for ax, x in zip(grid.axes, pt):
        lo, t = _bracket_axis(ax, np.asarray([float(x)]))
        parts.append(((int(lo[0]), 1.0 - float(t[0])), (int(lo[0]) + min(1, ax.size - 1), float(t[0]))))
    if grid.ndim == 1:
        for idx, wt in parts[0]:
            w[idx] += wt
    else:
        n2 = grid.shape[1]
        for i1, w1 in parts[0]:
            for i2, w2 in parts[1]:
                w[i1 * n2 + i2] += w1 * w2
    return PopulationState(grid, w)


def _compare_cdfs(f1: np.ndarray, f2: np.ndarray, tol: float) -> Ordering:
    # dominance means lying below in CDF terms
    d12 = float(np.max(f1 - f2))
    d21 = float(np.max(f2 - f1))
    if d12 <= tol and d21 <= tol:
        return Ordering.EQUAL
    if d12 <= tol:
        return Ordering.DOMINATES
    if d21 <= tol:
        return Ordering.DOMINATED_BY
    return Ordering.INCOMPARABLE


def fosd_compare(s1: PopulationState, s2: PopulationState, tol: float = COMPARE_TOL) -> Ordering:
    """First-order stochastic dominance comparison on a shared 1-D grid.

    ``DOMINATES`` means s1's CDF never exceeds s2's by more than ``tol`` and
    drops below it somewhere by more than ``tol``.
    """
    _require_same_grid(s1, s2)
    if s1.grid.ndim != 1:
        raise GridMismatch("fosd_compare requires a 1-D grid; use fosd_compare_x1 for 2-D")
    return _compare_cdfs(np.cumsum(s1.weights), np.cumsum(s2.weights), tol)


def _combine_slicewise(results) -> Ordering:
    if all(r is Ordering.EQUAL for r in results):
        return Ordering.EQUAL
    if all(r in (Ordering.DOMINATES, Ordering.EQUAL) for r in results):
        return Ordering.DOMINATES
    if all(r in (Ordering.DOMINATED_BY, Ordering.EQUAL) for r in results):
        return Ordering.DOMINATED_BY
    return Ordering.INCOMPARABLE


def fosd_compare_x1(s1: PopulationState, s2: PopulationState, tol: float = COMPARE_TOL) -> Ordering:
    """Stochastic order generated by functions increasing in the first axis.

    Valid only when the two populations put the same marginal mass on every
    second-axis slice (within ``tol``); then the order holds exactly when
    every slice's conditional distribution over the first axis is ordered.
    Raises MarginalMismatch when the second-axis marginals differ, since the
    slice-wise test says nothing in that case.
    """
    _require_same_grid(s1, s2)
    if s1.grid.ndim != 2:
        raise GridMismatch("fosd_compare_x1 requires a 2-D grid")
    m1 = s1.marginal(axis=1)
    m2 = s2.marginal(axis=1)
    gap = float(np.max(np.abs(m1 - m2)))
    if gap > tol:
        raise MarginalMismatch(
            f"second-axis marginals differ by {gap:.3e} (> {tol:g}); "
            "the slice-wise order is undefined"
        )
    w1 = s1.weights.reshape(s1.grid.shape)
    w2 = s2.weights.reshape(s2.grid.shape)
    results = []
    for j in range(s1.grid.shape[1]):
        mass = 0.5 * (m1[j] + m2[j])
        if mass <= tol:
            continue
        f1 = np.cumsum(w1[:, j]) / max(m1[j], tol)
        f2 = np.cumsum(w2[:, j]) / max(m2[j], tol)
        results.append(_compare_cdfs(f1, f2, tol))
    if not results:
        return Ordering.EQUAL
    return _combine_slicewise(results)


def _cdf_sup_from_diff(diff: np.ndarray, shape: tuple) -> float:
    """Sup-norm of the (joint) CDF of a weight difference vector."""
    if len(shape) == 1:
        return float(np.max(np.abs(np.cumsum(diff))))
    m = diff.reshape(shape)
    return float(np.max(np.abs(np.cumsum(np.cumsum(m, axis=0), axis=1))))


def kolmogorov_distance(s1: PopulationState, s2: PopulationState) -> float:
    """Sup-norm distance between CDFs (joint CDFs on 2-D grids)."""
    _require_same_grid(s1, s2)
    return _cdf_sup_from_diff(s1.weights - s2.weights, s1.grid.shape)
