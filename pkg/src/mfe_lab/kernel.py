"""Population transition kernels and their fixed points.

A kernel row is the mass-splitting projection of the policy-induced
transition mix at one node, so applying the kernel to a population is the
discrete analogue of pushing a measure through the transition law.  Fixed
points come from two deliberately independent routes: extrapolated power
iteration (the reference contract, probed from both grid extremes as a
uniqueness surrogate) and a direct linear solve used both as an oracle and
as a fast refinement on small grids.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .errors import (
    GridMismatch,
    MarginalMismatch,
    MassSumViolation,
    MaxIterationsExceeded,
    UnorderedProbes,
)
from .measure import COMPARE_TOL, Grid, PopulationState, _bracket_axis, _cdf_sup_from_diff
from .model import COUPLING_STATES_ACTIONS, ModelSpec, aggregator_value
from .dp import Policy, value_iterate

log = logging.getLogger(__name__)

DIRECT_SOLVE_MAX_NODES = 200
EXTRAPOLATE_EVERY = 50


class ErgodicityFlag(Enum):
    UNIQUE = "unique"
    NON_UNIQUE = "non-unique"


class MarkovKernel:
    """Sparse row-stochastic transition matrix over a population grid.

    ``blocks`` lists (slice, mass) pairs of mutually closed node ranges whose
    total mass is conserved (one block covering everything by default); typed
    models carry one block per type.
    """

    __slots__ = ("grid", "matrix", "blocks", "_mt")

    def __init__(self, grid: Grid, matrix, blocks=None):
        m = sp.csr_matrix(matrix)
        if m.shape != (grid.n, grid.n):
            raise GridMismatch(f"kernel shape {m.shape} does not match grid with {grid.n} nodes")
        if m.nnz and m.data.min() < -1e-15:
            raise MassSumViolation(f"negative kernel entry {m.data.min():.3e}")
        m.data[m.data < 0.0] = 0.0
        rows = np.asarray(m.sum(axis=1)).ravel()
        worst = float(np.max(np.abs(rows - 1.0))) if rows.size else 0.0
        if worst > 1e-12:
            raise MassSumViolation(f"kernel row sums deviate from 1 by {worst:.3e}")
        self.grid = grid
        self.matrix = m
        self.blocks = tuple(blocks) if blocks else ((slice(0, grid.n), 1.0),)
        self._mt = None

    @property
    def n(self) -> int:
        return self.grid.n

    def transpose_op(self):
        if self._mt is None:
            self._mt = self.matrix.T.tocsr()
        return self._mt

    def __repr__(self):
        return f"MarkovKernel({self.n} nodes, nnz={self.matrix.nnz})"


def _policy_actions(policy: Policy, spec: ModelSpec) -> np.ndarray:
    if policy.grid != spec.state_grid:
        raise GridMismatch("policy grid does not match the spec's state grid")
    return policy.action_values


def _atoms_for_images(spec: ModelSpec, img, n: int):
    """Projection atoms (col_index, weight) for transition images at all nodes."""
    imgs = img if isinstance(img, tuple) else (img,)
    per_axis = []
    for ax, im in zip(spec.state_grid.axes, imgs):
        im = np.broadcast_to(np.asarray(im, dtype=float), (n,))
        lo, t = _bracket_axis(ax, im)
        hi = lo + (1 if ax.size > 1 else 0)
        per_axis.append(((lo, 1.0 - t), (hi, t)))
    if spec.state_grid.ndim == 1:
        return list(per_axis[0])
    n2 = spec.state_grid.shape[1]
    out = []
    for i1, w1 in per_axis[0]:
        for i2, w2 in per_axis[1]:
            out.append((i1 * n2 + i2, w1 * w2))
    return out


def build_kernel(policy: Policy, s: PopulationState, spec: ModelSpec) -> MarkovKernel:
    """Assemble the population kernel induced by a policy at population s.

    Each state node's row mixes, over shocks, the interpolation atoms of its
    transition image.  A regeneration clause puts its probability mass on the
    regeneration point in every row before the remaining mass follows the
    dynamics.  Under action coupling the kernel lives on the product grid:
    next-state mass lands at (node, policy action at that node), and rows do
    not depend on the current action coordinate.
    """
    if s.grid != spec.population_grid:
        raise GridMismatch("population state grid does not match the spec")
    a_val = _policy_actions(policy, spec)
    coords = spec.state_grid.node_coords()
    x = coords[0] if spec.state_grid.ndim == 1 else coords
    n = spec.n_states

    scale = 1.0
    regen_atoms = []
    if spec.regeneration is not None:
        prob, point = spec.regeneration
        scale = 1.0 - prob
        from .measure import project_mass  # local import to avoid cycle at module load

        proj = project_mass(point, spec.state_grid)
        regen_atoms = [
            (int(i), prob * float(proj.weights[i])) for i in np.nonzero(proj.weights)[0]
        ]

    state_rows_cols = []
    state_rows_data = []
    for zeta, p in spec.shocks:
        if p == 0.0:
            continue
        img = spec.transition(x, a_val, s, zeta)
        for idx, w in _atoms_for_images(spec, img, n):
            state_rows_cols.append(idx)
            state_rows_data.append(w * p * scale)

    if spec.coupling == COUPLING_STATES_ACTIONS:
        n_a = spec.n_actions
        pol_idx = policy.action_index
        rows, cols, data = [], [], []
        for idx, w in zip(state_rows_cols, state_rows_data):
            prod_col = idx * n_a + pol_idx[idx]
            rows.append(np.repeat(np.arange(n) * n_a, n_a).reshape(n, n_a) + np.arange(n_a))
            cols.append(np.broadcast_to(prod_col[:, None], (n, n_a)))
            data.append(np.broadcast_to(w[:, None], (n, n_a)))
        for node_i, wt in regen_atoms:
            prod_col = node_i * n_a + int(pol_idx[node_i])
            rows.append(np.arange(n * n_a).reshape(n, n_a))
            cols.append(np.full((n, n_a), prod_col))
            data.append(np.full((n, n_a), wt))
        rows = np.concatenate([r.ravel() for r in rows])
        cols = np.concatenate([c.ravel() for c in cols])
        data = np.concatenate([d.ravel() for d in data])
        n_pop = n * n_a
    else:
        rows, cols, data = [], [], []
        base_rows = np.arange(n)
        for idx, w in zip(state_rows_cols, state_rows_data):
            rows.append(base_rows)
            cols.append(idx)
            data.append(w)
        for node_i, wt in regen_atoms:
            rows.append(base_rows)
            cols.append(np.full(n, node_i))
            data.append(np.full(n, wt))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.concatenate(data)
        n_pop = n

    mat = sp.coo_matrix((data, (rows, cols)), shape=(n_pop, n_pop)).tocsr()
    mat.sum_duplicates()
    return MarkovKernel(spec.population_grid, mat, blocks=spec.invariant_blocks)


def apply_M(theta: PopulationState, kernel: MarkovKernel) -> PopulationState:
    """Push a population through the kernel (one step of the auxiliary map)."""
    if theta.grid != kernel.grid:
        raise GridMismatch("population and kernel live on different grids")
    w = kernel.transpose_op() @ theta.weights
    total = w.sum()
    if abs(total - 1.0) > 1e-9:
        raise MassSumViolation(f"kernel application lost mass: sum = {total!r}")
    return PopulationState(kernel.grid, w / total)


def _block_shape(kernel: MarkovKernel, sl: slice) -> tuple:
    if sl.start == 0 and sl.stop == kernel.n:
        return kernel.grid.shape
    return (sl.stop - sl.start,)


def _power_limit(mt, w0: np.ndarray, shape: tuple, tol: float, max_iterations: int):
    """Power-iterate w -> w M until the stationarity residual is within tol.

    Every EXTRAPOLATE_EVERY steps a geometric (Aitken-style) extrapolation of
    the last three iterates is tried; it is kept only if it stays on the
    simplex and strictly improves the residual, otherwise plain iteration
    continues.  Returns (w, residual, iterations) where residual is the CDF
    sup-norm distance between w and wM.
    """
    w = np.asarray(w0, dtype=float)
    w = w / w.sum()
    prev1 = prev2 = None
    for k in range(1, max_iterations + 1):
        w_next = mt @ w
        w_next = w_next / w_next.sum()
        res = _cdf_sup_from_diff(w_next - w, shape)
        if res <= tol:
            return w, res, k
        if k % EXTRAPOLATE_EVERY == 0 and prev2 is not None:
            d1 = np.linalg.norm(prev1 - prev2, 1)
            d2 = np.linalg.norm(w_next - prev1, 1)
            if d1 > 0 and 0 < d2 < d1:
                lam = d2 / d1
                cand = w_next + (lam / (1.0 - lam)) * (w_next - prev1)
                if cand.min() >= -1e-15:
                    cand = np.clip(cand, 0.0, None)
                    cand = cand / cand.sum()
                    cand_next = mt @ cand
                    cand_next = cand_next / cand_next.sum()
                    cand_res = _cdf_sup_from_diff(cand_next - cand, shape)
                    if cand_res < res:
                        if cand_res <= tol:
                            return cand, cand_res, k
                        prev2, prev1, w = prev1, cand, cand_next
                        continue
        prev2, prev1, w = prev1, w, w_next
    raise MaxIterationsExceeded(
        f"power iteration did not reach tolerance {tol:g} in {max_iterations} steps",
        residual=res,
        iterations=max_iterations,
    )


def _direct_block(mat_block) -> np.ndarray:
    """Stationary row vector of one block by dense linear solve."""
    a = np.asarray(mat_block.todense() if sp.issparse(mat_block) else mat_block, dtype=float)
    nb = a.shape[0]
    system = a.T - np.eye(nb)
    system[-1, :] = 1.0
    rhs = np.zeros(nb)
    rhs[-1] = 1.0
    w = np.linalg.solve(system, rhs)
    return w


def invariant_direct(kernel: MarkovKernel) -> PopulationState:
    """Stationary distribution via the linear system (Q' - I) mu = 0, sum mu = 1.

    Independent oracle route; raises numpy.linalg.LinAlgError when the system
    is singular (multiple stationary distributions).  Respects conserved
    blocks, scaling each block's solution by its mass.
    """
    w = np.zeros(kernel.n)
    for sl, mass in kernel.blocks:
        wb = _direct_block(kernel.matrix[sl, sl])
        if wb.min() < -1e-9 or not np.all(np.isfinite(wb)):
            raise MassSumViolation("direct solve produced an invalid distribution")
        wb = np.clip(wb, 0.0, None)
        w[sl] = mass * wb / wb.sum()
    return PopulationState(kernel.grid, w)


def invariant_distribution(
    kernel: MarkovKernel,
    tol: float = 1e-10,
    method: str = "auto",
    max_iterations: int = 100_000,
) -> tuple:
    """Stationary distribution plus a two-start uniqueness flag.

    Power iterations launched from Dirac masses at each block's lowest and
    highest node must meet within 10 * tol for the block to be flagged
    UNIQUE; otherwise the low-start limit is returned and the flag is
    NON_UNIQUE.  ``method`` picks how the returned distribution is computed:
    "power" returns the iteration limit, "direct" refines with the linear
    solve, "auto" refines only on blocks of at most 200 nodes.
    """
    if method not in ("auto", "power", "direct"):
        raise ValueError(f"unknown method {method!r}")
    w = np.zeros(kernel.n)
    flag = ErgodicityFlag.UNIQUE
    for sl, mass in kernel.blocks:
        sub = kernel.matrix[sl, sl]
        mt = sub.T.tocsr()
        nb = sub.shape[0]
        shape = _block_shape(kernel, sl)
        e_lo = np.zeros(nb)
        e_lo[0] = 1.0
        e_hi = np.zeros(nb)
        e_hi[-1] = 1.0
        w_lo, res_lo, it_lo = _power_limit(mt, e_lo, shape, tol, max_iterations)
        w_hi, _, _ = _power_limit(mt, e_hi, shape, tol, max_iterations)
        gap = _cdf_sup_from_diff(w_lo - w_hi, shape)
        unique = gap <= 10.0 * tol
        if not unique:
            flag = ErgodicityFlag.NON_UNIQUE
        wb = w_lo
        if unique and (method == "direct" or (method == "auto" and nb <= DIRECT_SOLVE_MAX_NODES)):
            try:
                cand = _direct_block(sub)
            except np.linalg.LinAlgError:
                cand = None
            if cand is not None and np.all(np.isfinite(cand)) and cand.min() >= -1e-10:
                cand = np.clip(cand, 0.0, None)
                cand = cand / cand.sum()
                res = _cdf_sup_from_diff((mt @ cand) / (mt @ cand).sum() - cand, shape)
                if res <= tol:
                    wb = cand
        log.debug(
            "invariant block %s: %d power steps, gap %.3e, %s",
            sl, it_lo, gap, "unique" if unique else "NON-unique",
        )
        w[sl] = mass * wb / wb.sum()
    return PopulationState(kernel.grid, w), flag


def _invariant_weights(kernel: MarkovKernel, tol: float, max_iterations: int, warm=None):
    """Single-start stationary weights for inner loops (no uniqueness probe)."""
    w = np.zeros(kernel.n)
    for sl, mass in kernel.blocks:
        sub = kernel.matrix[sl, sl]
        nb = sub.shape[0]
        shape = _block_shape(kernel, sl)
        if nb <= DIRECT_SOLVE_MAX_NODES:
            try:
                wb = _direct_block(sub)
                if np.all(np.isfinite(wb)) and wb.min() >= -1e-10:
                    wb = np.clip(wb, 0.0, None)
                    w[sl] = mass * wb / wb.sum()
                    continue
            except np.linalg.LinAlgError:
                pass
        if warm is not None and warm[sl].sum() > 0:
            w0 = warm[sl]
        else:
            w0 = np.full(nb, 1.0 / nb)
        wb, _, _ = _power_limit(sub.T.tocsr(), w0, shape, tol, max_iterations)
        w[sl] = mass * wb / wb.sum()
    return w


@dataclass(frozen=True)
class MonotonicityReport:
    """Row-ordering check along one state axis (adjacent-node dominance)."""

    passed: bool
    axis: int
    n_compared: int
    max_gap: float
    violations: tuple
    tol: float


def _row_dominates(row_a: np.ndarray, row_b: np.ndarray, shape, axis: int, tol: float):
    """Check row_a FOSD-dominates row_b; returns the worst CDF excess.

    1-D rows compare plain CDFs.  2-D rows compare conditionals along
    ``axis`` slice-by-slice over the other axis, requiring matched
    other-axis marginals (MarginalMismatch otherwise).
    """
    if len(shape) == 1:
        return float(np.max(np.cumsum(row_a) - np.cumsum(row_b)))
    a = row_a.reshape(shape)
    b = row_b.reshape(shape)
    if axis == 1:
        a = a.T
        b = b.T
    ma = a.sum(axis=0)
    mb = b.sum(axis=0)
    mgap = float(np.max(np.abs(ma - mb)))
    if mgap > tol:
        raise MarginalMismatch(
            f"conditioning-axis marginals differ by {mgap:.3e}; slice-wise order undefined"
        )
    worst = -np.inf
    for j in range(a.shape[1]):
        mass = 0.5 * (ma[j] + mb[j])
        if mass <= tol:
            continue
        fa = np.cumsum(a[:, j]) / max(ma[j], tol)
        fb = np.cumsum(b[:, j]) / max(mb[j], tol)
        worst = max(worst, float(np.max(fa - fb)))
    return worst if np.isfinite(worst) else 0.0


def check_monotone_in_x(kernel: MarkovKernel, axis: int = 0, tol: float = COMPARE_TOL) -> MonotonicityReport:
    """Check kernel rows improve (FOSD) as the state rises along one axis.

    Compares every adjacent node pair along ``axis`` holding the other
    coordinate fixed; the higher node's row must dominate.  On 2-D grids the
    comparison is the slice-conditional order along ``axis``.
    """
    grid = kernel.grid
    dense = np.asarray(kernel.matrix.todense())
    shape = grid.shape
    violations = []
    max_gap = 0.0
    n_pairs = 0
    if grid.ndim == 1:
        f = np.cumsum(dense, axis=1)
        excess = f[1:, :] - f[:-1, :]  # row i+1 must sit below row i in CDF
        gaps = excess.max(axis=1)
        n_pairs = gaps.size
        max_gap = float(gaps.max()) if gaps.size else 0.0
        for i in np.nonzero(gaps > tol)[0]:
            violations.append({"pair": (int(i), int(i) + 1), "gap": float(gaps[i])})
    else:
        n1, n2 = shape
        other = 1 - axis
        for j in range(shape[other]):
            for i in range(shape[axis] - 1):
                lo_idx = (i, j) if axis == 0 else (j, i)
                hi_idx = (i + 1, j) if axis == 0 else (j, i + 1)
                row_lo = dense[lo_idx[0] * n2 + lo_idx[1]]
                row_hi = dense[hi_idx[0] * n2 + hi_idx[1]]
                gap = _row_dominates(row_hi, row_lo, shape, axis, tol)
                n_pairs += 1
                max_gap = max(max_gap, gap)
                if gap > tol:
                    violations.append({"pair": (lo_idx, hi_idx), "gap": float(gap)})
    return MonotonicityReport(
        passed=not violations,
        axis=axis,
        n_compared=n_pairs,
        max_gap=max_gap,
        violations=tuple(violations),
        tol=tol,
    )


@dataclass(frozen=True)
class KernelOrderReport:
    """Row-wise dominance of the low-probe kernel over the high-probe kernel."""

    passed: bool
    n_compared: int
    max_gap: float
    violations: tuple
    aggregates: tuple
    tol: float


def check_decreasing_in_s(
    spec: ModelSpec,
    s_low: PopulationState,
    s_high: PopulationState,
    tol: float = COMPARE_TOL,
    dp_tol: float = 1e-9,
) -> KernelOrderReport:
    """Check transitions worsen as the population rises (aggregator order).

    Solves the decision problem at both probes, builds both kernels, and
    requires every low-probe row to FOSD-dominate the matching high-probe
    row.  Probes must satisfy H(s_low) <= H(s_high), else UnorderedProbes.
    """
    h_lo = aggregator_value(spec, s_low)
    h_hi = aggregator_value(spec, s_high)
    if h_hi < h_lo - 1e-12:
        raise UnorderedProbes(f"probes are not aggregator-ordered: H = {h_lo} vs {h_hi}")
    sol_lo = value_iterate(spec, s_low, tol=dp_tol)
    sol_hi = value_iterate(spec, s_high, tol=dp_tol, warm_start=sol_lo.value)
    k_lo = build_kernel(sol_lo.policy, s_low, spec)
    k_hi = build_kernel(sol_hi.policy, s_high, spec)
    dense_lo = np.asarray(k_lo.matrix.todense())
    dense_hi = np.asarray(k_hi.matrix.todense())
    shape = spec.population_grid.shape
    violations = []
    max_gap = -np.inf
    if len(shape) == 1:
        f_lo = np.cumsum(dense_lo, axis=1)
        f_hi = np.cumsum(dense_hi, axis=1)
        gaps = (f_lo - f_hi).max(axis=1)
        max_gap = float(gaps.max())
        for i in np.nonzero(gaps > tol)[0]:
            violations.append({"node": int(i), "gap": float(gaps[i])})
    else:
        for i in range(dense_lo.shape[0]):
            gap = _row_dominates(dense_lo[i], dense_hi[i], shape, 0, tol)
            max_gap = max(max_gap, gap)
            if gap > tol:
                violations.append({"node": int(i), "gap": float(gap)})
    return KernelOrderReport(
        passed=not violations,
        n_compared=dense_lo.shape[0],
        max_gap=float(max_gap),
        violations=tuple(violations),
        aggregates=(h_lo, h_hi),
        tol=tol,
    )


@dataclass(frozen=True)
class ErgodicityReport:
    """Two-start mixing trace with a splitting witness.

    ``splitting_step`` is the first step by which mass started at the top
    node has reached the lower half-grid and mass started at the bottom node
    has reached the upper half-grid (None if either never happens within the
    horizon).  ``min_bottom_row_mass`` is the smallest single-row mass on the
    lowest node, a uniform minorization witness when positive.
    """

    converged: bool
    distances: tuple
    splitting_step: int | None
    top_down_step: int | None
    bottom_up_step: int | None
    min_bottom_row_mass: float
    horizon: int
    tol: float


def ergodicity_probe(kernel: MarkovKernel, horizon: int = 500, tol: float = COMPARE_TOL) -> ErgodicityReport:
    """Trace how fast Dirac starts at the grid extremes merge under the kernel."""
    n = kernel.n
    mt = kernel.transpose_op()
    coords0 = kernel.grid.node_coords()[0]
    lo_b, hi_b = kernel.grid.bounds(0)
    mid = 0.5 * (lo_b + hi_b)
    lower_half = coords0 <= mid
    upper_half = coords0 >= mid

    w_bottom = np.zeros(n)
    w_bottom[0] = 1.0
    w_top = np.zeros(n)
    w_top[-1] = 1.0

    distances = []
    top_down = None
    bottom_up = None
    converged = False
    for k in range(1, horizon + 1):
        w_bottom = mt @ w_bottom
        w_bottom = w_bottom / w_bottom.sum()
        w_top = mt @ w_top
        w_top = w_top / w_top.sum()
        if top_down is None and w_top[lower_half].sum() > 1e-15:
            top_down = k
        if bottom_up is None and w_bottom[upper_half].sum() > 1e-15:
            bottom_up = k
        d = _cdf_sup_from_diff(w_bottom - w_top, kernel.grid.shape)
        distances.append(d)
        if d <= tol:
            converged = True
            break

    splitting = max(top_down, bottom_up) if (top_down and bottom_up) else None
    col0 = np.asarray(kernel.matrix[:, 0].todense()).ravel()
    return ErgodicityReport(
        converged=converged,
        distances=tuple(distances),
        splitting_step=splitting,
        top_down_step=top_down,
        bottom_up_step=bottom_up,
        min_bottom_row_mass=float(col0.min()),
        horizon=horizon,
        tol=tol,
    )
