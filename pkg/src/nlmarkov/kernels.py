"""Nonlinear transition kernels on finite state spaces.

A nonlinear kernel maps a probability measure nu to a row-stochastic
matrix P_nu; the chain evolves by mu_{k+1} = mu_k P_{mu_k}.  Two numbers
govern ergodicity of such chains:

* the Dobrushin overlap ``alpha``: every pair of rows, across every pair
  of input measures, has total variation at most 2(1 - alpha);
* the measure sensitivity ``lambda``: rows at a fixed state move by at
  most lambda times the total variation between input measures.

Both are estimated here by exhaustive sweeps over a simplex grid, which
makes the estimates one-sided: alpha_hat >= alpha and lambda_hat <= lambda,
with monotone behaviour under grid refinement.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Iterator

import numpy as np

from .measures import DiscreteMeasure, tv_distance

ROW_SUM_TOL = 1e-10
TIE_TOLERANCE = 1e-6
NEGLIGIBLE_TV = 1e-9

__all__ = [
    "NonlinearKernel",
    "MeasureGrid",
    "ErgodicityCertificate",
    "KernelValidationError",
    "validate",
    "oscillating_kernel",
    "continuum_kernel",
    "no_invariant_kernel",
    "markov_kernel",
    "markov_example_kernel",
    "mixture_kernel",
    "birth_death_jitter_matrix",
    "estimate_alpha",
    "estimate_lambda",
    "certify",
    "default_resolution",
]


class KernelValidationError(ValueError):
    """A kernel produced a non-stochastic row for some input measure."""


@dataclass(frozen=True)
class NonlinearKernel:
    """Measure-dependent transition kernel.

    ``row_builder`` receives the weight vector of the input measure and
    returns the full (n, n) transition matrix for that measure.  It must
    be a pure function: same input, same matrix.
    """

    space_size: int
    row_builder: Callable[[np.ndarray], np.ndarray]
    label: str = "kernel"

    def __post_init__(self):
        if self.space_size < 1:
            raise ValueError("space_size must be positive")

    def matrix(self, nu) -> np.ndarray:
        """Transition matrix P_nu for the measure ``nu``."""
        w = nu.weights if isinstance(nu, DiscreteMeasure) else np.asarray(nu, dtype=float)
        if w.shape != (self.space_size,):
            raise ValueError(
                f"measure has {w.shape} weights, kernel expects {self.space_size}"
            )
        mat = np.asarray(self.row_builder(w), dtype=float)
        if mat.shape != (self.space_size, self.space_size):
            raise KernelValidationError(
                f"{self.label}: row builder returned shape {mat.shape}"
            )
        return mat


def default_resolution(space_size: int) -> int:
    """Grid resolution used when the caller does not pick one.

    Chosen so the grid stays in the hundreds of points: 50 for two
    states, 8 for five, and in general the largest R with
    C(R + n - 1, n - 1) <= 1000.
    """
    presets = {1: 1, 2: 50, 3: 20, 4: 12, 5: 8}
    if space_size in presets:
        return presets[space_size]
    r = 1
    while math.comb(r + space_size, space_size - 1) <= 1000:
        r += 1
    return r


@dataclass(frozen=True)
class MeasureGrid:
    """All probability vectors with weights k/R on a given state space.

    The grid contains every vertex of the simplex and has
    C(R + n - 1, n - 1) points.  Refining R to a multiple produces a
    superset, which is what makes the sweep estimates monotone.
    """

    space_size: int
    resolution: int
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n, r = self.space_size, self.resolution
        if n < 1 or r < 1:
            raise ValueError("space_size and resolution must be positive")
        rows = np.array(list(_compositions(r, n)), dtype=float) / r
        rows.flags.writeable = False
        object.__setattr__(self, "weights", rows)

    @staticmethod
    def default(space_size: int) -> "MeasureGrid":
        return MeasureGrid(space_size, default_resolution(space_size))

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    def measures(self) -> Iterator[DiscreteMeasure]:
        for row in self.weights:
            yield DiscreteMeasure(row)


def _compositions(total: int, parts: int):
    # Weak compositions of `total` into `parts` parts, via divider positions.
    for dividers in combinations(range(total + parts - 1), parts - 1):
        prev, comp = -1, []
        for d in dividers:
            comp.append(d - prev - 1)
            prev = d
        comp.append(total + parts - 2 - prev)
        yield comp


@dataclass(frozen=True)
class ErgodicityCertificate:
    """Outcome of the grid sweep: estimated overlap and sensitivity plus
    the regime they imply.

    fast         lambda_hat < alpha_hat (geometric contraction)
    slow         lambda_hat = alpha_hat within the tie tolerance
    uncertified  lambda_hat > alpha_hat; no conclusion
    """

    alpha_hat: float
    lambda_hat: float
    regime: str
    grid_resolution: int
    tie_tolerance: float = TIE_TOLERANCE
    kernel_label: str = "kernel"

    def to_dict(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat,
            "lambda_hat": self.lambda_hat,
            "regime": self.regime,
            "grid_resolution": self.grid_resolution,
            "tie_tolerance": self.tie_tolerance,
            "kernel": self.kernel_label,
        }


# ---------------------------------------------------------------------------
# Kernel constructions.


def oscillating_kernel(gamma: float) -> NonlinearKernel:
    """Two-state kernel whose rows swap the input masses, clamped to
    [gamma/2, 1 - gamma/2].

    Both rows equal (clamp(nu_2), 1 - clamp(nu_2)), so the chain jumps
    straight to that row and alternates forever between (a, 1-a) and
    (1-a, a).  Its overlap is exactly gamma, yet the symmetric fixed
    point attracts nothing but itself.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    lo, hi = gamma / 2.0, 1.0 - gamma / 2.0

    def rows(nu: np.ndarray) -> np.ndarray:
        # second entry is the complement of the first, not a second
        # clamp: writing it as clamp(nu_1) makes each row sum to
        # sum(nu), so normalization error would square every step
        a = min(max(nu[1], lo), hi)
        return np.array([[a, 1.0 - a], [a, 1.0 - a]])

    return NonlinearKernel(2, rows, f"oscillating(gamma={gamma:g})")


def continuum_kernel(alpha: float, lam: float) -> NonlinearKernel:
    """Two-state kernel with overlap alpha and measure sensitivity lam
    whose fixed points fill the whole interval
    a in [alpha/(2 lam), 1 - alpha/(2 lam)].

    Requires 0 < alpha < lam <= 1.  Off-diagonal entries are
    lam * nu(other state) clamped to [alpha/2, lam - alpha/2]; each
    diagonal entry is one minus the off-diagonal one, so rows are
    exactly stochastic.
    """
    if not (0.0 < alpha < lam <= 1.0):
        raise ValueError("need 0 < alpha < lam <= 1")

    def clamp(p: float) -> float:
        return min(max(lam * p, alpha / 2.0), lam - alpha / 2.0)

    def rows(nu: np.ndarray) -> np.ndarray:
        p12 = clamp(nu[1])
        p21 = clamp(nu[0])
        return np.array([[1.0 - p12, p12], [p21, 1.0 - p21]])

    return NonlinearKernel(2, rows, f"continuum(alpha={alpha:g},lam={lam:g})")


def no_invariant_kernel(alpha: float, lam: float, truncation: int) -> NonlinearKernel:
    """Truncated version of the chain on {1, 2, ...} that admits no
    stationary law for lam < 1.

    Row i sends mass max(lam * nu({1}), alpha) to state 1, routes
    clamped increments of the running mass lam * nu({1..j}) - alpha to
    states j >= 2, and shifts the remaining 1 - lam one step to the
    right.  Truncation folds the shift out of the last state back onto
    itself; that artifact only matters once mass reaches the boundary.
    """
    if not (0.0 < alpha < lam <= 1.0):
        raise ValueError("need 0 < alpha < lam <= 1")
    if truncation < 3:
        raise ValueError("truncation must be at least 3")
    m = truncation

    def rows(nu: np.ndarray) -> np.ndarray:
        # base[j] = ((lam F_j - alpha) ^ lam nu_j) v 0 written as the
        # increment of max(lam F_j, alpha): algebraically identical, and
        # the shift mass is the exact complement, so row sums stay at 1
        # instead of compounding cumsum rounding step over step.
        cum = np.maximum(lam * np.cumsum(nu), alpha)
        base = np.empty(m)
        base[0] = cum[0]
        base[1:] = np.diff(cum)
        shift = 1.0 - cum[-1]
        mat = np.tile(base, (m, 1))
        idx = np.arange(m - 1)
        mat[idx, idx + 1] += shift
        mat[m - 1, m - 1] += shift
        return mat

    return NonlinearKernel(
        m, rows, f"no-invariant(alpha={alpha:g},lam={lam:g},m={m})"
    )


def markov_kernel(matrix, label: str = "markov") -> NonlinearKernel:
    """Ordinary (measure-independent) Markov kernel from a fixed
    row-stochastic matrix."""
    q = np.asarray(matrix, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError("matrix must be square")
    if np.any(q < 0) or np.any(np.abs(q.sum(axis=1) - 1.0) > ROW_SUM_TOL):
        raise ValueError("matrix rows must be probability vectors")
    q = q.copy()
    q.flags.writeable = False
    return NonlinearKernel(q.shape[0], lambda nu: q, label)


def markov_example_kernel() -> NonlinearKernel:
    """Two-state Markov chain with overlap 0.7, used as the stock
    linear example."""
    return markov_kernel(np.array([[0.7, 0.3], [0.4, 0.6]]), "markov-example")


def mixture_kernel(matrix, lam: float, label: str | None = None) -> NonlinearKernel:
    """Kernel P_nu = (1 - lam) Q + lam * (every row equal to nu).

    Its measure sensitivity is exactly lam, and its overlap is
    alpha_0 (1 - lam) where alpha_0 is the overlap of Q, so small lam
    against a well-mixing Q lands in the fast regime.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    base = markov_kernel(matrix, "mixture-base")
    q = base.matrix(np.full(base.space_size, 1.0 / base.space_size))

    def rows(nu: np.ndarray) -> np.ndarray:
        # the nu term must carry unit mass exactly: row sums inherit
        # lam * sum(nu) otherwise, and that feedback compounds the
        # evolving law's rounding drift geometrically
        return (1.0 - lam) * q + (lam / nu.sum()) * nu[None, :]

    return NonlinearKernel(
        base.space_size, rows, label or f"mixture(lam={lam:g})"
    )


def birth_death_jitter_matrix(
    p_down: float = 0.7,
    p_stay: float = 0.2,
    p_up: float = 0.1,
    jitter: float = 0.1,
    size: int = 5,
) -> np.ndarray:
    """Birth-death transition matrix blended with a uniform jitter.

    The jitter gives every pair of rows a common overlap component,
    which pure nearest-neighbour chains lack (distant rows would be
    mutually singular).  Down-moves from the bottom state and up-moves
    from the top state fold back into staying put.
    """
    if abs(p_down + p_stay + p_up - 1.0) > 1e-12:
        raise ValueError("p_down + p_stay + p_up must be 1")
    if not 0.0 <= jitter < 1.0:
        raise ValueError("jitter must lie in [0, 1)")
    q = np.zeros((size, size))
    for i in range(size):
        q[i, max(i - 1, 0)] += p_down
        q[i, i] += p_stay
        q[i, min(i + 1, size - 1)] += p_up
    return (1.0 - jitter) * q + jitter / size


# ---------------------------------------------------------------------------
# Grid sweeps.


def validate(kernel: NonlinearKernel, grid: MeasureGrid | None = None) -> dict:
    """Check that every grid measure yields nonnegative rows summing to 1
    within 1e-10.  Returns a small report; raises KernelValidationError
    naming the offending measure and row otherwise.
    """
    grid = grid or MeasureGrid.default(kernel.space_size)
    if grid.space_size != kernel.space_size:
        raise ValueError("grid and kernel state spaces differ")
    worst = 0.0
    for w in grid.weights:
        mat = kernel.matrix(w)
        if np.any(mat < -ROW_SUM_TOL):
            i = int(np.argwhere(mat < -ROW_SUM_TOL)[0][0])
            raise KernelValidationError(
                f"{kernel.label}: negative entry in row {i} at nu={w.tolist()}"
            )
        dev = np.abs(mat.sum(axis=1) - 1.0)
        if dev.max() > ROW_SUM_TOL:
            i = int(dev.argmax())
            raise KernelValidationError(
                f"{kernel.label}: row {i} sums to {mat[i].sum():.17g} "
                f"at nu={w.tolist()}"
            )
        worst = max(worst, float(dev.max()))
    return {
        "kernel": kernel.label,
        "grid_points": grid.size,
        "worst_row_deviation": worst,
    }


def _all_rows(kernel: NonlinearKernel, grid: MeasureGrid) -> np.ndarray:
    mats = np.stack([kernel.matrix(w) for w in grid.weights])
    return mats  # shape (G, n, n)


def _chunk_ranges(total: int, workers: int):
    step = max(64, -(-total // max(workers, 1)))
    return [(s, min(s + step, total)) for s in range(0, total, step)]


def estimate_alpha(
    kernel: NonlinearKernel,
    grid: MeasureGrid | None = None,
    workers: int = 1,
) -> float:
    """Grid estimate of the Dobrushin overlap:

        alpha_hat = 1 - (1/2) max ||P_mu(x, .) - P_nu(y, .)||_tv

    with the max over all grid measure pairs and all state pairs.  The
    sweep covers a subset of the true supremum's domain, so alpha_hat
    never underestimates the kernel's worst-case row separation being
    shown, i.e. alpha_hat >= alpha and refining the grid can only lower it.
    """
    grid = grid or MeasureGrid.default(kernel.space_size)
    rows = _all_rows(kernel, grid).reshape(-1, kernel.space_size)

    def block_max(bounds) -> float:
        s, e = bounds
        diff = np.abs(rows[s:e, None, :] - rows[None, :, :]).sum(axis=2)
        return float(diff.max())

    ranges = _chunk_ranges(rows.shape[0], workers)
    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            worst = max(pool.map(block_max, ranges))
    else:
        worst = max(map(block_max, ranges))
    return 1.0 - worst / 2.0


def estimate_lambda(
    kernel: NonlinearKernel,
    grid: MeasureGrid | None = None,
    workers: int = 1,
) -> float:
    """Grid estimate of the measure sensitivity:

        lambda_hat = max over grid pairs, states x of
                     ||P_mu(x, .) - P_nu(x, .)||_tv / ||mu - nu||_tv.

    Pairs closer than 1e-9 in total variation are skipped to avoid 0/0.
    The max runs over a grid subset, so lambda_hat <= lambda and grid
    refinement can only raise it.
    """
    grid = grid or MeasureGrid.default(kernel.space_size)
    mats = _all_rows(kernel, grid)
    w = grid.weights
    g = grid.size

    def block_max(bounds) -> float:
        s, e = bounds
        # Row movement per state, then max over states, per measure pair.
        move = np.abs(mats[s:e, None, :, :] - mats[None, :, :, :]).sum(axis=3).max(axis=2)
        base = np.abs(w[s:e, None, :] - w[None, :, :]).sum(axis=2)
        ok = base > NEGLIGIBLE_TV
        if not ok.any():
            return 0.0
        return float((move[ok] / base[ok]).max())

    ranges = _chunk_ranges(g, workers)
    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            best = max(pool.map(block_max, ranges))
    else:
        best = max(map(block_max, ranges))
    return best


def certify(
    kernel: NonlinearKernel,
    grid: MeasureGrid | None = None,
    tie_tolerance: float = TIE_TOLERANCE,
    workers: int = 1,
) -> ErgodicityCertificate:
    """Run both sweeps and classify the kernel.

    fast if lambda_hat < alpha_hat - tie_tolerance, slow if the two agree
    within tie_tolerance, uncertified otherwise.  Uncertified means the
    grid evidence does not separate the contraction from the measure
    feedback; it is not a proof of non-ergodicity.
    """
    grid = grid or MeasureGrid.default(kernel.space_size)
    a = estimate_alpha(kernel, grid, workers=workers)
    l = estimate_lambda(kernel, grid, workers=workers)
    if l < a - tie_tolerance:
        regime = "fast"
    elif abs(l - a) <= tie_tolerance:
        regime = "slow"
    else:
        regime = "uncertified"
    return ErgodicityCertificate(
        alpha_hat=a,
        lambda_hat=l,
        regime=regime,
        grid_resolution=grid.resolution,
        tie_tolerance=tie_tolerance,
        kernel_label=kernel.label,
    )
