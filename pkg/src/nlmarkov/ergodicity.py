"""Evolution, fixed points, contraction checks and rate certificates
for nonlinear Markov chains.

The chain advances by mu_{k+1} = mu_k P_{mu_k}.  For kernels whose grid
certificate lands in the fast or slow regime, distances to the fixed
point obey explicit bounds:

    fast (lambda < alpha):   d_tv(mu_n, pi) <= 2 (1 - (alpha - lambda))^n
    slow (lambda = alpha):   d_tv(mu_n, pi) <= 2 / (lambda n)

and one step of the chain always satisfies the contraction inequality

    d_tv(P_mu mu, P_nu nu) <= d (1 - alpha + lambda) - lambda d^2 / 2,

where d = d_tv(mu, nu).  A separate drift-based certificate (weighted
total variation with weight 1 + beta V) covers linear kernels with a
Lyapunov function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernels import ErgodicityCertificate, KernelValidationError, NonlinearKernel, ROW_SUM_TOL
from .measures import DiscreteMeasure, MASS_TOL, tv_distance, weighted_tv_distance

MAX_CYCLE_PERIOD = 8
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
NUMERICAL_FLOOR = 1e-12

__all__ = [
    "Trajectory",
    "FixedPointResult",
    "ContractionCheck",
    "RateReport",
    "HMCertificate",
    "DriftConditionError",
    "CertificationError",
    "evolve",
    "find_invariant",
    "verify_invariant",
    "check_contraction_inequality",
    "rate_bound",
    "check_rate",
    "certify_hm_contraction",
]


class DriftConditionError(ValueError):
    """The Lyapunov drift inequality fails at some state."""


class CertificationError(RuntimeError):
    """No weighted contraction factor below 1 could be certified."""


@dataclass(frozen=True)
class Trajectory:
    """A finite run of the chain: measures mu_0 ... mu_n and the total
    variation of each step."""

    kernel_label: str
    measures: tuple
    step_distances: tuple

    @property
    def steps(self) -> int:
        return len(self.measures) - 1

    @property
    def final(self) -> DiscreteMeasure:
        return self.measures[-1]

    def csv_rows(self):
        for k, mu in enumerate(self.measures):
            dist = self.step_distances[k - 1] if k > 0 else 0.0
            yield (k, *mu.weights.tolist(), dist)


def _step(kernel: NonlinearKernel, weights: np.ndarray, k: int) -> np.ndarray:
    mat = kernel.matrix(weights)
    # Row sums of measure-dependent kernels inherit the evolving law's
    # rounding drift, which grows with the state count.
    tol = ROW_SUM_TOL * max(1, kernel.space_size)
    if np.any(mat < -tol) or np.any(np.abs(mat.sum(axis=1) - 1.0) > tol):
        raise KernelValidationError(
            f"{kernel.label}: non-stochastic rows at step {k}"
        )
    return weights @ mat


def evolve(kernel: NonlinearKernel, mu0: DiscreteMeasure, steps: int) -> Trajectory:
    """Run ``steps`` applications of the chain from ``mu0``.

    Normalization drifts by at most a few machine epsilons per step;
    the measures are re-validated with a tolerance that grows linearly
    in the step count, never renormalized.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if mu0.size != kernel.space_size:
        raise ValueError("initial measure does not match kernel state space")
    measures = [mu0]
    dists = []
    w = mu0.weights
    for k in range(steps):
        nxt = _step(kernel, w, k)
        dists.append(float(np.abs(nxt - w).sum()))
        # mu_{k+1} may drift from exact normalization by a few ulps per
        # step; budget grows linearly, never renormalize
        measures.append(DiscreteMeasure(nxt, tol=MASS_TOL * (k + 2)))
        w = nxt
    return Trajectory(kernel.label, tuple(measures), tuple(dists))


@dataclass(frozen=True)
class FixedPointResult:
    """Outcome of fixed-point iteration.

    Acceptance needs both the successive distance and the fixed-point
    residual d_tv(P_pi pi, pi) below tolerance; a small successive step
    alone can be a slowly drifting orbit.  On failure the tail of the
    trajectory is kept and scanned for short cycles.
    """

    converged: bool
    measure: DiscreteMeasure | None
    iterations: int
    residual: float
    tail: tuple = ()
    cycle_period: int | None = None

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "measure": None if self.measure is None else self.measure.weights.tolist(),
            "iterations": self.iterations,
            "residual": self.residual,
            "cycle_period": self.cycle_period,
        }


def find_invariant(
    kernel: NonlinearKernel,
    mu0: DiscreteMeasure | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FixedPointResult:
    """Iterate the chain until it sits still, or give up after
    ``max_iter`` steps and report the last stretch of the orbit with a
    detected cycle period (up to 8) if there is one."""
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter at least 1")
    mu0 = mu0 or DiscreteMeasure.uniform(kernel.space_size)
    if mu0.size != kernel.space_size:
        raise ValueError("initial measure does not match kernel state space")

    w = mu0.weights
    resid0 = float(np.abs(_step(kernel, w, 0) - w).sum())
    if resid0 < tol:
        return FixedPointResult(True, mu0, 0, resid0)

    tail = [w]
    for k in range(1, max_iter + 1):
        nxt = _step(kernel, w, k)
        succ = float(np.abs(nxt - w).sum())
        if succ < tol:
            # the residual is the authoritative check: small successive
            # steps alone can be a slowly drifting or periodic orbit
            resid = float(np.abs(_step(kernel, nxt, k) - nxt).sum())
            if resid < tol:
                pi = DiscreteMeasure(nxt, tol=MASS_TOL * (k + 2))
                return FixedPointResult(True, pi, k, resid)
        w = nxt
        tail.append(w)
        if len(tail) > 10 + MAX_CYCLE_PERIOD:
            tail.pop(0)

    period = None
    last = tail[-1]
    for p in range(1, MAX_CYCLE_PERIOD + 1):
        if len(tail) > p and np.abs(last - tail[-1 - p]).sum() < max(tol, 1e-9):
            period = p
            break
    kept = tuple(
        DiscreteMeasure(t, tol=MASS_TOL * (max_iter + 1)) for t in tail[-10:]
    )
    resid = float(np.abs(_step(kernel, last, max_iter) - last).sum())
    return FixedPointResult(False, None, max_iter, resid, kept, period)


def verify_invariant(kernel: NonlinearKernel, pi: DiscreteMeasure) -> float:
    """Fixed-point residual d_tv(P_pi pi, pi)."""
    if pi.size != kernel.space_size:
        raise ValueError("measure does not match kernel state space")
    return float(np.abs(_step(kernel, pi.weights, 0) - pi.weights).sum())


@dataclass(frozen=True)
class ContractionCheck:
    """Result of sweeping the one-step contraction inequality over
    measure pairs."""

    n_pairs: int
    n_violations: int
    max_excess: float
    worst_pair: tuple | None
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.n_violations == 0

    def to_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "n_violations": self.n_violations,
            "max_excess": self.max_excess,
            "worst_pair": None
            if self.worst_pair is None
            else [list(self.worst_pair[0]), list(self.worst_pair[1])],
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def check_contraction_inequality(
    kernel: NonlinearKernel,
    alpha: float,
    lam: float,
    pairs: Sequence,
    tol: float = DEFAULT_TOL,
) -> ContractionCheck:
    """Check d_tv(P_mu mu, P_nu nu) <= d (1 - alpha + lambda) - lambda d^2/2
    for each supplied pair, d being their total variation distance."""
    n_viol, max_excess, worst = 0, -np.inf, None
    count = 0
    for mu, nu in pairs:
        wm = mu.weights if isinstance(mu, DiscreteMeasure) else np.asarray(mu, float)
        wn = nu.weights if isinstance(nu, DiscreteMeasure) else np.asarray(nu, float)
        d = float(np.abs(wm - wn).sum())
        lhs = float(np.abs(_step(kernel, wm, 0) - _step(kernel, wn, 0)).sum())
        rhs = d * (1.0 - alpha + lam) - lam * d * d / 2.0
        excess = lhs - rhs
        if excess > max_excess:
            max_excess, worst = excess, (wm.tolist(), wn.tolist())
        if excess > tol:
            n_viol += 1
        count += 1
    return ContractionCheck(count, n_viol, float(max_excess), worst, tol)


def rate_bound(certificate: ErgodicityCertificate, n: int) -> float:
    """Theoretical distance bound after n steps under a certificate.

    fast: 2 (1 - (alpha_hat - lambda_hat))^n for n >= 0;
    slow: 2 / (lambda_hat n), defined only for n >= 1.
    Uncertified certificates carry no bound and are rejected.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    alpha, lam = certificate.alpha_hat, certificate.lambda_hat
    if certificate.regime == "fast":
        gap = alpha - lam
        if gap <= 0:
            raise ValueError("fast regime requires lambda_hat < alpha_hat")
        return 2.0 * (1.0 - gap) ** n
    if certificate.regime == "slow":
        if lam <= 0:
            raise ValueError("slow regime requires lambda_hat = alpha_hat > 0")
        if n == 0:
            raise ValueError("slow-regime bound is undefined at n = 0")
        return 2.0 / (lam * n)
    raise ValueError(f"no rate bound in regime {certificate.regime!r}")


@dataclass(frozen=True)
class RateReport:
    """Measured distances to the fixed point against the certified decay
    bound.

    Distances below ``numerical_floor`` are treated as consistent with
    the bound even when the bound itself has underflowed further: once
    the chain reaches the fixed point, float64 cannot resolve distances
    past roughly 1e-15 while a geometric bound keeps shrinking.
    Violations therefore count only where measured > max(bound, floor).
    """

    kernel_label: str
    certificate: ErgodicityCertificate
    distances: tuple
    bounds: tuple
    numerical_floor: float
    violations: tuple
    falsified: bool
    invariant: tuple | None
    fixed_point_iterations: int
    # slow-regime bounds start at n = 1 (Eq. undefined at n = 0)
    first_step: int = 0

    @property
    def passed(self) -> bool:
        return not self.falsified and len(self.violations) == 0

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel_label,
            "certificate": self.certificate.to_dict(),
            "first_step": self.first_step,
            "distances": list(self.distances),
            "bounds": list(self.bounds),
            "numerical_floor": self.numerical_floor,
            "violations": [list(v) for v in self.violations],
            "falsified": self.falsified,
            "invariant": None if self.invariant is None else list(self.invariant),
            "fixed_point_iterations": self.fixed_point_iterations,
            "passed": self.passed,
        }

    def csv_rows(self):
        for i, (d, b) in enumerate(zip(self.distances, self.bounds)):
            yield (self.first_step + i, d, b, max(b, self.numerical_floor) - d)


def check_rate(
    kernel: NonlinearKernel,
    certificate: ErgodicityCertificate,
    mu0: DiscreteMeasure,
    steps: int,
    numerical_floor: float = NUMERICAL_FLOOR,
    tol: float = DEFAULT_TOL,
) -> RateReport:
    """Evolve from mu0 and compare every d_tv(mu_n, pi) with the regime
    bound.  A certified kernel whose fixed-point search fails is
    reported as falsified rather than skipped.

    In the fast regime the reference fixed point is resolved two orders
    of magnitude below the numerical floor; otherwise the estimation
    error of pi itself would register as late-step violations once the
    geometric bound underflows the floor."""
    if certificate.regime not in ("fast", "slow"):
        raise ValueError("rate check needs a fast or slow certificate")
    fp_tol = tol if certificate.regime == "slow" else min(tol, numerical_floor / 100.0)
    fp = find_invariant(kernel, mu0, tol=fp_tol)
    if not fp.converged:
        return RateReport(
            kernel_label=kernel.label,
            certificate=certificate,
            distances=(),
            bounds=(),
            numerical_floor=numerical_floor,
            violations=(),
            falsified=True,
            invariant=None,
            fixed_point_iterations=fp.iterations,
        )
    pi = fp.measure.weights
    traj = evolve(kernel, mu0, steps)
    first = 0 if certificate.regime == "fast" else 1
    distances, bounds, violations = [], [], []
    for n, mu in enumerate(traj.measures):
        if n < first:
            continue
        d = float(np.abs(mu.weights - pi).sum())
        b = rate_bound(certificate, n)
        distances.append(d)
        bounds.append(b)
        if d > max(b, numerical_floor):
            violations.append((n, d, b))
    return RateReport(
        kernel_label=kernel.label,
        certificate=certificate,
        distances=tuple(distances),
        bounds=tuple(bounds),
        numerical_floor=numerical_floor,
        violations=tuple(violations),
        falsified=False,
        invariant=tuple(pi.tolist()),
        fixed_point_iterations=fp.iterations,
        first_step=first,
    )


# ---------------------------------------------------------------------------
# Weighted-total-variation certificate for linear kernels with a
# Lyapunov function.


@dataclass(frozen=True)
class HMCertificate:
    """Certified contraction of a Markov kernel in the weighted metric
    d_{1+beta V}: applying the kernel shrinks the metric by lambda_w < 1.

    Preconditions recorded here: the drift bound QV <= gamma V + K holds
    pointwise, and rows overlap by at least alpha_local on the sublevel
    set {V <= 4K / (1 - gamma)}.
    """

    gamma: float
    K: float
    alpha_local: float
    beta: float
    lambda_w: float
    sublevel_threshold: float
    sublevel_states: tuple
    n_test_pairs: int
    kernel_label: str = "kernel"

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "K": self.K,
            "alpha_local": self.alpha_local,
            "beta": self.beta,
            "lambda_w": self.lambda_w,
            "sublevel_threshold": self.sublevel_threshold,
            "sublevel_states": list(self.sublevel_states),
            "n_test_pairs": self.n_test_pairs,
            "kernel": self.kernel_label,
        }


def certify_hm_contraction(
    matrix,
    V,
    gamma: float,
    K: float,
    alpha_local: float,
    beta_grid: Sequence[float],
    test_pairs: Sequence = (),
    tol: float = DEFAULT_TOL,
    label: str = "kernel",
) -> HMCertificate:
    """Search ``beta_grid`` for a weight 1 + beta V in which the kernel
    provably contracts.

    For each beta the candidate factor is the worst point-mass ratio

        lambda_w(beta) = max_{x != y}
            sum_j (1 + beta V_j) |Q(x,j) - Q(y,j)| / (2 + beta (V_x + V_y)),

    which bounds the ratio for arbitrary measure pairs (positive and
    negative parts of mu - nu have disjoint supports).  The returned
    certificate uses the beta minimizing lambda_w and re-checks the
    inequality on the supplied test pairs.

    Raises DriftConditionError if QV <= gamma V + K fails at any state,
    ValueError if the supplied alpha_local is not actually achieved on
    the sublevel set, and CertificationError if no beta works.
    """
    q = np.asarray(matrix, dtype=float)
    v = np.asarray(V, dtype=float)
    n = q.shape[0]
    if q.shape != (n, n) or v.shape != (n,):
        raise ValueError("matrix must be (n, n) and V of length n")
    if np.any(q < 0) or np.any(np.abs(q.sum(axis=1) - 1.0) > ROW_SUM_TOL):
        raise ValueError("matrix rows must be probability vectors")
    if np.any(v < 1.0 - 1e-12):
        raise ValueError("V must be at least 1 everywhere")
    if not 0.0 < gamma < 1.0 or K <= 0.0:
        raise ValueError("need 0 < gamma < 1 and K > 0")
    if not 0.0 < alpha_local <= 1.0:
        raise ValueError("alpha_local must lie in (0, 1]")

    qv = q @ v
    drift_gap = qv - (gamma * v + K)
    if np.any(drift_gap > tol):
        bad = int(np.argmax(drift_gap))
        raise DriftConditionError(
            f"{label}: drift QV <= gamma V + K fails at state {bad} "
            f"(QV = {qv[bad]:.17g}, bound = {gamma * v[bad] + K:.17g})"
        )

    threshold = 4.0 * K / (1.0 - gamma)
    sublevel = np.flatnonzero(v <= threshold)
    if sublevel.size == 0:
        raise ValueError("sublevel set {V <= 4K/(1-gamma)} is empty")
    for a_i in range(sublevel.size):
        for b_i in range(a_i + 1, sublevel.size):
            x, y = int(sublevel[a_i]), int(sublevel[b_i])
            sep = float(np.abs(q[x] - q[y]).sum())
            if sep > 2.0 * (1.0 - alpha_local) + tol:
                raise ValueError(
                    f"{label}: rows {x} and {y} overlap less than "
                    f"alpha_local = {alpha_local:g} on the sublevel set"
                )

    betas = [float(b) for b in beta_grid]
    if not betas or any(b <= 0 for b in betas):
        raise ValueError("beta_grid must contain positive values")

    best_beta, best_lw = None, np.inf
    table = {}
    for beta in betas:
        f = 1.0 + beta * v
        num = (np.abs(q[:, None, :] - q[None, :, :]) * f[None, None, :]).sum(axis=2)
        den = 2.0 + beta * (v[:, None] + v[None, :])
        ratio = num / den
        np.fill_diagonal(ratio, 0.0)
        lw = float(ratio.max())
        table[beta] = lw
        if lw < best_lw:
            best_beta, best_lw = beta, lw
    if best_lw >= 1.0:
        raise CertificationError(
            f"{label}: no beta in the grid certifies contraction; "
            f"best lambda_w = {best_lw:.17g} at beta = {best_beta:g} "
            f"(table: {table})"
        )

    f = 1.0 + best_beta * v
    for mu, nu in test_pairs:
        wm = mu.weights if isinstance(mu, DiscreteMeasure) else np.asarray(mu, float)
        wn = nu.weights if isinstance(nu, DiscreteMeasure) else np.asarray(nu, float)
        lhs = float((f * np.abs(wm @ q - wn @ q)).sum())
        rhs = best_lw * float((f * np.abs(wm - wn)).sum())
        if lhs > rhs + tol:
            raise CertificationError(
                f"{label}: certified factor fails on a validation pair "
                f"(lhs = {lhs:.17g}, rhs = {rhs:.17g})"
            )

    return HMCertificate(
        gamma=gamma,
        K=K,
        alpha_local=alpha_local,
        beta=best_beta,
        lambda_w=best_lw,
        sublevel_threshold=threshold,
        sublevel_states=tuple(int(s) for s in sublevel),
        n_test_pairs=len(test_pairs),
        kernel_label=label,
    )
