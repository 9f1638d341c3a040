"""Executable checks that the ergodicity conditions are sharp.

Three constructions, each certified by replaying its defining algebra
numerically rather than by simulation alone:

* an oscillating two-state kernel with positive overlap whose orbits
  alternate forever at constant distance from the symmetric fixed point;
* a two-state kernel whose stationary measures fill a whole interval of
  mixtures;
* a chain on {1, ..., m} (a truncation of the construction on the
  positive integers) whose stationarity equation is self-contradictory,
  so the untruncated chain has no invariant law for lambda < 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ergodicity import Trajectory, evolve, find_invariant, verify_invariant
from .kernels import (
    MeasureGrid,
    continuum_kernel,
    estimate_alpha,
    estimate_lambda,
    no_invariant_kernel,
    oscillating_kernel,
)
from .measures import DiscreteMeasure, tv_distance
from .reporting import Claim, report_document

EXACT_TOL = 1e-12

__all__ = [
    "CounterexampleReport",
    "verify_oscillation",
    "verify_continuum",
    "verify_no_invariant_recursion",
    "demonstrate_no_convergence",
    "first_crossing_index",
]


@dataclass(frozen=True)
class CounterexampleReport:
    name: str
    parameters: dict
    claims: tuple
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.claims)

    def to_document(self) -> dict:
        return report_document(
            f"counterexample/{self.name}", self.parameters, self.claims, self.details
        )


def verify_oscillation(gamma: float, a: float, n_steps: int = 50) -> CounterexampleReport:
    """Replay the oscillating kernel from (a, 1-a).

    Checks exact period-2 alternation, constant distance 2|a - 1/2| to
    the symmetric law, invariance of the symmetric law, an overlap
    estimate equal to gamma, and that fixed-point iteration fails
    (detecting the 2-cycle) unless started symmetric.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if not gamma / 2.0 <= a <= 1.0 - gamma / 2.0:
        raise ValueError("a must lie in [gamma/2, 1 - gamma/2]")
    if n_steps < 2:
        raise ValueError("need at least 2 steps")

    kernel = oscillating_kernel(gamma)
    mu0 = DiscreteMeasure.two_point(a)
    swapped = DiscreteMeasure.two_point(1.0 - a)
    pi = DiscreteMeasure.two_point(0.5)
    traj = evolve(kernel, mu0, n_steps)

    worst_period = max(
        tv_distance(mu, mu0 if k % 2 == 0 else swapped)
        for k, mu in enumerate(traj.measures)
    )
    target = 2.0 * abs(a - 0.5)
    worst_dist = max(
        abs(tv_distance(mu, pi) - target) for mu in traj.measures
    )
    residual = verify_invariant(kernel, pi)
    alpha_hat = estimate_alpha(kernel)

    claims = [
        Claim(
            "orbit alternates with period 2",
            worst_period <= EXACT_TOL,
            {"worst_deviation": worst_period, "steps": n_steps},
        ),
        Claim(
            "distance to the symmetric law is constant",
            worst_dist <= EXACT_TOL,
            {"target": target, "worst_deviation": worst_dist},
        ),
        Claim(
            "symmetric law is invariant",
            residual <= EXACT_TOL,
            {"residual": residual},
        ),
        Claim(
            "overlap estimate equals gamma",
            abs(alpha_hat - gamma) <= EXACT_TOL,
            {"alpha_hat": alpha_hat, "gamma": gamma},
        ),
    ]

    fp = find_invariant(kernel, mu0, max_iter=64)
    if target > EXACT_TOL:
        claims.append(
            Claim(
                "fixed-point iteration stalls on a 2-cycle",
                (not fp.converged) and fp.cycle_period == 2,
                {"converged": fp.converged, "cycle_period": fp.cycle_period},
            )
        )
    else:
        claims.append(
            Claim(
                "symmetric start converges immediately",
                fp.converged and fp.iterations == 0,
                {"converged": fp.converged, "iterations": fp.iterations},
            )
        )

    return CounterexampleReport(
        "oscillation",
        {"gamma": gamma, "a": a, "n_steps": n_steps},
        tuple(claims),
        {"trajectory_head": [m.weights.tolist() for m in traj.measures[:6]]},
    )


def verify_continuum(
    alpha: float,
    lam: float,
    a_samples: Sequence[float] | None = None,
    n_steps: int = 100,
) -> CounterexampleReport:
    """Check that every mixture a delta_1 + (1-a) delta_2 with a in
    [alpha/(2 lam), 1 - alpha/(2 lam)] is a fixed point, that distinct
    fixed points never attract each other, and that the grid estimates
    bracket the construction (alpha_hat >= alpha, lambda_hat <= lam).
    """
    if not (0.0 < alpha < lam <= 1.0):
        raise ValueError("need 0 < alpha < lam <= 1")
    lo, hi = alpha / (2.0 * lam), 1.0 - alpha / (2.0 * lam)
    if a_samples is None:
        a_samples = np.linspace(lo, hi, 5).tolist()
    bad = [a for a in a_samples if not lo <= a <= hi]
    if bad:
        raise ValueError(f"samples {bad} outside the invariant interval [{lo:g}, {hi:g}]")

    kernel = continuum_kernel(alpha, lam)
    residuals = {
        float(a): verify_invariant(kernel, DiscreteMeasure.two_point(a))
        for a in a_samples
    }
    worst_resid = max(residuals.values())

    # Distinct fixed points: both trajectories are constant, so their
    # distance never moves from 2 |a1 - a2|.
    worst_pair_dev = 0.0
    samples = sorted(float(a) for a in a_samples)
    for a1, a2 in zip(samples, samples[1:]):
        t1 = evolve(kernel, DiscreteMeasure.two_point(a1), n_steps)
        t2 = evolve(kernel, DiscreteMeasure.two_point(a2), n_steps)
        target = 2.0 * abs(a1 - a2)
        dev = max(
            abs(tv_distance(m1, m2) - target)
            for m1, m2 in zip(t1.measures, t2.measures)
        )
        worst_pair_dev = max(worst_pair_dev, dev)

    grid = MeasureGrid.default(2)
    alpha_hat = estimate_alpha(kernel, grid)
    lambda_hat = estimate_lambda(kernel, grid)

    # A mixture strictly outside the interval must move.
    a_out = lo / 2.0
    outside_resid = verify_invariant(kernel, DiscreteMeasure.two_point(a_out))

    claims = (
        Claim(
            "sampled mixtures are all invariant",
            worst_resid <= EXACT_TOL,
            {"residuals": residuals},
        ),
        Claim(
            "distinct fixed points keep their distance",
            worst_pair_dev <= EXACT_TOL,
            {"worst_deviation": worst_pair_dev, "n_steps": n_steps},
        ),
        Claim(
            "grid estimates bracket the construction",
            alpha_hat >= alpha - EXACT_TOL and lambda_hat <= lam + EXACT_TOL,
            {"alpha_hat": alpha_hat, "lambda_hat": lambda_hat,
             "alpha": alpha, "lam": lam},
        ),
        Claim(
            "mixtures outside the interval are not invariant",
            outside_resid > 1e-9,
            {"a": a_out, "residual": outside_resid},
        ),
    )
    return CounterexampleReport(
        "continuum",
        {"alpha": alpha, "lam": lam, "a_samples": list(map(float, a_samples)),
         "n_steps": n_steps},
        claims,
        {"invariant_interval": [lo, hi]},
    )


def verify_no_invariant_recursion(
    alpha: float, lam: float, n_max: int = 50
) -> CounterexampleReport:
    """Replay the stationarity algebra of the chain on the positive
    integers and exhibit its contradiction.

    For lambda < 1 a stationary law mu would need mu({1}) = alpha
    (the branch mu({1}) >= alpha/lambda collapses to mu({1}) = 0), a
    geometric profile mu({i}) = alpha (1-lambda)^{i-1} below the first
    index n where lambda mu({1..n}) >= alpha, and then the balance
    equation at n itself solves to mu({n}) = 0 for every hypothetical
    n, contradicting the definition of n.  At lambda = 1 the equation
    degenerates (coefficient 1 - lambda vanishes) and the argument
    gives nothing; that boundary is flagged, not asserted.
    """
    if not (0.0 < alpha < lam <= 1.0):
        raise ValueError("need 0 < alpha < lam <= 1")
    if n_max < 2:
        raise ValueError("n_max must be at least 2")

    if lam == 1.0:
        # Degenerate boundary: the shift term vanishes and rows equal the
        # input law wherever its first-state mass is at least alpha, so
        # stationary laws exist.  Exhibit one on a truncation.
        m = 30
        w = np.zeros(m)
        w[0] = max(alpha, 0.5)
        w[1:] = (1.0 - w[0]) / (m - 1)
        resid = verify_invariant(no_invariant_kernel(alpha, lam, m), DiscreteMeasure(w))
        claims = (
            Claim(
                "lambda = 1 boundary: stationarity equation degenerates",
                True,
                {"equation_coefficient": 0.0, "note":
                 "contradiction not derivable; construction certified for lambda < 1 only"},
            ),
            Claim(
                "lambda = 1 boundary: stationary inputs exist",
                resid <= EXACT_TOL,
                {"residual": resid, "first_state_mass": float(w[0])},
            ),
        )
        return CounterexampleReport(
            "no-invariant",
            {"alpha": alpha, "lam": lam, "n_max": n_max},
            claims,
            {"boundary_case": True},
        )

    # Branch mu({1}) >= alpha/lambda: stationarity reads mu1 = lam * mu1,
    # whose only solution is 0, incompatible with mu1 >= alpha/lam > 0.
    branch_solution = 0.0
    branch_ok = abs(branch_solution * (1.0 - lam)) <= EXACT_TOL and branch_solution < alpha / lam

    # Hence mu({1}) = alpha, and n(mu) = 1 would need lam * alpha >= alpha.
    n1_infeasible = lam * alpha < alpha

    solved = []
    worst_abs = 0.0
    worst_crossing_margin = -np.inf
    for n in range(2, n_max + 1):
        profile = alpha * (1.0 - lam) ** np.arange(n - 1)
        f_prev = float(profile.sum())
        numerator = alpha * (1.0 - lam) ** (n - 1) + lam * f_prev - alpha
        mu_n = numerator / (1.0 - lam)
        solved.append(mu_n)
        worst_abs = max(worst_abs, abs(mu_n))
        # With mu({n}) = 0 the running mass lam * F_n stays short of alpha,
        # so n cannot be a first-crossing index at all.
        worst_crossing_margin = max(worst_crossing_margin, lam * (f_prev + mu_n) - alpha)

    claims = (
        Claim(
            "first-state mass is forced to alpha",
            branch_ok,
            {"upper_branch_solution": branch_solution,
             "threshold": alpha / lam, "forced_value": alpha},
        ),
        Claim(
            "first-crossing at state 1 is infeasible",
            n1_infeasible,
            {"lam_times_alpha": lam * alpha, "alpha": alpha},
        ),
        Claim(
            "balance at every hypothetical crossing state solves to zero mass",
            worst_abs <= EXACT_TOL,
            {"worst_abs_solution": worst_abs, "n_range": [2, n_max]},
        ),
        Claim(
            "zero solution contradicts the crossing definition",
            worst_crossing_margin <= EXACT_TOL,
            {"worst_margin": worst_crossing_margin},
        ),
    )
    return CounterexampleReport(
        "no-invariant",
        {"alpha": alpha, "lam": lam, "n_max": n_max},
        claims,
        {"solved_boundary_masses": solved, "boundary_case": False},
    )


def first_crossing_index(nu, alpha: float, lam: float) -> int:
    """Smallest 1-based n with lam * nu({1..n}) >= alpha; the truncation
    size if the running mass never crosses."""
    w = nu.weights if isinstance(nu, DiscreteMeasure) else np.asarray(nu, float)
    run = lam * np.cumsum(w)
    hits = np.flatnonzero(run >= alpha)
    return int(hits[0]) + 1 if hits.size else w.size


def demonstrate_no_convergence(
    alpha: float,
    lam: float,
    truncation: int = 200,
    mu0: DiscreteMeasure | None = None,
    steps: int = 200,
) -> tuple[Trajectory, CounterexampleReport]:
    """Run the truncated chain and watch the forcing mechanism at work.

    The truncated kernel does have fixed points (mass folded back at the
    boundary restores them), so this is an illustration, not the proof:
    the proof is verify_no_invariant_recursion.  What the run shows is
    the first state being pinned to exactly alpha whenever its mass
    drops below alpha/lambda, while the shift component leaks mass
    toward ever higher states.
    """
    if not (0.0 < alpha < lam <= 1.0):
        raise ValueError("need 0 < alpha < lam <= 1")
    kernel = no_invariant_kernel(alpha, lam, truncation)
    mu0 = mu0 or DiscreteMeasure.dirac(0, truncation)
    if mu0.size != truncation:
        raise ValueError("mu0 does not match the truncation")
    traj = evolve(kernel, mu0, steps)

    crossing = [first_crossing_index(m, alpha, lam) for m in traj.measures]
    first_mass = [float(m.weights[0]) for m in traj.measures]

    pin_dev = 0.0
    pin_events = 0
    for k in range(len(traj.measures) - 1):
        if lam * first_mass[k] < alpha:
            pin_events += 1
            pin_dev = max(pin_dev, abs(first_mass[k + 1] - alpha))

    beyond0 = float(traj.measures[0].weights[2:].sum())
    beyond1 = float(traj.final.weights[2:].sum())

    claims = (
        Claim(
            "first state pinned to alpha whenever its mass falls below alpha/lambda",
            # exact up to the evolving law's normalization drift
            pin_events > 0 and pin_dev <= 1e-12,
            {"events": pin_events, "worst_deviation": pin_dev},
        ),
        Claim(
            "mass leaks past the initial support",
            beyond1 > beyond0 + 1e-12,
            {"initial_tail_mass": beyond0, "final_tail_mass": beyond1},
        ),
    )
    report = CounterexampleReport(
        "no-invariant-run",
        {"alpha": alpha, "lam": lam, "truncation": truncation, "steps": steps},
        claims,
        {
            "crossing_index_path": crossing,
            "first_state_mass_head": first_mass[:10],
            "step_distance_head": list(traj.step_distances[:10]),
            "truncation_note": (
                "the finite chain folds the shift back onto the last state, "
                "so it does admit fixed points; only the infinite chain has none"
            ),
        },
    )
    return traj, report
