"""Statistical diagnostics for the particle simulations: histogram
total variation over time, exponential decay fits, local overlap of
transition laws, Lyapunov regressions, and the closed-form perturbation
factors.

All total variation estimates here go through a fixed shared binning,
declared once per experiment, because comparing histograms with
different bins estimates nothing.  Monte Carlo noise gives the
estimates a positive floor; checks that compare against theoretical
bounds therefore carry an explicit calibrated allowance instead of
pretending the estimator is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .measures import (
    EmpiricalMeasure,
    HistogramDensity,
    histogram_of,
    tv_between_histograms,
    wasserstein2_truncated,
)
from .mckean_vlasov import ParticleEnsemble, SMVESpec, simulate

__all__ = [
    "Binning",
    "DEFAULT_BINNING",
    "LyapunovFit",
    "DecayFit",
    "DecayFitError",
    "GirsanovReport",
    "estimate_local_alpha",
    "lyapunov_diagnostic",
    "girsanov_bound_check",
    "calibrate_tv_allowance",
    "fit_decay",
    "perturbation_bound_factor",
    "composite_contraction_factor",
    "measure_lipschitz_diagnostic",
]


@dataclass(frozen=True)
class Binning:
    """Shared histogram grid: [lower, upper] split into ``bins`` bins
    per axis."""

    lower: float = -10.0
    upper: float = 10.0
    bins: int = 200

    def __post_init__(self):
        if self.upper <= self.lower:
            raise ValueError("upper must exceed lower")
        if self.bins < 1:
            raise ValueError("bins must be positive")

    def histogram(self, ensemble: EmpiricalMeasure) -> HistogramDensity:
        d = ensemble.dimension
        return histogram_of(
            ensemble,
            (np.full(d, self.lower), np.full(d, self.upper)),
            np.full(d, self.bins),
        )

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "bins": self.bins}


DEFAULT_BINNING = Binning()


def _ensemble_tv(a: ParticleEnsemble, b: ParticleEnsemble, binning: Binning) -> float:
    return tv_between_histograms(
        binning.histogram(a.empirical()), binning.histogram(b.empirical())
    )


# ---------------------------------------------------------------------------
# Local overlap of transition laws.


def estimate_local_alpha(
    b1: Callable[[np.ndarray], np.ndarray],
    R: float,
    t: float,
    n_sims: int,
    binning: Binning = DEFAULT_BINNING,
    x_grid: np.ndarray | None = None,
    step_size: float = 0.01,
    seed: int = 101,
) -> float:
    """Overlap of the time-t laws of dY = b1(Y) dt + dW across starting
    points in the R-ball:

        alpha_hat(R, t) = 1 - (1/2) max over start pairs of
                          tv between their histogram laws.

    Monte Carlo noise biases the histogram distance upward (pushing
    alpha_hat down, toward caution); very coarse bins push the other way
    by smearing the laws together.  With the default binning the noise
    term dominates at practical n_sims.
    """
    if R <= 0 or t <= 0:
        raise ValueError("R and t must be positive")
    if n_sims < 100:
        raise ValueError("need at least 100 simulations per start")
    if x_grid is None:
        x_grid = np.linspace(-R, R, 5)[:, None]
    else:
        x_grid = np.asarray(x_grid, dtype=float)
        if x_grid.ndim == 1:
            x_grid = x_grid[:, None]
    if np.any(np.linalg.norm(x_grid, axis=1) > R + 1e-12):
        raise ValueError("x_grid must lie inside the R-ball")

    k, d = x_grid.shape
    starts = np.repeat(x_grid, n_sims, axis=0)

    def sampler(rng, n, dim):
        return starts

    probe = SMVESpec(d, b1, None, 0.0, 0.0, 0.0, "local-alpha-probe")
    final = simulate(probe, sampler, k * n_sims, step_size, t, seed, [t])[-1]

    hists = [
        binning.histogram(EmpiricalMeasure(final.positions[i * n_sims:(i + 1) * n_sims]))
        for i in range(k)
    ]
    worst = max(
        tv_between_histograms(hists[i], hists[j])
        for i in range(k)
        for j in range(i + 1, k)
    )
    return 1.0 - worst / 2.0


# ---------------------------------------------------------------------------
# Lyapunov regression.


@dataclass(frozen=True)
class LyapunovFit:
    """Least squares fit of mean-weight recursion m_{k+1} = gamma m_k + K
    across snapshots one lag apart."""

    gamma_hat: float
    K_hat: float
    lag: float
    n_points: int
    residual_rms: float
    degenerate: bool
    predicted_gamma: float | None = None

    def to_dict(self) -> dict:
        return {
            "gamma_hat": self.gamma_hat,
            "K_hat": self.K_hat,
            "lag": self.lag,
            "n_points": self.n_points,
            "residual_rms": self.residual_rms,
            "degenerate": self.degenerate,
            "predicted_gamma": self.predicted_gamma,
        }


def lyapunov_diagnostic(
    snapshots: Sequence[ParticleEnsemble],
    V: Callable,
    lag: float,
) -> LyapunovFit:
    """Regress the mean weight along the trajectory at lag multiples.

    Needs snapshots at times 0, lag, 2 lag, ...; at least three of them.
    A flat series (already at equilibrium, or a frozen ensemble) cannot
    identify gamma and comes back flagged degenerate.
    """
    if lag <= 0:
        raise ValueError("lag must be positive")
    wanted = []
    for snap in snapshots:
        ratio = snap.time / lag
        if abs(ratio - round(ratio)) * lag <= snap.step_size / 2 + 1e-12:
            wanted.append(snap)
    if len(wanted) < 3:
        raise ValueError(
            f"need at least 3 snapshots at lag multiples, found {len(wanted)}"
        )
    wanted.sort(key=lambda s: s.time)
    m = np.array([float(np.mean(V(s.positions))) for s in wanted])

    prev, nxt = m[:-1], m[1:]
    if float(np.var(prev)) < 1e-14 * (1.0 + float(np.mean(prev)) ** 2):
        return LyapunovFit(
            gamma_hat=float("nan"),
            K_hat=float(np.mean(nxt)),
            lag=lag,
            n_points=len(m),
            residual_rms=0.0,
            degenerate=True,
            predicted_gamma=_predicted_gamma(V, lag),
        )
    slope, intercept = np.polyfit(prev, nxt, 1)
    resid = nxt - (slope * prev + intercept)
    return LyapunovFit(
        gamma_hat=float(slope),
        K_hat=float(intercept),
        lag=lag,
        n_points=len(m),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        degenerate=False,
        predicted_gamma=_predicted_gamma(V, lag),
    )


def _predicted_gamma(V, lag: float) -> float | None:
    # Exponential weights decay like exp(-kappa * r * t / 4) per lag t.
    r = getattr(V, "r", None)
    kappa = getattr(V, "kappa", None)
    if r is None or kappa is None:
        return None
    return math.exp(-kappa * r * lag / 4.0)


# ---------------------------------------------------------------------------
# Coupled-run bound check.


@dataclass(frozen=True)
class GirsanovReport:
    """Histogram distances between two coupled runs against the
    exponential coupling bound sqrt(2) tv0 exp(4 eps^2 L^2 t)."""

    times: tuple
    estimates: tuple
    bounds: tuple
    allowance: float
    tv0: float
    epsilon: float
    lipschitz_L: float
    violations: tuple

    @property
    def passed(self) -> bool:
        return len(self.violations) == 0

    def to_dict(self) -> dict:
        return {
            "times": list(self.times),
            "estimates": list(self.estimates),
            "bounds": list(self.bounds),
            "allowance": self.allowance,
            "tv0": self.tv0,
            "epsilon": self.epsilon,
            "lipschitz_L": self.lipschitz_L,
            "violations": [list(v) for v in self.violations],
            "passed": self.passed,
        }

    def csv_rows(self):
        for t, est, b in zip(self.times, self.estimates, self.bounds):
            yield (t, est, b, b + self.allowance - est)


def girsanov_bound_check(
    spec: SMVESpec,
    mu0_sampler: Callable,
    nu0_sampler: Callable,
    tv0: float,
    times: Sequence[float],
    n_particles: int,
    step_size: float,
    seed: int,
    binning: Binning = DEFAULT_BINNING,
    allowance: float = 0.0,
) -> GirsanovReport:
    """Run the same noise through two initial laws and compare their
    histogram distance with sqrt(2) tv0 exp(4 eps^2 L^2 t) + allowance.

    ``tv0`` is the total variation between the exact initial laws (not
    estimated from particles); the allowance should come from
    calibrate_tv_allowance with the same binning and particle count.
    """
    if not 0.0 <= tv0 <= 2.0:
        raise ValueError("tv0 must lie in [0, 2]")
    if allowance < 0.0:
        raise ValueError("allowance must be nonnegative")
    times = sorted(float(t) for t in times)
    if not times:
        raise ValueError("need at least one time")
    horizon = max(times[-1], step_size)
    run_a = simulate(spec, mu0_sampler, n_particles, step_size, horizon, seed, times)
    run_b = simulate(spec, nu0_sampler, n_particles, step_size, horizon, seed, times)

    rate = 4.0 * spec.epsilon**2 * spec.lipschitz_L**2
    estimates, bounds, violations = [], [], []
    for a, b in zip(run_a, run_b):
        est = _ensemble_tv(a, b, binning)
        bound = math.sqrt(2.0) * tv0 * math.exp(rate * a.time)
        estimates.append(est)
        bounds.append(bound)
        if est > bound + allowance:
            violations.append((a.time, est, bound))
    return GirsanovReport(
        times=tuple(a.time for a in run_a),
        estimates=tuple(estimates),
        bounds=tuple(bounds),
        allowance=allowance,
        tv0=tv0,
        epsilon=spec.epsilon,
        lipschitz_L=spec.lipschitz_L,
        violations=tuple(violations),
    )


def calibrate_tv_allowance(
    spec: SMVESpec,
    sampler: Callable,
    times: Sequence[float],
    n_particles: int,
    step_size: float,
    seed: int,
    binning: Binning = DEFAULT_BINNING,
    n_pairs: int = 5,
    percentile: float = 99.0,
) -> float:
    """Noise floor of the histogram distance: run independent pairs of
    ensembles from the same law and take a high percentile of their
    distances over the requested times (t = 0 excluded; initial data has
    no Monte Carlo noise when samplers are deterministic)."""
    times = [float(t) for t in times if t > 0.0]
    if not times:
        raise ValueError("calibration needs at least one positive time")
    if n_pairs < 1:
        raise ValueError("n_pairs must be positive")
    samples = []
    for j in range(n_pairs):
        run_a = simulate(spec, sampler, n_particles, step_size, max(times),
                         seed + 2 * j + 1, times)
        run_b = simulate(spec, sampler, n_particles, step_size, max(times),
                         seed + 2 * j + 2, times)
        for a, b in zip(run_a, run_b):
            samples.append(_ensemble_tv(a, b, binning))
    return float(np.percentile(samples, percentile))


# ---------------------------------------------------------------------------
# Exponential decay fit.


class DecayFitError(RuntimeError):
    """Too few distance points above the noise floor to fit a rate."""

    def __init__(self, message: str, usable: int, tv_values: list):
        super().__init__(message)
        self.usable = usable
        self.tv_values = tv_values


@dataclass(frozen=True)
class DecayFit:
    """Least squares fit of log tv(t) = log C - theta t on the points
    above the noise floor, with a 95 percent band on theta."""

    theta: float
    theta_lower: float
    theta_upper: float
    log_c: float
    n_used: int
    times: tuple
    tv_values: tuple
    noise_floor: float

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "theta_lower": self.theta_lower,
            "theta_upper": self.theta_upper,
            "log_c": self.log_c,
            "n_used": self.n_used,
            "times": list(self.times),
            "tv_values": list(self.tv_values),
            "noise_floor": self.noise_floor,
        }


def fit_decay(
    run_a: Sequence[ParticleEnsemble],
    run_b: Sequence[ParticleEnsemble],
    binning: Binning = DEFAULT_BINNING,
    noise_floor: float = 0.0,
) -> DecayFit:
    """Exponential decay rate of the histogram distance between two
    trajectories sharing snapshot times.

    Points at or below ``noise_floor`` carry no rate information and are
    dropped; fewer than three survivors raise DecayFitError (identical
    runs, or a floor set too high).
    """
    if len(run_a) != len(run_b):
        raise ValueError("trajectories have different snapshot counts")
    times, tvs = [], []
    for a, b in zip(run_a, run_b):
        if abs(a.time - b.time) > 1e-9:
            raise ValueError("snapshot times differ between trajectories")
        times.append(a.time)
        tvs.append(_ensemble_tv(a, b, binning))
    keep = [i for i, v in enumerate(tvs) if v > noise_floor]
    if len(keep) < 3:
        raise DecayFitError(
            f"only {len(keep)} distance points above the noise floor "
            f"{noise_floor:g}; cannot fit a decay rate",
            len(keep),
            tvs,
        )
    t = np.array([times[i] for i in keep])
    y = np.log([tvs[i] for i in keep])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    dof = len(keep) - 2
    if dof > 0:
        sigma2 = float(resid @ resid) / dof
        se = math.sqrt(sigma2 / float(((t - t.mean()) ** 2).sum()))
    else:
        se = float("nan")
    theta = -float(slope)
    return DecayFit(
        theta=theta,
        theta_lower=theta - 1.96 * se,
        theta_upper=theta + 1.96 * se,
        log_c=float(intercept),
        n_used=len(keep),
        times=tuple(times),
        tv_values=tuple(tvs),
        noise_floor=noise_floor,
    )


# ---------------------------------------------------------------------------
# Closed-form perturbation factors.


def perturbation_bound_factor(C: float, eps: float, beta: float, zeta_V: float) -> float:
    """Prefactor C eps (1 + beta) (1 + zeta_V) multiplying the weighted
    distance in the small-interaction perturbation bound."""
    if min(C, eps, beta, zeta_V) < 0:
        raise ValueError("all inputs must be nonnegative")
    return C * eps * (1.0 + beta) * (1.0 + zeta_V)


def composite_contraction_factor(
    lam: float, C: float, eps: float, beta: float, K: float, nu_V: float
) -> float:
    """Effective one-step factor lambda + C eps (1 + beta) (1 + K + nu_V)
    combining the unperturbed contraction with the perturbation cost.
    Below 1 it yields exponential convergence of the perturbed flow."""
    if min(lam, C, eps, beta, K, nu_V) < 0:
        raise ValueError("all inputs must be nonnegative")
    return lam + C * eps * (1.0 + beta) * (1.0 + K + nu_V)


# ---------------------------------------------------------------------------
# Interaction smoothness probe.


def measure_lipschitz_diagnostic(
    b2: Callable,
    ensembles: Sequence[EmpiricalMeasure],
    probe_points: np.ndarray,
    declared_L: float,
) -> dict:
    """Largest observed ratio |b2(x, mu) - b2(x, nu)| / rho2(mu, nu)
    over ensemble pairs, against the declared Lipschitz constant.

    Informational: the truncated transport distance can be much smaller
    than a mean shift, so ratios above declared_L flag where the hand
    constant stops being a certificate.
    """
    pts = np.asarray(probe_points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    worst = 0.0
    pairs = 0
    for i in range(len(ensembles)):
        for j in range(i + 1, len(ensembles)):
            mu, nu = ensembles[i], ensembles[j]
            rho = wasserstein2_truncated(mu, nu, method="monotone")
            if rho < 1e-12:
                continue
            gap = np.linalg.norm(b2(pts, mu) - b2(pts, nu), axis=1).max()
            worst = max(worst, float(gap) / rho)
            pairs += 1
    return {
        "max_ratio": worst,
        "declared_L": declared_L,
        "pairs_checked": pairs,
        "within_declared": worst <= declared_L * (1.0 + 1e-9),
    }
