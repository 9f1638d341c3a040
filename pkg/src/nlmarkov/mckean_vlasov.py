"""Particle simulation of stochastic mean-field (McKean-Vlasov) dynamics

    dX_t = (b1(X_t) + eps * b2(X_t, law(X_t))) dt + dW_t,

closed with the empirical measure of N particles and an Euler scheme.
The confining part b1 is assumed to satisfy the radial drift condition
<b1(x), x> <= -r |x| outside a ball of radius M; the interaction b2 is
bounded by D and enters at strength eps.  Under these assumptions the
law of the process admits an exponential Lyapunov weight

    V(x) = exp(kappa |x|),   kappa = min(r/4, 1),   |x| >= M,

smoothly capped inside the ball, and small-eps perturbation bounds hold
up to eps_0 = min(alpha_local, r) / (2 D).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.random import Generator, Philox

from .measures import EmpiricalMeasure

__all__ = [
    "WeightFunction",
    "make_weight_function",
    "SMVESpec",
    "ParticleEnsemble",
    "VHReport",
    "SimulationBlowUp",
    "DriftBoundError",
    "verify_vh",
    "simulate",
    "epsilon_zero",
    "integral_I",
    "IntegralEstimate",
    "ou_drift",
    "radial_confinement_drift",
    "mean_attraction_coupling",
    "make_ou_spec",
    "make_vh_spec",
    "point_mass_sampler",
    "gaussian_sampler",
    "two_point_mixture_sampler",
]


class SimulationBlowUp(RuntimeError):
    """A particle reached a non-finite position."""


class DriftBoundError(RuntimeError):
    """The interaction term exceeded its declared bound at runtime."""


# ---------------------------------------------------------------------------
# Lyapunov weight.

# Quintic Hermite basis on [0, 1]: value, first and second derivative
# at each end.
_H = (
    lambda u: 1.0 - 10.0 * u**3 + 15.0 * u**4 - 6.0 * u**5,
    lambda u: u - 6.0 * u**3 + 8.0 * u**4 - 3.0 * u**5,
    lambda u: 0.5 * (u**2 - 3.0 * u**3 + 3.0 * u**4 - u**5),
    lambda u: 10.0 * u**3 - 15.0 * u**4 + 6.0 * u**5,
    lambda u: -4.0 * u**3 + 7.0 * u**4 - 3.0 * u**5,
    lambda u: 0.5 * (u**3 - 2.0 * u**4 + u**5),
)


@dataclass(frozen=True)
class WeightFunction:
    """Radial weight V(x) = exp(kappa |x|) outside the ball of radius M,
    a constant plateau near the origin, and a C^2 quintic blend on
    [max(M-1, 0), M] joining the two.  V >= 1 everywhere and V(0) is
    finite.
    """

    r: float
    M: float
    kappa: float = field(init=False)
    blend_start: float = field(init=False)

    def __post_init__(self):
        if self.r <= 0 or self.M <= 0:
            raise ValueError("r and M must be positive")
        object.__setattr__(self, "kappa", min(self.r / 4.0, 1.0))
        object.__setattr__(self, "blend_start", max(self.M - 1.0, 0.0))

    def radial(self, s):
        """V as a function of the radius s = |x| (array friendly)."""
        s = np.asarray(s, dtype=float)
        k, m, s0 = self.kappa, self.M, self.blend_start
        out = np.empty_like(s)
        plateau = s <= s0
        outer = s >= m
        mid = ~plateau & ~outer
        out[plateau] = math.exp(k * s0)
        out[outer] = np.exp(k * s[outer])
        if mid.any():
            w = m - s0
            u = (s[mid] - s0) / w
            v0 = math.exp(k * s0)
            v1 = math.exp(k * m)
            out[mid] = (
                v0 * _H[0](u)
                + v1 * _H[3](u)
                + w * (k * v1) * _H[4](u)
                + w * w * (k * k * v1) * _H[5](u)
            )
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            return float(self.radial(abs(float(x))))
        if x.ndim == 1:
            return self.radial(np.abs(x))
        return self.radial(np.linalg.norm(x, axis=-1))


def make_weight_function(r: float, M: float) -> WeightFunction:
    return WeightFunction(r, M)


# ---------------------------------------------------------------------------
# Model spec and shipped coefficients.


@dataclass(frozen=True)
class SMVESpec:
    """Coefficients and constants of one mean-field model.

    ``b1`` maps positions (n, d) to drifts (n, d); ``b2`` additionally
    receives the previous-step empirical measure and must stay within
    ``bound_D`` in Euclidean norm (checked at runtime).  ``lipschitz_L``
    is the constant used in perturbation bounds; for the shipped
    coefficients it is derived by hand, not fitted.
    """

    dimension: int
    b1: Callable[[np.ndarray], np.ndarray]
    b2: Callable[[np.ndarray, EmpiricalMeasure], np.ndarray] | None
    epsilon: float
    bound_D: float
    lipschitz_L: float
    label: str = "smve"

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be at least 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.bound_D < 0 or self.lipschitz_L < 0:
            raise ValueError("bound_D and lipschitz_L must be nonnegative")
        if self.epsilon > 0 and self.b2 is None:
            raise ValueError("epsilon > 0 requires an interaction term")

    def drift(self, positions: np.ndarray, law: EmpiricalMeasure) -> np.ndarray:
        total = self.b1(positions)
        if self.b2 is not None and self.epsilon > 0:
            inter = self.b2(positions, law)
            worst = float(np.linalg.norm(inter, axis=1).max())
            if worst > self.bound_D + 1e-9:
                raise DriftBoundError(
                    f"{self.label}: |b2| = {worst:.17g} exceeds D = {self.bound_D:g}"
                )
            total = total + self.epsilon * inter
        return total


def ou_drift() -> Callable[[np.ndarray], np.ndarray]:
    """b1(x) = -x; its invariant law in one dimension is N(0, 1/2)."""
    return lambda x: -x


def radial_confinement_drift(r: float, M: float) -> Callable[[np.ndarray], np.ndarray]:
    """b1(x) = -r x / max(|x|, M): linear pull inside the M-ball, and
    <b1(x), x> = -r |x| exactly outside it."""
    if r <= 0 or M <= 0:
        raise ValueError("r and M must be positive")

    def b1(x: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        return -r * x / np.maximum(norms, M)

    return b1


def mean_attraction_coupling(D: float) -> Callable[[np.ndarray, EmpiricalMeasure], np.ndarray]:
    """b2(x, mu) = (D / sqrt(d)) tanh(mean(mu) - x), bounded by D in
    Euclidean norm for any dimension."""
    if D <= 0:
        raise ValueError("D must be positive")

    def b2(x: np.ndarray, law: EmpiricalMeasure) -> np.ndarray:
        center = law.mean()
        return (D / math.sqrt(x.shape[1])) * np.tanh(center[None, :] - x)

    return b2


def make_ou_spec(dimension: int = 1) -> SMVESpec:
    return SMVESpec(dimension, ou_drift(), None, 0.0, 0.0, 0.0, "ou")


def make_vh_spec(
    r: float = 1.0,
    M: float = 1.0,
    D: float = 1.0,
    epsilon: float = 0.05,
    dimension: int = 1,
) -> SMVESpec:
    """Radially confined drift plus bounded mean-attraction, with the
    hand Lipschitz constant L = D of the interaction."""
    return SMVESpec(
        dimension,
        radial_confinement_drift(r, M),
        mean_attraction_coupling(D),
        epsilon,
        D,
        D,
        f"vh(r={r:g},M={M:g},D={D:g},eps={epsilon:g})",
    )


# ---------------------------------------------------------------------------
# Initial conditions.


def point_mass_sampler(x0) -> Callable:
    """All particles start at x0."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    def sample(rng: Generator, n: int, d: int) -> np.ndarray:
        if x0.size != d:
            raise ValueError("x0 dimension mismatch")
        return np.tile(x0, (n, 1))

    return sample


def gaussian_sampler(mean, std: float) -> Callable:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if std <= 0:
        raise ValueError("std must be positive")

    def sample(rng: Generator, n: int, d: int) -> np.ndarray:
        if mean.size != d:
            raise ValueError("mean dimension mismatch")
        return mean[None, :] + std * rng.standard_normal((n, d))

    return sample


def two_point_mixture_sampler(x0, x1, weight0: float) -> Callable:
    """Deterministic split: round(weight0 * n) particles at x0, the rest
    at x1.  Keeps the initial total variation against a point mass at
    exactly 2 (1 - weight0)."""
    if not 0.0 <= weight0 <= 1.0:
        raise ValueError("weight0 must lie in [0, 1]")
    a = np.atleast_1d(np.asarray(x0, dtype=float))
    b = np.atleast_1d(np.asarray(x1, dtype=float))

    def sample(rng: Generator, n: int, d: int) -> np.ndarray:
        if a.size != d or b.size != d:
            raise ValueError("point dimension mismatch")
        n0 = int(round(weight0 * n))
        out = np.empty((n, d))
        out[:n0] = a
        out[n0:] = b
        return out

    return sample


# ---------------------------------------------------------------------------
# Drift condition check.


@dataclass(frozen=True)
class VHReport:
    passed: bool
    worst_margin: float
    worst_point: list
    n_points: int
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "worst_point": self.worst_point,
            "n_points": self.n_points,
            "tolerance": self.tolerance,
        }


def verify_vh(
    b1: Callable[[np.ndarray], np.ndarray],
    r: float,
    M: float,
    sample_points: np.ndarray | None = None,
    dimension: int = 1,
    tol: float = 1e-9,
) -> VHReport:
    """Check <b1(x), x> <= -r |x| on sample points with |x| in [M, 10M].

    The default sample is a signed radial grid (one dimension) or random
    directions at graded radii (higher dimensions); pass explicit points
    to probe specific regions.  The worst point is named in the report.
    """
    if r <= 0 or M <= 0:
        raise ValueError("r and M must be positive")
    if sample_points is None:
        radii = np.linspace(M, 10.0 * M, 200)
        if dimension == 1:
            pts = np.concatenate([radii, -radii])[:, None]
        else:
            rng = Generator(Philox(key=np.array([17, 0], dtype=np.uint64)))
            dirs = rng.standard_normal((radii.size * 4, dimension))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            pts = dirs * np.tile(radii, 4)[:, None]
    else:
        pts = np.asarray(sample_points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        norms = np.linalg.norm(pts, axis=1)
        if np.any(norms < M - 1e-12):
            raise ValueError("sample points must have |x| >= M")

    drift = b1(pts)
    inner = (drift * pts).sum(axis=1)
    margins = inner + r * np.linalg.norm(pts, axis=1)
    worst = int(np.argmax(margins))
    return VHReport(
        passed=bool(margins[worst] <= tol),
        worst_margin=float(margins[worst]),
        worst_point=pts[worst].tolist(),
        n_points=int(pts.shape[0]),
        tolerance=tol,
    )


# ---------------------------------------------------------------------------
# Euler scheme.


@dataclass(frozen=True)
class ParticleEnsemble:
    """Snapshot of the particle system.

    ``stream_offset`` is the Euler step index at which the snapshot was
    taken; together with ``seed`` it pins down the noise stream exactly.
    """

    positions: np.ndarray
    time: float
    step_size: float
    seed: int
    stream_offset: int

    def __post_init__(self):
        pts = np.asarray(self.positions, dtype=float)
        if pts.ndim != 2:
            raise ValueError("positions must be (n, d)")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "positions", pts)

    @property
    def n_particles(self) -> int:
        return int(self.positions.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.positions.shape[1])

    def empirical(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.positions)


def _stream(seed: int, tag: int) -> Generator:
    # Counter-based stream: the (seed, tag) pair fully determines the
    # block of draws, independent of how work is scheduled.
    key = np.array([seed % 2**64, tag % 2**64], dtype=np.uint64)
    return Generator(Philox(key=key))


def simulate(
    spec: SMVESpec,
    initial_sampler: Callable,
    n_particles: int,
    step_size: float,
    horizon: float,
    seed: int,
    snapshot_times: Sequence[float] | None = None,
) -> list[ParticleEnsemble]:
    """Synchronous Euler update with the previous step's empirical
    measure:

        X_i <- X_i + (b1(X_i) + eps b2(X_i, mu_prev)) h + sqrt(h) xi_i.

    Noise for step k is drawn from a counter-based stream keyed by
    (seed, k + 1), so runs are bit-reproducible and independent of any
    worker layout; initial positions use the (seed, 0) stream.  Raises
    SimulationBlowUp if positions leave the finite range.
    """
    if n_particles < 100:
        raise ValueError("need at least 100 particles")
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    if horizon < step_size:
        raise ValueError("horizon must cover at least one step")
    n_steps = int(round(horizon / step_size))
    if snapshot_times is None:
        snapshot_times = [0.0, horizon]
    snap_steps = sorted({int(round(t / step_size)) for t in snapshot_times})
    if snap_steps[0] < 0 or snap_steps[-1] > n_steps:
        raise ValueError("snapshot times must lie within [0, horizon]")

    d = spec.dimension
    x = np.asarray(initial_sampler(_stream(seed, 0), n_particles, d), dtype=float)
    if x.shape != (n_particles, d):
        raise ValueError("initial sampler returned the wrong shape")

    snapshots = []
    snap_set = set(snap_steps)
    if 0 in snap_set:
        snapshots.append(ParticleEnsemble(x, 0.0, step_size, seed, 0))

    sqrt_h = math.sqrt(step_size)
    for k in range(n_steps):
        law = EmpiricalMeasure(x)
        noise = _stream(seed, k + 1).standard_normal((n_particles, d))
        x = x + spec.drift(x, law) * step_size + sqrt_h * noise
        if not np.all(np.isfinite(x)):
            raise SimulationBlowUp(f"{spec.label}: non-finite position at step {k + 1}")
        if (k + 1) in snap_set:
            snapshots.append(
                ParticleEnsemble(x, (k + 1) * step_size, step_size, seed, k + 1)
            )
    return snapshots


# ---------------------------------------------------------------------------
# Perturbation threshold and exponential moment.


def epsilon_zero(alpha_local: float, r: float, D: float) -> float:
    """Largest interaction strength the small-perturbation regime
    tolerates: min(alpha_local, r) / (2 D)."""
    if not 0.0 < alpha_local <= 1.0:
        raise ValueError("alpha_local must lie in (0, 1]")
    if r <= 0 or D <= 0:
        raise ValueError("r and D must be positive")
    return min(alpha_local / (2.0 * D), r / (2.0 * D))


@dataclass(frozen=True)
class IntegralEstimate:
    value: float
    std_error: float | None
    method: str
    flagged_dimension: bool = False

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "std_error": self.std_error,
            "method": self.method,
            "flagged_dimension": self.flagged_dimension,
        }


def integral_I(source, n_samples: int = 100_000, seed: int = 0) -> IntegralEstimate:
    """Exponential moment of an initial law: integral of e^x.

    Accepts either an iterable of (location, weight) atoms (evaluated
    exactly) or a sampler callable (Monte Carlo with a standard error).
    In dimension above one the integrand becomes e^|x| and the result is
    flagged, since the one-dimensional moment has no canonical
    multivariate counterpart.
    """
    if callable(source):
        rng = _stream(seed, 0)
        probe = np.asarray(source(rng, 2, 1), dtype=float)
        d = probe.shape[1] if probe.ndim == 2 else 1
        draws = np.asarray(source(_stream(seed, 1), n_samples, d), dtype=float)
        if draws.ndim == 1:
            draws = draws[:, None]
        flagged = d > 1
        vals = np.exp(np.linalg.norm(draws, axis=1)) if flagged else np.exp(draws[:, 0])
        value = float(vals.mean())
        if not math.isfinite(value):
            return IntegralEstimate(math.inf, None, "monte-carlo", flagged)
        se = float(vals.std(ddof=1) / math.sqrt(n_samples))
        return IntegralEstimate(value, se, "monte-carlo", flagged)

    atoms = list(source)
    total_w = 0.0
    acc = 0.0
    for loc, w in atoms:
        if w < 0:
            raise ValueError("atom weights must be nonnegative")
        total_w += w
        try:
            term = math.exp(float(loc))
        except OverflowError:
            term = math.inf
        acc += w * term
    if abs(total_w - 1.0) > 1e-9:
        raise ValueError(f"atom weights sum to {total_w:.17g}, not 1")
    value = acc if math.isfinite(acc) else math.inf
    return IntegralEstimate(value, None, "exact-atoms", False)
