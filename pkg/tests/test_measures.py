"""Distances and measure containers, checked against hand-computed and
brute-force oracles."""

import itertools

import numpy as np
import pytest

from nlmarkov.measures import (
    DiscreteMeasure,
    EmpiricalMeasure,
    HistogramDensity,
    histogram_of,
    sub_measure_eta,
    tv_between_histograms,
    tv_distance,
    wasserstein2_truncated,
    weighted_tv_distance,
)


# ---------------------------------------------------------------------------
# DiscreteMeasure


def test_discrete_measure_accepts_probability_vector():
    mu = DiscreteMeasure(np.array([0.3, 0.7]))
    assert mu.size == 2
    assert not mu.weights.flags.writeable


def test_discrete_measure_rejects_bad_input():
    with pytest.raises(ValueError):
        DiscreteMeasure(np.array([0.5, 0.6]))  # sums to 1.1
    with pytest.raises(ValueError):
        DiscreteMeasure(np.array([-0.1, 1.1]))
    with pytest.raises(ValueError):
        DiscreteMeasure(np.array([np.nan, 1.0]))
    with pytest.raises(ValueError):
        DiscreteMeasure(np.array([[0.5, 0.5]]))  # not 1-d
    with pytest.raises(ValueError):
        DiscreteMeasure(np.array([]))


def test_discrete_measure_constructors():
    d = DiscreteMeasure.dirac(2, 4)
    assert d.weights.tolist() == [0.0, 0.0, 1.0, 0.0]
    u = DiscreteMeasure.uniform(5)
    assert np.allclose(u.weights, 0.2)
    t = DiscreteMeasure.two_point(0.3)
    assert t.weights.tolist() == [0.3, 0.7]
    with pytest.raises(ValueError):
        DiscreteMeasure.dirac(4, 4)
    with pytest.raises(ValueError):
        DiscreteMeasure.two_point(1.5)


def test_discrete_measure_as_array():
    mu = DiscreteMeasure.two_point(0.25)
    assert np.asarray(mu).tolist() == [0.25, 0.75]


# ---------------------------------------------------------------------------
# Total variation


def test_tv_distance_hand_value():
    # |0.3-0.5| + |0.7-0.5| = 0.4
    assert tv_distance([0.3, 0.7], [0.5, 0.5]) == pytest.approx(0.4, abs=1e-15)


def test_tv_distance_range():
    assert tv_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(2.0)
    assert tv_distance([0.4, 0.6], [0.4, 0.6]) == 0.0


def test_tv_distance_dimension_mismatch():
    with pytest.raises(ValueError):
        tv_distance([0.5, 0.5], [1.0 / 3] * 3)


def test_tv_is_a_metric_on_random_triples():
    rng = np.random.default_rng(7)
    for _ in range(50):
        p, q, r = (rng.dirichlet(np.ones(4)) for _ in range(3))
        assert tv_distance(p, q) == pytest.approx(tv_distance(q, p))
        assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12


def test_weighted_tv_hand_value():
    # 2*0.2 + 10*0.2 = 2.4
    got = weighted_tv_distance([0.3, 0.7], [0.5, 0.5], [2.0, 10.0])
    assert got == pytest.approx(2.4, abs=1e-15)


def test_weighted_tv_with_unit_weight_is_tv():
    rng = np.random.default_rng(3)
    p, q = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
    assert weighted_tv_distance(p, q, np.ones(5)) == pytest.approx(tv_distance(p, q))


def test_weighted_tv_rejects_negative_weight():
    with pytest.raises(ValueError):
        weighted_tv_distance([0.5, 0.5], [0.4, 0.6], [1.0, -1.0])


def test_sub_measure_eta():
    eta = sub_measure_eta([0.3, 0.7], [0.5, 0.5])
    assert eta.tolist() == [0.3, 0.5]
    # overlap mass = 1 - tv/2
    assert eta.sum() == pytest.approx(1.0 - 0.4 / 2.0)


def test_sub_measure_eta_overlap_identity_random():
    rng = np.random.default_rng(11)
    for _ in range(30):
        p, q = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6))
        assert sub_measure_eta(p, q).sum() == pytest.approx(
            1.0 - tv_distance(p, q) / 2.0
        )


# ---------------------------------------------------------------------------
# Truncated Wasserstein-2


def test_w2_equal_counts_monotone_hand_value():
    a = EmpiricalMeasure(np.array([0.0, 1.0, 2.0]))
    b = EmpiricalMeasure(np.array([0.5, 1.5, 2.5]))
    # every sorted pair is 0.5 apart
    assert wasserstein2_truncated(a, b) == pytest.approx(0.5)


def test_w2_cost_truncation_caps_at_one():
    a = EmpiricalMeasure(np.array([0.0]))
    b = EmpiricalMeasure(np.array([50.0]))
    assert wasserstein2_truncated(a, b) == pytest.approx(1.0)


def test_w2_unequal_counts_quantile_oracle():
    # F_a^{-1} is 0 on (0, 1/2] and 1 after; F_b^{-1} is 0 everywhere,
    # so the quantile cost is 1/2 * 1^2.
    a = EmpiricalMeasure(np.array([0.0, 1.0]))
    b = EmpiricalMeasure(np.array([0.0]))
    assert wasserstein2_truncated(a, b) == pytest.approx(np.sqrt(0.5))


def test_w2_exact_assignment_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(2, 7))
        a = rng.normal(size=(n, 2))
        b = rng.normal(size=(n, 2))
        cost = np.minimum(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2), 1.0)
        best = min(
            cost[np.arange(n), list(perm)].mean()
            for perm in itertools.permutations(range(n))
        )
        got = wasserstein2_truncated(
            EmpiricalMeasure(a), EmpiricalMeasure(b), method="exact_assignment"
        )
        assert got == pytest.approx(np.sqrt(best), abs=1e-12)


def test_w2_monotone_upper_bounds_exact_in_one_dimension():
    rng = np.random.default_rng(17)
    for _ in range(10):
        n = int(rng.integers(2, 12))
        a = EmpiricalMeasure(rng.normal(size=n))
        b = EmpiricalMeasure(rng.normal(size=n) + 1.0)
        mono = wasserstein2_truncated(a, b, method="monotone_upper_bound")
        exact = wasserstein2_truncated(a, b, method="exact_assignment")
        assert mono >= exact - 1e-12


def test_w2_method_aliases_and_errors():
    a = EmpiricalMeasure(np.array([0.0, 1.0]))
    b = EmpiricalMeasure(np.array([0.3, 0.8]))
    assert wasserstein2_truncated(a, b, "monotone") == wasserstein2_truncated(
        a, b, "monotone_upper_bound"
    )
    assert wasserstein2_truncated(a, b, "exact") == wasserstein2_truncated(
        a, b, "exact_assignment"
    )
    with pytest.raises(ValueError):
        wasserstein2_truncated(a, b, "sinkhorn")


def test_w2_monotone_is_one_dimensional_only():
    a = EmpiricalMeasure(np.zeros((4, 2)))
    b = EmpiricalMeasure(np.ones((4, 2)))
    with pytest.raises(ValueError):
        wasserstein2_truncated(a, b, "monotone")
    # exact handles d = 2 fine
    assert wasserstein2_truncated(a, b, "exact") == pytest.approx(1.0)


def test_w2_exact_requires_equal_small_clouds():
    with pytest.raises(ValueError):
        wasserstein2_truncated(
            EmpiricalMeasure(np.zeros(3)), EmpiricalMeasure(np.zeros(2)), "exact"
        )
    big = EmpiricalMeasure(np.zeros(257))
    with pytest.raises(ValueError):
        wasserstein2_truncated(big, big, "exact")


# ---------------------------------------------------------------------------
# Histograms


def test_empirical_measure_shapes():
    e = EmpiricalMeasure(np.array([1.0, 2.0, 3.0]))
    assert e.points.shape == (3, 1)
    assert e.n_samples == 3 and e.dimension == 1
    assert e.mean()[0] == pytest.approx(2.0)
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.array([np.inf]))
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.empty((0, 1)))


def test_histogram_basic_binning():
    e = EmpiricalMeasure(np.array([0.1, 0.1, 0.9, 1.4]))
    h = histogram_of(e, (0.0, 1.0), 2)
    assert h.masses.tolist() == [0.5, 0.25]
    assert h.overflow == pytest.approx(0.25)
    assert h.masses.sum() + h.overflow == pytest.approx(1.0)


def test_histogram_upper_edge_is_overflow():
    # bins are half-open [l, u); the upper bound itself is outside
    h = histogram_of(EmpiricalMeasure(np.array([1.0])), (0.0, 1.0), 4)
    assert h.overflow == 1.0
    assert h.masses.sum() == 0.0
    h2 = histogram_of(EmpiricalMeasure(np.array([0.0])), (0.0, 1.0), 4)
    assert h2.masses[0] == 1.0 and h2.overflow == 0.0


def test_histogram_two_dimensional():
    pts = np.array([[0.5, 0.5], [1.5, 0.5], [2.5, 2.5]])
    h = histogram_of(EmpiricalMeasure(pts), (0.0, 2.0), 2)
    assert h.masses.shape == (2, 2)
    assert h.masses[0, 0] == pytest.approx(1 / 3)
    assert h.masses[1, 0] == pytest.approx(1 / 3)
    assert h.overflow == pytest.approx(1 / 3)


def test_histogram_density_validates_mass():
    with pytest.raises(ValueError):
        HistogramDensity(0.0, 1.0, (2,), np.array([0.5, 0.4]), 0.0)
    with pytest.raises(ValueError):
        HistogramDensity(0.0, 1.0, (2,), np.array([0.5, 0.5]), -0.1)
    with pytest.raises(ValueError):
        HistogramDensity(1.0, 0.0, (2,), np.array([0.5, 0.5]), 0.0)


def test_tv_between_histograms_singular_clouds():
    lo, hi = 0.0, 1.0
    a = histogram_of(EmpiricalMeasure(np.full(10, 0.1)), (lo, hi), 2)
    b = histogram_of(EmpiricalMeasure(np.full(10, 0.9)), (lo, hi), 2)
    assert tv_between_histograms(a, b) == pytest.approx(2.0)
    assert tv_between_histograms(a, a) == 0.0


def test_tv_between_histograms_counts_overflow():
    a = histogram_of(EmpiricalMeasure(np.array([0.5, 0.5])), (0.0, 1.0), 1)
    b = histogram_of(EmpiricalMeasure(np.array([0.5, 9.0])), (0.0, 1.0), 1)
    # half the mass moved out of the box
    assert tv_between_histograms(a, b) == pytest.approx(1.0)


def test_tv_between_histograms_requires_same_binning():
    a = histogram_of(EmpiricalMeasure(np.array([0.5])), (0.0, 1.0), 2)
    b = histogram_of(EmpiricalMeasure(np.array([0.5])), (0.0, 1.0), 4)
    with pytest.raises(ValueError):
        tv_between_histograms(a, b)
