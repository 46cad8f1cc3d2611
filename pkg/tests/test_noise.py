import numpy as np
import pytest
from scipy import stats

from ldpspde.errors import DomainError, ParameterError
from ldpspde.noise import (JumpMeasureSpec, RngStream, compensator, sample_controlled_prm, sample_prm_arrays,
                           sample_wiener_increments)


def test_rng_stream_reproducible_and_distinct():
    a = RngStream(3, 1).generator().standard_normal(5)
    b = RngStream(3, 1).generator().standard_normal(5)
    c = RngStream(3, 2).generator().standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert RngStream(3).child(7) == RngStream(3, 7)


def test_wiener_increment_statistics():
    gen = np.random.default_rng(0)
    draws = np.stack([sample_wiener_increments(3, 0.01, gen).coeffs for _ in range(20000)])
    np.testing.assert_allclose(draws.var(axis=0), 0.01, rtol=0.05)
    assert abs(stats.skew(draws[:, 0])) < 0.1
    with pytest.raises(ParameterError):
        sample_wiener_increments(3, 0.0, gen)


def test_measure_constructors():
    nu = JumpMeasureSpec.finite([-1, 1], [0.5, 1.5])
    assert nu.total_mass == 2.0 and nu.n_cells == 2
    np.testing.assert_array_equal(nu.cell_of([1, -1]), [1, 0])
    u = JumpMeasureSpec.interval(0, 2, rate=3.0, n_cells=4)
    np.testing.assert_allclose(u.cell_masses, 0.75)
    with pytest.raises(DomainError):
        u.cell_of([2.5])
    with pytest.raises(ParameterError):
        JumpMeasureSpec.finite([1, 2], [1])
    with pytest.raises(ParameterError):
        JumpMeasureSpec.interval(1, 0)
    with pytest.raises(ParameterError):
        JumpMeasureSpec.interval(0, 1, density=lambda z: z)


def test_interval_density_marks():
    nu = JumpMeasureSpec.interval(0, 1, density=lambda z: 2 * z, density_bound=2.0, n_cells=4)
    assert nu.total_mass == pytest.approx(1.0, rel=1e-12)
    z, _ = nu.sample_marks(np.random.default_rng(1), 20000)
    assert stats.kstest(z, lambda x: np.clip(x, 0, 1) ** 2).pvalue > 1e-3


def test_zero_intensity_and_compensator_examples():
    nu = JumpMeasureSpec.finite([1.0], [2.0])
    assert sample_controlled_prm(nu, 0.0, 1.0, 1.0, 0) == []
    assert compensator(nu, 1.0, 1.0, (0, 0)) == 0.0
    assert compensator(nu, 1.5, 2.0, (0.25, 1.0)) == pytest.approx(2.0 * 1.5 * 2.0 * 0.75)
    times = np.array([0, 0.5, 1.0])
    table = np.array([[1.0], [3.0]])
    assert compensator(nu, table, 1.0, (0.25, 0.75), times=times) == pytest.approx(2 * (0.25 + 0.75))
    assert compensator(nu, lambda t, c: 1 + t, 1.0, (0, 1)) == pytest.approx(2 * 1.5)
    with pytest.raises(ParameterError):
        sample_controlled_prm(nu, 1.0, 1.0, 0.0, 0)
    with pytest.raises(DomainError):
        sample_controlled_prm(nu, -1.0, 1.0, 1.0, 0)


def test_prm_sorted_and_reproducible():
    nu = JumpMeasureSpec.interval(-1, 1, rate=5.0)
    a = sample_controlled_prm(nu, 2.0, 3.0, 1.0, RngStream(9, 4))
    b = sample_controlled_prm(nu, 2.0, 3.0, 1.0, RngStream(9, 4))
    assert a == b and len(a) > 0
    assert all(x.time <= y.time for x, y in zip(a, a[1:]))
    assert all(-1 <= r.mark <= 1 and 0 < r.time <= 1 for r in a)


def test_callable_intensity_requires_bound():
    nu = JumpMeasureSpec.finite([0.0], [1.0])
    with pytest.raises(ParameterError):
        sample_controlled_prm(nu, lambda t, c: np.ones_like(t), 1.0, 1.0, 0)
    with pytest.raises(ParameterError):
        sample_controlled_prm(nu, lambda t, c: 3 * np.ones_like(t), 5.0, 1.0, 0, bound=1.0)


def test_thinned_counts_follow_time_varying_table():
    nu = JumpMeasureSpec.finite([0.0, 1.0], [1.0, 2.0])
    times = np.array([0.0, 0.5, 1.0])
    table = np.array([[2.0, 0.0], [0.5, 1.0]])
    gen = np.random.default_rng(11)
    counts = np.zeros((4000, 2, 2))
    for i in range(4000):
        t, _, c = sample_prm_arrays(nu, table, 4.0, 1.0, gen, times=times)
        np.add.at(counts[i], (np.searchsorted(times, t, side="right") - 1, c), 1)
    mean = counts.mean(axis=0)
    expected = 4.0 * 0.5 * table * np.array([1.0, 2.0])
    np.testing.assert_allclose(mean, expected, atol=0.1)


def test_compensated_measure_is_centred():
    """The compensated count has mean zero and variance equal to the compensator."""
    nu = JumpMeasureSpec.interval(0, 1, rate=3.0)
    gen = np.random.default_rng(5)
    comp = compensator(nu, 1.5, 2.0, (0, 1))
    m = np.array([sample_prm_arrays(nu, 1.5, 2.0, 1.0, gen)[0].size for _ in range(20000)]) - comp
    assert abs(m.mean()) < 4 * np.sqrt(comp / 20000)
    assert m.var() == pytest.approx(comp, rel=0.05)
