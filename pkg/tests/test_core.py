import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from product_chain import (
    GeneratorFamily,
    Measure,
    RateMatrix,
    StateSpace,
    scale_family,
    solve_stationary,
    total_variation,
    validate_dissipative,
    verify_stationary,
)
from product_chain.errors import (
    DimensionMismatch,
    NonPositiveMeasure,
    NonPositiveScale,
    NotStationary,
    Reducible,
)
from product_chain.queueing import QueueingParams, build_A_family, build_Q_family

from helpers import random_generator


def rm(rows):
    a = np.array(rows, dtype=float)
    return RateMatrix(StateSpace.of_size(a.shape[0]), a)


def test_state_space_rejects_duplicates():
    with pytest.raises(ValueError):
        StateSpace(("a", "a"))
    assert StateSpace(("a", "b")).index("b") == 1


def test_rate_matrix_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        RateMatrix(StateSpace.of_size(3), np.zeros((2, 2)))


def test_entries_are_read_only():
    m = rm([[-1, 1], [2, -2]])
    with pytest.raises(ValueError):
        m.entries[0, 0] = 5


class TestValidateDissipative:
    def test_valid(self):
        assert validate_dissipative(rm([[-1, 1], [2, -2]])).ok

    def test_broken_row_reported(self):
        report = validate_dissipative(rm([[-1, 1], [2, -1]]))
        assert not report.ok
        assert report.rows("row_sum") == [1]
        assert report.violations[0].value == pytest.approx(1.0)

    @pytest.mark.parametrize("n", [1, 3, 7])
    def test_zero_matrix(self, n):
        assert validate_dissipative(rm(np.zeros((n, n)))).ok

    def test_sign_violations(self):
        report = validate_dissipative(rm([[1, -1], [0, 0]]))
        kinds = {v.kind for v in report.violations}
        assert {"negative_off_diagonal", "positive_diagonal"} <= kinds

    def test_non_finite(self):
        report = validate_dissipative(rm([[-np.inf, np.inf], [0, 0]]))
        assert "non_finite" in {v.kind for v in report.violations}


class TestVerifyStationary:
    def test_two_state_balance(self):
        m = rm([[-1, 1], [3, -3]])
        assert verify_stationary(m, Measure(m.space, [3, 1])).ok

    def test_wrong_measure_fails_at_both_states(self):
        m = rm([[-1, 1], [3, -3]])
        report = verify_stationary(m, Measure(m.space, [1, 1]))
        assert sorted(report.rows()) == [0, 1]

    def test_queueing_member(self):
        qf = build_Q_family(QueueingParams(3, 2))
        rates, mu = qf.members[0]  # mu_0 = 0.5
        assert verify_stationary(rates, mu).ok

    def test_size_mismatch(self):
        m = rm([[-1, 1], [3, -3]])
        with pytest.raises(DimensionMismatch):
            verify_stationary(m, Measure(StateSpace.of_size(3), [1, 1, 1]))

    def test_non_positive_measure(self):
        m = rm([[-1, 1], [3, -3]])
        with pytest.raises(NonPositiveMeasure):
            verify_stationary(m, Measure(m.space, [1, 0]))


class TestSolveStationary:
    def test_two_state(self):
        mu = solve_stationary(rm([[-1, 1], [3, -3]]))
        np.testing.assert_allclose(np.asarray(mu.weights, float), [0.75, 0.25], rtol=1e-14)

    def test_ring(self):
        a = np.zeros((4, 4))
        for s in range(4):
            a[s, (s + 1) % 4] = a[s, (s - 1) % 4] = 1
            a[s, s] = -2
        np.testing.assert_allclose(np.asarray(solve_stationary(rm(a)).weights, float), 0.25, rtol=1e-14)

    def test_queueing_unit_efficiency(self):
        qf = build_Q_family(QueueingParams(2, 2))
        # mu_1 = 0.5 + 1/2 = 1
        np.testing.assert_allclose(np.asarray(solve_stationary(qf.members[1][0]).weights, float), 1 / 3, rtol=1e-14)

    def test_reducible(self):
        a = np.zeros((4, 4))
        a[0, 1], a[1, 0], a[2, 3], a[3, 2] = 1, 1, 1, 1
        np.fill_diagonal(a, -a.sum(axis=1))
        with pytest.raises(Reducible):
            solve_stationary(rm(a))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    def test_random_generators_balance(self, n, seed):
        m = rm(random_generator(np.random.default_rng(seed), n, density=0.6))
        mu = solve_stationary(m)
        assert mu.is_positive
        assert verify_stationary(m, mu).ok


class TestScaling:
    def test_identity(self):
        f = build_A_family(QueueingParams(2, 3))
        g = scale_family(f, 1)
        assert np.array_equal(g.rates, f.rates)

    def test_two_state_doubled(self):
        sp = StateSpace.of_size(2)
        f = GeneratorFamily.from_matrices(StateSpace.of_size(1), sp, [np.array([[-1.0, 1.0], [3.0, -3.0]])])
        g = scale_family(f, 2)
        np.testing.assert_array_equal(np.asarray(g.rates[0], float), [[-2, 2], [6, -6]])
        np.testing.assert_allclose(np.asarray(g.weights[0], float), [0.75, 0.25], rtol=1e-15)

    def test_queueing_halved_still_stationary(self):
        f = build_A_family(QueueingParams(3, 10))
        g = scale_family(f, 0.5)
        assert np.array_equal(g.rates, f.rates * 0.5)
        for rates, mu in g.members:
            assert verify_stationary(rates, mu).ok

    @pytest.mark.parametrize("r", [0, -1])
    def test_non_positive_scale(self, r):
        with pytest.raises(NonPositiveScale):
            scale_family(build_A_family(QueueingParams(2, 3)), r)


def test_family_rejects_wrong_measure():
    sp = StateSpace.of_size(2)
    a = np.array([[-1.0, 1.0], [3.0, -3.0]])
    with pytest.raises(NotStationary):
        GeneratorFamily(StateSpace.of_size(1), ((RateMatrix(sp, a), Measure(sp, [1, 1])),))


@pytest.mark.parametrize(
    "p, q, expected",
    [([1, 0], [0, 1], 1.0), ([2, 2], [1, 1], 0.0), ([3, 1], [1, 1], 0.25)],
)
def test_total_variation(p, q, expected):
    assert total_variation(p, q) == pytest.approx(expected)
