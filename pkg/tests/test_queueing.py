from fractions import Fraction

import numpy as np
import pytest

from product_chain import Mode, QueueingParams, build_A_family, build_Q_family, build_queueing_instance
from product_chain import validate_dissipative, verify_stationary
from product_chain.queueing import MAX_M


def f64(a):
    return np.asarray(a, dtype=float)


class TestParams:
    @pytest.mark.parametrize("N, M", [(1, 5), (3, 1), (7, 10), (2, MAX_M + 1)])
    def test_rejected(self, N, M):
        with pytest.raises(ValueError):
            QueueingParams(N, M)

    def test_efficiency_grid(self):
        mus = QueueingParams(2, 4).mus
        assert mus[0] == 0.5 and mus[-1] == 1.5
        np.testing.assert_allclose(f64(np.diff(mus)), 0.25)


class TestQFamily:
    def test_unit_efficiency_uniform(self):
        qf = build_Q_family(QueueingParams(2, 2))
        np.testing.assert_allclose(f64(qf.weights[1]), 1 / 3, rtol=1e-15)

    def test_half_efficiency(self):
        qf = build_Q_family(QueueingParams(2, 2))
        np.testing.assert_allclose(f64(qf.weights[0]), [1 / 7, 2 / 7, 4 / 7], rtol=1e-15)

    def test_boundary_diagonals(self):
        p = QueueingParams(3, 4)
        Q = build_Q_family(p).rates
        assert np.all(Q[:, 0, 0] == -1)
        np.testing.assert_array_equal(Q[:, 3, 3], -p.mus)

    def test_members_stationary(self):
        for rates, mu in build_Q_family(QueueingParams(4, 20)).members:
            assert verify_stationary(rates, mu).ok


class TestAFamily:
    def test_unit_load_uniform(self):
        af = build_A_family(QueueingParams(2, 6))
        np.testing.assert_allclose(f64(af.weights[1]), 1 / 7, rtol=1e-15)

    def test_geometric_two(self):
        af = build_A_family(QueueingParams(2, 3))
        np.testing.assert_allclose(f64(af.weights[2]), np.array([1, 2, 4, 8]) / 15, rtol=1e-15)

    def test_idle_member(self):
        # up-rate 1/M^2 = 1/4, down-rate 1 -> weights proportional to 4^-j
        af = build_A_family(QueueingParams(2, 2))
        expected = np.array([Fraction(1), Fraction(1, 4), Fraction(1, 16)])
        expected = expected / expected.sum()
        np.testing.assert_allclose(f64(af.weights[0]), expected.astype(float), rtol=1e-15)

    def test_idle_member_other_vector_not_stationary(self):
        af = build_A_family(QueueingParams(2, 2))
        from product_chain import Measure

        wrong = Measure(af.space, [1, 1 / 16, 1 / 256])
        assert not verify_stationary(af.members[0][0], wrong).ok

    def test_interior_diagonal(self):
        A = build_A_family(QueueingParams(3, 5)).rates
        for j in range(1, 5):
            assert A[2, j, j] == -3

    @pytest.mark.parametrize("N, M", [(6, 500), (2, 500)])
    def test_members_stationary_at_envelope(self, N, M):
        af = build_A_family(QueueingParams(N, M))
        assert np.all(af.weights > 0)
        for rates, mu in af.members:
            assert verify_stationary(rates, mu).ok


def test_product_weight_hand_value():
    ch = build_queueing_instance(QueueingParams(2, 2), 0.01)
    # m^{1/2}(0) = 1/7 and nu^0(mu_0) = 16/21
    assert float(ch.g.weights[0]) == pytest.approx(16 / 147, rel=1e-15)


def test_single_instance_valid():
    ch = build_queueing_instance(QueueingParams(2, 2), 0.01)
    assert validate_dissipative(ch.R).ok
    assert verify_stationary(ch.R, ch.stationary).ok


def test_single_and_multi_share_natural_block():
    p = QueueingParams(3, 20)
    s = build_queueing_instance(p, 1e-3, Mode.SINGLE)
    m = build_queueing_instance(p, 1e-3, Mode.MULTI)
    n = s.natural_size
    assert np.array_equal(s.R.entries[:n, :n], m.R.entries[:n, :n])
