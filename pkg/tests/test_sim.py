import numpy as np
import pytest

from product_chain import (
    Measure,
    QueueingParams,
    RateMatrix,
    StateSpace,
    build_queueing_instance,
    classify_states,
    compare_occupation,
    merge_trajectories,
    simulate,
    simulate_replicas,
)
from product_chain.errors import AbsorbingState, DimensionMismatch, NonFiniteRate
from product_chain.multi import assemble_multi
from product_chain.queueing import Mode
from product_chain.single import Label
from product_chain.sim import c_mass


def two_state():
    return RateMatrix(StateSpace.of_size(2), np.array([[-1.0, 1.0], [3.0, -3.0]]))


def test_two_state_law_of_large_numbers():
    t = simulate(two_state(), 2024, 10**6)
    assert compare_occupation(t, [0.75, 0.25]) < 0.01


def test_single_event():
    t = simulate(two_state(), 1, 1, burn_in=0)
    assert t.events == 1
    assert int(t.jump_counts.sum()) == 1
    assert t.total_time > 0


def test_deterministic():
    ch = build_queueing_instance(QueueingParams(2, 4), 0.01)
    assert simulate(ch, 99, 20000) == simulate(ch, 99, 20000)
    assert simulate(ch, 99, 20000) != simulate(ch, 100, 20000)


def test_holding_times_positive_and_sum():
    t = simulate(two_state(), 5, 5000, burn_in=0)
    w = np.asarray(t.occupation.weights, float)
    assert np.all(w > 0)
    assert t.total_time == pytest.approx(w.sum())


def test_burn_in_excludes_prefix():
    t = simulate(two_state(), 3, 10000)
    assert t.burn_in == 100
    assert int(t.jump_counts.sum()) == 9900


def test_compare_identity_and_disjoint():
    t = simulate(two_state(), 0, 1000)
    w = np.asarray(t.occupation.weights, float)
    assert compare_occupation(t, w * 7) == pytest.approx(0.0, abs=1e-15)
    # one holding interval puts all mass on the start state
    t0 = simulate(two_state(), 0, 1, burn_in=0, start=0)
    assert compare_occupation(t0, [0.0, 1.0]) == pytest.approx(1.0)


def test_compare_dimension_mismatch():
    t = simulate(two_state(), 0, 10)
    with pytest.raises(DimensionMismatch):
        compare_occupation(t, [1.0, 1.0, 1.0])


def test_absorbing_state():
    m = RateMatrix(StateSpace.of_size(2), np.array([[-1.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(AbsorbingState):
        simulate(m, 0, 10, start=0)


def test_non_finite_rate():
    a = np.zeros((2, 2), dtype=np.longdouble)
    a[0, 1] = np.longdouble("1e400")
    a[0, 0] = -a[0, 1]
    a[1, 0], a[1, 1] = 1, -1
    with pytest.raises(NonFiniteRate):
        simulate(RateMatrix(StateSpace.of_size(2), a), 0, 10)


def test_alias_rows_match_distribution():
    # complete graph on 12 states: every row uses the alias sampler
    rng = np.random.default_rng(4)
    a = rng.uniform(0.2, 3.0, (12, 12))
    np.fill_diagonal(a, 0)
    np.fill_diagonal(a, -a.sum(axis=1))
    m = RateMatrix(StateSpace.of_size(12), a)
    from product_chain import solve_stationary

    t = simulate(m, 11, 400000)
    assert compare_occupation(t, solve_stationary(m).weights) < 0.01


def test_c_jumps_respect_partition():
    ch = build_queueing_instance(QueueingParams(2, 5), 0.01)
    labels = classify_states(ch)
    t = simulate(ch, 8, 300000)
    st = t.c_stats["c"]
    assert st.entries > 0
    for lab in st.predecessors:
        assert labels[lab] is Label.JUMPS_TO_C
    for lab in st.successors:
        assert labels[lab] is Label.RECEIVES_FROM_C


def _c_to_c_fraction(t, i):
    st = t.c_stats[f"c_{i}"]
    return sum(cnt for lab, cnt in st.successors.items() if isinstance(lab, str)) / st.departures


def test_multi_c_neighbour_jumps():
    fractions = []
    for M in (10, 40):
        ch = build_queueing_instance(QueueingParams(2, M), 0.01, Mode.MULTI)
        t = simulate(ch, 21, 300000)
        exact = [sum(ch.c_rate(i, j) for j in range(3) if j != i) / -ch.c_rate(i, i) for i in range(3)]
        got = [_c_to_c_fraction(t, i) for i in range(3)]
        np.testing.assert_allclose(got, np.asarray(exact, float), atol=0.01)
        fractions.append(got)
    # stratum 0 never receives from c_0, which therefore only relays to c_1
    assert fractions[0][0] == fractions[1][0] == 1.0
    assert fractions[1][1] < fractions[0][1] < 0.1
    assert fractions[0][2] == fractions[1][2] == 0.0


def test_replicas_merge():
    ch = build_queueing_instance(QueueingParams(2, 4), 0.01)
    parts = [simulate(ch, 5, 5000, replica=r) for r in range(3)]
    merged = merge_trajectories(parts)
    assert merged == simulate_replicas(ch, 5, 5000, 3)
    assert merged.events == 15000
    assert merge_trajectories(reversed(parts)).c_stats == merged.c_stats
    np.testing.assert_allclose(
        np.asarray(merge_trajectories(reversed(parts)).occupation.weights, float),
        np.asarray(merged.occupation.weights, float),
        rtol=1e-15,
    )
    assert parts[0] != parts[1]


def test_c_mass_estimate():
    ch = build_queueing_instance(QueueingParams(2, 5), 0.01)
    t = simulate(ch, 77, 10**6)
    g = ch.g
    target = float(g.epsilon / (g.weights.sum() + g.epsilon))
    assert c_mass(t) == pytest.approx(target, rel=0.2)
