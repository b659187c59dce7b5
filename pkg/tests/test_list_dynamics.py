import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from translab import distributions as D
from translab import exact_stationary as ES
from translab.errors import InvalidParameter
from translab.list_dynamics import (
    CostRecorder, ListState, Policy, apply_request, init_list, run_trace, run_trace_reference,
    search_cost, static_cost_tail,
)


def test_init_list():
    s = init_list()
    assert s.position(7) == 7
    assert s.prefix(5) == (1, 2, 3, 4, 5)
    assert s.time == 0


def test_search_cost():
    s = init_list()
    assert search_cost(s, 5) == 5
    apply_request(s, 2)
    assert search_cost(s, 2) == 1
    with pytest.raises(InvalidParameter):
        search_cost(s, 0)


def test_apply_request_examples():
    s = init_list()
    apply_request(s, 1)
    assert s.prefix(4) == (1, 2, 3, 4) and s.time == 1
    s = ListState.from_order([1, 2, 3], size=3)
    apply_request(s, 3, Policy.TRANSPOSITION)
    assert s.prefix(3) == (1, 3, 2)
    s = ListState.from_order([1, 2, 3], size=3)
    apply_request(s, 3, Policy.MOVE_TO_FRONT)
    assert s.prefix(3) == (3, 1, 2)
    s = ListState.from_order([2, 3, 1], size=3)
    for j in (1, 2, 3, 3):
        apply_request(s, j, Policy.STATIC)
    assert s.prefix(3) == (2, 3, 1) and s.time == 4


def test_static_costs_constant(rng):
    s = ListState.from_order([3, 1, 2], size=3)
    for j in rng.integers(1, 4, 50):
        before = search_cost(s, int(j))
        apply_request(s, int(j), Policy.STATIC)
        assert search_cost(s, int(j)) == before


def test_policy_parse():
    assert Policy.parse("mtf") == Policy.MOVE_TO_FRONT
    assert Policy.parse("Move-To-Front") == Policy.MOVE_TO_FRONT
    with pytest.raises(InvalidParameter):
        Policy.parse("frequency_count")


@given(st.lists(st.integers(1, 30), max_size=300), st.sampled_from(list(Policy)))
def test_permutation_integrity_and_locality(reqs, policy):
    s = init_list()
    for j in reqs:
        before = {p: s.item_at(p) for p in range(1, 40)}
        apply_request(s, j, policy)
        s.check()
        after = {p: s.item_at(p) for p in range(1, 40)}
        changed = sorted(p for p in before if before[p] != after[p])
        if policy == Policy.TRANSPOSITION:
            assert changed == [] or (len(changed) == 2 and changed[1] - changed[0] == 1)
        assert sorted(after.values()) == sorted(before.values())


def test_static_cost_tail_examples():
    pmf = D.explicit([0.5, 0.3, 0.2])
    assert static_cost_tail([3, 2, 1], pmf, 1) == pytest.approx(0.8, abs=1e-15)
    for d in (pmf, D.geometric(0.5), D.power_law(2.0)):
        for x in range(0, 10):
            assert static_cost_tail(init_list(), d, x) == pytest.approx(float(d.tail(x)), abs=1e-15)


def test_lemma1_property(rng):
    # 1000 random arrangements and pmfs: Pr[C^sigma > x] >= Pr[R > x]
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        w = np.sort(rng.random(n) + 1e-3)[::-1]
        d = D.explicit(w / w.sum())
        sigma = rng.permutation(n) + 1
        for x in range(n + 1):
            assert static_cost_tail(sigma, d, x) >= d.tail(x) - 1e-15


def test_run_trace_rejects():
    with pytest.raises(InvalidParameter):
        run_trace(D.geometric(0.5), Policy.TRANSPOSITION, 0, np.random.default_rng(0))
    with pytest.raises(InvalidParameter):
        run_trace(D.geometric(0.5), Policy.MOVE_TO_FRONT, 10, np.random.default_rng(0))


def test_point_mass_trace():
    res = run_trace(D.truncate(D.geometric(0.5), 1), Policy.TRANSPOSITION, 1000, np.random.default_rng(0))
    assert res.recorder.cost_hist.sum(axis=0)[1] == 1000
    assert res.recorder.tail([1])[0] == 0.0


@pytest.mark.parametrize("dist", [D.truncate(D.power_law(1.5), 30), D.power_law(1.5), D.geometric(0.6)],
                         ids=D.format_distribution)
@pytest.mark.parametrize("policy", [Policy.TRANSPOSITION, Policy.MOVE_TO_FRONT, Policy.STATIC])
def test_kernel_matches_reference(dist, policy):
    if policy == Policy.MOVE_TO_FRONT and dist.support is None:
        pytest.skip("move-to-front needs finite support")
    n = 20000
    rec = CostRecorder(hcap=10**6, batches=1)
    res = run_trace(dist, policy, n, np.random.default_rng(3), rec, chunk=777)
    costs, state = run_trace_reference(dist, policy, n, np.random.default_rng(3), chunk=777)
    hist = np.bincount(np.minimum(costs, rec.hcap), minlength=rec.hcap + 1)
    assert np.array_equal(hist, rec.cost_hist[0])
    assert res.state == state


def test_two_item_chain(rng):
    d = D.explicit([0.7, 0.3])
    res = run_trace(d, "transposition", 10**6, rng, CostRecorder(hcap=4), burn_in=0.1)
    exact = ES.stationary_cost_tail([0.7, 0.3], 1)
    assert exact == pytest.approx(0.42, abs=1e-14)
    emp = res.recorder.tail([1])[0]
    hw = 4 * res.recorder.batch_means("cost", [1]).std(ddof=1) / math.sqrt(res.recorder.batches)
    assert abs(emp - exact) < hw + 1e-3


def test_permutation_occupancy_matches_product_form(rng):
    # N = 3 chain: record every 25th state so the samples are close to independent
    pmf = [0.5, 0.3, 0.2]
    d = D.explicit(pmf)
    law = ES.product_form_law(pmf).as_dict()
    s = ListState(3)
    counts = dict.fromkeys(law, 0)
    reqs = d.sample(rng, 25 * 40000)
    for t, j in enumerate(reqs):
        apply_request(s, int(j))
        if t % 25 == 24:
            counts[s.prefix(3)] += 1
    m = sum(counts.values())
    for order, p in law.items():
        sigma = math.sqrt(m * p * (1 - p))
        assert abs(counts[order] - m * p) < 3.5 * sigma, order


def test_recorder_prefix_and_rb(rng):
    d = D.truncate(D.geometric(0.5), 8)
    rec = CostRecorder(hcap=12, batches=10, prefix=3, rb_every=5)
    run_trace(d, "transposition", 4 * 10**5, rng, rec, burn_in=0.5)
    assert rec.samples == 2 * 10**5
    assert rec.prefix_hist.sum() == 2 * 10**5
    xs = np.arange(0, 8)
    assert np.all(np.abs(rec.rb_tail(xs) - rec.tail(xs)) < 0.01)
    law = ES.product_form_law(d.pmf_vector(8))
    exact = np.array([ES.stationary_cost_tail(d.pmf_vector(8), x, law) for x in xs])
    assert np.all(np.abs(rec.rb_tail(xs) - exact) < 0.01)
    merged = CostRecorder(hcap=12, batches=10).merge(rec)
    assert merged.samples == rec.samples


def test_infinite_list_state_equality_is_cheap():
    d = D.power_law(1.05)
    res = run_trace(d, "transposition", 10**5, np.random.default_rng(1))
    _, ref = run_trace_reference(d, "transposition", 10**5, np.random.default_rng(1))
    assert res.state == ref
    assert res.state.frontier > 10**5


def test_from_order_rejects():
    with pytest.raises(InvalidParameter):
        ListState.from_order([1, 1, 2])


def test_trace_reproducible():
    d = D.truncate(D.power_law(2.0), 50)
    a = run_trace(d, "transposition", 10**5, np.random.default_rng(9), CostRecorder(hcap=60))
    b = run_trace(d, "transposition", 10**5, np.random.default_rng(9), CostRecorder(hcap=60))
    assert np.array_equal(a.recorder.cost_hist, b.recorder.cost_hist)


def test_requests_can_sort_any_small_order():
    # every starting order of N = 3 returns to the identity under some request word
    for order in itertools.permutations(range(1, 4)):
        s = ListState.from_order(order, size=3)
        for _ in range(6):
            for j in (1, 2, 3):
                while s.position(j) > j:
                    apply_request(s, j)
        assert s.prefix(3) == (1, 2, 3)
