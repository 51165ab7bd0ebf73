import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from mev_arena.builder import (BRANCH_AND_BOUND_CAP, ConflictInstance, KevInstance,
                               adversarial_instance, adversarial_summary, approximation_ratio,
                               bundle_score, fbca_exact, fbca_greedy, kev_exact,
                               kev_greedy_by_price)
from mev_arena.domain import (Bundle, Burn, ClaimOpportunity, Opportunity, State, Transaction,
                              apply_sequence, bundles_compete)
from mev_arena.errors import CapExceeded, ValidationError

from oracles import kev_bruteforce


def test_kev_examples():
    inst = KevInstance(((6, 5), (5, 4), (5, 4)), 10)
    exact = kev_exact(inst)
    assert exact.revenue == 40 and exact.selected == (1, 2)
    greedy = kev_greedy_by_price(inst)
    assert greedy.revenue == 30 and greedy.selected == (0,)
    assert kev_exact(KevInstance(((3, 2),), 5)).selected == (0,)
    empty = kev_exact(KevInstance(((11, 1), (12, 9)), 10))
    assert empty.revenue == 0 and empty.selected == ()
    assert kev_greedy_by_price(KevInstance((), 10)).selected == ()


def test_kev_greedy_tie_rule():
    inst = KevInstance(((5, 1), (3, 1), (3, 1)), 6)
    assert kev_greedy_by_price(inst).selected == (1, 2)


def test_kev_validation_and_caps():
    with pytest.raises(ValidationError):
        KevInstance(((0, 1),), 10)
    with pytest.raises(ValidationError):
        KevInstance(((1, 1),), 0)
    big = KevInstance(tuple((10**6, 1) for _ in range(30)), 10**7)
    with pytest.raises(CapExceeded):
        kev_exact(big)
    mid = KevInstance(tuple((10**6 + i, 1 + i) for i in range(20)), 5 * 10**6)
    assert kev_exact(mid).revenue == kev_bruteforce(mid.items, mid.gas_limit)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 40), st.fractions(0, 10, max_denominator=4)),
                max_size=10), st.integers(1, 120))
def test_kev_exact_vs_oracle_and_greedy(items, limit):
    inst = KevInstance(tuple(items), limit)
    exact = kev_exact(inst)
    assert exact.revenue == kev_bruteforce(inst.items, limit)
    assert exact.gas_used <= limit
    assert kev_greedy_by_price(inst).revenue <= exact.revenue
    if len({g for g, _ in items}) == 1:
        assert kev_greedy_by_price(inst).revenue == exact.revenue


def burn_tx(sender, gas, price, nonce=0):
    return Transaction(sender, (Burn(gas),), gas, Fraction(price), nonce)


def test_bundle_score_examples():
    own, mem = burn_tx(1, 100, Fraction(1, 2)), burn_tx(2, 50, 2)
    assert bundle_score(Bundle((own, mem), 0, coinbase=10, mempool={mem.id})) == Fraction(2, 5)
    assert bundle_score(Bundle((own,), 0, coinbase=10)) == Fraction(1, 2) + Fraction(10, 100)
    assert bundle_score(Bundle((mem,), 0, mempool={mem.id})) == 0


def claim_state(n_opps=3, senders=(1, 2, 3)):
    return State.create({s: s for s in senders}, {(s, 0): 10**4 for s in senders},
                        [Opportunity(i, Fraction(10), 5) for i in range(1, n_opps + 1)])


def claim_bundle(sender, opps, price, ts=0):
    tx = Transaction(sender, tuple(ClaimOpportunity(o) for o in opps), 5 * len(opps),
                     Fraction(price), 0)
    return Bundle((tx,), sender, timestamp=ts)


def test_fbca_tie_earlier_timestamp():
    s = claim_state()
    a, b = claim_bundle(1, [1], 2, ts=5), claim_bundle(2, [1], 2, ts=3)
    inst = ConflictInstance.build([a, b], 100, state=s)
    assert fbca_greedy(inst).selected == (1,)


def test_fbca_no_conflicts_includes_all():
    s = claim_state()
    bs = [claim_bundle(i, [i], i) for i in (1, 2, 3)]
    inst = ConflictInstance.build(bs, 100, state=s)
    assert sorted(fbca_greedy(inst).selected) == [0, 1, 2]
    assert approximation_ratio(inst) == 1


def test_fbca_exact_reductions():
    bs = [claim_bundle(1, [1], 3), claim_bundle(2, [2, 3], 1), claim_bundle(3, [3], 2)]
    free = ConflictInstance.build(bs, 10, conflicts=[])
    kev = kev_exact(KevInstance(tuple((b.gas, b.revenue / b.gas) for b in bs), 10))
    assert fbca_exact(free).revenue == kev.revenue
    complete = ConflictInstance.build(bs, 100, conflicts=[(0, 1), (0, 2), (1, 2)])
    assert fbca_exact(complete).revenue == max(b.revenue for b in bs)


def test_conflict_instance_validation():
    s = claim_state()
    bs = [claim_bundle(1, [1], 1), claim_bundle(2, [1], 1)]
    with pytest.raises(ValidationError):
        ConflictInstance.build(bs, 10, conflicts=[(0, 0)])
    with pytest.raises(ValidationError):
        ConflictInstance.build(bs, 10, conflicts=[(0, 5)])
    with pytest.raises(ValidationError):
        ConflictInstance.build(bs, 10, conflicts=[], state=s)
    assert ConflictInstance.build(bs, 10, conflicts=[(1, 0)], state=s).conflicts == {(0, 1)}
    too_many = [claim_bundle(1, [1], 1)] * (BRANCH_AND_BOUND_CAP + 1)
    with pytest.raises(CapExceeded):
        fbca_exact(ConflictInstance.build(too_many, 10, conflicts=[]))


def test_adversarial_example():
    s = adversarial_summary(100, 10, 1, Fraction(1, 100))
    assert s["FBR"] == Fraction(101, 10) and s["OPT"] == 90
    assert s["ratio"] == Fraction(101, 900) and s["bound"] == Fraction(1, 9)
    assert s["greedy_selected"] == (0,)
    assert sorted(s["opt_selected"]) == list(range(1, 10))
    assert s["FBR_per_gmin"] == Fraction(101, 100) and s["OPT_per_gmin"] == 9


def test_adversarial_star_conflicts():
    inst = adversarial_instance(100, 10, Fraction(1, 100))
    assert inst.conflicts == {(0, i) for i in range(1, 10)}


def test_adversarial_k3_edge():
    s = adversarial_summary(30, 10, 1, Fraction(1, 10**9))
    assert abs(s["ratio"] - Fraction(1, 2)) < Fraction(1, 10**8)


@pytest.mark.parametrize("args", [(100, 30, "1/100"), (20, 10, "1/100"), (100, 10, 0),
                                  (100, 10, "-1"), (64, 4, "1/100")])
def test_adversarial_preconditions(args):
    with pytest.raises(ValidationError):
        adversarial_instance(args[0], args[1], Fraction(args[2]))


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 12), st.integers(0, 3), st.fractions(Fraction(1, 10**6), Fraction(1, 10)),
       st.sampled_from([1, 2, Fraction(1, 2)]))
def test_adversarial_bound_property(k, extra, eps, m):
    g_min = k - 1 + extra
    s = adversarial_summary(k * g_min, g_min, m, eps)
    assert s["ratio"] <= Fraction(1, k - 1) + eps * k / (m * (k - 1))
    assert s["ratio"] >= Fraction(1, k - 1)


def random_conflict_instance(rng):
    n_opps = rng.randint(1, 4)
    s = claim_state(n_opps, senders=tuple(range(1, 8)))
    bundles = []
    for i in range(rng.randint(1, 7)):
        opps = rng.sample(range(1, n_opps + 1), rng.randint(1, n_opps))
        bundles.append(claim_bundle(i + 1, opps, Fraction(rng.randint(0, 8), rng.randint(1, 3)),
                                    ts=rng.randint(0, 3)))
    return s, ConflictInstance.build(bundles, rng.randint(5, 40), state=s)


def test_fbca_properties_randomized():
    rng = random.Random(11)
    for _ in range(200):
        s, inst = random_conflict_instance(rng)
        g, e = fbca_greedy(inst), fbca_exact(inst)
        assert g.revenue <= e.revenue
        for built in (g, e):
            assert built.gas_used <= inst.gas_limit
            for i, j in itertools.combinations(built.selected, 2):
                assert not bundles_compete(s, inst.bundles[i], inst.bundles[j])
        # exhaustive independent-set oracle
        best = 0
        n = len(inst.bundles)
        for r in range(n + 1):
            for combo in itertools.combinations(range(n), r):
                if sum(inst.bundles[i].gas for i in combo) > inst.gas_limit:
                    continue
                if any((min(a, b), max(a, b)) in inst.conflicts
                       for a, b in itertools.combinations(combo, 2)):
                    continue
                best = max(best, sum(inst.bundles[i].revenue for i in combo))
        assert e.revenue == best
        assert approximation_ratio(inst) <= 1
        assert fbca_greedy(inst) == g


def test_optimal_block_executes():
    inst = adversarial_instance(100, 10, Fraction(1, 100))
    opt = fbca_exact(inst)
    _, ok = apply_sequence(inst.reference_state, [inst.bundles[i] for i in opt.selected])
    assert ok
