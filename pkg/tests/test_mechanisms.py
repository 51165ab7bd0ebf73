from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from mev_arena.builder import adversarial_instance
from mev_arena.domain import Bundle, ClaimOpportunity, Opportunity, State, Transaction, Burn
from mev_arena.mechanisms import (MECHANISM_NAMES, SequencerView, order_dictator, order_fbca,
                                  order_fifo, order_metadata, order_pga, order_random,
                                  run_mechanism)

G = 50


def world(n=3, value=1000):
    accounts = {a: a - 1 for a in range(1, n + 1)}
    return State.create(accounts, {(a, 0): 10**4 for a in accounts}, [Opportunity(1, Fraction(value), G)])


def claim(player, price, nonce=0, order_nonce=None, coinbase=0, account=None):
    sender = account if account is not None else player + 1
    tx = Transaction(sender, (ClaimOpportunity(1),), G, Fraction(price), nonce)
    return Bundle((tx,), player, coinbase=coinbase, order_nonce=order_nonce)


def view(subs, **kw):
    return SequencerView(world(kw.pop("n", 3)), tuple(subs), **kw)


def test_pga_two_bidders():
    out = order_pga(view([(claim(0, 10), 0), (claim(1, 12), 0)], n_players=2), 1000)
    assert [tx.sender for tx in out.block.txs] == [2, 1]
    assert [s.value for _, s in out.block.entries] == ["executed", "reverted"]
    assert out.x == (0, 1) and out.payments == (500, 600)
    assert out.block.gas_used == 100


def test_pga_single_bidder_and_arrival_tie():
    out = order_pga(view([(claim(0, 3), 0)], n_players=1, n=1), 1000)
    assert out.winner == 0 and out.payments == (150,) and out.block.gas_used == G
    tie = order_pga(view([(claim(0, 5), 4), (claim(1, 5), 2)], n_players=2), 1000)
    assert tie.winner == 1


def test_fbca_sealed_first_price():
    out = order_fbca(view([(claim(0, 2), 0), (claim(1, 3), 0)], n_players=2), 1000)
    assert out.winner == 1 and out.payments == (0, 150) and out.block.gas_used == G


def test_fbca_non_competing_both_included():
    s = State.create({1: 0, 2: 1}, {(1, 0): 10**4, (2, 0): 10**4},
                     [Opportunity(1, Fraction(100), G), Opportunity(2, Fraction(100), G)])
    b2 = Bundle((Transaction(2, (ClaimOpportunity(2),), G, 1, 0),), 1)
    out = order_fbca(SequencerView(s, ((claim(0, 1), 0), (b2, 0)), focal=1), 1000)
    assert len(out.block.txs) == 2 and out.claims == {1: 0, 2: 1}


def test_fbca_adversarial_instance():
    inst = adversarial_instance(100, 10, Fraction(1, 100))
    subs = tuple((b, 0) for b in inst.bundles)
    out = order_fbca(SequencerView(inst.reference_state, subs), 100)
    assert out.block.txs == inst.bundles[0].txs


def test_fbca_coinbase_counts_as_payment():
    out = order_fbca(view([(claim(0, 1, coinbase=500), 0), (claim(1, 2), 0)], n_players=2), 1000)
    assert out.winner == 0 and out.payments == (550, 0)
    assert sum(out.payments) == out.block.proposer_revenue


def test_random_three_quarters():
    subs = [(claim(0, 1), 0)] + [(claim(1, 1, account=a), 0) for a in (2, 3, 4)]
    state = State.create({1: 0, 2: 1, 3: 1, 4: 1}, {(a, 0): 10**4 for a in range(1, 5)},
                         [Opportunity(1, Fraction(1000), G)])
    wins = 0
    trials = 4000
    for omega in range(trials):
        out = order_random(SequencerView(state, tuple(subs), omega=omega), 1000)
        wins += out.winner == 1
    assert abs(wins / trials - 0.75) < 0.03


def test_random_permutation_enumeration_is_three_quarters():
    # analytic oracle: the first claimer in a uniform order of 4 txs is P2's with prob 3/4
    import itertools
    orders = list(itertools.permutations("ABBB"))
    assert Fraction(sum(o[0] == "B" for o in orders), len(orders)) == Fraction(3, 4)


def test_random_single_and_determinism():
    out = order_random(view([(claim(0, 1), 0)], n_players=1, n=1, omega=5), 1000)
    assert out.winner == 0
    subs = [(claim(0, 1), 0), (claim(1, 1), 0), (claim(2, 1), 0)]
    assert order_random(view(subs, omega=9), 1000) == order_random(view(subs, omega=9), 1000)


def test_fifo_examples():
    out = order_fifo(view([(claim(1, 9), 5), (claim(0, 1), 3)], n_players=2), 1000)
    assert out.winner == 0
    simult = [(claim(0, 1), 3), (claim(1, 1), 3)]
    assert order_fifo(view(simult, omega=1), 1000) == order_fifo(view(simult, omega=1), 1000)
    late = order_fifo(view([(claim(0, 1), 120), (claim(1, 1), 50)], seal_time=100), 1000)
    assert late.winner == 1 and len(late.block.txs) == 1


def test_dictator_examples():
    subs = [(claim(0, 9), 0), (claim(1, 1), 0)]
    out = order_dictator(view(subs, n_players=2), 1000, whitelist=[1])
    assert out.winner == 1
    cens = order_dictator(view(subs, n_players=2), 1000, whitelist=[1], censor=True)
    assert [tx.sender for tx in cens.block.txs] == [2] and cens.block.gas_used == G
    pga = order_pga(view(subs, n_players=2), 1000)
    assert order_dictator(view(subs, n_players=2), 1000) == pga


def test_metadata_examples():
    a, b = claim(0, 1, order_nonce="0x02"), claim(1, 1, order_nonce="0x01")
    out = order_metadata(view([(a, 0), (b, 0)], n_players=2), 1000)
    assert out.winner == 1
    # back-run race: a lower nonce takes priority over the target
    target = claim(0, 5, order_nonce="0x80")
    racer = claim(1, 1, order_nonce="0x7f")
    assert order_metadata(view([(target, 0), (racer, 1)], n_players=2), 1000).winner == 1
    same = [(claim(0, 1, order_nonce="0x01"), 0), (claim(1, 1, order_nonce="0x01"), 0)]
    assert order_metadata(view(same, omega=3), 1000) == order_metadata(view(same, omega=3), 1000)
    missing = order_metadata(view([(claim(0, 1), 0)], n_players=1), 1000)
    assert missing.block.txs == () and missing.winner is None


def test_unknown_mechanism():
    with pytest.raises(ValueError):
        run_mechanism("oracle", view([]), 100)


@st.composite
def submissions(draw):
    subs = []
    for _ in range(draw(st.integers(0, 6))):
        player = draw(st.integers(0, 2))
        price = draw(st.integers(0, 12))
        nonce = draw(st.integers(0, 1))
        meta = draw(st.sampled_from([None, "0x01", "0x02", "0x10"]))
        burn = draw(st.booleans())
        tx = (Transaction(player + 1, (Burn(30),), 30, price, nonce) if burn else
              Transaction(player + 1, (ClaimOpportunity(1),), G, price, nonce))
        subs.append((Bundle((tx,), player, coinbase=draw(st.integers(0, 3)), order_nonce=meta),
                     Fraction(draw(st.integers(0, 20)))))
    return subs


@settings(max_examples=120, deadline=None)
@given(submissions(), st.sampled_from(MECHANISM_NAMES), st.integers(0, 2**63 - 1),
       st.integers(20, 300))
def test_mechanism_laws(subs, name, omega, limit):
    v = view(subs, n_players=3, omega=omega, seal_time=Fraction(15))
    params = {"whitelist": [2], "censor": True} if name == "dictator" else {}
    out = run_mechanism(name, v, limit, params)
    submitted = [tx.id for b, t in v.visible() for tx in b.txs]
    included = [tx.id for tx in out.block.txs]
    for tid in set(included):
        assert included.count(tid) <= submitted.count(tid)
    assert sum(out.x) <= 1
    if out.winner is not None:
        assert any(tx.claims() and s.value == "executed" and tx.sender == out.winner + 1
                   for tx, s in out.block.entries)
    assert out.block.gas_used <= limit
    assert sum(out.payments) == out.block.proposer_revenue
    senders = {b.sender for b, _ in v.visible()}
    for p in range(3):
        assert out.payments[p] >= 0
        if p not in senders:
            assert out.payments[p] == 0
    assert run_mechanism(name, v, limit, params) == out
