"""The six ordering mechanisms, each inducing a winner/payment auction.

Every mechanism takes a sealed :class:`SequencerView` and a gas limit and
returns an :class:`AuctionOutcome`. Hash tie-breaks are salted with the
view's public randomness so that, across blocks, exact ties resolve
uniformly while any single block stays reproducible.

Granularity differs by design:

* ``pga``, ``random``, ``fifo`` and ``dictator`` flatten bundles into
  transactions; a transaction that reverts still lands and burns its gas.
* ``metadata`` packs whole bundles but executes their transactions flat.
* ``fbca`` keeps bundles atomic and private; excluded bundles cost nothing.

Coinbase payments only apply under ``fbca``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .builder import ConflictInstance, fbca_greedy
from .domain import Block, Bundle, State, TxStatus, apply_block, apply_tx, execute_bundle

MECHANISM_NAMES = ("pga", "fbca", "random", "fifo", "dictator", "metadata")


@dataclass(frozen=True)
class SequencerView:
    state: State
    submissions: tuple  # (Bundle, arrival_time)
    omega: int = 0
    n_players: int = 0
    focal: Optional[int] = None
    seal_time: Optional[Fraction] = None

    def __post_init__(self):
        object.__setattr__(self, "submissions", tuple(self.submissions))
        if not self.n_players:
            owners = [b.sender for b, _ in self.submissions] + self.state.players()
            object.__setattr__(self, "n_players", max(owners, default=-1) + 1)
        if self.focal is None and self.state.opportunities:
            open_ids = sorted(o.id for o in self.state.opportunities.values() if not o.claimed)
            object.__setattr__(self, "focal", open_ids[0] if open_ids else None)

    def visible(self):
        if self.seal_time is None:
            return list(self.submissions)
        return [(b, t) for b, t in self.submissions if t <= self.seal_time]

    def salt(self, digest: str) -> str:
        blob = (self.omega % 2**64).to_bytes(8, "big") + bytes.fromhex(digest)
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class AuctionOutcome:
    block: Block
    winner: Optional[int]
    x: tuple
    payments: tuple
    claims: dict = field(default_factory=dict)  # opportunity id -> claiming player
    state: Optional[State] = field(default=None, compare=False, repr=False)


def _outcome(view: SequencerView, final: State, block: Block, side_payments=None) -> AuctionOutcome:
    n = view.n_players
    pay = [Fraction(0)] * n
    claims = {}
    for tx, status in block.entries:
        owner = view.state.owner_of(tx.sender)
        if owner is not None and owner < n:
            pay[owner] += tx.fee
        if status is TxStatus.EXECUTED and owner is not None:
            for opp in tx.claims():
                claims.setdefault(opp, owner)
    for player, amount in (side_payments or {}).items():
        pay[player] += amount
    winner = claims.get(view.focal)
    x = tuple(1 if winner == i else 0 for i in range(n))
    return AuctionOutcome(block, winner, x, tuple(pay), claims, final)


def _flatten(view: SequencerView):
    rows, seen = [], set()
    for b, arrival in sorted(view.visible(), key=lambda s: (s[1], view.salt(s[0].hash))):
        for pos, tx in enumerate(b.txs):
            if tx.id in seen:
                continue
            seen.add(tx.id)
            rows.append((tx, arrival, b, pos))
    return rows


def _price_key(view):
    return lambda r: (-r[0].gas_price, r[1], view.salt(r[0].id))


def _execute_flat(view: SequencerView, txs, gas_limit: int) -> AuctionOutcome:
    final, block = apply_block(view.state, txs, gas_limit)
    return _outcome(view, final, block)


def order_pga(view: SequencerView, gas_limit: int) -> AuctionOutcome:
    rows = sorted(_flatten(view), key=_price_key(view))
    return _execute_flat(view, [r[0] for r in rows], gas_limit)


def order_random(view: SequencerView, gas_limit: int) -> AuctionOutcome:
    txs = sorted((r[0] for r in _flatten(view)), key=lambda tx: tx.id)
    rng = np.random.default_rng(view.omega % 2**64)
    perm = rng.permutation(len(txs)) if txs else []
    return _execute_flat(view, [txs[i] for i in perm], gas_limit)


def order_fifo(view: SequencerView, gas_limit: int) -> AuctionOutcome:
    rows = sorted(_flatten(view), key=lambda r: (r[1], view.salt(r[2].hash), r[3]))
    return _execute_flat(view, [r[0] for r in rows], gas_limit)


def order_dictator(view: SequencerView, gas_limit: int, whitelist: Sequence[int] = (),
                   censor: bool = False) -> AuctionOutcome:
    rank = {p: i for i, p in enumerate(whitelist)}
    rows = _flatten(view)
    favoured = sorted((r for r in rows if r[2].sender in rank),
                      key=lambda r: (rank[r[2].sender], r[1], view.salt(r[2].hash), r[3]))
    rest = [r for r in rows if r[2].sender not in rank]
    if censor:
        rest = [r for r in rest if not r[0].claims()]
    rest.sort(key=_price_key(view))
    return _execute_flat(view, [r[0] for r in favoured + rest], gas_limit)


def _nonce_value(nonce: str) -> int:
    return int(nonce, 16) if nonce.lower().startswith("0x") else int(nonce, 2)


def order_metadata(view: SequencerView, gas_limit: int) -> AuctionOutcome:
    bundles = [(b, t) for b, t in view.visible() if b.order_nonce is not None]
    bundles.sort(key=lambda s: (_nonce_value(s[0].order_nonce), view.salt(s[0].hash)))
    current = view.state
    entries, gas, revenue = [], 0, Fraction(0)
    seen = set()
    for b, _ in bundles:
        if b.hash in seen or gas + b.gas > gas_limit:
            continue
        seen.add(b.hash)
        for tx in b.txs:
            current, status, fee = apply_tx(current, tx)
            if status is TxStatus.REJECTED:
                continue
            entries.append((tx, status))
            gas += tx.gas
            revenue += fee
    return _outcome(view, current, Block(tuple(entries), gas, revenue, gas_limit))


def order_fbca(view: SequencerView, gas_limit: int) -> AuctionOutcome:
    unique = {}
    for b, t in sorted(view.visible(), key=lambda s: (s[1], view.salt(s[0].hash))):
        unique.setdefault(b.hash, b)
    # bundles that cannot execute on their own are dropped before the auction
    candidates = [b for b in unique.values() if execute_bundle(view.state, b).valid]
    inst = ConflictInstance.build(candidates, gas_limit, state=view.state)
    picked = fbca_greedy(inst, tiebreak=lambda b: view.salt(b.hash))
    current = view.state
    entries, gas, revenue, side = [], 0, Fraction(0), {}
    for i in picked.selected:
        b = candidates[i]
        run = execute_bundle(current, b)
        if not run.valid:
            continue
        current = run.state
        entries.extend((tx, TxStatus.EXECUTED) for tx in b.txs)
        gas += b.gas
        revenue += run.fees + run.coinbase
        if run.coinbase:
            payer = view.state.owner_of(b.txs[0].sender)
            if payer is not None:
                side[payer] = side.get(payer, Fraction(0)) + run.coinbase
    return _outcome(view, current, Block(tuple(entries), gas, revenue, gas_limit), side)


def run_mechanism(name: str, view: SequencerView, gas_limit: int, params=None) -> AuctionOutcome:
    params = params or {}
    if name == "pga":
        return order_pga(view, gas_limit)
    if name == "fbca":
        return order_fbca(view, gas_limit)
    if name == "random":
        return order_random(view, gas_limit)
    if name == "fifo":
        return order_fifo(view, gas_limit)
    if name == "dictator":
        return order_dictator(view, gas_limit, params.get("whitelist", ()),
                              bool(params.get("censor", False)))
    if name == "metadata":
        return order_metadata(view, gas_limit)
    raise ValueError(f"unknown mechanism {name!r}; expected one of {', '.join(MECHANISM_NAMES)}")
