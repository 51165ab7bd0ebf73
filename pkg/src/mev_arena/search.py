"""Exhaustive local-MEV search over bounded bundle spaces.

A player's reachable transactions are the mempool transactions it can see
plus its own templates instantiated at every gas price on its grid. Bundles
are ordered sequences of at most ``max_bundle_len`` reachable transactions.
Templates may repeat (each copy is a fresh transaction with the next nonce),
mempool transactions may not.

The search is a depth-first walk that shares the executed prefix state and
prunes every extension of a prefix that reverts, since a bundle is valid only
if all of its transactions execute.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .domain import Bundle, State, Transaction, TxStatus, apply_tx, delta_balance
from .errors import CapExceeded, NoQualifyingPlayer, ValidationError
from .numeric import to_fraction

SEARCH_CAP = 10**6


@dataclass(frozen=True)
class TxTemplate:
    """A transaction the player can author, minus gas price and nonce."""

    sender: int
    instructions: tuple
    gas: int

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))

    @property
    def shape(self):
        return (self.instructions, self.gas)

    def instantiate(self, gas_price, nonce: int) -> Transaction:
        return Transaction(self.sender, self.instructions, self.gas, gas_price, nonce)


@dataclass(frozen=True)
class PlayerCapabilities:
    player: int
    templates: tuple = ()
    mempool: tuple = ()
    max_bundle_len: int = 1
    gas_price_grid: tuple = (Fraction(0),)
    budget: Optional[Fraction] = None

    def __post_init__(self):
        object.__setattr__(self, "templates", tuple(self.templates))
        object.__setattr__(self, "mempool", tuple(self.mempool))
        grid = tuple(sorted(to_fraction(m) for m in self.gas_price_grid))
        object.__setattr__(self, "gas_price_grid", grid)
        if not grid:
            raise ValidationError("gas price grid must be non-empty")
        if self.max_bundle_len < 1:
            raise ValidationError("max_bundle_len must be at least 1")

    def without_mempool(self) -> "PlayerCapabilities":
        return PlayerCapabilities(self.player, self.templates, (), self.max_bundle_len,
                                  self.gas_price_grid, self.budget)


@dataclass(frozen=True)
class MevResult:
    """``value`` and every maximizing bundle.

    When ``value`` is 0 the empty bundle is the maximizer and ``argmev`` is
    empty.
    """

    value: Fraction
    argmev: tuple = ()
    explored: int = field(default=0, compare=False)


def search_space_size(cap: PlayerCapabilities) -> int:
    items = len(cap.mempool) + len(cap.templates) * len(cap.gas_price_grid)
    return sum(items**k for k in range(1, cap.max_bundle_len + 1))


def _check_cap(cap: PlayerCapabilities, limit: int):
    size = search_space_size(cap)
    if size > limit:
        raise CapExceeded(f"search space of about {size} bundles exceeds cap {limit}",
                          estimate=size)


def enumerate_bundles(state: State, cap: PlayerCapabilities, limit: int = SEARCH_CAP):
    """Yield ``(txs, mempool_ids, end_state)`` for every valid reachable bundle."""
    _check_cap(cap, limit)
    items = [("mempool", tx) for tx in cap.mempool]
    items += [("own", tpl, m) for tpl in cap.templates for m in cap.gas_price_grid]

    def walk(current, txs, used, spent):
        for idx, item in enumerate(items):
            if item[0] == "mempool":
                if idx in used:
                    continue
                tx = item[1]
                cost = Fraction(0)
            else:
                _, tpl, m = item
                tx = tpl.instantiate(m, current.nonce(tpl.sender))
                cost = tx.fee
            if cap.budget is not None and spent + cost > cap.budget:
                continue
            nxt, status, _ = apply_tx(current, tx)
            if status is not TxStatus.EXECUTED:
                continue
            seq = txs + (tx,)
            now_used = used | {idx} if item[0] == "mempool" else used
            mem_ids = frozenset(items[i][1].id for i in now_used)
            yield seq, mem_ids, nxt
            if len(seq) < cap.max_bundle_len:
                yield from walk(nxt, seq, now_used, spent + cost)

    yield from walk(state, (), frozenset(), Fraction(0))


def local_mev(state: State, cap: PlayerCapabilities, limit: int = SEARCH_CAP) -> MevResult:
    best = Fraction(0)
    winners = []
    explored = 0
    for txs, mem_ids, end in enumerate_bundles(state, cap, limit):
        explored += 1
        profit = delta_balance(cap.player, state, end)
        if profit > best:
            best, winners = profit, [(txs, mem_ids)]
        elif profit == best and best > 0:
            winners.append((txs, mem_ids))
    bundles = {}
    for txs, mem_ids in winners:
        b = Bundle(txs, cap.player, mempool=mem_ids)
        bundles[b.hash] = b
    return MevResult(best, tuple(bundles[h] for h in sorted(bundles)), explored)


def top_of_block_mev(state: State, cap: PlayerCapabilities, limit: int = SEARCH_CAP) -> Fraction:
    return local_mev(state, cap.without_mempool(), limit).value


def permissionless_mev(state: State, caps: Sequence[PlayerCapabilities],
                       required: Iterable[TxTemplate], limit: int = SEARCH_CAP) -> Fraction:
    """Minimum local MEV among players able to author every shape in ``required``.

    Shapes compare instructions and gas, not the sending address.
    """
    need = {t.shape for t in required}
    qualifying = [c for c in caps if need <= {t.shape for t in c.templates}]
    if not qualifying:
        raise NoQualifyingPlayer("no player can construct the required transactions")
    return min(local_mev(state, c, limit).value for c in qualifying)


def is_null_state(state: State, caps: Sequence[PlayerCapabilities],
                  limit: int = SEARCH_CAP) -> bool:
    return all(local_mev(state, c, limit).value == 0 for c in caps)
