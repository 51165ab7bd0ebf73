"""Accounts, tokens, state, transactions, bundles and their execution.

The execution model is deliberately tiny: four instructions (transfer, claim
an opportunity, constant-product swap, burn gas). That is enough to produce
competition between bundles, arbitrage and wasted block space.

States are immutable values. Every ``apply_*`` function returns a new state
and never mutates its input.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import CapExceeded, UnknownPlayer, ValidationError
from .numeric import Number, encode_number, to_fraction

NATIVE = 0
TRANSFER_GAS = 21
SWAP_GAS = 40
ORDER_INVARIANCE_CAP = 8


def canonical_hash(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# -- instructions -----------------------------------------------------------


@dataclass(frozen=True)
class Transfer:
    src: int
    dst: int
    token: int
    amount: Number

    def to_json(self):
        return {"op": "transfer", "from": self.src, "to": self.dst,
                "token": self.token, "amount": encode_number(self.amount)}


@dataclass(frozen=True)
class ClaimOpportunity:
    opportunity: int

    def to_json(self):
        return {"op": "claim", "opportunity": self.opportunity}


@dataclass(frozen=True)
class Swap:
    pool: int
    token_in: int
    amount_in: int
    min_out: int = 0

    def to_json(self):
        return {"op": "swap", "pool": self.pool, "token_in": self.token_in,
                "amount_in": self.amount_in, "min_out": self.min_out}


@dataclass(frozen=True)
class Burn:
    gas: int

    def to_json(self):
        return {"op": "burn", "gas": self.gas}


Instruction = Union[Transfer, ClaimOpportunity, Swap, Burn]


def instruction_from_json(data) -> Instruction:
    op = data.get("op")
    if op == "transfer":
        return Transfer(int(data["from"]), int(data["to"]), int(data.get("token", NATIVE)),
                        to_fraction(data["amount"]))
    if op == "claim":
        return ClaimOpportunity(int(data["opportunity"]))
    if op == "swap":
        return Swap(int(data["pool"]), int(data["token_in"]), int(data["amount_in"]),
                    int(data.get("min_out", 0)))
    if op == "burn":
        return Burn(int(data["gas"]))
    raise ValidationError(f"unknown instruction op {op!r}")


def static_gas(instructions: Iterable[Instruction]) -> int:
    """State-independent gas floor; claims add their opportunity's gas at run time."""
    total = 0
    for ins in instructions:
        if isinstance(ins, Transfer):
            total += TRANSFER_GAS
        elif isinstance(ins, Swap):
            total += SWAP_GAS
        elif isinstance(ins, Burn):
            total += ins.gas
    return total


# -- transactions and bundles -----------------------------------------------


@dataclass(frozen=True)
class Transaction:
    sender: int
    instructions: tuple
    gas: int
    gas_price: Fraction
    nonce: int = 0
    id: str = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        object.__setattr__(self, "gas_price", to_fraction(self.gas_price))
        object.__setattr__(self, "id", canonical_hash(self.to_json()))

    @property
    def fee(self) -> Fraction:
        return self.gas_price * self.gas

    def to_json(self):
        return {
            "sender": self.sender,
            "instructions": [ins.to_json() for ins in self.instructions],
            "gas": self.gas,
            "gas_price": encode_number(self.gas_price),
            "nonce": self.nonce,
        }

    @classmethod
    def from_json(cls, data) -> "Transaction":
        return cls(int(data["sender"]),
                   tuple(instruction_from_json(i) for i in data["instructions"]),
                   int(data["gas"]), to_fraction(data["gas_price"]), int(data.get("nonce", 0)))

    def malformed_reason(self) -> Optional[str]:
        if self.gas <= 0:
            return "gas must be positive"
        if self.gas_price < 0:
            return "negative gas price"
        if self.nonce < 0:
            return "negative nonce"
        if not self.instructions:
            return "no instructions"
        for ins in self.instructions:
            if isinstance(ins, Transfer) and ins.amount < 0:
                return "negative transfer amount"
            if isinstance(ins, Swap) and (ins.amount_in < 0 or ins.min_out < 0
                                          or not isinstance(ins.amount_in, int)):
                return "invalid swap amounts"
            if isinstance(ins, Burn) and ins.gas < 0:
                return "negative burn"
        if self.gas < static_gas(self.instructions):
            return "gas below instruction base cost"
        return None

    def claims(self) -> tuple:
        return tuple(i.opportunity for i in self.instructions if isinstance(i, ClaimOpportunity))


@dataclass(frozen=True)
class Bundle:
    """Ordered transactions plus auction metadata.

    ``mempool`` holds the ids of transactions copied from the public mempool;
    they still execute but their fees do not count toward the bundle score.
    The coinbase payment is drawn from the sender of the first transaction.
    """

    txs: tuple
    sender: int
    timestamp: Fraction = Fraction(0)
    coinbase: Fraction = Fraction(0)
    order_nonce: Optional[str] = None
    mempool: frozenset = frozenset()
    hash: str = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "txs", tuple(self.txs))
        object.__setattr__(self, "timestamp", to_fraction(self.timestamp))
        object.__setattr__(self, "coinbase", to_fraction(self.coinbase))
        object.__setattr__(self, "mempool", frozenset(self.mempool))
        if not self.txs:
            raise ValidationError("bundle must contain at least one transaction")
        if self.coinbase < 0:
            raise ValidationError("negative coinbase payment")
        if not self.mempool <= {tx.id for tx in self.txs}:
            raise ValidationError("mempool ids must name transactions of the bundle")
        # timestamp is sequencer metadata and stays out of the identity hash
        payload = {"txs": [tx.id for tx in self.txs], "sender": self.sender,
                   "coinbase": encode_number(self.coinbase), "order_nonce": self.order_nonce,
                   "mempool": sorted(self.mempool)}
        object.__setattr__(self, "hash", canonical_hash(payload))

    @property
    def gas(self) -> int:
        return sum(tx.gas for tx in self.txs)

    @property
    def fees(self) -> Fraction:
        return sum((tx.fee for tx in self.txs), Fraction(0))

    @property
    def revenue(self) -> Fraction:
        """What the proposer earns if the bundle lands: every fee plus the coinbase."""
        return self.fees + self.coinbase

    def to_json(self):
        ids = [tx.id for tx in self.txs]
        return {
            "txs": [tx.to_json() for tx in self.txs],
            "sender": self.sender,
            "timestamp": encode_number(self.timestamp),
            "coinbase": encode_number(self.coinbase),
            "order_nonce": self.order_nonce,
            "mempool": sorted(ids.index(i) for i in self.mempool),
        }

    @classmethod
    def from_json(cls, data) -> "Bundle":
        txs = tuple(Transaction.from_json(t) for t in data["txs"])
        return cls(txs, int(data["sender"]), to_fraction(data.get("timestamp", 0)),
                   to_fraction(data.get("coinbase", 0)), data.get("order_nonce"),
                   frozenset(txs[i].id for i in data.get("mempool", [])))


# -- state ------------------------------------------------------------------


@dataclass(frozen=True)
class Address:
    id: int
    owner: Optional[int] = None


@dataclass(frozen=True)
class Opportunity:
    id: int
    value: Fraction
    claim_gas: int
    claimed: bool = False


@dataclass(frozen=True)
class Pool:
    id: int
    token_x: int
    token_y: int
    reserve_x: int
    reserve_y: int

    def quote(self, token_in: int, amount_in: int) -> int:
        r_in, r_out = ((self.reserve_x, self.reserve_y) if token_in == self.token_x
                       else (self.reserve_y, self.reserve_x))
        return (r_out * amount_in) // (r_in + amount_in)

    def after_swap(self, token_in: int, amount_in: int, amount_out: int) -> "Pool":
        if token_in == self.token_x:
            return Pool(self.id, self.token_x, self.token_y,
                        self.reserve_x + amount_in, self.reserve_y - amount_out)
        return Pool(self.id, self.token_x, self.token_y,
                    self.reserve_x - amount_out, self.reserve_y + amount_in)


@dataclass(frozen=True)
class State:
    accounts: Mapping[int, Address]
    balances: Mapping[tuple, Number]
    opportunities: Mapping[int, Opportunity]
    pools: Mapping[int, Pool]
    nonces: Mapping[int, int]
    pricing: Mapping[int, Fraction]
    proposer: int
    n_tokens: int = 1

    @classmethod
    def create(cls, accounts: Mapping[int, Optional[int]], balances=None, opportunities=(),
               pools=(), prices=None, proposer: int = 0, n_tokens: int = None, nonces=None):
        """Convenience constructor; ``accounts`` maps address id to owner (or None).

        The proposer address is added automatically when missing.
        """
        accts = {a: Address(a, o) for a, o in accounts.items()}
        accts.setdefault(proposer, Address(proposer, None))
        pricing = {NATIVE: Fraction(1)}
        for tok, p in (prices or {}).items():
            pricing[int(tok)] = to_fraction(p)
        bal = {}
        for (addr, tok), amt in (balances or {}).items():
            amt = to_fraction(amt)
            if amt:
                bal[(addr, tok)] = amt
        tokens = {NATIVE, *pricing, *(t for _, t in bal)}
        for pool in pools:
            tokens |= {pool.token_x, pool.token_y}
        n = n_tokens if n_tokens is not None else max(tokens) + 1
        state = cls(accts, bal, {o.id: o for o in opportunities}, {p.id: p for p in pools},
                    dict(nonces or {}), pricing, proposer, n)
        state.check()
        return state

    def check(self):
        problems = []
        if self.pricing.get(NATIVE) != 1:
            problems.append("price of the native token must be 1")
        for tok, p in self.pricing.items():
            if p < 0 or not 0 <= tok < self.n_tokens:
                problems.append(f"bad price entry for token {tok}")
        for (addr, tok), amt in self.balances.items():
            if addr not in self.accounts:
                problems.append(f"balance for unknown address {addr}")
            if not 0 <= tok < self.n_tokens:
                problems.append(f"token {tok} out of range")
            if amt < 0:
                problems.append(f"negative balance at address {addr} token {tok}")
        for pool in self.pools.values():
            if pool.reserve_x <= 0 or pool.reserve_y <= 0 or pool.token_x == pool.token_y:
                problems.append(f"invalid pool {pool.id}")
        for opp in self.opportunities.values():
            if opp.claim_gas <= 0 or opp.value < 0:
                problems.append(f"invalid opportunity {opp.id}")
        if problems:
            raise ValidationError("invalid state", problems)

    def balance(self, addr: int, token: int = NATIVE) -> Fraction:
        return Fraction(self.balances.get((addr, token), 0))

    def price(self, token: int) -> Fraction:
        return self.pricing.get(token, Fraction(0))

    def addresses_of(self, player: int) -> list:
        return sorted(a.id for a in self.accounts.values() if a.owner == player)

    def owner_of(self, addr: int) -> Optional[int]:
        acct = self.accounts.get(addr)
        return acct.owner if acct else None

    def players(self) -> list:
        return sorted({a.owner for a in self.accounts.values() if a.owner is not None})

    def nonce(self, addr: int) -> int:
        return self.nonces.get(addr, 0)


class _Work:
    """Mutable scratch copy of a state used while executing one transaction."""

    def __init__(self, state: State):
        self.base = state
        self.balances = dict(state.balances)
        self.opportunities = dict(state.opportunities)
        self.pools = dict(state.pools)
        self.nonces = dict(state.nonces)

    def fork(self) -> "_Work":
        other = _Work.__new__(_Work)
        other.base = self.base
        other.balances = dict(self.balances)
        other.opportunities = dict(self.opportunities)
        other.pools = dict(self.pools)
        other.nonces = dict(self.nonces)
        return other

    def bal(self, addr, token) -> Fraction:
        return Fraction(self.balances.get((addr, token), 0))

    def add(self, addr, token, amount):
        new = self.bal(addr, token) + amount
        if new:
            self.balances[(addr, token)] = new
        else:
            self.balances.pop((addr, token), None)

    def freeze(self) -> State:
        b = self.base
        return State(b.accounts, self.balances, self.opportunities, self.pools, self.nonces,
                     b.pricing, b.proposer, b.n_tokens)


class TxStatus(str, enum.Enum):
    EXECUTED = "executed"
    REVERTED = "reverted"
    # never included: malformed, wrong nonce, or fee not affordable
    REJECTED = "rejected"


def _run_instructions(work: _Work, tx: Transaction) -> bool:
    needed = static_gas(tx.instructions)
    for ins in tx.instructions:
        if isinstance(ins, Transfer):
            if ins.src != tx.sender or ins.dst not in work.base.accounts:
                return False
            if not 0 <= ins.token < work.base.n_tokens or work.bal(ins.src, ins.token) < ins.amount:
                return False
            work.add(ins.src, ins.token, -ins.amount)
            work.add(ins.dst, ins.token, ins.amount)
        elif isinstance(ins, ClaimOpportunity):
            opp = work.opportunities.get(ins.opportunity)
            if opp is None or opp.claimed:
                return False
            needed += opp.claim_gas
            work.opportunities[opp.id] = Opportunity(opp.id, opp.value, opp.claim_gas, True)
            work.add(tx.sender, NATIVE, opp.value)
        elif isinstance(ins, Swap):
            pool = work.pools.get(ins.pool)
            if pool is None or ins.token_in not in (pool.token_x, pool.token_y):
                return False
            if work.bal(tx.sender, ins.token_in) < ins.amount_in:
                return False
            out = pool.quote(ins.token_in, ins.amount_in)
            if out < ins.min_out:
                return False
            token_out = pool.token_y if ins.token_in == pool.token_x else pool.token_x
            work.pools[pool.id] = pool.after_swap(ins.token_in, ins.amount_in, out)
            work.add(tx.sender, ins.token_in, -ins.amount_in)
            work.add(tx.sender, token_out, out)
    return needed <= tx.gas


def apply_tx(state: State, tx: Transaction):
    """Execute one transaction; returns ``(new_state, status, fee_paid)``.

    A reverted transaction keeps its fee payment and nonce increment and
    nothing else. A rejected one leaves the state untouched.
    """
    if tx.malformed_reason() is not None:
        return state, TxStatus.REJECTED, Fraction(0)
    if tx.sender not in state.accounts or state.nonce(tx.sender) != tx.nonce:
        return state, TxStatus.REJECTED, Fraction(0)
    fee = tx.fee
    if state.balance(tx.sender) < fee:
        return state, TxStatus.REJECTED, Fraction(0)
    charged = _Work(state)
    charged.add(tx.sender, NATIVE, -fee)
    charged.add(state.proposer, NATIVE, fee)
    charged.nonces[tx.sender] = tx.nonce + 1
    work = charged.fork()
    if _run_instructions(work, tx):
        return work.freeze(), TxStatus.EXECUTED, fee
    return charged.freeze(), TxStatus.REVERTED, fee


@dataclass(frozen=True)
class BundleExecution:
    state: State
    valid: bool
    fees: Fraction
    coinbase: Fraction


def execute_bundle(state: State, bundle: Bundle) -> BundleExecution:
    current = state
    fees = Fraction(0)
    for tx in bundle.txs:
        current, status, fee = apply_tx(current, tx)
        if status is not TxStatus.EXECUTED:
            return BundleExecution(state, False, Fraction(0), Fraction(0))
        fees += fee
    if bundle.coinbase:
        payer = bundle.txs[0].sender
        if current.balance(payer) < bundle.coinbase:
            return BundleExecution(state, False, Fraction(0), Fraction(0))
        work = _Work(current)
        work.add(payer, NATIVE, -bundle.coinbase)
        work.add(current.proposer, NATIVE, bundle.coinbase)
        current = work.freeze()
    return BundleExecution(current, True, fees, bundle.coinbase)


def apply_bundle(state: State, bundle: Bundle):
    """Atomic application: ``(new_state, True)`` or ``(state, False)`` unchanged."""
    result = execute_bundle(state, bundle)
    return result.state, result.valid


def apply_sequence(state: State, bundles: Sequence[Bundle]):
    """Apply bundles one after another; invalid as soon as any bundle is invalid."""
    current = state
    for b in bundles:
        current, ok = apply_bundle(current, b)
        if not ok:
            return state, False
    return current, True


@dataclass(frozen=True)
class Block:
    entries: tuple  # (Transaction, TxStatus) in execution order
    gas_used: int
    proposer_revenue: Fraction
    gas_limit: Optional[int] = None

    @property
    def txs(self):
        return tuple(tx for tx, _ in self.entries)


def apply_block(state: State, txs: Sequence[Transaction], gas_limit: int):
    """Execute transactions individually in order, skipping rejected ones and
    those that no longer fit. Returns ``(state, Block)``."""
    current = state
    entries = []
    gas = 0
    revenue = Fraction(0)
    for tx in txs:
        if gas + tx.gas > gas_limit:
            continue
        current, status, fee = apply_tx(current, tx)
        if status is TxStatus.REJECTED:
            continue
        entries.append((tx, status))
        gas += tx.gas
        revenue += fee
    return current, Block(tuple(entries), gas, revenue, gas_limit)


# -- balance accounting and bundle relations --------------------------------


def delta_balance(player: int, before: State, after: State) -> Fraction:
    """Numéraire-priced balance change of everything ``player`` owns."""
    if before.pricing != after.pricing:
        raise ValueError("states must share a pricing vector")
    addrs = set(before.addresses_of(player)) | set(after.addresses_of(player))
    if not addrs:
        raise UnknownPlayer(player)
    total = Fraction(0)
    for addr in addrs:
        for tok in range(before.n_tokens):
            diff = after.balance(addr, tok) - before.balance(addr, tok)
            if diff:
                total += before.price(tok) * diff
    return total


def bundle_profit(state: State, bundle: Bundle) -> Fraction:
    after, ok = apply_bundle(state, bundle)
    return delta_balance(bundle.sender, state, after) if ok else Fraction(0)


def bundles_compete(state: State, a: Bundle, b: Bundle) -> bool:
    _, ab = apply_sequence(state, (a, b))
    _, ba = apply_sequence(state, (b, a))
    return not ab and not ba


def order_invariant_valid(state: State, bundles: Sequence[Bundle],
                          cap: int = ORDER_INVARIANCE_CAP) -> bool:
    if len(bundles) > cap:
        raise CapExceeded(f"{len(bundles)} bundles exceed the permutation cap {cap}; "
                          f"check a random sample of permutations instead",
                          estimate=len(bundles))
    final = None
    for perm in itertools.permutations(bundles):
        result, ok = apply_sequence(state, perm)
        if not ok:
            return False
        if final is None:
            final = result
        elif result != final:
            return False
    return True


def is_partial_extraction(state: State, b: Bundle, b_ref: Bundle) -> bool:
    if not bundles_compete(state, b, b_ref):
        return False
    return bundle_profit(state, b) < bundle_profit(state, b_ref)


def token_totals(state: State) -> dict:
    """Per-token supply held in accounts and pool reserves."""
    totals = {}
    for (_, tok), amt in state.balances.items():
        totals[tok] = totals.get(tok, 0) + amt
    for pool in state.pools.values():
        totals[pool.token_x] = totals.get(pool.token_x, 0) + pool.reserve_x
        totals[pool.token_y] = totals.get(pool.token_y, 0) + pool.reserve_y
    return totals
