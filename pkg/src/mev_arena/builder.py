"""Block construction: fee knapsack, greedy approximations and the
conflict-graph bundle auction.

All revenue arithmetic is exact; ties are broken by total orders so every
builder is a deterministic function of its instance.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .domain import Bundle, ClaimOpportunity, Opportunity, State, Transaction, bundles_compete
from .errors import CapExceeded, ValidationError
from .numeric import to_fraction

DP_CAPACITY_CAP = 10**6
BRANCH_AND_BOUND_CAP = 25


@dataclass(frozen=True)
class KevInstance:
    items: tuple  # (gas, gas_price) pairs
    gas_limit: int

    def __post_init__(self):
        items = tuple((int(g), to_fraction(m)) for g, m in self.items)
        object.__setattr__(self, "items", items)
        if self.gas_limit < 1:
            raise ValidationError("gas limit must be at least 1")
        if any(g < 1 for g, _ in items):
            raise ValidationError("item gas must be at least 1")
        if any(m < 0 for _, m in items):
            raise ValidationError("gas prices must be non-negative")


@dataclass(frozen=True)
class BuiltBlock:
    selected: tuple
    revenue: Fraction
    gas_used: int


def _pareto_knapsack(values, weights, capacity):
    # frontier of (weight -> (value, selection)); dominated states dropped
    frontier = {0: (Fraction(0), ())}
    for i, (v, w) in enumerate(zip(values, weights)):
        if w > capacity:
            continue
        extended = dict(frontier)
        for cw, (cv, sel) in frontier.items():
            nw = cw + w
            if nw > capacity:
                continue
            cand = (cv + v, sel + (i,))
            if nw not in extended or cand[0] > extended[nw][0]:
                extended[nw] = cand
        pruned = {}
        best = None
        for cw in sorted(extended):
            cv = extended[cw][0]
            if best is None or cv > best:
                pruned[cw] = extended[cw]
                best = cv
        frontier = pruned
    top = max(v for v, _ in frontier.values())
    weight = min(w for w, (v, _) in frontier.items() if v == top)
    return frontier[weight][1]


def _branch_and_bound(values, weights, capacity, conflicts=None):
    """Maximum-value conflict-free selection fitting ``capacity``."""
    n = len(values)
    conflicts = conflicts or [set() for _ in range(n)]
    order = sorted(range(n), key=lambda i: (-(values[i] / weights[i]), weights[i], i))
    best = [Fraction(-1), ()]

    def bound(depth, value, room, blocked):
        total = value
        for i in order[depth:]:
            if i in blocked:
                continue
            if weights[i] <= room:
                total += values[i]
                room -= weights[i]
            else:
                total += values[i] * Fraction(room, weights[i])
                break
        return total

    def visit(depth, value, room, chosen, blocked):
        if value > best[0]:
            best[0], best[1] = value, tuple(sorted(chosen))
        if depth == n or bound(depth, value, room, blocked) <= best[0]:
            return
        i = order[depth]
        if i not in blocked and weights[i] <= room:
            visit(depth + 1, value + values[i], room - weights[i], chosen + [i],
                  blocked | conflicts[i])
        visit(depth + 1, value, room, chosen, blocked)

    visit(0, Fraction(0), capacity, [], frozenset())
    return best[1]


def kev_exact(inst: KevInstance) -> BuiltBlock:
    values = [m * g for g, m in inst.items]
    weights = [g for g, _ in inst.items]
    if inst.gas_limit <= DP_CAPACITY_CAP:
        sel = _pareto_knapsack(values, weights, inst.gas_limit)
    elif len(inst.items) <= BRANCH_AND_BOUND_CAP:
        sel = _branch_and_bound(values, weights, inst.gas_limit)
    else:
        raise CapExceeded(f"gas limit {inst.gas_limit} and {len(inst.items)} items exceed "
                          f"both exact-solver caps")
    return BuiltBlock(tuple(sel), sum((values[i] for i in sel), Fraction(0)),
                      sum(weights[i] for i in sel))


def kev_greedy_by_price(inst: KevInstance) -> BuiltBlock:
    order = sorted(range(len(inst.items)),
                   key=lambda i: (-inst.items[i][1], inst.items[i][0], i))
    chosen, gas, revenue = [], 0, Fraction(0)
    for i in order:
        g, m = inst.items[i]
        if gas + g <= inst.gas_limit:
            chosen.append(i)
            gas += g
            revenue += g * m
    return BuiltBlock(tuple(chosen), revenue, gas)


def bundle_score(bundle: Bundle) -> Fraction:
    """Effective gas price: coinbase plus own fees, per unit of total gas.

    Fees of transactions lifted from the mempool are not credited to the
    bundle, though their gas still counts.
    """
    gas = bundle.gas
    if gas <= 0:
        raise ValueError("bundle score undefined for zero gas")
    own = sum((tx.fee for tx in bundle.txs if tx.id not in bundle.mempool), Fraction(0))
    return (bundle.coinbase + own) / gas


@dataclass(frozen=True)
class ConflictInstance:
    bundles: tuple
    conflicts: frozenset  # {(i, j)} with i < j
    gas_limit: int
    reference_state: Optional[State] = None

    @classmethod
    def build(cls, bundles: Sequence[Bundle], gas_limit: int, conflicts=None,
              state: Optional[State] = None) -> "ConflictInstance":
        bundles = tuple(bundles)
        if gas_limit < 1:
            raise ValidationError("gas limit must be at least 1")
        given = None
        if conflicts is not None:
            given = set()
            for i, j in conflicts:
                if i == j:
                    raise ValidationError(f"self-loop on bundle {i}")
                if not (0 <= i < len(bundles) and 0 <= j < len(bundles)):
                    raise ValidationError(f"conflict edge ({i}, {j}) names an unknown bundle")
                given.add((min(i, j), max(i, j)))
        derived = None
        if state is not None:
            derived = {(i, j) for i in range(len(bundles)) for j in range(i + 1, len(bundles))
                       if bundles_compete(state, bundles[i], bundles[j])}
        if given is not None and derived is not None and given != derived:
            raise ValidationError("conflict graph disagrees with competition on the reference state")
        edges = given if given is not None else (derived or set())
        return cls(bundles, frozenset(edges), gas_limit, state)

    def neighbours(self):
        adj = [set() for _ in self.bundles]
        for i, j in self.conflicts:
            adj[i].add(j)
            adj[j].add(i)
        return adj


def _score_order(bundles: Sequence[Bundle], tiebreak=None):
    tiebreak = tiebreak or (lambda b: b.hash)
    return sorted(range(len(bundles)),
                  key=lambda i: (-bundle_score(bundles[i]), bundles[i].gas,
                                 bundles[i].timestamp, tiebreak(bundles[i])))


def fbca_greedy(inst: ConflictInstance, tiebreak=None) -> BuiltBlock:
    """Score-ordered scan that keeps a bundle iff it conflicts with nothing kept and fits."""
    adj = inst.neighbours()
    chosen, gas, revenue = [], 0, Fraction(0)
    for i in _score_order(inst.bundles, tiebreak):
        b = inst.bundles[i]
        if adj[i] & set(chosen) or gas + b.gas > inst.gas_limit:
            continue
        chosen.append(i)
        gas += b.gas
        revenue += b.revenue
    return BuiltBlock(tuple(chosen), revenue, gas)


def fbca_exact(inst: ConflictInstance) -> BuiltBlock:
    if len(inst.bundles) > BRANCH_AND_BOUND_CAP:
        raise CapExceeded(f"{len(inst.bundles)} bundles exceed the exact-solver cap "
                          f"{BRANCH_AND_BOUND_CAP}", estimate=len(inst.bundles))
    values = [b.revenue for b in inst.bundles]
    weights = [max(b.gas, 1) for b in inst.bundles]
    sel = set(_branch_and_bound(values, weights, inst.gas_limit, inst.neighbours()))
    ordered = tuple(i for i in _score_order(inst.bundles) if i in sel)
    return BuiltBlock(ordered, sum((values[i] for i in sel), Fraction(0)),
                      sum(inst.bundles[i].gas for i in sel))


def approximation_ratio(inst: ConflictInstance) -> Fraction:
    greedy = fbca_greedy(inst).revenue
    opt = fbca_exact(inst).revenue
    if opt == 0:
        return Fraction(1)
    return greedy / opt


def adversarial_instance(gas_limit: int, g_min: int, epsilon, m=1) -> ConflictInstance:
    """Star-shaped adversarial instance: one slightly better bundle blocks k-1 others.

    Bundle 0 claims every opportunity in a single transaction of gas ``g_min``
    at price ``m + epsilon``; bundle i claims only opportunity i at price
    ``m``. The star conflict graph is derived from the reference state.
    """
    epsilon, m = to_fraction(epsilon), to_fraction(m)
    if g_min < 1 or gas_limit % g_min:
        raise ValidationError("g_min must be positive and divide the gas limit")
    k = gas_limit // g_min
    if k < 3:
        raise ValidationError("need at least three bundles (gas_limit / g_min >= 3)")
    if epsilon <= 0 or m <= 0:
        raise ValidationError("epsilon and m must be positive")
    if g_min < k - 1:
        raise ValidationError("g_min must be at least k - 1 so one transaction can claim k - 1 "
                              "unit-gas opportunities")
    senders = range(1, k + 1)
    opps = [Opportunity(i, Fraction(1), 1) for i in range(2, k + 1)]
    balances = {(s, 0): (m + epsilon) * g_min for s in senders}
    state = State.create({s: s for s in senders}, balances, opps, proposer=0)
    head = Transaction(1, tuple(ClaimOpportunity(i) for i in range(2, k + 1)), g_min,
                       m + epsilon, 0)
    bundles = [Bundle((head,), 1)]
    for i in range(2, k + 1):
        bundles.append(Bundle((Transaction(i, (ClaimOpportunity(i),), g_min, m, 0),), i))
    return ConflictInstance.build(bundles, gas_limit, state=state)


def adversarial_summary(gas_limit: int, g_min: int, m, epsilon) -> dict:
    """FBR, OPT, their ratio and the 1/(k-1) bound for the adversarial family.

    Greedy revenue is ``(m + epsilon) g_min`` and the optimum ``m g_min (k - 1)``;
    the ``*_per_gmin`` entries give the same revenues per ``g_min`` gas units.
    """
    inst = adversarial_instance(gas_limit, g_min, epsilon, m)
    k = gas_limit // g_min
    greedy = fbca_greedy(inst)
    opt = fbca_exact(inst)
    return {
        "L": gas_limit, "g_min": g_min, "k": k, "m": to_fraction(m), "eps": to_fraction(epsilon),
        "FBR": greedy.revenue, "OPT": opt.revenue, "ratio": greedy.revenue / opt.revenue,
        "bound": Fraction(1, k - 1),
        "FBR_per_gmin": greedy.revenue / g_min, "OPT_per_gmin": opt.revenue / g_min,
        "greedy_selected": greedy.selected, "opt_selected": opt.selected,
    }
