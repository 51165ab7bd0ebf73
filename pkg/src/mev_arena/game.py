"""Continuous-time MEV stage game as a discrete-event simulation.

Time is rational (milliseconds). Simultaneous events are ordered by
``(time, actor rank, sequence number)`` where the beacon ranks first, players
by id, then sequencer arrivals, and the seal last, so a bundle arriving
exactly at seal time is still in the block.

Random streams are derived from ``(seed, run)`` only: the seal time and
beacon stream are shared by every profile at the same run index, and each
player has a private stream for mixed strategies and discovery delays.
"""

from __future__ import annotations

import heapq
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Optional, Sequence

import networkx as nx
import numpy as np

from .domain import (NATIVE, Bundle, ClaimOpportunity, Opportunity, State, Transaction,
                     canonical_hash, delta_balance)
from .errors import ValidationError
from .mechanisms import MECHANISM_NAMES, AuctionOutcome, SequencerView, run_mechanism
from .numeric import encode_number, quantize, to_fraction
from .search import PlayerCapabilities, TxTemplate
from .strategies import Strategy, behavior

FOCAL = 1
COST_KINDS = ("latency_upgrade", "extra_node", "spam_tx", "mempool_upgrade")
MAX_EVENTS = 200_000


def thread_count(default: int = 1) -> int:
    raw = os.environ.get("MEV_ARENA_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


# -- network ----------------------------------------------------------------


@dataclass(frozen=True)
class LatencyGraph:
    """Directed latency graph; ``owner`` maps a node to the player running it."""

    nodes: tuple
    edges: tuple  # (u, v, weight_ms)
    owner: Mapping[str, int]
    sequencer: str

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple((u, v, to_fraction(w)) for u, v, w in self.edges))
        object.__setattr__(self, "owner", dict(self.owner))

    @classmethod
    def star(cls, n_players: int, to_sequencer, peer=None) -> "LatencyGraph":
        """One node per player, a common sequencer link and full peer mesh."""
        to_seq = to_sequencer if isinstance(to_sequencer, (list, tuple)) else [to_sequencer] * n_players
        peer = to_fraction(peer if peer is not None else 2 * to_fraction(to_seq[0]))
        nodes = [f"p{i}" for i in range(n_players)] + ["seq"]
        edges = []
        for i in range(n_players):
            edges.append((f"p{i}", "seq", to_seq[i]))
            for j in range(n_players):
                if i != j:
                    edges.append((f"p{i}", f"p{j}", peer))
        return cls(tuple(nodes), tuple(edges), {f"p{i}": i for i in range(n_players)}, "seq")

    def problems(self, n_players: int) -> list:
        out = []
        known = set(self.nodes)
        if self.sequencer not in known:
            out.append(f"sequencer node {self.sequencer!r} is not a graph node")
        for u, v, w in self.edges:
            for end in (u, v):
                if end not in known:
                    out.append(f"latency edge ({u}, {v}) references unknown node {end!r}")
            if w < 0:
                out.append(f"latency edge ({u}, {v}) has negative weight")
        for node, p in self.owner.items():
            if node not in known:
                out.append(f"owner entry for unknown node {node!r}")
        for p in range(n_players):
            if not self.player_nodes(p):
                out.append(f"player {p} owns no node")
        return out

    def player_nodes(self, player: int) -> tuple:
        return tuple(sorted(n for n, p in self.owner.items() if p == player))

    @cached_property
    def _graph(self):
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        for u, v, w in self.edges:
            if g.has_edge(u, v):
                w = min(w, g[u][v]["weight"])
            g.add_edge(u, v, weight=w)
        return g

    def distance(self, sources, targets) -> Optional[Fraction]:
        """Min shortest-path weight from any source to any target (None if unreachable)."""
        lengths = nx.multi_source_dijkstra_path_length(self._graph, set(sources), weight="weight")
        found = [lengths[t] for t in targets if t in lengths]
        return Fraction(min(found)) if found else None

    def with_clone(self, parent: int, child: int) -> "LatencyGraph":
        """Add ``child`` co-located with ``parent``: duplicated nodes and edges, zero link."""
        mapping = {n: f"{n}~{child}" for n in self.player_nodes(parent)}
        edges = list(self.edges)
        for u, v, w in self.edges:
            if u in mapping or v in mapping:
                edges.append((mapping.get(u, u), mapping.get(v, v), w))
        for old, new in mapping.items():
            edges += [(old, new, 0), (new, old, 0)]
        owner = dict(self.owner)
        owner.update({new: child for new in mapping.values()})
        return LatencyGraph(self.nodes + tuple(mapping.values()), tuple(edges), owner, self.sequencer)

    def without_players_from(self, n: int) -> "LatencyGraph":
        drop = {node for node, p in self.owner.items() if p >= n}
        return LatencyGraph(tuple(x for x in self.nodes if x not in drop),
                            tuple(e for e in self.edges if e[0] not in drop and e[1] not in drop),
                            {k: v for k, v in self.owner.items() if k not in drop}, self.sequencer)

    def to_json(self):
        return {"nodes": list(self.nodes), "sequencer": self.sequencer,
                "edges": [[u, v, encode_number(w)] for u, v, w in self.edges],
                "owner": {k: self.owner[k] for k in sorted(self.owner)}}


# -- stochastic ingredients -------------------------------------------------


@dataclass(frozen=True)
class BlockTimer:
    kind: str = "fixed"
    a: Fraction = Fraction(100)
    b: Optional[Fraction] = None

    def __post_init__(self):
        object.__setattr__(self, "a", to_fraction(self.a))
        if self.b is not None:
            object.__setattr__(self, "b", to_fraction(self.b))
        if self.kind not in ("fixed", "exponential", "uniform"):
            raise ValidationError(f"unknown block timer {self.kind!r}")
        if self.a <= 0 or (self.kind == "uniform" and (self.b is None or self.b < self.a)):
            raise ValidationError("block timer support must be strictly positive")

    @property
    def mean(self) -> Fraction:
        if self.kind == "uniform":
            return (self.a + self.b) / 2
        return self.a

    def sample(self, rng) -> Fraction:
        if self.kind == "fixed":
            return self.a
        if self.kind == "exponential":
            return max(quantize(rng.exponential(float(self.a))), Fraction(1, 10**6))
        return quantize(rng.uniform(float(self.a), float(self.b)))

    def to_json(self):
        if self.kind == "fixed":
            return {"kind": "fixed", "T": encode_number(self.a)}
        if self.kind == "exponential":
            return {"kind": "exponential", "mean": encode_number(self.a)}
        return {"kind": "uniform", "low": encode_number(self.a), "high": encode_number(self.b)}


@dataclass(frozen=True)
class ValuePath:
    """Non-decreasing step function of the value a player perceives over time.

    ``steps`` are ``(time, value)`` breakpoints; an optional uniform discovery
    delay shifts the whole path per run.
    """

    steps: tuple = ((Fraction(0), None),)
    delay: Optional[tuple] = None

    def __post_init__(self):
        steps = tuple((to_fraction(t), None if v is None else to_fraction(v)) for t, v in self.steps)
        object.__setattr__(self, "steps", tuple(sorted(steps, key=lambda s: s[0])))
        if self.delay is not None:
            object.__setattr__(self, "delay", tuple(to_fraction(x) for x in self.delay))

    def problems(self) -> list:
        vals = [v for _, v in self.steps if v is not None]
        if any(b < a for a, b in zip(vals, vals[1:])):
            return ["value path must be non-decreasing in time"]
        if any(v < 0 for v in vals):
            return ["value path must be non-negative"]
        return []

    def resolved(self, default_value) -> "ValuePath":
        return ValuePath(tuple((t, default_value if v is None else v) for t, v in self.steps),
                         self.delay)

    def sample_shift(self, rng) -> Fraction:
        if self.delay is None:
            return Fraction(0)
        lo, hi = self.delay
        return quantize(rng.uniform(float(lo), float(hi)))

    def value_at(self, t, shift=Fraction(0)) -> Fraction:
        best = Fraction(0)
        for when, v in self.steps:
            if when + shift <= t:
                best = v
        return best

    def discovery(self, shift=Fraction(0)) -> Optional[Fraction]:
        for when, v in self.steps:
            if v and v > 0:
                return when + shift
        return None

    def to_json(self):
        out = {"steps": [[encode_number(t), None if v is None else encode_number(v)]
                         for t, v in self.steps]}
        if self.delay is not None:
            out["delay"] = [encode_number(x) for x in self.delay]
        return out


@dataclass(frozen=True)
class PlayerSpec:
    accounts: int = 1
    funds: Fraction = Fraction(10**6)
    values: ValuePath = ValuePath()
    upgrades: Mapping[str, int] = field(default_factory=dict)
    costs: Mapping[str, Fraction] = field(default_factory=dict)
    competitor_estimate: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "funds", to_fraction(self.funds))
        object.__setattr__(self, "upgrades", dict(self.upgrades))
        object.__setattr__(self, "costs", {k: to_fraction(v) for k, v in self.costs.items()})

    def problems(self, idx) -> list:
        out = [f"player {idx}: {p}" for p in self.values.problems()]
        if self.accounts < 1:
            out.append(f"player {idx}: needs at least one account")
        if self.funds < 0:
            out.append(f"player {idx}: negative funds")
        for kind, c in self.costs.items():
            if kind not in COST_KINDS:
                out.append(f"player {idx}: unknown cost kind {kind!r}")
            elif c < 0:
                out.append(f"player {idx}: negative cost for {kind}")
        for kind in self.upgrades:
            if kind not in COST_KINDS:
                out.append(f"player {idx}: unknown upgrade {kind!r}")
        return out


@dataclass(frozen=True)
class StageGameSpec:
    players: tuple
    graph: LatencyGraph
    timer: BlockTimer = BlockTimer()
    mechanism: str = "pga"
    mechanism_params: Mapping = field(default_factory=dict)
    gas_limit: int = 1000
    value: Fraction = Fraction(1000)
    claim_gas: int = 50
    privacy: Optional[str] = None
    search_gas_grid: tuple = (Fraction(0),)

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(self.players))
        object.__setattr__(self, "value", to_fraction(self.value))
        object.__setattr__(self, "mechanism_params", dict(self.mechanism_params))
        object.__setattr__(self, "search_gas_grid", tuple(to_fraction(m) for m in self.search_gas_grid))
        if self.privacy is None:
            object.__setattr__(self, "privacy", "private" if self.mechanism == "fbca" else "public")
        problems = self.problems()
        if problems:
            raise ValidationError("invalid stage game", problems)

    def problems(self) -> list:
        out = []
        if not self.players:
            out.append("game needs at least one player")
        if self.mechanism not in MECHANISM_NAMES:
            out.append(f"unknown mechanism {self.mechanism!r}")
        if self.gas_limit < 1:
            out.append("gas limit must be positive")
        if self.claim_gas < 1:
            out.append("claim gas must be positive")
        if self.value < 0:
            out.append("opportunity value must be non-negative")
        if self.privacy not in ("public", "private"):
            out.append(f"privacy must be public or private, got {self.privacy!r}")
        for i, p in enumerate(self.players):
            out += p.problems(i)
        out += self.graph.problems(len(self.players))
        for p in self.mechanism_params.get("whitelist", ()):
            if not 0 <= p < len(self.players):
                out.append(f"whitelist names unknown player {p}")
        return out

    @property
    def n_players(self) -> int:
        return len(self.players)

    @cached_property
    def _stride(self) -> int:
        return max(p.accounts for p in self.players)

    def account_ids(self, player: int) -> list:
        base = 1 + player * self._stride
        return list(range(base, base + self.players[player].accounts))

    @cached_property
    def initial_state(self) -> State:
        accounts, balances = {}, {}
        for i, p in enumerate(self.players):
            for a in self.account_ids(i):
                accounts[a] = i
                balances[(a, NATIVE)] = p.funds
        opp = Opportunity(FOCAL, self.value, self.claim_gas)
        return State.create(accounts, balances, [opp], proposer=0)

    def claim_template(self, player: int, account: int = 0) -> TxTemplate:
        return TxTemplate(self.account_ids(player)[account], (ClaimOpportunity(FOCAL),), self.claim_gas)

    def capabilities(self) -> list:
        """Per-player search capabilities: claim the focal opportunity at grid prices."""
        return [PlayerCapabilities(i, (self.claim_template(i),), (), 1, self.search_gas_grid)
                for i in range(self.n_players)]

    @cached_property
    def _distances(self):
        g = self.graph
        n = self.n_players
        to_seq = [g.distance(g.player_nodes(i), [g.sequencer]) for i in range(n)]
        peer = [[None if i == j else g.distance(g.player_nodes(i), g.player_nodes(j))
                 for j in range(n)] for i in range(n)]
        return to_seq, peer

    def to_sequencer(self, player: int) -> Optional[Fraction]:
        return self._distances[0][player]

    def peer_delay(self, src: int, dst: int) -> Optional[Fraction]:
        return self._distances[1][src][dst]

    def with_players(self, n: int) -> "StageGameSpec":
        """The same game with ``n`` players: extra players clone the last one."""
        if n < 1:
            raise ValidationError("need at least one player")
        players = list(self.players[:n])
        graph = self.graph.without_players_from(n)
        while len(players) < n:
            idx = len(players)
            graph = graph.with_clone(idx - 1, idx)
            players.append(players[-1])
        params = dict(self.mechanism_params)
        if "whitelist" in params:
            params["whitelist"] = [p for p in params["whitelist"] if p < n]
        return replace(self, players=tuple(players), graph=graph, mechanism_params=params)

    def scaled_gas(self, c: int) -> "StageGameSpec":
        return replace(self, gas_limit=self.gas_limit * c, claim_gas=self.claim_gas * c,
                       search_gas_grid=tuple(m / c for m in self.search_gas_grid))


# -- simulation --------------------------------------------------------------


@dataclass
class PlayerContext:
    """What a strategy may know while playing."""

    player: int
    n_players: int
    accounts: list
    state: State
    focal: int
    claim_gas: int
    values: ValuePath
    shift: Fraction
    omega: int
    expected_seal: Fraction
    competitor_estimate: Optional[int]
    rng: object = None

    @property
    def discovery(self) -> Optional[Fraction]:
        return self.values.discovery(self.shift)

    def value_at(self, t) -> Fraction:
        return self.values.value_at(t, self.shift)

    def claim_tx(self, price, account: int = 0) -> Transaction:
        if account >= len(self.accounts):
            raise ValidationError(f"player {self.player} has only {len(self.accounts)} accounts")
        addr = self.accounts[account]
        return Transaction(addr, (ClaimOpportunity(self.focal),), self.claim_gas,
                           to_fraction(price), self.state.nonce(addr))

    def bundle(self, txs, order_nonce=None) -> Bundle:
        if order_nonce is None:
            order_nonce = "0x" + canonical_hash([tx.id for tx in txs])[:16]
        return Bundle(tuple(txs), self.player, order_nonce=order_nonce)


@dataclass(frozen=True)
class Event:
    time: Fraction
    actor: str
    action: str
    payload: str

    def to_json(self):
        return {"time": encode_number(self.time), "actor": self.actor,
                "action": self.action, "payload": self.payload}


@dataclass(frozen=True)
class StageResult:
    outcome: AuctionOutcome
    deltas: tuple
    external_costs: tuple
    events: tuple
    seal_time: Fraction
    omega: int
    sends: tuple  # per player: ((time, bundle hash), ...)

    @property
    def gas_used(self) -> int:
        return self.outcome.block.gas_used


def run_streams(seed: int, run: int, n_players: int):
    root = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=(int(run),))
    kids = root.spawn(2 + n_players)
    return ([np.random.default_rng(kids[0]), np.random.default_rng(kids[1])]
            + [np.random.default_rng(k) for k in kids[2:]])


def _check_profile(spec: StageGameSpec, profile):
    if len(profile) != spec.n_players:
        raise ValidationError(f"profile has {len(profile)} strategies for {spec.n_players} players")
    for i, s in enumerate(profile):
        if not isinstance(s, Strategy):
            raise ValidationError(f"profile entry {i} is not a strategy")
        need = s.get("k", 1) if s.family == "spam" else 1
        if need > spec.players[i].accounts:
            raise ValidationError(f"player {i} spams from {need} accounts but owns "
                                  f"{spec.players[i].accounts}")


def run_stage(spec: StageGameSpec, profile: Sequence[Strategy], seed: int, run: int = 0,
              record: bool = True) -> StageResult:
    _check_profile(spec, profile)
    n = spec.n_players
    timer_rng, beacon_rng, *player_rngs = run_streams(seed, run, n)
    seal = spec.timer.sample(timer_rng)
    omega = int(beacon_rng.integers(0, 2**63, dtype=np.int64))
    state = spec.initial_state

    events = []
    heap = []
    counter = [0]

    def log(t, actor, action, payload):
        if record:
            events.append(Event(t, actor, action, payload))

    def push(t, rank, kind, data):
        counter[0] += 1
        heapq.heappush(heap, (t, rank, counter[0], kind, data))

    contexts, behaviours = [], []
    for i, s in enumerate(profile):
        pspec = spec.players[i]
        values = pspec.values.resolved(spec.value)
        rng = player_rngs[i]
        shift = values.sample_shift(rng)
        ctx = PlayerContext(i, n, spec.account_ids(i), state, FOCAL, spec.claim_gas, values, shift,
                            omega, spec.timer.mean, pspec.competitor_estimate, rng)
        contexts.append(ctx)
        behaviours.append(behavior(s, rng))

    watchers = [s.adaptive for s in profile]
    log(Fraction(0), "device", "beacon", canonical_hash(str(omega)))
    for i, (ctx, beh) in enumerate(zip(contexts, behaviours)):
        if ctx.discovery is not None:
            push(ctx.discovery, i, "discover", None)
        for t, b in beh.start(ctx):
            push(max(to_fraction(t), Fraction(0)), i, "send", (i, b))
    push(seal, n + 1, "seal", None)

    submissions = []
    sends = [[] for _ in range(n)]
    processed = 0
    while heap:
        t, rank, _, kind, data = heapq.heappop(heap)
        if t > seal:
            break
        processed += 1
        if processed > MAX_EVENTS:
            raise RuntimeError("event budget exhausted; strategy loop suspected")
        if kind == "seal":
            log(t, "sequencer", "seal", canonical_hash(encode_number(t)))
            break
        if kind == "discover":
            log(t, f"p{rank}", "discover", canonical_hash(encode_number(contexts[rank].value_at(t))))
        elif kind == "send":
            src, b = data
            log(t, f"p{src}", "send", b.hash)
            sends[src].append((t, b))
            d = spec.to_sequencer(src)
            if d is not None:
                arrival = t + d
                submissions.append((replace(b, timestamp=arrival), arrival))
                push(arrival, n, "arrive", (src, b))
            if spec.privacy == "public":
                for j in range(n):
                    if not (record or watchers[j]):
                        continue
                    dj = spec.peer_delay(src, j) if j != src else None
                    if dj is not None:
                        push(t + dj, j, "observe", (src, b))
        elif kind == "arrive":
            log(t, "sequencer", "arrive", data[1].hash)
        elif kind == "observe":
            src, b = data
            log(t, f"p{rank}", "observe", b.hash)
            for when, nb in behaviours[rank].observe(contexts[rank], t, b):
                push(max(to_fraction(when), t), rank, "send", (rank, nb))

    view = SequencerView(state, tuple(submissions), omega, n, FOCAL, seal)
    outcome = run_mechanism(spec.mechanism, view, spec.gas_limit, spec.mechanism_params)

    deltas, costs = [], []
    for i in range(n):
        pspec = spec.players[i]
        distinct = {(tx.sender, tx.nonce) for _, b in sends[i] for tx in b.txs}
        usage = dict(pspec.upgrades)
        usage["extra_node"] = usage.get("extra_node", 0) + max(0, len(spec.graph.player_nodes(i)) - 1)
        usage["spam_tx"] = usage.get("spam_tx", 0) + max(0, len(distinct) - 1)
        cost = sum((pspec.costs.get(k, Fraction(0)) * u for k, u in usage.items()), Fraction(0))
        costs.append(cost)
        deltas.append(delta_balance(i, state, outcome.state) - cost)
    return StageResult(outcome, tuple(deltas), tuple(costs), tuple(events), seal, omega,
                       tuple(tuple((t, b.hash) for t, b in s) for s in sends))


@dataclass(frozen=True)
class UtilityEstimate:
    mean: tuple
    half_width: tuple  # 95% normal-approximation half widths
    cost: Fraction  # mean block gas used
    runs: int
    win_rate: tuple = ()


def _summarize(results: Sequence[StageResult], n: int) -> UtilityEstimate:
    runs = len(results)
    means, halves, wins = [], [], []
    for i in range(n):
        vals = [r.deltas[i] for r in results]
        mean = sum(vals, Fraction(0)) / runs
        if runs > 1:
            var = sum((float(v - mean)) ** 2 for v in vals) / (runs - 1)
            halves.append(1.96 * math.sqrt(var / runs))
        else:
            halves.append(0.0)
        means.append(mean)
        wins.append(Fraction(sum(1 for r in results if r.outcome.winner == i), runs))
    cost = Fraction(sum(r.gas_used for r in results), runs)
    return UtilityEstimate(tuple(means), tuple(halves), cost, runs, tuple(wins))


def simulate_runs(spec: StageGameSpec, profile, runs: int, seed: int, threads: Optional[int] = None,
                  record: bool = False) -> list:
    if runs < 1:
        raise ValidationError("runs must be at least 1")
    threads = threads or thread_count()
    if threads == 1:
        return [run_stage(spec, profile, seed, r, record) for r in range(runs)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: run_stage(spec, profile, seed, r, record), range(runs)))


def estimate_utilities(spec: StageGameSpec, profile, runs: int, seed: int,
                       threads: Optional[int] = None) -> UtilityEstimate:
    """Monte Carlo utilities: mean Δb per player over ``runs`` seeded runs."""
    _check_profile(spec, profile)
    return _summarize(simulate_runs(spec, profile, runs, seed, threads), spec.n_players)


def block_space_cost(spec: StageGameSpec, profile, runs: int, seed: int,
                     threads: Optional[int] = None) -> Fraction:
    """Expected gas used by the mechanism's block under ``profile``."""
    return estimate_utilities(spec, profile, runs, seed, threads).cost
