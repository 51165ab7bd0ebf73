"""Equilibria over finite strategy grids, Sybil checks, and cost ratios.

A *game* here is anything exposing ``n_players``, ``grid``, ``evaluate``
and ``resized``; :class:`StageGame` wraps a simulated stage game and
:class:`CournotGame` is an exact quantity-competition game used as the
reference case where equilibrium play is not robust to identity splitting.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .domain import Bundle, State
from .errors import CapExceeded, NotAnEquilibrium, UndefinedCost, ValidationError
from .game import StageGameSpec, estimate_utilities
from .numeric import encode_number, pretty, to_fraction
from .search import SEARCH_CAP, enumerate_bundles, is_null_state
from .strategies import Strategy

PROFILE_CAP = 10**5


@dataclass(frozen=True)
class StrategyGrid:
    strategies: tuple

    def __post_init__(self):
        strategies = tuple(dict.fromkeys(self.strategies))
        if not strategies:
            raise ValidationError("strategy grid must be non-empty")
        object.__setattr__(self, "strategies", strategies)

    @classmethod
    def from_families(cls, families: dict) -> "StrategyGrid":
        """Cross product of per-family parameter lists, families in key order."""
        out = []
        for family in sorted(families):
            params = families[family] or {}
            names = sorted(params)
            for combo in itertools.product(*(params[n] for n in names)):
                out.append(Strategy.from_json({"family": family, **dict(zip(names, combo))}))
        return cls(tuple(out))

    def __len__(self):
        return len(self.strategies)

    def __iter__(self):
        return iter(self.strategies)


@dataclass(frozen=True)
class ProfileEvaluation:
    utilities: tuple
    half_widths: tuple
    cost: Fraction


class StageGame:
    """Monte Carlo view of a stage game; evaluations are cached per profile."""

    def __init__(self, spec: StageGameSpec, grid: StrategyGrid, runs: int, seed: int,
                 threads: Optional[int] = None):
        self.spec, self.grid, self.runs, self.seed, self.threads = spec, grid, runs, seed, threads
        self._cache = {}
        self._sizes = {spec.n_players: self}

    @property
    def n_players(self) -> int:
        return self.spec.n_players

    def evaluate(self, profile) -> ProfileEvaluation:
        profile = tuple(profile)
        if profile not in self._cache:
            est = estimate_utilities(self.spec, profile, self.runs, self.seed, self.threads)
            self._cache[profile] = ProfileEvaluation(est.mean, est.half_width, est.cost)
        return self._cache[profile]

    def resized(self, n: int) -> "StageGame":
        # resized games share the size table so evaluations are reused
        if n not in self._sizes:
            game = StageGame(self.spec.with_players(n), self.grid, self.runs, self.seed,
                             self.threads)
            game._sizes = self._sizes
            self._sizes[n] = game
        return self._sizes[n]

    def reseeded(self, seed: int) -> "StageGame":
        return StageGame(self.spec, self.grid, self.runs, seed, self.threads)


@dataclass(frozen=True)
class Quantity:
    q: int

    @property
    def label(self) -> str:
        return f"quantity(q={self.q})"

    def to_json(self):
        return {"family": "quantity", "q": self.q}


class CournotGame:
    """Linear inverse demand ``p = max(a - slope * Q, 0)``, constant unit cost ``c``."""

    def __init__(self, n: int, a, c, slope=1, quantities=range(0, 13)):
        self.n, self.a, self.c, self.slope = n, to_fraction(a), to_fraction(c), to_fraction(slope)
        self.quantities = tuple(quantities)
        self.grid = StrategyGrid(tuple(Quantity(q) for q in self.quantities))
        if n < 1:
            raise ValidationError("need at least one firm")

    @property
    def n_players(self) -> int:
        return self.n

    def evaluate(self, profile) -> ProfileEvaluation:
        total = sum(s.q for s in profile)
        price = max(self.a - self.slope * total, Fraction(0))
        utils = tuple(s.q * (price - self.c) for s in profile)
        return ProfileEvaluation(utils, (0.0,) * len(profile), Fraction(total))

    def resized(self, n: int) -> "CournotGame":
        return CournotGame(n, self.a, self.c, self.slope, self.quantities)

    def reseeded(self, seed: int) -> "CournotGame":
        return self


def _count_profiles(game) -> int:
    return len(game.grid) ** game.n_players


def is_epsilon_ne(game, profile, epsilon) -> bool:
    epsilon = to_fraction(epsilon)
    profile = tuple(profile)
    base = game.evaluate(profile).utilities
    for i in range(game.n_players):
        for s in game.grid:
            if s == profile[i]:
                continue
            dev = profile[:i] + (s,) + profile[i + 1:]
            if game.evaluate(dev).utilities[i] > base[i] + epsilon:
                return False
    return True


def all_profiles(game):
    if _count_profiles(game) > PROFILE_CAP:
        raise CapExceeded(f"{_count_profiles(game)} profiles exceed the cap of {PROFILE_CAP}; "
                          f"use a coarser strategy grid", estimate=_count_profiles(game))
    return itertools.product(game.grid.strategies, repeat=game.n_players)


def find_epsilon_ne(game, epsilon) -> list:
    """Every grid profile from which no unilateral grid deviation gains more than ``epsilon``."""
    return [p for p in all_profiles(game) if is_epsilon_ne(game, p, epsilon)]


def symmetric_ne(game, epsilon) -> Optional[tuple]:
    """First symmetric profile (grid order) that is an epsilon-NE."""
    for s in game.grid:
        p = (s,) * game.n_players
        if is_epsilon_ne(game, p, epsilon):
            return p
    return None


def sybil_inequality(game_n, game_n1, phi_n, phi_n1, epsilon) -> bool:
    """No player gains by splitting into itself plus a clone, within ``epsilon``."""
    epsilon = to_fraction(epsilon)
    u = game_n.evaluate(phi_n).utilities
    v = game_n1.evaluate(phi_n1).utilities
    return all(u[i] + epsilon >= v[i] + v[j]
               for i in range(len(phi_n)) for j in range(len(phi_n1)) if j != i)


def check_sybil_resistance(game, phi: Callable[[int], Sequence], n: int, epsilon) -> bool:
    g_n, g_n1 = game.resized(n), game.resized(n + 1)
    p_n, p_n1 = tuple(phi(n)), tuple(phi(n + 1))
    for g, p, size in ((g_n, p_n, n), (g_n1, p_n1, n + 1)):
        if len(p) != size:
            raise ValidationError(f"phi({size}) has {len(p)} entries")
        if not is_epsilon_ne(g, p, epsilon):
            raise NotAnEquilibrium(f"phi({size}) is not an epsilon-equilibrium")
    return sybil_inequality(g_n, g_n1, p_n, p_n1, epsilon)


def sne_chain(game, profile, n_max: int, epsilon) -> Optional[list]:
    """Extend ``profile`` to a clone-robust equilibrium family up to ``n_max`` players.

    At each size the candidates are the previous profile plus a copy of its
    last strategy, then every symmetric profile in grid order; the first
    candidate that is an equilibrium and satisfies the splitting inequality
    is kept. Returns the chain, or None when some step has no candidate.
    """
    chain = [tuple(profile)]
    current = game
    for m in range(game.n_players, n_max):
        bigger = current.resized(m + 1)
        prev = chain[-1]
        candidates = [prev + (prev[-1],)]
        candidates += [(s,) * (m + 1) for s in bigger.grid if (s,) * (m + 1) != candidates[0]]
        nxt = next((c for c in candidates if is_epsilon_ne(bigger, c, epsilon)
                    and sybil_inequality(current, bigger, prev, c, epsilon)), None)
        if nxt is None:
            return None
        chain.append(nxt)
        current = bigger
    return chain


def min_null_state_cost(state: State, caps, limit: int = SEARCH_CAP):
    """Cheapest valid bundle (by gas, then hash) whose end state has no local MEV left."""
    if is_null_state(state, caps, limit):
        raise UndefinedCost("state is already null; no extraction cost is defined")
    found = []
    for cap in caps:
        for txs, mem_ids, end in enumerate_bundles(state, cap, limit):
            b = Bundle(txs, cap.player, mempool=mem_ids)
            found.append((b.gas, b.hash, b, end))
    found.sort(key=lambda r: (r[0], r[1]))
    for gas, _, b, end in found:
        if is_null_state(end, caps, limit):
            return gas, b
    raise UndefinedCost("no reachable bundle yields a null MEV state")


def _label(profile) -> str:
    return "|".join(s.label for s in profile)


@dataclass
class EquilibriumReport:
    n_players: int
    epsilon: Fraction
    n_max: int
    rows: list = field(default_factory=list)  # dicts per profile
    ne: list = field(default_factory=list)
    sne: list = field(default_factory=list)
    poa: Optional[Fraction] = None
    poa_note: str = ""
    pomev: Optional[Fraction] = None
    numerator: Optional[Fraction] = None
    denominator: Optional[int] = None
    witness: Optional[str] = None
    diagnostics: list = field(default_factory=list)
    sybil_checks: list = field(default_factory=list)

    def to_json(self):
        def num(x):
            return None if x is None else encode_number(x)
        return {
            "n_players": self.n_players, "epsilon": num(self.epsilon),
            "sne_scope": f"up to n_max={self.n_max}",
            "profiles": [{
                "profile": [s.to_json() for s in r["profile"]], "label": _label(r["profile"]),
                "utilities": [num(u) for u in r["utilities"]],
                "half_widths": [round(h, 9) for h in r["half_widths"]],
                "cost": num(r["cost"]), "ne": r["ne"], "sne": r["sne"]} for r in self.rows],
            "ne": [_label(p) for p in self.ne], "sne": [_label(p) for p in self.sne],
            "poa": num(self.poa), "poa_note": self.poa_note,
            "pomev": num(self.pomev), "numerator": num(self.numerator),
            "denominator": num(self.denominator), "witness": self.witness,
            "diagnostics": list(self.diagnostics),
            "sybil_checks": [{"n": n, "resistant": r} for n, r in self.sybil_checks],
        }

    def csv_rows(self):
        header = (["profile"] + [f"u{i}" for i in range(self.n_players)]
                  + ["cost", "ne", "sne"])
        rows = [header]
        for r in self.rows:
            rows.append([_label(r["profile"])] + [pretty(u) for u in r["utilities"]]
                        + [pretty(r["cost"]), int(r["ne"]), int(r["sne"])])
        return rows


def analyze(game, epsilon, n_max: Optional[int] = None, state: Optional[State] = None,
            caps=None) -> EquilibriumReport:
    """Full report: NE and SNE flags, PoA and (when a state is given) PoMEV."""
    epsilon = to_fraction(epsilon)
    n_max = max(n_max or game.n_players, game.n_players)
    report = EquilibriumReport(game.n_players, epsilon, n_max)
    profiles = list(all_profiles(game))
    for p in profiles:
        ev = game.evaluate(p)
        ne = is_epsilon_ne(game, p, epsilon)
        report.rows.append({"profile": p, "utilities": ev.utilities,
                            "half_widths": ev.half_widths, "cost": ev.cost, "ne": ne,
                            "sne": False})
        if ne:
            report.ne.append(p)
    for row in report.rows:
        if row["ne"] and sne_chain(game, row["profile"], n_max, epsilon) is not None:
            row["sne"] = True
            report.sne.append(row["profile"])

    costs = [r["cost"] for r in report.rows]
    if report.ne:
        worst = max(r["cost"] for r in report.rows if r["ne"])
        if min(costs) == 0:
            report.poa_note = ("undefined: the minimum cost over all profiles is 0 "
                               "(the denominator includes non-extraction)")
        else:
            report.poa = worst / min(costs)
    else:
        report.poa_note = "undefined: no epsilon-equilibrium in the grid"

    if state is not None:
        try:
            gas, witness = min_null_state_cost(state, caps)
            report.denominator, report.witness = gas, witness.hash
        except UndefinedCost as exc:
            report.diagnostics.append(str(exc))
        if not report.sne:
            report.diagnostics.append("no Sybil-resistant equilibrium found in the grid")
        elif report.denominator:
            report.numerator = max(r["cost"] for r in report.rows if r["sne"])
            report.pomev = report.numerator / report.denominator
    return report


def reverify(game, profile, epsilon, seed: int) -> bool:
    """Re-check equilibrium membership on fresh random streams with doubled slack."""
    return is_epsilon_ne(game.reseeded(seed), profile, 2 * to_fraction(epsilon))
