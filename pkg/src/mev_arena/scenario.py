"""Scenario files: one JSON document per experiment.

Every document carries ``schema_version`` (currently 1) and a ``kind``:

``stage``
    a simulated stage game (``game``), a strategy ``grid`` and ``analysis``
    parameters (``epsilon``, ``runs``, ``seed``, ``n_range``, optional
    ``profile`` for ``simulate`` and ``phi`` for Sybil checks).
``cournot``
    an exact quantity game (``cournot``) plus ``analysis``.
``kev``
    ``kev.items`` as ``[gas, gas_price]`` pairs and ``kev.gas_limit``.
``block``
    a ``block.state``, ``block.bundles`` and ``block.gas_limit``, or a
    ``block.adversarial`` family with ``L``, ``g_min``, ``m``, ``eps``.
``search``
    a ``search.state`` and per-player ``search.caps``.

Numbers are integers or exact strings (``"3/2"``, ``"0.01"``); JSON floats
are refused. Loading validates structure with JSON Schema and then every
cross reference, reporting all violations together; nothing is returned
unless the whole file is valid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

import jsonschema

from .domain import Bundle, Transaction, instruction_from_json
from .equilibrium import CournotGame, StageGame, StrategyGrid
from .errors import MevArenaError, ValidationError
from .game import COST_KINDS, BlockTimer, LatencyGraph, PlayerSpec, StageGameSpec, ValuePath
from .mechanisms import MECHANISM_NAMES
from .numeric import to_fraction
from .search import PlayerCapabilities, TxTemplate
from .serialize import state_from_json
from .strategies import FAMILIES, Strategy

SCHEMA_VERSION = 1


class ScenarioIOError(MevArenaError):
    """The scenario file could not be read (as opposed to being invalid)."""


NUM = {"anyOf": [{"type": "integer"},
                 {"type": "string", "pattern": r"^\s*-?\d+(\.\d+)?(\s*/\s*\d+)?\s*$"}]}
NONNEG = {"anyOf": [{"type": "integer", "minimum": 0},
                    {"type": "string", "pattern": r"^\s*\d+(\.\d+)?(\s*/\s*\d+)?\s*$"}]}
POS_INT = {"type": "integer", "minimum": 1}

STRATEGY = {"type": "object", "required": ["family"],
            "properties": {"family": {"enum": sorted(FAMILIES)}}}

PLAYER = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "accounts": POS_INT, "funds": NONNEG,
        "values": {"type": "object", "additionalProperties": False, "properties": {
            "steps": {"type": "array", "minItems": 1,
                      "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                "prefixItems": [NONNEG, {"anyOf": [NONNEG, {"type": "null"}]}]}},
            "delay": {"type": "array", "minItems": 2, "maxItems": 2, "items": NONNEG}}},
        "upgrades": {"type": "object", "propertyNames": {"enum": list(COST_KINDS)},
                     "additionalProperties": {"type": "integer", "minimum": 0}},
        "costs": {"type": "object", "propertyNames": {"enum": list(COST_KINDS)},
                  "additionalProperties": NONNEG},
        "competitor_estimate": {"type": "integer", "minimum": 0},
    },
}

LATENCY = {
    "type": "object",
    "oneOf": [
        {"required": ["star"], "additionalProperties": False, "properties": {"star": {
            "type": "object", "required": ["to_sequencer"], "additionalProperties": False,
            "properties": {"to_sequencer": {"anyOf": [NONNEG, {"type": "array", "items": NONNEG}]},
                           "peer": NONNEG}}}},
        {"required": ["nodes", "edges", "owner", "sequencer"], "additionalProperties": False,
         "properties": {
             "nodes": {"type": "array", "items": {"type": "string"}, "minItems": 1},
             "edges": {"type": "array", "items": {
                 "type": "array", "minItems": 3, "maxItems": 3,
                 "prefixItems": [{"type": "string"}, {"type": "string"}, NONNEG]}},
             "owner": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
             "sequencer": {"type": "string"}}},
    ],
}

TIMER = {"type": "object", "required": ["kind"], "oneOf": [
    {"properties": {"kind": {"const": "fixed"}, "T": NUM}, "required": ["T"]},
    {"properties": {"kind": {"const": "exponential"}, "mean": NUM}, "required": ["mean"]},
    {"properties": {"kind": {"const": "uniform"}, "low": NUM, "high": NUM},
     "required": ["low", "high"]},
]}

GAME = {
    "type": "object", "required": ["players", "latency", "mechanism"], "additionalProperties": False,
    "properties": {
        "players": {"type": "array", "minItems": 1, "items": PLAYER},
        "latency": LATENCY, "timer": TIMER,
        "mechanism": {"enum": list(MECHANISM_NAMES)},
        "mechanism_params": {"type": "object", "additionalProperties": False, "properties": {
            "whitelist": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            "censor": {"type": "boolean"}}},
        "gas_limit": POS_INT, "value": NONNEG, "claim_gas": POS_INT,
        "privacy": {"enum": ["public", "private"]},
        "search_gas_grid": {"type": "array", "minItems": 1, "items": NONNEG},
    },
}

ANALYSIS = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "epsilon": NONNEG, "runs": POS_INT, "seed": {"type": "integer", "minimum": 0},
        "n_range": {"type": "array", "minItems": 2, "maxItems": 2, "items": POS_INT},
        "profile": {"type": "array", "items": STRATEGY},
        "phi": {"anyOf": [{"const": "symmetric-ne"}, STRATEGY]},
        "sweep_n": {"type": "boolean"},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object", "required": ["schema_version", "kind"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"}, "description": {"type": "string"},
        "kind": {"enum": ["stage", "cournot", "kev", "block", "search"]},
        "game": GAME,
        "grid": {"anyOf": [{"type": "array", "minItems": 1, "items": STRATEGY},
                           {"type": "object", "required": ["families"]}]},
        "analysis": ANALYSIS,
        "cournot": {"type": "object", "required": ["a", "c"], "additionalProperties": False,
                    "properties": {"a": NUM, "c": NONNEG, "slope": NUM,
                                   "quantities": {"type": "array", "minItems": 1,
                                                  "items": {"type": "integer", "minimum": 0}}}},
        "kev": {"type": "object", "required": ["items", "gas_limit"], "additionalProperties": False,
                "properties": {"gas_limit": POS_INT, "items": {"type": "array", "items": {
                    "type": "array", "minItems": 2, "maxItems": 2,
                    "prefixItems": [POS_INT, NONNEG]}}}},
        "block": {"type": "object", "properties": {
            "gas_limit": POS_INT, "state": {"type": "object"},
            "bundles": {"type": "array", "items": {"type": "object"}},
            "conflicts": {"type": "array", "items": {
                "type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "integer"}}},
            "adversarial": {"type": "object", "required": ["L", "g_min", "m", "eps"],
                            "properties": {"L": POS_INT, "g_min": POS_INT, "m": NONNEG,
                                           "eps": NONNEG}}}},
        "search": {"type": "object", "required": ["state", "caps"], "properties": {
            "state": {"type": "object"},
            "caps": {"type": "array", "minItems": 1, "items": {
                "type": "object", "required": ["player"], "properties": {
                    "player": {"type": "integer", "minimum": 0},
                    "templates": {"type": "array"}, "mempool": {"type": "array"},
                    "max_bundle_len": POS_INT,
                    "gas_price_grid": {"type": "array", "minItems": 1, "items": NONNEG},
                    "budget": NONNEG}}}}},
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "stage"}}},
         "then": {"required": ["game", "grid"]}},
        {"if": {"properties": {"kind": {"const": "cournot"}}}, "then": {"required": ["cournot"]}},
        {"if": {"properties": {"kind": {"const": "kev"}}}, "then": {"required": ["kev"]}},
        {"if": {"properties": {"kind": {"const": "block"}}}, "then": {"required": ["block"]}},
        {"if": {"properties": {"kind": {"const": "search"}}}, "then": {"required": ["search"]}},
    ],
}


@dataclass(frozen=True)
class Analysis:
    epsilon: Fraction = Fraction(0)
    runs: int = 100
    seed: int = 0
    n_range: tuple = (0, 0)
    profile: Optional[tuple] = None
    phi: object = None
    sweep_n: bool = False


@dataclass
class Scenario:
    kind: str
    name: str = ""
    raw: dict = field(default_factory=dict, repr=False)
    spec: Optional[StageGameSpec] = None
    grid: Optional[StrategyGrid] = None
    analysis: Analysis = Analysis()
    cournot: Optional[dict] = None
    kev: Optional[dict] = None
    block: Optional[dict] = None
    search: Optional[dict] = None

    def stage_game(self, runs=None, seed=None, threads=None, n=None) -> StageGame:
        spec = self.spec if n is None else self.spec.with_players(n)
        return StageGame(spec, self.grid, runs or self.analysis.runs,
                         self.analysis.seed if seed is None else seed, threads)

    def cournot_game(self, n=None) -> CournotGame:
        c = self.cournot
        return CournotGame(n or self.analysis.n_range[0], c["a"], c["c"], c.get("slope", 1),
                           c.get("quantities", range(0, 13)))


def _path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def schema_violations(doc) -> list:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    return sorted(f"{_path(e)}: {e.message}" for e in validator.iter_errors(doc))


def _graph_from_json(data, n_players) -> LatencyGraph:
    if "star" in data:
        star = data["star"]
        to_seq = star["to_sequencer"]
        if isinstance(to_seq, list):
            if len(to_seq) != n_players:
                raise ValidationError(f"game/latency/star/to_sequencer: needs {n_players} entries")
            to_seq = [to_fraction(x) for x in to_seq]
        else:
            to_seq = to_fraction(to_seq)
        return LatencyGraph.star(n_players, to_seq, star.get("peer"))
    return LatencyGraph(tuple(data["nodes"]), tuple(tuple(e) for e in data["edges"]),
                        data["owner"], data["sequencer"])


def _timer_from_json(data) -> BlockTimer:
    if data is None:
        return BlockTimer()
    if data["kind"] == "fixed":
        return BlockTimer("fixed", data["T"])
    if data["kind"] == "exponential":
        return BlockTimer("exponential", data["mean"])
    return BlockTimer("uniform", data["low"], data["high"])


def _player_from_json(data) -> PlayerSpec:
    values = data.get("values")
    path = ValuePath() if values is None else ValuePath(
        tuple(tuple(s) for s in values["steps"]),
        tuple(values["delay"]) if "delay" in values else None)
    return PlayerSpec(data.get("accounts", 1), data.get("funds", 10**6), path,
                      data.get("upgrades", {}), data.get("costs", {}),
                      data.get("competitor_estimate"))


def _grid_from_json(data) -> StrategyGrid:
    if isinstance(data, dict):
        return StrategyGrid.from_families(data["families"])
    return StrategyGrid(tuple(Strategy.from_json(s) for s in data))


def _spec_from_json(g) -> StageGameSpec:
    players = tuple(_player_from_json(p) for p in g["players"])
    kwargs = {}
    for key in ("gas_limit", "claim_gas", "value", "privacy"):
        if key in g:
            kwargs[key] = g[key]
    if "search_gas_grid" in g:
        kwargs["search_gas_grid"] = tuple(g["search_gas_grid"])
    return StageGameSpec(players, _graph_from_json(g["latency"], len(players)),
                         _timer_from_json(g.get("timer")), g["mechanism"],
                         g.get("mechanism_params", {}), **kwargs)


def _caps_from_json(c) -> PlayerCapabilities:
    templates = tuple(TxTemplate(int(t["sender"]),
                                 tuple(instruction_from_json(i) for i in t["instructions"]),
                                 int(t["gas"])) for t in c.get("templates", []))
    mempool = tuple(Transaction.from_json(t) for t in c.get("mempool", []))
    budget = c.get("budget")
    return PlayerCapabilities(int(c["player"]), templates, mempool, c.get("max_bundle_len", 1),
                              tuple(c.get("gas_price_grid", [0])),
                              None if budget is None else to_fraction(budget))


def _guard(problems, where, fn, *args):
    try:
        return fn(*args)
    except ValidationError as exc:
        problems.extend(f"{where}: {v}" for v in exc.violations)
    except (KeyError, TypeError, ValueError, IndexError, ZeroDivisionError) as exc:
        problems.append(f"{where}: {exc}")
    return None


def build_scenario(doc) -> Scenario:
    """Validate a parsed document and build the scenario, or raise with every violation."""
    if not isinstance(doc, dict):
        raise ValidationError("scenario must be a JSON object")
    problems = schema_violations(doc)
    if problems:
        raise ValidationError(f"{len(problems)} schema violation(s)", problems)
    sc = Scenario(doc["kind"], doc.get("name", ""), doc)
    a = doc.get("analysis", {})
    n_players = len(doc["game"]["players"]) if "game" in doc else 2
    n_range = tuple(a.get("n_range", (n_players, n_players)))
    if n_range[1] < n_range[0]:
        problems.append("analysis/n_range: upper end below lower end")
    profile = phi = None
    if "profile" in a:
        profile = _guard(problems, "analysis/profile",
                         lambda: tuple(Strategy.from_json(s) for s in a["profile"]))
    if isinstance(a.get("phi"), dict):
        phi = _guard(problems, "analysis/phi", Strategy.from_json, a["phi"])
    else:
        phi = a.get("phi")
    sc.analysis = Analysis(to_fraction(a.get("epsilon", 0)), a.get("runs", 100),
                           a.get("seed", 0), n_range, profile, phi, bool(a.get("sweep_n", False)))

    if sc.kind == "stage":
        sc.spec = _guard(problems, "game", _spec_from_json, doc["game"])
        sc.grid = _guard(problems, "grid", _grid_from_json, doc["grid"])
        if sc.spec is not None:
            if n_range[0] != sc.spec.n_players:
                problems.append(f"analysis/n_range: starts at {n_range[0]} but the game has "
                                f"{sc.spec.n_players} players")
            if profile is not None and len(profile) != sc.spec.n_players:
                problems.append(f"analysis/profile: {len(profile)} strategies for "
                                f"{sc.spec.n_players} players")
            for label, strategies in (("grid", sc.grid or ()), ("analysis/profile", profile or ())):
                for s in strategies:
                    if s.family == "spam" and s.get("k") > min(p.accounts for p in sc.spec.players):
                        problems.append(f"{label}: {s.label} needs more accounts than a player owns")
    elif sc.kind == "cournot":
        sc.cournot = doc["cournot"]
        if not a.get("n_range"):
            sc.analysis = replace(sc.analysis, n_range=(2, 3))
        _guard(problems, "cournot", sc.cournot_game)
    elif sc.kind == "kev":
        sc.kev = doc["kev"]
    elif sc.kind == "block":
        b = doc["block"]
        if "adversarial" not in b:
            for key in ("state", "bundles", "gas_limit"):
                if key not in b:
                    problems.append(f"block: missing {key!r}")
        if not problems and "adversarial" not in b:
            state = _guard(problems, "block/state", state_from_json, b["state"])
            bundles = _guard(problems, "block/bundles",
                             lambda: [Bundle.from_json(x) for x in b["bundles"]])
            for k, (i, j) in enumerate(b.get("conflicts", [])):
                for end in (i, j):
                    if bundles is not None and not 0 <= end < len(bundles):
                        problems.append(f"block/conflicts/{k}: unknown bundle {end}")
            sc.block = {"state": state, "bundles": bundles, "gas_limit": b["gas_limit"],
                        "conflicts": [tuple(c) for c in b["conflicts"]] if "conflicts" in b else None}
        elif "adversarial" in b:
            sc.block = {"adversarial": b["adversarial"]}
    elif sc.kind == "search":
        s = doc["search"]
        state = _guard(problems, "search/state", state_from_json, s["state"])
        caps = []
        for k, c in enumerate(s["caps"]):
            cap = _guard(problems, f"search/caps/{k}", _caps_from_json, c)
            if cap is not None and state is not None:
                if cap.player not in state.players():
                    problems.append(f"search/caps/{k}: player {cap.player} owns no account")
                for t in cap.templates:
                    if state.owner_of(t.sender) != cap.player:
                        problems.append(f"search/caps/{k}: template sender {t.sender} "
                                        f"is not an account of player {cap.player}")
            caps.append(cap)
        sc.search = {"state": state, "caps": caps}
    if problems:
        raise ValidationError(f"{len(problems)} violation(s)", problems)
    return sc


def read_document(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioIOError(f"cannot read scenario {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text, parse_float=_reject_float)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def _reject_float(text):
    raise ValueError(f"float literal {text} is not allowed; write it as a string such as \"{text}\"")


def load_scenario(path) -> Scenario:
    return build_scenario(read_document(path))


def validate_scenario(path) -> list:
    """Empty list when valid; otherwise every violation. I/O errors propagate."""
    try:
        load_scenario(path)
    except ValidationError as exc:
        return exc.violations
    return []
