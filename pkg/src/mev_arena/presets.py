"""Built-in scenario documents.

Chain presets pair an ordering mechanism with a mempool-privacy setting in
the way the corresponding networks operate. The remaining presets are the
small reference games used by the acceptance suite.
"""

from __future__ import annotations

import copy

from .serialize import dumps

V, G = 1000, 50
BIDS = [{"family": "fixed_bid", "m": m} for m in (1, 2, 4, 6)]


def _stage(name, mechanism, players=2, *, privacy=None, grid=None, latency=None, params=None,
           value=V, claim_gas=G, gas_limit=1000, accounts=1, epsilon="50", runs=100,
           n_range=None, description="", **analysis):
    game = {
        "players": [{"accounts": accounts, "funds": 10**6}] * players,
        "latency": latency or {"star": {"to_sequencer": 1, "peer": 2}},
        "timer": {"kind": "fixed", "T": 100},
        "mechanism": mechanism,
        "gas_limit": gas_limit, "value": value, "claim_gas": claim_gas,
        "search_gas_grid": [0],
    }
    if privacy:
        game["privacy"] = privacy
    if params:
        game["mechanism_params"] = params
    doc = {
        "schema_version": 1, "name": name, "kind": "stage", "description": description,
        "game": game, "grid": grid or BIDS,
        "analysis": {"epsilon": epsilon, "runs": runs, "seed": 7,
                     "n_range": n_range or [players, players], **analysis},
    }
    return doc


def _chain_presets():
    noop_bids = [{"family": "noop"}] + BIDS
    spam = [{"family": "spam", "k": k, "m": "1/2"} for k in (1, 2, 3)]
    return [
        _stage("ethereum-geth", "pga", privacy="public", grid=noop_bids,
               description="priority gas auction over a public mempool"),
        _stage("bsc", "pga", privacy="public", grid=noop_bids,
               description="priority gas auction over a public mempool"),
        _stage("polygon", "random", privacy="public", grid=spam, value=100, claim_gas=10,
               gas_limit=200, accounts=3, epsilon="5",
               description="uniformly random ordering; replication is the lever"),
        _stage("avalanche", "fifo", privacy="private", grid=noop_bids,
               latency={"star": {"to_sequencer": [1, 3], "peer": 4}},
               description="arrival-time ordering, private mempool"),
        _stage("arbitrum", "fifo", privacy="private", grid=noop_bids,
               latency={"star": {"to_sequencer": [1, 3], "peer": 4}},
               description="arrival-time ordering at a single sequencer, private mempool"),
        _stage("solana", "fifo", privacy="public", grid=noop_bids,
               latency={"star": {"to_sequencer": [1, 3], "peer": 4}},
               description="arrival-time ordering with a public view"),
        _stage("shutter", "pga", privacy="private", grid=noop_bids,
               description="gas-price ordering over an encrypted mempool"),
        _stage("flashbots", "fbca", privacy="private",
               grid=[{"family": "noop"}] + [{"family": "fixed_bid", "m": m} for m in (1, 10, 20)],
               description="sealed bundle auction with conflict pruning"),
    ]


def _reference_presets():
    out = [
        _stage("pga-uniagent", "pga", players=1, runs=200, n_range=[1, 2],
               description="one searcher, no competition"),
        _stage("pga-war", "pga", players=2, runs=200, n_range=[2, 3],
               description="two searchers racing on gas price with fixed bids"),
        _stage("dictator-censor", "dictator", players=1, runs=200, n_range=[1, 2],
               params={"whitelist": [0], "censor": True},
               description="whitelisted searcher; other claims are censored"),
        _stage("random-spam", "random", players=1, runs=200, n_range=[1, 4],
               grid=[{"family": "spam", "k": k, "m": "1/2"} for k in (1, 2, 3)],
               value=100, claim_gas=10, gas_limit=200, accounts=3, epsilon="5", sweep_n=True,
               description="spam replication under random ordering; per-tx fee 5"),
        _stage("fbca-fullbid", "fbca", players=1, runs=20, n_range=[1, 4], epsilon="1",
               grid=[{"family": "noop"}, {"family": "fixed_bid", "m": 20}],
               phi={"family": "fixed_bid", "m": 20},
               description="sealed bids at full value; clones gain nothing"),
        {"schema_version": 1, "name": "cournot", "kind": "cournot",
         "description": "linear-demand quantity competition, a=13, c=1",
         "cournot": {"a": 13, "c": 1, "slope": 1, "quantities": list(range(13))},
         "analysis": {"epsilon": 0, "n_range": [2, 3], "phi": "symmetric-ne", "seed": 7}},
        {"schema_version": 1, "name": "kev-example", "kind": "kev",
         "description": "greedy by price misses the two smaller transactions",
         "kev": {"items": [[6, 5], [5, 4], [5, 4]], "gas_limit": 10}},
        {"schema_version": 1, "name": "block-adversarial", "kind": "block",
         "description": "one slightly better bundle blocks k-1 others",
         "block": {"adversarial": {"L": 100, "g_min": 10, "m": 1, "eps": "0.01"}}},
        {"schema_version": 1, "name": "search-example", "kind": "search",
         "description": "claim an opportunity directly or via a swap",
         "search": {
             "state": {"n_tokens": 2, "proposer": 0, "prices": {"0": 1, "1": 1},
                       "accounts": [{"id": 1, "owner": 0}, {"id": 2, "owner": 1}],
                       "balances": [[1, 0, 1000], [2, 0, 1000]],
                       "opportunities": [{"id": 1, "value": 100, "claim_gas": 10,
                                          "claimed": False}],
                       "pools": [{"id": 1, "tokens": [0, 1], "reserves": [1000, 1000]}],
                       "nonces": []},
             "caps": [
                 {"player": 0, "max_bundle_len": 2, "gas_price_grid": [0, 1],
                  "templates": [{"sender": 1, "gas": 10,
                                 "instructions": [{"op": "claim", "opportunity": 1}]}]},
                 {"player": 1, "max_bundle_len": 1, "gas_price_grid": [1],
                  "templates": [{"sender": 2, "gas": 60,
                                 "instructions": [{"op": "claim", "opportunity": 1}]}]},
             ]}},
    ]
    return out


def all_presets() -> dict:
    return {d["name"]: d for d in _reference_presets() + _chain_presets()}


def get_preset(name: str) -> dict:
    presets = all_presets()
    if name not in presets:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(presets))}")
    return copy.deepcopy(presets[name])


def write_presets(directory) -> list:
    from pathlib import Path
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, doc in sorted(all_presets().items()):
        path = out / f"{name}.json"
        path.write_text(dumps(doc))
        written.append(path)
    return written
