"""JSON encoding of states (canonical key order, exact numbers).

State document::

    {"n_tokens": 2, "proposer": 0,
     "prices": {"0": 1, "1": "4"},
     "accounts": [{"id": 1, "owner": 0}],
     "balances": [[1, 0, 100]],
     "opportunities": [{"id": 1, "value": 100, "claim_gas": 10, "claimed": false}],
     "pools": [{"id": 1, "tokens": [0, 1], "reserves": [100, 100]}],
     "nonces": [[1, 0]]}
"""

from __future__ import annotations

import json

from .domain import Opportunity, Pool, State
from .errors import ValidationError
from .numeric import encode_number, to_fraction


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def state_to_json(state: State) -> dict:
    return {
        "n_tokens": state.n_tokens,
        "proposer": state.proposer,
        "prices": {str(t): encode_number(p) for t, p in sorted(state.pricing.items())},
        "accounts": [{"id": a.id, "owner": a.owner} for _, a in sorted(state.accounts.items())],
        "balances": [[a, t, encode_number(v)] for (a, t), v in sorted(state.balances.items())],
        "opportunities": [
            {"id": o.id, "value": encode_number(o.value), "claim_gas": o.claim_gas,
             "claimed": o.claimed}
            for _, o in sorted(state.opportunities.items())
        ],
        "pools": [
            {"id": p.id, "tokens": [p.token_x, p.token_y], "reserves": [p.reserve_x, p.reserve_y]}
            for _, p in sorted(state.pools.items())
        ],
        "nonces": [[a, n] for a, n in sorted(state.nonces.items())],
    }


def state_from_json(data) -> State:
    try:
        accounts = {int(a["id"]): a.get("owner") for a in data.get("accounts", [])}
        balances = {}
        for addr, tok, amt in data.get("balances", []):
            balances[(int(addr), int(tok))] = to_fraction(amt)
        opps = [Opportunity(int(o["id"]), to_fraction(o["value"]), int(o["claim_gas"]),
                            bool(o.get("claimed", False)))
                for o in data.get("opportunities", [])]
        pools = [Pool(int(p["id"]), int(p["tokens"][0]), int(p["tokens"][1]),
                      int(p["reserves"][0]), int(p["reserves"][1]))
                 for p in data.get("pools", [])]
        nonces = {int(a): int(n) for a, n in data.get("nonces", [])}
        prices = {int(t): to_fraction(p) for t, p in data.get("prices", {}).items()}
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ValidationError(f"malformed state: {exc}") from exc
    return State.create(accounts, balances, opps, pools, prices,
                        proposer=int(data.get("proposer", 0)),
                        n_tokens=data.get("n_tokens"), nonces=nonces)
