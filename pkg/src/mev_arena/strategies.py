"""Strategy families for the stage game.

A :class:`Strategy` is a hashable value (family name plus parameters) so
profiles can key caches and appear in reports. :func:`behavior` turns it into
an object the engine drives:

* ``start(ctx)`` is called once at time 0, after the public beacon, and
  returns the initial ``(send_time, bundle)`` schedule;
* ``observe(ctx, now, bundle)`` is called when a competitor's bundle becomes
  visible, and may return further sends. Non-adaptive families never react.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import ValidationError
from .numeric import encode_number, pretty, to_fraction

FAMILIES = {
    "noop": (),
    "fixed_bid": ("m",),
    "reactive": ("m0", "r", "budget"),
    "snipe": ("delta", "m"),
    "spam": ("k", "m"),
    "shade": ("alpha",),
    "mixed": ("components",),
}
_OPTIONAL = {"fixed_bid": ("order_nonce",)}


@dataclass(frozen=True)
class Strategy:
    family: str
    params: tuple = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown strategy family {self.family!r}")
        params = dict(self.params)
        required = FAMILIES[self.family]
        missing = [p for p in required if p not in params]
        extra = [p for p in params if p not in required + _OPTIONAL.get(self.family, ())]
        if missing or extra:
            raise ValidationError(f"strategy {self.family}: missing {missing}, unexpected {extra}")
        object.__setattr__(self, "params", tuple(sorted(params.items())))

    # constructors
    @classmethod
    def noop(cls):
        return cls("noop")

    @classmethod
    def fixed_bid(cls, m, order_nonce=None):
        params = {"m": to_fraction(m)}
        if order_nonce is not None:
            params["order_nonce"] = order_nonce
        return cls("fixed_bid", tuple(params.items()))

    @classmethod
    def reactive(cls, m0, r, budget):
        return cls("reactive", (("m0", to_fraction(m0)), ("r", to_fraction(r)),
                                ("budget", to_fraction(budget))))

    @classmethod
    def snipe(cls, delta, m):
        return cls("snipe", (("delta", to_fraction(delta)), ("m", to_fraction(m))))

    @classmethod
    def spam(cls, k, m):
        return cls("spam", (("k", int(k)), ("m", to_fraction(m))))

    @classmethod
    def shade(cls, alpha):
        return cls("shade", (("alpha", to_fraction(alpha)),))

    @classmethod
    def mixed(cls, components):
        comps = tuple((to_fraction(p), s) for p, s in components)
        if any(p < 0 for p, _ in comps) or sum(p for p, _ in comps) != 1:
            raise ValidationError("mixed strategy weights must be non-negative and sum to 1")
        return cls("mixed", (("components", comps),))

    def get(self, name, default=None):
        return dict(self.params).get(name, default)

    @property
    def adaptive(self) -> bool:
        if self.family == "mixed":
            return any(s.adaptive for _, s in self.get("components"))
        return self.family == "reactive"

    @property
    def label(self) -> str:
        if self.family == "mixed":
            inner = ";".join(f"{pretty(p)}:{s.label}" for p, s in self.get("components"))
            return f"mixed({inner})"
        if not self.params:
            return self.family
        args = ",".join(f"{k}={v if isinstance(v, str) else pretty(v)}" for k, v in self.params)
        return f"{self.family}({args})"

    def to_json(self):
        out = {"family": self.family}
        for k, v in self.params:
            if k == "components":
                out[k] = [[encode_number(p), s.to_json()] for p, s in v]
            elif k == "order_nonce":
                out[k] = v
            else:
                out[k] = encode_number(v)
        return out

    @classmethod
    def from_json(cls, data) -> "Strategy":
        data = dict(data)
        family = data.pop("family", None)
        if family == "mixed":
            return cls.mixed([(p, cls.from_json(s)) for p, s in data.get("components", [])])
        params = {}
        for k, v in data.items():
            if k == "order_nonce":
                params[k] = str(v)
            elif k == "k":
                params[k] = int(v)
            else:
                params[k] = to_fraction(v)
        return cls(family, tuple(params.items()))


class _Behavior:
    def start(self, ctx):
        return []

    def observe(self, ctx, now, bundle):
        return []


class _NoOp(_Behavior):
    pass


class _FixedBid(_Behavior):
    def __init__(self, m, order_nonce=None):
        self.m, self.order_nonce = m, order_nonce

    def start(self, ctx):
        if ctx.discovery is None:
            return []
        return [(ctx.discovery, ctx.bundle([ctx.claim_tx(self.m)], self.order_nonce))]


class _Shade(_Behavior):
    def __init__(self, alpha):
        self.alpha = alpha

    def start(self, ctx):
        if ctx.discovery is None:
            return []
        price = self.alpha * ctx.value_at(ctx.discovery) / ctx.claim_gas
        return [(ctx.discovery, ctx.bundle([ctx.claim_tx(price)]))]


class _Snipe(_Behavior):
    def __init__(self, delta, m):
        self.delta, self.m = delta, m

    def start(self, ctx):
        if ctx.discovery is None:
            return []
        when = max(ctx.discovery, ctx.expected_seal - self.delta)
        return [(when, ctx.bundle([ctx.claim_tx(self.m)]))]


class _Spam(_Behavior):
    def __init__(self, k, m):
        self.k, self.m = k, m

    def start(self, ctx):
        if ctx.discovery is None:
            return []
        return [(ctx.discovery, ctx.bundle([ctx.claim_tx(self.m, account=a)]))
                for a in range(self.k)]


class _Reactive(_Behavior):
    """Priority-gas-auction counter-bidder.

    Opens at ``m0`` and, whenever a competing claim is seen whose price is
    not strictly below its own, replaces its transaction (same nonce) with
    the competitor's price times ``r``, never spending more than ``budget``
    in fees. On exact ties the player named by the beacon (``omega mod n``)
    holds; everyone else raises.
    """

    def __init__(self, m0, r, budget):
        self.m0, self.r, self.budget = m0, r, budget
        self.price = None

    def start(self, ctx):
        if ctx.discovery is None:
            return []
        self.price = min(self.m0, self.budget / ctx.claim_gas)
        return [(ctx.discovery, ctx.bundle([ctx.claim_tx(self.price)]))]

    def observe(self, ctx, now, bundle):
        if self.price is None or now < ctx.discovery:
            return []
        rival = max((tx.gas_price for tx in bundle.txs if ctx.focal in tx.claims()), default=None)
        if rival is None:
            return []
        holder = ctx.omega % ctx.n_players == ctx.player
        if rival < self.price or (rival == self.price and holder):
            return []
        cap = self.budget / ctx.claim_gas
        new = min(rival * self.r, cap)
        if new <= rival or new <= self.price:
            return []
        self.price = new
        return [(now, ctx.bundle([ctx.claim_tx(new)]))]


def behavior(strategy: Strategy, rng=None):
    fam = strategy.family
    if fam == "noop":
        return _NoOp()
    if fam == "fixed_bid":
        return _FixedBid(strategy.get("m"), strategy.get("order_nonce"))
    if fam == "shade":
        return _Shade(strategy.get("alpha"))
    if fam == "snipe":
        return _Snipe(strategy.get("delta"), strategy.get("m"))
    if fam == "spam":
        return _Spam(strategy.get("k"), strategy.get("m"))
    if fam == "reactive":
        return _Reactive(strategy.get("m0"), strategy.get("r"), strategy.get("budget"))
    if fam == "mixed":
        draw = Fraction(float(rng.random())) if rng is not None else Fraction(0)
        acc = Fraction(0)
        comps = strategy.get("components")
        for p, s in comps:
            acc += p
            if draw < acc:
                return behavior(s, rng)
        return behavior(comps[-1][1], rng)
    raise ValidationError(f"unknown strategy family {fam!r}")
