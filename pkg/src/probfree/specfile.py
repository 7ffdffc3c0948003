"""Market-spec JSON files.

Top-level keys::

    {
      "space":   {"dim": 1, "lo": [0.0], "hi": [1.0]},
      "assets":  [{"name": "stock", "payoff": ["add", ["const", 1], ["coord", 0]], "price": 1.5}],
      "claims":  [{"name": "call", "payoff": ["posp", ["sub", ["coord", 0], ["const", 0.5]]]}],
      "options": {"grid": 257, "feas_tol": 1e-8, "gap_tol": 1e-8, "max_cuts": 500, "eps_pos": 1e-9}
    }

The riskless asset is implicit. It may be listed explicitly as the first
asset with ``"riskless": true``, in which case its payoff must be
``["const", 1]`` and its price 1. Errors carry the line and column of the
offending JSON value.
"""

from __future__ import annotations

import json
import json.decoder
import json.scanner
from dataclasses import dataclass, field

from .market import Market
from .payoff import Claim, Const, ExprError, from_json
from .state_space import StateSpace

OPTION_KEYS = {"grid", "feas_tol", "gap_tol", "cs_tol", "max_cuts", "eps_pos", "strict_tol"}


class SpecError(ValueError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        where = f"line {line}, column {col}: " if line is not None else ""
        super().__init__(where + message)
        self.line, self.col = line, col


class _PosList(list):
    pos = 0


class _PosDict(dict):
    pos = 0


class _Decoder(json.JSONDecoder):
    """JSON decoder that remembers the source offset of every array and object."""

    def __init__(self):
        super().__init__()
        base_array, base_object = self.parse_array, self.parse_object

        def parse_array(s_and_end, *args):
            values, end = base_array(s_and_end, *args)
            out = _PosList(values)
            out.pos = s_and_end[1] - 1
            return out, end

        def parse_object(s_and_end, *args):
            values, end = base_object(s_and_end, *args)
            out = _PosDict(values)
            out.pos = s_and_end[1] - 1
            return out, end

        self.parse_array = parse_array
        self.parse_object = parse_object
        self.scan_once = json.scanner.py_make_scanner(self)


def _linecol(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


@dataclass
class MarketSpec:
    market: Market
    claims: dict[str, Claim]
    options: dict = field(default_factory=dict)


def parse_spec(text: str) -> MarketSpec:
    try:
        doc = _Decoder().decode(text)
    except json.JSONDecodeError as exc:
        raise SpecError(exc.msg, exc.lineno, exc.colno) from None

    def fail(msg, node):
        pos = getattr(node, "pos", None)
        if pos is None:
            raise SpecError(msg)
        raise SpecError(msg, *_linecol(text, pos))

    def expr(node, owner):
        try:
            return from_json(node)
        except ExprError as exc:
            target = located = node if hasattr(node, "pos") else owner
            for step in exc.path:
                target = target[step]
                if hasattr(target, "pos"):
                    located = target
            fail(str(exc), located)

    if not isinstance(doc, dict):
        fail("spec must be a JSON object", doc)
    for key in ("space", "assets"):
        if key not in doc:
            fail(f"missing top-level key {key!r}", doc)
    unknown = set(doc) - {"space", "assets", "claims", "options"}
    if unknown:
        fail(f"unknown top-level keys {sorted(unknown)}", doc)

    sp = doc["space"]
    try:
        space = StateSpace.from_dict(sp)
    except (KeyError, TypeError, ValueError) as exc:
        fail(f"bad state space: {exc}", sp)

    assets = doc["assets"]
    if not isinstance(assets, list):
        fail("'assets' must be an array", doc)
    if assets and isinstance(assets[0], dict) and assets[0].get("riskless"):
        first = assets[0]
        if expr(first.get("payoff", ["const", 1]), first) != Const(1.0) or first.get("price", 1) != 1:
            fail("riskless asset must have payoff ['const', 1] and price 1", first)
        assets = assets[1:]
    payoffs, prices, names = [], [], []
    for i, a in enumerate(assets):
        if not isinstance(a, dict) or "payoff" not in a or "price" not in a:
            fail("each asset needs 'payoff' and 'price'", a if hasattr(a, "pos") else assets)
        price = a["price"]
        if isinstance(price, bool) or not isinstance(price, (int, float)) or price < 0:
            fail(f"asset price must be a nonnegative number, got {price!r}", a)
        payoffs.append(expr(a["payoff"], a))
        prices.append(float(price))
        names.append(str(a.get("name", f"S{i + 1}")))
    try:
        market = Market.create(space, payoffs, prices, names)
    except ValueError as exc:
        fail(str(exc), assets)

    claims = {}
    raw_claims = doc.get("claims", [])
    if not isinstance(raw_claims, list):
        fail("'claims' must be an array", doc)
    for c in raw_claims:
        if not isinstance(c, dict) or "name" not in c or "payoff" not in c:
            fail("each claim needs 'name' and 'payoff'", c if hasattr(c, "pos") else raw_claims)
        if c["name"] in claims:
            fail(f"duplicate claim name {c['name']!r}", c)
        try:
            claims[c["name"]] = Claim(expr(c["payoff"], c), space, c["name"])
        except ValueError as exc:
            if isinstance(exc, SpecError):
                raise
            fail(str(exc), c)

    options = dict(doc.get("options", {}))
    bad = set(options) - OPTION_KEYS
    if bad:
        fail(f"unknown options {sorted(bad)}", doc["options"])
    return MarketSpec(market, claims, options)


def load_spec(path) -> MarketSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())
