"""Market scenario: tree, prices, costs, habit data, preferences, endowments.

Scenarios are stored as JSON with an explicit ``version`` field. Node
records carry their own price vector and, at leaves, the endowment payoffs,
so every per-node quantity is keyed by the node id it belongs to.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .cones import ConeError, SolvencyCone, cone_at
from .habit import HabitParams, per_node
from .preferences import UtilitySpec
from .tree import DEFAULT_QUAD, EventTree, TreeError

FORMAT_VERSION = 1


class SchemaError(ValueError):
    """Scenario file does not match the expected layout."""


@dataclass(frozen=True)
class Scenario:
    """Everything the solver, pricer and checks need.

    ``prices`` has shape ``(n, d)`` in the tree's internal node order and
    ``payoffs`` has shape ``(len(tree.leaves), N)`` in ``tree.leaves`` order.
    ``numeraire``, when set, holds ``(alpha, delta)`` node arrays defining a
    consumption numeraire ``G``; the objective then reads ``U(c / G)``.
    """

    tree: EventTree
    prices: np.ndarray
    lam: float | np.ndarray
    habit: HabitParams
    utility: UtilitySpec
    x: float
    q: np.ndarray
    payoffs: np.ndarray
    eps: float = 1e-6
    tol: float = 1e-9
    max_cuts: int = 200
    numeraire: HabitParams | None = None

    def __post_init__(self):
        n = self.tree.n
        P = np.asarray(self.prices, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        if P.shape[0] != n:
            raise SchemaError(f"need one price vector per node ({n}), got {P.shape[0]}")
        if not np.all(np.isfinite(P)) or np.any(P <= 0):
            raise SchemaError("prices must be finite and strictly positive")
        object.__setattr__(self, "prices", P)
        lam = self.lam
        if np.ndim(lam) == 0:
            lam = float(lam)
        else:
            lam = np.asarray(lam, dtype=float)
        object.__setattr__(self, "lam", lam)
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        E = np.asarray(self.payoffs, dtype=float).reshape(len(self.tree.leaves), q.size)
        if not np.all(np.isfinite(E)) or np.any(E < 0):
            raise SchemaError("endowment payoffs must be finite and nonnegative")
        if not np.all(np.isfinite(q)):
            raise SchemaError("endowment holdings must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "payoffs", E)
        if not np.isfinite(self.x):
            raise SchemaError("initial cash must be finite")
        if not (self.eps >= 0 and self.tol > 0 and self.max_cuts >= 1):
            raise SchemaError("tolerances must satisfy eps >= 0, tol > 0, max_cuts >= 1")
        try:
            self.cones
        except ConeError as e:
            raise SchemaError(str(e)) from None

    # derived --------------------------------------------------------------

    @property
    def d(self) -> int:
        return self.prices.shape[1]

    @property
    def N(self) -> int:
        return self.q.size

    @cached_property
    def cones(self) -> list[SolvencyCone]:
        return [cone_at(self.prices[i], self.lam) for i in range(self.tree.n)]

    def endowment(self) -> np.ndarray:
        """``q . E_T`` per leaf."""
        return self.payoffs @ self.q if self.N else np.zeros(len(self.tree.leaves))

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def flat_lambda(self) -> float | None:
        return self.lam if isinstance(self.lam, float) else None

    # construction ---------------------------------------------------------

    @classmethod
    def build(cls, tree: EventTree, prices, lam=0.0, alpha=0.0, delta=0.0, z=0.0,
              utility: UtilitySpec | None = None, x: float = 1.0, q=(), payoffs=None,
              **kw) -> "Scenario":
        """Convenience constructor; ``alpha``/``delta`` may be scalars,
        per-interval sequences or per-node arrays."""
        h = HabitParams(per_node(tree, alpha), per_node(tree, delta), float(z))
        q = np.atleast_1d(np.asarray(q, dtype=float))
        if payoffs is None:
            payoffs = np.zeros((len(tree.leaves), q.size))
        return cls(tree, prices, lam, h, utility or UtilitySpec(), float(x), q, payoffs, **kw)


def multiplicative_prices(tree: EventTree, S0, factors) -> np.ndarray:
    """Price paths where the ``j``-th child of a node multiplies by ``factors[j]``.

    ``S0`` and each factor may be scalars or length-``d`` vectors.
    """
    S0 = np.atleast_1d(np.asarray(S0, dtype=float))
    factors = [np.atleast_1d(np.asarray(f, dtype=float)) for f in factors]
    P = np.zeros((tree.n, S0.size))
    P[0] = S0
    for i in range(tree.n):
        for j, c in enumerate(tree.children[i]):
            P[c] = P[i] * factors[j]
    return P


# serialization ------------------------------------------------------------

def _encode_rate(tree: EventTree, v: np.ndarray):
    inner = tree.internal
    if np.all(v[inner] == v[inner][0]):
        return float(v[inner][0])
    levels = [v[tree.nodes_at(k)] for k in range(tree.M)]
    if all(np.all(lv == lv[0]) for lv in levels):
        return [float(lv[0]) for lv in levels]
    return "per-node"


def _decode_rate(tree: EventTree, spec, records, key):
    if isinstance(spec, str):
        if spec != "per-node":
            raise SchemaError(f"{key}: expected a number, a list or 'per-node'")
        vals = np.zeros(tree.n)
        for rec in records:
            if key not in rec:
                raise SchemaError(f"{key} missing on node {rec['id']!r}")
            vals[tree.index(rec["id"])] = rec[key]
        return per_node(tree, vals)
    return per_node(tree, spec)


def to_dict(sc: Scenario) -> dict:
    t = sc.tree
    h = sc.habit
    a_enc = _encode_rate(t, h.alpha)
    d_enc = _encode_rate(t, h.delta)
    leaf_pos = {int(l): k for k, l in enumerate(t.leaves)}
    nodes = []
    for i in range(t.n):
        p = int(t.parent[i])
        rec = {
            "id": t.ids[i],
            "parent": None if p < 0 else t.ids[p],
            "prob": float(t.trans_prob[i]),
            "time_index": int(t.level[i]),
            "price": [float(v) for v in sc.prices[i]],
        }
        if i in leaf_pos and sc.N:
            rec["payoff"] = [float(v) for v in sc.payoffs[leaf_pos[i]]]
        if a_enc == "per-node":
            rec["alpha"] = float(h.alpha[i])
        if d_enc == "per-node":
            rec["delta"] = float(h.delta[i])
        nodes.append(rec)
    out = {
        "version": FORMAT_VERSION,
        "tree": {"times": [float(v) for v in t.times], "nodes": nodes},
        "assets": sc.d,
        "lambda": sc.lam if isinstance(sc.lam, float) else sc.lam.tolist(),
        "habit": {"alpha": a_enc, "delta": d_enc, "z": float(h.z)},
        "utility": sc.utility.to_dict(),
        "x": float(sc.x),
        "endowments": {"N": sc.N, "q": [float(v) for v in sc.q]},
        "tolerances": {"eps": float(sc.eps), "tol": float(sc.tol), "max_cuts": int(sc.max_cuts)},
    }
    if t.Q != DEFAULT_QUAD:
        out["quad_points"] = t.Q
    if sc.numeraire is not None:
        g = sc.numeraire
        ga, gd = _encode_rate(t, g.alpha), _encode_rate(t, g.delta)
        if "per-node" in (ga, gd):
            # stored inline so the file stays self-contained
            ga, gd = g.alpha.tolist(), g.delta.tolist()
            out["numeraire"] = {"alpha_nodes": ga, "delta_nodes": gd}
        else:
            out["numeraire"] = {"alpha": ga, "delta": gd}
    return out


def from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise SchemaError("scenario must be a JSON object")
    if d.get("version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported scenario version {d.get('version')!r}; expected {FORMAT_VERSION}")
    try:
        tree_d = d["tree"]
        records = tree_d["nodes"]
        tree = EventTree.from_nodes(tree_d["times"], records, d.get("quad_points", DEFAULT_QUAD))
        dim = int(d["assets"])
        prices = np.zeros((tree.n, dim))
        N = int(d.get("endowments", {}).get("N", 0))
        payoffs = np.zeros((len(tree.leaves), N))
        leaf_pos = {int(l): k for k, l in enumerate(tree.leaves)}
        for rec in records:
            i = tree.index(rec["id"])
            pv = np.atleast_1d(np.asarray(rec["price"], dtype=float))
            if pv.size != dim:
                raise SchemaError(f"node {rec['id']!r}: price has {pv.size} entries, expected {dim}")
            prices[i] = pv
            if i in leaf_pos and N:
                if "payoff" not in rec:
                    raise SchemaError(f"leaf {rec['id']!r} lacks a payoff vector")
                pay = np.atleast_1d(np.asarray(rec["payoff"], dtype=float))
                if pay.size != N:
                    raise SchemaError(f"leaf {rec['id']!r}: payoff has {pay.size} entries, expected {N}")
                payoffs[leaf_pos[i]] = pay
        hab = d.get("habit", {})
        alpha = _decode_rate(tree, hab.get("alpha", 0.0), records, "alpha")
        delta = _decode_rate(tree, hab.get("delta", 0.0), records, "delta")
        habit = HabitParams(alpha, delta, float(hab.get("z", 0.0)))
        utility = UtilitySpec.from_dict(d.get("utility", {"kind": "log"}))
        endow = d.get("endowments", {})
        q = np.asarray(endow.get("q", []), dtype=float)
        if q.size != N:
            raise SchemaError(f"endowments: q has {q.size} entries but N = {N}")
        tol = d.get("tolerances", {})
        numeraire = None
        if "numeraire" in d:
            nd = d["numeraire"]
            if "alpha_nodes" in nd:
                numeraire = HabitParams(per_node(tree, nd["alpha_nodes"]),
                                        per_node(tree, nd["delta_nodes"]), 0.0)
            else:
                numeraire = HabitParams(per_node(tree, nd["alpha"]), per_node(tree, nd["delta"]), 0.0)
        lam = d.get("lambda", 0.0)
        return Scenario(tree, prices, lam, habit, utility, float(d["x"]), q, payoffs,
                        float(tol.get("eps", 1e-6)), float(tol.get("tol", 1e-9)),
                        int(tol.get("max_cuts", 200)), numeraire)
    except (KeyError, TypeError) as e:
        raise SchemaError(f"malformed scenario: missing or invalid field {e}") from None
    except TreeError as e:
        raise SchemaError(str(e)) from None
    except ValueError as e:
        if isinstance(e, SchemaError):
            raise
        raise SchemaError(str(e)) from None


def dumps(sc: Scenario) -> str:
    return json.dumps(to_dict(sc), indent=1) + "\n"


def loads(text: str) -> Scenario:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"not valid JSON: {e}") from None
    return from_dict(d)


def load(path) -> Scenario:
    return loads(Path(path).read_text())


def dump(sc: Scenario, path) -> None:
    Path(path).write_text(dumps(sc))
