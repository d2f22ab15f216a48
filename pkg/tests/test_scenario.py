import json

import numpy as np
import pytest

from habitree import habit as hb
from habitree.preferences import UtilitySpec
from habitree.scenario import SchemaError, dumps, from_dict, loads, to_dict

from suite import binomial


def test_roundtrip_idempotent():
    sc = binomial(2, 0.05, alpha=[0.1, 0.2], delta=0.5, z=0.3,
                  utility=UtilitySpec("power", 0.5, (1.0, 0.9)), q=[1.0, 2.0],
                  payoffs=np.arange(8.0).reshape(4, 2))
    text = dumps(sc)
    assert dumps(loads(text)) == text
    back = loads(text)
    assert np.array_equal(back.payoffs, sc.payoffs) and np.array_equal(back.habit.alpha, sc.habit.alpha)


def test_per_node_rates_and_numeraire_roundtrip():
    sc = binomial(2, 0.0, alpha=0.3, delta=[1.0, 1.0, 0.5, 0, 0, 0, 0])
    sc = sc.replace(numeraire=hb.HabitParams.constant(sc.tree, 0.2, 0.4))
    text = dumps(sc)
    assert dumps(loads(text)) == text
    assert "delta" in json.loads(text)["tree"]["nodes"][2]


@pytest.mark.parametrize("mutate, match", [
    (lambda d: d.update(version=2), "version"),
    (lambda d: d["tree"]["nodes"][1].update(prob=0.7), "sum"),
    (lambda d: d["tree"]["nodes"][1].update(price=[-1.0]), "positive"),
    (lambda d: d["tree"]["nodes"][1].update(parent=99), "parent"),
    (lambda d: d.pop("x"), "x"),
    (lambda d: d.update(utility={"kind": "power", "p": 2.0}), "p < 1"),
    (lambda d: d.update(habit={"alpha": -1.0}), "nonnegative"),
    (lambda d: d["endowments"].update(N=1, q=[1.0]), "payoff"),
])
def test_schema_errors(mutate, match):
    d = to_dict(binomial(1, 0.05))
    mutate(d)
    with pytest.raises(SchemaError, match=match):
        from_dict(d)


def test_not_json():
    with pytest.raises(SchemaError):
        loads("{")
