"""Regenerate the fixture scenarios under scenarios/."""
import json
from pathlib import Path

from habitree import EventTree, Scenario, UtilitySpec
from habitree.scenario import dump, multiplicative_prices

OUT = Path(__file__).resolve().parent.parent / "scenarios"


def binomial(M, lam=0.0, u=1.2, d=0.9, **kw):
    tree = EventTree.binomial(M, T=1.0)
    return Scenario.build(tree, multiplicative_prices(tree, 1.0, (u, d)), lam, **kw)


def main():
    OUT.mkdir(exist_ok=True)
    det = EventTree.deterministic(2, T=1.0)
    dump(Scenario.build(det, [[1.0]] * det.n, x=1.0), OUT / "deterministic_log.json")
    dump(Scenario.build(det, [[1.0]] * det.n, alpha=1.0, delta=1.0, z=0.5, x=0.5),
         OUT / "boundary.json")
    dump(binomial(4, 0.05, alpha=0.5, delta=0.5, z=0.3, utility=UtilitySpec("power", 0.5)),
         OUT / "binomial_friction.json")
    dump(binomial(1), OUT / "call_frictionless.json")
    dump(binomial(4, alpha=1.0, delta=1.0, z=0.3), OUT / "closed_form.json")
    dump(binomial(2, 0.01, alpha=0.5, delta=0.0, z=0.3, utility=UtilitySpec("power", 0.5)),
         OUT / "delta_zero.json")
    tree = EventTree.binomial(2, T=1.0)
    delta = [1.0, 1.0, 0.5, 0.0, 0.0, 0.0, 0.0]  # siblings disagree: stochastic growth
    dump(Scenario.build(tree, multiplicative_prices(tree, 1.0, (1.2, 0.9)), 0.0, alpha=0.5,
                        delta=delta, z=0.2), OUT / "stochastic_growth.json")
    bad = json.loads((OUT / "call_frictionless.json").read_text())
    bad["tree"]["nodes"][1]["prob"] = 0.7
    (OUT / "malformed_probabilities.json").write_text(json.dumps(bad, indent=1) + "\n")


if __name__ == "__main__":
    main()
