"""Consumption with addictive habits under proportional transaction costs on
finite event trees: price systems, cutting-plane duality, superhedging and
log-utility closed forms."""

__version__ = "0.1.0"

from .closed_form import (LogPolicyInputs, build_isomorphic_scenario, initial_consumption,
                          log_policy, verify_isomorphism)
from .cones import BidAskMatrix, SolvencyCone, cone_at, cone_contains, is_efficient_friction
from .cps import PriceSystem, find_scps, optimize_over_cps
from .habit import HabitParams, effective_domain_check, recover, reduce
from .preferences import UtilitySpec
from .scenario import Scenario, SchemaError
from .solver import Solution, evaluate_dual, solve_primal, verify_first_order
from .superhedge import budget_feasible, hedge_cost, superhedge_price
from .tree import EventTree

__all__ = [
    "BidAskMatrix", "EventTree", "HabitParams", "LogPolicyInputs", "PriceSystem", "Scenario",
    "SchemaError", "Solution", "SolvencyCone", "UtilitySpec", "budget_feasible",
    "build_isomorphic_scenario", "cone_at", "cone_contains", "effective_domain_check",
    "evaluate_dual", "find_scps", "hedge_cost", "initial_consumption", "is_efficient_friction",
    "log_policy", "optimize_over_cps", "recover", "reduce", "solve_primal", "superhedge_price",
    "verify_first_order", "verify_isomorphism",
]
