"""Label-propagation-based global injection attack toolkit.

Typical flow: ``gen_csbm``/``load_bundle`` -> ``build_ensemble`` ->
``run_attack`` -> ``evaluate``.
"""
__version__ = "0.1.0"

from .baselines import StrategySpec, baseline_attack
from .evaluation import EvalReport, accuracy, evaluate
from .graph import GraphBundle, PerturbedGraph, gen_csbm, load_bundle, materialize, save_bundle
from .injector import AttackConfig, InjectionPlan, run_attack
from .propagation import ProbMatrix, hard_label_prop, simulate_injection_step, smooth
from .surrogate import GcnParams, SurrogateEnsemble, build_ensemble, gcn_forward, train

__all__ = [
    "AttackConfig", "EvalReport", "GcnParams", "GraphBundle", "InjectionPlan", "PerturbedGraph",
    "ProbMatrix", "StrategySpec", "SurrogateEnsemble", "accuracy", "baseline_attack",
    "build_ensemble", "evaluate", "gcn_forward", "gen_csbm", "hard_label_prop", "load_bundle",
    "materialize", "run_attack", "save_bundle", "simulate_injection_step", "smooth", "train",
]
