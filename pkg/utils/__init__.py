# File: utils/__init__.py
"""
Utils package for the Semantic Risk Planner
"""

from .errors import RiskPlannerError
from .semantic_map import load_map
from .semantic_sensor import Prompt, SampleSet, sample_llm, sample_mock
from .risk_posterior import BootstrapConfig, bootstrap_posterior, cvar, posterior_for_all_classes
from .cost_field import CostFieldConfig, build_cost_field, scale_lambdas
from .planner import PlannerConfig, astar, dijkstra_oracle, mhastar

__version__ = "1.0.0"
