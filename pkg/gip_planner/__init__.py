from gip_planner.logging_config import setup_logging

setup_logging()

from gip_planner.formulation.service import add_mcf as add_mcf
from gip_planner.formulation.service import add_partial_coverage as add_partial_coverage
from gip_planner.formulation.service import add_scf as add_scf
from gip_planner.formulation.service import as_group_cutset as as_group_cutset
from gip_planner.formulation.service import build_baseline as build_baseline
from gip_planner.graph.service import brute_force_optimum as brute_force_optimum
from gip_planner.graph.service import load_instance as load_instance
from gip_planner.graph.service import verify_tour as verify_tour
from gip_planner.graph.views import GipInstance as GipInstance
from gip_planner.graph.views import Tour as Tour
from gip_planner.heuristic.service import run_heuristic as run_heuristic
from gip_planner.search.service import solve_bnb as solve_bnb
from gip_planner.search.service import solve_bnc as solve_bnc
from gip_planner.search.views import SolverConfig as SolverConfig
from gip_planner.search.views import SolverReport as SolverReport
from gip_planner.simulator.service import simulate_instance as simulate_instance

__all__ = [
	'GipInstance',
	'Tour',
	'SolverConfig',
	'SolverReport',
	'add_mcf',
	'add_partial_coverage',
	'add_scf',
	'as_group_cutset',
	'build_baseline',
	'brute_force_optimum',
	'load_instance',
	'run_heuristic',
	'simulate_instance',
	'solve_bnb',
	'solve_bnc',
	'verify_tour',
]
