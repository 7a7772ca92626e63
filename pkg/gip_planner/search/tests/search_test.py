import csv
import io
import math

import pytest

from conftest import random_instance
from gip_planner.formulation.service import (
	add_mcf,
	add_partial_coverage,
	add_scf,
	as_group_cutset,
	build_baseline,
)
from gip_planner.graph.service import brute_force_optimum, verify_tour
from gip_planner.graph.views import GipInstance
from gip_planner.heuristic.views import HeuristicError, HeuristicMode
from gip_planner.search.service import make_heuristic_hook, record_bounds, solve_bnb, solve_bnc
from gip_planner.search.views import (
	LOG_HEADER,
	BoundEvent,
	CutPool,
	InfeasibleModelError,
	SearchError,
	SearchNode,
	SolverConfig,
	SolverReport,
	Termination,
	WrongSearchFlavorError,
)
from gip_planner.separation.views import Cut

GREEDY = make_heuristic_hook(HeuristicMode.GREEDY)


def solve(inst: GipInstance, flavor: str, **kwargs) -> SolverReport:
	h = build_baseline(inst)
	if flavor == 'scf':
		return solve_bnb(add_scf(h), **kwargs)
	if flavor == 'mcf':
		return solve_bnb(add_mcf(h), **kwargs)
	return solve_bnc(as_group_cutset(h), **kwargs)


# region - bound log
def test_record_bounds_keeps_bounds_monotone():
	report = SolverReport(flavor='scf')
	record_bounds(report, 0.0, math.inf, 1.0, BoundEvent.ROOT_LP)
	assert report.gap_percent == math.inf

	record_bounds(report, 0.1, 5.0, 1.0, BoundEvent.INCUMBENT)
	assert report.gap_percent == pytest.approx(80.0)

	row = record_bounds(report, 0.2, 7.0, 0.5, BoundEvent.NODE)
	assert (row.ub, row.lb) == (5.0, 1.0)

	row = record_bounds(report, 0.3, 4.0, 6.0, BoundEvent.NODE)
	assert (row.ub, row.lb, row.gap_pct) == (4.0, 4.0, 0.0)


def test_record_bounds_zero_upper_bound():
	report = SolverReport(flavor='scf')
	row = record_bounds(report, 0.0, 0.0, 0.0, BoundEvent.FINAL)
	assert row.gap_pct == 0.0


def test_record_bounds_writes_csv_rows():
	report = SolverReport(flavor='scf')
	sink = io.StringIO()
	record_bounds(report, 0.5, math.inf, 2.0, BoundEvent.ROOT_LP, sink)
	assert sink.getvalue().strip() == '0.500000,inf,2.0,inf,root_lp'


# endregion


# region - small cases
@pytest.mark.parametrize('flavor', ['scf', 'mcf', 'cutset'])
def test_triangle_optimum(t3, flavor):
	report = solve(t3, flavor, heuristic=GREEDY)
	assert report.termination == Termination.OPTIMAL
	assert report.ub == pytest.approx(3.0)
	assert report.lb == pytest.approx(3.0)
	assert verify_tour(t3, report.incumbent).feasible
	assert report.stats.first_incumbent_s is not None


@pytest.mark.parametrize('flavor', ['scf', 'cutset'])
def test_triangle_without_heuristic(t3, flavor):
	report = solve(t3, flavor)
	assert report.termination == Termination.OPTIMAL
	assert report.ub == pytest.approx(3.0)
	assert report.stats.heuristic_calls == 0


@pytest.mark.parametrize('attach', [add_scf, add_mcf, as_group_cutset])
def test_partial_coverage_optimum(t3, attach):
	h = attach(add_partial_coverage(build_baseline(t3), 1))
	search = solve_bnc if attach is as_group_cutset else solve_bnb
	report = search(h, heuristic=GREEDY)
	assert report.termination == Termination.OPTIMAL
	assert report.ub == pytest.approx(2.0)
	assert verify_tour(t3, report.incumbent, min_covered=1).feasible
	assert report.flavor.endswith('+partial(1)')


@pytest.mark.parametrize('attach', [add_scf, add_mcf, as_group_cutset])
def test_zero_coverage_is_the_cheapest_root_cycle(attach):
	edges = [(0, 1, 2.0), (1, 0, 2.0), (0, 2, 0.5), (2, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)]
	inst = GipInstance(num_vertices=3, edges=edges, root=0, groups=[{1}])
	h = attach(add_partial_coverage(build_baseline(inst), 0))
	search = solve_bnc if attach is as_group_cutset else solve_bnb
	report = search(h, heuristic=GREEDY)
	assert report.termination == Termination.OPTIMAL
	assert report.ub == pytest.approx(1.5)
	assert brute_force_optimum(inst, min_covered=0).cost == pytest.approx(1.5)
	assert report.incumbent.pairs(inst) == [(0, 2), (2, 0)]


@pytest.mark.parametrize('seed', range(6))
@pytest.mark.parametrize('attach', [add_scf, add_mcf, as_group_cutset])
def test_partial_coverage_matches_brute_force(seed, attach):
	inst = random_instance(seed)
	q = seed % (inst.num_groups + 1)
	expected = brute_force_optimum(inst, min_covered=q)
	h = attach(add_partial_coverage(build_baseline(inst), q))
	search = solve_bnc if attach is as_group_cutset else solve_bnb
	if expected.status == 'infeasible':
		try:
			report = search(h)
		except InfeasibleModelError:
			return
		assert report.termination == Termination.INFEASIBLE
		return
	report = search(h, heuristic=GREEDY)
	assert report.termination == Termination.OPTIMAL
	assert report.ub == pytest.approx(expected.cost, abs=1e-6)
	assert verify_tour(inst, report.incumbent, min_covered=q).feasible


def test_infeasible_root_relaxation():
	# vertex 2 can be entered but never left
	inst = GipInstance(
		num_vertices=3, edges=[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0)], root=0, groups=[{2}]
	)
	with pytest.raises(InfeasibleModelError):
		solve(inst, 'scf')


# endregion


# region - agreement with brute force
@pytest.mark.parametrize('seed', range(8))
@pytest.mark.parametrize('flavor', ['scf', 'mcf', 'cutset'])
def test_search_matches_brute_force(seed, flavor):
	inst = random_instance(seed)
	expected = brute_force_optimum(inst)
	if expected.status == 'infeasible':
		try:
			report = solve(inst, flavor)
		except InfeasibleModelError:
			return
		assert report.termination == Termination.INFEASIBLE
		return
	report = solve(inst, flavor, heuristic=GREEDY)
	assert report.termination == Termination.OPTIMAL
	assert report.ub == pytest.approx(expected.cost, abs=1e-6)
	assert verify_tour(inst, report.incumbent).feasible
	assert report.stats.root_bound <= expected.cost + 1e-6


@pytest.mark.parametrize('oracle', ['cc', 'flow', 'combined'])
def test_oracles_agree(oracle):
	inst = random_instance(2)
	expected = brute_force_optimum(inst)
	if expected.status == 'infeasible':
		pytest.skip('infeasible instance')
	h = as_group_cutset(build_baseline(inst))
	report = solve_bnc(h, oracle=oracle, sample_size=1, rng_seed=3)
	assert report.ub == pytest.approx(expected.cost, abs=1e-6)


# endregion


# region - log and limits
def test_log_file_contract(tmp_path, t3):
	path = tmp_path / 'bounds.csv'
	report = solve(t3, 'cutset', heuristic=GREEDY, log_path=str(path))
	with open(path, newline='') as f:
		rows = list(csv.reader(f))
	assert tuple(rows[0]) == LOG_HEADER
	assert len(rows) - 1 == len(report.log)
	events = [row[4] for row in rows[1:]]
	assert events[0] == 'incumbent'
	assert 'root_lp' in events
	assert events[-1] == 'final'

	ubs = [float(row[1]) for row in rows[1:]]
	lbs = [float(row[2]) for row in rows[1:]]
	elapsed = [float(row[0]) for row in rows[1:]]
	assert ubs == sorted(ubs, reverse=True)
	assert lbs == sorted(lbs)
	assert elapsed == sorted(elapsed)
	assert all(lb <= ub for lb, ub in zip(lbs, ubs))


def test_root_gap_is_taken_at_the_root(t3):
	report = solve(t3, 'scf', heuristic=GREEDY)
	assert report.stats.root_bound == pytest.approx(3.0)
	assert report.stats.root_gap_pct == pytest.approx(0.0, abs=1e-9)


def feasible_instance(seed: int) -> GipInstance:
	inst = random_instance(seed)
	if brute_force_optimum(inst).status == 'infeasible':
		pytest.skip('infeasible instance')
	return inst


def test_node_limit_stops_the_search():
	inst = feasible_instance(5)
	report = solve(inst, 'scf', heuristic=GREEDY, config=SolverConfig(node_limit=1))
	assert report.stats.nodes == 1
	assert report.termination in (Termination.NODE_LIMIT, Termination.OPTIMAL)
	assert report.lb <= report.ub


def test_node_limit_is_deterministic():
	inst = feasible_instance(6)
	reports = [
		solve(inst, 'cutset', config=SolverConfig(node_limit=5), rng_seed=1, sample_size=2)
		for _ in range(2)
	]
	assert reports[0].ub == reports[1].ub
	assert reports[0].lb == reports[1].lb
	assert reports[0].stats.cuts == reports[1].stats.cuts


def test_root_lp_stops_at_the_time_limit_once_a_tour_exists(t3):
	report = solve(t3, 'scf', heuristic=GREEDY, time_limit=0.0)
	assert report.termination == Termination.TIME_LIMIT
	assert report.stats.root_bound is None
	assert verify_tour(t3, report.incumbent).feasible
	assert report.lb <= report.ub
	assert report.log[-1].event == BoundEvent.FINAL


def test_root_lp_runs_to_the_end_without_a_tour(t3):
	report = solve(t3, 'scf', time_limit=0.0)
	assert report.stats.root_bound == pytest.approx(3.0)


def test_heuristic_schedule_counts_processed_nodes():
	inst = feasible_instance(5)
	calls = []

	def failing(inst, lp_values):
		calls.append(lp_values)
		raise HeuristicError('no tour')

	config = SolverConfig(node_limit=9, heuristic_every=2)
	report = solve(inst, 'scf', heuristic=failing, config=config)
	assert calls[0] is None
	assert report.stats.heuristic_calls == len(calls)
	# one call before the root LP, one after it, then one per two processed nodes
	assert len(calls) == 2 + (report.stats.nodes - 1) // 2


@pytest.mark.parametrize('seed', range(6))
@pytest.mark.parametrize('flavor', ['scf', 'cutset'])
def test_warm_and_cold_searches_agree(seed, flavor):
	inst = feasible_instance(seed)
	warm = solve(inst, flavor, heuristic=GREEDY)
	cold = solve(inst, flavor, heuristic=GREEDY, config=SolverConfig(warm_start=False))
	assert warm.termination == cold.termination == Termination.OPTIMAL
	assert warm.ub == pytest.approx(cold.ub, abs=1e-6)
	assert warm.stats.root_bound == pytest.approx(cold.stats.root_bound, abs=1e-6)


# endregion


# region - errors and bookkeeping
def test_searches_check_the_flavor(t3):
	with pytest.raises(WrongSearchFlavorError):
		solve_bnb(as_group_cutset(build_baseline(t3)))
	with pytest.raises(WrongSearchFlavorError):
		solve_bnc(add_scf(build_baseline(t3)))
	with pytest.raises(WrongSearchFlavorError):
		solve_bnb(build_baseline(t3))


def test_unknown_oracle(t3):
	with pytest.raises(SearchError):
		solve_bnc(as_group_cutset(build_baseline(t3)), oracle='nope')


def test_cut_pool_keys():
	a = Cut(R=frozenset({0}), excluded_group=0, edges=(1, 2))
	b = Cut(R=frozenset({0, 3}), excluded_group=1, edges=(2, 1))

	pool = CutPool()
	assert pool.add(a)
	assert not pool.add(b)
	assert len(pool) == 1

	grouped = CutPool(keyed_by_group=True)
	assert grouped.add(a)
	assert grouped.add(b)
	assert b in grouped


def test_search_node_children():
	root = SearchNode(node_id=0)
	child = root.child(1, var=3, value=0.0, bound=2.5)
	assert child.bound_changes == {3: 0.0}
	assert child.depth == 1
	assert root.bound_changes == {}
	assert child.child(2, var=3, value=0.0, bound=2.5).bound_changes == {3: 0.0}
	with pytest.raises(SearchError):
		child.child(3, var=3, value=1.0, bound=2.5)


# endregion
