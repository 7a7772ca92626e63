import itertools
import json

import pytest
from pydantic import ValidationError

from gip_planner.graph.service import (
	brute_force_optimum,
	eulerian_tour,
	expand_groups,
	invert_coverage,
	load_instance,
	load_tour_pairs,
	root_component,
	save_instance,
	save_tour,
	verify_pairs,
	verify_tour,
)
from gip_planner.graph.views import (
	CoverageMap,
	CoverageThresholdError,
	GipInstance,
	GraphError,
	TooLargeError,
	Tour,
	Violation,
)


def walk(inst: GipInstance, *vertices: int) -> Tour:
	return Tour(edges=[inst.edge_id(a, b) for a, b in zip(vertices, vertices[1:])])


# region - instance
def test_instance_rejects_self_loops_and_duplicates():
	with pytest.raises(ValidationError):
		GipInstance(num_vertices=2, edges=[(0, 0, 1.0)], root=0, groups=[])
	with pytest.raises(ValidationError):
		GipInstance(num_vertices=2, edges=[(0, 1, 1.0), (0, 1, 2.0)], root=0, groups=[])
	with pytest.raises(ValidationError):
		GipInstance(num_vertices=2, edges=[(0, 1, -1.0)], root=0, groups=[])
	with pytest.raises(ValidationError):
		GipInstance(num_vertices=2, edges=[], root=2, groups=[])


def test_strictly_positive_costs_flag(t3):
	assert t3.strictly_positive_costs
	zero = GipInstance(num_vertices=2, edges=[(0, 1, 0.0), (1, 0, 1.0)], root=0, groups=[{1}])
	assert not zero.strictly_positive_costs


def test_empty_groups_are_reported():
	inst = GipInstance(num_vertices=2, edges=[(0, 1, 1.0)], root=0, groups=[{1}, set()])
	assert inst.empty_groups() == [1]


# endregion


# region - coverage
def test_invert_coverage_examples():
	coverage = CoverageMap(poi_count=2, by_vertex=[set(), {0}, {0, 1}])
	assert invert_coverage(coverage) == [frozenset({1, 2}), frozenset({2})]

	empty = CoverageMap(poi_count=2, by_vertex=[set(), set()])
	assert invert_coverage(empty) == [frozenset(), frozenset()]

	saturated = CoverageMap(poi_count=1, by_vertex=[{0}, {0}, {0}])
	assert invert_coverage(saturated) == [frozenset({0, 1, 2})]


def test_invert_then_expand_reproduces_coverage():
	coverage = CoverageMap(poi_count=3, by_vertex=[{2}, {0, 1}, set(), {1, 2}])
	assert expand_groups(invert_coverage(coverage), 4) == coverage


def test_coverage_rejects_unknown_poi():
	with pytest.raises(ValidationError):
		CoverageMap(poi_count=1, by_vertex=[{1}])


# endregion


# region - verification
def test_verify_feasible_triangle(t3):
	verdict = verify_tour(t3, walk(t3, 0, 1, 2, 0))
	assert verdict.feasible
	assert verdict.cost == 3.0


def test_verify_uncovered_group(t3):
	verdict = verify_tour(t3, walk(t3, 0, 1, 0))
	assert not verdict.feasible
	assert verdict.violation == Violation.GROUP_UNCOVERED
	assert verdict.group == 1
	assert verdict.describe() == 'GroupUncovered(1)'


def test_verify_not_closed(t3):
	verdict = verify_tour(t3, walk(t3, 0, 1, 2))
	assert verdict.violation == Violation.NOT_CLOSED


def test_verify_broken_chain_unknown_and_repeated(t3):
	broken = Tour(edges=[t3.edge_id(0, 1), t3.edge_id(2, 0)])
	assert verify_tour(t3, broken).violation == Violation.BROKEN_CHAIN
	assert verify_tour(t3, Tour(edges=[0, 99])).violation == Violation.UNKNOWN_EDGE
	repeated = walk(t3, 0, 1, 0, 1, 0)
	assert verify_tour(t3, repeated).violation == Violation.REPEATED_EDGE


def test_verify_min_covered_threshold(t3):
	tour = walk(t3, 0, 1, 0)
	assert verify_tour(t3, tour, min_covered=1).feasible
	assert not verify_tour(t3, tour, min_covered=2).feasible


@pytest.mark.parametrize('min_covered', [-1, 3, 10])
def test_min_covered_outside_group_range_is_rejected(t3, min_covered):
	tour = walk(t3, 0, 1, 2, 0)
	with pytest.raises(CoverageThresholdError):
		verify_tour(t3, tour, min_covered=min_covered)
	with pytest.raises(CoverageThresholdError):
		brute_force_optimum(t3, min_covered=min_covered)


def test_min_covered_bounds_are_inclusive(t3):
	assert verify_tour(t3, walk(t3, 0, 1, 2, 0), min_covered=2).feasible
	assert verify_tour(t3, walk(t3, 0, 1, 0), min_covered=0).feasible


def test_verify_pairs_unknown_edge():
	inst = GipInstance(num_vertices=3, edges=[(0, 1, 1.0), (1, 0, 1.0)], root=0, groups=[{1}])
	assert verify_pairs(inst, [(0, 1), (1, 0)]).feasible
	assert verify_pairs(inst, [(0, 2), (2, 0)]).violation == Violation.UNKNOWN_EDGE


def test_accepted_tours_are_balanced(t3):
	tour = walk(t3, 0, 2, 1, 0)
	assert verify_tour(t3, tour).feasible
	balance = [0] * t3.num_vertices
	for eid in tour.edges:
		balance[t3.tail(eid)] += 1
		balance[t3.head(eid)] -= 1
	assert balance == [0, 0, 0]


# endregion


# region - eulerian tours
def test_eulerian_tour_starts_at_root(t3):
	edges = [t3.edge_id(1, 2), t3.edge_id(0, 1), t3.edge_id(2, 0)]
	tour = eulerian_tour(t3, edges)
	assert tour.vertices(t3) == [0, 1, 2, 0]


def test_eulerian_tour_rejects_unbalanced(t3):
	with pytest.raises(GraphError):
		eulerian_tour(t3, [t3.edge_id(0, 1)])


def test_eulerian_tour_rejects_disconnected():
	inst = GipInstance(
		num_vertices=4,
		edges=[(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)],
		root=0,
		groups=[{1}],
	)
	with pytest.raises(GraphError):
		eulerian_tour(inst, [0, 1, 2, 3])
	assert root_component(inst, [0, 1, 2, 3]) == [0, 1]


# endregion


# region - brute force
def test_brute_force_triangle(t3):
	result = brute_force_optimum(t3)
	assert result.status == 'optimal'
	assert result.cost == 3.0
	assert verify_tour(t3, result.tour).feasible


def test_brute_force_two_vertices(p2):
	assert brute_force_optimum(p2).cost == 2.0
	root_group = GipInstance(num_vertices=2, edges=p2.edges, root=0, groups=[{0}])
	assert brute_force_optimum(root_group).cost == 2.0


def test_brute_force_infeasible_and_too_large(t3):
	empty = GipInstance(num_vertices=3, edges=t3.edges, root=0, groups=[{1}, set()])
	assert brute_force_optimum(empty).status == 'infeasible'
	with pytest.raises(TooLargeError):
		brute_force_optimum(t3, max_edges=5)


def test_brute_force_partial_coverage(t3):
	assert brute_force_optimum(t3, min_covered=1).cost == 2.0


def _enumerate_walks(inst: GipInstance) -> float:
	"""Cheapest closed walk without repeated edges, by depth-first enumeration."""
	best = float('inf')
	stack = [(inst.root, ())]
	while stack:
		v, used = stack.pop()
		if used and v == inst.root and verify_tour(inst, Tour(edges=list(used))).feasible:
			best = min(best, sum(inst.cost(e) for e in used))
		for e in inst.out_edges(v):
			if e not in used:
				stack.append((inst.head(e), used + (e,)))
	return best


@pytest.mark.parametrize('seed', range(6))
def test_brute_force_matches_walk_enumeration(seed):
	import numpy as np

	rng = np.random.default_rng(seed)
	n = 4
	pairs = [(u, v) for u, v in itertools.permutations(range(n), 2) if rng.random() < 0.6]
	pairs = sorted(set(pairs) | {(0, 1), (1, 0)})
	edges = [(u, v, float(rng.integers(1, 6))) for u, v in pairs]
	inst = GipInstance(num_vertices=n, edges=edges, root=0, groups=[{1}, {2, 3}])
	result = brute_force_optimum(inst)
	expected = _enumerate_walks(inst)
	if result.status == 'infeasible':
		assert expected == float('inf')
	else:
		assert result.cost == pytest.approx(expected)


# endregion


# region - files
def test_instance_file_round_trip_is_byte_stable(tmp_path, t3):
	first = tmp_path / 'a.json'
	second = tmp_path / 'b.json'
	save_instance(t3, first)
	inst, coverage = load_instance(first)
	assert coverage is None
	save_instance(inst, second)
	assert first.read_bytes() == second.read_bytes()
	assert inst == t3


def test_instance_file_checks_groups_against_coverage(tmp_path):
	path = tmp_path / 'inst.json'
	data = {
		'num_vertices': 2,
		'root': 0,
		'edges': [[0, 1, 1.0], [1, 0, 1.0]],
		'groups': [[0]],
		'coverage': {'poi_count': 1, 'by_vertex': [[], [0]]},
	}
	path.write_text(json.dumps(data))
	with pytest.raises(ValueError):
		load_instance(path)

	data['groups'] = [[1]]
	path.write_text(json.dumps(data))
	inst, coverage = load_instance(path)
	assert inst.groups == [frozenset({1})]
	assert coverage.poi_count == 1


def test_tour_file(tmp_path, t3):
	path = tmp_path / 'tour.json'
	save_tour(t3, walk(t3, 0, 1, 2, 0), path)
	assert json.loads(path.read_text()) == {'edges': [[0, 1], [1, 2], [2, 0]]}
	assert load_tour_pairs(path) == [(0, 1), (1, 2), (2, 0)]


# endregion
