import json
import logging
from pathlib import Path
from typing import Optional, Sequence

import networkx as nx
import numpy as np

from gip_planner.graph.views import (
	CoverageFile,
	CoverageMap,
	CoverageThresholdError,
	GipInstance,
	GraphError,
	InstanceFile,
	OptimumResult,
	TooLargeError,
	Tour,
	TourFile,
	TourVerdict,
	Violation,
)
from gip_planner.utils import time_execution_sync

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX_EDGES = 22
_MASK_CHUNK = 1 << 16


# region - Coverage
def invert_coverage(coverage: CoverageMap) -> list[frozenset[int]]:
	"""S_p = { v | p in chi(v) } for every POI id p, in POI order."""
	members: list[set[int]] = [set() for _ in range(coverage.poi_count)]
	for v, pois in enumerate(coverage.by_vertex):
		for p in pois:
			members[p].add(v)
	return [frozenset(s) for s in members]


def expand_groups(groups: Sequence[frozenset[int]], num_vertices: int) -> CoverageMap:
	"""Inverse of `invert_coverage`: chi(v) = { p | v in S_p }."""
	by_vertex: list[set[int]] = [set() for _ in range(num_vertices)]
	for p, group in enumerate(groups):
		for v in group:
			by_vertex[v].add(p)
	return CoverageMap(poi_count=len(groups), by_vertex=[frozenset(s) for s in by_vertex])


# endregion


# region - Tours
def required_groups(inst: GipInstance, min_covered: Optional[int] = None) -> int:
	"""Number of groups a tour must cover; raises CoverageThresholdError outside 0..k."""
	if min_covered is None:
		return inst.num_groups
	if not 0 <= min_covered <= inst.num_groups:
		raise CoverageThresholdError(min_covered, inst.num_groups)
	return min_covered


def verify_tour(inst: GipInstance, tour: Tour, min_covered: Optional[int] = None) -> TourVerdict:
	"""
	Check that `tour` is a closed walk from the root over existing edges, repeats no
	edge, and covers every group (or at least `min_covered` groups when given).
	"""
	required = required_groups(inst, min_covered)
	edges = tour.edges
	if not edges:
		return TourVerdict(feasible=False, violation=Violation.NOT_CLOSED)
	for eid in edges:
		if not 0 <= eid < inst.num_edges:
			return TourVerdict(feasible=False, violation=Violation.UNKNOWN_EDGE)
	if inst.tail(edges[0]) != inst.root:
		return TourVerdict(feasible=False, violation=Violation.NOT_CLOSED)
	for prev, nxt in zip(edges, edges[1:]):
		if inst.head(prev) != inst.tail(nxt):
			return TourVerdict(feasible=False, violation=Violation.BROKEN_CHAIN)
	if len(set(edges)) != len(edges):
		return TourVerdict(feasible=False, violation=Violation.REPEATED_EDGE)
	if inst.head(edges[-1]) != inst.root:
		return TourVerdict(feasible=False, violation=Violation.NOT_CLOSED)

	visited = set(tour.vertices(inst))
	uncovered = [i for i, group in enumerate(inst.groups) if not (group & visited)]
	cost = tour.cost(inst)
	if inst.num_groups - len(uncovered) < required:
		first = uncovered[0] if uncovered else None
		return TourVerdict(feasible=False, cost=cost, violation=Violation.GROUP_UNCOVERED, group=first)
	return TourVerdict(feasible=True, cost=cost)


def verify_pairs(
	inst: GipInstance, pairs: Sequence[tuple[int, int]], min_covered: Optional[int] = None
) -> TourVerdict:
	"""Like `verify_tour` for a walk given as vertex pairs, e.g. read from a tour file."""
	ids = []
	for tail, head in pairs:
		eid = inst.edge_id(tail, head)
		if eid is None:
			return TourVerdict(feasible=False, violation=Violation.UNKNOWN_EDGE)
		ids.append(eid)
	return verify_tour(inst, Tour(edges=ids), min_covered=min_covered)


def eulerian_tour(inst: GipInstance, edge_ids: Sequence[int]) -> Tour:
	"""
	Closed walk from the root using every edge of a balanced, connected edge set once
	(Hierholzer). Out-edges are consumed in increasing id order.
	"""
	balance = [0] * inst.num_vertices
	adjacency: dict[int, list[int]] = {}
	for eid in sorted(set(edge_ids)):
		tail, head = inst.tail(eid), inst.head(eid)
		balance[tail] += 1
		balance[head] -= 1
		adjacency.setdefault(tail, []).append(eid)
	if any(balance):
		raise GraphError('edge set is not balanced (in-degree != out-degree)')
	for out in adjacency.values():
		out.reverse()

	stack: list[tuple[int, int]] = [(inst.root, -1)]
	circuit: list[int] = []
	while stack:
		v, via = stack[-1]
		out = adjacency.get(v)
		if out:
			eid = out.pop()
			stack.append((inst.head(eid), eid))
		else:
			stack.pop()
			if via >= 0:
				circuit.append(via)
	circuit.reverse()
	if len(circuit) != len(set(edge_ids)):
		raise GraphError('edge set is not connected to the root')
	return Tour(edges=circuit)


def root_component(inst: GipInstance, edge_ids: Sequence[int]) -> list[int]:
	"""Selected edges in the weakly connected component of the root (empty if none)."""
	graph = nx.DiGraph()
	graph.add_node(inst.root)
	graph.add_edges_from((inst.tail(e), inst.head(e), {'eid': e}) for e in edge_ids)
	component = nx.node_connected_component(graph.to_undirected(as_view=True), inst.root)
	return sorted(e for e in edge_ids if inst.tail(e) in component)


# endregion


# region - Brute force
@time_execution_sync('--brute_force_optimum')
def brute_force_optimum(
	inst: GipInstance,
	max_edges: int = BRUTE_FORCE_MAX_EDGES,
	min_covered: Optional[int] = None,
) -> OptimumResult:
	"""
	Exhaustive optimum over all 2^|E| edge selections: degree balance, root departure,
	group coverage and a single component containing the root.
	"""
	num_edges = inst.num_edges
	if num_edges > max_edges:
		raise TooLargeError(num_edges, max_edges)
	n, k = inst.num_vertices, inst.num_groups
	required = required_groups(inst, min_covered)
	if num_edges == 0:
		return OptimumResult(status='infeasible')

	costs = np.array(inst.costs(), dtype=np.float64)
	incidence = np.zeros((num_edges, n), dtype=np.int16)
	touch = np.zeros((num_edges, n), dtype=np.int16)
	for eid, (tail, head, _) in enumerate(inst.edges):
		incidence[eid, tail] += 1
		incidence[eid, head] -= 1
		touch[eid, tail] = 1
		touch[eid, head] = 1
	membership = np.zeros((n, max(k, 1)), dtype=np.int16)
	for i, group in enumerate(inst.groups):
		for v in group:
			membership[v, i] = 1
	root_out = np.array(inst.out_edges(inst.root), dtype=np.int64)
	if root_out.size == 0:
		return OptimumResult(status='infeasible')
	shifts = np.arange(num_edges, dtype=np.int64)

	found_masks: list[np.ndarray] = []
	found_costs: list[np.ndarray] = []
	total = 1 << num_edges
	for start in range(1, total, _MASK_CHUNK):
		masks = np.arange(start, min(start + _MASK_CHUNK, total), dtype=np.int64)
		bits = ((masks[:, None] >> shifts) & 1).astype(np.int16)
		ok = bits[:, root_out].sum(axis=1) >= 1
		ok &= ~np.any(bits @ incidence, axis=1)
		if k:
			visited = (bits @ touch) > 0
			covered = (visited.astype(np.int16) @ membership[:, :k]) > 0
			ok &= covered.sum(axis=1) >= required
		if ok.any():
			found_masks.append(masks[ok])
			found_costs.append(bits[ok].astype(np.float64) @ costs)

	if not found_masks:
		return OptimumResult(status='infeasible')
	all_masks = np.concatenate(found_masks)
	all_costs = np.concatenate(found_costs)
	for idx in np.lexsort((all_masks, all_costs)):
		mask = int(all_masks[idx])
		selected = [eid for eid in range(num_edges) if mask >> eid & 1]
		if _single_component(inst, selected):
			tour = eulerian_tour(inst, selected)
			return OptimumResult(status='optimal', cost=float(all_costs[idx]), tour=tour)
	return OptimumResult(status='infeasible')


def _single_component(inst: GipInstance, selected: Sequence[int]) -> bool:
	graph = nx.DiGraph()
	graph.add_edges_from((inst.tail(e), inst.head(e)) for e in selected)
	return inst.root in graph and nx.is_weakly_connected(graph)


# endregion


# region - Files
def load_instance(path: str | Path) -> tuple[GipInstance, Optional[CoverageMap]]:
	"""Read an instance file; groups and coverage must agree when both are present."""
	with open(path, 'r', encoding='utf-8') as f:
		data = InstanceFile.model_validate(json.load(f))

	coverage = None
	groups = [frozenset(g) for g in data.groups] if data.groups is not None else None
	if data.coverage is not None:
		if len(data.coverage.by_vertex) != data.num_vertices:
			raise ValueError('coverage.by_vertex must list every vertex')
		coverage = CoverageMap(
			poi_count=data.coverage.poi_count,
			by_vertex=[frozenset(p) for p in data.coverage.by_vertex],
		)
		inverted = invert_coverage(coverage)
		if groups is not None and groups != inverted:
			raise ValueError('groups do not match the inverted coverage map')
		groups = inverted

	inst = GipInstance(
		num_vertices=data.num_vertices,
		edges=[tuple(e) for e in data.edges],
		root=data.root,
		groups=groups or [],
	)
	return inst, coverage


def instance_to_dict(inst: GipInstance, coverage: Optional[CoverageMap] = None) -> dict:
	data: dict = {
		'num_vertices': inst.num_vertices,
		'root': inst.root,
		'edges': [[tail, head, float(cost)] for tail, head, cost in inst.edges],
		'groups': [sorted(group) for group in inst.groups],
	}
	if coverage is not None:
		data['coverage'] = CoverageFile(
			poi_count=coverage.poi_count,
			by_vertex=[sorted(pois) for pois in coverage.by_vertex],
		).model_dump()
	return data


def save_instance(
	inst: GipInstance, path: str | Path, coverage: Optional[CoverageMap] = None
) -> None:
	Path(path).parent.mkdir(parents=True, exist_ok=True)
	with open(path, 'w', encoding='utf-8') as f:
		json.dump(instance_to_dict(inst, coverage), f, sort_keys=True, separators=(',', ':'))
		f.write('\n')


def load_tour_pairs(path: str | Path) -> list[tuple[int, int]]:
	with open(path, 'r', encoding='utf-8') as f:
		return TourFile.model_validate(json.load(f)).edges


def save_tour(inst: GipInstance, tour: Tour, path: str | Path) -> None:
	Path(path).parent.mkdir(parents=True, exist_ok=True)
	with open(path, 'w', encoding='utf-8') as f:
		json.dump({'edges': [list(p) for p in tour.pairs(inst)]}, f)
		f.write('\n')


# endregion
