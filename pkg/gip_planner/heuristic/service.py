import logging
from collections import Counter
from functools import lru_cache
from itertools import combinations
from typing import Optional, Sequence

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from gip_planner.graph.service import (
	BRUTE_FORCE_MAX_EDGES,
	brute_force_optimum,
	root_component,
	verify_tour,
)
from gip_planner.graph.views import GipInstance, Tour
from gip_planner.heuristic.views import (
	EXACT_MATCHING_LIMIT,
	FULL_APSP_LIMIT,
	CoveringTree,
	HeuristicError,
	HeuristicMode,
	HeuristicResult,
	HeuristicState,
	MatchingFailedError,
	NoDirectedRealizationError,
	OutOfRangeError,
	RepairFailedError,
	UnreachableError,
)
from gip_planner.utils import time_execution_sync

logger = logging.getLogger(__name__)

LP_VALUE_TOL = 1e-7


def discount_costs(inst: GipInstance, lp_values: Optional[Sequence[float]] = None) -> np.ndarray:
	"""c_n(e) = c(e) * (1 - x_e); the plain costs when no LP values are given."""
	costs = np.array(inst.costs(), dtype=np.float64)
	if lp_values is None:
		return costs
	x = np.asarray(lp_values, dtype=np.float64)
	bad = np.flatnonzero((x < -LP_VALUE_TOL) | (x > 1.0 + LP_VALUE_TOL))
	if bad.size:
		raise OutOfRangeError(int(bad[0]), float(x[bad[0]]))
	return costs * (1.0 - np.clip(x, 0.0, 1.0))


def _adjacency(n: int, tails: np.ndarray, heads: np.ndarray, weights: np.ndarray) -> sp.csr_matrix:
	"""CSR adjacency with explicit zeros kept, so zero-weight arcs stay arcs."""
	order = np.lexsort((heads, tails))
	indptr = np.zeros(n + 1, dtype=np.int64)
	indptr[1:] = np.cumsum(np.bincount(tails, minlength=n))
	return sp.csr_matrix((weights[order], heads[order], indptr), shape=(n, n))


def _cost_graph(inst: GipInstance, costs: np.ndarray) -> sp.csr_matrix:
	tails = np.array([inst.tail(e) for e in range(inst.num_edges)], dtype=np.int64)
	heads = np.array([inst.head(e) for e in range(inst.num_edges)], dtype=np.int64)
	return _adjacency(inst.num_vertices, tails, heads, np.asarray(costs, dtype=np.float64))


def _unwind(inst: GipInstance, pred: np.ndarray, source: int, target: int) -> list[int]:
	edges = []
	v = target
	while v != source:
		u = int(pred[v])
		edges.append(inst.edge_id(u, v))
		v = u
	edges.reverse()
	return edges


class ShortestPaths:
	"""
	Directed shortest paths under one cost vector. All rows are computed up front for
	graphs up to FULL_APSP_LIMIT vertices; larger graphs compute single-source rows on
	demand, which gives the same distances and paths.
	"""

	def __init__(self, inst: GipInstance, costs: np.ndarray, full: Optional[bool] = None):
		self.inst = inst
		self.graph = _cost_graph(inst, costs)
		self._rows: dict[int, tuple[np.ndarray, np.ndarray]] = {}
		if full is None:
			full = inst.num_vertices <= FULL_APSP_LIMIT
		if full:
			dist, pred = dijkstra(self.graph, directed=True, return_predecessors=True)
			for v in range(inst.num_vertices):
				self._rows[v] = (dist[v], pred[v])

	def _row(self, source: int) -> tuple[np.ndarray, np.ndarray]:
		if source not in self._rows:
			dist, pred = dijkstra(
				self.graph, directed=True, indices=source, return_predecessors=True
			)
			self._rows[source] = (dist, pred)
		return self._rows[source]

	def distances(self, source: int) -> np.ndarray:
		return self._row(source)[0]

	def dist(self, source: int, target: int) -> float:
		return float(self._row(source)[0][target])

	def path(self, source: int, target: int) -> list[int]:
		dist, pred = self._row(source)
		if not np.isfinite(dist[target]):
			raise NoDirectedRealizationError(source, target)
		return _unwind(self.inst, pred, source, target)

	def symmetric(self, u: int, v: int) -> float:
		return (self.dist(u, v) + self.dist(v, u)) / 2.0


# region - Covering tree
def build_covering_tree(
	inst: GipInstance, costs: np.ndarray, paths: Optional[ShortestPaths] = None
) -> CoveringTree:
	"""
	Grow a tree from the root: repeatedly attach the closest vertex of a still uncovered
	group along a shortest path from the nearest tree vertex. Ties go to the lowest
	candidate id, then to the lowest attachment id.
	"""
	paths = paths or ShortestPaths(inst, costs)
	n, k = inst.num_vertices, inst.num_groups
	member_of = inst.groups_of()
	in_tree = np.zeros(n, dtype=bool)
	covered = np.zeros(k, dtype=bool)
	need = np.zeros(n, dtype=np.int64)
	for group in inst.groups:
		for v in group:
			need[v] += 1
	best_dist = np.full(n, np.inf)
	best_src = np.full(n, -1, dtype=np.int64)
	tree = CoveringTree()

	def attach(v: int) -> None:
		in_tree[v] = True
		tree.vertices.append(v)
		for i in member_of[v]:
			if not covered[i]:
				covered[i] = True
				need[list(inst.groups[i])] -= 1
		d = paths.distances(v)
		better = np.isfinite(d) & ((d < best_dist) | ((d == best_dist) & (v < best_src)))
		best_dist[better] = d[better]
		best_src[better] = v

	attach(inst.root)
	while not covered.all():
		candidates = np.flatnonzero(~in_tree & (need > 0) & np.isfinite(best_dist))
		if candidates.size == 0:
			raise UnreachableError(int(np.flatnonzero(~covered)[0]))
		target = int(candidates[np.argmin(best_dist[candidates])])
		path = paths.path(int(best_src[target]), target)
		start = max(i for i, e in enumerate(path) if in_tree[inst.tail(e)])
		for e in path[start:]:
			tree.edges.append(e)
			tree.cost += float(costs[e])
			attach(inst.head(e))

	logger.debug(f'covering tree: {len(tree.edges)} edges, cost {tree.cost:.4f}')
	return tree


# endregion


# region - Matching
def odd_vertices(inst: GipInstance, tree: CoveringTree) -> list[int]:
	degree = np.zeros(inst.num_vertices, dtype=np.int64)
	for e in tree.edges:
		degree[inst.tail(e)] += 1
		degree[inst.head(e)] += 1
	return [int(v) for v in np.flatnonzero(degree % 2)]


def greedy_matching(odd: Sequence[int], paths: ShortestPaths) -> list[tuple[int, int]]:
	"""Pair the closest remaining odd vertices first; ties by lowest ids."""
	pairs = sorted((paths.symmetric(u, v), u, v) for u, v in combinations(sorted(odd), 2))
	matched: set[int] = set()
	matching = []
	for _, u, v in pairs:
		if u not in matched and v not in matched:
			matching.append((u, v))
			matched.update((u, v))
	return matching


def exact_matching(odd: Sequence[int], paths: ShortestPaths) -> list[tuple[int, int]]:
	"""Minimum total symmetric distance pairing by dynamic programming over subsets."""
	odd = sorted(odd)
	size = len(odd)
	if size > EXACT_MATCHING_LIMIT:
		raise MatchingFailedError(size)
	weight = [[paths.symmetric(u, v) for v in odd] for u in odd]

	@lru_cache(maxsize=None)
	def best(mask: int) -> tuple[float, tuple[tuple[int, int], ...]]:
		if mask == 0:
			return 0.0, ()
		i = (mask & -mask).bit_length() - 1
		rest = mask & ~(1 << i)
		result: tuple[float, tuple[tuple[int, int], ...]] = (float('inf'), ())
		for j in range(i + 1, size):
			if rest >> j & 1:
				cost, pairs = best(rest & ~(1 << j))
				cost += weight[i][j]
				if cost < result[0] or not result[1]:
					result = (cost, ((odd[i], odd[j]),) + pairs)
		return result

	return list(best((1 << size) - 1)[1])


# endregion


# region - Tour
def _cheapest_root_cycle(inst: GipInstance, costs: np.ndarray, paths: ShortestPaths) -> list[int]:
	best: Optional[tuple[float, int]] = None
	for e in inst.out_edges(inst.root):
		value = float(costs[e]) + paths.dist(inst.head(e), inst.root)
		if np.isfinite(value) and (best is None or value < best[0]):
			best = (value, e)
	if best is None:
		raise NoDirectedRealizationError(inst.root, inst.root)
	e = best[1]
	return [e] + paths.path(inst.head(e), inst.root)


def _covers_all(inst: GipInstance, walk: Sequence[int]) -> bool:
	visited = {inst.root} | {inst.head(e) for e in walk}
	return all(group & visited for group in inst.groups)


def _shortcut(inst: GipInstance, walk: list[int], state: HeuristicState) -> list[int]:
	"""Skip repeated visits when the bypass edge exists and is not costlier."""
	changed = True
	while changed:
		changed = False
		visited = {inst.tail(walk[0])}
		for i in range(1, len(walk)):
			v = inst.tail(walk[i])
			if v in visited:
				a, b = inst.tail(walk[i - 1]), inst.head(walk[i])
				bypass = inst.edge_id(a, b) if a != b else None
				if bypass is not None and inst.cost(bypass) <= inst.cost(walk[i - 1]) + inst.cost(
					walk[i]
				):
					walk = walk[: i - 1] + [bypass] + walk[i + 1 :]
					state.shortcuts += 1
					changed = True
					break
			visited.add(v)
	return walk


def _residual_path(
	inst: GipInstance,
	counts: Counter,
	repeated: int,
	costs: np.ndarray,
	drop_single: bool,
	banned: set[int],
) -> Optional[list[tuple[int, int]]]:
	"""
	Cheapest path from the tail to the head of `repeated` in the residual graph of the
	edge multiset: unused edges forward at their cost, used edges backward at no cost.
	Backward arcs over singly used edges only when `drop_single`, never over `banned`.
	Returns (edge, +1 | -1) steps, or None.
	"""
	arcs: dict[tuple[int, int], tuple[float, int, int]] = {}
	for f in range(inst.num_edges):
		if f == repeated:
			continue
		m = counts.get(f, 0)
		if m == 0:
			pair, arc = (inst.tail(f), inst.head(f)), (float(costs[f]), f, 1)
		elif m >= 2 or (drop_single and f not in banned):
			pair, arc = (inst.head(f), inst.tail(f)), (0.0, f, -1)
		else:
			continue
		if pair not in arcs or arc[0] < arcs[pair][0]:
			arcs[pair] = arc
	pairs = list(arcs)
	graph = _adjacency(
		inst.num_vertices,
		np.array([u for u, _ in pairs], dtype=np.int64),
		np.array([v for _, v in pairs], dtype=np.int64),
		np.array([arcs[p][0] for p in pairs], dtype=np.float64),
	)

	source, target = inst.tail(repeated), inst.head(repeated)
	dist, pred = dijkstra(graph, directed=True, indices=source, return_predecessors=True)
	if not np.isfinite(dist[target]):
		return None
	steps = []
	v = target
	while v != source:
		u = int(pred[v])
		_, f, direction = arcs[(u, v)]
		steps.append((f, direction))
		v = u
	steps.reverse()
	return steps


def _closed_walk(inst: GipInstance, counts: Counter) -> list[int]:
	"""Euler circuit from the root over a balanced, connected edge multiset."""
	graph = nx.MultiDiGraph()
	for f in sorted(counts):
		for _ in range(counts[f]):
			graph.add_edge(inst.tail(f), inst.head(f), eid=f)
	return [
		graph.edges[a, b, key]['eid']
		for a, b, key in nx.eulerian_circuit(graph, source=inst.root, keys=True)
	]


def _reroute_repeat(
	inst: GipInstance, counts: Counter, repeated: int, costs: np.ndarray
) -> Counter:
	"""
	Remove one traversal of `repeated` by pushing it around a residual path. Paths that
	only grow the support keep every vertex; paths that drop singly used edges are kept
	when the root's component still covers every group, otherwise their dropped edges
	are banned and the search repeats.
	"""
	banned: set[int] = set()
	for drop_single in (False, True):
		while True:
			steps = _residual_path(inst, counts, repeated, costs, drop_single, banned)
			if steps is None:
				break
			candidate = Counter(counts)
			candidate[repeated] -= 1
			for f, direction in steps:
				candidate[f] += direction
			support = [f for f, m in candidate.items() if m > 0]
			kept = root_component(inst, support)
			if kept and _covers_all(inst, kept):
				return Counter({f: candidate[f] for f in kept})
			dropped = {f for f, direction in steps if direction < 0 and counts[f] == 1}
			if not dropped:
				break
			banned |= dropped
	raise RepairFailedError(repeated)


def _repair_repeats(
	inst: GipInstance, walk: list[int], costs: np.ndarray, state: HeuristicState
) -> list[int]:
	"""
	Remove second traversals of an edge: drop one of the two loops the repeated edge
	delimits when coverage survives, otherwise reroute it through the residual graph of
	the walk. Graphs small enough for exhaustive search fall back to the exact optimum
	when no reroute applies.
	"""
	while True:
		first: dict[int, int] = {}
		repeat = None
		for pos, e in enumerate(walk):
			if e in first:
				repeat = (first[e], pos)
				break
			first[e] = pos
		if repeat is None:
			return walk
		p, q = repeat
		for candidate in (walk[:p] + walk[q:], walk[: p + 1] + walk[q + 1 :]):
			if _covers_all(inst, candidate):
				walk = candidate
				state.loops_dropped += 1
				break
		else:
			try:
				walk = _closed_walk(inst, _reroute_repeat(inst, Counter(walk), walk[q], costs))
			except RepairFailedError:
				if inst.num_edges > BRUTE_FORCE_MAX_EDGES:
					raise
				optimum = brute_force_optimum(inst)
				if optimum.tour is None:
					raise
				logger.debug('reroute failed, using the exhaustive optimum')
				walk = list(optimum.tour.edges)
			state.reroutes += 1


def tree_to_tour(
	inst: GipInstance,
	tree: CoveringTree,
	mode: HeuristicMode,
	paths: ShortestPaths,
	state: Optional[HeuristicState] = None,
) -> Tour:
	"""
	Pair the odd tree vertices, walk the resulting even multigraph from the root, and
	realise every step by a directed shortest path in its traversal direction.
	"""
	state = state or HeuristicState(costs=np.array(inst.costs()), tree=tree)
	costs = state.costs
	if not tree.edges:
		walk = _cheapest_root_cycle(inst, costs, paths)
	else:
		state.odd = odd_vertices(inst, tree)
		if mode == HeuristicMode.EXACT:
			state.matching = exact_matching(state.odd, paths)
		else:
			state.matching = greedy_matching(state.odd, paths)
		state.matching_cost = float(sum(paths.symmetric(u, v) for u, v in state.matching))

		multigraph = nx.MultiGraph()
		multigraph.add_node(inst.root)
		for e in tree.edges:
			multigraph.add_edge(inst.tail(e), inst.head(e), eid=e)
		for u, v in state.matching:
			multigraph.add_edge(u, v, eid=None)
		if any(degree % 2 for _, degree in multigraph.degree()):
			raise HeuristicError('matched tree still has odd-degree vertices')

		walk = []
		for a, b, key in nx.eulerian_circuit(multigraph, source=inst.root, keys=True):
			eid = multigraph.edges[a, b, key]['eid']
			if eid is not None and inst.tail(eid) == a:
				walk.append(eid)
			else:
				walk.extend(paths.path(a, b))

	state.walk_cost = float(sum(inst.cost(e) for e in walk))
	walk = _shortcut(inst, walk, state)
	walk = _repair_repeats(inst, walk, costs, state)
	tour = Tour(edges=walk)
	verdict = verify_tour(inst, tour)
	if not verdict.feasible:
		raise HeuristicError(f'heuristic produced an invalid tour: {verdict.describe()}')
	return tour


@time_execution_sync('--run_heuristic')
def run_heuristic(
	inst: GipInstance,
	lp_values: Optional[Sequence[float]] = None,
	mode: HeuristicMode = HeuristicMode.GREEDY,
) -> HeuristicResult:
	"""Discount, grow the covering tree, close it into a tour."""
	costs = discount_costs(inst, lp_values)
	paths = ShortestPaths(inst, costs)
	tree = build_covering_tree(inst, costs, paths)
	state = HeuristicState(costs=costs, tree=tree)
	try:
		tour = tree_to_tour(inst, tree, mode, paths, state)
	except MatchingFailedError as e:
		logger.warning(f'{e}, falling back to greedy matching')
		tour = tree_to_tour(inst, tree, HeuristicMode.GREEDY, paths, state)
	cost = tour.cost(inst)
	logger.debug(
		f'heuristic tour: {len(tour.edges)} edges, cost {cost:.4f} '
		f'(walk {state.walk_cost:.4f}, {state.shortcuts} shortcuts, {state.reroutes} reroutes)'
	)
	return HeuristicResult(tour=tour, cost=cost, state=state)
