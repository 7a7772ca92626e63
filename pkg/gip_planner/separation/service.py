import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Optional, Sequence

import networkx as nx
import numpy as np

from gip_planner.formulation.service import leaving_edges
from gip_planner.graph.views import GipInstance
from gip_planner.separation.registry.service import Registry
from gip_planner.separation.views import (
	VIOLATION_TOL,
	Candidate,
	CombinedOracleParams,
	Cut,
	FlowOracleParams,
	NotIntegralError,
)
from gip_planner.utils import oracle_threads

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-12


def separate_connectivity(inst: GipInstance, cand: Candidate) -> Optional[Cut]:
	"""
	Strongly connected component of the root in the selected subgraph; returns the cut
	for the lowest-index required group it misses, or None when every group is reached.
	"""
	if not cand.integral:
		raise NotIntegralError('connectivity separation needs an integral candidate')
	graph = nx.DiGraph()
	graph.add_node(inst.root)
	graph.add_edges_from(
		(inst.tail(e), inst.head(e)) for e in np.flatnonzero(cand.values > 0.5)
	)
	component = frozenset(
		(nx.descendants(graph, inst.root) & nx.ancestors(graph, inst.root)) | {inst.root}
	)
	for i, group in enumerate(inst.groups):
		if cand.group_demand(i) > 0.5 and not group & component:
			return Cut(R=component, excluded_group=i, edges=leaving_edges(inst, component))
	return None


def max_flow_min_cut(
	inst: GipInstance, capacities: Sequence[float], source: int, sinks: Iterable[int]
) -> tuple[float, frozenset[int]]:
	"""
	Maximum flow from `source` to a virtual sink fed by unit arcs from every vertex in
	`sinks` (shortest augmenting paths). Returns the flow value and the source side of a
	minimum cut: the vertices reachable in the final residual network.
	"""
	n = inst.num_vertices
	target = n
	heads: list[int] = []
	residual: list[float] = []
	arcs_from: list[list[int]] = [[] for _ in range(n + 1)]

	def add_arc(tail: int, head: int, capacity: float) -> None:
		arcs_from[tail].append(len(heads))
		heads.append(head)
		residual.append(capacity)
		arcs_from[head].append(len(heads))
		heads.append(tail)
		residual.append(0.0)

	for e, (tail, head, _) in enumerate(inst.edges):
		add_arc(tail, head, max(0.0, float(capacities[e])))
	for v in sorted(set(sinks)):
		add_arc(v, target, 1.0)

	flow = 0.0
	while True:
		parent_arc = [-1] * (n + 1)
		seen = [False] * (n + 1)
		seen[source] = True
		queue = deque([source])
		while queue and not seen[target]:
			u = queue.popleft()
			for a in arcs_from[u]:
				v = heads[a]
				if not seen[v] and residual[a] > RESIDUAL_TOL:
					seen[v] = True
					parent_arc[v] = a
					queue.append(v)
		if not seen[target]:
			side = frozenset(v for v in range(n) if seen[v])
			return flow, side

		bottleneck = float('inf')
		v = target
		while v != source:
			a = parent_arc[v]
			bottleneck = min(bottleneck, residual[a])
			v = heads[a ^ 1]
		v = target
		while v != source:
			a = parent_arc[v]
			residual[a] -= bottleneck
			residual[a ^ 1] += bottleneck
			v = heads[a ^ 1]
		flow += bottleneck


def _flow_cut(inst: GipInstance, cand: Candidate, group: int) -> Optional[Cut]:
	demand = cand.group_demand(group)
	if demand <= VIOLATION_TOL:
		return None
	value, side = max_flow_min_cut(inst, cand.values, inst.root, inst.groups[group])
	if value < demand - VIOLATION_TOL:
		return Cut(R=side, excluded_group=group, edges=leaving_edges(inst, side))
	return None


def separate_flow(
	inst: GipInstance,
	cand: Candidate,
	group_ids: Iterable[int],
	threads: Optional[int] = None,
) -> list[Cut]:
	"""One max-flow per listed group; a cut for each group reached with less than its demand."""
	groups = [i for i in group_ids if inst.root not in inst.groups[i]]
	workers = min(threads or oracle_threads(), len(groups))
	if workers > 1:
		with ThreadPoolExecutor(max_workers=workers) as pool:
			found = list(pool.map(lambda i: _flow_cut(inst, cand, i), groups))
	else:
		found = [_flow_cut(inst, cand, i) for i in groups]
	return [cut for cut in found if cut is not None]


def separate_combined(
	inst: GipInstance,
	cand: Candidate,
	sample_size: int,
	rng: np.random.Generator | int = 0,
) -> list[Cut]:
	"""Connectivity check on integral candidates, flow on a group sample otherwise."""
	if cand.integral:
		cut = separate_connectivity(inst, cand)
		return [] if cut is None else [cut]
	if not isinstance(rng, np.random.Generator):
		rng = np.random.default_rng(rng)
	k = inst.num_groups
	sample = sorted(int(i) for i in rng.choice(k, size=min(sample_size, k), replace=False))
	return separate_flow(inst, cand, sample)


class Separator:
	"""Named oracles over one seeded generator; custom oracles register on `registry`."""

	def __init__(self, sample_size: int = 100, seed: int = 0):
		self.registry = Registry()
		self.sample_size = sample_size
		self.rng = np.random.default_rng(seed)
		self._register_default_oracles()

	def _register_default_oracles(self):
		@self.registry.oracle('Connectivity check of the root component, integral candidates')
		def cc(inst: GipInstance, cand: Candidate) -> list[Cut]:
			cut = separate_connectivity(inst, cand)
			return [] if cut is None else [cut]

		@self.registry.oracle('Max-flow check of every listed group', param_model=FlowOracleParams)
		def flow(params: FlowOracleParams, inst: GipInstance, cand: Candidate) -> list[Cut]:
			group_ids = params.group_ids
			if group_ids is None:
				group_ids = list(range(inst.num_groups))
			return separate_flow(inst, cand, group_ids)

		@self.registry.oracle(
			'Connectivity on integral, sampled max-flow on fractional candidates',
			param_model=CombinedOracleParams,
		)
		def combined(params: CombinedOracleParams, inst: GipInstance, cand: Candidate) -> list[Cut]:
			return separate_combined(inst, cand, params.sample_size, self.rng)

	def separate(self, oracle_name: str, inst: GipInstance, cand: Candidate, **params) -> list[Cut]:
		if oracle_name == 'combined':
			params.setdefault('sample_size', self.sample_size)
		cuts = self.registry.execute_oracle(oracle_name, params, inst, cand)
		logger.debug(f'{oracle_name}: {len(cuts)} violated cutset(s)')
		return cuts
