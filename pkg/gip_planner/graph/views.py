from __future__ import annotations

from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

Edge = tuple[int, int, float]


class GipInstance(BaseModel):
	"""
	Directed inspection graph with a root and coverage groups.

	Edge ids are positions in `edges`. Groups may be empty (an uncoverable POI); such
	instances are valid data but infeasible, see `empty_groups()`.
	"""

	model_config = ConfigDict(frozen=True)

	num_vertices: int = Field(ge=1)
	edges: list[Edge]
	root: int
	groups: list[frozenset[int]]

	_out_edges: list[list[int]] = PrivateAttr(default_factory=list)
	_in_edges: list[list[int]] = PrivateAttr(default_factory=list)
	_edge_index: dict[tuple[int, int], int] = PrivateAttr(default_factory=dict)

	@model_validator(mode='after')
	def _check_structure(self) -> 'GipInstance':
		n = self.num_vertices
		if not 0 <= self.root < n:
			raise ValueError(f'root {self.root} is not a vertex id')
		seen: set[tuple[int, int]] = set()
		for eid, (tail, head, cost) in enumerate(self.edges):
			if not (0 <= tail < n and 0 <= head < n):
				raise ValueError(f'edge {eid} ({tail},{head}) references a missing vertex')
			if tail == head:
				raise ValueError(f'edge {eid} is a self loop on {tail}')
			if cost < 0:
				raise ValueError(f'edge {eid} has negative cost {cost}')
			if (tail, head) in seen:
				raise ValueError(f'duplicate directed edge ({tail},{head})')
			seen.add((tail, head))
		for i, group in enumerate(self.groups):
			for v in group:
				if not 0 <= v < n:
					raise ValueError(f'group {i} references missing vertex {v}')
		return self

	def model_post_init(self, __context) -> None:
		out_edges: list[list[int]] = [[] for _ in range(self.num_vertices)]
		in_edges: list[list[int]] = [[] for _ in range(self.num_vertices)]
		index: dict[tuple[int, int], int] = {}
		for eid, (tail, head, _) in enumerate(self.edges):
			out_edges[tail].append(eid)
			in_edges[head].append(eid)
			index[(tail, head)] = eid
		self._out_edges = out_edges
		self._in_edges = in_edges
		self._edge_index = index

	@property
	def num_edges(self) -> int:
		return len(self.edges)

	@property
	def num_groups(self) -> int:
		return len(self.groups)

	@property
	def strictly_positive_costs(self) -> bool:
		return all(cost > 0 for _, _, cost in self.edges)

	def out_edges(self, v: int) -> list[int]:
		return self._out_edges[v]

	def in_edges(self, v: int) -> list[int]:
		return self._in_edges[v]

	def edge_id(self, tail: int, head: int) -> Optional[int]:
		return self._edge_index.get((tail, head))

	def tail(self, eid: int) -> int:
		return self.edges[eid][0]

	def head(self, eid: int) -> int:
		return self.edges[eid][1]

	def cost(self, eid: int) -> float:
		return self.edges[eid][2]

	def costs(self) -> list[float]:
		return [cost for _, _, cost in self.edges]

	def empty_groups(self) -> list[int]:
		return [i for i, group in enumerate(self.groups) if not group]

	def groups_of(self) -> list[list[int]]:
		"""Group ids containing each vertex."""
		member_of: list[list[int]] = [[] for _ in range(self.num_vertices)]
		for i, group in enumerate(self.groups):
			for v in sorted(group):
				member_of[v].append(i)
		return member_of


class CoverageMap(BaseModel):
	"""Per-vertex visibility sets chi(v) over POI ids 0..poi_count-1."""

	poi_count: int = Field(ge=0)
	by_vertex: list[frozenset[int]]

	@model_validator(mode='after')
	def _check_ids(self) -> 'CoverageMap':
		for v, pois in enumerate(self.by_vertex):
			for p in pois:
				if not 0 <= p < self.poi_count:
					raise ValueError(f'vertex {v} covers unknown POI {p}')
		return self


class Tour(BaseModel):
	"""Closed walk from the root as an ordered list of edge ids."""

	edges: list[int]

	def vertices(self, inst: GipInstance) -> list[int]:
		if not self.edges:
			return [inst.root]
		return [inst.tail(self.edges[0])] + [inst.head(eid) for eid in self.edges]

	def pairs(self, inst: GipInstance) -> list[tuple[int, int]]:
		return [(inst.tail(eid), inst.head(eid)) for eid in self.edges]

	def cost(self, inst: GipInstance) -> float:
		return float(sum(inst.cost(eid) for eid in self.edges))


class Violation(str, Enum):
	NOT_CLOSED = 'NotClosed'
	BROKEN_CHAIN = 'BrokenChain'
	UNKNOWN_EDGE = 'UnknownEdge'
	REPEATED_EDGE = 'RepeatedEdge'
	GROUP_UNCOVERED = 'GroupUncovered'


class TourVerdict(BaseModel):
	feasible: bool
	cost: float = 0.0
	violation: Optional[Violation] = None
	group: Optional[int] = None  # set for GroupUncovered

	def describe(self) -> str:
		if self.feasible:
			return f'feasible, cost {self.cost:g}'
		if self.violation == Violation.GROUP_UNCOVERED:
			return f'{self.violation.value}({self.group})'
		return self.violation.value if self.violation else 'infeasible'


class OptimumResult(BaseModel):
	status: Literal['optimal', 'infeasible']
	cost: Optional[float] = None
	tour: Optional[Tour] = None


# Instance file envelope
class CoverageFile(BaseModel):
	poi_count: int
	by_vertex: list[list[int]]


class InstanceFile(BaseModel):
	num_vertices: int
	root: int
	edges: list[tuple[int, int, float]]
	groups: Optional[list[list[int]]] = None
	coverage: Optional[CoverageFile] = None

	@model_validator(mode='after')
	def _needs_groups_or_coverage(self) -> 'InstanceFile':
		if self.groups is None and self.coverage is None:
			raise ValueError('instance file needs "groups" or "coverage"')
		return self


class TourFile(BaseModel):
	edges: list[tuple[int, int]]


class GraphError(Exception):
	"""Base class for all graph-core errors"""


class TooLargeError(GraphError):
	def __init__(self, size: int, limit: int, what: str = 'edges'):
		super().__init__(f'{size} {what} exceed the limit of {limit}')
		self.size = size
		self.limit = limit


class CoverageThresholdError(GraphError, ValueError):
	def __init__(self, required: int, num_groups: int):
		super().__init__(f'cannot require {required} covered groups out of {num_groups}')
		self.required = required
		self.num_groups = num_groups
