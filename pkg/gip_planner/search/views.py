from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, Field

from gip_planner.graph.views import GipInstance, Tour
from gip_planner.heuristic.views import HeuristicMode
from gip_planner.lp.views import LpBasis, SimplexConfig
from gip_planner.separation.views import Cut

HeuristicHook = Callable[[GipInstance, Optional[np.ndarray]], Tour]


class Termination(str, Enum):
	OPTIMAL = 'Optimal'
	TIME_LIMIT = 'TimeLimit'
	NODE_LIMIT = 'NodeLimit'
	INFEASIBLE = 'Infeasible'


class BoundEvent(str, Enum):
	ROOT_LP = 'root_lp'
	INCUMBENT = 'incumbent'
	CUT = 'cut'
	NODE = 'node'
	FINAL = 'final'


LOG_HEADER = ('elapsed_s', 'ub', 'lb', 'gap_pct', 'event')


@dataclass
class SolverConfig:
	"""
	Search settings.

	Default values:
		time_limit: 1000.0
			Seconds of search from the start; the root LP is only cut short when the
			pre-root heuristic already found a tour

		oracle: 'combined'
			Separation oracle for the group-cutset formulation: cc, flow or combined

		sample_size: 100
			Groups sampled per fractional candidate by the combined oracle

		seed: 0
			Seed of the group sampler

		heuristic: HeuristicMode.GREEDY
			Matching mode of the primal heuristic, None disables it

		heuristic_every: 20
			Processed nodes between heuristic calls after the root

		warm_start: True
			Re-solve cut rounds and child nodes from the optimal basis of the previous LP

		integrality_tol: 1e-7
			Distance to {0, 1} under which a binary counts as integral

		prune_tol: 1e-6
			Nodes whose bound reaches ub - prune_tol are discarded

		node_limit: None
			Stop after this many processed nodes (deterministic alternative to time_limit)

		log_path: None
			CSV file receiving one row per bound update
	"""

	time_limit: float = 1000.0
	oracle: str = 'combined'
	sample_size: int = 100
	seed: int = 0
	heuristic: Optional[HeuristicMode] = HeuristicMode.GREEDY
	heuristic_every: int = 20
	warm_start: bool = True
	integrality_tol: float = 1e-7
	prune_tol: float = 1e-6
	node_limit: Optional[int] = None
	log_path: Optional[str] = None
	simplex: SimplexConfig = field(default_factory=SimplexConfig)


@dataclass
class SearchNode:
	"""
	Binary fixings along the path from the root; `bound` is the parent's LP value and
	`basis` its optimal basis.
	"""

	node_id: int
	bound_changes: dict[int, float] = field(default_factory=dict)
	bound: float = 0.0
	depth: int = 0
	basis: Optional[LpBasis] = field(default=None, repr=False, compare=False)

	def child(
		self, node_id: int, var: int, value: float, bound: float, basis: Optional[LpBasis] = None
	) -> 'SearchNode':
		if var in self.bound_changes and self.bound_changes[var] != value:
			raise SearchError(f'variable {var} is already fixed to {self.bound_changes[var]}')
		changes = dict(self.bound_changes)
		changes[var] = value
		return SearchNode(
			node_id=node_id, bound_changes=changes, bound=bound, depth=self.depth + 1, basis=basis
		)

	def heap_key(self) -> tuple[float, int, int]:
		return (self.bound, -self.depth, self.node_id)


@dataclass
class CutPool:
	"""
	Cuts found so far, keyed by the hash of their sorted edge list. Under partial
	coverage two cuts on the same edges differ by their group, so the group joins the key.
	"""

	keyed_by_group: bool = False
	cuts: dict[str, Cut] = field(default_factory=dict)

	def _key(self, cut: Cut) -> str:
		return f'{cut.key}:{cut.excluded_group}' if self.keyed_by_group else cut.key

	def add(self, cut: Cut) -> bool:
		key = self._key(cut)
		if key in self.cuts:
			return False
		self.cuts[key] = cut
		return True

	def __len__(self) -> int:
		return len(self.cuts)

	def __contains__(self, cut: Cut) -> bool:
		return self._key(cut) in self.cuts


class BoundLogRow(BaseModel):
	elapsed_s: float
	ub: float
	lb: float
	gap_pct: float
	event: BoundEvent

	def csv_fields(self) -> list[str]:
		return [
			f'{self.elapsed_s:.6f}',
			repr(self.ub),
			repr(self.lb),
			repr(self.gap_pct),
			self.event.value,
		]


class SolverStats(BaseModel):
	nodes: int = 0
	lp_solves: int = 0
	lp_iterations: int = 0
	cuts: int = 0
	heuristic_calls: int = 0
	heuristic_improvements: int = 0
	root_bound: Optional[float] = None
	root_gap_pct: Optional[float] = None
	first_incumbent_s: Optional[float] = None


class SolverReport(BaseModel):
	"""Bounds, incumbent and anytime log of one search."""

	flavor: str
	incumbent: Optional[Tour] = None
	ub: float = math.inf
	lb: float = 0.0
	gap_percent: float = math.inf
	log: list[BoundLogRow] = Field(default_factory=list)
	termination: Optional[Termination] = None
	wall_s: float = 0.0
	stats: SolverStats = Field(default_factory=SolverStats)


class SearchError(Exception):
	"""Base class for all search errors"""


class InfeasibleModelError(SearchError):
	"""The root relaxation has no feasible point"""


class WrongSearchFlavorError(SearchError):
	"""The handle's formulation does not match the requested search"""
