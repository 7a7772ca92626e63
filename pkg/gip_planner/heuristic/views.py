from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from gip_planner.graph.views import Tour

EXACT_MATCHING_LIMIT = 12
FULL_APSP_LIMIT = 4000


class HeuristicMode(str, Enum):
	GREEDY = 'greedy'
	EXACT = 'exact'


@dataclass
class CoveringTree:
	"""Edges grown from the root until every group has a vertex in the tree."""

	edges: list[int] = field(default_factory=list)
	vertices: list[int] = field(default_factory=list)
	cost: float = 0.0


@dataclass
class HeuristicState:
	"""
	Working data of one heuristic run: discounted costs, the covering tree, the odd
	tree vertices and their pairing. `walk_cost` is the closed walk before shortcuts and
	repairs; `reroutes` counts repairs that had to detour around a repeated edge.
	"""

	costs: np.ndarray
	tree: CoveringTree
	odd: list[int] = field(default_factory=list)
	matching: list[tuple[int, int]] = field(default_factory=list)
	matching_cost: float = 0.0
	walk_cost: float = 0.0
	shortcuts: int = 0
	loops_dropped: int = 0
	reroutes: int = 0


@dataclass
class HeuristicResult:
	tour: Tour
	cost: float
	state: HeuristicState


class HeuristicError(Exception):
	"""Base class for all heuristic errors"""


class OutOfRangeError(HeuristicError):
	def __init__(self, edge: int, value: float):
		super().__init__(f'LP value {value} of edge {edge} is outside [0, 1]')
		self.edge = edge
		self.value = value


class UnreachableError(HeuristicError):
	def __init__(self, group: int):
		super().__init__(f'group {group} cannot be reached from the root')
		self.group = group


class MatchingFailedError(HeuristicError):
	def __init__(self, size: int, limit: int = EXACT_MATCHING_LIMIT):
		super().__init__(f'exact matching supports at most {limit} odd vertices, got {size}')
		self.size = size
		self.limit = limit


class NoDirectedRealizationError(HeuristicError):
	def __init__(self, tail: int, head: int):
		super().__init__(f'no directed path from {tail} to {head}')
		self.tail = tail
		self.head = head


class RepairFailedError(HeuristicError):
	def __init__(self, edge: int):
		super().__init__(f'edge {edge} is traversed twice and no valid reroute removes the repeat')
		self.edge = edge
