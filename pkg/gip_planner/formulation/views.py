from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from gip_planner.graph.views import GipInstance
from gip_planner.lp.views import MilpModel, Sense


class Flavor(str, Enum):
	BASELINE = 'baseline'
	SCF = 'scf'
	MCF = 'mcf'
	GROUP_CUTSET = 'cutset'


@dataclass(frozen=True)
class CutsetRow:
	"""Sum of x over the edges leaving R is at least one, for a root-containing R."""

	edges: tuple[int, ...]
	excluded_group: int
	sense: Sense = Sense.GE
	rhs: float = 1.0


@dataclass
class FormulationHandle:
	"""
	A MILP together with the bookkeeping that ties its variables back to the instance.

	`edge_var_index[e]` is the binary x variable of edge e. With partial coverage,
	`group_var_index[i]` is the binary z_i of group i and `partial_q` the threshold.
	"""

	inst: GipInstance
	model: MilpModel
	edge_var_index: list[int]
	flavor: Flavor = Flavor.BASELINE
	coverage_rows: list[int] = field(default_factory=list)
	partial_q: Optional[int] = None
	group_var_index: list[int] = field(default_factory=list)
	flow_var_index: dict[int, list[int]] = field(default_factory=dict)

	@property
	def label(self) -> str:
		if self.partial_q is None:
			return self.flavor.value
		return f'{self.flavor.value}+partial({self.partial_q})'

	def edge_values(self, values: np.ndarray) -> np.ndarray:
		return np.asarray(values)[self.edge_var_index]

	def group_values(self, values: np.ndarray) -> Optional[np.ndarray]:
		if self.partial_q is None:
			return None
		return np.asarray(values)[self.group_var_index]

	def model_row(self, cut: CutsetRow) -> tuple[dict[int, float], Sense, float]:
		"""Cutset row in model variables; under partial coverage the rhs 1 becomes z_i."""
		coeffs = {self.edge_var_index[e]: 1.0 for e in cut.edges}
		if self.partial_q is None:
			return coeffs, cut.sense, cut.rhs
		coeffs[self.group_var_index[cut.excluded_group]] = -1.0
		return coeffs, cut.sense, 0.0


class FormulationError(Exception):
	"""Base class for all formulation errors"""


class EmptyGroupError(FormulationError):
	def __init__(self, group: int):
		super().__init__(f'group {group} has no vertex, the instance is infeasible')
		self.group = group


class WrongFlavorError(FormulationError):
	def __init__(self, expected: Flavor, actual: Flavor):
		super().__init__(f'expected a {expected.value} handle, got {actual.value}')
		self.expected = expected
		self.actual = actual


class RootNotInRError(FormulationError):
	"""The cut set must contain the root"""


class NoExcludedGroupError(FormulationError):
	"""Every group intersects the cut set"""


class BadQError(FormulationError):
	def __init__(self, q: int, k: int):
		super().__init__(f'coverage threshold {q} outside [0, {k}]')
		self.q = q
		self.k = k
