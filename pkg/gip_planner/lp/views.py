from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

import numpy as np


class VarType(str, Enum):
	BINARY = 'binary'
	CONTINUOUS = 'continuous'


class Sense(str, Enum):
	LE = '<='
	GE = '>='
	EQ = '='


class LpStatus(str, Enum):
	OPTIMAL = 'optimal'
	INFEASIBLE = 'infeasible'
	UNBOUNDED = 'unbounded'


@dataclass
class Variable:
	name: str
	lb: float = 0.0
	ub: float = math.inf
	vtype: VarType = VarType.CONTINUOUS


@dataclass
class Constraint:
	coeffs: dict[int, float]
	sense: Sense
	rhs: float
	name: Optional[str] = None


@dataclass
class MilpModel:
	"""
	Minimisation MILP: variables with bounds and integrality flags, sparse rows, and a
	sparse objective. Constraint ids are list positions and never change.
	"""

	name: str = 'gip'
	variables: list[Variable] = field(default_factory=list)
	constraints: list[Constraint] = field(default_factory=list)
	objective: dict[int, float] = field(default_factory=dict)

	@property
	def num_variables(self) -> int:
		return len(self.variables)

	@property
	def num_constraints(self) -> int:
		return len(self.constraints)

	def add_variable(
		self,
		name: str,
		lb: float = 0.0,
		ub: float = math.inf,
		vtype: VarType = VarType.CONTINUOUS,
	) -> int:
		if vtype == VarType.BINARY:
			lb, ub = 0.0, 1.0
		if lb > ub:
			raise LpError(f'variable {name} has empty bounds [{lb}, {ub}]')
		self.variables.append(Variable(name=name, lb=float(lb), ub=float(ub), vtype=vtype))
		return len(self.variables) - 1

	def add_constraint(
		self,
		coeffs: Mapping[int, float],
		sense: Sense,
		rhs: float,
		name: Optional[str] = None,
	) -> int:
		row = self._checked_row(coeffs)
		self.constraints.append(Constraint(coeffs=row, sense=Sense(sense), rhs=float(rhs), name=name))
		return len(self.constraints) - 1

	def update_constraint(
		self, cid: int, coeffs: Mapping[int, float], rhs: Optional[float] = None
	) -> None:
		constraint = self.constraints[cid]
		constraint.coeffs = self._checked_row(coeffs)
		if rhs is not None:
			constraint.rhs = float(rhs)

	def set_objective(self, coeffs: Mapping[int, float]) -> None:
		self.objective = self._checked_row(coeffs)

	def binary_ids(self) -> list[int]:
		return [j for j, var in enumerate(self.variables) if var.vtype == VarType.BINARY]

	def copy(self) -> 'MilpModel':
		return MilpModel(
			name=self.name,
			variables=[Variable(v.name, v.lb, v.ub, v.vtype) for v in self.variables],
			constraints=[
				Constraint(dict(c.coeffs), c.sense, c.rhs, c.name) for c in self.constraints
			],
			objective=dict(self.objective),
		)

	def _checked_row(self, coeffs: Mapping[int, float]) -> dict[int, float]:
		row: dict[int, float] = {}
		for j, a in coeffs.items():
			if not 0 <= j < len(self.variables):
				raise UnknownVariableError(j)
			if a != 0:
				row[int(j)] = row.get(int(j), 0.0) + float(a)
		return row


@dataclass
class SimplexConfig:
	"""
	Tolerances and pivoting policy of the revised simplex.

	Default values:
		feasibility_tol: 1e-9
			Bound and row residual tolerance of a returned point

		optimality_tol: 1e-9
			Reduced cost threshold for pricing

		pivot_tol: 1e-11
			Smallest acceptable pivot element

		refactor_every: 64
			Pivots between sparse LU refactorizations of the basis

		pricing_block: 512
			Smallest column block scanned per pricing pass

		bland_factor: 5
			Switch to Bland's rule after bland_factor * (#vars + #rows) iterations
			without objective improvement
	"""

	feasibility_tol: float = 1e-9
	optimality_tol: float = 1e-9
	pivot_tol: float = 1e-11
	refactor_every: int = 64
	pricing_block: int = 512
	bland_factor: int = 5
	max_iterations: Optional[int] = None


@dataclass
class LpBasis:
	"""
	Basic column of every row plus the nonbasic columns resting at their upper bound.
	Column ids are variable ids, then `num_variables + row` for row slacks.
	"""

	basic: np.ndarray
	at_upper: np.ndarray
	num_variables: int

	@property
	def num_rows(self) -> int:
		return int(self.basic.size)


@dataclass
class LpSolution:
	status: LpStatus
	values: np.ndarray
	objective: float
	iterations: int = 0
	basis: Optional[LpBasis] = None

	@property
	def is_optimal(self) -> bool:
		return self.status == LpStatus.OPTIMAL


class LpError(Exception):
	"""Base class for all lp-core errors"""


class UnknownVariableError(LpError):
	def __init__(self, var_id: int):
		super().__init__(f'constraint references unknown variable {var_id}')
		self.var_id = var_id


class NumericalFailureError(LpError):
	"""Pivoting made no progress even under Bland's rule"""


class LpTimeoutError(LpError):
	"""The LP deadline passed before optimality was proven"""
