from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from gip_planner.formulation.views import CutsetRow

INTEGRALITY_TOL = 1e-7
VIOLATION_TOL = 1e-6


@dataclass(frozen=True)
class Candidate:
	"""
	A solution candidate in edge space. `demand[i]` is the coverage requirement of group
	i (z_i under partial coverage, otherwise absent and read as 1).
	"""

	values: np.ndarray
	integral: bool
	demand: Optional[np.ndarray] = None

	@classmethod
	def from_values(
		cls,
		values: np.ndarray,
		demand: Optional[np.ndarray] = None,
		tol: float = INTEGRALITY_TOL,
	) -> 'Candidate':
		values = np.asarray(values, dtype=np.float64)
		integral = bool(np.all(np.minimum(np.abs(values), np.abs(values - 1.0)) <= tol))
		return cls(values=values, integral=integral, demand=demand)

	def group_demand(self, group: int) -> float:
		return 1.0 if self.demand is None else float(self.demand[group])


@dataclass(frozen=True)
class Cut:
	"""Violated group-cutset: R contains the root and misses group `excluded_group`."""

	R: frozenset[int]
	excluded_group: int
	edges: tuple[int, ...]

	@property
	def key(self) -> str:
		payload = ','.join(str(e) for e in sorted(self.edges))
		return hashlib.sha256(payload.encode()).hexdigest()

	@property
	def row(self) -> CutsetRow:
		return CutsetRow(edges=self.edges, excluded_group=self.excluded_group)

	def value(self, values: np.ndarray) -> float:
		return float(sum(values[e] for e in self.edges))


# Oracle parameter models
class FlowOracleParams(BaseModel):
	group_ids: Optional[list[int]] = None


class CombinedOracleParams(BaseModel):
	sample_size: int = Field(default=100, ge=1)


class SeparationError(Exception):
	"""Base class for all separation errors"""


class NotIntegralError(SeparationError):
	"""The connectivity oracle only accepts integral candidates"""
