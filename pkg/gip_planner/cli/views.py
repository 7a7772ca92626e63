from enum import IntEnum
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator


class ExitCode(IntEnum):
	OK = 0
	USAGE = 2
	INFEASIBLE = 3
	RESOURCE_GUARD = 4
	VERIFICATION_FAILED = 5


class RunConfig(BaseModel):
	"""Validated arguments of `solve`."""

	instance: Path
	formulation: Literal['scf', 'mcf', 'cutset'] = 'cutset'
	oracle: Optional[Literal['cc', 'flow', 'combined']] = None
	sample_size: Optional[int] = Field(default=None, ge=1)
	time_limit: float = Field(default=1000.0, ge=0)
	heuristic: Literal['greedy', 'exact', 'off'] = 'greedy'
	seed: int = 0
	min_covered: Optional[int] = Field(default=None, ge=0)
	node_limit: Optional[int] = Field(default=None, ge=1)
	log: Optional[Path] = None
	out: Optional[Path] = None
	report: Optional[Path] = None

	@model_validator(mode='after')
	def _oracle_needs_cutset(self) -> 'RunConfig':
		if self.formulation != 'cutset' and (self.oracle is not None or self.sample_size is not None):
			raise ValueError('--oracle and --sample-size require --formulation cutset')
		return self

	@property
	def report_path(self) -> Path:
		"""`--report`, else `<stem>.report.json` next to the tour, the bound log or the instance."""
		if self.report is not None:
			return self.report
		anchor = self.out or self.log or self.instance
		return anchor.with_name(f'{anchor.stem}.report.json')

	@property
	def effective_oracle(self) -> str:
		return self.oracle or 'combined'

	@property
	def effective_sample_size(self) -> int:
		return self.sample_size or 100


class GenParams(BaseModel):
	"""Validated arguments of `gen`."""

	n: int = Field(ge=1)
	k: int = Field(ge=0)
	obstacles: int = Field(default=10, ge=0)
	fov_deg: float = Field(default=120.0, gt=0, le=360)
	range: float = Field(default=25.0, gt=0)
	step: Optional[float] = Field(default=None, gt=0)
	seed: int = 0
	out: Path
	geometry: Optional[Path] = None

	@property
	def geometry_path(self) -> Path:
		return self.geometry or self.out.with_suffix('.geometry.json')


class SolveSummary(BaseModel):
	"""Report file written by `solve`; wall-clock fields are `wall_s` and `first_incumbent_s`."""

	flavor: str
	termination: str
	ub: Optional[float]
	lb: Optional[float]
	gap_pct: Optional[float]
	incumbent_cost: Optional[float]
	nodes: int
	cuts: int
	lp_solves: int
	root_bound: Optional[float]
	root_gap_pct: Optional[float]
	wall_s: float
	first_incumbent_s: Optional[float]
