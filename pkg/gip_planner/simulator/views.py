from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from pydantic import BaseModel, Field, model_validator

Point = tuple[float, float]


class Rect(BaseModel):
	"""Closed axis-aligned rectangle."""

	xmin: float
	ymin: float
	xmax: float
	ymax: float

	@model_validator(mode='after')
	def _ordered(self) -> 'Rect':
		if self.xmin > self.xmax or self.ymin > self.ymax:
			raise ValueError(f'empty rectangle {self}')
		return self

	@property
	def width(self) -> float:
		return self.xmax - self.xmin

	@property
	def height(self) -> float:
		return self.ymax - self.ymin

	@property
	def diagonal(self) -> float:
		return math.hypot(self.width, self.height)

	def contains(self, x: float, y: float) -> bool:
		return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax


class LObstacle(BaseModel):
	"""Two rectangles sharing the corner `corner`: one arm along x, one along y."""

	corner: Point
	arms: tuple[Rect, Rect]

	def contains(self, x: float, y: float) -> bool:
		return any(arm.contains(x, y) for arm in self.arms)


class Configuration(BaseModel):
	x: float
	y: float
	theta: float = 0.0


class SensorModel(BaseModel):
	fov_half_angle: float = Field(gt=0, le=math.pi)
	range: float = Field(gt=0)


class Workspace(BaseModel):
	bounds: Rect
	obstacles: list[LObstacle] = Field(default_factory=list)
	pois: list[Point] = Field(default_factory=list)
	start: Configuration

	def is_free(self, x: float, y: float) -> bool:
		return self.bounds.contains(x, y) and not any(o.contains(x, y) for o in self.obstacles)


@dataclass
class MazeConfig:
	"""
	Obstacle shapes and configuration metric.

	Default values:
		arm_length: (0.08, 0.25)
			Range of L arm lengths as fractions of the workspace width/height

		arm_thickness: 0.02
			Arm thickness as a fraction of the shorter workspace side

		angle_weight: 0.5
			Length units charged per radian of heading change on an edge

		max_attempts: 10_000
			Rejection-sampling attempts per POI or start configuration
	"""

	arm_length: tuple[float, float] = (0.08, 0.25)
	arm_thickness: float = 0.02
	angle_weight: float = 0.5
	max_attempts: int = 10_000


@dataclass
class Roadmap:
	"""Configurations and directed weighted edges; vertex 0 is the start."""

	vertices: list[Configuration] = field(default_factory=list)
	edges: list[tuple[int, int, float]] = field(default_factory=list)


class GeometryFile(BaseModel):
	"""Sidecar of a generated instance, for plotting."""

	bounds: Rect
	obstacles: list[LObstacle]
	pois: list[Point]
	start: Configuration
	sensor: SensorModel
	configurations: list[Configuration]
	seed: Optional[int] = None


class SimulatorError(Exception):
	"""Base class for all simulator errors"""


class PlacementFailureError(SimulatorError):
	def __init__(self, what: str, attempts: int):
		super().__init__(f'could not place {what} in free space after {attempts} attempts')
		self.what = what
		self.attempts = attempts
