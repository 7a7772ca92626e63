import json
import logging
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from gip_planner.graph.service import invert_coverage
from gip_planner.graph.views import CoverageMap, GipInstance
from gip_planner.simulator.views import (
	Configuration,
	GeometryFile,
	LObstacle,
	MazeConfig,
	PlacementFailureError,
	Point,
	Rect,
	Roadmap,
	SensorModel,
	Workspace,
)
from gip_planner.utils import time_execution_sync

logger = logging.getLogger(__name__)

Seed = int | np.random.SeedSequence

DEFAULT_BOUNDS = Rect(xmin=0.0, ymin=0.0, xmax=100.0, ymax=100.0)


# region - Geometry
def angle_difference(a: float, b: float) -> float:
	"""Smallest absolute difference of two headings, in [0, pi]."""
	return abs((a - b + math.pi) % (2.0 * math.pi) - math.pi)


def segment_hits_rect(p: Point, q: Point, rect: Rect) -> bool:
	"""Liang-Barsky clipping of segment pq against a closed rectangle."""
	x0, y0 = p
	dx, dy = q[0] - x0, q[1] - y0
	t0, t1 = 0.0, 1.0
	for pk, qk in (
		(-dx, x0 - rect.xmin),
		(dx, rect.xmax - x0),
		(-dy, y0 - rect.ymin),
		(dy, rect.ymax - y0),
	):
		if pk == 0:
			if qk < 0:
				return False
			continue
		r = qk / pk
		if pk < 0:
			t0 = max(t0, r)
		else:
			t1 = min(t1, r)
		if t0 > t1:
			return False
	return True


def segment_is_free(ws: Workspace, p: Point, q: Point) -> bool:
	if not (ws.bounds.contains(*p) and ws.bounds.contains(*q)):
		return False
	return not any(segment_hits_rect(p, q, arm) for o in ws.obstacles for arm in o.arms)


def config_cost(a: Configuration, b: Configuration, angle_weight: float) -> float:
	return math.hypot(b.x - a.x, b.y - a.y) + angle_weight * angle_difference(a.theta, b.theta)


# endregion


# region - Workspace
def _clip(rect_bounds: Rect, x0: float, x1: float, y0: float, y1: float) -> Rect:
	return Rect(
		xmin=max(rect_bounds.xmin, min(x0, x1)),
		xmax=min(rect_bounds.xmax, max(x0, x1)),
		ymin=max(rect_bounds.ymin, min(y0, y1)),
		ymax=min(rect_bounds.ymax, max(y0, y1)),
	)


def _random_obstacle(rng: np.random.Generator, bounds: Rect, cfg: MazeConfig) -> LObstacle:
	cx = float(rng.uniform(bounds.xmin, bounds.xmax))
	cy = float(rng.uniform(bounds.ymin, bounds.ymax))
	sx, sy = (float(s) for s in rng.choice([-1.0, 1.0], size=2))
	lx = float(rng.uniform(*cfg.arm_length)) * bounds.width
	ly = float(rng.uniform(*cfg.arm_length)) * bounds.height
	thickness = cfg.arm_thickness * min(bounds.width, bounds.height)
	along_x = _clip(bounds, cx, cx + sx * lx, cy, cy + sy * thickness)
	along_y = _clip(bounds, cx, cx + sx * thickness, cy, cy + sy * ly)
	return LObstacle(corner=(cx, cy), arms=(along_x, along_y))


def _sample_free(
	rng: np.random.Generator, ws: Workspace, what: str, max_attempts: int
) -> Point:
	for _ in range(max_attempts):
		x = float(rng.uniform(ws.bounds.xmin, ws.bounds.xmax))
		y = float(rng.uniform(ws.bounds.ymin, ws.bounds.ymax))
		if ws.is_free(x, y):
			return x, y
	raise PlacementFailureError(what, max_attempts)


def generate_workspace(
	seed: Seed,
	bounds: Rect = DEFAULT_BOUNDS,
	obstacle_count: int = 10,
	poi_count: int = 10,
	config: Optional[MazeConfig] = None,
	fixed_obstacles: Sequence[LObstacle] = (),
) -> Workspace:
	"""
	Random L-shaped obstacles, then a start configuration and the POIs, both
	rejection-sampled into free space.
	"""
	if obstacle_count < 0 or poi_count < 0:
		raise ValueError('obstacle and POI counts must be non-negative')
	cfg = config or MazeConfig()
	rng = np.random.default_rng(seed)
	obstacles = list(fixed_obstacles)
	obstacles += [_random_obstacle(rng, bounds, cfg) for _ in range(obstacle_count)]
	placeholder = Configuration(x=bounds.xmin, y=bounds.ymin)
	ws = Workspace(bounds=bounds, obstacles=obstacles, start=placeholder)

	x, y = _sample_free(rng, ws, 'the start configuration', cfg.max_attempts)
	theta = float(rng.uniform(0.0, 2.0 * math.pi))
	pois = [_sample_free(rng, ws, f'POI {p}', cfg.max_attempts) for p in range(poi_count)]
	return ws.model_copy(update={'start': Configuration(x=x, y=y, theta=theta), 'pois': pois})


# endregion


# region - Roadmap
@time_execution_sync('--build_rrg')
def build_rrg(
	ws: Workspace,
	n: int,
	step: Optional[float] = None,
	neighbor_radius: Optional[float] = None,
	seed: Seed = 0,
	config: Optional[MazeConfig] = None,
) -> Roadmap:
	"""
	Grow a rapidly exploring random graph from the start: steer from the nearest vertex
	towards each sample by at most `step`, then connect the new vertex to every vertex
	within `neighbor_radius` in sight. Each connection yields both directed edges.
	"""
	if n < 1:
		raise ValueError('the roadmap needs at least one vertex')
	cfg = config or MazeConfig()
	step = step or ws.bounds.diagonal / 50.0
	radius = neighbor_radius or 1.5 * step
	rng = np.random.default_rng(seed)

	roadmap = Roadmap(vertices=[ws.start])
	positions = np.empty((n, 2))
	positions[0] = (ws.start.x, ws.start.y)
	size = 1
	attempts = 0
	while size < n and attempts < 100 * n:
		attempts += 1
		sample = np.array(
			[rng.uniform(ws.bounds.xmin, ws.bounds.xmax), rng.uniform(ws.bounds.ymin, ws.bounds.ymax)]
		)
		theta = float(rng.uniform(0.0, 2.0 * math.pi))
		offsets = sample - positions[:size]
		dist2 = np.einsum('ij,ij->i', offsets, offsets)
		nearest = int(np.argmin(dist2))
		length = math.sqrt(dist2[nearest])
		if length == 0.0:
			continue
		point = sample if length <= step else positions[nearest] + offsets[nearest] * (step / length)
		p = (float(point[0]), float(point[1]))
		near = (float(positions[nearest][0]), float(positions[nearest][1]))
		if not ws.is_free(*p) or not segment_is_free(ws, near, p):
			continue

		config_new = Configuration(x=p[0], y=p[1], theta=theta)
		offsets = positions[:size] - point
		within = np.flatnonzero(np.einsum('ij,ij->i', offsets, offsets) <= radius * radius)
		idx = size
		for j in within:
			j = int(j)
			other = (float(positions[j][0]), float(positions[j][1]))
			if other == p or not segment_is_free(ws, other, p):
				continue
			cost = config_cost(roadmap.vertices[j], config_new, cfg.angle_weight)
			roadmap.edges.append((j, idx, cost))
			roadmap.edges.append((idx, j, cost))
		roadmap.vertices.append(config_new)
		positions[idx] = point
		size += 1

	if size < n:
		logger.warning(f'RRG stopped at {size} of {n} vertices after {attempts} samples')
	logger.debug(f'RRG: {size} vertices, {len(roadmap.edges)} directed edges')
	return roadmap


# endregion


# region - Visibility
def visibility(ws: Workspace, sensor: SensorModel, config: Configuration) -> frozenset[int]:
	"""POIs within range, inside the field of view, and in line of sight."""
	seen = set()
	position = (config.x, config.y)
	for p, (px, py) in enumerate(ws.pois):
		dx, dy = px - config.x, py - config.y
		distance = math.hypot(dx, dy)
		if distance > sensor.range:
			continue
		if distance > 0 and angle_difference(math.atan2(dy, dx), config.theta) > sensor.fov_half_angle:
			continue
		if any(segment_hits_rect(position, (px, py), arm) for o in ws.obstacles for arm in o.arms):
			continue
		seen.add(p)
	return frozenset(seen)


def emit_instance(
	ws: Workspace, roadmap: Roadmap, sensor: SensorModel
) -> tuple[GipInstance, CoverageMap]:
	"""Root 0, roadmap edges, groups from the per-vertex visibility sets."""
	if not roadmap.vertices:
		raise ValueError('empty roadmap')
	coverage = CoverageMap(
		poi_count=len(ws.pois),
		by_vertex=[visibility(ws, sensor, config) for config in roadmap.vertices],
	)
	inst = GipInstance(
		num_vertices=len(roadmap.vertices),
		edges=roadmap.edges,
		root=0,
		groups=invert_coverage(coverage),
	)
	empty = inst.empty_groups()
	if empty:
		logger.warning(f'{len(empty)} POI(s) visible from no vertex, e.g. POI {empty[0]}')
	return inst, coverage


def simulate_instance(
	seed: int,
	n: int,
	k: int,
	obstacle_count: int = 10,
	sensor: Optional[SensorModel] = None,
	step: Optional[float] = None,
	bounds: Rect = DEFAULT_BOUNDS,
	config: Optional[MazeConfig] = None,
) -> tuple[GipInstance, CoverageMap, GeometryFile]:
	"""Workspace, roadmap and visibility from one seed."""
	sensor = sensor or SensorModel(fov_half_angle=math.radians(60.0), range=25.0)
	workspace_seed, roadmap_seed = np.random.SeedSequence(seed).spawn(2)
	ws = generate_workspace(workspace_seed, bounds, obstacle_count, k, config)
	roadmap = build_rrg(ws, n, step=step, seed=roadmap_seed, config=config)
	inst, coverage = emit_instance(ws, roadmap, sensor)
	geometry = GeometryFile(
		bounds=ws.bounds,
		obstacles=ws.obstacles,
		pois=ws.pois,
		start=ws.start,
		sensor=sensor,
		configurations=roadmap.vertices,
		seed=seed,
	)
	return inst, coverage, geometry


def save_geometry(geometry: GeometryFile, path: str | Path) -> None:
	Path(path).parent.mkdir(parents=True, exist_ok=True)
	with open(path, 'w', encoding='utf-8') as f:
		json.dump(geometry.model_dump(mode='json'), f, sort_keys=True, separators=(',', ':'))
		f.write('\n')


def load_geometry(path: str | Path) -> GeometryFile:
	with open(path, 'r', encoding='utf-8') as f:
		return GeometryFile.model_validate(json.load(f))


def colliding_edges(ws: Workspace, roadmap: Roadmap) -> list[int]:
	"""Indices of roadmap edges whose endpoints or segment collide; empty when valid."""
	bad = []
	for i, (u, v, _) in enumerate(roadmap.edges):
		a, b = roadmap.vertices[u], roadmap.vertices[v]
		free = ws.is_free(a.x, a.y) and ws.is_free(b.x, b.y)
		if not free or not segment_is_free(ws, (a.x, a.y), (b.x, b.y)):
			bad.append(i)
	return bad


# endregion
