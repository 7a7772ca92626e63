import math

import pytest

from gip_planner.formulation.service import build_baseline
from gip_planner.formulation.views import EmptyGroupError
from gip_planner.simulator.service import (
	angle_difference,
	build_rrg,
	colliding_edges,
	emit_instance,
	generate_workspace,
	load_geometry,
	save_geometry,
	segment_hits_rect,
	segment_is_free,
	simulate_instance,
	visibility,
)
from gip_planner.simulator.views import (
	Configuration,
	LObstacle,
	PlacementFailureError,
	Rect,
	SensorModel,
	Workspace,
)

BOUNDS = Rect(xmin=0.0, ymin=0.0, xmax=100.0, ymax=100.0)


def wall(xmin: float, ymin: float, xmax: float, ymax: float) -> LObstacle:
	rect = Rect(xmin=xmin, ymin=ymin, xmax=xmax, ymax=ymax)
	return LObstacle(corner=(xmin, ymin), arms=(rect, rect))


def test_angle_difference_wraps():
	assert angle_difference(0.1, 2 * math.pi - 0.1) == pytest.approx(0.2)
	assert angle_difference(math.pi, -math.pi) == pytest.approx(0.0)
	assert angle_difference(0.0, math.pi) == pytest.approx(math.pi)


def test_segment_hits_rect():
	rect = Rect(xmin=4.0, ymin=4.0, xmax=6.0, ymax=6.0)
	assert segment_hits_rect((0.0, 5.0), (10.0, 5.0), rect)
	assert not segment_hits_rect((0.0, 0.0), (10.0, 0.0), rect)
	assert not segment_hits_rect((0.0, 0.0), (3.0, 3.0), rect)
	assert segment_hits_rect((5.0, 5.0), (5.0, 5.0), rect)


# region - visibility
def test_visibility_respects_fov_range_and_occlusion():
	ws = Workspace(
		bounds=BOUNDS,
		obstacles=[wall(58.0, 40.0, 60.0, 60.0)],
		pois=[(60.0, 20.0), (35.0, 50.0), (55.0, 50.0), (70.0, 50.0), (90.0, 50.0)],
		start=Configuration(x=50.0, y=50.0),
	)
	sensor = SensorModel(fov_half_angle=math.radians(60.0), range=25.0)
	seen = visibility(ws, sensor, Configuration(x=50.0, y=50.0, theta=0.0))
	# 0 and 4 are out of range, 1 is behind, 3 is hidden by the wall
	assert seen == frozenset({2})

	wide = SensorModel(fov_half_angle=math.pi, range=40.0)
	assert visibility(ws, wide, Configuration(x=50.0, y=50.0, theta=0.0)) == frozenset({0, 1, 2})


def test_poi_at_the_sensor_is_seen():
	ws = Workspace(bounds=BOUNDS, pois=[(10.0, 10.0)], start=Configuration(x=10.0, y=10.0))
	sensor = SensorModel(fov_half_angle=0.1, range=1.0)
	assert visibility(ws, sensor, Configuration(x=10.0, y=10.0, theta=2.0)) == frozenset({0})


# endregion


# region - workspace and roadmap
def test_workspace_places_everything_in_free_space():
	ws = generate_workspace(4, obstacle_count=12, poi_count=15)
	assert len(ws.obstacles) == 12
	assert len(ws.pois) == 15
	assert ws.is_free(ws.start.x, ws.start.y)
	assert all(ws.is_free(x, y) for x, y in ws.pois)


def test_workspace_rejects_negative_counts():
	with pytest.raises(ValueError):
		generate_workspace(0, obstacle_count=-1)
	with pytest.raises(ValueError):
		generate_workspace(0, poi_count=-1)


def test_blocked_workspace_fails_placement():
	with pytest.raises(PlacementFailureError):
		generate_workspace(0, obstacle_count=0, poi_count=1, fixed_obstacles=[wall(0.0, 0.0, 100.0, 100.0)])


def test_single_vertex_roadmap():
	ws = generate_workspace(1, obstacle_count=3, poi_count=2)
	roadmap = build_rrg(ws, 1)
	assert roadmap.vertices == [ws.start]
	assert roadmap.edges == []
	with pytest.raises(ValueError):
		build_rrg(ws, 0)


@pytest.mark.parametrize('seed', range(4))
def test_roadmap_edges_are_collision_free(seed):
	ws = generate_workspace(seed, obstacle_count=10, poi_count=5)
	roadmap = build_rrg(ws, 80, seed=seed)
	assert colliding_edges(ws, roadmap) == []
	pairs = {(u, v) for u, v, _ in roadmap.edges}
	assert all((v, u) in pairs for u, v in pairs)
	assert all(cost >= 0 for _, _, cost in roadmap.edges)


def test_bisecting_wall_splits_the_roadmap():
	divider = wall(49.0, 0.0, 51.0, 100.0)
	pois = [(25.0, 50.0), (75.0, 50.0)]
	west_ws = Workspace(
		bounds=BOUNDS, obstacles=[divider], pois=pois, start=Configuration(x=20.0, y=50.0)
	)
	east_ws = west_ws.model_copy(update={'start': Configuration(x=80.0, y=50.0)})
	west = build_rrg(west_ws, 40, seed=1)
	east = build_rrg(east_ws, 40, seed=2)
	assert all(c.x < 49.0 for c in west.vertices)
	assert all(c.x > 51.0 for c in east.vertices)
	assert not any(
		segment_is_free(west_ws, (a.x, a.y), (b.x, b.y)) for a in west.vertices for b in east.vertices
	)

	# the POI behind the wall is seen from no vertex of the start's component
	sensor = SensorModel(fov_half_angle=math.pi, range=200.0)
	inst, coverage = emit_instance(west_ws, west, sensor)
	assert inst.empty_groups() == [1]
	assert any(0 in seen for seen in coverage.by_vertex)
	with pytest.raises(EmptyGroupError):
		build_baseline(inst)


# endregion


# region - instances
def test_simulate_instance_is_deterministic():
	first = simulate_instance(seed=7, n=60, k=8)
	second = simulate_instance(seed=7, n=60, k=8)
	assert first == second
	inst, coverage, geometry = first
	assert inst.root == 0
	assert inst.num_vertices == len(geometry.configurations)
	assert len(inst.groups) == 8
	assert coverage.poi_count == 8


def test_simulate_single_vertex():
	inst, coverage, _ = simulate_instance(seed=3, n=1, k=4)
	assert inst.num_vertices == 1
	assert inst.edges == []
	assert all(group <= {0} for group in inst.groups)


def test_groups_are_inverse_of_coverage():
	inst, coverage, _ = simulate_instance(seed=11, n=40, k=6)
	for p, group in enumerate(inst.groups):
		assert group == frozenset(v for v, seen in enumerate(coverage.by_vertex) if p in seen)


def test_geometry_round_trip(tmp_path):
	_, _, geometry = simulate_instance(seed=2, n=20, k=3)
	path = tmp_path / 'geometry.json'
	save_geometry(geometry, path)
	assert load_geometry(path) == geometry


# endregion
