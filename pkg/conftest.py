import os
import sys

import numpy as np
import pytest

from gip_planner.graph.views import GipInstance
from gip_planner.logging_config import setup_logging

project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

setup_logging()


@pytest.fixture
def t3() -> GipInstance:
	"""Complete digraph on {0, 1, 2}, unit costs, root 0, groups {1} and {2}."""
	edges = [(u, v, 1.0) for u in range(3) for v in range(3) if u != v]
	return GipInstance(num_vertices=3, edges=edges, root=0, groups=[{1}, {2}])


@pytest.fixture
def p2() -> GipInstance:
	return GipInstance(
		num_vertices=2, edges=[(0, 1, 1.0), (1, 0, 1.0)], root=0, groups=[{1}]
	)


def random_instance(seed: int, max_edges: int = 20) -> GipInstance:
	"""
	Small random instance: 4..8 vertices, at most `max_edges` directed edges with costs in
	(0, 10], 1..3 non-empty groups. A bidirected spanning path keeps most seeds feasible.
	"""
	rng = np.random.default_rng(seed)
	n = int(rng.integers(4, 9))
	order = [0] + [int(v) + 1 for v in rng.permutation(n - 1)]
	pairs = set()
	for a, b in zip(order, order[1:]):
		pairs.add((a, b))
		pairs.add((b, a))
	candidates = [(u, v) for u in range(n) for v in range(n) if u != v and (u, v) not in pairs]
	rng.shuffle(candidates)
	room = max(0, max_edges - len(pairs))
	pairs.update(candidates[: int(rng.integers(0, room + 1))])
	pairs = sorted(pairs)
	if len(pairs) > max_edges:
		pairs = pairs[:max_edges]
	edges = [(u, v, float(rng.uniform(0.1, 10.0))) for u, v in pairs]
	k = int(rng.integers(1, 4))
	groups = []
	for _ in range(k):
		size = int(rng.integers(1, 3))
		groups.append({int(v) for v in rng.choice(np.arange(1, n), size=size, replace=False)})
	return GipInstance(num_vertices=n, edges=edges, root=0, groups=groups)


@pytest.fixture
def make_instance():
	return random_instance
