import logging
from typing import Iterable

from gip_planner.formulation.views import (
	BadQError,
	CutsetRow,
	EmptyGroupError,
	Flavor,
	FormulationHandle,
	NoExcludedGroupError,
	RootNotInRError,
	WrongFlavorError,
)
from gip_planner.graph.views import GipInstance, TooLargeError
from gip_planner.lp.views import MilpModel, Sense, VarType

logger = logging.getLogger(__name__)

MCF_SIZE_GUARD = 200_000


def build_baseline(inst: GipInstance) -> FormulationHandle:
	"""
	Edge-selection model without subtour elimination: one binary per edge, minimum
	total cost, at least one edge out of the root, every group entered at least once,
	in-degree equal to out-degree at every vertex.
	"""
	empty = inst.empty_groups()
	if empty:
		raise EmptyGroupError(empty[0])

	model = MilpModel(name='gip')
	edge_var = [
		model.add_variable(f'x_{tail}_{head}', vtype=VarType.BINARY) for tail, head, _ in inst.edges
	]
	model.set_objective({edge_var[e]: cost for e, (_, _, cost) in enumerate(inst.edges)})

	model.add_constraint(
		{edge_var[e]: 1.0 for e in inst.out_edges(inst.root)}, Sense.GE, 1.0, name='root'
	)
	coverage_rows = []
	for i, group in enumerate(inst.groups):
		row = {edge_var[e]: 1.0 for v in group for e in inst.in_edges(v)}
		coverage_rows.append(model.add_constraint(row, Sense.GE, 1.0, name=f'cover_{i}'))
	for v in range(inst.num_vertices):
		row = {edge_var[e]: 1.0 for e in inst.in_edges(v)}
		for e in inst.out_edges(v):
			row[edge_var[e]] = -1.0
		model.add_constraint(row, Sense.EQ, 0.0, name=f'balance_{v}')

	logger.debug(
		f'baseline model: {model.num_variables} variables, {model.num_constraints} constraints'
	)
	return FormulationHandle(
		inst=inst, model=model, edge_var_index=edge_var, coverage_rows=coverage_rows
	)


def _require_baseline(h: FormulationHandle) -> None:
	if h.flavor != Flavor.BASELINE:
		raise WrongFlavorError(Flavor.BASELINE, h.flavor)


def add_scf(h: FormulationHandle) -> FormulationHandle:
	"""
	Single-commodity flow: the root ships one unit per visit along selected edges.
	f_uv <= M x_uv with M = 2(n-1), and every non-root vertex consumes as many units as
	it has selected outgoing edges.
	"""
	_require_baseline(h)
	inst, model, x = h.inst, h.model, h.edge_var_index
	big_m = 2.0 * (inst.num_vertices - 1)
	f = [model.add_variable(f'f_{tail}_{head}') for tail, head, _ in inst.edges]
	for e in range(inst.num_edges):
		model.add_constraint({f[e]: 1.0, x[e]: -big_m}, Sense.LE, 0.0, name=f'cap_{e}')
	for v in range(inst.num_vertices):
		if v == inst.root:
			continue
		row = {f[e]: 1.0 for e in inst.in_edges(v)}
		for e in inst.out_edges(v):
			row[f[e]] = -1.0
			row[x[e]] = -1.0
		model.add_constraint(row, Sense.EQ, 0.0, name=f'consume_{v}')
	h.flow_var_index[0] = f
	h.flavor = Flavor.SCF
	return h


def add_mcf(h: FormulationHandle, size_guard: int = MCF_SIZE_GUARD) -> FormulationHandle:
	"""
	Multi-commodity flow: one commodity per group, leaving the root and absorbed by the
	group's vertices, each bounded by the edge selection.
	"""
	_require_baseline(h)
	inst, model, x = h.inst, h.model, h.edge_var_index
	size = inst.num_groups * inst.num_edges
	if size > size_guard:
		raise TooLargeError(size, size_guard, what='flow variables')

	for i, group in enumerate(inst.groups):
		g = [model.add_variable(f'g{i}_{tail}_{head}', 0.0, 1.0) for tail, head, _ in inst.edges]
		h.flow_var_index[i] = g
		for e in range(inst.num_edges):
			model.add_constraint({g[e]: 1.0, x[e]: -1.0}, Sense.LE, 0.0, name=f'couple{i}_{e}')
		if inst.root in group:
			continue

		demand, rhs = _demand_terms(h, i)
		row = {g[e]: 1.0 for e in inst.out_edges(inst.root)}
		row.update(demand)
		model.add_constraint(row, Sense.GE, rhs, name=f'emit_{i}')
		row = dict(demand)
		for v in group:
			for e in inst.in_edges(v):
				row[g[e]] = row.get(g[e], 0.0) + 1.0
			for e in inst.out_edges(v):
				row[g[e]] = row.get(g[e], 0.0) - 1.0
		model.add_constraint(row, Sense.GE, rhs, name=f'absorb_{i}')
		for v in range(inst.num_vertices):
			if v == inst.root or v in group:
				continue
			row = {g[e]: 1.0 for e in inst.in_edges(v)}
			for e in inst.out_edges(v):
				row[g[e]] = -1.0
			model.add_constraint(row, Sense.EQ, 0.0, name=f'conserve{i}_{v}')

	h.flavor = Flavor.MCF
	logger.debug(f'mcf model: {model.num_variables} variables, {model.num_constraints} constraints')
	return h


def _demand_terms(h: FormulationHandle, group: int) -> tuple[dict[int, float], float]:
	if h.partial_q is None:
		return {}, 1.0
	return {h.group_var_index[group]: -1.0}, 0.0


def as_group_cutset(h: FormulationHandle) -> FormulationHandle:
	"""Mark a baseline handle as the static part of the group-cutset formulation."""
	_require_baseline(h)
	h.flavor = Flavor.GROUP_CUTSET
	return h


def group_cutset_constraint(inst: GipInstance, R: Iterable[int]) -> CutsetRow:
	"""Row over the edges leaving R; R holds the root and misses a whole group."""
	members = frozenset(R)
	if inst.root not in members:
		raise RootNotInRError(f'root {inst.root} is not in the cut set')
	excluded = next((i for i, group in enumerate(inst.groups) if not group & members), None)
	if excluded is None:
		raise NoExcludedGroupError('every group intersects the cut set')
	return CutsetRow(edges=leaving_edges(inst, members), excluded_group=excluded)


def leaving_edges(inst: GipInstance, members: frozenset[int]) -> tuple[int, ...]:
	return tuple(
		e for e, (tail, head, _) in enumerate(inst.edges) if tail in members and head not in members
	)


def add_partial_coverage(h: FormulationHandle, q: int) -> FormulationHandle:
	"""
	Require only q of the k groups: z_i marks group i as covered, coverage rows become
	sum x - z_i >= 0, and sum z >= q.
	"""
	_require_baseline(h)
	inst, model = h.inst, h.model
	if not 0 <= q <= inst.num_groups or h.partial_q is not None:
		raise BadQError(q, inst.num_groups)

	z = [model.add_variable(f'z_{i}', vtype=VarType.BINARY) for i in range(inst.num_groups)]
	for i, cid in enumerate(h.coverage_rows):
		row = dict(model.constraints[cid].coeffs)
		row[z[i]] = -1.0
		model.update_constraint(cid, row, rhs=0.0)
	model.add_constraint({zi: 1.0 for zi in z}, Sense.GE, float(q), name='min_covered')
	h.group_var_index = z
	h.partial_q = q
	return h
