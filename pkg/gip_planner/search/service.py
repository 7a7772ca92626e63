import csv
import heapq
import logging
import math
import time
from pathlib import Path
from typing import Optional, TextIO

import numpy as np
from dotenv import load_dotenv

from gip_planner.formulation.views import Flavor, FormulationHandle
from gip_planner.graph.service import eulerian_tour, root_component, verify_tour
from gip_planner.graph.views import GipInstance, GraphError, Tour
from gip_planner.heuristic.service import run_heuristic
from gip_planner.heuristic.views import HeuristicError, HeuristicMode
from gip_planner.lp.service import relax, solve_lp
from gip_planner.lp.views import LpBasis, LpSolution, LpTimeoutError
from gip_planner.search.views import (
	LOG_HEADER,
	BoundEvent,
	BoundLogRow,
	CutPool,
	HeuristicHook,
	InfeasibleModelError,
	SearchError,
	SearchNode,
	SolverConfig,
	SolverReport,
	Termination,
	WrongSearchFlavorError,
)
from gip_planner.separation.service import Separator
from gip_planner.separation.views import Candidate

load_dotenv()

logger = logging.getLogger(__name__)


def record_bounds(
	report: SolverReport,
	elapsed: float,
	ub: float,
	lb: float,
	event: BoundEvent,
	sink: Optional[TextIO] = None,
) -> BoundLogRow:
	"""
	Append a log row. The upper bound never increases and the lower bound never
	decreases across rows, and the lower bound never exceeds the upper one.
	"""
	if report.log:
		ub = min(ub, report.log[-1].ub)
		lb = max(lb, report.log[-1].lb)
	lb = min(lb, ub)
	if math.isinf(ub):
		gap = math.inf
	elif ub == 0:
		gap = 0.0
	else:
		gap = 100.0 * (ub - lb) / ub
	row = BoundLogRow(elapsed_s=elapsed, ub=ub, lb=lb, gap_pct=gap, event=event)
	report.log.append(row)
	report.ub, report.lb, report.gap_percent = ub, lb, gap
	if sink is not None:
		csv.writer(sink).writerow(row.csv_fields())
		sink.flush()
	return row


def make_heuristic_hook(mode: HeuristicMode) -> HeuristicHook:
	def hook(inst: GipInstance, lp_values: Optional[np.ndarray]) -> Tour:
		return run_heuristic(inst, lp_values, mode).tour

	return hook


class SearchEngine:
	"""
	Best-first branch and bound over a formulation handle. For the group-cutset flavor
	the node loop also separates: integral LP optima are checked for connectivity and
	re-solved until valid, fractional ones get one round of flow separation per node.
	"""

	def __init__(
		self,
		h: FormulationHandle,
		config: Optional[SolverConfig] = None,
		heuristic: Optional[HeuristicHook] = None,
		separator: Optional[Separator] = None,
	):
		self.h = h
		self.inst = h.inst
		self.config = config or SolverConfig()
		self.heuristic = heuristic
		self.relaxed = relax(h.model)
		self.binaries = np.array(h.model.binary_ids(), dtype=np.int64)
		self.cutting = h.flavor == Flavor.GROUP_CUTSET
		self.separator = separator or Separator(self.config.sample_size, self.config.seed)
		self.pool = CutPool(keyed_by_group=h.partial_q is not None)
		self.report = SolverReport(flavor=h.label)
		self._heap: list[tuple[tuple[float, int, int], SearchNode]] = []
		self._next_id = 0
		self._start = 0.0
		self._sink: Optional[TextIO] = None

	# region - bookkeeping
	def _elapsed(self) -> float:
		return time.monotonic() - self._start

	def _record(self, ub: float, lb: float, event: BoundEvent) -> None:
		record_bounds(self.report, self._elapsed(), ub, lb, event, self._sink)

	def _open_bound(self, current: Optional[float] = None) -> float:
		candidates = [entry[0][0] for entry in self._heap[:1]]
		if current is not None:
			candidates.append(current)
		return min(candidates) if candidates else self.report.ub

	def _push(self, node: SearchNode) -> None:
		heapq.heappush(self._heap, (node.heap_key(), node))

	def _new_id(self) -> int:
		self._next_id += 1
		return self._next_id

	# endregion

	# region - incumbents
	def _offer(self, tour: Tour, source: str) -> bool:
		verdict = verify_tour(self.inst, tour, min_covered=self.h.partial_q)
		if not verdict.feasible:
			logger.warning(f'Rejected {source} tour: {verdict.describe()}')
			return False
		if verdict.cost >= self.report.ub - 1e-12:
			return False
		stats = self.report.stats
		if self.report.incumbent is None:
			stats.first_incumbent_s = self._elapsed()
		self.report.incumbent = tour
		logger.info(f'🏆 Incumbent from {source}: cost {verdict.cost:.4f}')
		self._record(verdict.cost, self.report.lb, BoundEvent.INCUMBENT)
		return True

	def _tour_from_values(self, values: np.ndarray) -> Optional[Tour]:
		edge_values = self.h.edge_values(values)
		selected = [int(e) for e in np.flatnonzero(edge_values > 0.5)]
		try:
			return eulerian_tour(self.inst, root_component(self.inst, selected))
		except GraphError as e:
			logger.warning(f'Integral solution does not decompose into a tour: {e}')
			return None

	def _run_heuristic(self, values: Optional[np.ndarray]) -> None:
		if self.heuristic is None:
			return
		self.report.stats.heuristic_calls += 1
		lp_values = None if values is None else self.h.edge_values(values)
		try:
			tour = self.heuristic(self.inst, lp_values)
		except HeuristicError as e:
			logger.warning(f'Heuristic failed: {e}')
			return
		if self._offer(tour, 'heuristic'):
			self.report.stats.heuristic_improvements += 1

	# endregion

	# region - node processing
	def _solve(
		self, node: SearchNode, deadline: Optional[float], warm: Optional[LpBasis] = None
	) -> LpSolution:
		basis = (warm or node.basis) if self.config.warm_start else None
		solution = solve_lp(self.relaxed, node.bound_changes, self.config.simplex, deadline, basis)
		self.report.stats.lp_solves += 1
		self.report.stats.lp_iterations += solution.iterations
		return solution

	def _is_integral(self, values: np.ndarray) -> bool:
		if self.binaries.size == 0:
			return True
		x = values[self.binaries]
		return bool(np.all(np.minimum(x, 1.0 - x) <= self.config.integrality_tol))

	def _add_cuts(self, cuts) -> int:
		added = 0
		for cut in cuts:
			if self.pool.add(cut):
				coeffs, sense, rhs = self.h.model_row(cut.row)
				self.relaxed.add_constraint(coeffs, sense, rhs, name=f'cut_{len(self.pool)}')
				added += 1
		self.report.stats.cuts += added
		return added

	def _process(
		self,
		node: SearchNode,
		deadline: Optional[float],
		solution: Optional[LpSolution] = None,
		is_root: bool = False,
	) -> Optional[LpSolution]:
		"""
		Solve the node LP and separate until no new cut applies. Returns None when the
		node is infeasible, pruned, or an integral candidate could not be made valid.
		"""
		separated = False
		warm = None
		while True:
			if solution is None:
				solution = self._solve(node, deadline, warm)
				if is_root and solution.is_optimal:
					self._record(self.report.ub, solution.objective, BoundEvent.CUT)
			if not solution.is_optimal:
				return None
			if solution.objective >= self.report.ub - self.config.prune_tol:
				return None
			if not self.cutting:
				return solution

			values = solution.values
			integral = self._is_integral(values)
			cand = Candidate.from_values(
				self.h.edge_values(values),
				demand=self.h.group_values(values),
				tol=self.config.integrality_tol,
			)
			if integral:
				cuts = self.separator.separate('cc', self.inst, cand)
				if not cuts:
					return solution
				if not self._add_cuts(cuts):
					logger.warning('Integral candidate violates a pooled cut, dropping node')
					return None
			elif self.config.oracle != 'cc' and not separated:
				separated = True
				cuts = self.separator.separate(self.config.oracle, self.inst, cand)
				if not self._add_cuts(cuts):
					return solution
			else:
				return solution

			if is_root:
				logger.debug(f'✂️ Root cut round: {len(self.pool)} cuts in the pool')
			warm = solution.basis
			solution = None

	def _branch(self, node: SearchNode, solution: LpSolution) -> None:
		x = solution.values[self.binaries]
		fractionality = np.minimum(x, 1.0 - x)
		var = int(self.binaries[int(np.argmax(fractionality))])
		for value in (0.0, 1.0):
			child = node.child(self._new_id(), var, value, solution.objective, solution.basis)
			self._push(child)

	def _accept_integral(self, values: np.ndarray) -> None:
		tour = self._tour_from_values(values)
		if tour is not None:
			self._offer(tour, 'LP')

	# endregion

	def solve(self) -> SolverReport:
		cfg = self.config
		self._start = time.monotonic()
		sink_file = None
		if cfg.log_path:
			Path(cfg.log_path).parent.mkdir(parents=True, exist_ok=True)
			sink_file = open(cfg.log_path, 'w', newline='', encoding='utf-8')
			csv.writer(sink_file).writerow(LOG_HEADER)
			self._sink = sink_file
		try:
			return self._search()
		finally:
			if sink_file is not None:
				sink_file.close()
				self._sink = None

	def _search(self) -> SolverReport:
		cfg = self.config
		report = self.report
		logger.info(
			f'🚀 Solving {report.flavor}: {self.relaxed.num_variables} variables, '
			f'{self.relaxed.num_constraints} rows, time limit {cfg.time_limit:g}s'
		)
		self._run_heuristic(None)

		deadline = self._start + cfg.time_limit
		root = SearchNode(node_id=0)
		try:
			# without a tour to fall back on, the root LP runs to the end
			root_solution = self._solve(root, deadline if report.incumbent is not None else None)
		except LpTimeoutError:
			logger.warning('⏳ Root LP hit the time limit, keeping the heuristic tour')
			self._push(root)
			return self._finish(Termination.TIME_LIMIT)
		if not root_solution.is_optimal:
			raise InfeasibleModelError(f'root relaxation is {root_solution.status.value}')
		report.stats.root_bound = root_solution.objective
		self._record(report.ub, root_solution.objective, BoundEvent.ROOT_LP)
		report.stats.root_gap_pct = report.gap_percent
		logger.info(f'🌳 Root LP bound {root_solution.objective:.4f}')

		termination = None
		last_values = None
		try:
			solution = self._process(root, deadline, root_solution, is_root=True)
		except LpTimeoutError:
			solution = None
			termination = Termination.TIME_LIMIT
			self._push(root)
		if solution is not None:
			last_values = solution.values
			self._run_heuristic(solution.values)
			if self._is_integral(solution.values):
				self._accept_integral(solution.values)
			else:
				self._branch(root, solution)
			self._record(report.ub, self._open_bound(), BoundEvent.NODE)
		report.stats.nodes = 1

		since_heuristic = 0
		while self._heap and termination is None:
			if time.monotonic() > deadline:
				termination = Termination.TIME_LIMIT
				break
			if cfg.node_limit is not None and report.stats.nodes >= cfg.node_limit:
				termination = Termination.NODE_LIMIT
				break
			_, node = heapq.heappop(self._heap)
			if node.bound >= report.ub - cfg.prune_tol:
				continue
			try:
				solution = self._process(node, deadline)
			except LpTimeoutError:
				self._push(node)
				termination = Termination.TIME_LIMIT
				break
			report.stats.nodes += 1
			since_heuristic += 1
			if solution is not None:
				last_values = solution.values
				if self._is_integral(solution.values):
					self._accept_integral(solution.values)
				else:
					self._branch(node, solution)
			if since_heuristic >= cfg.heuristic_every:
				self._run_heuristic(last_values)
				since_heuristic = 0
			lb_before = report.lb
			self._record(report.ub, self._open_bound(), BoundEvent.NODE)
			if report.lb > lb_before + 1e-9:
				logger.debug(f'node {report.stats.nodes}: lb {report.lb:.4f} ub {report.ub:.4f}')

		if termination is None:
			termination = Termination.OPTIMAL if report.incumbent is not None else Termination.INFEASIBLE
		return self._finish(termination)

	def _finish(self, termination: Termination) -> SolverReport:
		report = self.report
		if termination == Termination.OPTIMAL:
			self._record(report.ub, report.ub, BoundEvent.FINAL)
		elif termination == Termination.INFEASIBLE:
			self._record(report.ub, report.lb, BoundEvent.FINAL)
		else:
			self._record(report.ub, self._open_bound(), BoundEvent.FINAL)
		report.termination = termination
		report.wall_s = self._elapsed()
		logger.result(
			f'{termination.value}: ub {report.ub:.6g}, lb {report.lb:.6g}, '
			f'gap {report.gap_percent:.4g}%, {report.stats.nodes} nodes, {report.stats.cuts} cuts'
		)
		return report


def _check_flavor(h: FormulationHandle, allowed: tuple[Flavor, ...]) -> None:
	if h.flavor not in allowed:
		raise WrongSearchFlavorError(
			f'{h.flavor.value} handle cannot be solved here, expected one of '
			+ ', '.join(f.value for f in allowed)
		)


def solve_bnb(
	h: FormulationHandle,
	time_limit: float = 1000.0,
	heuristic: Optional[HeuristicHook] = None,
	log_path: Optional[str] = None,
	config: Optional[SolverConfig] = None,
) -> SolverReport:
	"""Branch and bound on a fully instantiated SCF or MCF model."""
	_check_flavor(h, (Flavor.SCF, Flavor.MCF))
	config = config or SolverConfig()
	config.time_limit = time_limit
	config.log_path = log_path or config.log_path
	return SearchEngine(h, config, heuristic).solve()


def solve_bnc(
	h: FormulationHandle,
	oracle: str = 'combined',
	sample_size: int = 100,
	time_limit: float = 1000.0,
	heuristic: Optional[HeuristicHook] = None,
	log_path: Optional[str] = None,
	rng_seed: int = 0,
	config: Optional[SolverConfig] = None,
	separator: Optional[Separator] = None,
) -> SolverReport:
	"""Branch and cut on the static group-cutset model with lazy cutset rows."""
	_check_flavor(h, (Flavor.GROUP_CUTSET,))
	config = config or SolverConfig()
	config.oracle = oracle
	config.sample_size = sample_size
	config.time_limit = time_limit
	config.seed = rng_seed
	config.log_path = log_path or config.log_path
	separator = separator or Separator(sample_size, rng_seed)
	if oracle not in separator.registry.names:
		raise SearchError(f'unknown oracle {oracle!r}, known: {", ".join(separator.registry.names)}')
	return SearchEngine(h, config, heuristic, separator).solve()
