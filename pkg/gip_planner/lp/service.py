import logging
import math
import time
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from gip_planner.lp.views import (
	LpBasis,
	LpError,
	LpSolution,
	LpStatus,
	LpTimeoutError,
	MilpModel,
	NumericalFailureError,
	Sense,
	SimplexConfig,
	Variable,
	VarType,
)
from gip_planner.utils import time_execution_sync

logger = logging.getLogger(__name__)

_BASIC, _AT_LOWER, _AT_UPPER = 0, 1, 2


def relax(model: MilpModel) -> MilpModel:
	"""Copy of `model` with every integrality flag dropped; bounds are kept."""
	relaxed = model.copy()
	for var in relaxed.variables:
		var.vtype = VarType.CONTINUOUS
	return relaxed


def add_constraint(
	model: MilpModel, row: Mapping[int, float], sense: Sense, rhs: float, name: Optional[str] = None
) -> int:
	return model.add_constraint(row, sense, rhs, name=name)


@time_execution_sync('--solve_lp')
def solve_lp(
	model: MilpModel,
	bound_changes: Optional[Mapping[int, float]] = None,
	config: Optional[SimplexConfig] = None,
	deadline: Optional[float] = None,
	warm_start: Optional[LpBasis] = None,
) -> LpSolution:
	"""
	Solve a continuous model. `bound_changes` fixes variables (id -> value) without
	touching the model; `deadline` is a `time.monotonic()` instant. `warm_start` is the
	basis of an earlier solve over the same variables and a prefix of the current rows.
	"""
	if any(var.vtype != VarType.CONTINUOUS for var in model.variables):
		raise LpError('solve_lp expects a relaxed model, call relax() first')
	return RevisedSimplex(model, bound_changes, config, deadline, warm_start).solve()


class BasisFactor:
	"""Sparse LU factors of a basis matrix followed by the eta vectors of later pivots."""

	def __init__(self, matrix: sp.csc_matrix):
		try:
			self.lu = splu(matrix)
		except RuntimeError as e:
			raise NumericalFailureError('basis matrix is singular') from e
		self.etas: list[tuple[int, float, np.ndarray, np.ndarray]] = []

	def __len__(self) -> int:
		return len(self.etas)

	def update(self, row: int, alpha: np.ndarray) -> None:
		"""Column `row` of the basis was replaced by a column whose FTRAN is `alpha`."""
		idx = np.flatnonzero(alpha)
		self.etas.append((row, float(alpha[row]), idx, alpha[idx]))

	def ftran(self, rhs: np.ndarray) -> np.ndarray:
		v = self.lu.solve(rhs)
		for row, pivot, idx, vals in self.etas:
			step = v[row] / pivot
			v[idx] -= vals * step
			v[row] = step
		return v

	def btran(self, rhs: np.ndarray) -> np.ndarray:
		w = np.array(rhs, dtype=np.float64)
		for row, pivot, idx, vals in reversed(self.etas):
			w[row] = (w[row] * (1.0 + pivot) - w[idx] @ vals) / pivot
		return self.lu.solve(w, trans='T')


class RevisedSimplex:
	"""
	Bounded-variable revised simplex on min c'x, Ax (<=,>=,=) b, l <= x <= u.

	Every row gets a slack column (fixed at zero for equalities). A cold start makes a
	slack basic wherever the row already holds at the lower bounds and gives the other
	rows an artificial column for phase 1. A warm start installs an earlier optimal basis,
	extended by the slacks of rows added since, and runs the dual simplex until the basic
	values are back inside their bounds. The basis lives as sparse LU factors plus an eta
	file, refactored every `refactor_every` pivots. Pricing scans column blocks in turn
	with Dantzig's rule until the objective stalls, then uses Bland's rule.
	"""

	def __init__(
		self,
		model: MilpModel,
		bound_changes: Optional[Mapping[int, float]] = None,
		config: Optional[SimplexConfig] = None,
		deadline: Optional[float] = None,
		warm_start: Optional[LpBasis] = None,
	):
		self.config = config or SimplexConfig()
		self.deadline = deadline
		self.warm_start = warm_start
		self.n = model.num_variables
		self.m = model.num_constraints
		n, m = self.n, self.m

		lower = np.array([v.lb for v in model.variables], dtype=np.float64)
		upper = np.array([v.ub for v in model.variables], dtype=np.float64)
		for j, value in (bound_changes or {}).items():
			lower[j] = upper[j] = float(value)
		if np.any(np.isneginf(lower)):
			raise LpError('variables need a finite lower bound')

		rows, cols, data = [], [], []
		b = np.zeros(m)
		slack_sign = np.ones(m)
		slack_upper = np.full(m, math.inf)
		for i, constraint in enumerate(model.constraints):
			for j, a in constraint.coeffs.items():
				rows.append(i)
				cols.append(j)
				data.append(a)
			b[i] = constraint.rhs
			if constraint.sense == Sense.GE:
				slack_sign[i] = -1.0
			elif constraint.sense == Sense.EQ:
				slack_upper[i] = 0.0
		self.structural = sp.csc_matrix((data, (rows, cols)), shape=(m, n))
		self.b = b
		self.slack_sign = slack_sign
		self.infeasible_bounds = bool(np.any(lower > upper))

		self.cost = np.zeros(n + m)
		for j, c in model.objective.items():
			self.cost[j] = c
		self.lower = np.concatenate([lower, np.zeros(m)])
		self.upper = np.concatenate([upper, slack_upper])
		slacks = sp.csc_matrix((slack_sign, (np.arange(m), np.arange(m))), shape=(m, m))
		self._set_matrix(sp.hstack([self.structural, slacks], format='csc') if m else self.structural)

		self.art_rows = np.zeros(0, dtype=np.int64)
		self.values = np.zeros(n + m)
		self.status = np.full(n + m, _AT_LOWER, dtype=np.int8)
		self.basis = np.zeros(m, dtype=np.int64)
		self.movable = self.upper - self.lower > 0
		self.factor: Optional[BasisFactor] = None
		self.iterations = 0
		self.max_iterations = self.config.max_iterations or max(20000, 50 * (n + 3 * m))

	def solve(self) -> LpSolution:
		n = self.n
		if self.infeasible_bounds:
			return LpSolution(LpStatus.INFEASIBLE, np.zeros(n), math.inf, 0)

		outcome = None
		if self.warm_start is not None:
			outcome = self._solve_warm(self.warm_start)
		if outcome is None:
			outcome = self._solve_cold()
		if outcome == LpStatus.INFEASIBLE:
			return LpSolution(LpStatus.INFEASIBLE, np.zeros(n), math.inf, self.iterations)
		if outcome == LpStatus.UNBOUNDED:
			return LpSolution(LpStatus.UNBOUNDED, self.values[:n].copy(), -math.inf, self.iterations)

		self._refactor()
		x = np.clip(self.values[:n], self.lower[:n], self.upper[:n])
		objective = float(self.cost[:n] @ x)
		return LpSolution(LpStatus.OPTIMAL, x, objective, self.iterations, self._export_basis())

	# region - starts
	def _solve_cold(self) -> LpStatus:
		n, m = self.n, self.m
		tol = self.config.feasibility_tol
		values = np.zeros(n + m)
		values[:n] = self.lower[:n]
		residual = self.b - self.structural @ values[:n]
		slack_value = residual * self.slack_sign
		crash = (slack_value >= -tol) & (slack_value <= self.upper[n:] + tol)
		crash_rows = np.flatnonzero(crash)
		art_rows = np.flatnonzero(~crash)
		k = art_rows.size
		self.art_rows = art_rows
		values[n + crash_rows] = slack_value[crash_rows]
		if k:
			art_sign = np.where(residual[art_rows] >= 0, 1.0, -1.0)
			artificial = sp.csc_matrix((art_sign, (art_rows, np.arange(k))), shape=(m, k))
			self._set_matrix(sp.hstack([self.A[:, : n + m], artificial], format='csc'))
			self.cost = np.concatenate([self.cost[: n + m], np.zeros(k)])
			self.lower = np.concatenate([self.lower[: n + m], np.zeros(k)])
			self.upper = np.concatenate([self.upper[: n + m], np.full(k, math.inf)])
			values = np.concatenate([values, np.abs(residual[art_rows])])

		basis = np.empty(m, dtype=np.int64)
		basis[crash_rows] = n + crash_rows
		basis[art_rows] = n + m + np.arange(k)
		status = np.full(n + m + k, _AT_LOWER, dtype=np.int8)
		status[basis] = _BASIC
		self.values, self.status, self.basis = values, status, basis
		self._refactor()

		if k:
			phase1_cost = np.zeros(n + m + k)
			phase1_cost[n + m :] = 1.0
			outcome = self._iterate(phase1_cost)
			infeasibility = float(phase1_cost @ self.values)
			threshold = 1e-7 * max(1.0, float(np.max(np.abs(self.b), initial=0.0)))
			if outcome != LpStatus.OPTIMAL or infeasibility > threshold:
				logger.debug(f'phase 1 ended with infeasibility {infeasibility:.3e}')
				return LpStatus.INFEASIBLE
			# artificials are pinned at zero from here on
			self.upper[n + m :] = 0.0
		return self._iterate(self.cost)

	def _solve_warm(self, basis: LpBasis) -> Optional[LpStatus]:
		"""Dual simplex from `basis`; None sends the solve to a cold start."""
		n, m = self.n, self.m
		old_rows = basis.num_rows
		if basis.num_variables != n or old_rows > m or basis.at_upper.size != n + old_rows:
			logger.debug('warm basis does not match the model, starting cold')
			return None
		status = np.full(n + m, _AT_LOWER, dtype=np.int8)
		status[: n + old_rows][basis.at_upper] = _AT_UPPER
		status[~np.isfinite(self.upper)] = _AT_LOWER
		self.basis = np.concatenate([basis.basic, n + np.arange(old_rows, m)]).astype(np.int64)
		status[self.basis] = _BASIC
		self.status = status
		self.values = np.where(status == _AT_UPPER, self.upper, self.lower)
		try:
			self._refactor()
			if self._dual_infeasible(self._reduced_costs(self.cost)):
				if self._primal_infeasibility() <= self.config.feasibility_tol:
					return self._iterate(self.cost)
				logger.debug('warm basis is not dual feasible, starting cold')
				return None
			outcome = self._dual_iterate()
		except NumericalFailureError as e:
			logger.debug(f'warm start failed ({e}), starting cold')
			return None
		if outcome != LpStatus.OPTIMAL:
			return outcome
		return self._iterate(self.cost)

	def _export_basis(self) -> LpBasis:
		n, m = self.n, self.m
		basic = self.basis.copy()
		# a basic artificial spans the same column as its row's slack
		artificial = basic >= n + m
		basic[artificial] = n + self.art_rows[basic[artificial] - n - m]
		return LpBasis(basic=basic, at_upper=self.status[: n + m] == _AT_UPPER, num_variables=n)

	# endregion

	# region - linear algebra
	def _set_matrix(self, matrix: sp.csc_matrix) -> None:
		self.A = matrix
		columns = matrix.shape[1]
		transposed = matrix.T.tocsr()
		size = max(self.config.pricing_block, -(-columns // 8), 1)
		self.A_T = transposed
		self.blocks = [
			(lo, min(lo + size, columns), transposed[lo : lo + size]) for lo in range(0, columns, size)
		]
		self.next_block = 0

	def _dense_column(self, j: int) -> np.ndarray:
		column = np.zeros(self.m)
		start, end = self.A.indptr[j], self.A.indptr[j + 1]
		column[self.A.indices[start:end]] = self.A.data[start:end]
		return column

	def _refactor(self) -> None:
		if self.m == 0:
			return
		self.factor = BasisFactor(self.A[:, self.basis].tocsc())
		nonbasic = self.values.copy()
		nonbasic[self.basis] = 0.0
		self.values[self.basis] = self.factor.ftran(self.b - self.A @ nonbasic)

	def _replace(self, row: int, entering: int, alpha: np.ndarray) -> None:
		self.basis[row] = entering
		self.status[entering] = _BASIC
		self.factor.update(row, alpha)
		if len(self.factor) >= self.config.refactor_every:
			self._refactor()

	def _reduced_costs(self, cost: np.ndarray) -> np.ndarray:
		if self.m == 0:
			return cost.copy()
		return cost - self.A_T @ self.factor.btran(cost[self.basis])

	def _dual_infeasible(self, reduced: np.ndarray, tol: float = 1e-7) -> bool:
		movable = self.upper - self.lower > 0
		wrong = ((self.status == _AT_LOWER) & (reduced < -tol)) | (
			(self.status == _AT_UPPER) & (reduced > tol)
		)
		return bool(np.any(movable & wrong))

	def _primal_infeasibility(self) -> float:
		x = self.values[self.basis]
		gaps = np.maximum(self.lower[self.basis] - x, x - self.upper[self.basis])
		return float(np.max(gaps, initial=0.0))

	# endregion

	# region - pivoting
	def _check_limits(self) -> None:
		if self.iterations >= self.max_iterations:
			raise NumericalFailureError(f'no convergence after {self.iterations} iterations')
		if self.deadline is not None and self.iterations % 25 == 0:
			if time.monotonic() > self.deadline:
				raise LpTimeoutError('LP deadline reached')

	def _price(self, cost: np.ndarray, y: np.ndarray, bland: bool) -> int:
		"""Entering column, or -1 at optimality. Bland's rule scans every block."""
		tol = self.config.optimality_tol
		count = len(self.blocks)
		start = 0 if bland else self.next_block
		for step in range(count):
			b = (start + step) % count
			lo, hi, block = self.blocks[b]
			reduced = cost[lo:hi] - block @ y if self.m else cost[lo:hi]
			status = self.status[lo:hi]
			eligible = self.movable[lo:hi] & (
				((status == _AT_LOWER) & (reduced < -tol)) | ((status == _AT_UPPER) & (reduced > tol))
			)
			hits = np.flatnonzero(eligible)
			if hits.size == 0:
				continue
			if bland:
				return lo + int(hits[0])
			self.next_block = (b + 1) % count
			return lo + int(hits[np.argmax(np.abs(reduced[hits]))])
		return -1

	def _iterate(self, cost: np.ndarray) -> LpStatus:
		cfg = self.config
		m = self.m
		stall_limit = cfg.bland_factor * (self.n + m)
		stall = 0
		best = math.inf
		bland = False
		self.movable = self.upper - self.lower > 0

		while True:
			self._check_limits()
			y = self.factor.btran(cost[self.basis]) if m else np.zeros(0)
			j = self._price(cost, y, bland)
			if j < 0:
				return LpStatus.OPTIMAL
			direction = 1.0 if self.status[j] == _AT_LOWER else -1.0

			alpha = self.factor.ftran(self._dense_column(j)) if m else np.zeros(0)
			delta = direction * alpha
			x_basic = self.values[self.basis]
			ratios = np.full(m, math.inf)
			lower_b = self.lower[self.basis]
			upper_b = self.upper[self.basis]
			dec = delta > cfg.pivot_tol
			inc = (delta < -cfg.pivot_tol) & np.isfinite(upper_b)
			ratios[dec] = (x_basic[dec] - lower_b[dec]) / delta[dec]
			ratios[inc] = (upper_b[inc] - x_basic[inc]) / (-delta[inc])
			np.maximum(ratios, 0.0, out=ratios)

			flip = self.upper[j] - self.lower[j]
			leave_row = -1
			step = math.inf
			if m and np.isfinite(ratios).any():
				step = float(ratios.min())
				ties = np.flatnonzero(ratios <= step + cfg.feasibility_tol)
				if bland:
					leave_row = int(ties[np.argmin(self.basis[ties])])
				else:
					leave_row = int(ties[np.argmax(np.abs(delta[ties]))])
				step = float(ratios[leave_row])

			if not math.isfinite(min(step, flip)):
				return LpStatus.UNBOUNDED

			if flip <= step:
				self.values[self.basis] = x_basic - flip * delta
				if direction > 0:
					self.values[j] = self.upper[j]
					self.status[j] = _AT_UPPER
				else:
					self.values[j] = self.lower[j]
					self.status[j] = _AT_LOWER
			else:
				pivot = alpha[leave_row]
				if abs(pivot) < cfg.pivot_tol:
					raise NumericalFailureError(f'pivot element {pivot:.3e} too small')
				self.values[self.basis] = x_basic - step * delta
				self.values[j] += direction * step
				leaving = int(self.basis[leave_row])
				if delta[leave_row] > 0:
					self.values[leaving] = self.lower[leaving]
					self.status[leaving] = _AT_LOWER
				else:
					self.values[leaving] = self.upper[leaving]
					self.status[leaving] = _AT_UPPER
				self._replace(leave_row, j, alpha)

			self.iterations += 1
			objective = float(cost @ self.values)
			if objective < best - 1e-12 * (1.0 + abs(best) if math.isfinite(best) else 1.0):
				best = objective
				stall = 0
			else:
				stall += 1
				if not bland and stall > stall_limit:
					logger.debug(f'no progress for {stall} iterations, switching to Bland pricing')
					bland = True

	def _dual_iterate(self) -> LpStatus:
		"""
		Dual simplex: the most infeasible basic leaves at its violated bound and the
		entering column keeps every reduced cost on the right side of zero. Returns
		INFEASIBLE when no column can move the leaving value back.
		"""
		cfg = self.config
		m = self.m
		if m == 0:
			return LpStatus.OPTIMAL
		unit = np.zeros(m)
		while True:
			self._check_limits()
			x_basic = self.values[self.basis]
			lower_b = self.lower[self.basis]
			upper_b = self.upper[self.basis]
			below = lower_b - x_basic
			above = x_basic - upper_b
			violation = np.maximum(below, above)
			r = int(np.argmax(violation))
			if violation[r] <= cfg.feasibility_tol:
				return LpStatus.OPTIMAL
			to_lower = bool(below[r] > 0)

			unit[r] = 1.0
			pivot_row = self.A_T @ self.factor.btran(unit)
			unit[r] = 0.0
			reduced = self._reduced_costs(self.cost)
			nonbasic = (self.status != _BASIC) & (self.upper - self.lower > 0)
			at_lower = nonbasic & (self.status == _AT_LOWER)
			at_upper = nonbasic & (self.status == _AT_UPPER)
			if to_lower:
				eligible = (at_lower & (pivot_row < -1e-9)) | (at_upper & (pivot_row > 1e-9))
			else:
				eligible = (at_lower & (pivot_row > 1e-9)) | (at_upper & (pivot_row < -1e-9))
			candidates = np.flatnonzero(eligible)
			if candidates.size == 0:
				return LpStatus.INFEASIBLE
			ratios = np.abs(reduced[candidates]) / np.abs(pivot_row[candidates])
			ties = candidates[ratios <= ratios.min() + cfg.optimality_tol]
			q = int(ties[np.argmax(np.abs(pivot_row[ties]))])

			alpha = self.factor.ftran(self._dense_column(q))
			if abs(alpha[r]) < cfg.pivot_tol:
				raise NumericalFailureError(f'dual pivot element {alpha[r]:.3e} too small')
			target = lower_b[r] if to_lower else upper_b[r]
			step = (x_basic[r] - target) / alpha[r]
			self.values[self.basis] = x_basic - step * alpha
			self.values[q] += step
			leaving = int(self.basis[r])
			self.values[leaving] = target
			self.status[leaving] = _AT_LOWER if to_lower else _AT_UPPER
			self._replace(r, q, alpha)
			self.iterations += 1

	# endregion


def max_violation(model: MilpModel, values: np.ndarray) -> float:
	"""Largest bound or row residual of `values`; zero for a feasible point."""
	worst = 0.0
	for j, var in enumerate(model.variables):
		worst = max(worst, var.lb - values[j], values[j] - var.ub)
	for constraint in model.constraints:
		lhs = sum(a * values[j] for j, a in constraint.coeffs.items())
		if constraint.sense == Sense.LE:
			worst = max(worst, lhs - constraint.rhs)
		elif constraint.sense == Sense.GE:
			worst = max(worst, constraint.rhs - lhs)
		else:
			worst = max(worst, abs(lhs - constraint.rhs))
	return worst


# region - LP text format
_TERMS_PER_LINE = 8


def _format_terms(coeffs: Mapping[int, float], variables: list[Variable]) -> list[str]:
	if not coeffs:
		return [f'0 {variables[0].name}'] if variables else []
	terms = []
	for j in sorted(coeffs):
		a = coeffs[j]
		sign = '-' if a < 0 else '+'
		terms.append(f'{sign} {abs(a)!r} {variables[j].name}')
	return [
		' '.join(terms[i : i + _TERMS_PER_LINE]) for i in range(0, len(terms), _TERMS_PER_LINE)
	]


def export_lp(model: MilpModel, path: str | Path) -> None:
	"""Write `model` in the LP text format (objective, rows, bounds, binaries)."""
	lines = [f'\\ model {model.name}', 'Minimize']
	objective = _format_terms(model.objective, model.variables)
	lines.append(' obj: ' + (objective[0] if objective else ''))
	lines.extend('   ' + chunk for chunk in objective[1:])
	lines.append('Subject To')
	for i, constraint in enumerate(model.constraints):
		chunks = _format_terms(constraint.coeffs, model.variables)
		if not chunks:
			continue
		name = constraint.name or f'c{i}'
		sense = constraint.sense.value
		chunks[-1] = f'{chunks[-1]} {sense} {constraint.rhs!r}'
		lines.append(f' {name}: {chunks[0]}')
		lines.extend('   ' + chunk for chunk in chunks[1:])
	lines.append('Bounds')
	for var in model.variables:
		if var.ub == math.inf:
			lines.append(f' {var.name} >= {var.lb!r}')
		else:
			lines.append(f' {var.lb!r} <= {var.name} <= {var.ub!r}')
	binaries = [var.name for var in model.variables if var.vtype == VarType.BINARY]
	if binaries:
		lines.append('Binaries')
		lines.extend(f' {name}' for name in binaries)
	lines.append('End')
	Path(path).parent.mkdir(parents=True, exist_ok=True)
	with open(path, 'w', encoding='utf-8') as f:
		f.write('\n'.join(lines) + '\n')


def _parse_terms(tokens: list[str], index: dict[str, int]) -> dict[int, float]:
	coeffs: dict[int, float] = {}
	sign = 1.0
	coefficient: Optional[float] = None
	for token in tokens:
		if token in ('+', '-'):
			sign = -1.0 if token == '-' else 1.0
			continue
		try:
			coefficient = float(token)
			continue
		except ValueError:
			pass
		value = sign * (1.0 if coefficient is None else coefficient)
		coeffs[index[token]] = coeffs.get(index[token], 0.0) + value
		sign, coefficient = 1.0, None
	return coeffs


def read_lp(path: str | Path) -> MilpModel:
	"""Read a file written by `export_lp`."""
	sections: dict[str, list[str]] = {}
	current = None
	keywords = {'minimize': 'objective', 'subject to': 'rows', 'bounds': 'bounds', 'binaries': 'binaries'}
	with open(path, 'r', encoding='utf-8') as f:
		for raw in f:
			line = raw.strip()
			if not line or line.startswith('\\'):
				continue
			lowered = line.lower()
			if lowered in keywords:
				current = keywords[lowered]
				sections[current] = []
				continue
			if lowered == 'end':
				break
			if current is None:
				raise LpError(f'unexpected line before any section: {line!r}')
			if ':' in line or current in ('bounds', 'binaries') or not sections[current]:
				sections[current].append(line)
			else:
				sections[current][-1] += ' ' + line

	model = MilpModel(name=Path(path).stem)
	index: dict[str, int] = {}
	for line in sections.get('bounds', []):
		tokens = line.split()
		if len(tokens) == 3:
			name, lb, ub = tokens[0], float(tokens[2]), math.inf
		else:
			name, lb, ub = tokens[2], float(tokens[0]), float(tokens[4])
		index[name] = model.add_variable(name, lb, ub)
	for name in sections.get('binaries', []):
		model.variables[index[name]].vtype = VarType.BINARY

	for line in sections.get('objective', []):
		model.set_objective(_parse_terms(line.split(':', 1)[1].split(), index))
	for line in sections.get('rows', []):
		name, body = line.split(':', 1)
		tokens = body.split()
		pos = next(i for i, t in enumerate(tokens) if t in ('<=', '>=', '='))
		model.add_constraint(
			_parse_terms(tokens[:pos], index), Sense(tokens[pos]), float(tokens[pos + 1]), name=name.strip()
		)
	return model


# endregion
