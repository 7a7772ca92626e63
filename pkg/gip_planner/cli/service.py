import argparse
import csv
import json
import logging
import math
from pathlib import Path
from typing import Optional, Sequence

import matplotlib
import matplotlib.pyplot as plt
from dotenv import load_dotenv
from pydantic import ValidationError

from gip_planner.cli.views import ExitCode, GenParams, RunConfig, SolveSummary
from gip_planner.formulation.service import (
	add_mcf,
	add_partial_coverage,
	add_scf,
	as_group_cutset,
	build_baseline,
)
from gip_planner.formulation.views import BadQError, FormulationError
from gip_planner.graph.service import (
	BRUTE_FORCE_MAX_EDGES,
	brute_force_optimum,
	load_instance,
	load_tour_pairs,
	required_groups,
	save_instance,
	save_tour,
	verify_pairs,
)
from gip_planner.graph.views import CoverageThresholdError, TooLargeError
from gip_planner.heuristic.views import HeuristicMode
from gip_planner.search.service import make_heuristic_hook, solve_bnb, solve_bnc
from gip_planner.search.views import (
	LOG_HEADER,
	BoundLogRow,
	InfeasibleModelError,
	SolverConfig,
	SolverReport,
	Termination,
)
from gip_planner.simulator.service import save_geometry, simulate_instance
from gip_planner.simulator.views import SensorModel, SimulatorError

load_dotenv()
matplotlib.use('Agg')

logger = logging.getLogger(__name__)

SVG_HASH_SALT = 'gip-planner'


def _finite(value: float) -> Optional[float]:
	return value if math.isfinite(value) else None


def _summarize(report: SolverReport) -> SolveSummary:
	stats = report.stats
	return SolveSummary(
		flavor=report.flavor,
		termination=report.termination.value if report.termination else 'unknown',
		ub=_finite(report.ub),
		lb=_finite(report.lb),
		gap_pct=_finite(report.gap_percent),
		incumbent_cost=_finite(report.ub) if report.incumbent is not None else None,
		nodes=stats.nodes,
		cuts=stats.cuts,
		lp_solves=stats.lp_solves,
		root_bound=stats.root_bound,
		root_gap_pct=None if stats.root_gap_pct is None else _finite(stats.root_gap_pct),
		wall_s=report.wall_s,
		first_incumbent_s=stats.first_incumbent_s,
	)


def write_report(summary: SolveSummary, path: str | Path) -> None:
	Path(path).parent.mkdir(parents=True, exist_ok=True)
	with open(path, 'w', encoding='utf-8') as f:
		json.dump(summary.model_dump(mode='json'), f, indent=2, sort_keys=True)
		f.write('\n')


# region - gen
def cmd_gen(params: GenParams) -> ExitCode:
	sensor = SensorModel(fov_half_angle=math.radians(params.fov_deg / 2.0), range=params.range)
	try:
		inst, coverage, geometry = simulate_instance(
			seed=params.seed,
			n=params.n,
			k=params.k,
			obstacle_count=params.obstacles,
			sensor=sensor,
			step=params.step,
		)
	except (SimulatorError, ValueError) as e:
		logger.error(f'Generation failed: {e}')
		return ExitCode.USAGE
	save_instance(inst, params.out, coverage)
	save_geometry(geometry, params.geometry_path)
	logger.result(
		f'Wrote {params.out}: {inst.num_vertices} vertices, {inst.num_edges} edges, '
		f'{inst.num_groups} groups ({len(inst.empty_groups())} empty)'
	)
	return ExitCode.OK


# endregion


# region - solve
def cmd_solve(cfg: RunConfig) -> ExitCode:
	try:
		inst, _ = load_instance(cfg.instance)
	except (OSError, ValueError) as e:
		logger.error(f'Cannot read instance {cfg.instance}: {e}')
		return ExitCode.USAGE

	try:
		h = build_baseline(inst)
		if cfg.min_covered is not None:
			add_partial_coverage(h, cfg.min_covered)
		if cfg.formulation == 'scf':
			add_scf(h)
		elif cfg.formulation == 'mcf':
			add_mcf(h)
		else:
			as_group_cutset(h)
	except TooLargeError as e:
		logger.error(f'MCF model exceeds the memory guard: {e}')
		return ExitCode.RESOURCE_GUARD
	except BadQError as e:
		logger.error(f'Invalid --min-covered: {e}')
		return ExitCode.USAGE
	except FormulationError as e:
		logger.error(f'Instance is infeasible: {e}')
		return ExitCode.INFEASIBLE

	heuristic = None if cfg.heuristic == 'off' else make_heuristic_hook(HeuristicMode(cfg.heuristic))
	config = SolverConfig(
		time_limit=cfg.time_limit,
		seed=cfg.seed,
		heuristic=None if heuristic is None else HeuristicMode(cfg.heuristic),
		node_limit=cfg.node_limit,
	)
	log_path = str(cfg.log) if cfg.log else None
	try:
		if cfg.formulation == 'cutset':
			report = solve_bnc(
				h,
				oracle=cfg.effective_oracle,
				sample_size=cfg.effective_sample_size,
				time_limit=cfg.time_limit,
				heuristic=heuristic,
				log_path=log_path,
				rng_seed=cfg.seed,
				config=config,
			)
		else:
			report = solve_bnb(h, cfg.time_limit, heuristic, log_path, config)
	except InfeasibleModelError as e:
		logger.error(f'Instance is infeasible: {e}')
		return ExitCode.INFEASIBLE

	summary = _summarize(report)
	write_report(summary, cfg.report_path)
	logger.info(f'Report written to {cfg.report_path}')
	if cfg.out and report.incumbent is not None:
		save_tour(inst, report.incumbent, cfg.out)

	if report.termination == Termination.INFEASIBLE:
		logger.result('Infeasible: no tour covers the required groups')
		return ExitCode.INFEASIBLE
	if report.incumbent is None:
		logger.warning(f'{report.termination.value} reached without a feasible tour')
	return ExitCode.OK


# endregion


# region - verify / bruteforce
def cmd_verify(instance: Path, tour_path: Path, min_covered: Optional[int] = None) -> ExitCode:
	try:
		inst, _ = load_instance(instance)
		pairs = load_tour_pairs(tour_path)
	except (OSError, ValueError) as e:
		logger.error(f'Cannot read input: {e}')
		return ExitCode.USAGE
	try:
		required_groups(inst, min_covered)
	except CoverageThresholdError as e:
		logger.error(f'Invalid --min-covered: {e}')
		return ExitCode.USAGE
	verdict = verify_pairs(inst, pairs, min_covered=min_covered)
	if not verdict.feasible:
		logger.result(f'Infeasible tour: {verdict.describe()}')
		return ExitCode.VERIFICATION_FAILED
	logger.result(f'Feasible tour, cost {verdict.cost!r}')
	return ExitCode.OK


def cmd_bruteforce(
	instance: Path,
	max_edges: int = BRUTE_FORCE_MAX_EDGES,
	min_covered: Optional[int] = None,
	out: Optional[Path] = None,
) -> ExitCode:
	try:
		inst, _ = load_instance(instance)
	except (OSError, ValueError) as e:
		logger.error(f'Cannot read instance {instance}: {e}')
		return ExitCode.USAGE
	try:
		required_groups(inst, min_covered)
	except CoverageThresholdError as e:
		logger.error(f'Invalid --min-covered: {e}')
		return ExitCode.USAGE
	try:
		result = brute_force_optimum(inst, max_edges=max_edges, min_covered=min_covered)
	except TooLargeError as e:
		logger.error(f'Brute force refused: {e}')
		return ExitCode.RESOURCE_GUARD
	if result.status != 'optimal':
		logger.result('Infeasible: no tour covers the required groups')
		return ExitCode.INFEASIBLE
	if out is not None:
		save_tour(inst, result.tour, out)
	logger.result(f'Optimum {result.cost!r}')
	return ExitCode.OK


# endregion


# region - plot
def read_bound_log(path: str | Path) -> list[BoundLogRow]:
	"""Parse a CSV written by the search engine; raises ValueError when malformed or empty."""
	with open(path, 'r', newline='', encoding='utf-8') as f:
		reader = csv.reader(f)
		header = next(reader, None)
		if header is None or tuple(header) != LOG_HEADER:
			raise ValueError(f'expected header {",".join(LOG_HEADER)}')
		rows = []
		for line_no, fields in enumerate(reader, start=2):
			if not fields:
				continue
			if len(fields) != len(LOG_HEADER):
				raise ValueError(f'line {line_no}: expected {len(LOG_HEADER)} fields')
			rows.append(BoundLogRow.model_validate(dict(zip(LOG_HEADER, fields))))
	if not rows:
		raise ValueError('log has no rows')
	return rows


def render_bounds_chart(rows: Sequence[BoundLogRow], out: str | Path) -> None:
	"""UB and LB against elapsed time, finite points only, with the final gap annotated."""
	with plt.rc_context({'svg.hashsalt': SVG_HASH_SALT, 'svg.fonttype': 'none'}):
		fig, ax = plt.subplots(figsize=(7, 4))
		for attr, label, color in (('ub', 'upper bound', 'tab:red'), ('lb', 'lower bound', 'tab:blue')):
			points = [(r.elapsed_s, getattr(r, attr)) for r in rows if math.isfinite(getattr(r, attr))]
			if points:
				xs, ys = zip(*points)
				ax.plot(xs, ys, marker='o', markersize=3, label=label, color=color)
		final = rows[-1]
		gap = 'no incumbent' if math.isinf(final.gap_pct) else f'gap {final.gap_pct:.2f}%'
		ax.annotate(gap, xy=(0.98, 0.95), xycoords='axes fraction', ha='right', va='top')
		ax.set_xlabel('elapsed [s]')
		ax.set_ylabel('cost')
		ax.legend(loc='lower right')
		ax.grid(True, alpha=0.3)
		Path(out).parent.mkdir(parents=True, exist_ok=True)
		fig.savefig(out, format='svg', metadata={'Date': None})
		plt.close(fig)


def cmd_plot(log_path: Path, out: Path) -> ExitCode:
	try:
		rows = read_bound_log(log_path)
	except (OSError, ValueError) as e:
		logger.error(f'Cannot read bound log {log_path}: {e}')
		return ExitCode.USAGE
	render_bounds_chart(rows, out)
	logger.result(f'Wrote {out} ({len(rows)} log rows)')
	return ExitCode.OK


# endregion


def build_parser() -> argparse.ArgumentParser:
	parser = argparse.ArgumentParser(prog='gip-planner', description='Graph inspection planning solvers')
	sub = parser.add_subparsers(dest='command', required=True)

	gen = sub.add_parser('gen', help='generate a simulated instance')
	gen.add_argument('--n', type=int, required=True, help='roadmap vertices')
	gen.add_argument('--k', type=int, required=True, help='points of interest')
	gen.add_argument('--obstacles', type=int, default=10)
	gen.add_argument('--fov-deg', type=float, default=120.0, help='full field-of-view angle')
	gen.add_argument('--range', type=float, default=25.0, help='sensor range')
	gen.add_argument('--step', type=float, default=None, help='RRG steering step')
	gen.add_argument('--seed', type=int, default=0)
	gen.add_argument('--out', type=Path, required=True)
	gen.add_argument('--geometry', type=Path, default=None, help='sidecar path')

	solve = sub.add_parser('solve', help='solve an instance')
	solve.add_argument('instance', type=Path)
	solve.add_argument('--formulation', default='cutset')
	solve.add_argument('--oracle', default=None)
	solve.add_argument('--sample-size', type=int, default=None)
	solve.add_argument('--time-limit', type=float, default=1000.0)
	solve.add_argument('--heuristic', default='greedy')
	solve.add_argument('--seed', type=int, default=0)
	solve.add_argument('--min-covered', type=int, default=None)
	solve.add_argument('--node-limit', type=int, default=None)
	solve.add_argument('--log', type=Path, default=None, help='anytime CSV log')
	solve.add_argument('--out', type=Path, default=None, help='tour file')
	solve.add_argument(
		'--report',
		type=Path,
		default=None,
		help='report JSON, default <stem>.report.json next to --out, --log or the instance',
	)

	verify = sub.add_parser('verify', help='check a tour file against an instance')
	verify.add_argument('instance', type=Path)
	verify.add_argument('tour', type=Path)
	verify.add_argument('--min-covered', type=int, default=None)

	brute = sub.add_parser('bruteforce', help='exhaustive optimum of a small instance')
	brute.add_argument('instance', type=Path)
	brute.add_argument('--max-edges', type=int, default=BRUTE_FORCE_MAX_EDGES)
	brute.add_argument('--min-covered', type=int, default=None)
	brute.add_argument('--out', type=Path, default=None)

	plot = sub.add_parser('plot', help='chart an anytime CSV log as SVG')
	plot.add_argument('log', type=Path)
	plot.add_argument('--out', type=Path, required=True)
	return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
	parser = build_parser()
	try:
		args = parser.parse_args(argv)
	except SystemExit as e:
		return int(e.code or 0)

	try:
		if args.command == 'gen':
			params = GenParams(
				n=args.n,
				k=args.k,
				obstacles=args.obstacles,
				fov_deg=args.fov_deg,
				range=args.range,
				step=args.step,
				seed=args.seed,
				out=args.out,
				geometry=args.geometry,
			)
			return int(cmd_gen(params))
		if args.command == 'solve':
			cfg = RunConfig(
				instance=args.instance,
				formulation=args.formulation,
				oracle=args.oracle,
				sample_size=args.sample_size,
				time_limit=args.time_limit,
				heuristic=args.heuristic,
				seed=args.seed,
				min_covered=args.min_covered,
				node_limit=args.node_limit,
				log=args.log,
				out=args.out,
				report=args.report,
			)
			return int(cmd_solve(cfg))
	except ValidationError as e:
		logger.error(f'Invalid arguments: {e}')
		return int(ExitCode.USAGE)

	if args.command == 'verify':
		return int(cmd_verify(args.instance, args.tour, args.min_covered))
	if args.command == 'bruteforce':
		return int(cmd_bruteforce(args.instance, args.max_edges, args.min_covered, args.out))
	return int(cmd_plot(args.log, args.out))
