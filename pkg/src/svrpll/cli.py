"""Command-line entry point: ``svrpll gen|solve|sim|batch``.

Exit codes: 0 success or optimal, 2 limit hit, 3 infeasible, 64 usage, 74 IO.
Set SVRPLL_LOG (DEBUG, INFO, ...) for solver progress on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from svrpll.bnc import BRANCHING_RULES, SolveParams, SolveStatus, solve
from svrpll.instance import Instance, InstanceError, compute_cover_sets, compute_edge_costs, \
    generate_instance, validate_instance
from svrpll.model import ModelError, Solution, build_model, check_feasible
from svrpll.sim import SimConfig, run_scenario, trace_summary
from svrpll.svg import errors_svg, trajectory_svg

EXIT_OK = 0
EXIT_LIMIT = 2
EXIT_INFEASIBLE = 3
EXIT_USAGE = 64
EXIT_IO = 74

STATUS_EXIT = {SolveStatus.OPTIMAL: EXIT_OK, SolveStatus.LIMIT: EXIT_LIMIT, SolveStatus.INFEASIBLE: EXIT_INFEASIBLE}

log = logging.getLogger("svrpll")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


# -- gen -----------------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.targets < 2:
        raise UsageError("--targets must be at least 2")
    if args.grid <= 0 or args.range <= 0 or args.site_factor < 0:
        raise UsageError("--grid and --range must be positive, --site-factor nonnegative")
    inst = generate_instance(args.targets, args.seed, args.grid, args.site_factor, args.range)
    if args.cost is not None:
        if args.cost < 0:
            raise UsageError("--cost must be nonnegative")
        inst.landmark_cost = [float(args.cost)] * inst.n_sites
    if args.cost_file is not None:
        costs = _read_json(args.cost_file)
        if not isinstance(costs, list) or len(costs) != inst.n_sites:
            raise UsageError(f"--cost-file must hold a list of {inst.n_sites} numbers")
        inst.landmark_cost = [float(c) for c in costs]
    inst.check()
    inst.save(args.out)
    report = validate_instance(inst, compute_cover_sets(inst))
    print(f"wrote {args.out}: {inst.n_targets} targets, {inst.n_sites} sites, range {inst.sensing_range:g}")
    for line in report.lines():
        print(line)
    return EXIT_OK


# -- solve ---------------------------------------------------------------------

def _solve_params(args) -> SolveParams:
    if args.time_limit is not None and args.time_limit <= 0:
        raise UsageError("--time-limit must be positive")
    if args.node_limit is not None and args.node_limit <= 0:
        raise UsageError("--node-limit must be positive")
    if args.lm_weight < 0:
        raise UsageError("--lm-weight must be nonnegative")
    return SolveParams(time_limit=math.inf if args.time_limit is None else args.time_limit,
                       node_limit=args.node_limit, lm_weight=args.lm_weight, branching=args.branching)


def cmd_solve(args) -> int:
    params = _solve_params(args)
    inst = Instance.load(args.instance)
    res = solve(inst, params)
    st = res.stats
    print(f"status {st.status.value}  nodes {st.nodes}  sec_rows {st.sec_rows}  "
          f"time {st.wall_time:.3f}s  root_bound {st.root_bound:.6f}")
    if res.solution is not None:
        data = res.solution.to_dict()
        data["lm_weight"] = params.lm_weight
        data["status"] = st.status.value
        data["stats"] = st.to_dict()
        _write_json(args.out, data)
        print(f"objective {res.solution.objective:.6f}  landmarks {len(res.solution.placed_sites)}  "
              f"order {' '.join(map(str, res.solution.visit_order))}")
    else:
        _write_json(args.out, {"status": st.status.value, "stats": st.to_dict()})
        print("no solution found")
    return STATUS_EXIT[st.status]


# -- sim -----------------------------------------------------------------------

def _load_solution(path):
    data = _read_json(path)
    if "edges" not in data:
        raise UsageError(f"{path} holds no solution (status {data.get('status', 'unknown')})")
    return Solution.from_dict(data), float(data.get("lm_weight", 1.0))


def cmd_sim(args) -> int:
    inst = Instance.load(args.instance)
    sol, lm_weight = _load_solution(args.solution)
    cov = compute_cover_sets(inst)
    verdict = check_feasible(build_model(inst, cov, compute_edge_costs(inst), lm_weight), sol, cov)
    if not verdict.feasible:
        print("refusing to simulate: the solution is not feasible for this instance", file=sys.stderr)
        for v in verdict.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if args.steps <= 0 or args.dt <= 0 or args.min_dist <= 0 or args.sigma_bearing < 0 or args.q < 0:
        raise UsageError("--steps, --dt and --min-dist must be positive; noise levels nonnegative")
    cfg = SimConfig(dt=args.dt, n_steps=args.steps, controller_gain=args.gain, min_wp_distance=args.min_dist,
                    sensing_range=args.range, process_noise=np.diag([args.q ** 2, args.q ** 2]),
                    bearing_noise_std=math.radians(args.sigma_bearing), rng_seed=args.seed)
    trace = run_scenario(sol, inst, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace.write_csv(out / "trace.csv")
    summary = trace_summary(trace)
    summary.update({"gain": args.gain, "min_dist": args.min_dist, "sensing_range": cfg.sensing_range or
                    inst.sensing_range, "dt": args.dt, "seed": args.seed})
    _write_json(out / "summary.json", summary)
    (out / "trajectory.svg").write_text(trajectory_svg(trace, args.ellipse_every), encoding="utf-8")
    (out / "errors.svg").write_text(errors_svg(trace), encoding="utf-8")
    print(f"steps {summary['steps']}  route_completed {summary['route_completed']}  "
          f"rmse_position {summary['rmse_position']:.4f}  two_visible {summary['two_visible_fraction']:.3f}  "
          f"containment {summary['containment_x']:.3f}/{summary['containment_y']:.3f}/"
          f"{summary['containment_psi']:.3f}")
    return EXIT_OK


# -- batch ---------------------------------------------------------------------

@dataclass
class BucketStats:
    n_targets: int
    instances: int = 0
    completed: int = 0
    infeasible: int = 0
    failed: int = 0
    mean_sec_rows: float = math.nan
    mean_landmarks: float = math.nan
    mean_wall_time: float = math.nan
    median_wall_time: float = math.nan
    mean_objective: float = math.nan


@dataclass
class BatchReport:
    buckets: List[BucketStats] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"buckets": [vars(b) for b in self.buckets]}

    def table(self) -> str:
        head = f"{'|V|':>4} {'n':>3} {'done':>4} {'infeas':>6} {'fail':>4} {'SECs':>7} {'LMs':>6} " \
               f"{'time s':>8} {'median s':>8} {'objective':>10}"
        lines = [head]
        for b in self.buckets:
            lines.append(f"{b.n_targets:>4} {b.instances:>3} {b.completed:>4} {b.infeasible:>6} {b.failed:>4} "
                         f"{b.mean_sec_rows:>7.2f} {b.mean_landmarks:>6.2f} {b.mean_wall_time:>8.3f} "
                         f"{b.median_wall_time:>8.3f} {b.mean_objective:>10.3f}")
        return "\n".join(lines)


def batch_seed(seed_base: int, n_targets: int, i: int) -> int:
    return seed_base + 1000 * n_targets + i


def run_batch_instance(n_targets: int, seed: int, params: SolveParams) -> dict:
    """Generate, solve and check one instance.  Never raises; failures are recorded."""
    rec = {"n_targets": n_targets, "seed": seed}
    try:
        inst = generate_instance(n_targets, seed)
        rec["instance"] = inst.to_dict()
        res = solve(inst, params)
        rec["status"] = res.status.value
        rec["stats"] = res.stats.to_dict()
        if res.solution is not None:
            cov = compute_cover_sets(inst)
            verdict = check_feasible(res.model, res.solution, cov)
            rec["solution"] = res.solution.to_dict()
            rec["landmarks"] = len(res.solution.placed_sites)
            rec["violations"] = verdict.violations
            if not verdict.feasible:
                rec["status"] = "failed"
                rec["error"] = "solution failed the feasibility check"
    except Exception as exc:  # a single bad instance must not stop the batch
        rec["status"] = "failed"
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def aggregate(records: Sequence[dict]) -> BatchReport:
    """Bucket means over completed (optimal, feasibility-checked) instances only."""
    sizes = sorted({r["n_targets"] for r in records})
    report = BatchReport()
    for n in sizes:
        rs = [r for r in records if r["n_targets"] == n]
        done = [r for r in rs if r["status"] == SolveStatus.OPTIMAL.value]
        b = BucketStats(n, instances=len(rs), completed=len(done),
                        infeasible=sum(r["status"] == SolveStatus.INFEASIBLE.value for r in rs),
                        failed=sum(r["status"] == "failed" for r in rs))
        if done:
            b.mean_sec_rows = statistics.fmean(r["stats"]["sec_rows"] for r in done)
            b.mean_landmarks = statistics.fmean(r["landmarks"] for r in done)
            b.mean_wall_time = statistics.fmean(r["stats"]["wall_time"] for r in done)
            b.median_wall_time = statistics.median(r["stats"]["wall_time"] for r in done)
            b.mean_objective = statistics.fmean(r["solution"]["objective"] for r in done)
        report.buckets.append(b)
    return report


def _parse_sizes(text: str) -> List[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--sizes must be a comma-separated list of integers, got {text!r}")
    if not sizes or min(sizes) < 2:
        raise UsageError("--sizes needs at least one size, each at least 2")
    return sizes


def run_batch(sizes: Sequence[int], per_size: int, seed_base: int, params: SolveParams,
              jobs: int = 1) -> List[dict]:
    tasks = [(n, batch_seed(seed_base, n, i)) for n in sizes for i in range(per_size)]
    if jobs <= 1:
        return [run_batch_instance(n, s, params) for n, s in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_batch_instance, n, s, params) for n, s in tasks]
        return [f.result() for f in futures]


def cmd_batch(args) -> int:
    sizes = _parse_sizes(args.sizes)
    if args.per_size < 1 or args.jobs < 1:
        raise UsageError("--per-size and --jobs must be at least 1")
    params = _solve_params(args)
    records = run_batch(sizes, args.per_size, args.seed_base, params, args.jobs)
    out = Path(args.out_dir)
    (out / "instances").mkdir(parents=True, exist_ok=True)
    for r in records:
        _write_json(out / "instances" / f"n{r['n_targets']}_s{r['seed']}.json", r)
    report = aggregate(records)
    _write_json(out / "report.json", report.to_dict())
    table = report.table()
    (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    for r in records:
        if r["status"] == "failed":
            print(f"failed: n={r['n_targets']} seed={r['seed']}: {r.get('error')}", file=sys.stderr)
    return EXIT_OK


# -- wiring --------------------------------------------------------------------

def _add_solve_flags(p) -> None:
    p.add_argument("--time-limit", type=float, default=None, help="seconds per instance")
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--lm-weight", type=float, default=1.0, help="multiplier on landmark costs")
    p.add_argument("--branching", choices=BRANCHING_RULES, default="edges_first")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="svrpll", description="Tour and landmark planning with closed-loop checks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a random instance")
    g.add_argument("--targets", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--grid", type=float, default=100.0)
    g.add_argument("--site-factor", type=int, default=5)
    g.add_argument("--range", type=float, default=35.0)
    costs = g.add_mutually_exclusive_group()
    costs.add_argument("--cost", type=float, default=None, help="uniform landmark cost")
    costs.add_argument("--cost-file", default=None, help="JSON list with one cost per site")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve an instance to optimality")
    s.add_argument("--instance", required=True)
    s.add_argument("--out", required=True)
    _add_solve_flags(s)
    s.set_defaults(func=cmd_solve)

    m = sub.add_parser("sim", help="simulate a solution in closed loop")
    m.add_argument("--instance", required=True)
    m.add_argument("--solution", required=True)
    m.add_argument("--gain", type=float, default=2.0)
    m.add_argument("--min-dist", type=float, default=1.0)
    m.add_argument("--range", type=float, default=None, help="sensing range (default: instance range)")
    m.add_argument("--steps", type=int, default=3000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--dt", type=float, default=SimConfig.dt)
    m.add_argument("--sigma-bearing", type=float, default=0.5, help="degrees")
    m.add_argument("--q", type=float, default=0.01, help="std of speed and turn-rate noise")
    m.add_argument("--ellipse-every", type=int, default=200)
    m.add_argument("--out-dir", required=True)
    m.set_defaults(func=cmd_sim)

    b = sub.add_parser("batch", help="generate, solve and aggregate a batch")
    b.add_argument("--sizes", default="15,20,25,30")
    b.add_argument("--per-size", type=int, default=20)
    b.add_argument("--seed-base", type=int, default=0)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out-dir", required=True)
    _add_solve_flags(b)
    b.set_defaults(func=cmd_batch)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("SVRPLL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"svrpll: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, InstanceError, ModelError) as exc:
        print(f"svrpll: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
