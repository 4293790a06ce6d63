"""Command-line runner for the co-design experiments.

Exit status: 0 on success, 1 on invalid input, 2 when any solve fails.
Partial sweep results are written even when some solves fail, and every
run leaves a ``manifest.json`` describing what was done.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from .conic import SolverConfig
from .grid.analysis import battery_schedule, physics_report
from .grid.build import CODESIGN, FIXED
from .grid.case import CaseError, demand_scale, parse_case, shipped_case_path
from .mib_search import BnBConfig
from .pareto import (SolveFailure, SweepConfig, WeightVector, gradient_sweep,
                     grid_weights, nondominated_filter, solve_task)
from .report import Pane, PlotSpec, Series, Table, emit_csv, emit_svg

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_SOLVE = 0, 1, 2
COMMANDS = ("solve", "size-sweep", "demand-sweep", "pareto-grid", "pareto-grad", "schedule")
DEFAULT_SIZES = tuple(float(s) for s in range(20, 121, 10))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for solve failures here
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunSpec:
    command: str
    case_path: Path
    out: Path
    weights: tuple = (1.0, 0.0)
    sizes: tuple | None = None
    K: int = 10
    M: int = 11
    step: float = 0.05
    w0: tuple = (0.5, 0.5)
    scale_from: float = 0.98
    scale_to: float = 1.04
    scale_step: float = 0.01
    tol: float = 1e-6
    max_iter: int = 100_000
    solver: str = "interior"
    svg: bool = True
    jobs: int = 1
    argv: list = field(default_factory=list)

    def solver_config(self) -> SolverConfig:
        return SolverConfig.with_tol(self.tol, max_iter=self.max_iter, method=self.solver)

    def bnb(self) -> BnBConfig:
        return BnBConfig(solver=self.solver_config())

    def scales(self) -> list:
        n = int(round((self.scale_to - self.scale_from) / self.scale_step)) + 1
        return [round(self.scale_from + k * self.scale_step, 12) for k in range(n)]


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="owf-codesign", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--case", default=None, help="case file (default: shipped 9-bus case)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--weights", default="1,0", help="objective weights w1,w2 (cost, loss)")
    p.add_argument("--sizes", default=None,
                   help="solve/schedule: one fixed size per battery (MWh); "
                        "sweeps: the list of sizes applied to every battery")
    p.add_argument("--K", type=int, default=10, help="gradient sweep iterations")
    p.add_argument("--M", type=int, default=11, help="grid sweep points")
    p.add_argument("--step", type=float, default=0.05, help="weight step size")
    p.add_argument("--w0", default="0.5,0.5", help="initial weights of the gradient sweep")
    p.add_argument("--scale-from", type=float, default=0.98)
    p.add_argument("--scale-to", type=float, default=1.04)
    p.add_argument("--scale-step", type=float, default=0.01)
    p.add_argument("--tol", type=float, default=1e-6, help="solver tolerance")
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--solver", choices=("interior", "admm"), default="interior")
    p.add_argument("--no-svg", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_args(argv) -> RunSpec:
    ns = build_parser().parse_args(argv)
    case_path = Path(ns.case) if ns.case else shipped_case_path()
    if not case_path.is_file():
        raise UsageError(f"case file {case_path} does not exist")
    spec = RunSpec(
        command=ns.command, case_path=case_path, out=Path(ns.out),
        weights=_floats(ns.weights), sizes=_floats(ns.sizes) if ns.sizes else None,
        K=ns.K, M=ns.M, step=ns.step, w0=_floats(ns.w0),
        scale_from=ns.scale_from, scale_to=ns.scale_to, scale_step=ns.scale_step,
        tol=ns.tol, max_iter=ns.max_iter, solver=ns.solver, svg=not ns.no_svg,
        jobs=ns.jobs, argv=list(argv))
    for name in ("weights", "w0"):
        try:
            WeightVector(getattr(spec, name))
        except ValueError as exc:
            raise UsageError(f"--{name}: {exc}") from exc
    if spec.K < 1 or spec.M < 2 or spec.jobs < 1 or spec.step <= 0:
        raise UsageError("need K >= 1, M >= 2, jobs >= 1 and a positive step")
    if spec.tol <= 0 or spec.max_iter < 1:
        raise UsageError("tolerance must be positive and max-iter at least 1")
    if spec.scale_step <= 0 or spec.scale_to < spec.scale_from or spec.scale_from <= 0:
        raise UsageError("invalid demand scale range")
    return spec


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


class Run:
    """Collects outputs and failures, then writes the manifest."""

    def __init__(self, spec: RunSpec, case):
        self.spec = spec
        self.case = case
        self.outputs = []
        self.failures = []
        self.notes = {}
        self.started = time.time()
        spec.out.mkdir(parents=True, exist_ok=True)

    def csv(self, table, name):
        self.outputs.append(str(emit_csv(table, self.spec.out / name)))

    def svg(self, plot, name):
        if self.spec.svg:
            self.outputs.append(str(emit_svg(plot, self.spec.out / name)))

    def json(self, obj, name):
        path = self.spec.out / name
        path.write_text(json.dumps(obj, indent=2, default=_jsonable) + "\n")
        self.outputs.append(str(path))

    def fail(self, label, weights, status):
        self.failures.append({"task": label, "weights": list(weights), "status": status})

    def manifest(self) -> int:
        spec = self.spec
        code = EXIT_SOLVE if self.failures else EXIT_OK
        settings = {k: v for k, v in asdict(spec).items() if k != "argv"}
        data = {
            "command": spec.command,
            "argv": spec.argv,
            "status": "failed" if self.failures else "ok",
            "exit_code": code,
            "settings": settings,
            "case": {"path": str(spec.case_path), "name": self.case.name,
                     "sha256": hashlib.sha256(spec.case_path.read_bytes()).hexdigest()},
            "solver": asdict(spec.solver_config()),
            "bnb": {k: v for k, v in asdict(spec.bnb()).items() if k != "solver"},
            "build": {"version": _version(), "git": _git_describe(),
                      "python": platform.python_version(), "numpy": np.__version__},
            "started": self.started,
            "elapsed_s": time.time() - self.started,
            "failures": self.failures,
            "outputs": self.outputs,
            "notes": self.notes,
        }
        (spec.out / "manifest.json").write_text(
            json.dumps(data, indent=2, default=_jsonable) + "\n")
        return code


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def _solve_many(tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(solve_task, tasks))
    return [solve_task(t) for t in tasks]


def _size_columns(case):
    return [f"size_{bt.id}_mwh" for bt in case.batteries]


def _sweep_sizes(spec):
    return spec.sizes if spec.sizes else DEFAULT_SIZES


def cmd_solve(run: Run, schedule_only=False) -> None:
    spec, case = run.spec, run.case
    mode = FIXED if spec.sizes else CODESIGN
    out = solve_task((case, WeightVector(spec.weights), mode, spec.sizes, spec.bnb()))
    if isinstance(out, SolveFailure):
        run.fail("solve", spec.weights, out.status)
        run.json({"weights": spec.weights, "status": out.status, "mode": mode,
                  "sizes": spec.sizes, "message": str(out)}, "failure.json")
        return
    sol = out.solution
    if not schedule_only:
        t = Table(["w1", "w2", "total_cost", "total_loss_mwh", "status", "nodes"]
                  + _size_columns(case))
        t.append([*out.weights.w, out.cost, out.loss, out.status, out.nodes, *out.sizes])
        run.csv(t, "summary.csv")
        rep = physics_report(case, sol)
        run.json(rep.summary(), "physics.json")
        gaps = Table(["hour", "branch", "ac_cone_gap"])
        for h in range(sol.horizon):
            for k in range(len(case.ac_branches)):
                gaps.append([h + 1, k + 1, float(rep.cone_gaps.ac_gap[h, k])])
        run.csv(gaps, "cone_gaps.csv")
    _schedule_outputs(run, sol)


def _schedule_outputs(run, sol):
    table = Table(["battery", "hour", "net_charge_mw", "soc_mwh", "size_mwh"])
    panes = []
    for b in battery_schedule(sol):
        hours = [r[0] for r in b["rows"]]
        for h, net, soc in b["rows"]:
            table.append([b["battery"], h, net, soc, b["size"]])
        panes.append(Pane(
            f"Battery {b['battery']} ({b['size']:.1f} MWh)", "hour", "net charge (MW)",
            [Series("net charge", hours, [r[1] for r in b["rows"]], kind="bar"),
             Series("state of charge", hours, [r[2] for r in b["rows"]], axis="right")],
            ylabel_right="SOC (MWh)"))
    run.csv(table, "schedule.csv")
    run.svg(PlotSpec("Battery operation", panes), "schedule.svg")


def _fixed_sweep(run, case, sizes, weights, label):
    n = len(case.batteries)
    tasks = [(case, WeightVector(weights), FIXED, (s,) * n, run.spec.bnb()) for s in sizes]
    tasks.append((case, WeightVector(weights), CODESIGN, None, run.spec.bnb()))
    outs = _solve_many(tasks, run.spec.jobs)
    for s, out in zip(list(sizes) + ["codesign"], outs):
        if isinstance(out, SolveFailure):
            run.fail(f"{label} size={s}", weights, out.status)
    return outs[:-1], outs[-1]


def cmd_size_sweep(run: Run) -> None:
    spec, case = run.spec, run.case
    sizes = _sweep_sizes(spec)
    fixed, cd = _fixed_sweep(run, case, sizes, spec.weights, "size-sweep")
    t = Table(["size_mwh", "total_cost", "total_loss_mwh", "status"])
    for s, out in zip(sizes, fixed):
        if isinstance(out, SolveFailure):
            t.append([s, float("nan"), float("nan"), out.status])
        else:
            t.append([s, out.cost, out.loss, out.status])
    run.csv(t, "size_sweep.csv")
    series = [Series("fixed size", [r[0] for r in t.rows], [r[1] for r in t.rows])]
    if not isinstance(cd, SolveFailure):
        c = Table(["total_cost", "total_loss_mwh"] + _size_columns(case))
        c.append([cd.cost, cd.loss, *cd.sizes])
        run.csv(c, "codesign.csv")
        series.append(Series("co-design", [sizes[0], sizes[-1]], [cd.cost] * 2, dashed=True))
    run.svg(PlotSpec("Total cost against battery size",
                     [Pane("", "battery size (MWh)", "total cost", series)]),
            "size_sweep.svg")


def cmd_demand_sweep(run: Run) -> None:
    spec, case = run.spec, run.case
    sizes = _sweep_sizes(spec)
    rows = Table(["scale", "size_mwh", "total_cost", "total_loss_mwh", "status"])
    best = Table(["scale", "best_size_mwh", "best_fixed_cost", "codesign_cost"]
                 + _size_columns(case))
    series = []
    for f in spec.scales():
        fixed, cd = _fixed_sweep(run, demand_scale(case, f), sizes, spec.weights,
                                 f"demand-sweep scale={f}")
        costs = []
        for s, out in zip(sizes, fixed):
            bad = isinstance(out, SolveFailure)
            cost = float("nan") if bad else out.cost
            costs.append(cost)
            rows.append([f, s, cost, float("nan") if bad else out.loss,
                         out.status])
        finite = [(c, s) for c, s in zip(costs, sizes) if np.isfinite(c)]
        cd_ok = not isinstance(cd, SolveFailure)
        if finite:
            c_best, s_best = min(finite)
            best.append([f, s_best, c_best, cd.cost if cd_ok else float("nan"),
                         *(cd.sizes if cd_ok else [float("nan")] * len(case.batteries))])
        series.append(Series(f"demand x{f:g}", list(sizes), costs))
    run.csv(rows, "demand_sweep.csv")
    run.csv(best, "demand_best.csv")
    run.svg(PlotSpec("Total cost against battery size per demand level",
                     [Pane("", "battery size (MWh)", "total cost", series)]),
            "demand_sweep.svg")


def _front_table(case, points):
    t = Table(["w1", "w2", "total_cost", "total_loss_mwh", "nondominated"]
              + _size_columns(case))
    keep = {id(p) for p in nondominated_filter(points)}
    for p in points:
        t.append([*p.weights.w, p.cost, p.loss, id(p) in keep, *p.sizes])
    return t


def cmd_pareto_grid(run: Run) -> None:
    spec, case = run.spec, run.case
    weights = grid_weights(spec.M)
    sizes = _sweep_sizes(spec)
    n = len(case.batteries)
    tasks = [(case, w, CODESIGN, None, spec.bnb()) for w in weights]
    tasks += [(case, w, FIXED, (s,) * n, spec.bnb()) for s in sizes for w in weights]
    outs = _solve_many(tasks, spec.jobs)
    cd = outs[:len(weights)]
    points = []
    for w, out in zip(weights, cd):
        if isinstance(out, SolveFailure):
            run.fail("pareto-grid codesign", w.w, out.status)
        else:
            points.append(out)
    run.csv(_front_table(case, points), "front.csv")
    fixed = Table(["size_mwh", "w1", "w2", "total_cost", "total_loss_mwh"])
    series = [Series("co-design", [p.cost for p in nondominated_filter(points)],
                     [p.loss for p in nondominated_filter(points)])]
    for k, s in enumerate(sizes):
        chunk = outs[len(weights) * (k + 1):len(weights) * (k + 2)]
        pts = []
        for w, out in zip(weights, chunk):
            if isinstance(out, SolveFailure):
                run.fail(f"pareto-grid size={s}", w.w, out.status)
                continue
            fixed.append([s, *w.w, out.cost, out.loss])
            pts.append(out)
        front = nondominated_filter(pts)
        series.append(Series(f"fixed {s:g} MWh", [p.cost for p in front],
                             [p.loss for p in front], dashed=True))
    run.csv(fixed, "fixed_fronts.csv")
    run.svg(PlotSpec("Pareto fronts", [Pane("", "total cost", "total loss (MWh)", series)]),
            "front.svg")


def cmd_pareto_grad(run: Run) -> None:
    spec, case = run.spec, run.case
    res = gradient_sweep(case, SweepConfig(K=spec.K, step=spec.step, w0=spec.w0,
                                           bnb=spec.bnb()))
    for k, w, status in res.failures:
        run.fail(f"pareto-grad k={k}", w.w, status)
    by_key = {p.weights.key(): p for p in res.points}
    t = Table(["k", "w1", "w2", "total_cost", "total_loss_mwh", "status"])
    for k, w in enumerate(res.trajectory):
        p = by_key.get(w.key())
        if p is None:
            t.append([k, *w.w, float("nan"), float("nan"), "failed"])
        else:
            t.append([k, *w.w, p.cost, p.loss, p.status])
    run.csv(t, "trajectory.csv")
    run.csv(_front_table(case, res.points), "front.csv")
    run.notes["anchors"] = list(res.anchors)
    front = nondominated_filter(res.points)
    run.svg(PlotSpec(f"Gradient sweep front (K={spec.K})",
                     [Pane("", "total cost", "total loss (MWh)",
                           [Series("front", [p.cost for p in front],
                                   [p.loss for p in front])])]),
            "front.svg")


HANDLERS = {
    "solve": cmd_solve,
    "size-sweep": cmd_size_sweep,
    "demand-sweep": cmd_demand_sweep,
    "pareto-grid": cmd_pareto_grid,
    "pareto-grad": cmd_pareto_grad,
    "schedule": lambda run: cmd_solve(run, schedule_only=True),
}


def run(spec: RunSpec) -> int:
    try:
        case = parse_case(spec.case_path)
        if spec.sizes and spec.command in ("solve", "schedule") \
                and len(spec.sizes) != len(case.batteries):
            raise CaseError(f"--sizes needs {len(case.batteries)} values")
    except (CaseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    r = Run(spec, case)
    try:
        HANDLERS[spec.command](r)
    except (CaseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        r.notes["error"] = str(exc)
        r.manifest()
        return EXIT_INVALID
    code = r.manifest()
    for f in r.failures:
        print(f"solve failed: {f['task']} at weights {f['weights']}: {f['status']}",
              file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        spec = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if "-v" in argv or "--verbose" in argv
                        else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
