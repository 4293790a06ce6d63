"""Two-objective front tracing: weight-gradient iteration and grid sweeps."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from .conic import project_simplex
from .grid.analysis import OperatingSolution, extract_solution
from .grid.build import CODESIGN, build_graph
from .grid.case import CaseData
from .mib_search import BnBConfig, branch_and_bound

log = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-12
K_PRESETS = (10, 30, 100)


class SolveFailure(RuntimeError):
    """A scalarized solve did not return a usable point."""

    def __init__(self, weights, status, detail=""):
        self.weights = tuple(weights)
        self.status = status
        super().__init__(f"solve at weights {self.weights} failed: {status} {detail}".rstrip())


@dataclass(frozen=True)
class WeightVector:
    w: tuple

    def __post_init__(self):
        arr = np.asarray(self.w, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("weights must be a non-empty vector")
        if np.any(arr < 0) or abs(arr.sum() - 1.0) > SIMPLEX_TOL * arr.size * 10:
            raise ValueError(f"weights {tuple(arr)} are not on the simplex")
        object.__setattr__(self, "w", tuple(float(v) for v in arr))

    @classmethod
    def project(cls, v) -> "WeightVector":
        return cls(tuple(project_simplex(v)))

    def key(self) -> tuple:
        return tuple(round(v, 10) for v in self.w)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.w, dtype=dtype)

    def __iter__(self):
        return iter(self.w)

    def __len__(self):
        return len(self.w)


@dataclass
class ParetoPoint:
    weights: WeightVector
    cost: float
    loss: float
    sizes: tuple
    solution: OperatingSolution | None = None
    status: str = "optimal"
    nodes: int = 0

    @property
    def objectives(self) -> tuple:
        return (self.cost, self.loss)


@dataclass(frozen=True)
class SweepConfig:
    K: int = 10
    step: float = 0.05
    w0: tuple = (0.5, 0.5)
    anchors: tuple | None = None  # utopia (cost, loss); solved when missing
    bnb: BnBConfig = field(default_factory=BnBConfig)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not self.step > 0:
            raise ValueError("step size must be positive")
        WeightVector(self.w0)
        if self.anchors is not None and (len(self.anchors) != 2
                                         or min(self.anchors) <= 0):
            raise ValueError("anchors must be two positive utopia values")


@dataclass
class SweepResult:
    trajectory: list
    points: list
    failures: list = field(default_factory=list)
    anchors: tuple | None = None


def _as_weights(w) -> WeightVector:
    return w if isinstance(w, WeightVector) else WeightVector(tuple(w))


def scalarized_solve(case: CaseData, w, mode: str = CODESIGN, sizes=None,
                     bnb: BnBConfig | None = None) -> ParetoPoint:
    """Branch-and-bound solve of the weighted problem; raises :class:`SolveFailure`."""
    w = _as_weights(w)
    graph = build_graph(case, w.w, mode=mode, sizes=sizes)
    res = branch_and_bound(graph, config=bnb or BnBConfig())
    if not res.ok:
        raise SolveFailure(w.w, res.status)
    sol = extract_solution(case, res.imap, res.x)
    cost, loss = sol.objectives
    return ParetoPoint(w, cost, loss, tuple(float(s) for s in sol.sizes), sol,
                       res.status, res.nodes)


def anchor_points(case: CaseData, mode: str = CODESIGN, sizes=None,
                  bnb: BnBConfig | None = None):
    """Cost and loss anchors plus the utopia pair ``(min cost, min loss)``."""
    cost_pt = scalarized_solve(case, (1.0, 0.0), mode, sizes, bnb)
    loss_pt = scalarized_solve(case, (0.0, 1.0), mode, sizes, bnb)
    return cost_pt, loss_pt, (cost_pt.cost, loss_pt.loss)


class _Cache:
    def __init__(self, case, mode, sizes, bnb):
        self.args = (case, mode, sizes, bnb)
        self.store = {}

    def __call__(self, w: WeightVector):
        key = w.key()
        if key not in self.store:
            case, mode, sizes, bnb = self.args
            try:
                self.store[key] = scalarized_solve(case, w, mode, sizes, bnb)
            except SolveFailure as exc:
                self.store[key] = exc
        out = self.store[key]
        if isinstance(out, SolveFailure):
            raise out
        return out


def gradient_sweep(case: CaseData, config: SweepConfig | None = None,
                   mode: str = CODESIGN, sizes=None) -> SweepResult:
    """Projected weight-gradient iteration over ``K`` scalarized solves.

    At each ``w_k`` the problem is solved and ``h`` is set to the two
    objective values divided by their utopia values; then
    ``w_{k+1} = project_simplex(w_k + step * h)``.  Failed solves are
    recorded and the last good ``h`` is reused.
    """
    config = config or SweepConfig()
    solve = _Cache(case, mode, sizes, config.bnb)
    anchors = config.anchors
    if anchors is None:
        anchors = (solve(WeightVector((1.0, 0.0))).cost,
                   solve(WeightVector((0.0, 1.0))).loss)
    scale = np.asarray(anchors, dtype=float)
    w = WeightVector(tuple(config.w0))
    trajectory, points, failures = [], [], []
    h = np.zeros(2)
    for k in range(config.K):
        trajectory.append(w)
        try:
            pt = solve(w)
        except SolveFailure as exc:
            failures.append((k, w, exc.status))
            log.warning("gradient sweep: %s", exc)
        else:
            points.append(pt)
            h = np.array(pt.objectives) / scale
        if k + 1 < config.K:
            w = WeightVector.project(np.asarray(w.w) + config.step * h)
    return SweepResult(trajectory, points, failures, tuple(anchors))


def solve_task(args):
    """Picklable ``(case, w, mode, sizes, bnb)`` solve for worker pools.

    Returns the point, or the :class:`SolveFailure` instead of raising it.
    """
    case, w, mode, sizes, bnb = args
    try:
        return scalarized_solve(case, w, mode, sizes, bnb)
    except SolveFailure as exc:
        return exc


def grid_weights(M: int) -> list:
    if M < 2:
        raise ValueError("a grid sweep needs M >= 2")
    return [WeightVector((k / (M - 1), 1.0 - k / (M - 1))) for k in range(M)]


def grid_sweep(case: CaseData, M: int = 11, mode: str = CODESIGN, sizes=None,
               bnb: BnBConfig | None = None, jobs: int = 1) -> SweepResult:
    """Solve at ``w_1`` evenly spaced over ``[0, 1]`` (``w_2 = 1 - w_1``)."""
    weights = grid_weights(M)
    bnb = bnb or BnBConfig()
    tasks = [(case, w, mode, sizes, bnb) for w in weights]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outs = list(ex.map(solve_task, tasks))
    else:
        outs = [solve_task(t) for t in tasks]
    points, failures = [], []
    for k, (w, out) in enumerate(zip(weights, outs)):
        if isinstance(out, SolveFailure):
            failures.append((k, w, out.status))
        else:
            points.append(out)
    return SweepResult(list(weights), points, failures)


def _objectives(p) -> tuple:
    return tuple(p.objectives) if hasattr(p, "objectives") else tuple(p)


def dominates(a, b, rtol: float = 0.0) -> bool:
    """``a`` is no worse than ``b`` in every objective and better in one."""
    a, b = np.asarray(_objectives(a)), np.asarray(_objectives(b))
    slack = rtol * np.maximum(np.abs(a), np.abs(b))
    return bool(np.all(a <= b + slack) and np.any(a < b - slack))


def nondominated_filter(points) -> list:
    """Mutually non-dominated subset sorted by cost; equal points collapse."""
    pts = sorted(points, key=lambda p: _objectives(p))
    out = []
    best_loss = math.inf
    for p in pts:
        loss = _objectives(p)[1]
        if loss < best_loss:
            out.append(p)
            best_loss = loss
    return out


def hausdorff(front_a, front_b, scale=(1.0, 1.0)) -> float:
    """Symmetric Hausdorff distance between fronts after dividing by ``scale``."""
    a = np.array([_objectives(p) for p in front_a], dtype=float) / np.asarray(scale)
    b = np.array([_objectives(p) for p in front_b], dtype=float) / np.asarray(scale)
    if not len(a) or not len(b):
        raise ValueError("both fronts need at least one point")
    return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])
