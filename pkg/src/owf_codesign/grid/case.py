"""Power-system case description and its JSON file format.

Per-unit quantities (voltages, bus demands, generator limits, branch
impedances, DC resistances) are on the case's MVA base.  Battery sizes
are in MWh, battery power limits and wind-farm nominal outputs in MW,
and cost coefficients use MW-based units (``$/MW^2h``, ``$/MWh``, ``$/h``).
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import networkx as nx


class CaseError(ValueError):
    """Invalid or inconsistent case data."""


@dataclass(frozen=True)
class ACBus:
    id: int
    vmin: float
    vmax: float
    pd: float = 0.0
    qd: float = 0.0
    gs: float = 0.0
    bs: float = 0.0


@dataclass(frozen=True)
class ACBranch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0

    @property
    def admittance(self) -> complex:
        return 1.0 / complex(self.r, self.x)

    @property
    def g(self) -> float:
        """Series conductance (p.u.)."""
        return self.admittance.real


@dataclass(frozen=True)
class Generator:
    bus: int
    pmin: float
    pmax: float
    qmin: float
    qmax: float
    ramp_p_up: float
    ramp_p_down: float
    ramp_q_up: float
    ramp_q_down: float
    cost: tuple  # (a, b, c0) for a*P^2 + b*P + c0 with P in MW


@dataclass(frozen=True)
class DCBus:
    id: int
    vmin: float
    vmax: float


@dataclass(frozen=True)
class DCBranch:
    from_bus: int
    to_bus: int
    r: float

    @property
    def g(self) -> float:
        return 1.0 / self.r


@dataclass(frozen=True)
class Converter:
    id: int
    ac_bus: int
    dc_bus: int
    beta: float
    k: float
    d: float


@dataclass(frozen=True)
class Battery:
    id: int
    bus: int
    bs_min: float
    bs_max: float
    p_ch_max: float
    p_dis_max: float
    eta_ch: float
    eta_dis: float
    soc_init: float
    soc_final_min: float
    install_cost: float  # $/MWh of capacity, amortized to the horizon
    operation_cost: float  # $/MWh of charge + discharge throughput


@dataclass(frozen=True)
class WindFarm:
    id: int
    dc_bus: int
    p_nom: float


@dataclass(frozen=True)
class ScheduleFactors:
    load: tuple
    wind: tuple
    fuel_cost: tuple


@dataclass(frozen=True)
class CaseData:
    name: str
    mva_base: float
    horizon: int
    ac_buses: tuple
    ac_branches: tuple
    generators: tuple
    dc_buses: tuple
    dc_branches: tuple
    converters: tuple
    batteries: tuple
    wind_farms: tuple
    schedule: ScheduleFactors
    costs: dict = field(default_factory=dict)
    slack_bus: int | None = None

    def ac_index(self) -> dict:
        return {b.id: k for k, b in enumerate(self.ac_buses)}

    def dc_index(self) -> dict:
        return {b.id: k for k, b in enumerate(self.dc_buses)}

    @property
    def objective_scales(self) -> tuple:
        scales = self.costs.get("objective_scale", {})
        return float(scales.get("cost", 1.0)), float(scales.get("loss", 1.0))

    def with_sizes(self, sizes) -> "CaseData":
        """Copy with each battery's size range pinched to ``sizes``."""
        if len(sizes) != len(self.batteries):
            raise CaseError("one size per battery required")
        for bt, s in zip(self.batteries, sizes):
            if not bt.bs_min <= s <= bt.bs_max:
                raise CaseError(f"battery {bt.id}: size {s} outside [{bt.bs_min}, {bt.bs_max}]")
        bats = tuple(replace(bt, bs_min=float(s), bs_max=float(s))
                     for bt, s in zip(self.batteries, sizes))
        return replace(self, batteries=bats)


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_ID = {"type": "integer"}


def _obj(props, optional=()):
    return {
        "type": "object",
        "properties": props,
        "required": [k for k in props if k not in optional],
        "additionalProperties": False,
    }


def _arr(item, min_items=0):
    return {"type": "array", "items": item, "minItems": min_items}


CASE_SCHEMA = _obj({
    "name": {"type": "string"},
    "mva_base": _POS,
    "horizon": {"type": "integer", "minimum": 1},
    "slack_bus": _ID,
    "ac_buses": _arr(_obj({"id": _ID, "vmin": _POS, "vmax": _POS, "pd": _NUM,
                           "qd": _NUM, "gs": _NUM, "bs": _NUM},
                          optional=("pd", "qd", "gs", "bs")), 1),
    "ac_branches": _arr(_obj({"from": _ID, "to": _ID, "r": _NONNEG, "x": _NUM,
                              "b": _NUM}, optional=("b",))),
    "generators": _arr(_obj({
        "bus": _ID, "pmin": _NUM, "pmax": _NUM, "qmin": _NUM, "qmax": _NUM,
        "ramp_p_up": _NONNEG, "ramp_p_down": _NONNEG, "ramp_q_up": _NONNEG,
        "ramp_q_down": _NONNEG,
        "cost": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
    })),
    "dc_buses": _arr(_obj({"id": _ID, "vmin": _POS, "vmax": _POS})),
    "dc_branches": _arr(_obj({"from": _ID, "to": _ID, "r": _POS})),
    "converters": _arr(_obj({"id": _ID, "ac_bus": _ID, "dc_bus": _ID,
                             "beta": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                             "k": _NUM, "d": _NUM})),
    "batteries": _arr(_obj({
        "id": _ID, "bus": _ID, "bs_min": _NONNEG, "bs_max": _NONNEG,
        "p_ch_max": _NONNEG, "p_dis_max": _NONNEG,
        "eta_ch": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "eta_dis": {"type": "number", "minimum": 1},
        "soc_init": _NONNEG, "soc_final_min": _NONNEG,
        "install_cost": _NONNEG, "operation_cost": _NONNEG,
    })),
    "wind_farms": _arr(_obj({"id": _ID, "dc_bus": _ID, "p_nom": _NONNEG})),
    "schedule": _obj({
        "load": _arr(_POS, 1), "wind": _arr(_POS, 1), "fuel_cost": _arr(_POS, 1),
    }),
    "costs": _obj({
        "currency": {"type": "string"},
        "objective_scale": _obj({"cost": _POS, "loss": _POS}),
    }, optional=("currency", "objective_scale")),
}, optional=("slack_bus", "costs"))


def _path(err) -> str:
    out = ""
    for p in err.absolute_path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else p)
    return out or "<root>"


def case_from_dict(data: dict) -> CaseData:
    """Validate ``data`` against the case schema and build a :class:`CaseData`."""
    validator = jsonschema.Draft7Validator(CASE_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        msg = "; ".join(f"{_path(e)}: {e.message}" for e in errors)
        raise CaseError(msg)
    sched = data["schedule"]
    case = CaseData(
        name=data["name"],
        mva_base=float(data["mva_base"]),
        horizon=int(data["horizon"]),
        ac_buses=tuple(ACBus(**b) for b in data["ac_buses"]),
        ac_branches=tuple(
            ACBranch(br["from"], br["to"], br["r"], br["x"], br.get("b", 0.0))
            for br in data["ac_branches"]),
        generators=tuple(
            Generator(**{**g, "cost": tuple(g["cost"])}) for g in data["generators"]),
        dc_buses=tuple(DCBus(**b) for b in data["dc_buses"]),
        dc_branches=tuple(DCBranch(br["from"], br["to"], br["r"])
                          for br in data["dc_branches"]),
        converters=tuple(Converter(**c) for c in data["converters"]),
        batteries=tuple(Battery(**b) for b in data["batteries"]),
        wind_farms=tuple(WindFarm(**w) for w in data["wind_farms"]),
        schedule=ScheduleFactors(tuple(sched["load"]), tuple(sched["wind"]),
                                 tuple(sched["fuel_cost"])),
        costs=copy.deepcopy(data.get("costs", {})),
        slack_bus=data.get("slack_bus"),
    )
    validate_case(case)
    return case


def validate_case(case: CaseData) -> None:
    """Referential integrity and physical bounds; raises :class:`CaseError`."""
    errs = []
    ac = case.ac_index()
    dc = case.dc_index()
    if len(ac) != len(case.ac_buses):
        errs.append("ac_buses: duplicate bus id")
    if len(dc) != len(case.dc_buses):
        errs.append("dc_buses: duplicate bus id")
    for k, b in enumerate(case.ac_buses):
        if not 0 < b.vmin <= b.vmax:
            errs.append(f"ac_buses[{k}]: need 0 < vmin <= vmax")
    for k, b in enumerate(case.dc_buses):
        if not 0 < b.vmin <= b.vmax:
            errs.append(f"dc_buses[{k}]: need 0 < vmin <= vmax")
    for k, br in enumerate(case.ac_branches):
        for end in ("from_bus", "to_bus"):
            if getattr(br, end) not in ac:
                errs.append(f"ac_branches[{k}].{end[:-4]}: unknown AC bus {getattr(br, end)}")
        if br.from_bus == br.to_bus:
            errs.append(f"ac_branches[{k}]: from and to buses coincide")
        if br.r == 0 and br.x == 0:
            errs.append(f"ac_branches[{k}]: zero impedance")
        elif br.g < 0:
            errs.append(f"ac_branches[{k}]: negative conductance")
    for k, g in enumerate(case.generators):
        if g.bus not in ac:
            errs.append(f"generators[{k}].bus: unknown AC bus {g.bus}")
        if g.pmin > g.pmax or g.qmin > g.qmax:
            errs.append(f"generators[{k}]: inverted output limits")
        if g.cost[0] < 0:
            errs.append(f"generators[{k}].cost: quadratic coefficient must be >= 0")
    for k, br in enumerate(case.dc_branches):
        for end in ("from_bus", "to_bus"):
            if getattr(br, end) not in dc:
                errs.append(f"dc_branches[{k}].{end[:-4]}: unknown DC bus {getattr(br, end)}")
        if br.from_bus == br.to_bus:
            errs.append(f"dc_branches[{k}]: from and to buses coincide")
        if not br.r > 0:
            errs.append(f"dc_branches[{k}].r: resistance must be positive")
    for k, cv in enumerate(case.converters):
        if cv.ac_bus not in ac:
            errs.append(f"converters[{k}].ac_bus: unknown AC bus {cv.ac_bus}")
        if cv.dc_bus not in dc:
            errs.append(f"converters[{k}].dc_bus: unknown DC bus {cv.dc_bus}")
        if not 0 <= cv.beta < 1:
            errs.append(f"converters[{k}].beta: must lie in [0, 1)")
        if cv.k == 0:
            errs.append(f"converters[{k}].k: droop gain must be nonzero")
    for k, bt in enumerate(case.batteries):
        if bt.bus not in ac:
            errs.append(f"batteries[{k}].bus: unknown AC bus {bt.bus}")
        if not 0 <= bt.bs_min <= bt.bs_max:
            errs.append(f"batteries[{k}]: need 0 <= bs_min <= bs_max")
        if not 0 < bt.eta_ch <= 1:
            errs.append(f"batteries[{k}].eta_ch: must lie in (0, 1]")
        if bt.eta_dis < 1:
            errs.append(f"batteries[{k}].eta_dis: must be >= 1")
        if bt.soc_init > bt.bs_min:
            errs.append(f"batteries[{k}].soc_init: exceeds bs_min")
        if bt.soc_final_min > bt.bs_max:
            errs.append(f"batteries[{k}].soc_final_min: exceeds bs_max")
    for k, wf in enumerate(case.wind_farms):
        if wf.dc_bus not in dc:
            errs.append(f"wind_farms[{k}].dc_bus: unknown DC bus {wf.dc_bus}")
    T = case.horizon
    for name in ("load", "wind", "fuel_cost"):
        vals = getattr(case.schedule, name)
        if len(vals) != T:
            errs.append(f"schedule.{name}: expected {T} hourly factors, got {len(vals)}")
        if any(v <= 0 for v in vals):
            errs.append(f"schedule.{name}: factors must be positive")
    if case.slack_bus is not None and case.slack_bus not in ac:
        errs.append(f"slack_bus: unknown AC bus {case.slack_bus}")
    if not errs:
        g = nx.Graph()
        g.add_nodes_from(ac)
        g.add_edges_from((br.from_bus, br.to_bus) for br in case.ac_branches)
        if not nx.is_connected(g):
            errs.append("ac_branches: AC network is not connected")
        if case.dc_buses:
            g = nx.Graph()
            g.add_nodes_from(dc)
            g.add_edges_from((br.from_bus, br.to_bus) for br in case.dc_branches)
            if not nx.is_connected(g):
                errs.append("dc_branches: DC network is not connected")
    if errs:
        raise CaseError("; ".join(errs))


def case_to_dict(case: CaseData) -> dict:
    out = {
        "name": case.name,
        "mva_base": case.mva_base,
        "horizon": case.horizon,
        "ac_buses": [asdict(b) for b in case.ac_buses],
        "ac_branches": [{"from": b.from_bus, "to": b.to_bus, "r": b.r, "x": b.x, "b": b.b}
                        for b in case.ac_branches],
        "generators": [{**asdict(g), "cost": list(g.cost)} for g in case.generators],
        "dc_buses": [asdict(b) for b in case.dc_buses],
        "dc_branches": [{"from": b.from_bus, "to": b.to_bus, "r": b.r}
                        for b in case.dc_branches],
        "converters": [asdict(c) for c in case.converters],
        "batteries": [asdict(b) for b in case.batteries],
        "wind_farms": [asdict(w) for w in case.wind_farms],
        "schedule": {"load": list(case.schedule.load), "wind": list(case.schedule.wind),
                     "fuel_cost": list(case.schedule.fuel_cost)},
        "costs": copy.deepcopy(case.costs),
    }
    if case.slack_bus is not None:
        out["slack_bus"] = case.slack_bus
    return out


def parse_case(path) -> CaseData:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CaseError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise CaseError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return case_from_dict(data)
    except CaseError as exc:
        raise CaseError(f"{path}: {exc}") from None


def write_case(case: CaseData, path) -> None:
    Path(path).write_text(json.dumps(case_to_dict(case), indent=2) + "\n")


def shipped_case_path(name: str = "case9_mtdc.json") -> Path:
    return Path(str(resources.files("owf_codesign") / "data" / name))


def load_shipped_case(name: str = "case9_mtdc.json") -> CaseData:
    return parse_case(shipped_case_path(name))


def demand_scale(case: CaseData, factor: float) -> CaseData:
    """Copy of ``case`` with every nominal P and Q demand multiplied by ``factor``."""
    if not factor > 0:
        raise CaseError("demand scale factor must be positive")
    buses = tuple(replace(b, pd=b.pd * factor, qd=b.qd * factor) for b in case.ac_buses)
    return replace(case, ac_buses=buses)


def truncate_horizon(case: CaseData, hours: int) -> CaseData:
    """Copy of ``case`` keeping only the first ``hours`` hours of the schedule."""
    if not 1 <= hours <= case.horizon:
        raise CaseError(f"horizon must lie in [1, {case.horizon}], got {hours}")
    s = case.schedule
    sched = ScheduleFactors(tuple(s.load[:hours]), tuple(s.wind[:hours]),
                            tuple(s.fuel_cost[:hours]))
    return replace(case, horizon=hours, schedule=sched)


def with_battery_rates(case: CaseData, install_cost=None, operation_cost=None) -> CaseData:
    """Copy of ``case`` with every battery's cost rates replaced where given."""
    bats = []
    for bt in case.batteries:
        if install_cost is not None:
            bt = replace(bt, install_cost=float(install_cost))
        if operation_cost is not None:
            bt = replace(bt, operation_cost=float(operation_cost))
        bats.append(bt)
    return replace(case, batteries=tuple(bats))
