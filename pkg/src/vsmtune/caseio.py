"""Case-file ingestion, result persistence and metric recomputation.

Case files are strict JSON (schema version 1): unknown keys are
rejected, every violation is reported at once, and omitted optional
sections fall back to logged defaults.  Exported artifacts are plain
CSV (12 significant digits, LF line endings) and a metrics JSON whose
layout mirrors the terminal performance table; all output is
byte-deterministic for identical inputs.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .allocation import AllocationState, allocation_from_case
from .errors import CaseValidationError, NadirTimeInvalidError, OverdampedError
from .freq import aggregate, nadir, rocof, steady_state_deviation
from .grid import (
    GRID_FOLLOWING,
    GRID_FORMING,
    SG,
    GenUnit,
    Governor,
    GridCase,
    Line,
    linearize,
)
from .loop import IterationTrace, LoopConfig, RunResult
from .lp import CostConfig
from .modal import damping_ratio, decompose, worst_modes
from .norms import norm_report

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
VARIANTS = ("low-inertia", "no-inertia")
BUILTIN_CASES = {
    "low-inertia": "kundur3_low_inertia.json",
    "no-inertia": "kundur3_no_inertia.json",
}

_KIND_BY_NAME = {"SG": SG, "GridFormingVSC": GRID_FORMING, "GridFollowingVSC": GRID_FOLLOWING}


def builtin_case_path(name: str) -> Path:
    """Filesystem path of a shipped case ("low-inertia" or "no-inertia")."""
    if name not in BUILTIN_CASES:
        raise KeyError(f"unknown builtin case {name!r}; have {sorted(BUILTIN_CASES)}")
    return Path(resources.files("vsmtune").joinpath("cases", BUILTIN_CASES[name]))


class _Section:
    """One JSON object level with strict key accounting."""

    def __init__(self, data, path: str, problems: list[str]):
        self.data = data if isinstance(data, dict) else {}
        self.path = path
        self.problems = problems
        self.seen: set[str] = set()
        if not isinstance(data, dict):
            problems.append(f"{path}: expected an object")

    def take(self, key, kind, required=True, default=None, logged_default=False):
        self.seen.add(key)
        if key not in self.data:
            if required:
                self.problems.append(f"{self.path}.{key}: required key missing")
            elif logged_default:
                logger.info("case %s.%s omitted; using default %r", self.path, key, default)
            return default
        value = self.data[key]
        if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if kind is int and isinstance(value, int) and not isinstance(value, bool):
            return value
        if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
            self.problems.append(
                f"{self.path}.{key}: expected {getattr(kind, '__name__', kind)}, "
                f"got {type(value).__name__}"
            )
            return default
        return value

    def close(self):
        for key in self.data:
            if key not in self.seen:
                self.problems.append(f"{self.path}.{key}: unknown key")


def load_case(path) -> tuple[GridCase, LoopConfig, CostConfig]:
    """Parse and validate a case file.

    Raises :class:`CaseValidationError` carrying *every* semantic
    violation found, or ``json.JSONDecodeError`` (with line and column)
    for malformed JSON.
    """
    text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text)
    problems: list[str] = []

    root = _Section(data, "case", problems)
    schema = root.take("schema", int)
    if schema is not None and schema != SCHEMA_VERSION:
        problems.append(f"case.schema: unsupported version {schema}")
    root.take("name", str, required=False, default="")
    variant = root.take("variant", str, required=False, default=None)
    if variant is not None and variant not in VARIANTS:
        problems.append(f"case.variant: expected one of {VARIANTS}, got {variant!r}")

    net = _Section(root.take("network", dict, default={}), "network", problems)
    base_power = net.take("base_power_mva", float, default=1.0)
    f0 = net.take("f0_hz", float, default=50.0)
    buses = net.take("buses", list, default=[])
    lines_raw = net.take("lines", list, default=[])
    lines = []
    for k, item in enumerate(lines_raw or []):
        sec = _Section(item, f"network.lines[{k}]", problems)
        lines.append(
            Line(
                from_bus=sec.take("from", int, default=0),
                to_bus=sec.take("to", int, default=0),
                b=sec.take("b_pu", float, default=0.0),
            )
        )
        sec.close()
    net.close()

    units = []
    for k, item in enumerate(root.take("units", list, default=[]) or []):
        sec = _Section(item, f"units[{k}]", problems)
        kind_name = sec.take("kind", str, default="SG")
        kind = _KIND_BY_NAME.get(kind_name)
        if kind is None:
            problems.append(f"units[{k}].kind: unknown kind {kind_name!r}")
            kind = SG
        gov = None
        if kind == SG:
            gsec = _Section(sec.take("governor", dict, default={}), f"units[{k}].governor", problems)
            gov = Governor(
                t_turbine=gsec.take("t_s", float, default=1.0),
                r_inv=gsec.take("r_inv_pu", float, default=0.0),
                f_frac=gsec.take("f_frac", float, default=0.0),
            )
            gsec.close()
            bounds = {}
        else:
            bsec = _Section(sec.take("bounds", dict, default={}), f"units[{k}].bounds", problems)
            bounds = dict(
                m_lo=bsec.take("m_min_s", float, default=0.05),
                m_hi=bsec.take("m_max_s", float, default=15.0),
                d_lo=bsec.take("d_min_pu", float, default=0.0),
                d_hi=bsec.take("d_max_pu", float, default=25.0),
            )
            bsec.close()
        units.append(
            GenUnit(
                uid=sec.take("id", str, default=f"unit{k}"),
                bus=sec.take("bus", int, default=0),
                kind=kind,
                p_g=sec.take("p_g_mw", float, default=0.0),
                m=sec.take("m0_s", float, default=1.0),
                d=sec.take("d0_pu", float, default=0.0),
                governor=gov,
                d_sync=sec.take("d_sync_pu", float, required=False, default=0.0),
                **bounds,
            )
        )
        sec.close()

    scen = _Section(root.take("scenario", dict, default={}), "scenario", problems)
    disturbance_bus = scen.take("disturbance_bus", int, default=0)
    dp_mw = scen.take("dp_mw", float, default=0.0)
    scen.close()

    lim = _Section(root.take("limits", dict, default={}), "limits", problems)
    limits = dict(
        zeta_floor=lim.take("zeta_floor", float, default=0.1),
        rocof_limit=lim.take("rocof_hz_s", float, default=1.0),
        nadir_limit=lim.take("nadir_hz", float, default=0.8),
    )
    lim.close()

    loop_sec = _Section(root.take("loop", dict, default={}), "loop", problems)
    loop_kwargs = dict(
        dm_step=loop_sec.take("dm_step_s", float, default=0.5),
        dd_step=loop_sec.take("dd_step_pu", float, default=0.5),
        max_iterations=loop_sec.take("max_iterations", int, required=False,
                                     default=300, logged_default=True),
        mismatch_threshold=loop_sec.take("mismatch_threshold", float, required=False,
                                         default=0.01, logged_default=True),
        min_step_scale=loop_sec.take("min_step_scale", float, required=False,
                                     default=1.0 / 64.0, logged_default=True),
        epsilon=loop_sec.take("epsilon", float, required=False,
                              default=1e-4, logged_default=True),
        window=loop_sec.take("window", int, required=False,
                             default=5, logged_default=True),
        phi_mode=loop_sec.take("phi_mode", str, required=False,
                               default="signed", logged_default=True),
    )
    loop_sec.close()

    costs_data = root.take("costs", dict, required=False, default=None)
    if costs_data is None:
        logger.info("case costs omitted; using defaults %r", CostConfig())
        costs = CostConfig()
    else:
        csec = _Section(costs_data, "costs", problems)
        costs_kwargs = dict(
            c_zeta=csec.take("c_zeta", float, required=False, default=100.0, logged_default=True),
            c_f=csec.take("c_f", float, required=False, default=10.0, logged_default=True),
            c_fdot=csec.take("c_fdot", float, required=False, default=10.0, logged_default=True),
            c_m=csec.take("c_m", float, required=False, default=1.0, logged_default=True),
            c_d=csec.take("c_d", float, required=False, default=1.0, logged_default=True),
        )
        csec.close()
        try:
            costs = CostConfig(**costs_kwargs)
        except ValueError as exc:
            problems.append(f"costs: {exc}")
            costs = CostConfig()
    root.close()

    case = GridCase(
        buses=tuple(buses or []),
        lines=tuple(lines),
        units=tuple(units),
        base_power=base_power,
        f0=f0,
    )
    problems.extend(case.validate())
    if disturbance_bus not in set(case.buses):
        problems.append(f"scenario.disturbance_bus: unknown bus {disturbance_bus}")
    if dp_mw < 0:
        problems.append(f"scenario.dp_mw: must be >= 0, got {dp_mw}")

    config = None
    try:
        config = LoopConfig(
            dp_mw=dp_mw, disturbance_bus=disturbance_bus, **limits, **loop_kwargs
        )
    except ValueError as exc:
        problems.append(f"loop/limits: {exc}")
    if problems:
        raise CaseValidationError(problems)
    return case, config, costs


def write_case(path, case: GridCase, config: LoopConfig, costs: CostConfig,
               variant: str | None = None, name: str = "") -> None:
    """Serialize a case back to the schema-1 JSON layout."""
    units = []
    for u in case.units:
        entry: dict = {
            "id": u.uid,
            "bus": u.bus,
            "kind": u.kind,
            "p_g_mw": u.p_g,
            "m0_s": u.m,
            "d0_pu": u.d,
        }
        if u.d_sync != 0.0:
            entry["d_sync_pu"] = u.d_sync
        if u.kind == SG:
            entry["governor"] = {
                "t_s": u.governor.t_turbine,
                "r_inv_pu": u.governor.r_inv,
                "f_frac": u.governor.f_frac,
            }
        else:
            entry["bounds"] = {
                "m_min_s": u.m_lo,
                "m_max_s": u.m_hi,
                "d_min_pu": u.d_lo,
                "d_max_pu": u.d_hi,
            }
        units.append(entry)
    doc = {
        "schema": SCHEMA_VERSION,
        "name": name,
        "network": {
            "base_power_mva": case.base_power,
            "f0_hz": case.f0,
            "buses": list(case.buses),
            "lines": [{"from": ln.from_bus, "to": ln.to_bus, "b_pu": ln.b} for ln in case.lines],
        },
        "units": units,
        "scenario": {
            "disturbance_bus": config.disturbance_bus,
            "dp_mw": config.dp_mw,
        },
        "limits": {
            "zeta_floor": config.zeta_floor,
            "rocof_hz_s": config.rocof_limit,
            "nadir_hz": config.nadir_limit,
        },
        "loop": {
            "dm_step_s": config.dm_step,
            "dd_step_pu": config.dd_step,
            "max_iterations": config.max_iterations,
            "mismatch_threshold": config.mismatch_threshold,
            "min_step_scale": config.min_step_scale,
            "epsilon": config.epsilon,
            "window": config.window,
            "phi_mode": config.phi_mode,
        },
        "costs": {
            "c_zeta": costs.c_zeta,
            "c_f": costs.c_f,
            "c_fdot": costs.c_fdot,
            "c_m": costs.c_m,
            "c_d": costs.c_d,
        },
    }
    if variant is not None:
        doc["variant"] = variant
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def compute_metrics(case: GridCase, alloc: AllocationState, config: LoopConfig,
                    norm_tol: float = 1e-6) -> dict:
    """Terminal performance metrics, computed fresh from an allocation."""
    model = linearize(case, alloc, config.disturbance_bus)
    modes = decompose(model)
    worst = worst_modes(modes, config.filter_tol)
    params = aggregate(case, alloc, config.dp_mw)
    try:
        nadir_value = nadir(params).nadir
        regime = "oscillatory"
    except (OverdampedError, NadirTimeInvalidError):
        nadir_value = steady_state_deviation(params)
        regime = "steady_state"
    report = norm_report(model, norm_tol)
    p_g = np.array([u.p_g for u in case.units])
    return {
        "schema": SCHEMA_VERSION,
        "inertia_MWs2": float(p_g @ alloc.m / case.f0),
        "damping_MWs": float(p_g @ alloc.d / case.f0),
        "inertia_s": params.m,
        "damping_pu": params.d,
        "zeta_min": worst.zeta_min,
        "sigma_max": worst.sigma_max,
        "rocof_hz_s": rocof(params),
        "nadir_hz": nadir_value,
        "nadir_regime": regime,
        "h2": report.h2 if math.isfinite(report.h2) else None,
        "hinf": report.hinf if math.isfinite(report.hinf) else None,
        "stable": report.stable,
    }


@dataclass
class ResultBundle:
    """Everything a run produces, ready for export."""

    case: GridCase
    config: LoopConfig
    costs: CostConfig
    result: RunResult
    metrics: dict


def bundle_from_result(case: GridCase, config: LoopConfig, costs: CostConfig,
                       result: RunResult) -> ResultBundle:
    # Metrics are recomputed from the terminal allocation rather than
    # copied from the trace.
    metrics = compute_metrics(case, result.alloc, config)
    metrics["method"] = result.method
    metrics["status"] = result.status
    metrics["iterations"] = len(result.trace)
    return ResultBundle(case=case, config=config, costs=costs, result=result, metrics=metrics)


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def write_allocation_csv(path, case: GridCase, alloc: AllocationState) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["unit", "bus", "kind", "m_s", "d_pu"])
        for i, u in enumerate(case.units):
            writer.writerow([u.uid, u.bus, u.kind, _fmt(alloc.m[i]), _fmt(alloc.d[i])])


def trace_header(ids: tuple[str, ...]) -> list[str]:
    return (
        ["iteration", "phase", "zeta_min", "sigma_max", "rocof_hz_s", "nadir_hz",
         "agg_m_s", "agg_d_pu", "halvings"]
        + [f"m[{u}]" for u in ids]
        + [f"d[{u}]" for u in ids]
        + [f"dzeta_dm[{u}]" for u in ids]
        + [f"dzeta_dd[{u}]" for u in ids]
    )


def trace_row_values(row) -> list[str]:
    return (
        [str(row.iteration), row.phase, _fmt(row.zeta_min), _fmt(row.sigma_max),
         _fmt(row.rocof), _fmt(row.nadir), _fmt(row.agg_m), _fmt(row.agg_d),
         str(row.halvings)]
        + [_fmt(v) for v in row.m]
        + [_fmt(v) for v in row.d]
        + [_fmt(v) for v in row.dzeta_dm]
        + [_fmt(v) for v in row.dzeta_dd]
    )


def write_trace_csv(path, trace: IterationTrace) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trace_header(trace.controllable_ids))
        for row in trace.rows:
            writer.writerow(trace_row_values(row))


def write_spectrum_csv(path, eigenvalues: np.ndarray) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["re", "im", "zeta"])
        for lam in eigenvalues:
            writer.writerow([_fmt(lam.real), _fmt(lam.imag), _fmt(damping_ratio(lam))])


def export_bundle(bundle: ResultBundle, out_dir) -> list[Path]:
    """Write allocation.csv, metrics.json, trace.csv and spectra; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "allocation.csv"
    write_allocation_csv(path, bundle.case, bundle.result.alloc)
    written.append(path)

    path = out / "metrics.json"
    path.write_text(json.dumps(bundle.metrics, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    written.append(path)

    path = out / "trace.csv"
    write_trace_csv(path, bundle.result.trace)
    written.append(path)

    for tag, eigenvalues in bundle.result.spectra.items():
        path = out / f"spectrum_{tag}.csv"
        write_spectrum_csv(path, eigenvalues)
        written.append(path)
    return written
