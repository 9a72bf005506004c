"""Feeder JSON ingestion to a per-unit Network, plus CSV/JSON emission.

The feeder document is plain JSON: complex numbers are ``[re, im]`` pairs and
3x3 matrices are row-major nested arrays of such pairs. Impedances and
admittances come either in physical units (key suffix ``_ohm`` / ``_s``) or
per-unit (``_pu``), never mixed within one element; physical values are
converted with the bus-side voltage base.
"""

from __future__ import annotations

import json

import numpy as np

from .ac_sweep import PhasorState
from .linear_model import LinearSolution
from .network import (
    Network,
    ValidationError,
    make_bus,
    make_line,
    make_load,
    make_shunt,
    phase_indices,
    validate,
)

_REQUIRED = object()


class ParseError(ValueError):
    """Malformed feeder document; carries the JSON path of the offence."""

    def __init__(self, message, path="$"):
        self.json_path = path
        super().__init__(f"{path}: {message}")


class UnitError(ValueError):
    """Mixed or unresolvable physical/per-unit units within one element."""


def impedance_to_pu(z_ohm, sbase_kva: float, vbase_kv: float):
    return np.asarray(z_ohm) * sbase_kva / (1000.0 * vbase_kv**2)


def admittance_to_pu(y_s, sbase_kva: float, vbase_kv: float):
    return np.asarray(y_s) * (1000.0 * vbase_kv**2) / sbase_kva


def _get(doc: dict, key: str, path: str, default=_REQUIRED):
    if key in doc:
        return doc[key]
    if default is _REQUIRED:
        raise ParseError(f"missing required key {key!r}", path)
    return default


def _cnum(value, path) -> complex:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(x, (int, float)) for x in value)):
        raise ParseError(f"expected a [re, im] pair, got {value!r}", path)
    return complex(value[0], value[1])


def _cvec3(value, path) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ParseError("expected a 3-vector of [re, im] pairs", path)
    return np.array([_cnum(v, f"{path}[{i}]") for i, v in enumerate(value)])


def _cmat3(value, path) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ParseError("expected a 3x3 matrix of [re, im] pairs", path)
    return np.array([[_cnum(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)]
                     for i, row in enumerate(_rows3(value, path))])


def _rows3(value, path):
    for i, row in enumerate(value):
        if not isinstance(row, (list, tuple)) or len(row) != 3:
            raise ParseError("expected 3 entries per matrix row", f"{path}[{i}]")
    return value


def _pick_unit(doc: dict, base: str, pu_suffix: str, phys_suffix: str, path: str,
               optional: bool = False):
    """Return (value, is_pu) for a quantity with two possible unit keys."""
    pu_key, phys_key = base + pu_suffix, base + phys_suffix
    if pu_key in doc and phys_key in doc:
        raise UnitError(f"{path}: both {pu_key!r} and {phys_key!r} given")
    if pu_key in doc:
        return doc[pu_key], True
    if phys_key in doc:
        return doc[phys_key], False
    if optional:
        return None, True
    raise ParseError(f"missing {pu_key!r} or {phys_key!r}", path)


def parse_feeder_dict(doc: dict) -> Network:
    """Build and validate a per-unit Network from a feeder document."""
    if not isinstance(doc, dict):
        raise ParseError("feeder document must be a JSON object")
    sbase = float(_get(doc, "sbase_kva", "$"))
    vbase = _get(doc, "vbase_kv", "$")

    def vbase_for(bus_id: str, path: str) -> float:
        if isinstance(vbase, dict):
            if bus_id not in vbase:
                raise ParseError(f"no voltage base for bus {bus_id!r}", path)
            return float(vbase[bus_id])
        return float(vbase)

    source = _get(doc, "source", "$")
    slack_bus = str(_get(source, "bus", "$.source"))
    vref = _cvec3(_get(source, "vref_pu", "$.source"), "$.source.vref_pu")

    buses = []
    for i, b in enumerate(_get(doc, "buses", "$")):
        path = f"$.buses[{i}]"
        bid = str(_get(b, "id", path))
        try:
            buses.append(make_bus(
                bid,
                phases=_get(b, "phases", path),
                vmin=_get(b, "vmin_pu", path, 0.8),
                vmax=_get(b, "vmax_pu", path, 1.2),
                is_slack=(bid == slack_bus),
                vref=vref if bid == slack_bus else None,
            ))
        except ValueError as exc:
            raise ParseError(str(exc), path) from exc

    lines = []
    for i, e in enumerate(_get(doc, "lines", "$")):
        path = f"$.lines[{i}]"
        from_bus = str(_get(e, "from", path))
        flavors = set()

        def matrix(base, optional=False, _path=path, _doc=e, _from=from_bus):
            raw, is_pu = _pick_unit(_doc, base, "_pu", "_ohm" if base == "z_series" else "_s",
                                    _path, optional)
            if raw is None:
                return None
            flavors.add("pu" if is_pu else "phys")
            mat = _cmat3(raw, f"{_path}.{base}")
            if is_pu:
                return mat
            kv = vbase_for(_from, _path)
            to_bus = str(_get(_doc, "to", _path))
            if isinstance(vbase, dict) and vbase_for(to_bus, _path) != kv:
                raise UnitError(f"{_path}: physical units across different voltage "
                                "bases; provide per-unit values")
            if base == "z_series":
                return impedance_to_pu(mat, sbase, kv)
            return admittance_to_pu(mat, sbase, kv)

        z = matrix("z_series")
        ysh_from = matrix("ysh_from", optional=True)
        ysh_to = matrix("ysh_to", optional=True)
        if "pu" in flavors and "phys" in flavors:
            raise UnitError(f"{path}: mixed per-unit and physical units in one element")
        try:
            lines.append(make_line(
                _get(e, "id", path), from_bus, _get(e, "to", path),
                phases=_get(e, "phases", path), z=z,
                ysh_from=ysh_from, ysh_to=ysh_to,
            ))
        except ValueError as exc:
            raise ParseError(str(exc), path) from exc

    loads = []
    for i, l in enumerate(_get(doc, "loads", "$", [])):
        path = f"$.loads[{i}]"
        raw_s0, s0_pu = _pick_unit(l, "s0", "_pu", "_kva", path)
        s0 = _cvec3(raw_s0, f"{path}.s0")
        if not s0_pu:
            s0 = s0 / sbase
        try:
            loads.append(make_load(
                _get(l, "id", path), _get(l, "bus", path),
                configuration=_get(l, "configuration", path),
                model=_get(l, "model", path),
                phases=_get(l, "phases", path),
                s0=s0,
                v0mag=l.get("v0_mag_pu"),
                alpha=_get(l, "alpha", path, 0.0),
                beta=_get(l, "beta", path, 0.0),
            ))
        except ValueError as exc:
            raise ParseError(str(exc), path) from exc

    shunts = []
    for i, s in enumerate(_get(doc, "shunts", "$", [])):
        path = f"$.shunts[{i}]"
        raw_y, y_pu = _pick_unit(s, "y", "_pu", "_s", path)
        y = _cmat3(raw_y, f"{path}.y")
        if not y_pu:
            y = admittance_to_pu(y, sbase, vbase_for(str(_get(s, "bus", path)), path))
        try:
            shunts.append(make_shunt(_get(s, "id", path), _get(s, "bus", path), y))
        except ValueError as exc:
            raise ParseError(str(exc), path) from exc

    network = Network(
        buses=tuple(buses), lines=tuple(lines), shunts=tuple(shunts),
        loads=tuple(loads), root=slack_bus, sbase_kva=sbase, vbase_kv=vbase,
    )
    report = validate(network)
    if not report.ok:
        raise ValidationError(report)
    return network


def parse_feeder(path) -> Network:
    """Parse a feeder JSON file into a validated per-unit Network."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    return parse_feeder_dict(doc)


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def _pair(z: complex) -> list[float]:
    return [float(np.real(z)), float(np.imag(z))]


def _pairs_vec(v) -> list:
    return [_pair(z) for z in v]


def _pairs_mat(m) -> list:
    return [[_pair(z) for z in row] for row in m]


def network_to_dict(network: Network) -> dict:
    """Feeder document (all per-unit) reproducing the network when parsed."""
    return {
        "sbase_kva": network.sbase_kva,
        "vbase_kv": network.vbase_kv if network.vbase_kv is not None else 1.0,
        "source": {
            "bus": network.root,
            "vref_pu": _pairs_vec(network.slack_bus.vref),
        },
        "buses": [
            {"id": b.id, "phases": b.phases,
             "vmin_pu": [float(x) for x in b.vmin],
             "vmax_pu": [float(x) for x in b.vmax]}
            for b in network.buses
        ],
        "lines": [
            {"id": e.id, "from": e.from_bus, "to": e.to_bus, "phases": e.phases,
             "z_series_pu": _pairs_mat(e.z_series),
             "ysh_from_pu": _pairs_mat(e.ysh_from),
             "ysh_to_pu": _pairs_mat(e.ysh_to)}
            for e in network.lines
        ],
        "loads": [
            {"id": l.id, "bus": l.bus, "configuration": l.configuration,
             "model": l.model, "phases": l.phases,
             "s0_pu": _pairs_vec(l.s0),
             "v0_mag_pu": [float(x) for x in l.v0mag],
             "alpha": [float(x) for x in l.alpha],
             "beta": [float(x) for x in l.beta]}
            for l in network.loads
        ],
        "shunts": [
            {"id": s.id, "bus": s.bus, "y_pu": _pairs_mat(s.y)}
            for s in network.shunts
        ],
    }


def write_feeder(network: Network, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(network_to_dict(network), handle, indent=1)
        handle.write("\n")


def solution_table(solution) -> dict:
    """Bus-voltage and load-power rows of a solved case, as plain values.

    Works for both solution kinds; the linear model carries no absolute
    angles, so its ``va_deg`` entries are None.
    """
    network = solution.network
    bus_rows = []
    for bid in solution.tree.order:
        bus = network.bus(bid)
        for phi in phase_indices(bus.phases):
            if isinstance(solution, PhasorState):
                val = solution.v[bid][phi]
                bus_rows.append({
                    "bus": bid, "phase": "abc"[phi],
                    "vm_pu": float(abs(val)),
                    "va_deg": float(np.degrees(np.angle(val))),
                    "w_pu": float(abs(val) ** 2),
                })
            else:
                wval = float(solution.w[bid][phi, phi].real)
                bus_rows.append({
                    "bus": bid, "phase": "abc"[phi],
                    "vm_pu": float(np.sqrt(max(wval, 0.0))),
                    "va_deg": None,
                    "w_pu": wval,
                })
    load_rows = []
    for load in network.loads:
        for phi in range(3):
            load_rows.append({
                "load": load.id, "phase": "abc"[phi],
                "pd_pu": float(solution.sd[load.id][phi].real),
                "qd_pu": float(solution.sd[load.id][phi].imag),
                "pb_pu": float(solution.sb[load.id][phi].real),
                "qb_pu": float(solution.sb[load.id][phi].imag),
            })
    return {"buses": bus_rows, "loads": load_rows}


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{float(x):.9f}"


def write_solution_table_csv(table: dict, path) -> None:
    """Write the two-section solution CSV (bus rows, then load rows)."""
    out = ["bus,phase,vm_pu,va_deg,w_pu"]
    for r in table["buses"]:
        out.append(f"{r['bus']},{r['phase']},{_fmt(r['vm_pu'])},"
                   f"{_fmt(r['va_deg'])},{_fmt(r['w_pu'])}")
    out.append("load,phase,pd_pu,qd_pu,pb_pu,qb_pu")
    for r in table["loads"]:
        out.append(f"{r['load']},{r['phase']},{_fmt(r['pd_pu'])},"
                   f"{_fmt(r['qd_pu'])},{_fmt(r['pb_pu'])},{_fmt(r['qb_pu'])}")
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("\n".join(out) + "\n")


def write_solution_csv(solution, path) -> None:
    """CSV of a LinearSolution or PhasorState produced on the same network."""
    write_solution_table_csv(solution_table(solution), path)
