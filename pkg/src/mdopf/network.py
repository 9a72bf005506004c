"""Immutable multiphase radial network model and topology utilities.

All electrical quantities are in per-unit on a common power base. Phase
vectors and matrices are always padded to the full a/b/c size (3 or 3x3)
with exact zeros on absent phases, plus an explicit phase string per
element, so that matrix algebra stays uniform across one-, two- and
three-phase components.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np

PHASE_LETTERS = "abc"

WYE = "wye"
DELTA = "delta"
CONSTANT_POWER = "constant_power"
EXPONENTIAL = "exponential"


class Phase(IntEnum):
    """One of the three phases, coded a=0, b=1, c=2."""

    a = 0
    b = 1
    c = 2

    @property
    def successor(self) -> "Phase":
        return Phase((self + 1) % 3)

    @property
    def predecessor(self) -> "Phase":
        return Phase((self + 2) % 3)


def normalize_phases(phases) -> str:
    """Normalize a phase spec ('ba', ['a','b'], 'ab') to an ordered subset string."""
    if isinstance(phases, str):
        letters = list(phases)
    else:
        letters = [str(p) for p in phases]
    for p in letters:
        if p not in PHASE_LETTERS:
            raise ValueError(f"unknown phase {p!r}; expected letters from 'abc'")
    if len(set(letters)) != len(letters):
        raise ValueError(f"duplicate phase in {phases!r}")
    return "".join(p for p in PHASE_LETTERS if p in letters)


def phase_indices(phases: str) -> list[int]:
    return [PHASE_LETTERS.index(p) for p in phases]


def phase_mask(phases: str) -> np.ndarray:
    mask = np.zeros(3, dtype=bool)
    mask[phase_indices(phases)] = True
    return mask


def _as_cvec(x) -> np.ndarray:
    arr = np.asarray(x, dtype=complex)
    if arr.shape != (3,):
        raise ValueError(f"expected a length-3 vector, got shape {arr.shape}")
    return arr


def _as_cmat(x) -> np.ndarray:
    arr = np.asarray(x, dtype=complex)
    if arr.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Bus:
    """A network node with its phase set and voltage-magnitude limits (p.u.)."""

    id: str
    phases: str
    vmin: np.ndarray  # per-phase lower bound on |V|, zero-padded off-phase
    vmax: np.ndarray
    is_slack: bool = False
    vref: np.ndarray | None = None  # fixed complex voltage, slack bus only


@dataclass(frozen=True, eq=False)
class Line:
    """A series branch with 3x3 impedance and shunt admittance halves (p.u.).

    Rows/columns outside the line's phases are exactly zero. ``ysh_from`` is
    the charging admittance at the ``from_bus`` end, ``ysh_to`` at the other.
    """

    id: str
    from_bus: str
    to_bus: str
    phases: str
    z_series: np.ndarray
    ysh_from: np.ndarray
    ysh_to: np.ndarray


@dataclass(frozen=True, eq=False)
class ShuntDevice:
    """A bus-connected admittance (capacitor banks, reactors)."""

    id: str
    bus: str
    y: np.ndarray


@dataclass(frozen=True, eq=False)
class LoadSpec:
    """One multiphase load.

    For a wye load, ``phases`` are the bus phases it draws from. For a delta
    load, entry ``phi`` describes the branch between bus phases ``phi`` and
    ``phi.successor``, so branch "a" spans a-b, "b" spans b-c, "c" spans c-a.

    ``s0`` is the nominal complex power, ``v0mag`` the voltage magnitude at
    which the nominal power is drawn (line-to-neutral for wye, line-to-line
    for delta), and ``alpha``/``beta`` the active/reactive voltage exponents
    of the exponential model (0 = constant power, 2 = constant impedance).
    """

    id: str
    bus: str
    configuration: str  # WYE or DELTA
    model: str  # CONSTANT_POWER or EXPONENTIAL
    phases: str
    s0: np.ndarray
    v0mag: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True, eq=False)
class Network:
    """A validated-by-convention radial network; immutable and thread-safe."""

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    shunts: tuple[ShuntDevice, ...]
    loads: tuple[LoadSpec, ...]
    root: str
    sbase_kva: float = 1000.0
    vbase_kv: object = None  # number or {bus: kV}; echoed through on output

    @cached_property
    def bus_index(self) -> dict[str, Bus]:
        return {b.id: b for b in self.buses}

    @cached_property
    def slack_bus(self) -> Bus:
        return self.bus_index[self.root]

    def bus(self, bus_id: str) -> Bus:
        return self.bus_index[bus_id]

    def loads_at(self, bus_id: str) -> list[LoadSpec]:
        return [l for l in self.loads if l.bus == bus_id]

    def shunts_at(self, bus_id: str) -> list[ShuntDevice]:
        return [s for s in self.shunts if s.bus == bus_id]


def make_bus(bus_id, phases="abc", vmin=0.8, vmax=1.2, is_slack=False, vref=None) -> Bus:
    """Build a Bus from scalar or per-phase bounds, zero-padding absent phases."""
    phases = normalize_phases(phases)
    mask = phase_mask(phases)
    lo = np.where(mask, np.broadcast_to(np.asarray(vmin, dtype=float), 3), 0.0)
    hi = np.where(mask, np.broadcast_to(np.asarray(vmax, dtype=float), 3), 0.0)
    v = None
    if vref is not None:
        v = np.where(mask, _as_cvec(vref), 0.0)
    return Bus(str(bus_id), phases, lo, hi, bool(is_slack), v)


def make_line(line_id, from_bus, to_bus, phases="abc", z=None, ysh_from=None, ysh_to=None) -> Line:
    """Build a Line; ``z`` may be a scalar (applied to the diagonal) or 3x3."""
    phases = normalize_phases(phases)
    mask = phase_mask(phases)
    box = np.outer(mask, mask)
    z = np.asarray(z if z is not None else 0, dtype=complex)
    if z.ndim == 0:
        z = np.diag(np.where(mask, complex(z), 0.0))
    z = np.where(box, _as_cmat(z), 0.0)
    yf = np.where(box, _as_cmat(ysh_from if ysh_from is not None else np.zeros((3, 3))), 0.0)
    yt = np.where(box, _as_cmat(ysh_to if ysh_to is not None else np.zeros((3, 3))), 0.0)
    return Line(str(line_id), str(from_bus), str(to_bus), phases, z, yf, yt)


def make_load(load_id, bus, configuration=WYE, model=CONSTANT_POWER, phases="abc",
              s0=0.0, v0mag=None, alpha=0.0, beta=0.0) -> LoadSpec:
    """Build a LoadSpec with broadcasting and off-phase zero padding.

    ``v0mag`` defaults to 1.0 for wye loads and sqrt(3) for delta loads (the
    balanced line-to-line magnitude in line-to-neutral per-unit).
    """
    phases = normalize_phases(phases)
    mask = phase_mask(phases)
    if v0mag is None:
        v0mag = np.sqrt(3.0) if configuration == DELTA else 1.0
    s0 = np.where(mask, np.broadcast_to(np.asarray(s0, dtype=complex), 3), 0.0)
    v0 = np.where(mask, np.broadcast_to(np.asarray(v0mag, dtype=float), 3), 0.0)
    al = np.where(mask, np.broadcast_to(np.asarray(alpha, dtype=float), 3), 0.0)
    be = np.where(mask, np.broadcast_to(np.asarray(beta, dtype=float), 3), 0.0)
    return LoadSpec(str(load_id), str(bus), configuration, model, phases, s0, v0, al, be)


def make_shunt(shunt_id, bus, y) -> ShuntDevice:
    return ShuntDevice(str(shunt_id), str(bus), _as_cmat(y))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    element: str
    message: str

    def __str__(self):
        return f"{self.element}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "network valid"
        return "\n".join(str(v) for v in self.violations)


class ValidationError(ValueError):
    """Raised when an operation requires a valid network but got violations."""

    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__(str(report))


class CycleDetected(ValueError):
    """The line graph is not a tree (cycle or disconnected component)."""


def _zero_outside(mat: np.ndarray, phases: str) -> bool:
    mask = phase_mask(phases)
    box = np.outer(mask, mask)
    return bool(np.all(mat[~box] == 0))


def validate(network: Network) -> ValidationReport:
    """Check every structural invariant; returns a report, never raises.

    The report is empty exactly when the network is a single-slack radial
    grid whose per-element phase sets, matrix paddings and load parameters
    are mutually consistent.
    """
    out: list[Violation] = []
    add = lambda el, msg: out.append(Violation(el, msg))

    ids = [b.id for b in network.buses]
    if len(set(ids)) != len(ids):
        add("network", "duplicate bus ids")
    by_id = {b.id: b for b in network.buses}

    slacks = [b for b in network.buses if b.is_slack]
    if len(slacks) != 1:
        add("network", f"expected exactly one slack bus, found {len(slacks)}")
    if network.root not in by_id:
        add("network", f"root bus {network.root!r} does not exist")
    elif not by_id[network.root].is_slack:
        add(network.root, "root bus is not marked as slack")

    for b in network.buses:
        if not b.phases:
            add(b.id, "bus has an empty phase set")
        mask = phase_mask(b.phases)
        if np.any(b.vmin[mask] > b.vmax[mask]):
            add(b.id, "vmin exceeds vmax on a present phase")
        if b.is_slack:
            if b.vref is None:
                add(b.id, "slack bus carries no reference voltage")
            else:
                if np.any(b.vref[~mask] != 0):
                    add(b.id, "reference voltage nonzero on an absent phase")
                if np.any(np.abs(b.vref[mask]) <= 0):
                    add(b.id, "reference voltage is zero on a present phase")
        elif b.vref is not None:
            add(b.id, "non-slack bus carries a reference voltage")

    line_ids = [e.id for e in network.lines]
    if len(set(line_ids)) != len(line_ids):
        add("network", "duplicate line ids")
    for e in network.lines:
        for end in (e.from_bus, e.to_bus):
            if end not in by_id:
                add(e.id, f"endpoint {end!r} is not a bus")
        if e.from_bus == e.to_bus:
            add(e.id, "line connects a bus to itself")
        for end in (e.from_bus, e.to_bus):
            if end in by_id and not set(e.phases) <= set(by_id[end].phases):
                add(e.id, f"line phases {e.phases!r} not a subset of bus {end} phases")
        if not _zero_outside(e.z_series, e.phases):
            add(e.id, "z_series has nonzero entries outside the line's phases")
        if not (_zero_outside(e.ysh_from, e.phases) and _zero_outside(e.ysh_to, e.phases)):
            add(e.id, "shunt admittance nonzero outside the line's phases")
        idx = phase_indices(e.phases)
        if idx:
            sub = e.z_series[np.ix_(idx, idx)]
            if abs(np.linalg.det(sub)) < 1e-300:
                add(e.id, "z_series restricted to the line's phases is singular")

    for s in network.shunts:
        if s.bus not in by_id:
            add(s.id, f"shunt bus {s.bus!r} does not exist")
        elif not _zero_outside(s.y, by_id[s.bus].phases):
            add(s.id, "admittance nonzero on a phase absent at the bus")

    for l in network.loads:
        if l.bus not in by_id:
            add(l.id, f"load bus {l.bus!r} does not exist")
            continue
        bus_ph = set(by_id[l.bus].phases)
        if l.configuration == WYE:
            if not set(l.phases) <= bus_ph:
                add(l.id, f"wye load phases {l.phases!r} not present at bus {l.bus}")
        elif l.configuration == DELTA:
            for p in l.phases:
                ph = Phase[p]
                need = {ph.name, ph.successor.name}
                if not need <= bus_ph:
                    add(l.id, f"delta branch {p} requires phases "
                              f"{{{ph.name},{ph.successor.name}}} at bus {l.bus}")
        else:
            add(l.id, f"unknown configuration {l.configuration!r}")
        if l.model not in (CONSTANT_POWER, EXPONENTIAL):
            add(l.id, f"unknown load model {l.model!r}")
        mask = phase_mask(l.phases)
        for name, arr in (("s0", l.s0), ("alpha", l.alpha), ("beta", l.beta)):
            if np.any(arr[~mask] != 0):
                add(l.id, f"{name} nonzero on an absent phase/branch")
        if np.any(l.alpha < 0) or np.any(l.beta < 0):
            add(l.id, "negative voltage exponent")
        if np.any(l.v0mag[mask] <= 0):
            add(l.id, "v0mag must be positive on present phases/branches")

    # Tree shape: connected with exactly n-1 lines, at least one line.
    n = len(network.buses)
    if n < 2:
        add("network", "degenerate network: fewer than two buses")
    if len(network.lines) != n - 1:
        add("network", f"not a tree: {len(network.lines)} lines for {n} buses")
    elif n >= 2 and network.root in by_id:
        adjacency: dict[str, list[tuple[str, Line]]] = {b.id: [] for b in network.buses}
        usable = all(e.from_bus in by_id and e.to_bus in by_id for e in network.lines)
        if usable:
            for e in network.lines:
                adjacency[e.from_bus].append((e.to_bus, e))
                adjacency[e.to_bus].append((e.from_bus, e))
            seen = {network.root}
            frontier = [network.root]
            parent_line: dict[str, Line] = {}
            while frontier:
                u = frontier.pop()
                for v, e in adjacency[u]:
                    if e is parent_line.get(u):
                        continue
                    if v in seen:
                        add("network", "not a tree: cycle involving line " + e.id)
                        frontier = []
                        break
                    seen.add(v)
                    parent_line[v] = e
                    frontier.append(v)
            else:
                if len(seen) != n:
                    missing = sorted(set(by_id) - seen)
                    add("network", f"disconnected / not a tree: unreachable buses {missing}")
                else:
                    # Each non-root bus must be fully energized through its
                    # parent line, otherwise some phase has no supply path.
                    for bid, e in parent_line.items():
                        extra = set(by_id[bid].phases) - set(e.phases)
                        if extra:
                            add(bid, f"phases {''.join(sorted(extra))} not fed by "
                                     f"parent line {e.id}")

    return ValidationReport(tuple(out))


# ---------------------------------------------------------------------------
# Orientation and leaves
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OrientedTree:
    """Root-oriented view of the network: parents, children, topological order.

    ``lines`` holds one Line per original line with ``from_bus`` on the
    parent side (shunt halves swapped when the stored direction is flipped),
    in the order the child bus appears in ``order``.
    """

    root: str
    order: tuple[str, ...]
    parent: dict[str, str | None]
    parent_line: dict[str, Line]
    children: dict[str, tuple[str, ...]]
    lines: tuple[Line, ...]


def orient_toward_root(network: Network) -> OrientedTree:
    """BFS from the slack bus; normalizes every line to point parent -> child."""
    adjacency: dict[str, list[tuple[str, Line]]] = {b.id: [] for b in network.buses}
    for e in network.lines:
        adjacency[e.from_bus].append((e.to_bus, e))
        adjacency[e.to_bus].append((e.from_bus, e))

    order = [network.root]
    parent: dict[str, str | None] = {network.root: None}
    entered_by: dict[str, Line] = {}  # stored line object used to reach a bus
    parent_line: dict[str, Line] = {}
    children: dict[str, list[str]] = {b.id: [] for b in network.buses}
    oriented: list[Line] = []

    head = 0
    while head < len(order):
        u = order[head]
        head += 1
        for v, e in adjacency[u]:
            if e is entered_by.get(u):
                continue
            if v in parent:
                raise CycleDetected(f"cycle detected at line {e.id}")
            parent[v] = u
            entered_by[v] = e
            children[u].append(v)
            if e.from_bus == u:
                oe = e
            else:  # flip the stored direction; shunt halves swap ends
                oe = Line(e.id, u, v, e.phases, e.z_series, e.ysh_to, e.ysh_from)
            parent_line[v] = oe
            oriented.append(oe)
            order.append(v)

    if len(order) != len(network.buses):
        missing = sorted(set(b.id for b in network.buses) - set(order))
        raise CycleDetected(f"not a tree: unreachable buses {missing}")

    return OrientedTree(
        root=network.root,
        order=tuple(order),
        parent=parent,
        parent_line=parent_line,
        children={k: tuple(v) for k, v in children.items()},
        lines=tuple(oriented),
    )


def leaf_buses(network: Network) -> set[str]:
    """Buses of degree one, excluding the root."""
    degree: dict[str, int] = {b.id: 0 for b in network.buses}
    for e in network.lines:
        degree[e.from_bus] += 1
        degree[e.to_bus] += 1
    return {bid for bid, d in degree.items() if d == 1 and bid != network.root}
