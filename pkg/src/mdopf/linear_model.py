"""Assembly and direct solution of the linearized multiphase branch-flow model.

The model propagates full Hermitian voltage outer-product matrices W down the
tree with lossless flows: for each line the drop is

    W_child = W_parent - M Z^H - Z M^H,   M = BALANCED_RATIOS * diag(S),

bus power balance couples flows, shunt terms diag(W Y^H), load withdrawals
and the slack injection, and loads close the system through the tangent-line
exponential model, the wye identity S_b = S_d, and the linear delta power
mapping. With a single slack source the equalities form a square nonsingular
real system, solved here by sparse LU; there is no dispatch freedom, so the
"optimal" objective (total slack active power) is simply evaluated.

Complex quantities are split into real pairs; each bus contributes 9 reals
(3 diagonal + 3 complex upper-triangle entries of W), each line 6 (complex
flow per phase), each load 15 (branch power, bus power, squared voltage) and
the slack 6. Absent-phase slots are pinned to zero by explicit rows, keeping
the system square for any phase configuration.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import loads as load_models
from .deltawye import BALANCED_RATIOS, DELTA_POWER_MAP
from .network import (
    EXPONENTIAL,
    Network,
    OrientedTree,
    ValidationError,
    WYE,
    orient_toward_root,
    phase_indices,
    phase_mask,
    validate,
)

LOAD_MODE_CONSTANT = "constant"
LOAD_MODE_LINEARIZED = "linearized_exponential"

# Storage order of the W upper triangle: (a,b), (b,c), (a,c).
_OFF_PAIRS = ((0, 1), (1, 2), (0, 2))
_OFF_SLOT = {pair: 3 + 2 * k for k, pair in enumerate(_OFF_PAIRS)}


class NonSquareSystem(ValueError):
    """The assembled equalities are not square (unsupported dispatch freedom)."""


class StructurallySingular(ValueError):
    """A variable or equation is structurally disconnected from the system."""


class NumericallySingular(ValueError):
    """Sparse factorization failed or the solution residual is not small."""


@dataclass
class ModelConfig:
    """Which linear model to assemble.

    ``constant`` fixes every load at its nominal power;
    ``linearized_exponential`` applies the tangent-line exponential model to
    loads declared exponential. ``delta_as_wye`` mis-models delta loads as
    wye-connected (ablation). ``linearization_point`` scales the tangent
    point relative to each load's own reference voltage squared.
    """

    load_mode: str = LOAD_MODE_LINEARIZED
    delta_as_wye: bool = False
    linearization_point: float = 1.0


class _Builder:
    """Accumulates real-valued sparse rows from real and complex equations."""

    def __init__(self):
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.rhs: list[float] = []

    def real_eq(self, terms, rhs=0.0) -> int:
        r = len(self.rhs)
        for col, coeff in terms:
            if coeff != 0.0:
                self.rows.append(r)
                self.cols.append(col)
                self.vals.append(float(coeff))
        self.rhs.append(float(rhs))
        return r

    def complex_eq(self, cvars, rvars=(), rhs=0j) -> tuple[int, int]:
        """Emit Re/Im rows of sum(c*x or c*conj(x)) + sum(e*t) = rhs.

        ``cvars``: (re_col, im_col, complex_coeff, conjugated) over complex
        variables; ``rvars``: (col, complex_coeff) over real variables.
        """
        re_terms, im_terms = [], []
        for re_col, im_col, c, conj in cvars:
            cr, ci = c.real, c.imag
            if conj:
                re_terms += [(re_col, cr), (im_col, ci)]
                im_terms += [(re_col, ci), (im_col, -cr)]
            else:
                re_terms += [(re_col, cr), (im_col, -ci)]
                im_terms += [(re_col, ci), (im_col, cr)]
        for col, e in rvars:
            re_terms.append((col, e.real))
            im_terms.append((col, e.imag))
        r1 = self.real_eq(re_terms, rhs.real)
        r2 = self.real_eq(im_terms, rhs.imag)
        return r1, r2


@dataclass(eq=False)
class _VarIndex:
    """Column layout: bus W blocks, line flows, load blocks, slack injection."""

    bus_pos: dict[str, int]
    line_pos: dict[str, int]
    load_pos: dict[str, int]
    n_bus: int
    n_line: int
    n_load: int

    @property
    def nvars(self) -> int:
        return 9 * self.n_bus + 6 * self.n_line + 15 * self.n_load + 6

    def w_diag(self, bus: str, phi: int) -> int:
        return 9 * self.bus_pos[bus] + phi

    def w_off(self, bus: str, phi: int, psi: int) -> tuple[int, int, bool]:
        """(re_col, im_col, conjugated) for entry W[phi, psi], phi != psi."""
        base = 9 * self.bus_pos[bus]
        if (phi, psi) in _OFF_SLOT:
            s = base + _OFF_SLOT[(phi, psi)]
            return s, s + 1, False
        s = base + _OFF_SLOT[(psi, phi)]
        return s, s + 1, True

    def flow(self, line: str, phi: int) -> tuple[int, int]:
        base = 9 * self.n_bus + 6 * self.line_pos[line]
        return base + 2 * phi, base + 2 * phi + 1

    def _load_base(self, load: str) -> int:
        return 9 * self.n_bus + 6 * self.n_line + 15 * self.load_pos[load]

    def sd(self, load: str, phi: int) -> tuple[int, int]:
        base = self._load_base(load)
        return base + 2 * phi, base + 2 * phi + 1

    def sb(self, load: str, phi: int) -> tuple[int, int]:
        base = self._load_base(load) + 6
        return base + 2 * phi, base + 2 * phi + 1

    def v_load(self, load: str, phi: int) -> int:
        return self._load_base(load) + 12 + phi

    def slack(self, phi: int) -> tuple[int, int]:
        base = 9 * self.n_bus + 6 * self.n_line + 15 * self.n_load
        return base + 2 * phi, base + 2 * phi + 1


@dataclass(eq=False)
class SparseLinearSystem:
    """A square real system M x = r with bookkeeping to unpack the solution.

    ``slack_rhs_plan`` records which right-hand-side entries encode the slack
    reference voltage, so sweeps can retarget the reference without
    reassembling or refactorizing.
    """

    matrix: sp.csc_matrix
    rhs: np.ndarray
    index: _VarIndex
    tree: OrientedTree
    network: Network
    config: ModelConfig
    slack_rhs_plan: list[tuple[int, str, int, int]]
    _lu: object = field(default=None, repr=False)

    @property
    def lu(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.matrix)
            except RuntimeError as exc:
                raise NumericallySingular(str(exc)) from exc
        return self._lu

    def set_vref(self, vref: np.ndarray) -> None:
        """Re-point the slack reference voltage; matrix and LU stay valid."""
        vref = np.asarray(vref, dtype=complex)
        for row, kind, phi, psi in self.slack_rhs_plan:
            if kind == "diag":
                self.rhs[row] = abs(vref[phi]) ** 2
            elif kind == "off_re":
                self.rhs[row] = (vref[phi] * np.conj(vref[psi])).real
            else:
                self.rhs[row] = (vref[phi] * np.conj(vref[psi])).imag


@dataclass(eq=False)
class LinearSolution:
    """Solution of the linear model, keyed by element id.

    ``w`` maps each bus to its full Hermitian 3x3 matrix (absent phases
    zero), ``s_flow`` each line to the complex flow oriented parent->child
    (the reverse flow is its negation: the model is lossless), ``sd``/``sb``
    each load to branch and bus powers and ``v_load`` to the squared applied
    voltage. ``objective`` is the total slack active power.
    """

    w: dict[str, np.ndarray]
    s_flow: dict[str, np.ndarray]
    sd: dict[str, np.ndarray]
    sb: dict[str, np.ndarray]
    v_load: dict[str, np.ndarray]
    s_slack: np.ndarray
    objective: float
    network: Network
    tree: OrientedTree
    config: ModelConfig
    solve_ms: float = 0.0


def assemble(network: Network, config: ModelConfig | None = None) -> SparseLinearSystem:
    """Build the square sparse system for the configured linear model."""
    config = config or ModelConfig()
    report = validate(network)
    if not report.ok:
        raise ValidationError(report)
    tree = orient_toward_root(network)

    index = _VarIndex(
        bus_pos={bid: k for k, bid in enumerate(tree.order)},
        line_pos={e.id: k for k, e in enumerate(tree.lines)},
        load_pos={l.id: k for k, l in enumerate(network.loads)},
        n_bus=len(tree.order),
        n_line=len(tree.lines),
        n_load=len(network.loads),
    )
    b = _Builder()
    slack_plan: list[tuple[int, str, int, int]] = []

    root = network.slack_bus
    root_idx = set(phase_indices(root.phases))
    vref = root.vref

    # --- slack bus: W pinned to the reference outer product
    for phi in range(3):
        if phi in root_idx:
            r = b.real_eq([(index.w_diag(root.id, phi), 1.0)], abs(vref[phi]) ** 2)
            slack_plan.append((r, "diag", phi, phi))
        else:
            b.real_eq([(index.w_diag(root.id, phi), 1.0)], 0.0)
    for phi, psi in _OFF_PAIRS:
        re_col, im_col, _ = index.w_off(root.id, phi, psi)
        if phi in root_idx and psi in root_idx:
            val = vref[phi] * np.conj(vref[psi])
            r1 = b.real_eq([(re_col, 1.0)], val.real)
            r2 = b.real_eq([(im_col, 1.0)], val.imag)
            slack_plan.append((r1, "off_re", phi, psi))
            slack_plan.append((r2, "off_im", phi, psi))
        else:
            b.real_eq([(re_col, 1.0)], 0.0)
            b.real_eq([(im_col, 1.0)], 0.0)

    # --- per line: Hermitian drop equation for the child W, plus zero flows
    for line in tree.lines:
        child = line.to_bus
        child_idx = set(phase_indices(network.bus(child).phases))
        line_idx = phase_indices(line.phases)
        z = line.z_series

        for phi in range(3):
            if phi in child_idx:
                terms = [(index.w_diag(child, phi), 1.0),
                         (index.w_diag(line.from_bus, phi), -1.0)]
                for k in line_idx:
                    c = BALANCED_RATIOS[phi, k] * np.conj(z[phi, k])
                    re_col, im_col = index.flow(line.id, k)
                    terms += [(re_col, 2 * c.real), (im_col, -2 * c.imag)]
                b.real_eq(terms, 0.0)
            else:
                b.real_eq([(index.w_diag(child, phi), 1.0)], 0.0)
        for phi, psi in _OFF_PAIRS:
            re_c, im_c, _ = index.w_off(child, phi, psi)
            if phi in child_idx and psi in child_idx:
                re_p, im_p, _ = index.w_off(line.from_bus, phi, psi)
                cvars = [(re_c, im_c, 1.0 + 0j, False), (re_p, im_p, -1.0 + 0j, False)]
                for k in line_idx:
                    re_s, im_s = index.flow(line.id, k)
                    c1 = BALANCED_RATIOS[phi, k] * np.conj(z[psi, k])
                    c2 = z[phi, k] * np.conj(BALANCED_RATIOS[psi, k])
                    if c1 != 0:
                        cvars.append((re_s, im_s, c1, False))
                    if c2 != 0:
                        cvars.append((re_s, im_s, c2, True))
                b.complex_eq(cvars)
            else:
                b.real_eq([(re_c, 1.0)], 0.0)
                b.real_eq([(im_c, 1.0)], 0.0)
        for phi in range(3):
            if phi not in set(line_idx):
                re_s, im_s = index.flow(line.id, phi)
                b.real_eq([(re_s, 1.0)], 0.0)
                b.real_eq([(im_s, 1.0)], 0.0)

    # --- per bus: complex power balance on present phases
    lines_from: dict[str, list] = {bid: [] for bid in tree.order}
    lines_to: dict[str, list] = {bid: [] for bid in tree.order}
    for line in tree.lines:
        lines_from[line.from_bus].append(line)
        lines_to[line.to_bus].append(line)

    for bid in tree.order:
        bus = network.bus(bid)
        bus_idx = phase_indices(bus.phases)
        for phi in bus_idx:
            cvars = []
            rvars = []
            for line, sign, ysh in (
                [(e, 1.0, e.ysh_from) for e in lines_from[bid]]
                + [(e, -1.0, e.ysh_to) for e in lines_to[bid]]
            ):
                if phi in phase_indices(line.phases):
                    re_s, im_s = index.flow(line.id, phi)
                    cvars.append((re_s, im_s, complex(sign), False))
                _w_quadratic_terms(index, bid, phi, bus_idx, ysh, cvars, rvars)
            for shunt in network.shunts_at(bid):
                _w_quadratic_terms(index, bid, phi, bus_idx, shunt.y, cvars, rvars)
            for load in network.loads_at(bid):
                re_b, im_b = index.sb(load.id, phi)
                cvars.append((re_b, im_b, 1.0 + 0j, False))
            if bid == network.root:
                re_g, im_g = index.slack(phi)
                cvars.append((re_g, im_g, -1.0 + 0j, False))
            b.complex_eq(cvars, rvars)

    # --- per load: applied voltage, branch power model, bus power coupling
    for load in network.loads:
        load_idx = set(phase_indices(load.phases))
        as_wye = load.configuration == WYE or config.delta_as_wye
        linearized = (config.load_mode == LOAD_MODE_LINEARIZED
                      and load.model == EXPONENTIAL)
        sp_, cp_, sq_, cq_ = load_models.linear_power_coefficients(
            load, config.linearization_point)

        for phi in range(3):
            re_d, im_d = index.sd(load.id, phi)
            v_col = index.v_load(load.id, phi)
            if phi not in load_idx:
                b.real_eq([(re_d, 1.0)], 0.0)
                b.real_eq([(im_d, 1.0)], 0.0)
                b.real_eq([(v_col, 1.0)], 0.0)
                continue
            scale = 1.0 if as_wye else 3.0
            b.real_eq([(v_col, 1.0), (index.w_diag(load.bus, phi), -scale)], 0.0)
            if linearized:
                b.real_eq([(re_d, 1.0), (v_col, -sp_[phi])], cp_[phi])
                b.real_eq([(im_d, 1.0), (v_col, -sq_[phi])], cq_[phi])
            else:
                b.real_eq([(re_d, 1.0)], load.s0[phi].real)
                b.real_eq([(im_d, 1.0)], load.s0[phi].imag)

        if as_wye:
            for phi in range(3):
                re_d, im_d = index.sd(load.id, phi)
                re_b, im_b = index.sb(load.id, phi)
                b.real_eq([(re_b, 1.0), (re_d, -1.0)], 0.0)
                b.real_eq([(im_b, 1.0), (im_d, -1.0)], 0.0)
        else:
            # Six rows of A x_bus = B x_branch over (p_a,p_b,p_c,q_a,q_b,q_c).
            for r in range(6):
                terms = []
                for phi in range(3):
                    re_b, im_b = index.sb(load.id, phi)
                    re_d, im_d = index.sd(load.id, phi)
                    terms += [
                        (re_b, DELTA_POWER_MAP.bus_coeffs[r, phi]),
                        (im_b, DELTA_POWER_MAP.bus_coeffs[r, 3 + phi]),
                        (re_d, -DELTA_POWER_MAP.branch_coeffs[r, phi]),
                        (im_d, -DELTA_POWER_MAP.branch_coeffs[r, 3 + phi]),
                    ]
                b.real_eq(terms, 0.0)

    # --- slack injection pinned to zero on absent phases
    for phi in range(3):
        if phi not in root_idx:
            re_g, im_g = index.slack(phi)
            b.real_eq([(re_g, 1.0)], 0.0)
            b.real_eq([(im_g, 1.0)], 0.0)

    n_eq, n_var = len(b.rhs), index.nvars
    if n_eq != n_var:
        raise NonSquareSystem(f"{n_eq} equations for {n_var} unknowns")
    matrix = sp.coo_matrix(
        (b.vals, (b.rows, b.cols)), shape=(n_eq, n_var)).tocsc()
    touched_cols = np.zeros(n_var, dtype=bool)
    touched_cols[np.asarray(b.cols, dtype=int)] = True
    row_counts = np.zeros(n_eq, dtype=int)
    np.add.at(row_counts, np.asarray(b.rows, dtype=int), 1)
    if not touched_cols.all() or not (row_counts > 0).all():
        raise StructurallySingular("empty row or column in assembled system")

    return SparseLinearSystem(
        matrix=matrix,
        rhs=np.asarray(b.rhs, dtype=float),
        index=index,
        tree=tree,
        network=network,
        config=config,
        slack_rhs_plan=slack_plan,
    )


def _w_quadratic_terms(index, bid, phi, bus_idx, y, cvars, rvars):
    """Append the terms of diag(W Y^H)_phi = sum_k W[phi,k] conj(Y[phi,k])."""
    for k in bus_idx:
        coeff = np.conj(y[phi, k])
        if coeff == 0:
            continue
        if k == phi:
            rvars.append((index.w_diag(bid, phi), coeff))
        else:
            re_col, im_col, conj = index.w_off(bid, phi, k)
            cvars.append((re_col, im_col, coeff, conj))


def solve(system: SparseLinearSystem) -> LinearSolution:
    """Factorize (cached) and solve, verify the residual, unpack by element."""
    t0 = time.perf_counter()
    x = system.lu.solve(system.rhs)
    if not np.all(np.isfinite(x)):
        raise NumericallySingular("non-finite solution from factorization")
    residual = np.abs(system.matrix @ x - system.rhs).max()
    if residual > 1e-9 * max(1.0, np.abs(system.rhs).max()):
        raise NumericallySingular(f"solution residual {residual:.3e} too large")
    ms = (time.perf_counter() - t0) * 1e3

    network, index = system.network, system.index
    w: dict[str, np.ndarray] = {}
    for bid in system.tree.order:
        mat = np.zeros((3, 3), dtype=complex)
        for phi in range(3):
            mat[phi, phi] = x[index.w_diag(bid, phi)]
        for phi, psi in _OFF_PAIRS:
            re_col, im_col, _ = index.w_off(bid, phi, psi)
            val = x[re_col] + 1j * x[im_col]
            mat[phi, psi] = val
            mat[psi, phi] = np.conj(val)
        mask = phase_mask(network.bus(bid).phases)
        w[bid] = mat * np.outer(mask, mask)

    s_flow: dict[str, np.ndarray] = {}
    for line in system.tree.lines:
        vec = np.zeros(3, dtype=complex)
        for phi in phase_indices(line.phases):
            re_col, im_col = index.flow(line.id, phi)
            vec[phi] = x[re_col] + 1j * x[im_col]
        s_flow[line.id] = vec

    sd, sb, v_load = {}, {}, {}
    for load in network.loads:
        d = np.zeros(3, dtype=complex)
        bvec = np.zeros(3, dtype=complex)
        vv = np.zeros(3)
        for phi in range(3):
            re_d, im_d = index.sd(load.id, phi)
            re_b, im_b = index.sb(load.id, phi)
            d[phi] = x[re_d] + 1j * x[im_d]
            bvec[phi] = x[re_b] + 1j * x[im_b]
            vv[phi] = x[index.v_load(load.id, phi)]
        sd[load.id], sb[load.id], v_load[load.id] = d, bvec, vv

    s_slack = np.zeros(3, dtype=complex)
    for phi in phase_indices(network.slack_bus.phases):
        re_g, im_g = index.slack(phi)
        s_slack[phi] = x[re_g] + 1j * x[im_g]

    return LinearSolution(
        w=w, s_flow=s_flow, sd=sd, sb=sb, v_load=v_load,
        s_slack=s_slack, objective=float(s_slack.real.sum()),
        network=network, tree=system.tree, config=system.config, solve_ms=ms,
    )


@dataclass(frozen=True)
class LimitViolation:
    bus: str
    phase: str
    w: float
    lo: float  # vmin**2
    hi: float  # vmax**2
    amount: float  # violation magnitude in squared-voltage units


@dataclass(frozen=True)
class LimitReport:
    violations: tuple[LimitViolation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def check_operational_limits(solution: LinearSolution, network: Network) -> LimitReport:
    """Report every squared voltage magnitude outside its bus bounds.

    Bounds are reported, not enforced: the determined system has no dispatch
    freedom to push voltages back inside.
    """
    out = []
    for bus in network.buses:
        diag = np.diag(solution.w[bus.id]).real
        for phi in phase_indices(bus.phases):
            lo, hi = bus.vmin[phi] ** 2, bus.vmax[phi] ** 2
            wval = diag[phi]
            if wval < lo or wval > hi:
                amount = max(lo - wval, wval - hi)
                out.append(LimitViolation(bus.id, "abc"[phi], wval, lo, hi, amount))
    return LimitReport(tuple(out))
