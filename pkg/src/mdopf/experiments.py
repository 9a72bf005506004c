"""Error metrics, voltage-unbalance machinery and the reproducible studies.

Four studies compare the linear model against the exact sweep oracle: the
nominal comparison, the load-exponent sweep, the reference-voltage unbalance
(VUF) sweep and the reference-magnitude reduction sweep. Every study is
deterministic under a fixed seed and emits a pinned CSV schema; samples
derive independent RNG streams from (seed, target index, sample index), so
serial and parallel runs produce identical files. The environment variable
``MDOPF_THREADS`` caps worker threads (0 = auto, unset = serial).
"""

from __future__ import annotations

import dataclasses
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ac_sweep import (
    LOAD_MODE_CONSTANT as AC_CONSTANT,
    LOAD_MODE_EXPONENTIAL as AC_EXPONENTIAL,
    PhasorState,
    SweepConfig,
    ZeroVoltagePhase,
    sweep_solve,
)
from .deltawye import ROT
from .linear_model import (
    LOAD_MODE_CONSTANT as LP_CONSTANT,
    LOAD_MODE_LINEARIZED as LP_LINEARIZED,
    ModelConfig,
    NumericallySingular,
    assemble,
    solve,
)
from .network import EXPONENTIAL, Network, phase_indices, phase_mask

MODEL_CHOICES = ("lp-d-e", "lp-d", "ac-d-e", "ac-d", "ac-w-e")

_EXCLUDE_FLOOR = 1e-9


class EmptyAfterExclusion(ValueError):
    """No reference component survived the small-magnitude exclusion."""


class ZeroPositiveSequence(ValueError):
    """The positive-sequence component is (numerically) zero."""


class NoFeasibleAngle(RuntimeError):
    """No phase-c angle draw admitted the requested unbalance level."""


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def delta_metric(x_test, x_ref) -> float:
    """Average relative difference in percent, excluding ~zero references.

    Components with |reference| < 1e-9 are excluded from the average (their
    relative error is undefined); at least one component must remain.
    """
    x_test = np.asarray(x_test, dtype=float)
    x_ref = np.asarray(x_ref, dtype=float)
    if x_test.shape != x_ref.shape:
        raise ValueError("test and reference vectors differ in length")
    keep = np.abs(x_ref) >= _EXCLUDE_FLOOR
    if not keep.any():
        raise EmptyAfterExclusion("all reference components below 1e-9")
    return float(np.mean(100.0 * np.abs(x_test[keep] - x_ref[keep]) / np.abs(x_ref[keep])))


def vuf(v) -> float:
    """Voltage unbalance factor in percent: 100 |V_neg| / |V_pos|."""
    v = np.asarray(v, dtype=complex)
    vp = (v[0] + ROT**2 * v[1] + ROT * v[2]) / 3.0
    vn = (v[0] + ROT * v[1] + ROT**2 * v[2]) / 3.0
    if abs(vp) <= 1e-12:
        raise ZeroPositiveSequence("positive-sequence voltage is zero")
    return float(100.0 * abs(vn) / abs(vp))


def squared_voltages(solution) -> np.ndarray:
    """Per-(bus, present phase) squared voltage magnitudes, in tree order."""
    out = []
    for bid in solution.tree.order:
        bus = solution.network.bus(bid)
        if isinstance(solution, PhasorState):
            vals = np.abs(solution.v[bid]) ** 2
        else:
            vals = np.diag(solution.w[bid]).real
        out.extend(vals[phi] for phi in phase_indices(bus.phases))
    return np.asarray(out)


def load_bus_powers(solution) -> tuple[np.ndarray, np.ndarray]:
    """Stacked (active, reactive) bus withdrawals over loads x all phases."""
    p, q = [], []
    for load in solution.network.loads:
        sb = solution.sb[load.id]
        p.extend(sb.real)
        q.extend(sb.imag)
    return np.asarray(p), np.asarray(q)


def total_line_losses(state: PhasorState) -> float:
    """Active power dissipated in series impedances and line charging."""
    total = 0.0
    for line in state.tree.lines:
        i = state.i_line[line.id]
        vf, vt = state.v[line.from_bus], state.v[line.to_bus]
        total += float(np.real(np.sum((vf - vt) * np.conj(i))))
        total += float(np.real(np.sum(vf * np.conj(line.ysh_from @ vf))))
        total += float(np.real(np.sum(vt * np.conj(line.ysh_to @ vt))))
    return total


# ---------------------------------------------------------------------------
# Reference-voltage perturbation
# ---------------------------------------------------------------------------

_THETA_C_MAX = 0.35  # outer bound on the drawn phase-c angle perturbation, rad
_THETA_B_MAX = 0.6   # search bracket for the balancing phase-b angle, rad
_VUF_TOL = 1e-6      # percentage points


def _vuf_curve(vref, tb, tc):
    """vuf of vref with angle offsets tb (array) on phase b, tc on phase c."""
    b = vref[1] * np.exp(1j * np.asarray(tb))
    c = vref[2] * np.exp(1j * tc)
    vp = np.abs(vref[0] + ROT**2 * b + ROT * c) / 3.0
    vn = np.abs(vref[0] + ROT * b + ROT**2 * c) / 3.0
    return 100.0 * vn / vp


_TB_GRID = np.linspace(-_THETA_B_MAX, _THETA_B_MAX, 601)


def _feasible_theta_c(vref, target, sign) -> float:
    """Largest |theta_c| (up to the outer bound) still reaching the target.

    The minimum achievable vuf grows with |theta_c| (roughly 29 %/rad), so
    the feasible set in each direction is an interval found by bisection on
    the minimum of the vuf curve over the theta_b bracket.
    """
    def reachable(tc: float) -> bool:
        return _vuf_curve(vref, _TB_GRID, tc).min() <= target

    hi = _THETA_C_MAX
    if reachable(sign * hi):
        return hi
    lo = 0.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if reachable(sign * mid):
            lo = mid
        else:
            hi = mid
    return lo


def perturb_vref_to_vuf(vref, target_vuf: float, rng_seed) -> np.ndarray:
    """Angle-perturb a balanced reference to an exact unbalance level.

    Draws the phase-c angle offset uniformly from the feasible part of
    [-0.35, 0.35] rad, then bisects the phase-b offset until the unbalance
    matches ``target_vuf`` to 1e-6 percentage points. Magnitudes are
    untouched. Deterministic for a fixed seed.
    """
    vref = np.asarray(vref, dtype=complex)
    if target_vuf == 0:
        return vref.copy()
    if not 0 < target_vuf <= 15:
        raise ValueError(f"target VUF {target_vuf} outside (0, 15]")
    if vuf(vref) > 1e-6:
        raise ValueError("reference voltage must be balanced before perturbation")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) \
        else np.random.default_rng(rng_seed)

    lo = -_feasible_theta_c(vref, target_vuf, -1.0)
    hi = _feasible_theta_c(vref, target_vuf, +1.0)
    for _ in range(50):
        tc = rng.uniform(lo, hi)
        g = _vuf_curve(vref, _TB_GRID, tc) - target_vuf
        sign_change = np.nonzero(g[:-1] * g[1:] <= 0)[0]
        if sign_change.size == 0:
            continue  # redraw: this tc cannot reach the target
        mids = 0.5 * (_TB_GRID[sign_change] + _TB_GRID[sign_change + 1])
        k = int(sign_change[np.argmin(np.abs(mids))])
        ta, tb = _TB_GRID[k], _TB_GRID[k + 1]
        ga = g[k]
        for _ in range(200):
            tm = 0.5 * (ta + tb)
            gm = _vuf_curve(vref, np.array([tm]), tc)[0] - target_vuf
            if abs(gm) <= _VUF_TOL:
                break
            if (ga <= 0) == (gm <= 0):
                ta, ga = tm, gm
            else:
                tb = tm
        else:
            continue  # bisection stalled; redraw
        return vref * np.exp(1j * np.array([0.0, tm, tc]))
    raise NoFeasibleAngle(
        f"no feasible angle perturbation found for VUF={target_vuf}%")


# ---------------------------------------------------------------------------
# Network variants
# ---------------------------------------------------------------------------

def with_vref(network: Network, vref) -> Network:
    """Same network with the slack reference voltage replaced."""
    vref = np.asarray(vref, dtype=complex)
    buses = tuple(
        dataclasses.replace(b, vref=vref * phase_mask(b.phases)) if b.is_slack else b
        for b in network.buses
    )
    return dataclasses.replace(network, buses=buses)


def with_all_loads_exponential(network: Network, exponent: float) -> Network:
    """Same network with every load switched to the exponential model."""
    loads = tuple(
        dataclasses.replace(
            l, model=EXPONENTIAL,
            alpha=np.where(phase_mask(l.phases), float(exponent), 0.0),
            beta=np.where(phase_mask(l.phases), float(exponent), 0.0),
        )
        for l in network.loads
    )
    return dataclasses.replace(network, loads=loads)


# ---------------------------------------------------------------------------
# Model dispatch
# ---------------------------------------------------------------------------

def solve_named_model(network: Network, model: str, tol: float = 1e-10,
                      max_iter: int = 200, linearization_point: float = 1.0):
    """Solve one of the named model variants; returns its solution object."""
    if model == "lp-d-e":
        cfg = ModelConfig(LP_LINEARIZED, False, linearization_point)
        return solve(assemble(network, cfg))
    if model == "lp-d":
        return solve(assemble(network, ModelConfig(LP_CONSTANT, False)))
    if model == "ac-d-e":
        return sweep_solve(network, SweepConfig(tol, max_iter, AC_EXPONENTIAL, False))
    if model == "ac-d":
        return sweep_solve(network, SweepConfig(tol, max_iter, AC_CONSTANT, False))
    if model == "ac-w-e":
        return sweep_solve(network, SweepConfig(tol, max_iter, AC_EXPONENTIAL, True))
    raise ValueError(f"unknown model {model!r}; choices: {', '.join(MODEL_CHOICES)}")


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------

@dataclass
class CompareRecord:
    feeder: str
    model: str
    objective: float | None = None
    dw_pct: float | None = None
    dpb_pct: float | None = None
    dqb_pct: float | None = None
    dobj_pct: float | None = None
    iters: int = 0
    ms: float = 0.0
    converged: bool = False
    error: str | None = None


@dataclass
class ExponentRecord:
    alpha: float
    obj_lp: float | None = None
    obj_ac: float | None = None
    converged_ac: bool = False
    error: str | None = None


@dataclass
class VufSampleRecord:
    target_vuf: float
    sample: int
    dw_pct: float | None
    converged: bool


@dataclass
class VufSummaryRecord:
    target_vuf: float
    stat: str  # min / p10 / median / p90 / max
    dw_pct: float | None
    n_converged: int


@dataclass
class VrefRecord:
    m: float
    dw_pct: float | None
    converged_lp: bool
    converged_ac: bool


def _thread_count() -> int:
    raw = os.environ.get("MDOPF_THREADS")
    if raw is None:
        return 1
    n = int(raw)
    if n == 0:
        return os.cpu_count() or 1
    return max(1, n)


def _parallel_map(fn, items: list) -> list:
    n = min(_thread_count(), max(1, len(items)))
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def run_nominal_comparison(network: Network, models=MODEL_CHOICES,
                           feeder_name: str = "feeder") -> list[CompareRecord]:
    """Solve each model and measure deviations against the exact AC-D-E run."""
    reference = sweep_solve(network, SweepConfig())
    ref_w = squared_voltages(reference)
    ref_p, ref_q = load_bus_powers(reference)

    records = []
    for model in models:
        rec = CompareRecord(feeder=feeder_name, model=model)
        if not reference.converged:
            rec.error = "reference AC-D-E solve did not converge"
            records.append(rec)
            continue
        t0 = time.perf_counter()
        try:
            sol = solve_named_model(network, model)
        except Exception as exc:  # recorded per row; the run continues
            rec.error = f"{type(exc).__name__}: {exc}"
            records.append(rec)
            continue
        rec.ms = (time.perf_counter() - t0) * 1e3
        if isinstance(sol, PhasorState):
            rec.iters = sol.iterations
            rec.converged = sol.converged
            if not sol.converged:
                rec.error = "did not converge"
                records.append(rec)
                continue
            rec.objective = sol.objective
        else:
            rec.converged = True
            rec.objective = sol.objective
        rec.dw_pct = delta_metric(squared_voltages(sol), ref_w)
        if network.loads:
            p, q = load_bus_powers(sol)
            rec.dpb_pct = delta_metric(p, ref_p)
            rec.dqb_pct = delta_metric(q, ref_q)
        else:
            rec.dpb_pct = rec.dqb_pct = 0.0
        ref_obj = reference.objective
        rec.dobj_pct = (100.0 * abs(rec.objective - ref_obj) / abs(ref_obj)
                        if abs(ref_obj) >= _EXCLUDE_FLOOR else 0.0)
        records.append(rec)
    return records


def run_exponent_sweep(network: Network, alphas) -> list[ExponentRecord]:
    """Objective of the linear vs exact model with all loads exponential."""
    records = []
    for alpha in alphas:
        rec = ExponentRecord(alpha=float(alpha))
        try:
            variant = with_all_loads_exponential(network, alpha)
            lp = solve(assemble(variant, ModelConfig()))
            rec.obj_lp = lp.objective
            ac = sweep_solve(variant, SweepConfig())
            rec.converged_ac = ac.converged
            if ac.converged:
                rec.obj_ac = ac.objective
        except Exception as exc:
            rec.error = f"{type(exc).__name__}: {exc}"
        records.append(rec)
    return records


def run_vuf_sweep(network: Network, targets, samples: int = 100, seed: int = 0,
                  ) -> tuple[list[VufSampleRecord], list[VufSummaryRecord]]:
    """Voltage-error growth under increasing reference unbalance.

    For each target VUF, ``samples`` random feasible angle perturbations of
    the reference are applied; both models are solved and the squared-voltage
    deviation recorded. Non-converged samples are flagged and excluded from
    the percentile summaries.
    """
    vref = network.slack_bus.vref
    local = threading.local()

    def lp_system():
        if not hasattr(local, "system"):
            local.system = assemble(network, ModelConfig())
        return local.system

    def run_one(job) -> VufSampleRecord:
        ti, target, si = job
        stream = np.random.default_rng(np.random.SeedSequence([seed, ti, si]))
        try:
            v = perturb_vref_to_vuf(vref, target, stream)
            system = lp_system()
            system.set_vref(v)
            lp = solve(system)
            ac = sweep_solve(with_vref(network, v), SweepConfig())
        except (NoFeasibleAngle, NumericallySingular, ZeroVoltagePhase):
            return VufSampleRecord(float(target), si, None, False)
        if not ac.converged:
            return VufSampleRecord(float(target), si, None, False)
        dw = delta_metric(squared_voltages(lp), squared_voltages(ac))
        return VufSampleRecord(float(target), si, dw, True)

    jobs = [(ti, t, si) for ti, t in enumerate(targets) for si in range(samples)]
    rows = _parallel_map(run_one, jobs)

    summaries = []
    for t in targets:
        vals = np.array([r.dw_pct for r in rows
                         if r.target_vuf == float(t) and r.converged])
        if vals.size:
            stats = np.percentile(vals, [0, 10, 50, 90, 100])
        else:
            stats = [None] * 5
        for name, val in zip(("min", "p10", "median", "p90", "max"), stats):
            summaries.append(VufSummaryRecord(
                float(t), name, None if val is None else float(val), int(vals.size)))
    return rows, summaries


def run_vref_sweep(network: Network, factors) -> list[VrefRecord]:
    """Voltage-error growth as the reference magnitude is scaled down."""
    vref = network.slack_bus.vref
    system = assemble(network, ModelConfig())
    records = []
    for m in factors:
        v = vref * float(m)
        lp = None
        try:
            system.set_vref(v)
            lp = solve(system)
        except NumericallySingular:
            pass
        try:
            ac = sweep_solve(with_vref(network, v), SweepConfig())
            ac_ok = ac.converged
        except ZeroVoltagePhase:  # collapse at extreme loading: flag, no crash
            ac, ac_ok = None, False
        dw = None
        if lp is not None and ac_ok:
            dw = delta_metric(squared_voltages(lp), squared_voltages(ac))
        records.append(VrefRecord(float(m), dw, lp is not None, ac_ok))
    return records


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return "" if x is None else f"{float(x):.9f}"


def _fmt_bool(x) -> str:
    return "true" if x else "false"


def _write_lines(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("\n".join(lines) + "\n")


def write_compare_csv(records: list[CompareRecord], path) -> None:
    lines = ["feeder,model,objective,dw_pct,dpb_pct,dqb_pct,iters,ms"]
    for r in records:
        lines.append(f"{r.feeder},{r.model},{_fmt(r.objective)},{_fmt(r.dw_pct)},"
                     f"{_fmt(r.dpb_pct)},{_fmt(r.dqb_pct)},{r.iters},{r.ms:.3f}")
    _write_lines(path, lines)


def write_exponent_csv(records: list[ExponentRecord], path) -> None:
    lines = ["alpha,obj_lp,obj_ac"]
    for r in records:
        lines.append(f"{_fmt(r.alpha)},{_fmt(r.obj_lp)},{_fmt(r.obj_ac)}")
    _write_lines(path, lines)


def write_vuf_csv(rows: list[VufSampleRecord], summaries: list[VufSummaryRecord],
                  path) -> None:
    lines = ["target_vuf,sample,dw_pct,converged"]
    for t in sorted({r.target_vuf for r in rows}):
        for r in (x for x in rows if x.target_vuf == t):
            lines.append(f"{_fmt(r.target_vuf)},{r.sample},{_fmt(r.dw_pct)},"
                         f"{_fmt_bool(r.converged)}")
        for s in (x for x in summaries if x.target_vuf == t):
            lines.append(f"{_fmt(s.target_vuf)},{s.stat},{_fmt(s.dw_pct)},"
                         f"{s.n_converged}")
    _write_lines(path, lines)


def write_vref_csv(records: list[VrefRecord], path) -> None:
    lines = ["m,dw_pct,converged_lp,converged_ac"]
    for r in records:
        lines.append(f"{_fmt(r.m)},{_fmt(r.dw_pct)},{_fmt_bool(r.converged_lp)},"
                     f"{_fmt_bool(r.converged_ac)}")
    _write_lines(path, lines)
