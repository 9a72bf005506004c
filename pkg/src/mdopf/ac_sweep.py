"""Exact nonlinear multiphase power flow by backward/forward phasor sweep.

Serves as ground truth for the linear model: no balanced-voltage or lossless
approximation is made. The network must be radial with a single voltage
source; load powers may depend on the applied voltage through the
exponential model, re-evaluated every outer iteration (Gauss style).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import loads as load_models
from .deltawye import PHASE_TO_BRANCH
from .network import (
    DELTA,
    Network,
    OrientedTree,
    ValidationError,
    orient_toward_root,
    phase_indices,
    phase_mask,
    validate,
)

LOAD_MODE_CONSTANT = "constant"
LOAD_MODE_EXPONENTIAL = "exponential"

_VOLTAGE_FLOOR = 1e-6
_MISMATCH_TARGET = 1e-8


class ZeroVoltagePhase(RuntimeError):
    """A powered load saw a collapsed voltage during iteration."""


@dataclass
class SweepConfig:
    tol: float = 1e-10  # infinity norm of the voltage update
    max_iter: int = 200
    load_mode: str = LOAD_MODE_EXPONENTIAL
    delta_as_wye: bool = False


@dataclass(eq=False)
class PhasorState:
    """Converged (or last) phasor solution keyed by element id.

    ``i_line`` is the series current oriented parent->child, consistent with
    Kirchhoff aggregation at the reported voltages; ``s_slack`` the complex
    injection of the source.
    """

    v: dict[str, np.ndarray]
    i_line: dict[str, np.ndarray]
    sd: dict[str, np.ndarray]
    sb: dict[str, np.ndarray]
    s_slack: np.ndarray
    iterations: int
    converged: bool
    max_mismatch: float
    network: Network
    tree: OrientedTree
    config: SweepConfig

    @property
    def objective(self) -> float:
        return float(self.s_slack.real.sum())


def _load_effective_power(load, v_bus, config) -> tuple[np.ndarray, np.ndarray, bool]:
    """(applied complex voltage, drawn power, acting_as_wye) for one load."""
    as_wye = load.configuration != DELTA or config.delta_as_wye
    applied = v_bus if as_wye else PHASE_TO_BRANCH @ v_bus
    mask = phase_mask(load.phases)
    applied = np.where(mask, applied, 0.0)
    if config.load_mode == LOAD_MODE_CONSTANT:
        s = load.s0.copy()
    else:
        s = load_models.exact_power(load, np.abs(applied) ** 2)
    return applied, s, as_wye


def _load_bus_current(load, v_bus, config) -> np.ndarray:
    """Current drawn from the bus by one load at the given bus voltage."""
    applied, s, as_wye = _load_effective_power(load, v_bus, config)
    powered = np.abs(s) > 0
    if np.any(powered & (np.abs(applied) < _VOLTAGE_FLOOR)):
        phi = int(np.argmax(powered & (np.abs(applied) < _VOLTAGE_FLOOR)))
        raise ZeroVoltagePhase(
            f"load {load.id}: powered {'branch' if not as_wye else 'phase'} "
            f"{'abc'[phi]} sees |V| < {_VOLTAGE_FLOOR:g}")
    i = np.zeros(3, dtype=complex)
    i[powered] = np.conj(s[powered] / applied[powered])
    if as_wye:
        return i
    return PHASE_TO_BRANCH.T @ i


def _device_currents(network, tree, v, config) -> dict[str, np.ndarray]:
    """Per-bus current drawn by loads and shunt devices at voltages ``v``."""
    draw = {bid: np.zeros(3, dtype=complex) for bid in tree.order}
    for load in network.loads:
        draw[load.bus] += _load_bus_current(load, v[load.bus], config)
    for shunt in network.shunts:
        draw[shunt.bus] += shunt.y @ v[shunt.bus]
    return draw


def _aggregate_currents(network, tree, v, draw):
    """Backward pass: series currents leaf->root plus the slack injection."""
    i_line: dict[str, np.ndarray] = {}
    subtree = {bid: draw[bid].copy() for bid in tree.order}
    for bid in reversed(tree.order):
        for child in tree.children[bid]:
            line = tree.parent_line[child]
            i_line[line.id] = subtree[child] + line.ysh_to @ v[child]
            subtree[bid] = subtree[bid] + i_line[line.id] + line.ysh_from @ v[bid]
    i_slack = subtree[network.root]
    return i_line, i_slack


def sweep_solve(network: Network, config: SweepConfig | None = None) -> PhasorState:
    """Fixed-point backward/forward sweep from a flat balanced start.

    Returns a state with ``converged=False`` (never raises) when the
    iteration exhausts ``max_iter`` or the voltages stop being finite, e.g.
    for loadings beyond the feeder's transfer capability.
    """
    config = config or SweepConfig()
    report = validate(network)
    if not report.ok:
        raise ValidationError(report)
    tree = orient_toward_root(network)

    vref = network.slack_bus.vref
    v = {bid: vref * phase_mask(network.bus(bid).phases) for bid in tree.order}
    zinv = {
        line.id: np.linalg.inv(
            line.z_series[np.ix_(phase_indices(line.phases), phase_indices(line.phases))])
        for line in tree.lines
    }

    converged = False
    iterations = 0
    mismatch = np.inf
    while iterations < config.max_iter:
        iterations += 1
        draw = _device_currents(network, tree, v, config)
        i_line, _ = _aggregate_currents(network, tree, v, draw)

        v_new = {network.root: v[network.root]}
        for bid in tree.order[1:]:
            line = tree.parent_line[bid]
            cand = v_new[tree.parent[bid]] - line.z_series @ i_line[line.id]
            v_new[bid] = cand * phase_mask(network.bus(bid).phases)

        if not all(np.all(np.isfinite(val)) for val in v_new.values()):
            break  # diverged; keep the last finite voltages
        delta = max(np.abs(v_new[bid] - v[bid]).max() for bid in tree.order)
        v = v_new
        if delta <= config.tol:
            mismatch = _state_mismatch(network, tree, v, config, zinv)
            if mismatch <= _MISMATCH_TARGET / 2 or iterations == config.max_iter:
                converged = mismatch <= _MISMATCH_TARGET
                break

    draw = _device_currents(network, tree, v, config)
    i_line, i_slack = _aggregate_currents(network, tree, v, draw)
    s_slack = v[network.root] * np.conj(i_slack)

    sd, sb = {}, {}
    for load in network.loads:
        applied, s, _ = _load_effective_power(load, v[load.bus], config)
        ib = _load_bus_current(load, v[load.bus], config)
        sd[load.id] = s
        sb[load.id] = v[load.bus] * np.conj(ib)

    state = PhasorState(
        v=v, i_line=i_line, sd=sd, sb=sb, s_slack=s_slack,
        iterations=iterations, converged=converged,
        max_mismatch=0.0, network=network, tree=tree, config=config,
    )
    state.max_mismatch = power_mismatch(state, network)
    if converged and state.max_mismatch > _MISMATCH_TARGET:
        state.converged = False
    return state


def _ohm_residual(network, tree, v, draw, zinv, s_slack) -> float:
    """Power-balance residual with series currents implied by Ohm's law.

    Aggregated currents satisfy Kirchhoff by construction and would certify
    any voltage profile, so the honest residual rederives each series
    current from the voltage drop across the line and checks bus power
    balance against the given device draws.
    """
    residual = {bid: v[bid] * np.conj(draw[bid]) for bid in tree.order}
    residual[network.root] -= s_slack
    for line in tree.lines:
        idx = phase_indices(line.phases)
        i_ohm = np.zeros(3, dtype=complex)
        i_ohm[idx] = zinv[line.id] @ (v[line.from_bus] - v[line.to_bus])[idx]
        vf, vt = v[line.from_bus], v[line.to_bus]
        residual[line.from_bus] += vf * np.conj(i_ohm + line.ysh_from @ vf)
        residual[line.to_bus] += vt * np.conj(-i_ohm + line.ysh_to @ vt)
    worst = 0.0
    for bid in tree.order:
        mask = phase_mask(network.bus(bid).phases)
        if mask.any():
            worst = max(worst, float(np.abs(residual[bid][mask]).max()))
    return worst


def _state_mismatch(network, tree, v, config, zinv) -> float:
    draw = _device_currents(network, tree, v, config)
    _, i_slack = _aggregate_currents(network, tree, v, draw)
    s_slack = v[network.root] * np.conj(i_slack)
    return _ohm_residual(network, tree, v, draw, zinv, s_slack)


def power_mismatch(state: PhasorState, network: Network) -> float:
    """Infinity norm of the per-bus complex power balance residual.

    Series currents are implied by Ohm's law from the state's voltages and
    device currents are re-evaluated at those voltages, so the residual is
    zero only at an actual power-flow solution (a perturbed voltage on any
    phase is detected).
    """
    tree = state.tree
    zinv = {
        line.id: np.linalg.inv(
            line.z_series[np.ix_(phase_indices(line.phases), phase_indices(line.phases))])
        for line in tree.lines
    }
    draw = _device_currents(network, tree, state.v, state.config)
    return _ohm_residual(network, tree, state.v, draw, zinv, state.s_slack)
