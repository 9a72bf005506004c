"""Delta-connection algebra: exact phasor relations and the linear power map.

A delta-connected device sees line-to-line voltages: branch ``phi`` spans bus
phases ``phi`` and ``phi+1``. Under nearly balanced voltages, branch powers
``sd`` and the powers ``sb`` withdrawn from the bus are tied by a constant
linear system of six real equations in six unknowns; this module builds that
system once and exposes it alongside the exact nonlinear relation used by the
phasor oracle.

A physical caveat: a power component circulating around the delta loop (the
pattern ``z * (1, rot, rot^2)``) draws nothing from the bus, so the bus-side
image never determines branch powers uniquely. The reverse map here returns
the minimum-norm branch assignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Phasor rotation by -120 degrees, the ratio V_b/V_a of a balanced abc set.
ROT = np.exp(-2j * np.pi / 3)

# Entry (i, j) is the balanced-voltage ratio V_i / V_j, so M = V I^H of a
# line is approximately BALANCED_RATIOS * diag(S) when voltages are balanced.
BALANCED_RATIOS = np.array([
    [1.0, ROT**2, ROT],
    [ROT, 1.0, ROT**2],
    [ROT**2, ROT, 1.0],
])

# Maps bus phase voltages to delta branch (line-to-line) voltages.
PHASE_TO_BRANCH = np.array([
    [1.0, -1.0, 0.0],
    [0.0, 1.0, -1.0],
    [-1.0, 0.0, 1.0],
])

_SQRT3 = np.sqrt(3.0)


class SingularBranchVoltage(ValueError):
    """A powered delta branch sees (numerically) zero line-to-line voltage."""


@dataclass(frozen=True, eq=False)
class DeltaPowerMap:
    """The 6x6 system ``bus_coeffs @ x_bus = branch_coeffs @ x_branch``.

    Vectors are stacked as (p_a, p_b, p_c, q_a, q_b, q_c). ``bus_from_branch``
    is the solved forward map, ``branch_from_bus`` its minimum-norm pseudo
    inverse (the circulating component of branch power is unobservable from
    the bus side, so no exact inverse exists).
    """

    bus_coeffs: np.ndarray
    branch_coeffs: np.ndarray
    bus_coeffs_inv: np.ndarray
    bus_from_branch: np.ndarray
    branch_from_bus: np.ndarray


def build_delta_matrix() -> DeltaPowerMap:
    """Construct the constant delta power mapping with a startup self-check."""
    s3 = _SQRT3
    a = np.array([
        [1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        [0.0, 1.5, 0.0, 0.0, -s3 / 2, 0.0],
        [0.0, s3 / 2, 0.0, 0.0, 1.5, 0.0],
        [0.0, 0.0, 1.5, 0.0, s3, -s3 / 2],
        [0.0, -s3, s3 / 2, 0.0, 0.0, 1.5],
    ])
    b = np.array([
        [1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        [0.5, 1.0, 0.0, -s3 / 2, 0.0, 0.0],
        [s3 / 2, 0.0, 0.0, 0.5, 1.0, 0.0],
        [0.5, 0.0, 1.0, s3 / 2, 0.0, 0.0],
        [-s3 / 2, 0.0, 0.0, 0.5, 0.0, 1.0],
    ])
    a_inv = np.linalg.inv(a)
    if np.abs(a_inv @ a - np.eye(6)).max() > 1e-12:
        raise AssertionError("delta mapping matrix failed its inversion self-check")
    forward = a_inv @ b
    return DeltaPowerMap(a, b, a_inv, forward, np.linalg.pinv(forward))


DELTA_POWER_MAP = build_delta_matrix()


def _stack(s: np.ndarray) -> np.ndarray:
    return np.concatenate([s.real, s.imag])


def _unstack(x: np.ndarray) -> np.ndarray:
    return x[:3] + 1j * x[3:]


def delta_to_bus(sd) -> np.ndarray:
    """Bus power withdrawal of a delta device with branch powers ``sd``.

    Exact whenever the bus voltages are exactly balanced; conserves the
    phase-summed complex power for any input.
    """
    return _unstack(DELTA_POWER_MAP.bus_from_branch @ _stack(np.asarray(sd, dtype=complex)))


def bus_to_delta(sb) -> np.ndarray:
    """Minimum-norm branch powers reproducing the bus withdrawal ``sb``.

    The preimage is only defined up to circulating power around the delta
    loop; the returned assignment is the one with no circulating component.
    """
    return _unstack(DELTA_POWER_MAP.branch_from_bus @ _stack(np.asarray(sb, dtype=complex)))


def delta_branch_currents(v, sd) -> np.ndarray:
    """Branch currents drawn by branch powers ``sd`` under bus voltages ``v``.

    Raises SingularBranchVoltage when a powered branch sees a line-to-line
    voltage below 1e-12 of the voltage scale.
    """
    v = np.asarray(v, dtype=complex)
    sd = np.asarray(sd, dtype=complex)
    vbr = PHASE_TO_BRANCH @ v
    powered = np.abs(sd) > 0
    floor = 1e-12 * max(1.0, float(np.abs(v).max()))
    if np.any(powered & (np.abs(vbr) <= floor)):
        bad = int(np.argmax(powered & (np.abs(vbr) <= floor)))
        raise SingularBranchVoltage(
            f"delta branch {'abc'[bad]} is powered but sees ~zero voltage")
    out = np.zeros(3, dtype=complex)
    out[powered] = np.conj(sd[powered] / vbr[powered])
    return out


def exact_delta_bus_power(v, sd) -> np.ndarray:
    """Exact bus power withdrawal of a delta device: S_b = diag(V (L^T I_d)^H)."""
    v = np.asarray(v, dtype=complex)
    ib = PHASE_TO_BRANCH.T @ delta_branch_currents(v, sd)
    return v * np.conj(ib)
