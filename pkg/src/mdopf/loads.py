"""Voltage-dependent load evaluation, exact and linearized.

All functions work on the squared voltage magnitude ``v = |V|**2`` applied to
the load (line-to-neutral for wye, line-to-line for delta), which keeps the
linear model free of square roots. The exponential model is

    p = a * v**(alpha/2),  q = b * v**(beta/2)

with a = p0 / v0mag**alpha and b = q0 / v0mag**beta, so the load draws its
nominal power exactly at |V| = v0mag. The linearization is the tangent at
``point * v0mag**2`` (default: the load's own reference voltage), which is
exact for exponents 0 and 2.
"""

from __future__ import annotations

import numpy as np

from .deltawye import PHASE_TO_BRANCH
from .network import CONSTANT_POWER, DELTA, LoadSpec, phase_mask


class NegativeSquaredVoltage(ValueError):
    """A squared voltage magnitude was negative."""


def load_coefficients(load: LoadSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-phase coefficients (a, b) of the exponential model; zero off-phase."""
    mask = phase_mask(load.phases)
    v0 = np.where(mask, load.v0mag, 1.0)
    a = np.where(mask, load.s0.real / v0**load.alpha, 0.0)
    b = np.where(mask, load.s0.imag / v0**load.beta, 0.0)
    return a, b


def _check_vmag2(vmag2) -> np.ndarray:
    v = np.asarray(vmag2, dtype=float)
    if np.any(v < 0):
        raise NegativeSquaredVoltage(f"negative squared voltage: {v}")
    return v


def exact_power(load: LoadSpec, vmag2) -> np.ndarray:
    """Complex power drawn per phase/branch at squared applied voltage ``vmag2``."""
    if load.model == CONSTANT_POWER:
        return load.s0.copy()
    v = _check_vmag2(vmag2)
    a, b = load_coefficients(load)
    p = np.where(a != 0, a * v**(load.alpha / 2), 0.0)
    q = np.where(b != 0, b * v**(load.beta / 2), 0.0)
    return p + 1j * q


def linear_power_coefficients(load: LoadSpec, point: float = 1.0):
    """Tangent-line coefficients (slope_p, const_p, slope_q, const_q).

    The tangent is taken at v* = point * v0mag**2 per phase, so that
    ``p ~= slope_p * v + const_p`` near the reference voltage.
    """
    mask = phase_mask(load.phases)
    a, b = load_coefficients(load)
    vstar = np.where(mask, point * load.v0mag**2, 1.0)
    slope_p = np.where(a != 0, a * (load.alpha / 2) * vstar**(load.alpha / 2 - 1), 0.0)
    slope_q = np.where(b != 0, b * (load.beta / 2) * vstar**(load.beta / 2 - 1), 0.0)
    const_p = np.where(a != 0, a * vstar**(load.alpha / 2) - slope_p * vstar, 0.0)
    const_q = np.where(b != 0, b * vstar**(load.beta / 2) - slope_q * vstar, 0.0)
    return slope_p, const_p, slope_q, const_q


def linearized_power(load: LoadSpec, vmag2, point: float = 1.0) -> np.ndarray:
    """Tangent-line approximation of exact_power; exact for exponents 0 and 2."""
    if load.model == CONSTANT_POWER:
        return load.s0.copy()
    v = np.asarray(vmag2, dtype=float)
    sp, cp, sq, cq = linear_power_coefficients(load, point)
    return (sp * v + cp) + 1j * (sq * v + cq)


def applied_vmag2(load: LoadSpec, voltage, mode: str = "exact",
                  treat_delta_as_wye: bool = False) -> np.ndarray:
    """Squared voltage magnitude applied to the load, per phase/branch.

    ``voltage`` is either a complex phasor 3-vector V or a Hermitian 3x3
    matrix W standing for V V^H. In ``exact`` mode a delta load sees
    diag(L W L^T); in ``linearized`` mode it sees 3 * diag(W), the balanced
    approximation used by the linear model.
    """
    arr = np.asarray(voltage, dtype=complex)
    if arr.ndim == 1:
        w = np.outer(arr, arr.conj())
    else:
        w = arr
    mask = phase_mask(load.phases)
    if load.configuration == DELTA and not treat_delta_as_wye:
        if mode == "exact":
            v = np.diag(PHASE_TO_BRANCH @ w @ PHASE_TO_BRANCH.T).real
        elif mode == "linearized":
            v = 3.0 * np.diag(w).real
        else:
            raise ValueError(f"unknown mode {mode!r}")
    else:
        v = np.diag(w).real
    return np.where(mask, v, 0.0)
