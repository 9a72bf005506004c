from pathlib import Path

import numpy as np
import pytest

from mdopf.network import (CONSTANT_POWER, DELTA, EXPONENTIAL, Network, WYE,
                           make_bus, make_line, make_load, make_shunt)

FEEDER_DIR = Path(__file__).resolve().parents[1] / "feeders"

ROT = np.exp(-2j * np.pi / 3)
BALANCED_VREF = np.array([1.0, ROT, ROT**2])


@pytest.fixture
def feeder_dir():
    return FEEDER_DIR


def twobus_network(load=None):
    """The hand-checkable 2-bus case: z = (0.01+0.02j) I, wye 0.1+0.05j."""
    if load is None:
        load = make_load("d1", "1", WYE, CONSTANT_POWER, "abc", s0=0.1 + 0.05j)
    return Network(
        buses=(make_bus("0", is_slack=True, vref=BALANCED_VREF), make_bus("1")),
        lines=(make_line("l1", "0", "1", z=0.01 + 0.02j),),
        shunts=(),
        loads=(load,) if load is not False else (),
        root="0",
    )


def gnarly_fourbus() -> Network:
    """Four buses exercising every feature at once: mutual impedances, line
    charging, a two-phase lateral, partial delta loads, exponential models,
    a capacitor bank and an unbalanced slack reference."""
    vref = np.array([1.0, 1.02 * ROT * np.exp(0.01j), 0.98 * ROT**2 * np.exp(-0.02j)])
    z_trunk = np.array([
        [0.012 + 0.024j, 0.003 + 0.008j, 0.002 + 0.007j],
        [0.003 + 0.008j, 0.013 + 0.023j, 0.003 + 0.009j],
        [0.002 + 0.007j, 0.003 + 0.009j, 0.011 + 0.025j],
    ])
    z_ab = np.zeros((3, 3), dtype=complex)
    z_ab[:2, :2] = [[0.02 + 0.02j, 0.004 + 0.006j], [0.004 + 0.006j, 0.021 + 0.019j]]
    ysh = np.diag([0.001j, 0.0012j, 0.0009j])
    cap = np.diag([0.002 + 0.01j, 0.002 + 0.01j, 0.002 + 0.01j])
    return Network(
        buses=(
            make_bus("s", is_slack=True, vref=vref),
            make_bus("x"),
            make_bus("y", phases="ab"),
            make_bus("w"),
        ),
        lines=(
            make_line("e1", "s", "x", z=z_trunk, ysh_from=ysh, ysh_to=ysh),
            make_line("e2", "x", "y", phases="ab", z=z_ab),
            make_line("e3", "w", "x", z=z_trunk * 0.7),  # stored reversed on purpose
        ),
        shunts=(make_shunt("c1", "x", cap),),
        loads=(
            make_load("dd", "w", DELTA, EXPONENTIAL, "ab",
                      s0=[0.05 + 0.02j, 0.04 + 0.015j, 0], alpha=1.3, beta=0.9),
            make_load("wy", "y", WYE, CONSTANT_POWER, "ab",
                      s0=[0.03 + 0.012j, 0.025 + 0.01j, 0]),
            make_load("dc", "x", DELTA, CONSTANT_POWER, "c", s0=[0, 0, 0.06 + 0.02j]),
            make_load("we", "w", WYE, EXPONENTIAL, "c",
                      s0=[0, 0, 0.02 + 0.008j], alpha=1.8, beta=0.4),
        ),
        root="s",
    )
