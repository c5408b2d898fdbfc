"""Small case builders shared by the test modules."""
from __future__ import annotations

import numpy as np

from rucmarket.case import Bus, CaseSystem, Generator, Line, LoadProfile, UncertaintySpec


def gen(name, bus, p_min, p_max, b, a=0.0, c=0.0, ramp=None, r_unc=None, p0=None, t0=5,
        min_on=1, min_off=1, startup=0.0):
    ramp = p_max if ramp is None else ramp
    r_unc = p_max if r_unc is None else r_unc
    p0 = p_min if p0 is None else p0
    return Generator(name, bus, p_min, p_max, p0, a, b, c, ramp, ramp, r_unc, r_unc,
                     startup, 0.0, min_on, min_off, t0)


def single_bus(load, bounds, p_max=100.0, r_unc=50.0, lam=1.0, budget=1.0, b=10.0, p_min=0.0):
    load = np.atleast_1d(np.asarray(load, dtype=float))
    T = load.size
    return CaseSystem(
        buses=(Bus(0),), lines=(),
        generators=(gen("G", 0, p_min, p_max, b, r_unc=r_unc, p0=max(p_min, float(load[0]))),),
        loads=LoadProfile(load, np.array([1.0])),
        uncertainty=UncertaintySpec(np.broadcast_to(np.asarray(bounds, dtype=float), (1, T)).copy(), lam, budget),
        n_blocks=1,
    )


def two_bus_toy(bound=20.0, cap=60.0, lam=1.0, budget=1.0):
    """One generator at bus 0 feeding load at bus 1 over one line, one hour."""
    return CaseSystem(
        buses=(Bus(0), Bus(1)), lines=(Line(0, 1, 0.1, cap),),
        generators=(gen("G", 0, 0.0, 100.0, 10.0, r_unc=15.0, p0=40.0),),
        loads=LoadProfile(np.array([40.0]), np.array([0.0, 1.0])),
        uncertainty=UncertaintySpec(np.array([[0.0], [bound]]), lam, budget),
        n_blocks=1,
    )
