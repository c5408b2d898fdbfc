"""Seeded random 3-bus test systems: a chain of two lines, two or three units,
uncertainty at the two load buses, optional storage."""
from __future__ import annotations

import numpy as np

from .case import Bus, CaseSystem, Generator, Line, LoadProfile, StorageDevice, UncertaintySpec


def _unit(name, bus, p_min, p_max, b, a=0.0, c=0.0, r_unc=None, t0=5, min_on=1, startup=0.0):
    r_unc = p_max if r_unc is None else r_unc
    return Generator(name, bus, p_min, p_max, p_min, a, b, c, p_max, p_max, r_unc, r_unc,
                     startup, 0.0, min_on, 1, t0)


def random_case(seed: int, horizon: int = 4, with_storage: bool = False) -> CaseSystem:
    """Same seed, same case. Roughly three in four seeds are robust-feasible;
    the rest have deviations no first-stage plan can cover."""
    rng = np.random.default_rng(seed)
    lines = (Line(0, 1, float(rng.uniform(0.05, 0.3)), float(rng.uniform(90, 180))),
             Line(1, 2, float(rng.uniform(0.05, 0.3)), float(rng.uniform(60, 130))))
    units = [
        _unit("G1", 0, float(rng.uniform(10, 30)), float(rng.uniform(140, 200)), float(rng.uniform(10, 15)),
              a=float(rng.uniform(0, 0.01)), c=float(rng.uniform(0, 100)), r_unc=float(rng.uniform(5, 25)),
            min_on=int(rng.integers(1, 3))),
        _unit("G2", 2, float(rng.uniform(5, 15)), float(rng.uniform(70, 110)), float(rng.uniform(18, 30)),
              a=float(rng.uniform(0, 0.02)), c=float(rng.uniform(0, 100)), r_unc=float(rng.uniform(5, 25)),
              startup=float(rng.uniform(0, 200)), t0=int(rng.choice([-2, 3]))),
    ]
    if rng.random() < 0.5:
        units.append(_unit("G3", 1, 0.0, float(rng.uniform(30, 60)), float(rng.uniform(25, 40)),
                           r_unc=float(rng.uniform(5, 20)), t0=-1, startup=float(rng.uniform(0, 100))))
    base = rng.uniform(60, 150, size=horizon)
    dist = np.array([0.0, *rng.dirichlet([2.0, 2.0])])
    bounds = np.zeros((3, horizon))
    bounds[1] = rng.uniform(0.02, 0.2) * base
    bounds[2] = rng.uniform(0.02, 0.2) * base
    storages = ()
    if with_storage:
        storages = (StorageDevice("S1", int(rng.integers(0, 3)), 60.0, 20.0, 15.0, 15.0),)
    return CaseSystem(
        buses=tuple(Bus(i) for i in range(3)), lines=lines, generators=tuple(units),
        loads=LoadProfile(base, dist),
        uncertainty=UncertaintySpec(bounds, float(rng.choice([0.5, 0.8, 1.0])),
                                    float(rng.choice([0.5, 1.0, 1.5, 2.0]))),
        storages=storages, name=f"random-{seed}", n_blocks=3,
    )
