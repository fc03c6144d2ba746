"""Shared builders for the test suite."""

import copy
import json

import numpy as np

TINY_DOC = {
    "name": "tiny",
    "horizon_T": 2,
    "period_hours": 1.0,
    "buses": [{"id": "b1", "is_reference": True}],
    "lines": [],
    "generators": [
        {
            "id": "g1",
            "bus": "b1",
            "p_min": 20.0,
            "p_max": 100.0,
            "ramp_up": 60.0,
            "ramp_down": 60.0,
            "startup_ramp": 80.0,
            "shutdown_ramp": 80.0,
            "min_up": 1,
            "min_down": 1,
            "no_load_cost": 100.0,
            "startup_cost": 500.0,
            "shutdown_cost": 50.0,
            "segments": [[20.0, 20.0], [20.0, 25.0], [20.0, 30.0], [20.0, 40.0]],
            "init_on": True,
            "init_power": 50.0,
            "init_periods_in_state": 4,
        }
    ],
    "demand": {"b1": [50.0, 60.0]},
}


def tiny_doc(**overrides):
    doc = copy.deepcopy(TINY_DOC)
    doc.update(overrides)
    return doc


def tiny_text(**overrides):
    return json.dumps(tiny_doc(**overrides))


def random_lp(rng, n_max=3, m_max=4):
    """A random sensed LP with a finite box (vertex oracle applies)."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    A = np.round(rng.uniform(-3, 3, size=(m, n)), 2)
    # avoid all-zero rows
    for i in range(m):
        if not A[i].any():
            A[i, int(rng.integers(0, n))] = 1.0
    senses = rng.choice(["L", "G", "E"], size=m, p=[0.5, 0.3, 0.2])
    lb = np.round(rng.uniform(-2, 0, size=n), 2)
    ub = lb + np.round(rng.uniform(0.5, 4, size=n), 2)
    mid = (lb + ub) / 2
    rhs = A @ mid + np.round(rng.uniform(-2, 2, size=m), 2)
    c = np.round(rng.uniform(-5, 5, size=n), 2)
    return c, A, list(senses), rhs, lb, ub
