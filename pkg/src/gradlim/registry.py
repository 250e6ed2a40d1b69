"""Named, versioned presets for laws, schemes, test functions and systems.

Everything an experiment needs can be selected by name from here, so the
runner never needs code edits.  Bump ``REGISTRY_VERSION`` whenever a
preset's meaning changes; reports echo it.
"""

import math
from typing import Callable, Dict

import numpy as np

from . import euler, graduation, measures, paths

REGISTRY_VERSION = "1"

LAWS: Dict[str, Callable[[], measures.ProbabilityLaw]] = {
    "normal": lambda: measures.normal(0.0, 1.0),
    "uniform": lambda: measures.uniform(0.0, 1.0),
    "dirac": lambda: measures.dirac(0.3),
    "cantor_third": lambda: measures.cantor(1.0 / 3.0),
    "cantor_0.4": lambda: measures.cantor(0.4),
    "normal2": lambda: measures.product(measures.normal(0.0, 1.0), measures.normal(0.0, 1.0)),
}

# Frequency ladders (angular frequency u in E exp(i u X)).
LADDERS: Dict[str, Callable[[], np.ndarray]] = {
    "normal": lambda: measures.geometric_ladder(2.0, range(1, 13)),
    "uniform": lambda: measures.geometric_ladder(2.0, range(1, 13)),
    "dirac": lambda: measures.geometric_ladder(2.0, range(1, 13)),
    "cantor_third": lambda: measures.geometric_ladder(3.0, range(0, 9), scale=2.0 * math.pi),
    "cantor_0.4": lambda: measures.geometric_ladder(2.5, range(1, 21)),
    "normal2": lambda: measures.geometric_ladder(2.0, range(1, 13)),
}

TEST_FUNCTIONS: Dict[str, Callable[[], graduation.TestFunction]] = {
    "identity": graduation.identity,
    "sin": graduation.sine,
    "cos": graduation.cosine,
    "sin2pi": lambda: graduation.sine(2.0 * math.pi),
    "one": lambda: graduation.constant(1.0),
}


def _sawtooth_xi(y, n):
    return graduation.theta(n * y) / n


SCHEMES: Dict[str, Callable[[], graduation.GraduationScheme]] = {
    "nearest": lambda: graduation.GraduationScheme("nearest"),
    "default": lambda: graduation.GraduationScheme("default"),
    "excess": lambda: graduation.GraduationScheme("excess"),
    "dyadic": lambda: graduation.GraduationScheme("dyadic", alpha_rule="3*4^n"),
    # the nearest rounding written as a user perturbation: gamma = 1/12
    "custom_sawtooth": lambda: graduation.GraduationScheme(
        "custom", alpha_rule="n^2", custom_xi=_sawtooth_xi, gamma=1.0 / 12.0
    ),
}

DENSITY_FACTORS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "one": lambda y: np.ones(np.asarray(y).shape[0]),
    "one_plus_half_sin": lambda y: 1.0 + 0.5 * np.sin(np.asarray(y)[:, 0]),
}

PERIODIC: Dict[str, Callable[[], paths.PeriodicFunction]] = {
    "theta": paths.PeriodicFunction.theta,
    "theta_plus_one": lambda: paths.PeriodicFunction.theta().plus_constant(1.0),
    "one": lambda: paths.PeriodicFunction.constant(1.0),
}

STEPS: Dict[str, Callable[[], paths.StepFunction]] = {
    "one": lambda: paths.StepFunction.constant(1.0),
    "zero": lambda: paths.StepFunction.constant(0.0),
    "minus_one": lambda: paths.StepFunction.constant(-1.0),
    "first_half": lambda: paths.StepFunction((0.0, 0.5, 1.0), (1.0, 0.0)),
}

TIME_CHANGES: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "square": lambda t: np.asarray(t, dtype=float) ** 2,
}

SDES: Dict[str, Callable[[], euler.MechanicalSDE]] = {
    "constant": euler.constant_system,
    "linear": euler.linear_system,
    "sine_mechanical": euler.sine_mechanical,
}

PRESET_TABLES = {
    "law": LAWS,
    "scheme": SCHEMES,
    "phi": TEST_FUNCTIONS,
    "chi": TEST_FUNCTIONS,
    "h": DENSITY_FACTORS,
    "f": PERIODIC,
    "eta": STEPS,
    "zeta": STEPS,
    "time_change": TIME_CHANGES,
    "sde": SDES,
}


def lookup(kind: str, name: str):
    """The preset ``name`` of table ``kind``; ValueError lists the choices."""
    table = PRESET_TABLES[kind]
    if name not in table:
        raise ValueError(f"unknown {kind} preset {name!r}; choose from {sorted(table)}")
    return table[name]


def build(kind: str, name: str):
    """Instantiate a preset (tables of constructors) or return it (callables)."""
    entry = lookup(kind, name)
    return entry if kind in ("h", "time_change") else entry()


def listing() -> Dict[str, list]:
    return {kind: sorted(table) for kind, table in PRESET_TABLES.items()}
