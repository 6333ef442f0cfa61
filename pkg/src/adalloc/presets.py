"""ADMIRE linearized aircraft benchmark and its fault scenarios.

States are ``(alpha, beta, p, q, r)``; the controls are canard, right and left
elevon, and rudder. All angles are in radians.
"""

from __future__ import annotations

import numpy as np

from .plant import ActuatorBank, DisturbanceSpec, FaultSchedule, LinearPlant, NoiseSpec

ADMIRE_A = np.array([
    [-0.5432, 0.0137, 0, 0.9778, 0],
    [0, -0.1179, 0.2215, 0, -0.9661],
    [0, -10.5123, -0.9967, 0, 0.6176],
    [2.6221, -0.0030, 0, -0.5057, 0],
    [0, 0.7075, -0.0939, 0, -0.2127],
])

# As published, including the small force terms on alpha and beta.
ADMIRE_B_U_FULL = np.array([
    [0.0069, -0.0866, -0.0866, 0.0004],
    [0, 0.0119, -0.0119, 0.0287],
    [0, -4.2423, 4.2423, 1.4871],
    [1.6532, -1.2735, -1.2735, 0.0024],
    [0, -0.2805, 0.2805, -0.8823],
])

# Surfaces treated as pure moment generators: the top block must be zero.
ADMIRE_B_U = ADMIRE_B_U_FULL.copy()
ADMIRE_B_U[:2] = 0.0

ADMIRE_LIMITS_DEG = np.array([[-55.0, 25.0], [-30.0, 30.0], [-30.0, 30.0], [-30.0, 30.0]])
ADMIRE_TAU = 0.05
ADMIRE_NOISE_SIGMA = 0.0035
ADMIRE_DIST_AMPLITUDE = 0.1
ADMIRE_DIST_FREQUENCY = 1.0
ADMIRE_A_M = np.diag([-0.2, -0.1, -0.1])
ADMIRE_ELL = 4.0
ADMIRE_LAMBDA_BAR = 3.0
ADMIRE_FAULT_TIME = 7.0
ADMIRE_STATE_NAMES = ("alpha", "beta", "p", "q", "r")
ADMIRE_INPUT_NAMES = ("canard", "right_elevon", "left_elevon", "rudder")

# Expert envelopes used for the W-inequality; references are smooth doublets
# of about 1 mrad/s, which is what the p-axis coupling to beta allows.
ADMIRE_ENVELOPES = {
    "x1_bar": 0.0,
    "x2_bar": 0.0,
    "r_bar_i": [1.0e-3, 1.0e-3, 1.0e-3],
    "rdot_bar_i": [2.0e-3, 2.0e-3, 2.0e-3],
}

FAULT_LEVELS = {
    "lambda1": None,
    "lambda2": [0.85, 0.85, 0.85, 0.85],
    "lambda3": [0.5, 0.5, 0.5, 0.5],
}


def admire_plant() -> LinearPlant:
    return LinearPlant.from_matrices(ADMIRE_A, ADMIRE_B_U, r=3)


def admire_actuators(tau: float = ADMIRE_TAU) -> ActuatorBank:
    lim = np.deg2rad(ADMIRE_LIMITS_DEG)
    return ActuatorBank(lower=lim[:, 0], upper=lim[:, 1], tau=tau)


def admire_disturbance() -> DisturbanceSpec:
    return DisturbanceSpec(np.full(3, ADMIRE_DIST_AMPLITUDE), np.full(3, ADMIRE_DIST_FREQUENCY))


def admire_noise(seed: int = 0) -> NoiseSpec:
    return NoiseSpec(ADMIRE_NOISE_SIGMA, seed)


def admire_fault(name: str, t_fault: float = ADMIRE_FAULT_TIME) -> FaultSchedule:
    if name not in FAULT_LEVELS:
        raise KeyError(f"unknown fault case {name!r}; choose from {sorted(FAULT_LEVELS)}")
    level = FAULT_LEVELS[name]
    if level is None:
        return FaultSchedule.nominal(4)
    return FaultSchedule([(0.0, np.ones(4)), (t_fault, np.array(level))])
