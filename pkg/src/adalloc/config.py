"""YAML configuration documents, presets and object builders.

A document has the sections ``plant``, ``design``, ``allocator``, ``smc``,
``scenario`` and ``output``. Missing keys take the defaults below (the ADMIRE
benchmark with full effectiveness); unknown keys are rejected. Units: angles
in rad, rates in rad/s, times in s.
"""

from __future__ import annotations

import copy
import hashlib
import json

import numpy as np
import yaml

from . import presets
from .allocator import AllocatorConfig
from .design import DesignOptions, DesignReport, Envelopes, run_pipeline
from .plant import ActuatorBank, DisturbanceSpec, FaultSchedule, LinearPlant, NoiseSpec
from .sim import Scenario, make_reference
from .smc import DEFAULT_PHI, SmcConfig


class ConfigError(ValueError):
    pass


def _lim(col):
    return np.deg2rad(presets.ADMIRE_LIMITS_DEG[:, col]).tolist()


DEFAULTS = {
    "plant": {
        "A": presets.ADMIRE_A.tolist(),
        "B_u": presets.ADMIRE_B_U.tolist(),
        "r": 3,
        "u_lower": _lim(0),
        "u_upper": _lim(1),
        "tau": presets.ADMIRE_TAU,
    },
    "design": {
        "epsilon": 0.2,
        "zeta_frac": 0.05,
        "lambda_density": 200,
        "seed": 0,
        "M": [0.85, 0.40, 0.40],  # null -> scaled pseudo-inverse-reachable cube
        "M_scale": 0.9,
        "lambda_cap": 50.0,
        "envelopes": {
            "x1_bar": presets.ADMIRE_ENVELOPES["x1_bar"],
            "x2_bar": presets.ADMIRE_ENVELOPES["x2_bar"],
            "r_bar_i": presets.ADMIRE_ENVELOPES["r_bar_i"],
            "rdot_bar_i": presets.ADMIRE_ENVELOPES["rdot_bar_i"],
            "L_bar_i": None,  # null -> disturbance amplitudes
        },
    },
    "allocator": {
        "kind": "adaptive",
        "A_m": presets.ADMIRE_A_M.tolist(),
        "ell": presets.ADMIRE_ELL,
        "gamma_theta": 100.0,
        "theta0": "ideal",  # ideal | inner_min | inner_max | explicit r x m list
        "freeze": False,
    },
    "smc": {
        "lambda_bar": presets.ADMIRE_LAMBDA_BAR,  # null -> design value
        "phi": DEFAULT_PHI,
    },
    "scenario": {
        "name": "admire-lambda1",
        "duration": 15.0,
        "dt": 1e-3,
        "x0": None,
        "fault": {"t_fault": presets.ADMIRE_FAULT_TIME, "levels": None},
        "disturbance": {
            "amplitude": [presets.ADMIRE_DIST_AMPLITUDE] * 3,
            "frequency": [presets.ADMIRE_DIST_FREQUENCY] * 3,
        },
        "noise": {"sigma_x": presets.ADMIRE_NOISE_SIGMA, "seed": 0},
        "reference": {
            "kind": "smooth_doublet",
            "amplitudes": [1.0e-3, 1.0e-3, 1.0e-3],
            "frequency": 1.0,
            "edges": [1.0, 4.0, 10.0],
            "ramp": 2.0,
        },
        "metric_window": [12.0, 15.0],
    },
    "output": {"trace": None, "report": None},
}

PRESETS = {
    "admire": {},
    "admire-lambda1": {"scenario": {"name": "admire-lambda1"}},
    "admire-lambda2": {"scenario": {"name": "admire-lambda2",
                                    "fault": {"levels": presets.FAULT_LEVELS["lambda2"]}}},
    "admire-lambda3": {"scenario": {"name": "admire-lambda3",
                                    "fault": {"levels": presets.FAULT_LEVELS["lambda3"]}}},
}
# Unicode aliases as printed in the command reference.
PRESETS.update({k.replace("lambda", "λ"): v for k, v in list(PRESETS.items()) if "lambda" in k})

# Keys whose value may be a nested mapping that is not itself validated.
_OPAQUE = set()


def merge(base: dict, override: dict, path: str = "") -> dict:
    """Deep-merge ``override`` into a copy of ``base``; unknown keys raise."""
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown configuration key: {where}")
        if isinstance(base[key], dict) and where not in _OPAQUE:
            if not isinstance(val, dict):
                raise ConfigError(f"{where} must be a mapping")
            out[key] = merge(base[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve(document: dict | None = None, preset: str | None = None) -> dict:
    cfg = DEFAULTS
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        cfg = merge(cfg, PRESETS[preset])
    if document:
        if not isinstance(document, dict):
            raise ConfigError("configuration document must be a mapping")
        cfg = merge(cfg, document)
    return cfg


def load(path: str | None = None, preset: str | None = None) -> dict:
    doc = None
    if path is not None:
        try:
            with open(path) as fh:
                doc = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        if doc is not None and not isinstance(doc, dict):
            raise ConfigError("configuration document must be a mapping")
    return resolve(doc, preset)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# builders

def _arr(x, name, shape=None):
    try:
        a = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be numeric") from exc
    if shape is not None and a.shape != shape:
        raise ConfigError(f"{name} must have shape {shape}, got {a.shape}")
    return a


def build_plant(cfg: dict) -> tuple[LinearPlant, ActuatorBank]:
    pc = cfg["plant"]
    try:
        plant = LinearPlant.from_matrices(_arr(pc["A"], "plant.A"), _arr(pc["B_u"], "plant.B_u"),
                                          int(pc["r"]))
        act = ActuatorBank(_arr(pc["u_lower"], "plant.u_lower", (plant.m,)),
                           _arr(pc["u_upper"], "plant.u_upper", (plant.m,)), float(pc["tau"]))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"plant: {exc}") from exc
    return plant, act


def build_disturbance(cfg: dict, r: int) -> DisturbanceSpec:
    dc = cfg["scenario"]["disturbance"]
    return DisturbanceSpec(_arr(dc["amplitude"], "disturbance.amplitude", (r,)),
                           _arr(dc["frequency"], "disturbance.frequency", (r,)))


def build_envelopes(cfg: dict, r: int) -> Envelopes:
    ec = cfg["design"]["envelopes"]
    L = ec["L_bar_i"]
    L = build_disturbance(cfg, r).L_bar if L is None else _arr(L, "envelopes.L_bar_i", (r,))
    return Envelopes(float(ec["x1_bar"]), float(ec["x2_bar"]),
                     _arr(ec["r_bar_i"], "envelopes.r_bar_i", (r,)),
                     _arr(ec["rdot_bar_i"], "envelopes.rdot_bar_i", (r,)), L)


def build_design_options(cfg: dict) -> DesignOptions:
    dc = cfg["design"]
    return DesignOptions(
        epsilon=float(dc["epsilon"]), zeta_frac=float(dc["zeta_frac"]),
        lambda_density=int(dc["lambda_density"]), seed=int(dc["seed"]),
        M=None if dc["M"] is None else _arr(dc["M"], "design.M"),
        M_scale=float(dc["M_scale"]), lambda_cap=float(dc["lambda_cap"]))


def run_design(cfg: dict) -> tuple[LinearPlant, ActuatorBank, Envelopes, DesignReport]:
    plant, act = build_plant(cfg)
    env = build_envelopes(cfg, plant.r)
    report = run_pipeline(plant, act, env, build_design_options(cfg))
    return plant, act, env, report


def _theta0(spec, report: DesignReport):
    if isinstance(spec, str):
        b = report.bounds
        choices = {"ideal": None, "inner_min": b.inner_min, "inner_max": b.inner_max}
        if spec not in choices:
            raise ConfigError(f"allocator.theta0 must be one of {sorted(choices)} or a matrix")
        return choices[spec]
    return _arr(spec, "allocator.theta0", b.shape if (b := report.bounds) else None)


def build_scenario(cfg: dict, design=None, allocator: str | None = None) -> Scenario:
    """Scenario from a resolved document; runs the design unless one is passed."""
    plant, act, env, report = design if design is not None else run_design(cfg)
    if not report.feasible:
        raise ConfigError(f"design infeasible at step {report.failed_step}: {report.message}")
    ac, sc, smc_c = cfg["allocator"], cfg["scenario"], cfg["smc"]
    kind = allocator or ac["kind"]
    if kind == "pseudo":
        kind = "pseudo_inverse"
    try:
        alloc = AllocatorConfig(_arr(ac["A_m"], "allocator.A_m", (plant.r, plant.r)),
                                float(ac["ell"]), float(ac["gamma_theta"]), report.bounds, plant.B)
    except ValueError as exc:
        raise ConfigError(f"allocator: {exc}") from exc
    lam = report.lambda_bar if smc_c["lambda_bar"] is None else float(smc_c["lambda_bar"])
    if np.any(report.W1 + lam * report.W2 > 0):
        raise ConfigError(f"smc.lambda_bar={lam} is not admitted by the W inequality "
                          f"(design maximum {report.lambda_bar:.4g})")
    smc = SmcConfig(lam, report.rho, plant.A2, report.M, float(smc_c["phi"]))
    rc = sc["reference"]
    try:
        ref = make_reference(rc["kind"], _arr(rc["amplitudes"], "reference.amplitudes", (plant.r,)),
                             float(rc["frequency"]), tuple(rc["edges"]), float(rc["ramp"]),
                             envelopes=env)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"reference: {exc}") from exc
    fc = sc["fault"]
    if fc["levels"] is None:
        fault = FaultSchedule.nominal(plant.m)
    else:
        fault = FaultSchedule([(0.0, np.ones(plant.m)),
                               (float(fc["t_fault"]), _arr(fc["levels"], "fault.levels", (plant.m,)))])
    nc = sc["noise"]
    window = sc["metric_window"]
    try:
        return Scenario(
            plant=plant, actuators=act, allocator=kind, alloc_config=alloc, smc=smc,
            reference=ref, fault=fault, disturbance=build_disturbance(cfg, plant.r),
            noise=NoiseSpec(float(nc["sigma_x"]), int(nc["seed"])),
            duration=float(sc["duration"]), dt=float(sc["dt"]),
            x0=None if sc["x0"] is None else _arr(sc["x0"], "scenario.x0", (plant.n,)),
            theta0=_theta0(ac["theta0"], report), freeze_theta=bool(ac["freeze"]),
            metric_window=None if window is None else tuple(window), name=str(sc["name"]))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from exc
