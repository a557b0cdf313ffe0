"""Experiment configuration: strict INI parsing, presets and cross-field validation."""

from __future__ import annotations

import configparser
import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .collision import get_operator
from .diagnostics import relative_entropy
from .inequality_lab import kernel_constant, small_entropy_constants
from .integrator import IntegratorConfig, RunSpec
from .kernel import (CollisionKernel, SphereQuadrature, canonical_kernel, load_table_kernel,
                     parse_angular, zero_kernel)
from .state import DistributionState, MaxwellianSpec, PhaseGrid, discretize

log = logging.getLogger(__name__)

PRESET_NAMES = ("near-maxwellian-torus", "large-data-torus", "line-dissipation")
DATUM_KINDS = ("perturbed-maxwellian", "counter-beams", "gaussian-bump")

# (type, default) per section.key; None default means "unset"
SCHEMA = {
    "scenario": {"preset": (str, "near-maxwellian-torus"), "seed": (int, 0)},
    "grid": {"spatial_kind": (str, "torus"), "L": (float, 1.0), "Nx": (int, 8),
             "Vmax": (float, 4.5), "Nv": (int, 8)},
    "kernel": {"type": (str, "canonical"), "C": (float, 1.0), "eps": (float, 1.0),
               "R0": (float, 0.25), "b": (str, "constant"), "table": (str, None)},
    "collision": {"n_polar": (int, 4), "n_azimuth": (int, 4), "interpolation": (str, "maxwellian")},
    "integrator": {"scheme": (str, "strang"), "dt": (float, 0.02), "t_end": (float, 1.0),
                   "snapshot_stride": (int, 5), "picard_tol": (float, 1e-10),
                   "picard_max_iter": (int, 50), "collision_substep": (str, None)},
    "datum": {"kind": (str, "perturbed-maxwellian"), "m": (float, 1.0), "T": (float, 1.0),
              "u": (float, 0.0), "amplitude": (float, 0.1), "mode": (int, 1),
              "center": (float, 0.0), "width": (float, 2.0)},
    "diagnostics": {"q_max": (float, None), "n_q": (int, 256), "reference": (str, "auto"),
                    "entropy_production": (str, "yes")},
    "checks": {"mass_rtol": (float, 1e-10), "momentum_rtol": (float, 1e-9),
               "energy_rtol": (float, 1e-9), "entropy_slack": (float, 1e-4),
               "bony_rtol": (float, 0.05), "entropy": (str, "yes"), "bony": (str, "yes"),
               "growth": (str, "yes"), "positivity": (str, "yes")},
    "output": {"directory": (str, "out"), "formats": (str, "csv,json,svg"),
               "snapshots": (str, "no")},
}

PRESETS = {
    "near-maxwellian-torus": {
        "grid": {"spatial_kind": "torus", "L": 1.0, "Nx": 8, "Vmax": 4.5, "Nv": 8},
        "kernel": {"type": "canonical", "C": 1.0, "eps": 1.0, "R0": 0.25, "b": "constant"},
        "integrator": {"scheme": "strang", "dt": 0.02, "t_end": 1.0, "snapshot_stride": 5},
        "datum": {"kind": "perturbed-maxwellian", "m": 1.0, "T": 1.0, "amplitude": 0.1, "mode": 1},
    },
    "large-data-torus": {
        "grid": {"spatial_kind": "torus", "L": 1.0, "Nx": 8, "Vmax": 4.5, "Nv": 10},
        "kernel": {"type": "canonical", "C": 1.0, "eps": 1.0, "R0": 0.5, "b": "constant"},
        "integrator": {"scheme": "strang", "dt": 0.01, "t_end": 5.0, "snapshot_stride": 10},
        "datum": {"kind": "counter-beams", "m": 2.0, "T": 0.5, "u": 1.5, "amplitude": 0.8, "mode": 1},
    },
    "line-dissipation": {
        "grid": {"spatial_kind": "line", "L": 20.0, "Nx": 160, "Vmax": 4.0, "Nv": 8},
        "kernel": {"type": "canonical", "C": 1.0, "eps": 1.0, "R0": 0.5, "b": "constant"},
        "integrator": {"scheme": "strang", "dt": 0.1, "t_end": 20.0, "snapshot_stride": 10},
        "datum": {"kind": "gaussian-bump", "m": 1.0, "T": 1.0, "center": 0.0, "width": 2.0},
        "diagnostics": {"reference": "none"},
        "checks": {"entropy": "no"},
    },
}

_BOOL = {"yes": True, "true": True, "on": True, "1": True,
         "no": False, "false": False, "off": False, "0": False}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def _as_bool(v):
    return _BOOL[str(v).strip().lower()]


@dataclass
class ExperimentConfig:
    values: dict
    source: Optional[str] = None
    warnings: list = field(default_factory=list)

    def get(self, dotted):
        sec, key = dotted.split(".", 1)
        return self.values[sec][key]

    def flag(self, dotted) -> bool:
        return _as_bool(self.get(dotted))

    @property
    def preset(self) -> str:
        return self.values["scenario"]["preset"]

    @property
    def seed(self) -> int:
        return self.values["scenario"]["seed"]

    def flat(self) -> dict:
        return {f"{s}.{k}": v for s, d in self.values.items() for k, v in d.items()}

    # builders ----------------------------------------------------------
    def grid(self) -> PhaseGrid:
        g = self.values["grid"]
        return PhaseGrid(g["spatial_kind"], g["L"], g["Nx"], g["Vmax"], g["Nv"])

    def kernel(self) -> CollisionKernel:
        k = self.values["kernel"]
        if k["type"] == "zero":
            return zero_kernel()
        if k["type"] == "custom-table":
            path = Path(k["table"])
            if self.source and not path.is_absolute():
                path = Path(self.source).parent / path
            return load_table_kernel(path, R0=k["R0"], b=k["b"])
        return canonical_kernel(k["C"], k["eps"], k["R0"], k["b"])

    def quadrature(self) -> SphereQuadrature:
        c = self.values["collision"]
        return SphereQuadrature(c["n_polar"], c["n_azimuth"])

    def integrator(self) -> IntegratorConfig:
        i = self.values["integrator"]
        return IntegratorConfig(dt=i["dt"], scheme=i["scheme"], picard_tol=i["picard_tol"],
                                picard_max_iter=i["picard_max_iter"], t_end=i["t_end"],
                                snapshot_stride=i["snapshot_stride"],
                                collision_substep=i["collision_substep"])

    def reference(self) -> Optional[MaxwellianSpec]:
        d = self.values["datum"]
        ref = self.values["diagnostics"]["reference"]
        if ref == "none":
            return None
        if ref == "auto":
            if d["kind"] == "counter-beams":
                # same mass and energy, zero drift
                return MaxwellianSpec(m=d["m"], T=d["T"] + d["u"] ** 2 / 3.0)
            return MaxwellianSpec(m=d["m"], T=d["T"])
        m, _, T = ref.partition(",")
        return MaxwellianSpec(m=float(m), T=float(T))

    def initial_state(self) -> DistributionState:
        return build_datum(self.values["datum"], self.grid())

    def to_run_spec(self) -> RunSpec:
        dg = self.values["diagnostics"]
        return RunSpec(initial=self.initial_state(), kernel=self.kernel(),
                       integrator=self.integrator(), quad=self.quadrature(),
                       reference=self.reference(), q_max=dg["q_max"], n_q=dg["n_q"],
                       with_dh=_as_bool(dg["entropy_production"]),
                       keep_snapshots=_as_bool(self.values["output"]["snapshots"]),
                       interpolation=self.values["collision"]["interpolation"])


def build_datum(d: dict, grid: PhaseGrid) -> DistributionState:
    """Initial data; every kind is normalized to total mass d['m'] on the grid."""
    kind, T, u = d["kind"], d["T"], d["u"]
    L = grid.L

    if kind == "perturbed-maxwellian":
        def datum(x, v1, v2, v3):
            prof = 1.0 + d["amplitude"] * np.cos(2 * np.pi * d["mode"] * x / L)
            return prof * np.exp(-((v1 - u) ** 2 + v2 ** 2 + v3 ** 2) / (2 * T))
    elif kind == "counter-beams":
        def datum(x, v1, v2, v3):
            ph = 2 * np.pi * d["mode"] * x / L
            r2 = v2 ** 2 + v3 ** 2
            right = (1.0 + d["amplitude"] * np.cos(ph)) * np.exp(-((v1 - u) ** 2 + r2) / (2 * T))
            left = (1.0 - d["amplitude"] * np.cos(ph)) * np.exp(-((v1 + u) ** 2 + r2) / (2 * T))
            return right + left
    elif kind == "gaussian-bump":
        def datum(x, v1, v2, v3):
            prof = np.exp(-0.5 * ((x - d["center"]) / d["width"]) ** 2)
            return prof * np.exp(-((v1 - u) ** 2 + v2 ** 2 + v3 ** 2) / (2 * T))
    else:
        raise ValueError(f"unknown datum kind {kind!r}")
    st = discretize(datum, grid)
    st.values *= d["m"] / st.mass
    return st


def _coerce(typ, raw):
    if typ is bool:
        return _as_bool(raw)
    return typ(raw)


def parse_config(text: str = "", source: Optional[str] = None) -> ExperimentConfig:
    """Parse INI text into a validated config, reporting every violation at once."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    errors = []
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None

    preset = cp.get("scenario", "preset", fallback=SCHEMA["scenario"]["preset"][1]).strip()
    if preset not in PRESET_NAMES:
        errors.append(f"scenario.preset: unknown preset {preset!r} (choose from {', '.join(PRESET_NAMES)})")
        preset = PRESET_NAMES[0]

    values = {s: {k: dflt for k, (_, dflt) in keys.items()} for s, keys in SCHEMA.items()}
    for s, kv in PRESETS[preset].items():
        values[s].update(copy.deepcopy(kv))
    values["scenario"]["preset"] = preset

    for sec in cp.sections():
        if sec not in SCHEMA:
            errors.append(f"[{sec}]: unknown section")
            continue
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                errors.append(f"{sec}.{key}: unknown key")
                continue
            typ = SCHEMA[sec][key][0]
            try:
                values[sec][key] = _coerce(typ, raw.strip())
            except (ValueError, KeyError):
                errors.append(f"{sec}.{key}: cannot read {raw!r} as {typ.__name__}")

    cfg = ExperimentConfig(values, source)
    errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def validate(cfg: ExperimentConfig) -> list:
    """Field and cross-field checks; returns a list of messages (empty when valid)."""
    v = cfg.values
    errs = []
    g, k, c, i, d, dg, o = (v[s] for s in ("grid", "kernel", "collision", "integrator", "datum",
                                             "diagnostics", "output"))
    if g["spatial_kind"] not in ("torus", "line"):
        errs.append("grid.spatial_kind must be torus or line")
    for key in ("L", "Vmax"):
        if not g[key] > 0:
            errs.append(f"grid.{key} must be > 0")
    if g["Nx"] < 2:
        errs.append("grid.Nx must be >= 2")
    if g["Nv"] < 2 or g["Nv"] % 2:
        errs.append("grid.Nv must be even and >= 2")
    if k["type"] not in ("canonical", "custom-table", "zero"):
        errs.append("kernel.type must be canonical, custom-table or zero")
    if k["type"] == "canonical":
        for key in ("C", "eps", "R0"):
            if not k[key] > 0:
                errs.append(f"kernel.{key} must be > 0")
    if k["type"] == "custom-table":
        if not k["table"]:
            errs.append("kernel.table is required for custom-table kernels")
        if k["R0"] < 0:
            errs.append("kernel.R0 must be >= 0")
    try:
        b = parse_angular(k["b"])
        if not b.b_min > 0:
            errs.append("kernel.b must be bounded below by a positive constant")
    except ValueError as exc:
        errs.append(f"kernel.b: {exc}")
    if c["n_polar"] < 1 or c["n_azimuth"] < 1:
        errs.append("collision.n_polar and collision.n_azimuth must be >= 1")
    if c["n_azimuth"] % 2:
        errs.append("collision.n_azimuth must be even (entropy production uses sigma -> -sigma pairs)")
    if c["interpolation"] not in ("maxwellian", "linear"):
        errs.append("collision.interpolation must be maxwellian or linear")
    if not i["dt"] > 0:
        errs.append("integrator.dt must be > 0")
    if not i["t_end"] >= 0:
        errs.append("integrator.t_end must be >= 0")
    if i["scheme"] not in ("strang", "lie", "picard"):
        errs.append("integrator.scheme must be strang, lie or picard")
    if i["snapshot_stride"] < 1:
        errs.append("integrator.snapshot_stride must be >= 1")
    if not i["picard_tol"] > 0:
        errs.append("integrator.picard_tol must be > 0")
    if i["picard_max_iter"] < 1:
        errs.append("integrator.picard_max_iter must be >= 1")
    if i["collision_substep"] not in (None, "euler", "heun"):
        errs.append("integrator.collision_substep must be euler or heun")
    if d["kind"] not in DATUM_KINDS:
        errs.append(f"datum.kind must be one of {', '.join(DATUM_KINDS)}")
    if not d["m"] > 0:
        errs.append("datum.m must be > 0")
    if not d["T"] > 0:
        errs.append("datum.T must be > 0")
    if d["kind"] == "gaussian-bump" and not d["width"] > 0:
        errs.append("datum.width must be > 0")
    if d["kind"] in ("perturbed-maxwellian", "counter-beams") and not 0 <= d["amplitude"] < 1:
        errs.append("datum.amplitude must lie in [0, 1)")
    if dg["n_q"] < 1:
        errs.append("diagnostics.n_q must be >= 1")
    if dg["q_max"] is not None and not dg["q_max"] > 0:
        errs.append("diagnostics.q_max must be > 0")
    if dg["reference"] not in ("auto", "none"):
        try:
            m, _, T = dg["reference"].partition(",")
            if not (float(m) > 0 and float(T) > 0):
                raise ValueError
        except ValueError:
            errs.append("diagnostics.reference must be auto, none or '<m>,<T>'")
    fmts = {s.strip() for s in o["formats"].split(",") if s.strip()}
    if not fmts <= {"csv", "json", "svg"}:
        errs.append("output.formats accepts csv, json, svg")
    for sec, key in (("diagnostics", "entropy_production"), ("output", "snapshots"),
                     ("checks", "entropy"), ("checks", "bony"), ("checks", "growth"),
                     ("checks", "positivity")):
        if str(v[sec][key]).strip().lower() not in _BOOL:
            errs.append(f"{sec}.{key} must be yes or no")
    if errs:
        return errs

    # cross-field
    if g["spatial_kind"] == "line" and dg["reference"] != "none":
        errs.append("diagnostics.reference: relative entropy against a global Maxwellian is torus-only; "
                    "set diagnostics.reference = none on the line")
    support = abs(d["u"]) + 3.0 * math.sqrt(d["T"])
    if g["Vmax"] < support:
        errs.append(f"grid.Vmax={g['Vmax']} does not contain the datum support |u| + 3 sqrt(T) = {support:.3g}")
    if d["kind"] == "gaussian-bump" and g["spatial_kind"] == "line" and \
            abs(d["center"]) + 3.0 * d["width"] > g["L"]:
        errs.append("datum: gaussian bump extends beyond the line window [-L, L]")
    return errs


def preflight(cfg: ExperimentConfig) -> dict:
    """Startup checks recorded in the manifest: dt guard and small-entropy admissibility."""
    info = {}
    grid, kernel, quad = cfg.grid(), cfg.kernel(), cfg.quadrature()
    f0 = cfg.initial_state()
    if not kernel.is_zero:
        nu = get_operator(grid, kernel, quad).loss_frequency(f0.values).max()
        dt = cfg.get("integrator.dt")
        info["dt_nu_max"] = float(dt * nu)
        if dt * nu > 0.5:
            msg = (f"integrator.dt * nu_max = {dt * nu:.3g} > 0.5; collision substeps will be halved")
            cfg.warnings.append(msg)
            log.warning(msg)
    ref = cfg.reference()
    if cfg.preset == "near-maxwellian-torus" and ref is not None and not kernel.is_zero:
        C = kernel_constant(kernel)
        consts = small_entropy_constants(ref.m, C)
        H = relative_entropy(f0, ref)
        info.update({"H_in": H, "entropy_threshold": consts.threshold, "K": consts.K,
                     "alpha": consts.alpha, "eps": consts.eps,
                     "below_threshold": bool(H <= consts.threshold)})
        if H > consts.threshold:
            msg = f"H(f_in|M) = {H:.3g} exceeds the small-entropy threshold {consts.threshold:.3g}"
            cfg.warnings.append(msg)
            log.warning(msg)
    return info
