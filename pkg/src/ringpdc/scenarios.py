"""Named runs, sweeps and method comparison over the ring-cavity pipeline.

This is the experiment layer.  A declarative config (YAML file or shipped
preset) picks the scenario kind, matter parameters, mode table, initial
state, method and propagation window; run_scenario turns it into solved
matter, an assembled Hamiltonian, a propagated state and two output files:
a CSV of photon-statistics columns and a JSON summary with the extrema,
the conversion efficiency and a truncation-drift report.  run_sweep
repeats the pipeline over one swept parameter and tabulates the extrema
per row; compare_methods runs the same scenario under the full, few-level
and mean-field methods on a shared time grid and reports signed
deviations.

Config keys carry their unit as a suffix (omega_meV, t_final_ps, dt_fs)
and unknown keys are rejected.  Before anything is assembled the state
memory is estimated and refused against a budget (PDC_MEMORY_BUDGET_MB,
default 4096).  Sweep rows and method runs go through a thread pool sized
by PDC_MAX_WORKERS; everything inside one run is sequential in time, so
identical configs write bit-identical CSV files.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
import threading
import time
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from scipy.stats import poisson

from .hamiltonian import (
    CoupledBasis,
    DriveSpec,
    MixingAngles,
    assemble_bath_terms,
    assemble_degenerate,
    assemble_few_level,
    assemble_signal_pair,
    assemble_system,
    calibrate_current_drive,
    current_drive_terms,
    degenerate_polarization_vectors,
    field_drive_terms,
    polarization_vectors,
    product_state,
)
from .matter import GridSpec, RingPotentialParams, solve_ring, transition_matrices
from .meanfield import (
    degenerate_system,
    initial_state as mean_field_initial,
    mf_observables,
    nondegenerate_system,
    propagate_mf,
)
from .observables import (
    ObservableSeries,
    efficiency_eta,
    series_extrema,
    series_from_records,
    snapshot_columns,
)
from .photon import COHERENT_TAIL_TOL, BathSpec, FockMode, coherent_state, sample_bath
from .propagator import CoupledState, PropagatorConfig, ground_state, propagate
from .units import (
    UnitSystem,
    default_units,
    eff_to_ps,
    effective_coupling,
    energy_to_eff,
    energy_to_mev,
    length_to_eff,
    ps_to_eff,
    time_to_eff,
)

SCENARIO_KINDS = (
    "nondegenerate_fock",
    "nondegenerate_coherent",
    "nondegenerate_bath",
    "current_driven",
    "field_driven",
    "degenerate",
)
METHOD_KINDS = ("full", "few_level", "mean_field")
SWEEP_PARAMETERS = ("theta1", "V0", "lambda", "xi1")
RESONANCE_RTOL = 5e-3

MEMORY_BUDGET_ENV = "PDC_MEMORY_BUDGET_MB"
MAX_WORKERS_ENV = "PDC_MAX_WORKERS"
DEFAULT_MEMORY_BUDGET_MB = 4096.0


class ConfigError(ValueError):
    """Malformed, inconsistent or physically invalid configuration."""


class MemoryBudgetError(RuntimeError):
    """Estimated propagation workspace exceeds the configured budget."""


# ---------------------------------------------------------------------------
# config tree


@dataclass(frozen=True)
class ModeSpec:
    """One quantized-mode row of the config: frequency, truncation, coupling."""

    omega_mev: float
    n_max: int
    lam: float


@dataclass(frozen=True)
class MatterSpec:
    v0_mev: float = 200.0
    omega0_mev: float = 10.0
    d_nm: float = 10.0
    grid_points: int = 127
    grid_step_nm: float = 0.7052
    n_levels: int = 12
    cache: str | None = None


@dataclass(frozen=True)
class InitialSpec:
    """Mode-1 photon preparation; matter starts in its ground level unless
    kind is "ground", which takes the correlated ground state of the
    assembled Hamiltonian instead."""

    kind: str = "fock"
    fock_k: int = 1
    xi1: float = 0.0


@dataclass(frozen=True)
class DriveParams:
    j0: float = 0.0
    t0_ps: float = 0.0
    tau_ps: float = 0.05
    omega_mev: float | None = None
    calibrate: bool = False
    target_n1: float = 4.0
    t_check_ps: float = 0.23
    tolerance: float = 0.05


@dataclass(frozen=True)
class BathParams:
    lam: float
    sector: int = 2
    windows: tuple[tuple[float, float, int], ...] = ()

    @property
    def count(self) -> int:
        return sum(n for _, _, n in self.windows)


@dataclass(frozen=True)
class PropagationSpec:
    t_final_ps: float
    dt_fs: float
    record_stride: int = 1
    krylov_dim: int = 20
    krylov_tol: float = 1e-10


@dataclass(frozen=True)
class MethodSpec:
    kind: str = "full"
    levels: tuple[int, ...] = ()


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "."
    basename: str | None = None


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    modes: tuple[ModeSpec, ...]
    propagation: PropagationSpec
    label: str = ""
    description: str = ""
    matter: MatterSpec = MatterSpec()
    theta1_deg: float = 0.0
    theta2_deg: float = 90.0
    theta3_deg: float = 90.0
    initial: InitialSpec = InitialSpec()
    drive: DriveParams | None = None
    bath: BathParams | None = None
    method: MethodSpec = MethodSpec()
    output: OutputSpec = OutputSpec()
    sweep: SweepSpec | None = None


# ---------------------------------------------------------------------------
# parsing


_TOP_KEYS = {
    "scenario",
    "description",
    "matter",
    "modes",
    "angles",
    "initial",
    "drive",
    "bath",
    "propagation",
    "method",
    "output",
    "sweep",
}


def _section(data: Mapping, name: str, allowed: set[str], required: Sequence[str] = ()):
    raw = data.get(name)
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"section '{name}' must be a mapping")
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {', '.join(unknown)}")
    missing = sorted(set(required) - set(raw))
    if missing:
        raise ConfigError(f"missing required keys in '{name}': {', '.join(missing)}")
    return raw


def _as_float(raw, where: str) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(f"{where} must be a number, got {raw!r}")
    return float(raw)


def _as_int(raw, where: str) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ConfigError(f"{where} must be an integer, got {raw!r}")
    return int(raw)


def _as_bool(raw, where: str) -> bool:
    if not isinstance(raw, bool):
        raise ConfigError(f"{where} must be a boolean, got {raw!r}")
    return raw


def _as_str(raw, where: str) -> str:
    if not isinstance(raw, str):
        raise ConfigError(f"{where} must be a string, got {raw!r}")
    return raw


def _parse_modes(data: Mapping) -> tuple[ModeSpec, ...]:
    raw = data.get("modes")
    if not isinstance(raw, Sequence) or isinstance(raw, (str, bytes)) or not raw:
        raise ConfigError("'modes' must be a non-empty list of mode mappings")
    specs = []
    for i, entry in enumerate(raw, start=1):
        if not isinstance(entry, Mapping):
            raise ConfigError(f"mode {i} must be a mapping")
        unknown = sorted(set(entry) - {"omega_meV", "n_max", "lambda"})
        if unknown:
            raise ConfigError(f"unknown keys in mode {i}: {', '.join(unknown)}")
        for key in ("omega_meV", "n_max", "lambda"):
            if key not in entry:
                raise ConfigError(f"mode {i} is missing '{key}'")
        specs.append(
            ModeSpec(
                omega_mev=_as_float(entry["omega_meV"], f"mode {i} omega_meV"),
                n_max=_as_int(entry["n_max"], f"mode {i} n_max"),
                lam=_as_float(entry["lambda"], f"mode {i} lambda"),
            )
        )
    return tuple(specs)


def _parse_bath(data: Mapping) -> BathParams | None:
    if "bath" not in data or data["bath"] is None:
        return None
    raw = _section(data, "bath", {"lambda", "sector", "windows"}, required=("lambda", "windows"))
    windows_raw = raw["windows"]
    if not isinstance(windows_raw, Sequence) or isinstance(windows_raw, (str, bytes)) or not windows_raw:
        raise ConfigError("'bath.windows' must be a non-empty list of window mappings")
    windows = []
    for i, entry in enumerate(windows_raw, start=1):
        if not isinstance(entry, Mapping):
            raise ConfigError(f"bath window {i} must be a mapping")
        unknown = sorted(set(entry) - {"low_meV", "high_meV", "count"})
        if unknown:
            raise ConfigError(f"unknown keys in bath window {i}: {', '.join(unknown)}")
        for key in ("low_meV", "high_meV", "count"):
            if key not in entry:
                raise ConfigError(f"bath window {i} is missing '{key}'")
        windows.append(
            (
                _as_float(entry["low_meV"], f"bath window {i} low_meV"),
                _as_float(entry["high_meV"], f"bath window {i} high_meV"),
                _as_int(entry["count"], f"bath window {i} count"),
            )
        )
    return BathParams(
        lam=_as_float(raw["lambda"], "bath lambda"),
        sector=_as_int(raw.get("sector", 2), "bath sector"),
        windows=tuple(windows),
    )


def _parse_sweep(data: Mapping) -> SweepSpec | None:
    if "sweep" not in data or data["sweep"] is None:
        return None
    raw = _section(data, "sweep", {"parameter", "values"}, required=("parameter", "values"))
    values_raw = raw["values"]
    if not isinstance(values_raw, Sequence) or isinstance(values_raw, (str, bytes)):
        raise ConfigError("'sweep.values' must be a list of numbers")
    values = tuple(_as_float(v, "sweep value") for v in values_raw)
    return SweepSpec(parameter=_as_str(raw["parameter"], "sweep.parameter"), values=values)


def parse_config(data) -> ScenarioConfig:
    """Build a ScenarioConfig from a key-value tree; unknown keys are errors."""
    if not isinstance(data, Mapping):
        raise ConfigError("config root must be a mapping")
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")

    scen = _section(data, "scenario", {"kind", "label"}, required=("kind",))
    kind = _as_str(scen["kind"], "scenario.kind")
    if kind not in SCENARIO_KINDS:
        raise ConfigError(
            f"unknown scenario kind {kind!r}; choose from {', '.join(SCENARIO_KINDS)}"
        )

    mat = _section(
        data,
        "matter",
        {"v0_meV", "omega0_meV", "d_nm", "grid_points", "grid_step_nm", "n_levels", "cache"},
    )
    defaults = MatterSpec()
    matter = MatterSpec(
        v0_mev=_as_float(mat.get("v0_meV", defaults.v0_mev), "matter.v0_meV"),
        omega0_mev=_as_float(mat.get("omega0_meV", defaults.omega0_mev), "matter.omega0_meV"),
        d_nm=_as_float(mat.get("d_nm", defaults.d_nm), "matter.d_nm"),
        grid_points=_as_int(mat.get("grid_points", defaults.grid_points), "matter.grid_points"),
        grid_step_nm=_as_float(
            mat.get("grid_step_nm", defaults.grid_step_nm), "matter.grid_step_nm"
        ),
        n_levels=_as_int(mat.get("n_levels", defaults.n_levels), "matter.n_levels"),
        cache=_as_str(mat["cache"], "matter.cache") if mat.get("cache") is not None else None,
    )

    ang = _section(data, "angles", {"theta1_deg", "theta2_deg", "theta3_deg"})
    ini = _section(data, "initial", {"kind", "fock_k", "xi1"})
    initial = InitialSpec(
        kind=_as_str(ini.get("kind", "fock"), "initial.kind"),
        fock_k=_as_int(ini.get("fock_k", 1), "initial.fock_k"),
        xi1=_as_float(ini.get("xi1", 0.0), "initial.xi1"),
    )

    drive = None
    if "drive" in data and data["drive"] is not None:
        drv = _section(
            data,
            "drive",
            {
                "j0",
                "t0_ps",
                "tau_ps",
                "omega_meV",
                "calibrate",
                "target_n1",
                "t_check_ps",
                "tolerance",
            },
        )
        d = DriveParams()
        drive = DriveParams(
            j0=_as_float(drv.get("j0", d.j0), "drive.j0"),
            t0_ps=_as_float(drv.get("t0_ps", d.t0_ps), "drive.t0_ps"),
            tau_ps=_as_float(drv.get("tau_ps", d.tau_ps), "drive.tau_ps"),
            omega_mev=(
                _as_float(drv["omega_meV"], "drive.omega_meV")
                if drv.get("omega_meV") is not None
                else None
            ),
            calibrate=_as_bool(drv.get("calibrate", d.calibrate), "drive.calibrate"),
            target_n1=_as_float(drv.get("target_n1", d.target_n1), "drive.target_n1"),
            t_check_ps=_as_float(drv.get("t_check_ps", d.t_check_ps), "drive.t_check_ps"),
            tolerance=_as_float(drv.get("tolerance", d.tolerance), "drive.tolerance"),
        )

    prop = _section(
        data,
        "propagation",
        {"t_final_ps", "dt_fs", "record_stride", "krylov_dim", "krylov_tol"},
        required=("t_final_ps", "dt_fs"),
    )
    p = PropagationSpec(t_final_ps=1.0, dt_fs=1.0)
    propagation = PropagationSpec(
        t_final_ps=_as_float(prop["t_final_ps"], "propagation.t_final_ps"),
        dt_fs=_as_float(prop["dt_fs"], "propagation.dt_fs"),
        record_stride=_as_int(
            prop.get("record_stride", p.record_stride), "propagation.record_stride"
        ),
        krylov_dim=_as_int(prop.get("krylov_dim", p.krylov_dim), "propagation.krylov_dim"),
        krylov_tol=_as_float(prop.get("krylov_tol", p.krylov_tol), "propagation.krylov_tol"),
    )

    met = _section(data, "method", {"kind", "levels"})
    levels_raw = met.get("levels", [])
    if not isinstance(levels_raw, Sequence) or isinstance(levels_raw, (str, bytes)):
        raise ConfigError("'method.levels' must be a list of integers")
    method = MethodSpec(
        kind=_as_str(met.get("kind", "full"), "method.kind"),
        levels=tuple(_as_int(v, "method level") for v in levels_raw),
    )

    out = _section(data, "output", {"directory", "basename"})
    output = OutputSpec(
        directory=_as_str(out.get("directory", "."), "output.directory"),
        basename=(
            _as_str(out["basename"], "output.basename")
            if out.get("basename") is not None
            else None
        ),
    )

    return ScenarioConfig(
        kind=kind,
        label=_as_str(scen.get("label", ""), "scenario.label"),
        description=_as_str(data.get("description", ""), "description"),
        matter=matter,
        modes=_parse_modes(data),
        theta1_deg=_as_float(ang.get("theta1_deg", 0.0), "angles.theta1_deg"),
        theta2_deg=_as_float(ang.get("theta2_deg", 90.0), "angles.theta2_deg"),
        theta3_deg=_as_float(ang.get("theta3_deg", 90.0), "angles.theta3_deg"),
        initial=initial,
        drive=drive,
        bath=_parse_bath(data),
        propagation=propagation,
        method=method,
        output=output,
        sweep=_parse_sweep(data),
    )


def load_config(path) -> ScenarioConfig:
    """Parse a YAML config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return parse_config(data)


def _preset_root():
    return resources.files("ringpdc").joinpath("presets")


def list_presets() -> list[tuple[str, str]]:
    """(name, description) for every shipped preset, sorted by name."""
    out = []
    for entry in _preset_root().iterdir():
        if entry.name.endswith(".yaml"):
            data = yaml.safe_load(entry.read_text())
            out.append((entry.name[:-5], str(data.get("description", "")).strip()))
    return sorted(out)


def load_preset(name: str) -> ScenarioConfig:
    """Parse a shipped preset by name."""
    entry = _preset_root().joinpath(f"{name}.yaml")
    if not entry.is_file():
        available = ", ".join(n for n, _ in list_presets())
        raise ConfigError(f"unknown preset {name!r}; available: {available}")
    data = yaml.safe_load(entry.read_text())
    if isinstance(data, Mapping):
        scen = dict(data.get("scenario") or {})
        scen.setdefault("label", name)
        data = {**data, "scenario": scen}
    return parse_config(data)


# ---------------------------------------------------------------------------
# validation and memory budget


def _min_coherent_fock(xi: float) -> int:
    """Smallest n_max whose discarded Poisson tail passes the coherent guard."""
    mean = float(xi) ** 2
    n = max(1, math.ceil(mean))
    while float(poisson.sf(n, mean)) > COHERENT_TAIL_TOL:
        n += 1
    return n


def _method_label(method: MethodSpec) -> str:
    if method.kind == "few_level":
        return f"few_level{len(method.levels)}"
    return method.kind


def _quantized_mode_specs(config: ScenarioConfig) -> tuple[ModeSpec, ...]:
    """Rows of the mode table that stay quantized (field drive loses mode 1)."""
    return config.modes[1:] if config.kind == "field_driven" else config.modes


def _bath_dim(bath: BathParams) -> int:
    m = bath.count
    if bath.sector == 0:
        return 1
    if bath.sector == 1:
        return 1 + m
    return 1 + m + (m * m + m) // 2


def memory_report(config: ScenarioConfig) -> dict:
    """Estimated workspace for the configured run against the budget."""
    matter_dim = (
        len(config.method.levels) if config.method.kind == "few_level" else config.matter.n_levels
    )
    if config.method.kind == "mean_field":
        mode_dims: tuple[int, ...] = ()
    else:
        mode_dims = tuple(m.n_max + 1 for m in _quantized_mode_specs(config))
    bath_dim = _bath_dim(config.bath) if config.bath is not None else 1
    dim = matter_dim * int(np.prod(mode_dims, dtype=np.int64)) * bath_dim
    nnz_per_col = matter_dim * (1 + 2 * len(mode_dims))
    if config.bath is not None:
        nnz_per_col += matter_dim * 2 * config.bath.count
    est_bytes = dim * nnz_per_col * 24 + dim * 16 * (config.propagation.krylov_dim + 6)
    budget = float(os.environ.get(MEMORY_BUDGET_ENV, DEFAULT_MEMORY_BUDGET_MB))
    return {
        "matter_dim": matter_dim,
        "mode_dims": list(mode_dims),
        "bath_dim": bath_dim if config.bath is not None else None,
        "total_dim": dim,
        "estimated_mb": est_bytes / 2**20,
        "budget_mb": budget,
    }


def validate_config(config: ScenarioConfig) -> dict:
    """Check invariants and the memory budget; returns the memory report."""
    if config.kind not in SCENARIO_KINDS:
        raise ConfigError(f"unknown scenario kind {config.kind!r}")
    n_modes = len(config.modes)
    expected = 2 if config.kind == "degenerate" else 3
    if n_modes != expected:
        raise ConfigError(
            f"scenario kind {config.kind!r} takes exactly {expected} modes, got {n_modes}"
        )
    for i, m in enumerate(config.modes, start=1):
        if m.omega_mev <= 0:
            raise ConfigError(f"mode {i} frequency must be positive")
        if m.n_max < 1:
            raise ConfigError(f"mode {i} n_max must be at least 1")
        if m.lam < 0:
            raise ConfigError(f"mode {i} lambda must be non-negative")

    omegas = [m.omega_mev for m in config.modes]
    if config.kind == "degenerate":
        if abs(omegas[1] - 0.5 * omegas[0]) > RESONANCE_RTOL * 0.5 * omegas[0]:
            raise ConfigError(
                f"degenerate resonance violated: omega2 = {omegas[1]} meV is not "
                f"omega1/2 = {0.5 * omegas[0]} meV within {RESONANCE_RTOL:.1%}"
            )
    else:
        if abs(omegas[0] - omegas[1] - omegas[2]) > RESONANCE_RTOL * omegas[0]:
            raise ConfigError(
                f"energy conservation violated: omega1 = {omegas[0]} meV is not "
                f"omega2 + omega3 = {omegas[1] + omegas[2]} meV within {RESONANCE_RTOL:.1%}"
            )

    if config.matter.n_levels < 1 or config.matter.grid_points < 9:
        raise ConfigError("matter needs n_levels >= 1 and grid_points >= 9")

    ini = config.initial
    if ini.kind not in ("fock", "coherent", "ground"):
        raise ConfigError(f"unknown initial state kind {ini.kind!r}")
    driven = config.kind in ("current_driven", "field_driven")
    if driven and ini.kind != "ground":
        raise ConfigError("driven scenarios start from the correlated ground state")
    if ini.kind == "fock":
        if not 0 <= ini.fock_k <= config.modes[0].n_max:
            raise ConfigError(
                f"initial Fock level {ini.fock_k} outside mode 1 truncation "
                f"n_max = {config.modes[0].n_max}"
            )
    if ini.kind == "coherent":
        needed = _min_coherent_fock(ini.xi1)
        if config.modes[0].n_max < needed:
            raise ConfigError(
                f"coherent xi1 = {ini.xi1:g} needs mode 1 n_max >= {needed} "
                f"to pass the Poisson tail guard, got {config.modes[0].n_max}"
            )

    if (config.bath is not None) != (config.kind == "nondegenerate_bath"):
        if config.bath is None:
            raise ConfigError("scenario kind 'nondegenerate_bath' requires a bath section")
        raise ConfigError(f"scenario kind {config.kind!r} takes no bath section")
    if config.bath is not None:
        if config.bath.lam < 0:
            raise ConfigError("bath lambda must be non-negative")
        if config.bath.count < 1:
            raise ConfigError("bath needs at least one mode")

    if (config.drive is not None) != driven:
        if config.drive is None:
            raise ConfigError(f"scenario kind {config.kind!r} requires a drive section")
        raise ConfigError(f"scenario kind {config.kind!r} takes no drive section")
    if config.drive is not None and config.drive.tau_ps <= 0:
        raise ConfigError("drive tau_ps must be positive")

    met = config.method
    if met.kind not in METHOD_KINDS:
        raise ConfigError(f"unknown method {met.kind!r}; choose from {', '.join(METHOD_KINDS)}")
    if met.kind == "few_level":
        if config.kind not in ("degenerate", "nondegenerate_fock", "nondegenerate_coherent"):
            raise ConfigError(f"the few-level method does not support kind {config.kind!r}")
        levels = met.levels
        if not levels:
            raise ConfigError("the few-level method needs a non-empty 'levels' list")
        if len(set(levels)) != len(levels):
            raise ConfigError("few-level 'levels' must be distinct")
        if min(levels) < 0 or max(levels) >= config.matter.n_levels:
            raise ConfigError(
                f"few-level 'levels' must lie in [0, {config.matter.n_levels - 1}]"
            )
        if 0 not in levels:
            raise ConfigError("few-level truncations must retain level 0")
    if met.kind == "mean_field":
        if config.kind not in ("degenerate", "nondegenerate_coherent"):
            raise ConfigError(f"the mean-field method does not support kind {config.kind!r}")
        if ini.kind != "coherent":
            raise ConfigError("the mean-field method needs a coherent initial state")

    p = config.propagation
    if p.t_final_ps <= 0 or p.dt_fs <= 0:
        raise ConfigError("propagation needs positive t_final_ps and dt_fs")
    if p.record_stride < 1:
        raise ConfigError("record_stride must be at least 1")
    if p.krylov_dim < 2:
        raise ConfigError("krylov_dim must be at least 2")
    if p.krylov_tol <= 0:
        raise ConfigError("krylov_tol must be positive")

    if config.sweep is not None:
        validate_sweep(config.sweep)

    report = memory_report(config)
    if report["estimated_mb"] > report["budget_mb"]:
        mode_dims = " x ".join(str(d) for d in report["mode_dims"]) or "none"
        bath = (
            f" x bath {report['bath_dim']}" if report["bath_dim"] is not None else ""
        )
        raise MemoryBudgetError(
            f"estimated {report['estimated_mb']:.0f} MB for state dimension "
            f"{report['total_dim']} (matter {report['matter_dim']} x modes {mode_dims}"
            f"{bath}) exceeds the budget {report['budget_mb']:.0f} MB; lower the "
            f"truncations or raise {MEMORY_BUDGET_ENV}"
        )
    return report


def validate_sweep(sweep: SweepSpec) -> None:
    if sweep.parameter not in SWEEP_PARAMETERS:
        raise ConfigError(
            f"unknown sweep parameter {sweep.parameter!r}; choose from "
            f"{', '.join(SWEEP_PARAMETERS)}"
        )
    if not sweep.values:
        raise ConfigError("sweep values must be a non-empty list")
    diffs = np.diff(sweep.values)
    if len(diffs) and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ConfigError("sweep values must be strictly monotone")


# ---------------------------------------------------------------------------
# pipeline pieces


_MATTER_LOCK = threading.Lock()


def prepare_matter(spec: MatterSpec, units: UnitSystem, store: dict | None = None):
    """Solve (or fetch) the ring eigenbasis and its transition matrices."""
    if store is not None:
        with _MATTER_LOCK:
            if spec in store:
                return store[spec]
    grid = GridSpec(
        nx=spec.grid_points,
        ny=spec.grid_points,
        dx=length_to_eff(spec.grid_step_nm, units),
        dy=length_to_eff(spec.grid_step_nm, units),
    )
    pot = RingPotentialParams(
        omega0=energy_to_eff(spec.omega0_mev, units),
        d=length_to_eff(spec.d_nm, units),
        v0=energy_to_eff(spec.v0_mev, units),
    )
    with _MATTER_LOCK:
        if store is not None and spec in store:
            return store[spec]
        matter = solve_ring(grid, pot, spec.n_levels, cache_path=spec.cache)
        tm = transition_matrices(matter)
        if store is not None:
            store[spec] = (matter, tm)
    return matter, tm


def _angles(config: ScenarioConfig) -> MixingAngles:
    return MixingAngles(
        theta1=math.radians(config.theta1_deg),
        theta2=math.radians(config.theta2_deg),
        theta3=math.radians(config.theta3_deg),
    )


def _build_modes(config: ScenarioConfig, units: UnitSystem) -> tuple[FockMode, ...]:
    """Mode table as FockModes carrying the geometry polarization vectors."""
    if config.kind == "degenerate":
        evecs = degenerate_polarization_vectors(math.radians(config.theta1_deg))
    else:
        evecs = polarization_vectors(_angles(config))
    return tuple(
        FockMode(
            omega=energy_to_eff(m.omega_mev, units),
            n_max=m.n_max,
            lam=m.lam,
            polarization=(float(e[0]), float(e[1])),
        )
        for m, e in zip(config.modes, evecs)
    )


def _time_grid(config: ScenarioConfig, units: UnitSystem) -> tuple[float, float, int]:
    """(dt, t_final, n_steps) in effective units, t_final snapped to the grid."""
    dt = time_to_eff(config.propagation.dt_fs, units)
    span = ps_to_eff(config.propagation.t_final_ps, units)
    n_steps = max(1, int(round(span / dt)))
    return dt, n_steps * dt, n_steps


def _drive_spec(config: ScenarioConfig, units: UnitSystem, kind: str) -> DriveSpec:
    d = config.drive
    omega_mev = d.omega_mev if d.omega_mev is not None else config.modes[0].omega_mev
    return DriveSpec(
        kind=kind,
        j0=d.j0,
        t0=ps_to_eff(d.t0_ps, units),
        tau=ps_to_eff(d.tau_ps, units),
        omega1=energy_to_eff(omega_mev, units),
    )


def _resolved_drive(
    config: ScenarioConfig, matter, tm, modes, units: UnitSystem, kind: str
) -> DriveSpec:
    drive = _drive_spec(config, units, kind)
    if config.drive.calibrate:
        drive = calibrate_current_drive(
            matter,
            tm,
            modes[0],
            drive,
            t_check=ps_to_eff(config.drive.t_check_ps, units),
            target=config.drive.target_n1,
            tol=config.drive.tolerance,
        )
    return drive


def calibrate_drive(
    config: ScenarioConfig,
    *,
    units: UnitSystem | None = None,
    matter_store: dict | None = None,
) -> dict:
    """Bisect the drive amplitude against the quantized-pump reference run."""
    if config.drive is None:
        raise ConfigError("config has no drive section")
    u = units if units is not None else default_units()
    matter, tm = prepare_matter(config.matter, u, matter_store)
    modes = _build_modes(config, u)
    kind = "classical_field" if config.kind == "field_driven" else "classical_current"
    drive = calibrate_current_drive(
        matter,
        tm,
        modes[0],
        _drive_spec(config, u, kind),
        t_check=ps_to_eff(config.drive.t_check_ps, u),
        target=config.drive.target_n1,
        tol=config.drive.tolerance,
    )
    return {
        "kind": drive.kind,
        "j0": drive.j0,
        "target_n1": config.drive.target_n1,
        "t_check_ps": config.drive.t_check_ps,
        "tolerance": config.drive.tolerance,
        "omega_meV": energy_to_mev(drive.omega1, u),
    }


def _edge_observer(basis: CoupledBasis):
    """Highest-Fock-level population per quantized mode (truncation monitor)."""

    def observer(state) -> np.ndarray:
        amps = np.asarray(getattr(state, "amplitudes", state))
        probs = np.abs(amps.reshape(basis.shape)) ** 2
        out = []
        for m in range(len(basis.mode_dims)):
            axis = 1 + m
            marg = probs.sum(axis=tuple(i for i in range(probs.ndim) if i != axis))
            out.append(float(marg[-1]))
        return np.asarray(out)

    return observer


_RENUMBER_PATTERNS = (
    re.compile(r"^n(\d+)$"),
    re.compile(r"^Q(\d+)$"),
    re.compile(r"^gamma(\d+)$"),
    re.compile(r"^H(\d+)$"),
)


def _renumber_mode_names(names: Sequence[str], offset: int = 1) -> list[str]:
    """Shift mode numbers in column names (slot 1 -> physical mode 1+offset)."""
    out = []
    for name in names:
        for pat in _RENUMBER_PATTERNS:
            m = pat.match(name)
            if m:
                k = int(m.group(1)) + offset
                out.append(name[: m.start(1)] + str(k))
                break
        else:
            m = re.match(r"^P(\d+)_(\d+)$", name)
            if m:
                out.append(f"P{m.group(1)}_{int(m.group(2)) + offset}")
                continue
            m = re.match(r"^g2_(\d)(\d)$", name)
            if m:
                out.append(f"g2_{int(m.group(1)) + offset}{int(m.group(2)) + offset}")
                continue
            out.append(name)
    return out


def _ground_index(config: ScenarioConfig) -> int:
    if config.method.kind == "few_level":
        return sorted(config.method.levels).index(0)
    return 0


def _initial_photon_vectors(config: ScenarioConfig, modes: Sequence[FockMode]):
    vecs = []
    for slot, mode in enumerate(modes):
        if slot == 0 and config.initial.kind == "fock":
            v = np.zeros(mode.dim, dtype=complex)
            v[config.initial.fock_k] = 1.0
        elif slot == 0 and config.initial.kind == "coherent":
            v = coherent_state(config.initial.xi1, mode.n_max)
        else:
            v = np.zeros(mode.dim, dtype=complex)
            v[0] = 1.0
        vecs.append(v)
    return vecs


# ---------------------------------------------------------------------------
# the run itself


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    series: ObservableSeries
    names: list[str]
    times_ps: np.ndarray
    rows: np.ndarray
    summary: dict
    csv_path: Path | None = None
    json_path: Path | None = None


def _quantum_series(config: ScenarioConfig, matter, tm, units: UnitSystem):
    """Assemble, propagate and record; returns (names, times, rows, info)."""
    p = config.propagation
    dt, t_final, _ = _time_grid(config, units)
    modes = _build_modes(config, units)
    angles = _angles(config)
    info: dict = {}
    terms: list = []
    bath_basis = None

    if config.method.kind == "few_level":
        h, basis = assemble_few_level(config.method.levels, matter, tm, modes, angles)
        quantized = modes
    elif config.kind == "field_driven":
        quantized = modes[1:]
        basis = CoupledBasis(matter.n_states, tuple(m.dim for m in quantized))
        h = assemble_signal_pair(basis, matter, tm, quantized, angles)
        drive = _resolved_drive(config, matter, tm, modes, units, "classical_field")
        info["drive"] = drive
        t_grid = np.arange(0.0, t_final + 2.0 * dt, dt)
        terms = field_drive_terms(basis, tm, quantized, angles, modes[0], drive, t_grid)
    else:
        quantized = modes
        if config.bath is not None:
            spec = BathSpec(
                count=config.bath.count,
                energy_windows=config.bath.windows,
                lambda_bath=config.bath.lam,
                sector=config.bath.sector,
            )
            bath_modes, bath_basis = sample_bath(spec, units)
            basis = CoupledBasis(matter.n_states, tuple(m.dim for m in modes), bath_basis)
            h = assemble_system(basis, matter, tm, modes, angles) + assemble_bath_terms(
                basis, matter, tm, modes, bath_modes
            )
        else:
            basis = CoupledBasis(matter.n_states, tuple(m.dim for m in modes))
            if config.kind == "degenerate":
                h = assemble_degenerate(basis, matter, tm, modes, angles.theta1)
            else:
                h = assemble_system(basis, matter, tm, modes, angles)
        if config.kind == "current_driven":
            drive = _resolved_drive(config, matter, tm, modes, units, "classical_current")
            info["drive"] = drive
            terms = current_drive_terms(basis, modes[0], drive, slot=0)

    if config.initial.kind == "ground":
        _, vec = ground_state(h)
        psi0 = CoupledState(vec, 0.0)
    else:
        matter_vec = np.zeros(basis.shape[0], dtype=complex)
        matter_vec[_ground_index(config)] = 1.0
        psi0 = CoupledState(
            product_state(basis, matter_vec, _initial_photon_vectors(config, quantized)), 0.0
        )

    names, observer = snapshot_columns(basis, [m.omega for m in quantized])
    pconfig = PropagatorConfig(
        dt=dt,
        krylov_dim=p.krylov_dim,
        krylov_tol=p.krylov_tol,
        record_stride=p.record_stride,
    )
    result = propagate(
        h,
        psi0,
        t_final,
        pconfig,
        terms=terms,
        observables={"row": observer, "edge": _edge_observer(basis)},
        basis_shape=basis.shape,
    )
    rows = np.real(np.asarray(result.records["row"]))
    edges = np.real(np.asarray(result.records["edge"]))
    first_slot = 2 if config.kind == "field_driven" else 1
    info["truncation_drift"] = {
        f"mode_{first_slot + m}": float(np.max(edges[:, m])) for m in range(edges.shape[1])
    }
    info["norm_drift"] = abs(float(np.linalg.norm(result.final.amplitudes)) - 1.0)
    info["dims"] = {
        "matter": basis.shape[0],
        "modes": list(basis.mode_dims),
        "bath": bath_basis.size if bath_basis is not None else None,
        "total": basis.dim,
    }
    if config.kind == "field_driven":
        names = _renumber_mode_names(names)
    return names, result.times, rows, info


def _mean_field_series(config: ScenarioConfig, matter, tm, units: UnitSystem):
    p = config.propagation
    dt, t_final, _ = _time_grid(config, units)
    modes = _build_modes(config, units)
    if config.kind == "degenerate":
        system = degenerate_system(
            matter.h_matrix(), tm.px, tm.py, modes, math.radians(config.theta1_deg)
        )
    else:
        system = nondegenerate_system(matter.h_matrix(), tm.px, tm.py, modes, _angles(config))
    matter_vec = np.zeros(matter.n_states, dtype=complex)
    matter_vec[0] = 1.0
    xis = [config.initial.xi1] + [0.0] * (len(modes) - 1)
    state = mean_field_initial(matter_vec, system, xis)
    pconfig = PropagatorConfig(dt=dt, krylov_dim=p.krylov_dim, krylov_tol=p.krylov_tol)
    _, times, snaps = propagate_mf(
        state, system, t_final, dt, config=pconfig, record_stride=p.record_stride
    )
    names = list(mf_observables(snaps[0], system).keys())
    rows = np.asarray(
        [[mf_observables(s, system)[k] for k in names] for s in snaps], dtype=float
    )
    info = {
        "truncation_drift": {},
        "dims": {"matter": matter.n_states, "modes": [], "bath": None, "total": matter.n_states},
        "norm_drift": abs(float(np.linalg.norm(snaps[-1].amplitudes)) - 1.0),
    }
    return names, times, rows, info


def run_scenario(
    config: ScenarioConfig,
    *,
    units: UnitSystem | None = None,
    matter_store: dict | None = None,
    out_dir=None,
    write_files: bool = True,
) -> ScenarioResult:
    """Validate, solve, assemble, propagate, and write CSV + JSON outputs."""
    if config.sweep is not None:
        raise ConfigError("this config declares a sweep; use run_sweep")
    validate_config(config)
    u = units if units is not None else default_units()
    started = time.perf_counter()
    matter, tm = prepare_matter(config.matter, u, matter_store)

    if config.method.kind == "mean_field":
        names, times, rows, info = _mean_field_series(config, matter, tm, u)
        series = series_from_records(times, names, rows, fock_levels=(), method="mean_field")
    else:
        names, times, rows, info = _quantum_series(config, matter, tm, u)
        series = series_from_records(times, names, rows, method="quantum")

    times_ps = np.asarray([eff_to_ps(t, u) for t in times])
    extrema = series_extrema(series)
    try:
        eta = float(efficiency_eta(series))
    except ValueError:
        eta = None

    summary = {
        "scenario": config.kind,
        "method": _method_label(config.method),
        "label": config.label,
        "frequencies_meV": [m.omega_mev for m in config.modes],
        "lambdas": [m.lam for m in config.modes],
        "couplings_g": [
            effective_coupling(m.lam, energy_to_eff(m.omega_mev, u)) for m in config.modes
        ],
        "theta_deg": [config.theta1_deg, config.theta2_deg, config.theta3_deg],
        "v0_meV": config.matter.v0_mev,
        "dims": info["dims"],
        "samples": int(len(times)),
        "t_final_ps": float(times_ps[-1]),
        "dt_fs": config.propagation.dt_fs,
        "columns": ["time_ps"] + _csv_order(names),
        "extrema": {
            "n2_max": extrema.n2_max,
            "t_n2_max_ps": eff_to_ps(extrema.t_n2_max, u),
            "q2_min": extrema.q2_min,
            "t_q2_min_ps": (
                eff_to_ps(extrema.t_q2_min, u) if math.isfinite(extrema.t_q2_min) else float("nan")
            ),
        },
        "eta": eta,
        "truncation_drift": info["truncation_drift"],
        "norm_drift": info["norm_drift"],
        "runtime_s": round(time.perf_counter() - started, 3),
    }
    if "drive" in info:
        drive = info["drive"]
        summary["drive"] = {
            "kind": drive.kind,
            "j0": drive.j0,
            "t0_ps": config.drive.t0_ps,
            "tau_ps": config.drive.tau_ps,
            "omega_meV": energy_to_mev(drive.omega1, u),
            "calibrated": bool(config.drive.calibrate),
        }

    result = ScenarioResult(
        config=config,
        series=series,
        names=list(names),
        times_ps=times_ps,
        rows=rows,
        summary=summary,
    )
    if write_files:
        directory = Path(out_dir) if out_dir is not None else Path(config.output.directory)
        directory.mkdir(parents=True, exist_ok=True)
        base = _safe_name(config.output.basename or config.label or config.kind)
        result.csv_path = directory / f"{base}.csv"
        result.json_path = directory / f"{base}.json"
        write_series_csv(result.csv_path, times_ps, names, rows)
        result.json_path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
    return result


# ---------------------------------------------------------------------------
# output files


_COLUMN_GROUPS = (
    re.compile(r"^n(\d+)$"),
    re.compile(r"^P(\d+)_(\d+)$"),
    re.compile(r"^Q(\d+)$"),
    re.compile(r"^g2_(\d)(\d)$"),
    re.compile(r"^gamma(\d+)$"),
    re.compile(r"^H(\d+)$"),
)


def _csv_order(names: Sequence[str]) -> list[str]:
    """Column order for files: n, P per mode, Q, g2 pairs, gamma, H."""

    def rank(name: str):
        for group, pat in enumerate(_COLUMN_GROUPS):
            m = pat.match(name)
            if m:
                nums = tuple(int(g) for g in m.groups())
                if group == 1:
                    # populations sort by mode first, then Fock level
                    return (group, nums[1], nums[0])
                return (group,) + nums
        return (len(_COLUMN_GROUPS), 0, 0)

    return sorted(names, key=rank)


def _fmt_cell(value: float) -> str:
    return format(float(value), ".12g") if math.isfinite(value) else ""


def write_series_csv(path, times_ps, names: Sequence[str], rows: np.ndarray) -> None:
    """One row per snapshot; sub-floor (NaN) cells are left empty."""
    ordered = _csv_order(names)
    index = [list(names).index(n) for n in ordered]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["time_ps"] + ordered) + "\n")
        for t, row in zip(times_ps, rows):
            cells = [_fmt_cell(t)] + [_fmt_cell(row[i]) for i in index]
            fh.write(",".join(cells) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._=-]+", "_", name.strip()) or "run"


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    parameter: str
    values: tuple[float, ...]
    rows: list[dict]
    results: list[ScenarioResult | None]
    table_path: Path | None = None
    json_path: Path | None = None


def sweep_row_config(
    base: ScenarioConfig,
    parameter: str,
    value: float,
    *,
    units: UnitSystem | None = None,
    matter_store: dict | None = None,
) -> ScenarioConfig:
    """The exact per-row config a sweep runs, derivable independently."""
    u = units if units is not None else default_units()
    value = float(value)
    cfg = replace(base, sweep=None)
    if parameter == "theta1":
        cfg = replace(cfg, theta1_deg=value)
    elif parameter == "lambda":
        cfg = replace(cfg, modes=tuple(replace(m, lam=value) for m in base.modes))
    elif parameter == "xi1":
        if base.initial.kind != "coherent":
            raise ConfigError("xi1 sweeps need a coherent initial state")
        modes = list(base.modes)
        modes[0] = replace(modes[0], n_max=max(modes[0].n_max, _min_coherent_fock(value)))
        cfg = replace(
            cfg, modes=tuple(modes), initial=replace(base.initial, xi1=value)
        )
    elif parameter == "V0":
        if base.kind != "degenerate":
            raise ConfigError(
                "V0 sweeps retune the mode table from the ring gap and are defined "
                "for the degenerate scenario"
            )
        mspec = replace(base.matter, v0_mev=value)
        matter, _ = prepare_matter(mspec, u, matter_store)
        gap_mev = energy_to_mev(float(matter.energies[1] - matter.energies[0]), u)
        cfg = replace(
            cfg,
            matter=mspec,
            modes=(
                replace(base.modes[0], omega_mev=gap_mev),
                replace(base.modes[1], omega_mev=0.5 * gap_mev),
            ),
        )
    else:
        raise ConfigError(
            f"unknown sweep parameter {parameter!r}; choose from {', '.join(SWEEP_PARAMETERS)}"
        )
    suffix = f"{parameter}={value:g}"
    label = f"{base.label} {suffix}".strip()
    basename = f"{_safe_name(base.output.basename or base.label or base.kind)}_{_safe_name(suffix)}"
    return replace(cfg, label=label, output=replace(base.output, basename=basename))


def _max_workers(n_jobs: int, requested: int | None) -> int:
    if requested is not None:
        return max(1, requested)
    env = os.environ.get(MAX_WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, min(n_jobs, os.cpu_count() or 1))


def run_sweep(
    config: ScenarioConfig,
    sweep: SweepSpec | None = None,
    *,
    units: UnitSystem | None = None,
    matter_store: dict | None = None,
    out_dir=None,
    write_files: bool = True,
    max_workers: int | None = None,
) -> SweepResult:
    """One scenario run per swept value; failures are recorded per row."""
    sweep = sweep if sweep is not None else config.sweep
    if sweep is None:
        raise ConfigError("no sweep specified: pass one or declare it in the config")
    validate_sweep(sweep)
    u = units if units is not None else default_units()
    base = replace(config, sweep=None)
    store = matter_store if matter_store is not None else {}

    def one(value: float) -> tuple[ScenarioResult | None, dict]:
        row = {"parameter": sweep.parameter, "value": value, "error": None}
        try:
            cfg = sweep_row_config(base, sweep.parameter, value, units=u, matter_store=store)
            res = run_scenario(
                cfg, units=u, matter_store=store, out_dir=out_dir, write_files=write_files
            )
            row.update(
                label=cfg.label,
                n2_max=res.summary["extrema"]["n2_max"],
                t_n2_max_ps=res.summary["extrema"]["t_n2_max_ps"],
                q2_min=res.summary["extrema"]["q2_min"],
                t_q2_min_ps=res.summary["extrema"]["t_q2_min_ps"],
                eta=res.summary["eta"],
                runtime_s=res.summary["runtime_s"],
            )
            return res, row
        except Exception as exc:  # noqa: BLE001 - per-row failures must not stop the sweep
            row["error"] = f"{type(exc).__name__}: {exc}"
            return None, row

    with ThreadPoolExecutor(_max_workers(len(sweep.values), max_workers)) as pool:
        pairs = list(pool.map(one, sweep.values))
    results = [res for res, _ in pairs]
    rows = [row for _, row in pairs]

    out = SweepResult(parameter=sweep.parameter, values=tuple(sweep.values), rows=rows, results=results)
    if write_files:
        directory = Path(out_dir) if out_dir is not None else Path(base.output.directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = f"{_safe_name(base.output.basename or base.label or base.kind)}_{sweep.parameter}_sweep"
        out.table_path = directory / f"{stem}.csv"
        out.json_path = directory / f"{stem}.json"
        _write_sweep_table(out.table_path, rows)
        out.json_path.write_text(
            json.dumps(
                _jsonable({"parameter": sweep.parameter, "values": list(sweep.values), "rows": rows}),
                indent=2,
                sort_keys=True,
            )
        )
    return out


_SWEEP_COLUMNS = (
    "parameter",
    "value",
    "n2_max",
    "t_n2_max_ps",
    "q2_min",
    "t_q2_min_ps",
    "eta",
    "runtime_s",
    "error",
)


def _write_sweep_table(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SWEEP_COLUMNS)
        for row in rows:
            cells = []
            for col in _SWEEP_COLUMNS:
                value = row.get(col)
                if value is None:
                    cells.append("")
                elif isinstance(value, str):
                    cells.append(value)
                else:
                    cells.append(_fmt_cell(value))
            writer.writerow(cells)


# ---------------------------------------------------------------------------
# method comparison


@dataclass
class ComparisonResult:
    reference: str
    runs: dict[str, ScenarioResult]
    deviations: dict
    table_path: Path | None = None
    json_path: Path | None = None


def compare_methods(
    config: ScenarioConfig,
    methods: Sequence[str],
    *,
    units: UnitSystem | None = None,
    matter_store: dict | None = None,
    out_dir=None,
    write_files: bool = True,
    max_workers: int | None = None,
) -> ComparisonResult:
    """Run the same scenario per method on one grid; tabulate signed deviations."""
    if config.sweep is not None:
        raise ConfigError("this config declares a sweep; use run_sweep")
    requested = list(dict.fromkeys(methods))
    if not requested:
        raise ConfigError("no methods requested")
    for m in requested:
        if m not in METHOD_KINDS:
            raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHOD_KINDS)}")
    levels = config.method.levels or (0, 1, 2)
    u = units if units is not None else default_units()
    store = matter_store if matter_store is not None else {}
    base_name = _safe_name(config.output.basename or config.label or config.kind)

    def method_config(m: str) -> ScenarioConfig:
        spec = MethodSpec(kind=m, levels=levels if m == "few_level" else ())
        return replace(
            config,
            method=spec,
            output=replace(config.output, basename=f"{base_name}_{_method_label(spec)}"),
        )

    def one(m: str) -> ScenarioResult:
        return run_scenario(
            method_config(m), units=u, matter_store=store, out_dir=out_dir,
            write_files=write_files,
        )

    # solve the shared matter once before fanning out
    prepare_matter(config.matter, u, store)
    with ThreadPoolExecutor(_max_workers(len(requested), max_workers)) as pool:
        results = list(pool.map(one, requested))
    runs = dict(zip(requested, results))

    ref_name = requested[0]
    ref = runs[ref_name]
    for name, res in runs.items():
        if len(res.times_ps) != len(ref.times_ps) or not np.allclose(
            res.times_ps, ref.times_ps, rtol=0.0, atol=1e-9
        ):
            raise RuntimeError(
                f"method {name} produced a different time grid than {ref_name}; "
                "methods must share dt, t_final and record_stride"
            )

    labels = {m: _method_label(runs[m].config.method) for m in requested}
    deviations: dict = {"reference": labels[ref_name], "methods": {}}
    ref_cols = dict(zip(ref.names, ref.rows.T))
    for m in requested[1:]:
        res = runs[m]
        cols = dict(zip(res.names, res.rows.T))
        entries = []
        for name in _csv_order([n for n in res.names if n in ref_cols]):
            a, b = ref_cols[name], cols[name]
            mask = np.isfinite(a) & np.isfinite(b)
            if not mask.any():
                continue
            diff = np.where(mask, b - a, 0.0)
            i = int(np.argmax(np.abs(diff)))
            entries.append(
                {
                    "column": name,
                    "max_signed_deviation": float(diff[i]),
                    "t_ps": float(ref.times_ps[i]),
                }
            )
        deviations["methods"][labels[m]] = entries

    out = ComparisonResult(reference=labels[ref_name], runs=runs, deviations=deviations)
    if write_files:
        directory = Path(out_dir) if out_dir is not None else Path(config.output.directory)
        directory.mkdir(parents=True, exist_ok=True)
        out.table_path = directory / f"{base_name}_methods.csv"
        out.json_path = directory / f"{base_name}_methods.json"
        _write_comparison_table(out.table_path, requested, labels, runs)
        out.json_path.write_text(json.dumps(_jsonable(deviations), indent=2, sort_keys=True))
    return out


def _write_comparison_table(path, order: Sequence[str], labels: dict, runs: dict) -> None:
    ref = runs[order[0]]
    header = ["time_ps"]
    blocks = []
    for m in order:
        res = runs[m]
        ordered = _csv_order(res.names)
        index = [res.names.index(n) for n in ordered]
        header.extend(f"{n}.{labels[m]}" for n in ordered)
        blocks.append((res, index))
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for k, t in enumerate(ref.times_ps):
            cells = [_fmt_cell(t)]
            for res, index in blocks:
                cells.extend(_fmt_cell(res.rows[k][i]) for i in index)
            fh.write(",".join(cells) + "\n")
