"""Photon-statistics measurements on coupled amplitudes.

Everything reduces to tensor marginals of |psi|^2 over the CoupledBasis
shape: occupations and Fock populations, Mandel Q, cross correlations from
joint two-mode marginals, subsystem purity by index-sliced contraction
(the full density matrix is never materialized), and the photonic energies
w (n + 1/2).

Samples where an occupation sits below OCCUPATION_FLOOR make Q and g2
numerically meaningless; those are reported as NaN gaps, never as zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hamiltonian import CoupledBasis

OCCUPATION_FLOOR = 1e-6


def _amps(psi) -> np.ndarray:
    return psi.amplitudes if hasattr(psi, "amplitudes") else np.asarray(psi)


def _mode_axis(basis: CoupledBasis, mode: int) -> int:
    if not 0 <= mode < len(basis.mode_dims):
        raise ValueError(f"mode slot {mode} not in basis with {len(basis.mode_dims)} modes")
    return 1 + mode


def mode_marginal(psi, basis: CoupledBasis, mode: int) -> np.ndarray:
    """Probability of each Fock level of one mode (all else traced out)."""
    axis = _mode_axis(basis, mode)
    probs = np.abs(_amps(psi).reshape(basis.shape)) ** 2
    other = tuple(i for i in range(probs.ndim) if i != axis)
    return probs.sum(axis=other)


def joint_marginal(psi, basis: CoupledBasis, alpha: int, beta: int) -> np.ndarray:
    """Joint Fock-level probabilities of two modes."""
    if alpha == beta:
        raise ValueError("joint marginal needs two distinct modes")
    ax_a, ax_b = _mode_axis(basis, alpha), _mode_axis(basis, beta)
    probs = np.abs(_amps(psi).reshape(basis.shape)) ** 2
    other = tuple(i for i in range(probs.ndim) if i not in (ax_a, ax_b))
    out = probs.sum(axis=other)
    return out if ax_a < ax_b else out.T


def mode_occupation(psi, basis: CoupledBasis, mode: int) -> float:
    p = mode_marginal(psi, basis, mode)
    return float(np.dot(np.arange(len(p)), p))


def fock_population(psi, basis: CoupledBasis, mode: int, k: int) -> float:
    p = mode_marginal(psi, basis, mode)
    if not 0 <= k < len(p):
        raise ValueError(f"Fock level {k} beyond the truncation {len(p) - 1}")
    return float(p[k])


def mandel_q(psi, basis: CoupledBasis, mode: int) -> float:
    """(<n(n-1)> - <n>^2) / <n>; NaN below the occupation floor."""
    p = mode_marginal(psi, basis, mode)
    k = np.arange(len(p))
    n = float(np.dot(k, p))
    if n < OCCUPATION_FLOOR:
        return float("nan")
    nn = float(np.dot(k * (k - 1), p))
    return (nn - n * n) / n


def g2_cross(psi, basis: CoupledBasis, alpha: int, beta: int) -> float:
    """<n_a n_b> / (<n_a><n_b>); NaN when either occupation is floored."""
    joint = joint_marginal(psi, basis, alpha, beta)
    ka = np.arange(joint.shape[0])
    kb = np.arange(joint.shape[1])
    na = float(ka @ joint.sum(axis=1))
    nb = float(joint.sum(axis=0) @ kb)
    if na < OCCUPATION_FLOOR or nb < OCCUPATION_FLOOR:
        return float("nan")
    nanb = float(ka @ joint @ kb)
    return nanb / (na * nb)


def purity(psi, basis: CoupledBasis, subsystem) -> float:
    """Tr(rho^2) of one tensor factor: "matter", a mode slot, or "bath"."""
    shape = basis.shape
    if subsystem == "matter":
        axis = 0
    elif subsystem == "bath":
        if basis.bath is None:
            raise ValueError("basis has no bath sector")
        axis = len(shape) - 1
    else:
        axis = _mode_axis(basis, int(subsystem))
    tensor = np.moveaxis(_amps(psi).reshape(shape), axis, 0)
    flat = tensor.reshape(shape[axis], -1)
    rho = flat @ flat.conj().T
    return float(np.real(np.sum(np.abs(rho) ** 2)))


def photon_energy(psi, basis: CoupledBasis, mode: int, omega: float) -> float:
    return omega * (mode_occupation(psi, basis, mode) + 0.5)


@dataclass
class ObservableSeries:
    """Per-snapshot photon statistics for every quantized mode.

    Keys are mode slots (0-based); NaN entries mark samples below the
    occupation floor.  Times stay in effective atomic units; callers
    convert for presentation.
    """

    times: np.ndarray
    occupations: dict[int, np.ndarray]
    populations: dict[tuple[int, int], np.ndarray]
    mandel: dict[int, np.ndarray]
    g2: dict[tuple[int, int], np.ndarray]
    purities: dict[int, np.ndarray]
    energies: dict[int, np.ndarray]
    method: str = "quantum"
    extras: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_modes(self) -> int:
        return len(self.occupations)


def snapshot_columns(
    basis: CoupledBasis, omegas: Sequence[float], fock_levels: Sequence[int] = (1, 2, 3)
) -> tuple[list[str], Callable]:
    """One propagate() observer computing every series column at once.

    Returns (names, observer); the observer emits one float vector per
    snapshot, sharing the |psi|^2 tensor across all columns instead of
    recomputing it per observable.
    """
    n_modes = len(basis.mode_dims)
    if len(omegas) != n_modes:
        raise ValueError("one frequency per quantized mode required")
    names: list[str] = []
    for m in range(n_modes):
        names.append(f"n{m + 1}")
        names.extend(f"P{k}_{m + 1}" for k in fock_levels)
        names.append(f"Q{m + 1}")
        names.append(f"gamma{m + 1}")
        names.append(f"H{m + 1}")
    for a in range(n_modes):
        for b in range(a + 1, n_modes):
            names.append(f"g2_{a + 1}{b + 1}")

    def observer(state) -> np.ndarray:
        amps = _amps(state)
        tensor = amps.reshape(basis.shape)
        probs = np.abs(tensor) ** 2
        row: list[float] = []
        for m in range(n_modes):
            axis = 1 + m
            other = tuple(i for i in range(probs.ndim) if i != axis)
            marg = probs.sum(axis=other)
            k = np.arange(len(marg))
            n = float(np.dot(k, marg))
            row.append(n)
            for lvl in fock_levels:
                row.append(float(marg[lvl]) if lvl < len(marg) else 0.0)
            if n < OCCUPATION_FLOOR:
                row.append(float("nan"))
            else:
                nn = float(np.dot(k * (k - 1), marg))
                row.append((nn - n * n) / n)
            flat = np.moveaxis(tensor, axis, 0).reshape(basis.shape[axis], -1)
            rho = flat @ flat.conj().T
            row.append(float(np.real(np.sum(np.abs(rho) ** 2))))
            row.append(omegas[m] * (n + 0.5))
        for a in range(n_modes):
            for b in range(a + 1, n_modes):
                ax_a, ax_b = 1 + a, 1 + b
                other = tuple(i for i in range(probs.ndim) if i not in (ax_a, ax_b))
                joint = probs.sum(axis=other)
                ka = np.arange(joint.shape[0])
                kb = np.arange(joint.shape[1])
                na = float(ka @ joint.sum(axis=1))
                nb = float(joint.sum(axis=0) @ kb)
                if na < OCCUPATION_FLOOR or nb < OCCUPATION_FLOOR:
                    row.append(float("nan"))
                else:
                    row.append(float(ka @ joint @ kb) / (na * nb))
        return np.asarray(row)

    return names, observer


def series_from_records(
    times: np.ndarray,
    names: Sequence[str],
    rows: np.ndarray,
    fock_levels: Sequence[int] = (1, 2, 3),
    method: str = "quantum",
) -> ObservableSeries:
    """Assemble an ObservableSeries from the matrix a snapshot observer built."""
    data = {name: np.real(rows[:, i]) for i, name in enumerate(names)}
    modes = sorted(
        int(name[1:]) - 1 for name in names if name.startswith("n") and name[1:].isdigit()
    )
    return ObservableSeries(
        times=np.asarray(times, dtype=float),
        occupations={m: data[f"n{m + 1}"] for m in modes},
        populations={
            (m, k): data[f"P{k}_{m + 1}"]
            for m in modes
            for k in fock_levels
            if f"P{k}_{m + 1}" in data
        },
        mandel={m: data[f"Q{m + 1}"] for m in modes},
        g2={
            (a, b): data[f"g2_{a + 1}{b + 1}"]
            for a in modes
            for b in modes
            if a < b and f"g2_{a + 1}{b + 1}" in data
        },
        purities={m: data[f"gamma{m + 1}"] for m in modes},
        energies={m: data[f"H{m + 1}"] for m in modes},
        method=method,
    )


def efficiency_eta(series: ObservableSeries) -> float:
    """max_t H_2(t) / H_1(t0): down-converted photon energy over the pump's."""
    if 0 not in series.energies or 1 not in series.energies:
        raise ValueError("series lacks pump or signal photon energies")
    h1_start = series.energies[0][0]
    if not np.isfinite(h1_start) or h1_start <= 0.0:
        raise ValueError("no pump energy at the start of the series")
    return float(np.nanmax(series.energies[1]) / h1_start)


@dataclass(frozen=True)
class SeriesExtrema:
    n2_max: float
    t_n2_max: float
    q2_min: float
    t_q2_min: float


def series_extrema(series: ObservableSeries, t_max: float | None = None) -> SeriesExtrema:
    """Signal-mode occupation maximum and Mandel-Q minimum with their times."""
    if 1 not in series.occupations:
        raise ValueError("series has no signal mode")
    times = series.times
    mask = np.ones(len(times), dtype=bool) if t_max is None else times <= t_max
    if not mask.any():
        raise ValueError("window excludes every sample")
    t_w = times[mask]
    n2 = series.occupations[1][mask]
    q2 = series.mandel[1][mask]
    i_n = int(np.nanargmax(n2))
    # an unpopulated mode carries no statistics; count those epochs as Q = 0
    # so the minimum of an always-super-Poissonian signal reads 0, not +inf
    q2 = np.where(np.isfinite(q2), q2, 0.0)
    i_q = int(np.argmin(q2))
    return SeriesExtrema(
        n2_max=float(n2[i_n]),
        t_n2_max=float(t_w[i_n]),
        q2_min=float(q2[i_q]),
        t_q2_min=float(t_w[i_q]),
    )
