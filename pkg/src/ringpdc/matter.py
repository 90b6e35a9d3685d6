"""2D quantum-ring matter subsystem: grid Hamiltonian, eigenstates, transition matrices.

The ring is a single effective electron in a mexican-hat potential

    H_el = -1/2 (d^2/dx^2 + d^2/dy^2) + 1/2 omega0^2 r^2 + V0 exp(-r^2/d^2)

on a uniform real-space grid (effective atomic units, hbar = m = 1).
Derivatives use centered finite-difference stencils; the wavefunction is
clamped to zero at the box edge (hard wall), which the confining potential
makes harmless for the low-lying states of interest.

Degenerate (+l, -l) eigenstate pairs returned by the real-symmetric solver
are arbitrary real combinations; classify_angular_momentum rotates each
degenerate cluster into complex eigenstates of L_z = -i (x d/dy - y d/dx)
so that the dipole selection rule |delta l| = 1 holds elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

# Centered finite-difference coefficients, offsets 0..order/2 (symmetric).
# Second derivative: f'' ~ (1/h^2) sum_k c2[k] (f[i+k] + f[i-k]), c2[0] counted once.
_C2 = {
    2: [-2.0, 1.0],
    4: [-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0],
    6: [-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0],
    8: [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0],
}
# First derivative: f' ~ (1/h) sum_{k>0} c1[k] (f[i+k] - f[i-k]).
_C1 = {
    2: [0.0, 1.0 / 2.0],
    4: [0.0, 2.0 / 3.0, -1.0 / 12.0],
    6: [0.0, 3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0],
    8: [0.0, 4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0],
}

BASIS_FORMAT_VERSION = "ringpdc-matter-v1"


@dataclass(frozen=True)
class GridSpec:
    """Uniform 2D grid. nx odd keeps the origin on a grid point."""

    nx: int
    ny: int
    dx: float
    dy: float
    stencil_order: int = 8

    def __post_init__(self):
        if self.stencil_order not in _C2:
            raise ValueError(f"unsupported stencil order {self.stencil_order}")
        reach = self.stencil_order // 2
        if self.nx < 2 * reach + 1 or self.ny < 2 * reach + 1:
            raise ValueError(
                f"grid {self.nx}x{self.ny} too small for order-{self.stencil_order} stencil"
            )
        if self.dx <= 0 or self.dy <= 0:
            raise ValueError("grid spacing must be positive")
        if self.nx % 2 == 0 or self.ny % 2 == 0:
            # odd counts keep the origin (and the phi = 0 reference axis used
            # for phase fixing) on the grid
            raise ValueError("nx and ny must be odd")

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) - (self.nx - 1) / 2.0) * self.dx

    @property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) - (self.ny - 1) / 2.0) * self.dy

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def weight(self) -> float:
        """Quadrature weight of the grid inner product."""
        return self.dx * self.dy


@dataclass(frozen=True)
class RingPotentialParams:
    """omega0, d, v0 in effective atomic units (energy, length, energy)."""

    omega0: float
    d: float
    v0: float

    def __post_init__(self):
        if self.omega0 <= 0 or self.d <= 0 or self.v0 < 0:
            raise ValueError("require omega0 > 0, d > 0, v0 >= 0")


@dataclass
class MatterEigenbasis:
    """Lowest eigenstates of the ring, energy-ascending.

    states[k] is the k-th wavefunction flattened row-major over (ix, iy),
    normalized under the grid inner product sum(|psi|^2) * dx * dy = 1.
    l_labels hold the angular momentum per state (0 for singlets), j_labels
    the 1-based energy-level index, so state k is phi_{j}^{l}.

    h_el is <phi_i|H|phi_j> in the stored basis.  After rotating a
    quasi-degenerate cluster to definite angular momentum it acquires tiny
    intra-cluster off-diagonal entries (the square grid splits |l| = 2, 4
    pairs at the 1e-4 Ha* level); carrying the full matrix keeps the
    represented dynamics exactly unitary-equivalent to the raw grid solve.
    When h_el is None the basis is exactly diagonal (diag(energies)).
    """

    energies: np.ndarray
    states: np.ndarray
    l_labels: np.ndarray
    j_labels: np.ndarray
    grid: GridSpec
    h_el: np.ndarray | None = None

    @property
    def n_states(self) -> int:
        return len(self.energies)

    def h_matrix(self) -> np.ndarray:
        if self.h_el is not None:
            return self.h_el
        return np.diag(self.energies).astype(complex)


def _deriv_matrix(n: int, h: float, order: int, kind: int) -> sp.csr_matrix:
    """1D derivative matrix, centered stencil, hard-wall boundary (rows near
    the edge simply lose their outside neighbors)."""
    coeff = (_C1 if kind == 1 else _C2)[order]
    scale = 1.0 / h if kind == 1 else 1.0 / h**2
    diags, offsets = [], []
    for k, c in enumerate(coeff):
        if k == 0:
            if kind == 2:
                diags.append(np.full(n, c * scale))
                offsets.append(0)
            continue
        upper = c * scale
        lower = -c * scale if kind == 1 else c * scale
        diags.append(np.full(n - k, upper))
        offsets.append(k)
        diags.append(np.full(n - k, lower))
        offsets.append(-k)
    return sp.diags(diags, offsets, shape=(n, n), format="csr")


def build_ring_hamiltonian(grid: GridSpec, pot: RingPotentialParams) -> sp.csr_matrix:
    """Sparse real-symmetric H_el on the flattened grid."""
    d2x = _deriv_matrix(grid.nx, grid.dx, grid.stencil_order, kind=2)
    d2y = _deriv_matrix(grid.ny, grid.dy, grid.stencil_order, kind=2)
    ix = sp.identity(grid.nx, format="csr")
    iy = sp.identity(grid.ny, format="csr")
    kinetic = -0.5 * (sp.kron(d2x, iy, format="csr") + sp.kron(ix, d2y, format="csr"))
    xx, yy = np.meshgrid(grid.x, grid.y, indexing="ij")
    r2 = (xx**2 + yy**2).ravel()
    v = 0.5 * pot.omega0**2 * r2 + pot.v0 * np.exp(-r2 / pot.d**2)
    return (kinetic + sp.diags(v, format="csr")).tocsr()


def momentum_operators(grid: GridSpec) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse p_x = -i d/dx and p_y = -i d/dy on the flattened grid.

    Returned matrices are the real derivative parts; callers multiply by -1j.
    """
    d1x = _deriv_matrix(grid.nx, grid.dx, grid.stencil_order, kind=1)
    d1y = _deriv_matrix(grid.ny, grid.dy, grid.stencil_order, kind=1)
    ix = sp.identity(grid.nx, format="csr")
    iy = sp.identity(grid.ny, format="csr")
    return sp.kron(d1x, iy, format="csr"), sp.kron(ix, d1y, format="csr")


def solve_eigenstates(
    h: sp.csr_matrix,
    n_states: int,
    grid: GridSpec,
    cluster_tol: float = 2e-2,
) -> MatterEigenbasis:
    """Lowest n_states eigenpairs, shift-inverted Lanczos, grid-normalized.

    Degenerate clusters (within cluster_tol, which must cover the grid's
    anisotropy splitting but stay below physical level gaps) are rotated to
    definite angular momentum and each state's phase is fixed so its value
    on the positive x axis is real positive (making -l states the complex
    conjugates of +l states).
    """
    if n_states < 1 or n_states > h.shape[0]:
        raise ValueError(f"n_states={n_states} out of range for dim {h.shape[0]}")
    # fixed ARPACK start so repeated solves return bit-identical states
    start = np.random.default_rng(0).standard_normal(h.shape[0])
    vals, vecs = eigsh(h.tocsc(), k=n_states, sigma=0.0, which="LM", v0=start)
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order].astype(complex) / np.sqrt(grid.weight)
    basis = MatterEigenbasis(
        energies=vals,
        states=vecs.T.copy(),
        l_labels=np.zeros(n_states, dtype=int),
        j_labels=np.zeros(n_states, dtype=int),
        grid=grid,
    )
    basis = classify_angular_momentum(basis, cluster_tol=cluster_tol)
    block = basis.states.T
    h_el = basis.states.conj() @ (h @ block) * grid.weight
    h_el = 0.5 * (h_el + h_el.conj().T)
    # Each definite-l state's energy is its expectation value; conjugate
    # pairs then agree to machine precision and the grid's small anisotropy
    # coupling lives only in h_el's off-diagonals. Reorder within clusters
    # by that energy (quantized so exact pairs keep their -l, +l order).
    diag = np.real(np.diag(h_el))
    perm = np.argsort(np.round(diag / 1e-9), kind="stable")
    return MatterEigenbasis(
        energies=diag[perm],
        states=basis.states[perm],
        l_labels=basis.l_labels[perm],
        j_labels=basis.j_labels[perm],
        grid=grid,
        h_el=h_el[np.ix_(perm, perm)],
    )


def _energy_clusters(energies: np.ndarray, tol: float) -> list[list[int]]:
    clusters = [[0]]
    for k in range(1, len(energies)):
        if energies[k] - energies[clusters[-1][0]] < tol:
            clusters[-1].append(k)
        else:
            clusters.append([k])
    return clusters


def classify_angular_momentum(
    basis: MatterEigenbasis, cluster_tol: float = 2e-2
) -> MatterEigenbasis:
    """Rotate degenerate clusters into L_z eigenstates and label them.

    Raises if any rotated state's <L_z> sits farther than 0.1 from an
    integer, which signals an under-resolved grid or a state count that
    truncates a degenerate level mid-cluster.
    """
    grid = basis.grid
    dxm, dym = momentum_operators(grid)
    xx, yy = np.meshgrid(grid.x, grid.y, indexing="ij")
    xr, yr = xx.ravel(), yy.ravel()

    def lz_apply(block: np.ndarray) -> np.ndarray:
        # L_z psi = -i (x d/dy - y d/dx) psi, block shape (npts, k)
        return -1j * (xr[:, None] * (dym @ block) - yr[:, None] * (dxm @ block))

    states = basis.states.copy()
    l_labels = np.zeros(basis.n_states, dtype=int)
    j_labels = np.zeros(basis.n_states, dtype=int)
    for j, cluster in enumerate(_energy_clusters(basis.energies, cluster_tol), start=1):
        block = states[cluster].T
        lz_block = lz_apply(block)
        m = block.conj().T @ lz_block * grid.weight
        m = 0.5 * (m + m.conj().T)
        lz_vals, rot = np.linalg.eigh(m)
        rotated = block @ rot
        # verify the rotation really diagonalized L_z on this cluster
        check = rotated.conj().T @ lz_apply(rotated) * grid.weight
        lz_diag = np.real(np.diag(check))
        if np.max(np.abs(lz_diag - np.round(lz_diag))) > 0.1:
            raise RuntimeError(
                f"angular momentum classification failed in level {j}: "
                f"<L_z> = {lz_diag} not near integers. Either the grid is "
                "under-resolved or the requested state count truncates a "
                "degenerate level; request enough states to complete it."
            )
        # a truncated cluster can still produce integer <L_z> (a lone member
        # of a +-l pair is a real combination with <L_z> = 0), so also require
        # small L_z variance, which such a state cannot have
        lz2 = rotated.conj().T @ lz_apply(lz_apply(rotated)) * grid.weight
        lz_var = np.real(np.diag(lz2)) - lz_diag**2
        if np.max(lz_var) > 0.5:
            raise RuntimeError(
                f"angular momentum classification failed in level {j}: "
                f"var(L_z) = {lz_var} too large for definite-l states. The "
                "requested state count likely truncates a degenerate level; "
                "request enough states to complete it."
            )
        labels = np.round(lz_diag).astype(int)
        idx = np.argsort(labels)
        for pos, ci in enumerate(cluster):
            col = rotated[:, idx[pos]]
            states[ci] = _fix_phase(col, grid)
            l_labels[ci] = labels[idx[pos]]
            j_labels[ci] = j
    return MatterEigenbasis(
        energies=basis.energies.copy(),
        states=states,
        l_labels=l_labels,
        j_labels=j_labels,
        grid=grid,
    )


def _fix_phase(psi: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Make psi real positive at its largest-magnitude point on the x >= 0 half
    of the y = 0 row (phi = 0 axis, where f(r) e^{i l phi} is real)."""
    iy0 = (grid.ny - 1) // 2
    row = psi.reshape(grid.nx, grid.ny)[:, iy0]
    half = row[(grid.nx - 1) // 2 :]
    k = int(np.argmax(np.abs(half)))
    ref = half[k]
    if abs(ref) < 1e-12:
        k = int(np.argmax(np.abs(psi)))
        ref = psi[k]
    return psi * (abs(ref) / ref)


@dataclass(frozen=True)
class TransitionMatrices:
    """Pairwise dipole and momentum matrix elements in the eigenbasis.

    x_dip[i, j] = <phi_i| x |phi_j>, px[i, j] = <phi_i| -i d/dx |phi_j>;
    all four matrices are Hermitian as operators.
    """

    x_dip: np.ndarray
    y_dip: np.ndarray
    px: np.ndarray
    py: np.ndarray


def transition_matrices(basis: MatterEigenbasis) -> TransitionMatrices:
    grid = basis.grid
    xx, yy = np.meshgrid(grid.x, grid.y, indexing="ij")
    xr, yr = xx.ravel(), yy.ravel()
    block = basis.states.T  # (npts, n)
    conj = basis.states.conj()  # (n, npts)
    w = grid.weight
    x_dip = conj @ (xr[:, None] * block) * w
    y_dip = conj @ (yr[:, None] * block) * w
    dxm, dym = momentum_operators(grid)
    px = conj @ (-1j * (dxm @ block)) * w
    py = conj @ (-1j * (dym @ block)) * w

    def herm(a):
        return 0.5 * (a + a.conj().T)

    return TransitionMatrices(herm(x_dip), herm(y_dip), herm(px), herm(py))


def save_eigenbasis(path, basis: MatterEigenbasis, pot: RingPotentialParams) -> None:
    """Versioned container so propagation runs can skip re-diagonalization."""
    np.savez_compressed(
        path,
        format_version=BASIS_FORMAT_VERSION,
        nx=basis.grid.nx,
        ny=basis.grid.ny,
        dx=basis.grid.dx,
        dy=basis.grid.dy,
        stencil_order=basis.grid.stencil_order,
        omega0=pot.omega0,
        d=pot.d,
        v0=pot.v0,
        energies=basis.energies,
        states=basis.states,
        l_labels=basis.l_labels,
        j_labels=basis.j_labels,
        h_el=basis.h_matrix(),
    )


def load_eigenbasis(path) -> tuple[MatterEigenbasis, RingPotentialParams]:
    data = np.load(path, allow_pickle=False)
    version = str(data["format_version"])
    if version != BASIS_FORMAT_VERSION:
        raise ValueError(f"unsupported eigenbasis container version {version!r}")
    grid = GridSpec(
        nx=int(data["nx"]),
        ny=int(data["ny"]),
        dx=float(data["dx"]),
        dy=float(data["dy"]),
        stencil_order=int(data["stencil_order"]),
    )
    pot = RingPotentialParams(
        omega0=float(data["omega0"]), d=float(data["d"]), v0=float(data["v0"])
    )
    basis = MatterEigenbasis(
        energies=data["energies"],
        states=data["states"],
        l_labels=data["l_labels"],
        j_labels=data["j_labels"],
        grid=grid,
        h_el=data["h_el"],
    )
    return basis, pot


def solve_ring(
    grid: GridSpec,
    pot: RingPotentialParams,
    n_states: int,
    cache_path=None,
) -> MatterEigenbasis:
    """Diagonalize the ring, reusing a cached eigenbasis when it matches."""
    if cache_path is not None:
        try:
            cached, cached_pot = load_eigenbasis(cache_path)
        except (OSError, ValueError, KeyError):
            cached = None
        else:
            same_grid = cached.grid == grid
            same_pot = (
                abs(cached_pot.omega0 - pot.omega0) < 1e-12
                and abs(cached_pot.d - pot.d) < 1e-12
                and abs(cached_pot.v0 - pot.v0) < 1e-12
            )
            if same_grid and same_pot and cached.n_states >= n_states:
                return MatterEigenbasis(
                    energies=cached.energies[:n_states],
                    states=cached.states[:n_states],
                    l_labels=cached.l_labels[:n_states],
                    j_labels=cached.j_labels[:n_states],
                    grid=cached.grid,
                    h_el=cached.h_matrix()[:n_states, :n_states],
                )
    h = build_ring_hamiltonian(grid, pot)
    basis = solve_eigenstates(h, n_states, grid)
    if cache_path is not None:
        save_eigenbasis(cache_path, basis, pot)
    return basis
