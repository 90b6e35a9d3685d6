"""Assembly tests: tensor bookkeeping, geometry factors, restricted-bath
algebra against a dense projected oracle, pump schemes, and calibration."""

import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ringpdc import hamiltonian as ham
from ringpdc.matter import transition_matrices
from ringpdc.photon import (
    BathSpec,
    FockMode,
    number_op,
    quadratures,
    sample_bath,
)
from ringpdc.units import default_units, energy_to_eff

U = default_units()
W1 = energy_to_eff(24.65, U)
W2 = energy_to_eff(1.36, U)
W3 = energy_to_eff(23.29, U)


@pytest.fixture(scope="module")
def matter3(ring200):
    tm_full = transition_matrices(ring200)
    return ham.restrict_levels(ring200, tm_full, [0, 1, 2])


@pytest.fixture(scope="module")
def tm_full(ring200):
    return transition_matrices(ring200)


def default_modes(n_max=4, lam=0.02):
    e1, e2, e3 = ham.polarization_vectors(ham.MixingAngles())
    return [
        FockMode(W1, n_max, lam, e1),
        FockMode(W2, n_max, lam, e2),
        FockMode(W3, n_max, lam, e3),
    ]


class TestCoupledBasis:
    def test_shape_and_dim(self):
        basis = ham.CoupledBasis(3, (5, 4))
        assert basis.shape == (3, 5, 4)
        assert basis.dim == 60

    def test_bath_extends_shape(self):
        from ringpdc.photon import enumerate_bath_basis

        bath = enumerate_bath_basis(2, 2)
        basis = ham.CoupledBasis(3, (4,), bath=bath)
        assert basis.shape == (3, 4, 6)
        assert basis.dim == 72

    def test_validation(self):
        with pytest.raises(ValueError):
            ham.CoupledBasis(0, (4,))
        with pytest.raises(ValueError):
            ham.CoupledBasis(3, (1,))

    @given(
        idx=st.tuples(
            st.integers(0, 2), st.integers(0, 4), st.integers(0, 3)
        )
    )
    def test_flatten_unflatten_bijection(self, idx):
        basis = ham.CoupledBasis(3, (5, 4))
        assert basis.unflatten(basis.flatten(idx)) == idx

    def test_row_major_order(self):
        # matter slowest, last mode fastest
        basis = ham.CoupledBasis(2, (3, 4))
        assert basis.flatten((0, 0, 1)) == 1
        assert basis.flatten((0, 1, 0)) == 4
        assert basis.flatten((1, 0, 0)) == 12


class TestHermitianCertificate:
    def test_accepts_hermitian(self):
        m = sp.csr_matrix(np.array([[1.0, 2.0 - 1j], [2.0 + 1j, 3.0]]))
        op = ham.SparseHermitianOp(m)
        assert op.dim == 2

    def test_rejects_defect(self):
        m = sp.csr_matrix(np.array([[1.0, 2.0], [2.0 + 1e-6, 3.0]]))
        with pytest.raises(ValueError, match="Hermiticity defect"):
            ham.SparseHermitianOp(m)

    def test_expectation_real(self):
        m = sp.csr_matrix(np.array([[1.0, 1j], [-1j, 2.0]]))
        op = ham.SparseHermitianOp(m)
        v = np.array([0.6, 0.8j])
        assert isinstance(op.expectation(v), float)


class TestGeometry:
    def test_three_mode_vectors_at_ninety(self):
        e1, e2, e3 = ham.polarization_vectors(ham.MixingAngles())
        assert e1 == (1.0, 0.0)
        assert abs(e2[0] + 1.0) < 1e-15 and abs(e2[1]) < 1e-15
        assert abs(e3[0] - 1.0) < 1e-15 and abs(e3[1]) < 1e-15

    def test_three_mode_vectors_at_zero(self):
        ang = ham.MixingAngles(theta2=0.0, theta3=0.0)
        _, e2, e3 = ham.polarization_vectors(ang)
        assert e2 == (0.0, 1.0)
        assert e3 == (0.0, 1.0)

    def test_degenerate_vectors(self):
        e1, e2 = ham.degenerate_polarization_vectors(0.0)
        assert e1 == (1.0, 0.0) and e2 == (0.0, 1.0)
        e1, _ = ham.degenerate_polarization_vectors(math.pi / 2)
        assert abs(e1[0]) < 1e-15 and abs(e1[1] - 1.0) < 1e-15

    def test_angle_validation(self):
        with pytest.raises(ValueError):
            ham.MixingAngles(theta2=math.inf)

    def test_mode_polarization_mismatch_rejected(self, matter3):
        mb, tm = matter3
        modes = default_modes()
        bad = [FockMode(W1, 4, 0.02, (0.0, 1.0)), modes[1], modes[2]]
        basis = ham.CoupledBasis(3, (5, 5, 5))
        with pytest.raises(ValueError, match="polarization"):
            ham.assemble_system(basis, mb, tm, bad, ham.MixingAngles())


class TestEmbed:
    def test_identity_embedding(self):
        basis = ham.CoupledBasis(2, (3,))
        eye = ham.embed(basis)
        assert abs(eye - sp.identity(6)).max() == 0.0

    def test_mode_slot_placement(self):
        basis = ham.CoupledBasis(1, (2, 3))
        n1 = ham.embed(basis, mode_ops={1: sp.diags(np.arange(3.0)).tocsr()})
        # occupation of the second mode read off a basis state
        k = basis.flatten((0, 1, 2))
        assert n1[k, k] == 2.0

    def test_matter_shape_mismatch(self):
        basis = ham.CoupledBasis(2, (3,))
        with pytest.raises(ValueError, match="matter operator shape"):
            ham.embed(basis, matter_op=np.eye(3))

    def test_bath_op_without_bath(self):
        basis = ham.CoupledBasis(2, (3,))
        with pytest.raises(ValueError, match="bath"):
            ham.embed(basis, bath_op=sp.identity(4))


class TestProductState:
    def test_normalized_product(self):
        basis = ham.CoupledBasis(2, (3,))
        psi = ham.product_state(basis, np.array([1.0, 0.0]), [np.array([0.0, 1.0, 0.0])])
        assert abs(np.linalg.norm(psi) - 1.0) < 1e-14
        assert psi[basis.flatten((0, 1))] == 1.0

    def test_dimension_mismatch(self):
        basis = ham.CoupledBasis(2, (3,))
        with pytest.raises(ValueError):
            ham.product_state(basis, np.ones(3), [np.ones(3)])
        with pytest.raises(ValueError):
            ham.product_state(basis, np.ones(2), [np.ones(4)])

    def test_bath_defaults_to_vacuum(self):
        from ringpdc.photon import enumerate_bath_basis

        bath = enumerate_bath_basis(2, 2)
        basis = ham.CoupledBasis(1, (2,), bath=bath)
        psi = ham.product_state(basis, np.ones(1), [np.array([1.0, 0.0])])
        assert psi[basis.flatten((0, 0, bath.index_of(())))] == 1.0


class TestDecoupledSpectrum:
    def test_lambda_zero_energies_additive(self, matter3):
        mb, tm = matter3
        modes = [
            FockMode(W1, 2, 0.0, (1.0, 0.0)),
            FockMode(W2, 2, 0.0, (-1.0, 0.0)),
            FockMode(W3, 2, 0.0, (1.0, 0.0)),
        ]
        # polarization irrelevant at lambda=0 but must match the geometry
        h, basis = ham.assemble_few_level(
            [0, 1, 2], mb, tm, modes, ham.MixingAngles()
        )
        vals = np.linalg.eigvalsh(h.matrix.toarray())
        expect = sorted(
            mb.energies[i]
            + (n1 + 0.5) * W1
            + (n2 + 0.5) * W2
            + (n3 + 0.5) * W3
            for i in range(3)
            for n1 in range(3)
            for n2 in range(3)
            for n3 in range(3)
        )
        assert np.abs(vals - np.array(expect)).max() < 1e-12


class TestFewLevel:
    def test_all_levels_equals_full_assembly(self, ring200, tm_full):
        modes = default_modes(n_max=2)
        basis = ham.CoupledBasis(12, (3, 3, 3))
        full = ham.assemble_system(basis, ring200, tm_full, modes, ham.MixingAngles())
        sliced, _ = ham.assemble_few_level(
            range(12), ring200, tm_full, modes, ham.MixingAngles()
        )
        diff = abs(full.matrix - sliced.matrix)
        assert (diff.max() if diff.nnz else 0.0) < 1e-10

    def test_incomplete_pair_rejected(self, ring200, tm_full):
        modes = default_modes(n_max=2)
        with pytest.raises(ValueError, match="partner"):
            ham.assemble_few_level([0, 1], ring200, tm_full, modes, ham.MixingAngles())

    def test_duplicate_levels_rejected(self, ring200, tm_full):
        modes = default_modes(n_max=2)
        with pytest.raises(ValueError, match="duplicate"):
            ham.assemble_few_level(
                [0, 1, 1, 2], ring200, tm_full, modes, ham.MixingAngles()
            )

    def test_out_of_range_rejected(self, ring200, tm_full):
        modes = default_modes(n_max=2)
        with pytest.raises(ValueError, match="outside"):
            ham.assemble_few_level(
                [0, 1, 2, 40], ring200, tm_full, modes, ham.MixingAngles()
            )

    def test_restrict_levels_slices_consistently(self, ring200, tm_full):
        mb, tm = ham.restrict_levels(ring200, tm_full, [0, 1, 2, 3, 4])
        assert mb.n_states == 5
        assert np.allclose(mb.energies, ring200.energies[:5])
        assert np.allclose(tm.px, tm_full.px[:5, :5])
        assert list(mb.l_labels) == list(ring200.l_labels[:5])


class TestGeometryFactors:
    def test_ninety_degrees_couples_px_only(self, matter3):
        # at theta2 = theta3 = 90 deg all bilinears lie along x: zeroing py
        # must not change the Hamiltonian
        mb, tm = matter3
        from ringpdc.matter import TransitionMatrices

        tm_no_py = TransitionMatrices(
            x_dip=tm.x_dip, y_dip=tm.y_dip, px=tm.px, py=np.zeros_like(tm.py)
        )
        modes = default_modes(n_max=3)
        basis = ham.CoupledBasis(3, (4, 4, 4))
        h_a = ham.assemble_system(basis, mb, tm, modes, ham.MixingAngles())
        h_b = ham.assemble_system(basis, mb, tm_no_py, modes, ham.MixingAngles())
        diff = abs(h_a.matrix - h_b.matrix)
        assert (diff.max() if diff.nnz else 0.0) < 1e-12

    def test_pump_signal_ladder_element(self, matter3):
        # the mode-1/mode-2 diamagnetic term carries e1.e2 = -sin(theta2)
        mb, tm = matter3
        modes = default_modes(n_max=3)
        basis = ham.CoupledBasis(3, (4, 4, 4))
        h = ham.assemble_system(basis, mb, tm, modes, ham.MixingAngles())
        bra = basis.flatten((0, 1, 1, 0))
        ket = basis.flatten((0, 0, 0, 0))
        lam = 0.02
        expect = lam * lam * (-1.0) / (2.0 * math.sqrt(W1 * W2))
        assert abs(h.matrix[bra, ket] - expect) < 1e-12

    def test_pump_idler_ladder_element_sign(self, matter3):
        # e1.e3 = +sin(theta3): opposite sign to the mode-1/mode-2 term
        mb, tm = matter3
        modes = default_modes(n_max=3)
        basis = ham.CoupledBasis(3, (4, 4, 4))
        h = ham.assemble_system(basis, mb, tm, modes, ham.MixingAngles())
        bra = basis.flatten((0, 1, 0, 1))
        ket = basis.flatten((0, 0, 0, 0))
        lam = 0.02
        expect = lam * lam * (+1.0) / (2.0 * math.sqrt(W1 * W3))
        assert abs(h.matrix[bra, ket] - expect) < 1e-12

    def test_signal_idler_ladder_element(self, matter3):
        # e2.e3 = cos(theta2 + theta3) = -1 at the default angles
        mb, tm = matter3
        modes = default_modes(n_max=3)
        basis = ham.CoupledBasis(3, (4, 4, 4))
        h = ham.assemble_system(basis, mb, tm, modes, ham.MixingAngles())
        bra = basis.flatten((0, 0, 1, 1))
        ket = basis.flatten((0, 0, 0, 0))
        lam = 0.02
        expect = lam * lam * (-1.0) / (2.0 * math.sqrt(W2 * W3))
        assert abs(h.matrix[bra, ket] - expect) < 1e-12

    def test_degenerate_orthogonal_pump_has_no_cross_term(self, matter3):
        mb, tm = matter3
        for theta1, expect_zero in ((0.0, True), (math.pi / 3, False)):
            e1, e2 = ham.degenerate_polarization_vectors(theta1)
            modes = [FockMode(W2, 3, 0.017, e1), FockMode(W2 / 2, 3, 0.017, e2)]
            basis = ham.CoupledBasis(3, (4, 4))
            h = ham.assemble_degenerate(basis, mb, tm, modes, theta1)
            bra = basis.flatten((0, 1, 1))
            ket = basis.flatten((0, 0, 0))
            element = abs(h.matrix[bra, ket])
            if expect_zero:
                assert element < 1e-15
            else:
                assert element > 1e-7

    def test_mode_count_validation(self, matter3):
        mb, tm = matter3
        modes = default_modes(n_max=2)
        basis = ham.CoupledBasis(3, (3, 3))
        with pytest.raises(ValueError, match="three modes"):
            ham.assemble_system(basis, mb, tm, modes[:2], ham.MixingAngles())
        with pytest.raises(ValueError, match="two modes"):
            ham.assemble_degenerate(basis, mb, tm, modes, 0.0)


def dense_reference(matter_h, px, py, mode_specs, dims):
    """Independent dense construction: H_el + sum w(n+1/2) - A.p + A^2/2
    with per-factor numpy kron products (no shared code with embed)."""

    def ladder(n):
        return np.diag(np.sqrt(np.arange(1.0, n)), 1)

    def lift(op, slot):
        mats = [np.eye(d) for d in dims]
        mats[slot] = op
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    h = lift(matter_h, 0)
    ax = np.zeros((int(np.prod(dims)),) * 2)
    ay = np.zeros_like(ax)
    for slot, (w, lam, pol) in enumerate(mode_specs, start=1):
        n = dims[slot]
        a = ladder(n)
        h = h + lift(w * (np.diag(np.arange(n, dtype=float)) + 0.5 * np.eye(n)), slot)
        q = (a + a.T) / math.sqrt(2.0 * w)
        ax = ax + lam * pol[0] * lift(q, slot)
        ay = ay + lam * pol[1] * lift(q, slot)
    h = h - (ax @ lift(px, 0) + ay @ lift(py, 0)) + 0.5 * (ax @ ax + ay @ ay)
    return h


class TestDenseOracle:
    def test_degenerate_assembly_matches_dense(self, matter3):
        mb, tm = matter3
        theta1 = math.pi / 6
        e1, e2 = ham.degenerate_polarization_vectors(theta1)
        modes = [FockMode(W2, 2, 0.017, e1), FockMode(W2 / 2, 2, 0.017, e2)]
        basis = ham.CoupledBasis(3, (3, 3))
        h = ham.assemble_degenerate(basis, mb, tm, modes, theta1)
        ref = dense_reference(
            mb.h_matrix(),
            tm.px,
            tm.py,
            [(m.omega, m.lam, m.polarization) for m in modes],
            [3, 3, 3],
        )
        assert np.abs(h.matrix.toarray() - ref).max() < 1e-13

    def test_three_mode_assembly_matches_dense(self, matter3):
        mb, tm = matter3
        ang = ham.MixingAngles(theta2=math.pi / 3, theta3=math.pi / 5)
        evecs = ham.polarization_vectors(ang)
        modes = [
            FockMode(W1, 2, 0.014, evecs[0]),
            FockMode(W2, 2, 0.020, evecs[1]),
            FockMode(W3, 2, 0.026, evecs[2]),
        ]
        basis = ham.CoupledBasis(3, (3, 3, 3))
        h = ham.assemble_system(basis, mb, tm, modes, ang)
        ref = dense_reference(
            mb.h_matrix(),
            tm.px,
            tm.py,
            [(m.omega, m.lam, m.polarization) for m in modes],
            [3, 3, 3, 3],
        )
        assert np.abs(h.matrix.toarray() - ref).max() < 1e-13


@pytest.fixture(scope="module")
def bath_setup(matter3):
    mb, tm = matter3
    theta1 = math.pi / 6
    e1, e2 = ham.degenerate_polarization_vectors(theta1)
    main = [FockMode(W2, 2, 0.017, e1), FockMode(W2 / 2, 2, 0.017, e2)]
    spec = BathSpec(count=2, energy_windows=((1.0, 2.0, 2),), lambda_bath=0.007)
    bath_modes, bath_basis = sample_bath(spec, U)
    basis = ham.CoupledBasis(3, (3, 3), bath=bath_basis)
    h_main = ham.assemble_degenerate(basis, mb, tm, main, theta1)
    h_bath = ham.assemble_bath_terms(basis, mb, tm, main, bath_modes)
    return mb, tm, main, bath_modes, bath_basis, basis, h_main, h_bath


class TestBathAssembly:
    def test_total_matches_projected_dense_oracle(self, bath_setup):
        # roomy per-mode truncation + projection onto total bath occupation
        # <= 2 is the exact restricted-sector Hamiltonian
        mb, tm, main, bath_modes, bath_basis, basis, h_main, h_bath = bath_setup
        nb = 5
        dims = [3, 3, 3, nb, nb]
        specs = [(m.omega, m.lam, m.polarization) for m in main + list(bath_modes)]
        ref = dense_reference(mb.h_matrix(), tm.px, tm.py, specs, dims)
        rows = []
        for mi in range(3):
            for n1 in range(3):
                for n2 in range(3):
                    for cfg_idx in range(bath_basis.size):
                        occ = [0, 0]
                        for m in bath_basis.config_at(cfg_idx):
                            occ[m] += 1
                        flat = (((mi * 3 + n1) * 3 + n2) * nb + occ[0]) * nb + occ[1]
                        rows.append(flat)
        proj = np.zeros((len(rows), int(np.prod(dims))))
        for r, c in enumerate(rows):
            proj[r, c] = 1.0
        oracle = proj @ ref @ proj.T
        total = (h_main + h_bath).matrix.toarray()
        assert np.abs(total - oracle).max() < 1e-13

    def test_zero_bath_coupling_is_block_diagonal(self, matter3):
        mb, tm = matter3
        theta1 = math.pi / 6
        e1, e2 = ham.degenerate_polarization_vectors(theta1)
        main = [FockMode(W2, 2, 0.017, e1), FockMode(W2 / 2, 2, 0.017, e2)]
        spec = BathSpec(count=3, energy_windows=((1.0, 2.0, 3),), lambda_bath=0.0)
        bath_modes, bath_basis = sample_bath(spec, U)
        basis = ham.CoupledBasis(3, (3, 3), bath=bath_basis)
        h_bath = ham.assemble_bath_terms(basis, mb, tm, main, bath_modes)
        # only the diagonal bath energy survives
        diag = h_bath.matrix.diagonal()
        off = h_bath.matrix - sp.diags(diag)
        assert (abs(off).max() if off.nnz else 0.0) == 0.0

    def test_bath_mode_count_mismatch(self, bath_setup):
        mb, tm, main, bath_modes, bath_basis, basis, _, _ = bath_setup
        with pytest.raises(ValueError, match="bath mode list"):
            ham.assemble_bath_terms(basis, mb, tm, main, bath_modes[:1])

    def test_basis_without_bath_rejected(self, matter3):
        mb, tm = matter3
        basis = ham.CoupledBasis(3, (3, 3))
        with pytest.raises(ValueError, match="no bath"):
            ham.assemble_bath_terms(basis, mb, tm, [], [])


class TestSignalPair:
    def test_matches_dense_reference(self, matter3):
        mb, tm = matter3
        ang = ham.MixingAngles()
        _, e2, e3 = ham.polarization_vectors(ang)
        modes = [FockMode(W2, 2, 0.020, e2), FockMode(W3, 2, 0.020, e3)]
        basis = ham.CoupledBasis(3, (3, 3))
        h = ham.assemble_signal_pair(basis, mb, tm, modes, ang)
        ref = dense_reference(
            mb.h_matrix(),
            tm.px,
            tm.py,
            [(m.omega, m.lam, m.polarization) for m in modes],
            [3, 3, 3],
        )
        assert np.abs(h.matrix.toarray() - ref).max() < 1e-13


class TestDriveSpec:
    def test_validation(self):
        with pytest.raises(ValueError, match="kind"):
            ham.DriveSpec(kind="nonsense")
        with pytest.raises(ValueError, match="tau"):
            ham.DriveSpec(kind="classical_current", tau=0.0, omega1=1.0)
        with pytest.raises(ValueError, match="omega1"):
            ham.DriveSpec(kind="classical_current", tau=1.0, omega1=0.0)

    def test_current_shape(self):
        d = ham.DriveSpec(kind="classical_current", j0=2.0, t0=1.0, tau=0.5, omega1=3.0)
        t = 1.2
        expect = 2.0 * math.exp(-((t - 1.0) ** 2) / 0.25) * math.sin(3.0 * t)
        assert abs(d.current(t) - expect) < 1e-15

    def test_none_kind_is_silent(self):
        assert ham.DriveSpec().current(0.7) == 0.0


class TestCurrentDrive:
    def test_pattern_is_pump_quadrature(self, matter3):
        mb, tm = matter3
        mode1 = FockMode(W1, 3, 0.02, (1.0, 0.0))
        basis = ham.CoupledBasis(3, (4,))
        drive = ham.DriveSpec(kind="classical_current", j0=1.5, tau=2.0, omega1=W1)
        terms = ham.current_drive_terms(basis, mode1, drive)
        assert len(terms) == 1
        q, _ = quadratures(mode1)
        expect = 0.02 * ham.embed(basis, mode_ops={0: q.tocsr()})
        assert abs(terms[0].op - expect).max() < 1e-15
        t = 0.9
        h_t = ham.assemble_drive_term(terms, t)
        assert abs(h_t.matrix - drive.current(t) * expect).max() < 1e-14

    def test_kind_checked(self, matter3):
        mode1 = FockMode(W1, 3, 0.02, (1.0, 0.0))
        basis = ham.CoupledBasis(3, (4,))
        with pytest.raises(ValueError, match="classical_current"):
            ham.current_drive_terms(basis, mode1, ham.DriveSpec())


class TestClassicalPumpField:
    def test_homogeneous_solution(self):
        mode1 = FockMode(W1, 2, 0.02, (1.0, 0.0))
        d = ham.DriveSpec(
            kind="classical_field", j0=0.0, tau=5.0, omega1=W1, q1_init=1.0, q1dot_init=0.5
        )
        t = np.linspace(0.0, 30.0, 6001)
        q = ham.classical_pump_field(d, mode1, t)
        expect = np.cos(W1 * t) + (0.5 / W1) * np.sin(W1 * t)
        assert np.abs(q - expect).max() < 1e-12

    def test_quiet_drive_stays_zero(self):
        mode1 = FockMode(W1, 2, 0.02, (1.0, 0.0))
        d = ham.DriveSpec(kind="classical_field", j0=0.0, tau=5.0, omega1=W1)
        t = np.linspace(0.0, 10.0, 101)
        assert np.abs(ham.classical_pump_field(d, mode1, t)).max() == 0.0

    def test_resonant_growth_matches_analytic(self):
        # constant envelope: q(t) = -(lam j0 / 2 w^2)(sin wt - wt cos wt)
        mode1 = FockMode(W1, 2, 0.02, (1.0, 0.0))
        j0 = 0.3
        d = ham.DriveSpec(kind="classical_field", j0=j0, tau=1e8, omega1=W1)
        t = np.linspace(0.0, 40.0, 20001)
        q = ham.classical_pump_field(d, mode1, t)
        analytic = (
            -(mode1.lam * j0 / W1)
            * (np.sin(W1 * t) - W1 * t * np.cos(W1 * t))
            / (2 * W1)
        )
        assert np.abs(q - analytic).max() < 1e-7

    def test_kind_and_grid_validation(self):
        mode1 = FockMode(W1, 2, 0.02, (1.0, 0.0))
        with pytest.raises(ValueError, match="classical_field"):
            ham.classical_pump_field(
                ham.DriveSpec(kind="classical_current", tau=1.0, omega1=W1),
                mode1,
                np.linspace(0, 1, 10),
            )
        d = ham.DriveSpec(kind="classical_field", tau=1.0, omega1=W1)
        with pytest.raises(ValueError, match="t_grid"):
            ham.classical_pump_field(d, mode1, np.array([0.0]))


class TestFieldDrive:
    def test_requires_mode_one_removed(self, matter3):
        mb, tm = matter3
        ang = ham.MixingAngles()
        evecs = ham.polarization_vectors(ang)
        modes = [FockMode(W1, 2, 0.02, evecs[0]), FockMode(W2, 2, 0.02, evecs[1]), FockMode(W3, 2, 0.02, evecs[2])]
        basis = ham.CoupledBasis(3, (3, 3, 3))
        d = ham.DriveSpec(kind="classical_field", j0=1.0, tau=1.0, omega1=W1)
        with pytest.raises(ValueError, match="mode 1 removed"):
            ham.field_drive_terms(
                basis, tm, modes, ang, modes[0], d, np.linspace(0, 1, 10)
            )

    def test_terms_reproduce_manual_expansion(self, matter3):
        mb, tm = matter3
        ang = ham.MixingAngles()
        _, e2, e3 = ham.polarization_vectors(ang)
        signal = [FockMode(W2, 2, 0.020, e2), FockMode(W3, 2, 0.026, e3)]
        mode1 = FockMode(W1, 2, 0.014, (1.0, 0.0))
        basis = ham.CoupledBasis(3, (3, 3))
        t_grid = np.linspace(0.0, 12.0, 4001)
        d = ham.DriveSpec(kind="classical_field", j0=0.4, t0=2.0, tau=0.9, omega1=W1)
        terms = ham.field_drive_terms(basis, tm, signal, ang, mode1, d, t_grid)
        q1 = ham.classical_pump_field(d, mode1, t_grid)
        for t_probe in (3.0, 7.5):
            a1 = mode1.lam * float(np.interp(t_probe, t_grid, q1))
            q2 = quadratures(signal[0])[0]
            q3 = quadratures(signal[1])[0]
            manual = (
                -a1 * ham.embed(basis, matter_op=tm.px)
                + 0.5 * a1 * a1 * ham.embed(basis)
                + a1 * signal[0].lam * (e2[0] * 1.0) * ham.embed(basis, mode_ops={0: q2.tocsr()})
                + a1 * signal[1].lam * (e3[0] * 1.0) * ham.embed(basis, mode_ops={1: q3.tocsr()})
            )
            built = ham.assemble_drive_term(terms, t_probe)
            assert abs(built.matrix - manual).max() < 1e-12


class TestCalibration:
    def test_bisection_hits_target(self, matter3):
        mb, tm = matter3
        mode1 = FockMode(W1, 6, 0.02, (1.0, 0.0))
        drive = ham.DriveSpec(
            kind="classical_current", j0=1.0, t0=1.0, tau=0.4, omega1=W1
        )
        target, tol, t_check = 0.5, 0.02, 2.0
        calibrated = ham.calibrate_current_drive(
            mb, tm, mode1, drive, t_check, target=target, tol=tol, dt=0.02
        )
        # verify independently: hand-built pump-only Hamiltonian, fresh run
        from ringpdc.propagator import CoupledState, PropagatorConfig, ground_state, propagate

        basis = ham.CoupledBasis(3, (7,))
        q, _ = quadratures(mode1)
        h = ham.SparseHermitianOp(
            ham.embed(basis, matter_op=mb.h_matrix())
            + mode1.omega
            * ham.embed(basis, mode_ops={0: (number_op(mode1) + 0.5 * sp.identity(7)).tocsr()})
            - mode1.lam * ham.embed(basis, matter_op=tm.px, mode_ops={0: q.tocsr()})
            + 0.5 * mode1.lam**2 * ham.embed(basis, mode_ops={0: (q @ q).tocsr()})
        )
        _, psi0 = ground_state(h)
        terms = ham.current_drive_terms(basis, mode1, calibrated)
        final = propagate(
            h, CoupledState(psi0, 0.0), t_check, PropagatorConfig(dt=0.02), terms=terms
        )
        n_op = ham.embed(basis, mode_ops={0: number_op(mode1).tocsr()})
        n1 = float(np.real(np.vdot(final.amplitudes, n_op @ final.amplitudes)))
        assert abs(n1 - target) <= tol + 1e-6

    def test_unreachable_target_reports_bracket_failure(self, matter3):
        mb, tm = matter3
        mode1 = FockMode(W1, 3, 0.02, (1.0, 0.0))
        drive = ham.DriveSpec(
            kind="classical_current", j0=1.0, t0=1.0, tau=0.4, omega1=W1
        )
        with pytest.raises(RuntimeError, match="bracket"):
            ham.calibrate_current_drive(
                mb, tm, mode1, drive, 2.0, target=50.0, tol=0.1, dt=0.05, max_doublings=3
            )

    def test_kind_checked(self, matter3):
        mb, tm = matter3
        mode1 = FockMode(W1, 3, 0.02, (1.0, 0.0))
        with pytest.raises(ValueError, match="classical_current"):
            ham.calibrate_current_drive(mb, tm, mode1, ham.DriveSpec(), 1.0)
