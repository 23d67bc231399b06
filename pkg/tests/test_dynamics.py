import numpy as np
import pytest

from qndsim import fock
from qndsim.dynamics import (InteractionParams, Propagator, chi2_hamiltonian,
                             effective_hamiltonian_full,
                             effective_hamiltonian_leading, evolve)
from qndsim.fock import (PureState, basis_state, coherent_state, expectation,
                         identity, quadratures, squeeze_operator,
                         squeezed_vacuum_amplitudes, tensor, vacuum, variance)

R10 = np.sqrt(10)


def joint_ops(da, db):
    xa, pa = quadratures(da)
    xb, pb = quadratures(db)
    ia, ib = identity(da), identity(db)
    return {
        "XA": tensor(xa, ib), "PA": tensor(pa, ib),
        "XB": tensor(ia, xb), "PB": tensor(ia, pb),
        "XA2": tensor(xa @ xa, ib), "XAXB": tensor(xa, xb),
    }


class TestChi2Hamiltonian:
    def test_hand_evaluated_element(self):
        # <0,1|H|2,0> = -g <0|a^2|2><1|b^dag|0> = -g sqrt(2)
        h = chi2_hamiltonian(1.0, (3, 2)).dense()
        assert h[0 * 2 + 1, 2 * 2 + 0] == pytest.approx(-np.sqrt(2))

    def test_hermitian(self):
        h = chi2_hamiltonian(0.7, (6, 5))
        assert h.hermiticity_defect() < 1e-12

    def test_vacuum_diagonal(self):
        h = chi2_hamiltonian(1.0, (4, 4)).dense()
        assert h[0, 0] == 0.0

    def test_needs_two_modes(self):
        with pytest.raises(ValueError):
            chi2_hamiltonian(1.0, (4,))


class TestEffectiveHamiltonian:
    def test_reduces_to_chi2_at_unit_gain(self):
        params = InteractionParams(g=1.3, r_a=1.0, r_b=1.0, tau=0.5)
        h_eff = effective_hamiltonian_full(params, (8, 7)).dense()
        h = chi2_hamiltonian(1.3, (8, 7)).dense()
        assert np.abs(h_eff - h).max() < 1e-10

    def test_hermitian(self):
        params = InteractionParams(g=1.0, r_a=R10, r_b=R10, tau=1.0)
        assert effective_hamiltonian_full(params, (9, 8)).hermiticity_defect() < 1e-12
        assert effective_hamiltonian_leading(params, (9, 8)).hermiticity_defect() < 1e-12

    @pytest.mark.parametrize("squeezed_mode", ["a", "b"])
    def test_conjugation_oracle_ten_db(self, squeezed_mode):
        # direct conjugation S^dag H S on a truncation-safe low block; the
        # squeezed mode needs a deep Fock space for its squeezer to close
        if squeezed_mode == "a":
            dims, ra, rb = (140, 8), R10, 1.0
            low = [(na, nb) for na in range(5) for nb in range(8)]
        else:
            dims, ra, rb = (8, 140), 1.0, R10
            low = [(na, nb) for na in range(8) for nb in range(5)]
        params = InteractionParams(g=1.0, r_a=ra, r_b=rb, tau=1.0)
        h_eff = effective_hamiltonian_full(params, dims).dense()
        h = chi2_hamiltonian(1.0, dims).dense()
        sa = squeeze_operator(dims[0], ra, leak_tol=None) if ra > 1 else identity(dims[0])
        sb = squeeze_operator(dims[1], rb, leak_tol=None) if rb > 1 else identity(dims[1])
        s = tensor(sa, sb).dense()
        conj = s.conj().T @ h @ s
        idx = np.array([na * dims[1] + nb for na, nb in low])
        block_poly = h_eff[np.ix_(idx, idx)]
        block_conj = conj[np.ix_(idx, idx)]
        rel = np.abs(block_poly - block_conj).max() / np.abs(block_poly).max()
        assert rel < 1e-6

    def test_leading_commutes_with_x_squared(self):
        params = InteractionParams(g=1.0, r_a=R10, r_b=R10, tau=1.0)
        dims = (10, 9)
        h = effective_hamiltonian_leading(params, dims)
        xa, _ = quadratures(dims[0])
        xa2 = tensor(xa @ xa, identity(dims[1]))
        comm = h @ xa2 - xa2 @ h
        assert np.abs(comm.dense()).max() < 1e-12

    def test_g_eff_value(self):
        params = InteractionParams(g=1.0, r_a=R10, r_b=R10, tau=1.0)
        assert params.g_eff == pytest.approx(10 * np.sqrt(10), rel=1e-12)

    def test_leading_at_unit_gain(self):
        params = InteractionParams(g=1.0, r_a=1.0, r_b=1.0, tau=0.2)
        dims = (7, 6)
        h = effective_hamiltonian_leading(params, dims).dense()
        xa, _ = quadratures(dims[0])
        xb, _ = quadratures(dims[1])
        ref = -2.0 * np.kron((xa @ xa).matrix, xb.matrix)
        assert np.abs(h - ref).max() < 1e-12


class TestEvolve:
    def test_zero_time_identity(self):
        psi = vacuum((4, 4))
        assert evolve(psi, chi2_hamiltonian(1.0, (4, 4)), 0.0) is psi

    def test_rejects_non_hermitian(self):
        bad = fock.FockOperator((3,), np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]],
                                               dtype=complex))
        with pytest.raises(ValueError):
            evolve(vacuum(3), bad, 0.1)

    def test_norm_preserved(self):
        params = InteractionParams(g=1.0, r_a=R10, r_b=R10, tau=0.6)
        h = effective_hamiltonian_full(params, (14, 14))
        psi = tensor(coherent_state(14, 0.5), vacuum(14))
        out = evolve(psi, h, params.t)
        assert abs(out.norm() - 1.0) < 1e-9

    def test_energy_conserved(self):
        params = InteractionParams(g=1.0, r_a=np.sqrt(2), r_b=np.sqrt(2), tau=0.5)
        h = effective_hamiltonian_full(params, (12, 12))
        psi = tensor(coherent_state(12, 0.4), vacuum(12))
        e0 = expectation(psi, h).real
        prop = Propagator(h)
        for t in (0.2 * params.t, params.t):
            et = expectation(prop.apply(psi, t), h).real
            assert et == pytest.approx(e0, rel=1e-8)

    def test_krylov_matches_eigh(self):
        params = InteractionParams(g=1.0, r_a=R10, r_b=R10, tau=0.4)
        h = effective_hamiltonian_full(params, (16, 14))
        psi = tensor(coherent_state(16, 0.6), vacuum(14))
        a = evolve(psi, h, params.t, method="eigh")
        b = evolve(psi, h, params.t, method="krylov")
        assert abs(a.overlap(b)) ** 2 > 1 - 1e-10


class TestHeisenbergOracle:
    """Closed-form quadrature dynamics under the leading cubic coupling:
    x_a, x_b constant; p_a += 2 tau x_a x_b; p_b += tau x_a^2."""

    @pytest.mark.parametrize("make_input", [
        lambda da: coherent_state(da, 1.1),
        lambda da: PureState((da,), squeezed_vacuum_amplitudes(da, 1.6)),
    ])
    def test_all_four_relations(self, make_input):
        da, db = 28, 32
        params = InteractionParams(g=1.0, r_a=R10, r_b=R10, tau=0.45)
        h = effective_hamiltonian_leading(params, (da, db))
        psi0 = tensor(make_input(da), vacuum(db))
        psit = evolve(psi0, h, params.t)
        ops = joint_ops(da, db)
        tau = params.tau
        xa0 = expectation(psi0, ops["XA"]).real
        xb0 = expectation(psi0, ops["XB"]).real
        pa_pred = expectation(psi0, ops["PA"]).real + 2 * tau * expectation(psi0, ops["XAXB"]).real
        pb_pred = expectation(psi0, ops["PB"]).real + tau * expectation(psi0, ops["XA2"]).real
        assert expectation(psit, ops["XA"]).real == pytest.approx(xa0, abs=1e-7)
        assert expectation(psit, ops["XB"]).real == pytest.approx(xb0, abs=1e-7)
        assert expectation(psit, ops["PA"]).real == pytest.approx(pa_pred, abs=5e-3 * max(1, abs(pa_pred)))
        assert expectation(psit, ops["PB"]).real == pytest.approx(pb_pred, rel=5e-3)

    def test_pb_growth_coherent(self):
        da, db = 24, 30
        params = InteractionParams(g=1.0, r_a=R10, r_b=R10, tau=0.4)
        h = effective_hamiltonian_leading(params, (da, db))
        psi0 = tensor(coherent_state(da, 0.8), vacuum(db))
        psit = evolve(psi0, h, params.t)
        ops = joint_ops(da, db)
        grow = expectation(psit, ops["PB"]).real - expectation(psi0, ops["PB"]).real
        assert grow == pytest.approx(params.tau * expectation(psi0, ops["XA2"]).real,
                                     rel=1e-3)
        assert abs(expectation(psit, ops["XB"]).real - expectation(psi0, ops["XB"]).real) < 1e-6


class TestFrameEquivalence:
    def test_effective_frame_equals_sandwich(self):
        # dims and gains chosen so both paths pass the leakage audit
        da = db = 24
        params = InteractionParams(g=1.0, r_a=1.3, r_b=1.3, tau=0.35)
        fh = PureState((da,), squeezed_vacuum_amplitudes(da, 1.2))
        psi0 = tensor(fh, vacuum(db))
        eff = evolve(psi0, effective_hamiltonian_full(params, (da, db)), params.t)
        sa = squeeze_operator(da, params.r_a)
        sb = squeeze_operator(db, params.r_b)
        m = sa.matrix @ psi0.mode_matrix() @ sb.matrix.T
        mid = PureState((da, db), m.reshape(-1))
        assert mid.leakage(0) < 1e-6 and mid.leakage(1) < 1e-6
        midt = evolve(mid, chi2_hamiltonian(params.g, (da, db)), params.t)
        m2 = sa.matrix.conj().T @ midt.mode_matrix() @ sb.matrix.conj()
        phys = PureState((da, db), m2.reshape(-1))
        fidelity = abs(eff.overlap(phys)) ** 2
        assert fidelity > 1 - 1e-6

    def test_xa_drift_shrinks_with_rb(self):
        # O(1/r_b) corrections: <x_a> drift must shrink >= 2.5x for r_b^2 10 -> 100
        def drift(rb2):
            da, db = 40, 40
            params = InteractionParams(g=1.0, r_a=R10, r_b=np.sqrt(rb2), tau=1.0)
            psi0 = tensor(coherent_state(da, 1.5), vacuum(db))
            psit = evolve(psi0, effective_hamiltonian_full(params, (da, db)), params.t)
            ops = joint_ops(da, db)
            return abs(expectation(psit, ops["XA"]).real - 1.5)

        assert drift(10) / drift(100) >= 2.5


def test_interaction_params_validation():
    with pytest.raises(ValueError):
        InteractionParams(g=0.0, r_a=1.0, r_b=1.0, tau=1.0)
    with pytest.raises(ValueError):
        InteractionParams(g=1.0, r_a=0.9, r_b=1.0, tau=1.0)
    params = InteractionParams(g=2.0, r_a=2.0, r_b=3.0, tau=0.6)
    assert params.t == pytest.approx(0.6 / (4 * 3 * 2))
