import numpy as np
import pytest

from twospin_cs import brackets as br
from twospin_cs.lax import PoleError, coth, lax_L, lax_M
from twospin_cs.rmatrix import (
    flip,
    lax_bracket_table,
    m_from_r_residual,
    partial_trace_2,
    permutation_operator,
    r12,
    r21,
    r_from_u,
    reconstruct_M,
    rmatrix_residual,
    rmatrix_sides,
)
from twospin_cs.phase_space import State
from twospin_cs.verify import sample_state

from conftest import zero_spin_state


def _idx(n, a, b, c, d):
    """Row/column of the E_ab (x) E_cd coefficient."""
    return a * n + c, b * n + d


class TestTensorConvention:
    def test_kron_layout(self):
        A = np.arange(4.0).reshape(2, 2)
        B = np.arange(4.0, 8.0).reshape(2, 2)
        K = np.kron(A, B)
        for a, b, c, d in np.ndindex(2, 2, 2, 2):
            assert K[_idx(2, a, b, c, d)] == A[a, b] * B[c, d]

    def test_permutation_swaps_legs(self):
        rng = np.random.default_rng(0)
        A, B = rng.normal(size=(2, 3, 3))
        Pi = permutation_operator(3)
        assert np.allclose(Pi @ np.kron(A, B) @ Pi, np.kron(B, A))

    def test_flip_is_involution(self):
        X = np.random.default_rng(1).normal(size=(9, 9))
        assert np.array_equal(flip(flip(X, 3), 3), X)

    def test_partial_trace(self):
        rng = np.random.default_rng(2)
        A, B = rng.normal(size=(2, 3, 3))
        assert np.allclose(partial_trace_2(np.kron(A, B), 3), A * np.trace(B))


class TestR12:
    def test_single_particle(self):
        z, w = 0.9, 0.4
        R = r_from_u(np.array([0.0]), z, w)
        assert R.shape == (1, 1)
        assert R[0, 0] == pytest.approx(0.5 * (coth(z - w) + coth(z + w)))

    def test_off_diagonal_entry(self):
        s = State(2, [1.0, 0.0], [0, 0], [0.3], [0.2])
        R = r12(s, 0.9, 0.4)
        expected = 0.5 * (1 / np.tanh(0.5) + 1 / np.tanh(1.0))
        assert R[_idx(2, 0, 1, 1, 0)] == pytest.approx(expected, rel=1e-15)

    def test_hand_entries_n2(self):
        """Every nonzero entry of the 4x4 operator, written out by hand."""
        u12, z, w = 1.0, 0.9, 0.4
        s = State(2, [u12, 0.0], [0, 0], [1.0], [1.0])
        cm, cp, cu = 1 / np.tanh(z - w), 1 / np.tanh(z + w), 1 / np.tanh(u12)
        R = r12(s, z, w)
        ref = np.zeros((4, 4))
        ref[_idx(2, 0, 0, 0, 0)] = ref[_idx(2, 1, 1, 1, 1)] = 0.5 * (cm + cp)
        ref[_idx(2, 0, 1, 1, 0)] = 0.5 * (cm + cu)  # E12 (x) E21
        ref[_idx(2, 1, 0, 0, 1)] = 0.5 * (cm - cu)  # E21 (x) E12, coth(u21) = -coth(u12)
        ref[_idx(2, 0, 1, 0, 1)] = 0.5 * (cp + cu)  # E12 (x) E12
        ref[_idx(2, 1, 0, 1, 0)] = 0.5 * (cp - cu)  # E21 (x) E21
        assert np.allclose(R, ref, rtol=1e-15, atol=0)

    def test_depends_only_on_positions(self):
        a = sample_state(3, 0)
        b = a.replace(v=a.v + 1.0, S_upper=2 * a.S_upper, T_upper=-a.T_upper)
        assert np.array_equal(r12(a, 0.7, 0.2), r12(b, 0.7, 0.2))

    def test_pole_guard(self):
        s = sample_state(3, 0)
        with pytest.raises(PoleError):
            r12(s, 0.5, 0.5)
        with pytest.raises(PoleError):
            r12(s, 0.5, -0.5)


class TestR21:
    def test_is_flipped_r12(self):
        s = sample_state(3, 4)
        assert np.array_equal(flip(r21(s, 0.3, 1.2), 3), r12(s, 0.3, 1.2))

    def test_hand_swapped_entries_n2(self):
        s = State(2, [1.0, 0.0], [0, 0], [1.0], [1.0])
        w, z = 0.4, 0.9
        R = r12(s, w, z)
        F = r21(s, w, z)
        for a, b, c, d in np.ndindex(2, 2, 2, 2):
            assert F[_idx(2, a, b, c, d)] == R[_idx(2, c, d, a, b)]

    def test_same_pole_structure(self):
        s = sample_state(3, 0)
        with pytest.raises(PoleError):
            r21(s, 0.8, 0.8)


class TestLinearBracket:
    def test_zero_spin(self):
        s = zero_spin_state([1.5, 0.2, -1.0], [0.4, -0.3, 1.1])
        lhs, rhs, scale = rmatrix_sides(s, 0.8, 0.3)
        assert np.abs(lhs - rhs).max() <= 1e-12 * scale

    def test_n3_sample(self):
        s = sample_state(3, 7)
        _, _, scale = rmatrix_sides(s, 0.8, 0.3)
        assert rmatrix_residual(s, 0.8, 0.3) <= 1e-11 * scale

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_random_sweep(self, n):
        rng = np.random.default_rng(n)
        for seed in range(5):
            s = sample_state(n, seed)
            z, w = rng.uniform(0.1, 3, 2)
            if abs(z - w) < 0.05:
                continue
            _, _, scale = rmatrix_sides(s, z, w)
            bound = 1e-11 * np.linalg.norm(lax_L(s, z)) * np.linalg.norm(lax_L(s, w))
            assert rmatrix_residual(s, z, w) <= max(1e-11 * scale, bound)

    def test_bracket_antisymmetry_lifted(self):
        s = sample_state(4, 3)
        B_zw = lax_bracket_table(s, 0.9, 0.35)
        B_wz = lax_bracket_table(s, 0.35, 0.9)
        scale = np.abs(B_zw).max()
        assert np.abs(B_zw + flip(B_wz, 4)).max() <= 1e-12 * scale

    def test_bracket_table_spot_check_fd(self):
        s = sample_state(3, 2)
        z, w = 0.8, 0.3
        B = lax_bracket_table(s, z, w)
        for a, b, c, d in [(0, 1, 1, 2), (0, 0, 0, 1), (2, 1, 0, 2), (1, 0, 1, 0)]:
            f = lambda st: lax_L(st, z)[a, b]
            g = lambda st: lax_L(st, w)[c, d]
            exact = B[_idx(3, a, b, c, d)]
            assert br.poisson_fd(f, g, s) == pytest.approx(exact, rel=1e-6, abs=1e-8)

    def test_wrong_r_matrix_fails(self):
        """Control: dropping the exchange term of r breaks the relation."""
        s = sample_state(3, 7)
        z, w = 0.8, 0.3
        lhs, _, scale = rmatrix_sides(s, z, w)
        n = 3
        I = np.eye(n)
        R = np.diag(np.diag(r12(s, z, w)))
        R21 = flip(np.diag(np.diag(r12(s, w, z))), n)
        L1, L2 = np.kron(lax_L(s, z), I), np.kron(I, lax_L(s, w))
        rhs = (L1 @ R - R @ L1) - (L2 @ R21 - R21 @ L2)
        assert np.abs(lhs - rhs).max() > 1e-3 * scale


class TestMReconstruction:
    def test_n4_sample(self):
        s = sample_state(4, 1)
        z, w = 1.1, 0.4
        scale = np.linalg.norm(r12(s, z, w)) * np.linalg.norm(lax_L(s, w))
        assert m_from_r_residual(s, z, w) <= 1e-12 * scale

    def test_zero_spin(self):
        s = zero_spin_state([1.0, 0.0, -1.0], [0.2, 0.5, -0.4])
        z, w = 1.1, 0.4
        assert np.abs(reconstruct_M(s, z, w)).max() <= 1e-15

    def test_w_independent(self, state):
        z = 1.3
        Ms = [reconstruct_M(state, z, w) for w in (0.2, 0.7, 2.4)]
        scale = np.linalg.norm(r12(state, z, 2.4)) * np.linalg.norm(lax_L(state, 2.4))
        for M in Ms[1:]:
            assert np.abs(M - Ms[0]).max() <= 1e-12 * scale
        assert np.abs(Ms[0] - lax_M(state)).max() <= 1e-12 * scale
