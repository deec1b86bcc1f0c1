import mpmath as mp
import numpy as np
import pytest

from twospin_cs import brackets as br
from twospin_cs.dynamics import (
    PairTable,
    StateDerivative,
    bc1_hamiltonian,
    bc1_reduction,
    eom,
    eom_via_brackets,
    hamiltonian,
    hamiltonian_gradient,
    hamiltonian_observable,
)
from twospin_cs.phase_space import SeparationError, State, casimirs
from twospin_cs.verify import sample_state

from conftest import zero_spin_state


def _hamiltonian_mp(u, v, S, T):
    """Direct high-precision evaluation of the pair-sum Hamiltonian."""
    mp.mp.dps = 40
    n = len(u)
    h = mp.mpf(0)
    for i in range(n):
        h += mp.mpf(v[i]) ** 2 / 2
    for i in range(n):
        for j in range(i + 1, n):
            x = mp.mpf(u[i]) - mp.mpf(u[j])
            s, t = mp.mpf(S[i][j]), mp.mpf(T[i][j])
            h += (s * s + t * t - 2 * s * t * mp.cosh(x)) / mp.sinh(x) ** 2
    return h


class TestHamiltonian:
    def test_free(self):
        assert hamiltonian(zero_spin_state([1.0, -1.0], [1.0, -1.0])) == 1.0

    def test_two_body_value(self):
        s = State(2, [1.0, -1.0], [1.0, -1.0], [1.0], [0.0])
        mp.mp.dps = 30
        ref = 1 + 1 / mp.sinh(2) ** 2
        assert float(ref) == pytest.approx(1.0760218, abs=5e-8)
        assert hamiltonian(s) == pytest.approx(float(ref), rel=1e-15)

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_matches_high_precision(self, n):
        s = sample_state(n, 13)
        ref = _hamiltonian_mp(s.u, s.v, s.S.tolist(), s.T.tolist())
        assert hamiltonian(s) == pytest.approx(float(ref), rel=1e-13)

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_gradient_matches_fd(self, n):
        s = sample_state(n, 4)
        g = hamiltonian_gradient(s)
        g_fd = br.fd_gradient(hamiltonian, s)
        assert np.abs(g - g_fd).max() <= 1e-7 * np.abs(g).max()

    def test_self_bracket_exactly_zero(self):
        s = sample_state(4, 2)
        H = hamiltonian_observable()
        assert br.poisson(H, H, s) == 0.0

    def test_collision_guard(self):
        with pytest.raises(SeparationError):
            hamiltonian(State(2, [1e-9, 0.0], [0, 0], [1], [1]))

    def test_pair_table_zero_diagonal(self):
        P = PairTable.build(np.array([2.0, 0.5, -1.0]))
        for name in ("sinh", "coth", "inv_sinh2", "cosh_sinh3"):
            assert not np.diag(getattr(P, name)).any()


class TestEquationsOfMotion:
    def test_free_particles(self):
        s = zero_spin_state([2.0, 0.0, -1.5], [0.3, -1.0, 0.2])
        d = eom(s)
        assert np.array_equal(d.du, s.v)
        assert not d.dv.any() and not d.dS.any() and not d.dT.any()

    def test_free_particles_via_brackets(self):
        s = zero_spin_state([2.0, 0.0, -1.5], [0.3, -1.0, 0.2])
        assert not eom_via_brackets(s).dv.any()

    def test_two_routes_agree(self, state):
        a = eom(state).to_vector()
        b = eom_via_brackets(state).to_vector()
        assert np.abs(a - b).max() <= 1e-10 * np.abs(a).max()

    def test_total_force_vanishes(self, state):
        d = eom(state)
        assert abs(d.dv.sum()) <= 1e-13 * np.abs(d.dv).sum()

    def test_exact_antisymmetry(self, state):
        d = eom(state)
        assert np.array_equal(d.dS, -d.dS.T)
        assert np.array_equal(d.dT, -d.dT.T)

    def test_spin_spectra_stationary(self, state):
        d = eom(state)
        for A, dA in ((state.S, d.dS), (state.T, d.dT)):
            for m in range(1, state.n // 2 + 1):
                k = 2 * m
                rate = k * np.trace(np.linalg.matrix_power(A, k - 1) @ dA)
                scale = k * np.linalg.norm(np.linalg.matrix_power(A, k - 1)) * np.linalg.norm(dA)
                assert abs(rate) <= 1e-12 * max(scale, 1e-300)
        assert casimirs(state.T).size == state.n // 2

    def test_t_zero_is_invariant(self, state):
        s0 = state.replace(T_upper=np.zeros_like(state.T_upper))
        assert not eom(s0).dT.any()

    def test_two_body_spins_frozen(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = rng.uniform(0.1, 2)
            s = State(2, [a, -a], rng.normal(size=2), rng.normal(size=1), rng.normal(size=1))
            d = eom(s)
            assert not d.dS.any() and not d.dT.any()

    def test_derivative_vector_round_trip(self, state):
        d = eom(state)
        e = StateDerivative.from_vector(state.n, d.to_vector())
        assert np.array_equal(e.dS, d.dS) and np.array_equal(e.dv, d.dv)


class TestTwoBodyReduction:
    def test_functional_agreement(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            u = np.sort(rng.uniform(-2, 2, size=2))[::-1]
            if u[0] - u[1] < 0.05:
                continue
            s = State(2, u, rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 1), rng.uniform(-2, 2, 1))
            q, p, m1, m2, P = bc1_reduction(s)
            h = hamiltonian(s)
            assert h == pytest.approx(P * P / 4 + bc1_hamiltonian(q, p, m1, m2), rel=1e-12, abs=1e-12)

    def test_reduction_coordinates(self):
        s = State(2, [1.0, -0.5], [0.7, 0.1], [1.0], [0.5])
        q, p, m1, m2, P = bc1_reduction(s)
        assert (q, m1, m2) == (0.75, 1.0, 0.5)
        assert p == pytest.approx(0.6 / np.sqrt(2))
        assert P == pytest.approx(0.8)

    def test_needs_two_particles(self):
        with pytest.raises(ValueError):
            bc1_reduction(sample_state(3, 0))

    def test_well_below_zero(self):
        """Same-sign couplings give a well that dips below the asymptotic value 0."""
        q = np.linspace(0.05, 4, 4000)
        V = bc1_hamiltonian(q, 0.0, 1.0, 0.5)
        assert V.min() < -0.2 and V[0] > 10
        assert V[-1] < 0 and abs(V[-1]) < 1e-2
