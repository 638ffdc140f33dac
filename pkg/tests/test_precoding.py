import numpy as np
import pytest

from ialign import linalg
from ialign.channel import ChannelSet, NetworkDims, gen_rayleigh, normalize_batch, stack_subcarriers
from ialign.metrics import snr_to_sigma2, subcarrier_sum_rates, sum_rate, user_rates
from ialign.precoding import (SolverError, closed_form_ia, greedy_avoidance, iterative_ia, max_sinr,
                              random_precoders, tdma, verify_alignment)


def iid_stack(trials=40, seed=3, dims=None):
    dims = dims or NetworkDims.uniform(3)
    return stack_subcarriers(normalize_batch([gen_rayleigh(dims, seed, t) for t in range(trials)]))


def orthonormality_error(x, scale=1.0):
    gram = linalg.ctranspose(x) @ x
    return float(np.max(linalg.fro_norm(gram - scale * np.eye(x.shape[-1]))))


@pytest.fixture(scope="module")
def network():
    return iid_stack()


class TestClosedForm:
    def test_alignment(self, network):
        sol = closed_form_ia(network)
        rep = verify_alignment(network, sol)
        assert rep.max_leakage <= 1e-18
        assert rep.all_rank_ok

    def test_norms(self, network):
        sol = closed_form_ia(network)
        assert max(orthonormality_error(f) for f in sol.F) <= 1e-10
        assert max(orthonormality_error(w) for w in sol.W) <= 1e-10

    def test_both_eigenvectors_align_and_differ(self, network):
        sigma2 = snr_to_sigma2(20)
        s0, s1 = closed_form_ia(network, 0), closed_form_ia(network, 1)
        for sol in (s0, s1):
            assert verify_alignment(network, sol).max_leakage <= 1e-18
        r0 = subcarrier_sum_rates(network, s0, sigma2)
        r1 = subcarrier_sum_rates(network, s1, sigma2)
        assert np.max(np.abs(r0 - r1)) > 1e-3

    def test_best_dominates(self, network):
        sigma2 = snr_to_sigma2(20)
        best = subcarrier_sum_rates(network, closed_form_ia(network, "best", sigma2), sigma2)
        r0 = subcarrier_sum_rates(network, closed_form_ia(network, 0), sigma2)
        r1 = subcarrier_sum_rates(network, closed_form_ia(network, 1), sigma2)
        np.testing.assert_allclose(best, np.maximum(r0, r1), atol=1e-12)

    def test_best_needs_sigma2(self, network):
        with pytest.raises(SolverError):
            closed_form_ia(network, "best")

    def test_phase_rotation(self, network):
        sol = closed_form_ia(network)
        rotated = sol.with_phase(1, np.exp(0.9j))
        a, b = verify_alignment(network, sol), verify_alignment(network, rotated)
        np.testing.assert_allclose(a.leakage_rel, b.leakage_rel, atol=1e-12)
        sigma2 = snr_to_sigma2(10)
        np.testing.assert_allclose(subcarrier_sum_rates(network, rotated, sigma2),
                                   subcarrier_sum_rates(network, sol, sigma2), atol=1e-12)

    def test_wrong_dims(self):
        with pytest.raises(SolverError):
            closed_form_ia(iid_stack(2, dims=NetworkDims.uniform(3, M=3, N=3)))

    def test_singular_cross_channel(self, network):
        bad = network.map_links(lambda k, m, h: np.zeros_like(h) + np.array([[1, 1], [1, 1]])
                                if (k, m) == (2, 0) else h)
        with pytest.raises(SolverError):
            closed_form_ia(bad)
        sol = closed_form_ia(bad, strict=False)
        assert not np.any(sol.diagnostics.ok)

    def test_random_precoders_leak(self, network):
        sol = closed_form_ia(network)
        rnd = type(sol)("closed_ia", random_precoders(network.dims, 1), sol.W)
        assert np.median(verify_alignment(network, rnd).leakage_rel) > 1e-2


@pytest.fixture(scope="module")
def small():
    return iid_stack(12, seed=9)


@pytest.fixture(scope="module")
def iter_solution(small):
    return iterative_ia(small, restarts=2, seed=5)


class TestIterative:
    def test_converges_and_aligns(self, small, iter_solution):
        assert np.all(iter_solution.diagnostics.leakage <= 1e-6)
        assert verify_alignment(small, iter_solution).max_leakage <= 1e-6

    def test_leakage_monotone(self, iter_solution):
        tr = iter_solution.diagnostics.objective_trace
        assert np.all(np.diff(tr, axis=0) <= 1e-12 * tr[:1])

    def test_norms(self, iter_solution):
        sol = iter_solution
        for group in (sol.F, sol.W, sol.C):
            assert max(orthonormality_error(x) for x in group) <= 1e-10
        # W spans the complement of C
        for w, c in zip(sol.W, sol.C):
            assert np.max(np.abs(linalg.ctranspose(w) @ c)) <= 1e-10

    def test_general_dims(self):
        dims = NetworkDims(3, (3, 3, 4), (3, 4, 3), 1, 1)
        s = iid_stack(3, dims=dims)
        sol = iterative_ia(s, restarts=1, seed=0)
        assert sol.F[2].shape == (3, 4, 1) and sol.W[1].shape == (3, 4, 1)
        assert verify_alignment(s, sol).max_leakage <= 1e-6

    def test_restart_selection(self, small):
        sigma2 = snr_to_sigma2(40)
        starts = [random_precoders(small.dims, 7, r) for r in range(3)]
        one = [iterative_ia(small, max_iter=300, restarts=1, F0=f) for f in starts]
        best = iterative_ia(small, max_iter=300, restarts=3, F0=starts)
        rates = np.stack([subcarrier_sum_rates(small, s, sigma2) for s in one])
        np.testing.assert_allclose(subcarrier_sum_rates(small, best, sigma2), rates.max(axis=0), atol=1e-9)

    def test_deterministic(self, small, iter_solution):
        again = iterative_ia(small, restarts=2, seed=5)
        for fa, fb in zip(iter_solution.F, again.F):
            np.testing.assert_array_equal(fa, fb)

    def test_matches_closed_form_rate(self, small, iter_solution):
        sigma2 = snr_to_sigma2(40)
        it = sum_rate(small, iter_solution, sigma2)
        cf = sum_rate(small, closed_form_ia(small, "best", sigma2), sigma2)
        assert abs(it - cf) <= 0.1 * cf

    def test_needs_room(self):
        with pytest.raises(SolverError):
            iterative_ia(iid_stack(1, dims=NetworkDims.uniform(3, Ns=2)))


class TestMaxSinr:
    def test_single_user_dominant_mode(self):
        d = NetworkDims(1, (3,), (2,), 1, 1)
        s = stack_subcarriers([gen_rayleigh(d, 8, t) for t in range(6)])
        sol = max_sinr(s, 0.1, seed=1)
        for n in range(s.N_sc):
            _, _, v = np.linalg.svd(s.H[0][0][n])
            top = v[0].conj()
            assert abs(abs(np.vdot(top, sol.F[0][n, :, 0])) - 1) <= 1e-6

    def test_norm_convention(self, network):
        dims = NetworkDims.uniform(3, M=3, N=3, Ns=2)
        s = iid_stack(5, dims=dims)
        sol = max_sinr(s, 0.1, seed=0, max_iter=300)
        assert sol.equal_norm
        assert max(orthonormality_error(f, 0.5) for f in sol.F) <= 1e-10
        assert max(orthonormality_error(w) for w in sol.W) <= 1e-10

    def test_low_snr_beats_ia(self, network):
        sigma2 = snr_to_sigma2(0)
        ms = subcarrier_sum_rates(network, max_sinr(network, sigma2, seed=1), sigma2)
        ia = subcarrier_sum_rates(network, closed_form_ia(network), sigma2)
        assert ms.mean() >= ia.mean()
        assert np.mean(ms >= ia) >= 0.9

    def test_rate_trace(self, network):
        sol = max_sinr(network, 0.01, max_iter=20, seed=1, track_rate=True)
        tr = sol.diagnostics.rate_trace
        assert tr.shape[1] == network.N_sc
        assert tr.shape[0] == sol.diagnostics.iterations.max() + 1
        # the last row is the rate of the returned precoders
        np.testing.assert_allclose(tr[-1], user_rates(network, sol.F, 0.01).sum(axis=1), atol=1e-10)

    def test_stop_rate(self, network):
        sol = max_sinr(network, 0.01, seed=1, stop_rate=np.full(network.N_sc, 3.0))
        crossed = sol.diagnostics.info["crossed_at"]
        rates = user_rates(network, sol.F, 0.01).sum(axis=1)
        assert np.all(rates[crossed >= 0] > 3.0)

    def test_tolerance_stops(self, network):
        sol = max_sinr(network, 0.1, seed=1, tol=1e-4)
        assert np.all(sol.diagnostics.converged)
        assert sol.diagnostics.objective_trace.shape[0] == sol.diagnostics.iterations.max() + 1

    def test_needs_noise(self, network):
        with pytest.raises(SolverError):
            max_sinr(network, 0.0)

    def test_scale_equivariance(self, network):
        g = 3.0
        a = max_sinr(network, 0.1, seed=2, max_iter=30, tol=0)
        scaled = network.map_links(lambda k, m, h: g * h)
        b = max_sinr(scaled, 0.1 * g * g, seed=2, max_iter=30, tol=0)
        np.testing.assert_allclose(subcarrier_sum_rates(network, a, 0.1),
                                   subcarrier_sum_rates(scaled, b, 0.1 * g * g), atol=1e-9)


class TestGreedy:
    def test_no_interference_is_svd_beamforming(self):
        d = NetworkDims.uniform(3, M=3, N=2, N_sc=1)
        base = stack_subcarriers([gen_rayleigh(d, 5, t) for t in range(8)])
        s = base.map_links(lambda k, m, h: h if k == m else np.zeros_like(h))
        for sigma2 in (0.01, 1e8):
            sol = greedy_avoidance(s, sigma2, seed=1)
            assert np.all(sol.diagnostics.converged)
            for k in range(3):
                for n in range(s.N_sc):
                    _, _, v = np.linalg.svd(s.H[k][k][n])
                    assert abs(abs(np.vdot(v[0].conj(), sol.F[k][n, :, 0])) - 1) <= 1e-8

    def test_norms(self, network):
        sol = greedy_avoidance(network, 0.01, seed=1, max_iter=200)
        assert max(orthonormality_error(f) for f in sol.F) <= 1e-10
        assert max(orthonormality_error(w) for w in sol.W) <= 1e-10

    def test_loses_to_ia_at_high_snr(self, network):
        sigma2 = snr_to_sigma2(40)
        g = sum_rate(network, greedy_avoidance(network, sigma2, seed=1, max_iter=500), sigma2)
        ia = sum_rate(network, closed_form_ia(network), sigma2)
        assert g < ia

    def test_honest_convergence_flag(self, network):
        sol = greedy_avoidance(network, snr_to_sigma2(30), seed=1, max_iter=3)
        d = sol.diagnostics
        assert np.all(d.iterations <= 3)
        last = d.objective_trace[np.maximum(d.iterations - 1, 0), np.arange(network.N_sc)]
        assert np.all(d.converged == (last < 1e-8))


class TestTdma:
    def test_single_user(self):
        d = NetworkDims(1, (2,), (2,), 1, 3)
        s = stack_subcarriers([gen_rayleigh(d.with_subcarriers(1), 2, t) for t in range(3)])
        sched = tdma(s, 0.1)
        assert np.all(sched.users == 0)
        h = s.H[0][0]
        expected = np.log2(np.linalg.det(np.eye(2) + h @ h.conj().transpose(0, 2, 1) / (0.1 * 2)).real)
        np.testing.assert_allclose(sched.rates, expected, atol=1e-12)

    def test_tie_lowest_index(self):
        d = NetworkDims.uniform(3, N_sc=1)
        h = gen_rayleigh(d, 1).H[0][0]
        s = ChannelSet(d, [[h] * 3 for _ in range(3)])
        sched = tdma(s, 0.1)
        assert sched.users.tolist() == [0]

    def test_selects_best(self, network):
        from ialign.metrics import single_user_rates
        sched = tdma(network, 0.01)
        np.testing.assert_array_equal(sched.rates, single_user_rates(network, 0.01).max(axis=1))

    def test_symbol_mode(self, network):
        sched = tdma(network, 0.01, mode="symbol")
        assert len(set(sched.users.tolist())) == 1
        assert sched.mean_rate <= tdma(network, 0.01).mean_rate

    def test_bad_mode(self, network):
        with pytest.raises(SolverError):
            tdma(network, 0.1, mode="slot")


class TestVerify:
    def test_full_rank_receivers(self, network):
        # Ns = N_rx: W fills the receive space, nothing is projected away
        sol = closed_form_ia(network)
        full = type(sol)("closed_ia", sol.F, [np.broadcast_to(np.eye(2), (network.N_sc, 2, 2))] * 3)
        rep = verify_alignment(network, full)
        np.testing.assert_allclose(rep.leakage_rel, 1.0, atol=1e-12)
