import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ialign import linalg

# oracle outputs for the fixed matrices below, frozen from tests/oracles.py
HERM4 = [[2+0j, 1-1j, 0.5j, 0.3],
         [1+1j, 3+0j, -0.2+0.4j, 1j],
         [-0.5j, -0.2-0.4j, -1+0j, 0.7-0.1j],
         [0.3, -1j, 0.7+0.1j, 0.5+0j]]
HERM4_EIGENVALUES = [4.35617495004394, 1.2058508916340314, 0.2862122585207787, -1.3482381001987491]

A32 = [[1+2j, -0.5j], [0.3-1j, 2+0j], [-1+0.5j, 0.25+0.25j]]
B24 = [[1j, 2, -1+1j, 0.5], [0.5-0.5j, -1j, 3, 1+1j]]
A32_B24 = [[-2.25+0.75j, 1.5+4j, -3-2.5j, 1+0.5j],
           [2-0.7j, 0.6-4j, 6.7+1.3j, 2.15+1.5j],
           [-0.25-1j, -1.75+0.75j, 1.25-0.75j, -0.5+0.75j]]


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_hermitian(rng, n):
    a = crandn(rng, n, n)
    return (a + a.conj().T) / 2


def unitary(rng, n):
    q, r = np.linalg.qr(crandn(rng, n, n))
    return q * (np.diag(r) / np.abs(np.diag(r)))


complex_entries = st.builds(complex, st.floats(-3, 3), st.floats(-3, 3))


class TestMultiply:
    def test_identity(self, rng):
        a = crandn(rng, 2, 2)
        np.testing.assert_array_equal(linalg.multiply(np.eye(2), a), a)

    def test_inverse_product(self, rng):
        a = crandn(rng, 2, 2) + 2 * np.eye(2)
        np.testing.assert_allclose(linalg.multiply(a, linalg.inverse(a)), np.eye(2), atol=1e-12)

    def test_matches_triple_loop(self):
        np.testing.assert_allclose(linalg.multiply(A32, B24), A32_B24, atol=1e-14)
        # the frozen values themselves came from the loop oracle
        np.testing.assert_allclose(oracles.matmul(A32, B24), A32_B24, atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(linalg.LinAlgError):
            linalg.multiply(np.eye(2), np.eye(3))


class TestInverse:
    def test_identity(self):
        np.testing.assert_array_equal(linalg.inverse(np.eye(2)), np.eye(2))

    def test_diagonal(self):
        np.testing.assert_allclose(linalg.inverse(np.diag([2, 4j])), np.diag([0.5, -0.25j]), atol=1e-15)

    def test_round_trip_scaled_by_condition(self, rng):
        for _ in range(50):
            a = crandn(rng, 2, 2)
            resid = np.linalg.norm(a @ linalg.inverse(a) - np.eye(2))
            assert resid <= 1e-10 * linalg.condition_number(a)

    def test_singular(self):
        with pytest.raises(linalg.SingularMatrixError):
            linalg.inverse(np.array([[1, 2], [2, 4]], dtype=complex))

    def test_non_square(self):
        with pytest.raises(linalg.LinAlgError):
            linalg.inverse(np.ones((2, 3)))


class TestEigHermitian:
    def test_diagonal(self):
        pairs = linalg.eig_hermitian(np.diag([3.0, 1.0]))
        assert [p.value for p in pairs] == [3, 1]
        np.testing.assert_allclose(pairs[0].vector[:, 0], [1, 0])
        np.testing.assert_allclose(pairs[1].vector[:, 0], [0, 1])

    def test_swap(self):
        pairs = linalg.eig_hermitian(np.array([[0, 1], [1, 0]]))
        np.testing.assert_allclose([p.value for p in pairs], [1, -1], atol=1e-14)

    def test_char_poly_oracle(self):
        values = [p.value.real for p in linalg.eig_hermitian(HERM4)]
        np.testing.assert_allclose(values, HERM4_EIGENVALUES, atol=1e-8)

    def test_char_poly_oracle_live(self, rng):
        a = random_hermitian(rng, 4)
        expected = oracles.hermitian_eigenvalues(a.tolist())
        values, _ = linalg.eigh(a)
        np.testing.assert_allclose(values, expected, atol=1e-8)

    def test_residual_and_orthonormality(self, rng):
        for n in (2, 3, 5, 8):
            a = random_hermitian(rng, n)
            values, vecs = linalg.eigh(a)
            scale = np.linalg.norm(a)
            assert np.all(np.diff(values) <= 0)
            assert np.linalg.norm(a @ vecs - vecs * values) <= 1e-9 * scale
            np.testing.assert_allclose(vecs.conj().T @ vecs, np.eye(n), atol=1e-9)

    def test_phase_convention(self, rng):
        _, vecs = linalg.eigh(random_hermitian(rng, 3))
        for j in range(3):
            col = vecs[:, j]
            first = col[np.argmax(np.abs(col) > 1e-12)]
            assert first.imag == 0 and first.real >= 0
            assert abs(np.linalg.norm(col) - 1) < 1e-12

    def test_stacks(self, rng):
        a = np.stack([random_hermitian(rng, 3) for _ in range(7)])
        values, vecs = linalg.eigh(a)
        for i in range(7):
            np.testing.assert_allclose(values[i], linalg.eigh(a[i])[0], atol=1e-12)

    def test_rejects_non_hermitian(self):
        with pytest.raises(linalg.LinAlgError):
            linalg.eig_hermitian(np.array([[1, 2], [0, 1]]))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(complex_entries, min_size=9, max_size=9))
    def test_trace_and_determinant(self, entries):
        b = np.array(entries).reshape(3, 3)
        a = b + b.conj().T + 0.1 * np.eye(3)
        values, _ = linalg.eigh(a)
        tr = np.trace(a).real
        assert abs(values.sum() - tr) <= 1e-9 * max(1.0, abs(tr), np.abs(values).sum())
        det = np.linalg.det(a).real
        assert abs(np.prod(values) - det) <= 1e-8 * max(1.0, np.max(np.abs(values)) ** 3)


class TestEigGeneral2x2:
    def test_identity(self):
        pairs, defective = linalg.eig_general_2x2(np.eye(2))
        assert not defective
        assert all(abs(p.value - 1) < 1e-14 for p in pairs)
        for p in pairs:
            assert abs(np.linalg.norm(p.vector) - 1) < 1e-12

    def test_triangular(self):
        pairs, defective = linalg.eig_general_2x2(np.array([[1, 1], [0, 2]]))
        assert not defective
        by_value = {round(p.value.real): p.vector[:, 0] for p in pairs}
        assert set(by_value) == {1, 2}
        assert abs(abs(np.vdot([1, 0], by_value[1])) - 1) < 1e-12
        assert abs(abs(np.vdot(np.array([1, 1]) / np.sqrt(2), by_value[2])) - 1) < 1e-12

    def test_quadratic_formula(self, rng):
        for _ in range(50):
            a = crandn(rng, 2, 2)
            pairs, _ = linalg.eig_general_2x2(a)
            expected = oracles.quadratic_eigenvalues_2x2(a.tolist())
            got = sorted((p.value for p in pairs), key=lambda z: (z.real, z.imag))
            exp = sorted(expected, key=lambda z: (z.real, z.imag))
            np.testing.assert_allclose(got, exp, atol=1e-10)
            for p in pairs:
                assert np.linalg.norm(a @ p.vector - p.value * p.vector) <= 1e-9 * np.linalg.norm(a)

    def test_defective(self):
        pairs, defective = linalg.eig_general_2x2(np.array([[1, 1], [0, 1]]))
        assert defective
        assert len(pairs) == 1

    def test_similarity_invariance(self, rng):
        for _ in range(30):
            a = crandn(rng, 2, 2)
            u = unitary(rng, 2)
            v1 = sorted(linalg.eig2x2(a).values, key=lambda z: (z.real, z.imag))
            v2 = sorted(linalg.eig2x2(u @ a @ u.conj().T).values, key=lambda z: (z.real, z.imag))
            np.testing.assert_allclose(v1, v2, atol=1e-9)

    def test_magnitude_order(self, rng):
        eig = linalg.eig2x2(crandn(rng, 20, 2, 2))
        assert np.all(np.abs(eig.values[:, 0]) >= np.abs(eig.values[:, 1]))


class TestSvd:
    def test_reconstruction(self, rng):
        for shape in ((2, 2), (3, 2), (2, 4), (5, 3)):
            a = crandn(rng, *shape)
            u, s, v = linalg.svd(a)
            np.testing.assert_allclose((u * s) @ v.conj().T, a, atol=1e-12)
            np.testing.assert_allclose(s, np.linalg.svd(a, compute_uv=False), atol=1e-12)

    def test_extremes(self):
        a = np.diag([3.0, 0.5])
        assert linalg.largest_singular_value(a) == pytest.approx(3.0)
        assert linalg.smallest_singular_value(a) == pytest.approx(0.5)
        assert linalg.condition_number(a) == pytest.approx(6.0)


class TestOrthonormalBasis:
    def test_rank_one(self):
        b = linalg.orthonormal_basis(np.array([[1, 2], [0, 0]]))
        assert b.shape == (2, 1)
        np.testing.assert_allclose(np.abs(b[:, 0]), [1, 0], atol=1e-14)

    def test_unitary_input(self, rng):
        b = linalg.orthonormal_basis(unitary(rng, 2))
        assert b.shape == (2, 2)
        np.testing.assert_allclose(b.conj().T @ b, np.eye(2), atol=1e-10)

    def test_vector_is_normalized(self, rng):
        v = crandn(rng, 2, 1)
        b = linalg.orthonormal_basis(v)
        assert abs(abs(np.vdot(b[:, 0], v[:, 0])) - np.linalg.norm(v)) < 1e-12

    def test_projector_idempotent(self, rng):
        for shape in ((4, 2), (3, 1), (5, 5)):
            b = linalg.orthonormal_basis(crandn(rng, *shape))
            p = b @ b.conj().T
            assert np.linalg.norm(p @ p - p) <= 1e-9

    def test_zero(self):
        with pytest.raises(linalg.LinAlgError):
            linalg.orthonormal_basis(np.zeros((2, 2)))


class TestHermitianSqrt:
    def test_identity(self):
        np.testing.assert_allclose(linalg.hermitian_sqrt(np.eye(2)), np.eye(2), atol=1e-15)

    def test_diagonal(self):
        np.testing.assert_allclose(linalg.hermitian_sqrt(np.diag([4.0, 9.0])), np.diag([2, 3]), atol=1e-14)

    def test_square_and_compare(self, rng):
        b = crandn(rng, 3, 3)
        a = b @ b.conj().T
        r = linalg.hermitian_sqrt(a)
        np.testing.assert_allclose(r, r.conj().T, atol=1e-12)
        assert np.linalg.norm(r @ r - a) <= 1e-9 * np.linalg.norm(a)

    def test_indefinite(self):
        with pytest.raises(linalg.LinAlgError):
            linalg.hermitian_sqrt(np.diag([1.0, -1.0]))

    def test_inverse_sqrt(self, rng):
        b = crandn(rng, 3, 3)
        a = b @ b.conj().T + np.eye(3)
        r = linalg.inv_hermitian_sqrt(a)
        np.testing.assert_allclose(r @ a @ r, np.eye(3), atol=1e-10)


def test_logdet(rng):
    b = crandn(rng, 4, 3, 3)
    a = b @ np.conj(np.swapaxes(b, -1, -2)) + np.eye(3)
    np.testing.assert_allclose(linalg.logdet_hpd(a), np.log(np.linalg.det(a).real), atol=1e-12)
