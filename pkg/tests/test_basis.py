"""Generator-algebra checks: orthonormality, structure constants, Bloch maps."""

import numpy as np
import numpy.testing as npt
import pytest

from thermoq.basis import (
    bloch_dim,
    coeffs_to_hermitian,
    from_bloch,
    gell_mann_matrices,
    hermitian_to_coeffs,
    structure_constants,
    to_bloch,
)

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def random_density(n, rng, min_eig=0.0):
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = g @ g.conj().T
    rho = rho / np.trace(rho).real
    if min_eig > 0.0:
        rho = (1.0 - n * min_eig) * rho + min_eig * np.eye(n)
    return rho


def random_hermitian(n, rng):
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (g + g.conj().T)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_generator_count_tracelessness_hermiticity(n):
    sigma = gell_mann_matrices(n)
    assert sigma.shape == (bloch_dim(n), n, n)
    for m in sigma:
        npt.assert_allclose(m, m.conj().T, atol=1e-15)
        assert abs(np.trace(m)) < 1e-15


@pytest.mark.parametrize("n", [2, 3, 4])
def test_generator_orthonormality(n):
    sigma = gell_mann_matrices(n)
    gram = np.einsum("iab,jba->ij", sigma, sigma)
    npt.assert_allclose(gram, 2.0 * np.eye(bloch_dim(n)), atol=1e-12)


def test_two_level_generators_are_paulis():
    sigma = gell_mann_matrices(2)
    npt.assert_array_equal(sigma[0], PAULI["x"])
    npt.assert_array_equal(sigma[1], PAULI["y"])
    npt.assert_array_equal(sigma[2], PAULI["z"])


def test_two_level_structure_constants_exact():
    sc = structure_constants(2)
    eps = np.zeros((3, 3, 3))
    for i, j, k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
        eps[i, j, k] = 1.0
        eps[i, k, j] = -1.0
    # Pauli arithmetic is exact in binary floating point, so no tolerance here.
    npt.assert_array_equal(sc.f, eps)
    npt.assert_array_equal(sc.g, np.zeros((3, 3, 3)))


@pytest.mark.parametrize("n", [2, 3])
def test_structure_constants_brute_force(n):
    sc = structure_constants(n)
    sigma = sc.sigma
    d = sc.dim
    for i in range(d):
        for j in range(d):
            for k in range(d):
                comm = sigma[j] @ sigma[k] - sigma[k] @ sigma[j]
                acom = sigma[j] @ sigma[k] + sigma[k] @ sigma[j]
                f_ref = -0.25j * np.trace(sigma[i] @ comm)
                g_ref = 0.25 * np.trace(sigma[i] @ acom)
                assert abs(f_ref.imag) < 1e-12 and abs(g_ref.imag) < 1e-12
                assert abs(sc.f[i, j, k] - f_ref.real) < 1e-12
                assert abs(sc.g[i, j, k] - g_ref.real) < 1e-12


def test_qutrit_constants_match_literature():
    # Standard Gell-Mann structure constants, re-indexed into the grouped
    # ordering used here: (l1..l8) -> (0, 3, 6, 1, 4, 2, 5, 7).
    sc = structure_constants(3)
    s3 = np.sqrt(3.0)
    f_cases = [
        ((0, 3, 6), 1.0),
        ((0, 1, 5), 0.5),
        ((0, 4, 2), -0.5),
        ((3, 1, 2), 0.5),
        ((3, 4, 5), 0.5),
        ((6, 1, 4), 0.5),
        ((6, 2, 5), -0.5),
        ((1, 4, 7), s3 / 2),
        ((2, 5, 7), s3 / 2),
    ]
    g_cases = [
        ((0, 0, 7), 1 / s3),
        ((0, 1, 2), 0.5),
        ((0, 4, 5), 0.5),
        ((3, 3, 7), 1 / s3),
        ((3, 1, 5), -0.5),
        ((3, 4, 2), 0.5),
        ((6, 6, 7), 1 / s3),
        ((6, 1, 1), 0.5),
        ((6, 4, 4), 0.5),
        ((6, 2, 2), -0.5),
        ((6, 5, 5), -0.5),
        ((1, 1, 7), -1 / (2 * s3)),
        ((4, 4, 7), -1 / (2 * s3)),
        ((2, 2, 7), -1 / (2 * s3)),
        ((5, 5, 7), -1 / (2 * s3)),
        ((7, 7, 7), -1 / s3),
    ]
    for idx, val in f_cases:
        assert abs(sc.f[idx] - val) < 1e-12, (idx, val, sc.f[idx])
    for idx, val in g_cases:
        assert abs(sc.g[idx] - val) < 1e-12, (idx, val, sc.g[idx])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_symmetry_of_structure_constants(n):
    sc = structure_constants(n)
    # f is totally antisymmetric, g totally symmetric.
    npt.assert_allclose(sc.f, -np.transpose(sc.f, (0, 2, 1)), atol=1e-12)
    npt.assert_allclose(sc.f, np.transpose(sc.f, (1, 2, 0)), atol=1e-12)
    npt.assert_allclose(sc.g, np.transpose(sc.g, (0, 2, 1)), atol=1e-12)
    npt.assert_allclose(sc.g, np.transpose(sc.g, (1, 0, 2)), atol=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_commutator_reconstruction(n):
    sc = structure_constants(n)
    sigma = sc.sigma
    d = sc.dim
    eye = np.eye(n)
    for j in range(d):
        for k in range(d):
            comm = 2j * np.einsum("i,iab->ab", sc.f[:, j, k], sigma)
            npt.assert_allclose(sigma[j] @ sigma[k] - sigma[k] @ sigma[j], comm, atol=1e-12)
            acom = (4.0 / n) * (j == k) * eye + 2.0 * np.einsum("i,iab->ab", sc.g[:, j, k], sigma)
            npt.assert_allclose(sigma[j] @ sigma[k] + sigma[k] @ sigma[j], acom, atol=1e-12)


def test_l_stack_layout():
    sc = structure_constants(3)
    for k in range(sc.dim):
        npt.assert_array_equal(sc.l_stack[k], sc.f[:, :, k])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_bloch_round_trip(n):
    rng = np.random.default_rng(7)
    sc = structure_constants(n)
    for _ in range(20):
        rho = random_density(n, rng)
        v = to_bloch(rho, sc)
        npt.assert_allclose(from_bloch(v, sc), rho, atol=1e-13)
    # Pure states sit on the sphere of squared radius 2(N-1)/N.
    psi = rng.normal(size=n) + 1j * rng.normal(size=n)
    psi /= np.linalg.norm(psi)
    v = to_bloch(np.outer(psi, psi.conj()), sc)
    npt.assert_allclose(v @ v, 2.0 * (n - 1) / n, atol=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_hermitian_coeff_round_trip(n):
    rng = np.random.default_rng(11)
    sc = structure_constants(n)
    for _ in range(20):
        a = random_hermitian(n, rng)
        a0, vec = hermitian_to_coeffs(a, sc)
        npt.assert_allclose(coeffs_to_hermitian(a0, vec, sc), a, atol=1e-13)
        assert abs(a0 - np.trace(a).real) < 1e-12


def test_qutrit_ground_state_bloch():
    sc = structure_constants(3)
    rho = np.diag([1.0, 0.0, 0.0]).astype(complex)
    v = to_bloch(rho, sc)
    expect = np.zeros(8)
    expect[6] = 1.0
    expect[7] = 1.0 / np.sqrt(3.0)
    npt.assert_allclose(v, expect, atol=1e-15)


def test_structure_constants_cached_and_frozen():
    sc1 = structure_constants(3)
    sc2 = structure_constants(3)
    assert sc1 is sc2
    with pytest.raises(ValueError):
        sc1.f[0, 0, 0] = 1.0


def test_validation_errors():
    sc = structure_constants(2)
    with pytest.raises(ValueError):
        hermitian_to_coeffs(np.array([[0.0, 1.0], [0.0, 0.0]]), sc)
    with pytest.raises(ValueError):
        to_bloch(np.eye(2), sc)  # trace 2
    with pytest.raises(ValueError):
        from_bloch(np.zeros(5), sc)
    with pytest.raises(ValueError):
        gell_mann_matrices(1)
