import numpy as np
import pytest

from povmtomo.dense import (
    HamiltonianSpec,
    LocalObservable,
    build_hamiltonian,
    depolarize,
    expectation,
    ghz_ket,
    ground_state,
    ket_to_density,
    pauli_observable,
    quantum_fidelity,
    triangular_edges,
)
from povmtomo.errors import SizeGuardError
from povmtomo.povm import PAULI_X, PAULI_Y, PAULI_Z

SQ2 = np.sqrt(2.0)


def kraus_depolarize_oracle(rho, p, N):
    """Independent channel application: explicit Kraus sum per site."""
    kraus = [np.sqrt(1 - p) * np.eye(2, dtype=complex)] + [
        np.sqrt(p / 3.0) * s for s in (PAULI_X, PAULI_Y, PAULI_Z)
    ]
    out = rho.astype(complex)
    for site in range(N):
        acc = np.zeros_like(out)
        for K in kraus:
            full = np.array([[1.0 + 0.0j]])
            for q in range(N):
                full = np.kron(full, K if q == site else np.eye(2))
            acc += full @ out @ full.conj().T
        out = acc
    return out


def test_ghz_amplitudes():
    psi = ghz_ket(2)
    assert np.allclose(psi, np.array([1, 0, 0, 1]) / SQ2, atol=1e-12)
    psi3 = ghz_ket(3)
    nz = np.nonzero(np.abs(psi3) > 1e-14)[0]
    assert nz.tolist() == [0, 7]
    for k in range(2, 9):
        assert np.linalg.norm(ghz_ket(k)) == pytest.approx(1.0, abs=1e-12)


def test_ghz_size_guard():
    with pytest.raises(SizeGuardError):
        ghz_ket(13)


def test_depolarize_identity_channel():
    rho = ket_to_density(ghz_ket(2))
    assert np.allclose(depolarize(rho, 0.0), rho, atol=1e-14)


def test_depolarize_single_qubit_three_quarters():
    # At p=3/4 the Pauli twirl outputs the maximally mixed state.
    rho = np.diag([1.0, 0.0]).astype(complex)
    out = depolarize(rho, 0.75)
    assert np.allclose(out, np.eye(2) / 2.0, atol=1e-12)


@pytest.mark.parametrize("p", [0.3, 1.0])
def test_depolarize_bell_matches_kraus_oracle(p):
    rho = ket_to_density(ghz_ket(2))
    assert np.allclose(depolarize(rho, p), kraus_depolarize_oracle(rho, p, 2), atol=1e-12)


def test_depolarize_preserves_state_properties():
    rng = np.random.default_rng(7)
    for p in (0.0, 0.2, 0.75, 1.0):
        A = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        rho = A @ A.conj().T
        rho /= np.trace(rho)
        out = depolarize(rho, p)
        assert abs(np.trace(out) - 1.0) <= 1e-12
        assert np.max(np.abs(out - out.conj().T)) <= 1e-12
        assert np.linalg.eigvalsh(out).min() >= -1e-10


def test_depolarize_rejects_bad_p():
    rho = np.eye(2, dtype=complex) / 2
    with pytest.raises(ValueError):
        depolarize(rho, 1.5)


def test_tfim_two_site_field_free_spectrum():
    spec = HamiltonianSpec.tfim(2, J=1.0, h=0.0)
    H = build_hamiltonian(spec).dense_matrix()
    assert np.allclose(np.sort(np.linalg.eigvalsh(H)), [-1, -1, 1, 1], atol=1e-12)


def test_tfim_two_site_critical_matrix_and_ground_energy():
    # Dense 4x4 oracle: the matrix built from J sz sz + h (sx_0 + sx_1).
    spec = HamiltonianSpec.tfim(2, J=1.0, h=1.0)
    H = build_hamiltonian(spec).dense_matrix()
    expect = np.array(
        [
            [1, 1, 1, 0],
            [1, -1, 0, 1],
            [1, 0, -1, 1],
            [0, 1, 1, 1],
        ],
        dtype=float,
    )
    assert np.allclose(H, expect, atol=1e-12)
    # Oracle eigenvalues of that matrix: {-sqrt(5), -1, 1, sqrt(5)}.
    evals = np.sort(np.linalg.eigvalsh(expect))
    assert evals[0] == pytest.approx(-np.sqrt(5.0), abs=1e-12)
    psi, energy = ground_state(spec, seed=3)
    assert energy == pytest.approx(evals[0], abs=1e-9)


def test_heisenberg_two_site_singlet():
    # sigma.sigma has eigenvalues {1, 1, 1, -3}.
    spec = HamiltonianSpec(kind="heis_tri", N=2, edges=((0, 1),))
    H = build_hamiltonian(spec).dense_matrix()
    assert np.allclose(np.sort(np.linalg.eigvalsh(H)), [-3, 1, 1, 1], atol=1e-12)


@pytest.mark.parametrize(
    "spec",
    [
        HamiltonianSpec.tfim(4, J=1.0, h=0.7),
        HamiltonianSpec.tfim(6, J=1.0, h=1.0, boundary="periodic"),
        HamiltonianSpec.heisenberg_triangular(2, boundary="open"),
    ],
)
def test_matrix_free_action_matches_dense(spec):
    action = build_hamiltonian(spec)
    H = action.dense_matrix()
    rng = np.random.default_rng(11)
    for _ in range(20):
        psi = rng.normal(size=action.dim) + 1j * rng.normal(size=action.dim)
        assert np.max(np.abs(action.apply(psi) - H @ psi)) <= 1e-10


def test_triangular_edges_periodic_counts():
    edges = triangular_edges(3, "periodic")
    assert len(edges) == 27  # 3 bonds per site on the triangular lattice
    degree = np.zeros(9)
    for i, j in edges:
        assert i != j
        degree[i] += 1
        degree[j] += 1
    assert np.all(degree == 6)


def test_triangular_open_2x2():
    edges = triangular_edges(2, "open")
    assert sorted(tuple(sorted(e)) for e in edges) == [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]


def test_ground_state_tfim10_matches_dense_oracle():
    spec = HamiltonianSpec.tfim(10, J=1.0, h=1.0)
    psi, energy = ground_state(spec, seed=0)
    H = build_hamiltonian(spec).dense_matrix()
    evals, evecs = np.linalg.eigh(H)
    assert energy == pytest.approx(evals[0], abs=1e-8)
    overlap = abs(np.vdot(evecs[:, 0], psi))
    assert overlap == pytest.approx(1.0, abs=1e-7)


def test_ground_state_triangular_patch_matches_dense_oracle():
    spec = HamiltonianSpec.heisenberg_triangular(2, boundary="open")
    psi, energy = ground_state(spec, seed=0)
    evals = np.linalg.eigvalsh(build_hamiltonian(spec).dense_matrix())
    assert energy == pytest.approx(evals[0], abs=1e-8)


def test_ground_state_is_variational():
    spec = HamiltonianSpec.tfim(6, J=1.0, h=1.3)
    action = build_hamiltonian(spec)
    _, energy = ground_state(spec, seed=5)
    rng = np.random.default_rng(23)
    for _ in range(100):
        phi = rng.normal(size=action.dim) + 1j * rng.normal(size=action.dim)
        phi /= np.linalg.norm(phi)
        assert energy <= np.real(np.vdot(phi, action.apply(phi))) + 1e-10


def test_ground_state_deterministic():
    spec = HamiltonianSpec.tfim(8, J=1.0, h=1.0)
    psi1, e1 = ground_state(spec, seed=42)
    psi2, e2 = ground_state(spec, seed=42)
    assert e1 == e2
    assert np.array_equal(psi1, psi2)


def test_expectation_examples():
    ket0 = np.array([1.0, 0.0], dtype=complex)
    assert expectation(ket0, pauli_observable("z", (0,))) == pytest.approx(1.0, abs=1e-12)
    bell = ghz_ket(2)
    assert expectation(bell, pauli_observable("zz", (0, 1))) == pytest.approx(1.0, abs=1e-12)
    assert expectation(ket_to_density(bell), pauli_observable("zz", (0, 1))) == pytest.approx(
        1.0, abs=1e-12
    )


def test_expectation_tfim10_matches_dense_eigvector():
    spec = HamiltonianSpec.tfim(10, J=1.0, h=1.0)
    psi, _ = ground_state(spec, seed=0)
    H = build_hamiltonian(spec).dense_matrix()
    _, evecs = np.linalg.eigh(H)
    gs = evecs[:, 0].astype(complex)
    for site in (0, 4, 9):
        obs = pauli_observable("x", (site,))
        assert expectation(psi, obs) == pytest.approx(expectation(gs, obs), abs=1e-8)


def test_expectation_support_out_of_range():
    with pytest.raises(ValueError):
        expectation(ghz_ket(2), pauli_observable("z", (5,)))


def test_expectation_nonadjacent_support():
    psi, _ = ground_state(HamiltonianSpec.tfim(5, J=1.0, h=0.8), seed=1)
    obs = pauli_observable("zz", (0, 3))
    # oracle: explicit kron
    full = np.kron(np.kron(PAULI_Z, np.eye(4)), np.kron(PAULI_Z, np.eye(2)))
    expect = np.real(np.vdot(psi, full @ psi))
    assert expectation(psi, obs) == pytest.approx(expect, abs=1e-12)


def test_quantum_fidelity_basic():
    rho = ket_to_density(ghz_ket(2))
    assert quantum_fidelity(rho, rho) == pytest.approx(1.0, abs=1e-10)
    r0 = np.diag([1.0, 0.0]).astype(complex)
    r1 = np.diag([0.0, 1.0]).astype(complex)
    assert quantum_fidelity(r0, r1) == pytest.approx(0.0, abs=1e-10)
    assert quantum_fidelity(r0, np.eye(2, dtype=complex) / 2) == pytest.approx(
        1.0 / SQ2, abs=1e-10
    )


def test_quantum_fidelity_symmetric_and_pure_overlap():
    rng = np.random.default_rng(3)
    for _ in range(10):
        a = rng.normal(size=4) + 1j * rng.normal(size=4)
        b = rng.normal(size=4) + 1j * rng.normal(size=4)
        a /= np.linalg.norm(a)
        b /= np.linalg.norm(b)
        ra, rb = ket_to_density(a), ket_to_density(b)
        f_ab = quantum_fidelity(ra, rb)
        f_ba = quantum_fidelity(rb, ra)
        assert abs(f_ab - f_ba) <= 1e-8
        assert f_ab == pytest.approx(abs(np.vdot(a, b)), abs=1e-8)


def test_quantum_fidelity_rejects_non_hermitian():
    bad = np.array([[0.5, 1.0], [0.0, 0.5]], dtype=complex)
    with pytest.raises(ValueError):
        quantum_fidelity(bad, np.eye(2, dtype=complex) / 2)
