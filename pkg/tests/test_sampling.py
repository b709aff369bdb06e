import numpy as np
import pytest

from povmtomo import make_povm
from povmtomo.dense import HamiltonianSpec, ghz_ket, ground_state, ket_to_density, pauli_observable, expectation
from povmtomo.errors import SizeGuardError
from povmtomo.povm import born_probability, table_from_ket
from povmtomo.sampling import (
    _dense_sample_numba,
    _dense_sample_numpy,
    born_log_prob_batch,
    ket_ref_log_prob,
    povm_kraus,
    sample_from_ket,
)


@pytest.mark.parametrize("povm_id", ["tetra", "pauli4", "pauli6"])
def test_kraus_factors_square_to_elements(povm_id):
    povm = make_povm(povm_id)
    K = povm_kraus(povm)
    for a in range(povm.m):
        assert np.max(np.abs(K[a] @ K[a].conj().T - povm.elements[a])) <= 1e-12


def test_sample_logp_matches_born():
    povm = make_povm("pauli4")
    psi = ghz_ket(3)
    rho = ket_to_density(psi)
    outcomes, logp = sample_from_ket(psi, povm, 500, seed=5)
    for a, lp in zip(outcomes[:50], logp[:50]):
        assert np.exp(lp) == pytest.approx(born_probability(povm, rho, a), abs=1e-12)


def test_sample_distribution_matches_table():
    povm = make_povm("tetra")
    psi, _ = ground_state(HamiltonianSpec.tfim(4, 1.0, 1.0), seed=0)
    table = table_from_ket(povm, psi)
    n = 200_000
    outcomes, _ = sample_from_ket(psi, povm, n, seed=6)
    idx = np.zeros(n, dtype=np.int64)
    for k in range(4):
        idx = idx * 4 + outcomes[:, k]
    emp = np.bincount(idx, minlength=256) / n
    tv = 0.5 * np.abs(emp - table.probs).sum()
    # multinomial noise floor: E[TV] ~ sqrt(2/pi)/2 * sum sqrt(p(1-p)/n)
    floor = 0.5 * np.sqrt(table.probs * (1 - table.probs) / n).sum()
    assert tv < 3 * floor
    z = (emp - table.probs) / np.sqrt(table.probs * (1 - table.probs) / n + 1e-12)
    assert np.abs(z).max() < 5.0


def test_sampler_deterministic():
    povm = make_povm("tetra")
    psi = ghz_ket(4)
    o1, l1 = sample_from_ket(psi, povm, 300, seed=1)
    o2, l2 = sample_from_ket(psi, povm, 300, seed=1)
    assert np.array_equal(o1, o2) and np.array_equal(l1, l2)


def test_backends_agree_on_same_uniforms():
    povm = make_povm("pauli4")
    psi, _ = ground_state(HamiltonianSpec.tfim(5, 1.0, 1.0), seed=0)
    K = povm_kraus(povm)
    uniforms = np.random.default_rng(3).random((500, 5))
    oa = np.empty((500, 5), dtype=np.uint8)
    la = np.empty(500)
    ob = np.empty((500, 5), dtype=np.uint8)
    lb = np.empty(500)
    _dense_sample_numba(psi.astype(complex), povm.elements, K, uniforms, oa, la)
    _dense_sample_numpy(psi.astype(complex), povm.elements, K, uniforms, ob, lb)
    assert np.array_equal(oa, ob)
    assert np.allclose(la, lb, atol=1e-10)


def test_born_log_prob_batch_matches_scalar():
    povm = make_povm("tetra")
    psi, _ = ground_state(HamiltonianSpec.tfim(4, 1.0, 0.5), seed=0)
    rho = ket_to_density(psi)
    rng = np.random.default_rng(0)
    outcomes = rng.integers(0, 4, size=(60, 4)).astype(np.uint8)
    lp = born_log_prob_batch(psi, povm, outcomes)
    for a, l in zip(outcomes, lp):
        assert np.exp(l) == pytest.approx(born_probability(povm, rho, a), abs=1e-12)


def test_ket_ref_log_prob_table_and_fallback_agree():
    povm = make_povm("tetra")
    psi, _ = ground_state(HamiltonianSpec.tfim(5, 1.0, 1.0), seed=0)
    ref = ket_ref_log_prob(psi, povm)
    rng = np.random.default_rng(1)
    outcomes = rng.integers(0, 4, size=(40, 5)).astype(np.uint8)
    assert np.allclose(ref(outcomes), born_log_prob_batch(psi, povm, outcomes), atol=1e-10)


def test_size_guard():
    povm = make_povm("tetra")
    with pytest.raises(SizeGuardError):
        sample_from_ket(np.ones(1 << 17) / np.sqrt(1 << 17), povm, 1, seed=0)


def test_sampled_marginal_matches_exact_expectation():
    # one-site marginal frequencies reflect <M^(a)> in the state
    povm = make_povm("pauli4")
    psi, _ = ground_state(HamiltonianSpec.tfim(6, 1.0, 1.0), seed=0)
    n = 100_000
    outcomes, _ = sample_from_ket(psi, povm, n, seed=9)
    site = 2
    from povmtomo.dense import LocalObservable

    for a in range(4):
        obs = LocalObservable(support=(site,), operator=povm.elements[a])
        p_exact = expectation(psi, obs)
        emp = float((outcomes[:, site] == a).mean())
        sigma = np.sqrt(p_exact * (1 - p_exact) / n)
        assert abs(emp - p_exact) <= 4 * sigma + 1e-9
