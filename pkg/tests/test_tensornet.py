import numpy as np
import pytest
import scipy.stats

from povmtomo import make_povm
from povmtomo.dense import depolarize, ghz_ket, ket_to_density
from povmtomo.povm import all_outcome_strings, born_probability, table_from_density_matrix
from povmtomo.tensornet import (
    _logprob_kernel,
    _logprob_numpy,
    _sample_kernel,
    _sample_numpy,
    build_transfer_cache,
    conditional_distributions,
    depolarized_ghz_mpo,
    exact_log_prob,
    exact_probability,
    ghz_mps,
    sample_outcomes,
)


def test_ghz_mps_bell_amplitudes():
    psi = ghz_mps(2).to_ket()
    assert np.allclose(psi, np.array([1, 0, 0, 1]) / np.sqrt(2), atol=1e-12)


def test_ghz_mps_matches_dense_ghz():
    for N in (3, 5):
        assert np.allclose(ghz_mps(N).to_ket(), ghz_ket(N), atol=1e-12)


def test_ghz_mps_norm():
    assert ghz_mps(8).norm() == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("p", [0.0, 0.4, 1.0])
def test_mpo_matches_dense_channel_oracle(p):
    for N in (2, 3):
        rho = depolarized_ghz_mpo(N, p).to_density_matrix()
        expect = depolarize(ket_to_density(ghz_ket(N)), p)
        assert np.max(np.abs(rho - expect)) <= 1e-10


def test_mpo_bond_dimension():
    mpo = depolarized_ghz_mpo(6, 0.3)
    assert mpo.tensors[0].shape == (1, 2, 2, 4)
    assert mpo.tensors[3].shape == (4, 2, 2, 4)
    assert mpo.tensors[-1].shape == (4, 2, 2, 1)


def test_exact_probability_bell_tetra():
    povm = make_povm("tetra")
    assert exact_probability(ghz_mps(2), povm, [0, 0]) == pytest.approx(0.125, abs=1e-12)


@pytest.mark.parametrize("povm_id", ["tetra", "pauli4", "pauli6"])
def test_exact_probability_mps_matches_dense_born(povm_id):
    povm = make_povm(povm_id)
    N = 3
    mps = ghz_mps(N)
    rho = ket_to_density(ghz_ket(N))
    for a in all_outcome_strings(N, povm.m):
        assert exact_probability(mps, povm, a) == pytest.approx(
            born_probability(povm, rho, a), abs=1e-12
        )


@pytest.mark.parametrize("povm_id", ["tetra", "pauli4"])
@pytest.mark.parametrize("p", [0.2, 1.0])
def test_exact_probability_mpo_matches_dense_born(povm_id, p):
    povm = make_povm(povm_id)
    N = 3
    mpo = depolarized_ghz_mpo(N, p)
    rho = depolarize(ket_to_density(ghz_ket(N)), p)
    for a in all_outcome_strings(N, povm.m):
        assert exact_probability(mpo, povm, a) == pytest.approx(
            born_probability(povm, rho, a), abs=1e-12
        )


def test_exact_probability_sums_to_one():
    povm = make_povm("tetra")
    mpo = depolarized_ghz_mpo(3, 0.35)
    total = sum(exact_probability(mpo, povm, a) for a in all_outcome_strings(3, 4))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_exact_log_prob_matches_scalar_path():
    povm = make_povm("tetra")
    mps = ghz_mps(4)
    strings = all_outcome_strings(4, 4)
    logs = exact_log_prob(mps, povm, strings)
    for a, lp in zip(strings, logs):
        p = exact_probability(mps, povm, a)
        if p == 0.0:
            assert lp == -np.inf
        else:
            assert lp == pytest.approx(np.log(p), abs=1e-10)


def test_exact_log_prob_structural_zeros_pauli6():
    # strings holding both a z+ and a z- outcome have probability zero on GHZ
    povm = make_povm("pauli6")
    mps = ghz_mps(3)
    logs = exact_log_prob(mps, povm, np.array([[0, 1, 2]], dtype=np.uint8))
    assert logs[0] == -np.inf


def test_sampled_logp_equals_exact_probability():
    povm = make_povm("tetra")
    mpo = depolarized_ghz_mpo(4, 0.3)
    outcomes, logp = sample_outcomes(mpo, povm, 200, seed=9)
    for a, lp in zip(outcomes, logp):
        assert lp == pytest.approx(np.log(exact_probability(mpo, povm, a)), abs=1e-10)


def test_sampler_deterministic_and_seed_sensitive():
    povm = make_povm("tetra")
    mps = ghz_mps(5)
    o1, l1 = sample_outcomes(mps, povm, 500, seed=4)
    o2, l2 = sample_outcomes(mps, povm, 500, seed=4)
    o3, _ = sample_outcomes(mps, povm, 500, seed=5)
    assert np.array_equal(o1, o2) and np.array_equal(l1, l2)
    assert not np.array_equal(o1, o3)


def test_sampler_frequencies_ghz3_tetra():
    # 10^6 seeded samples against the enumerated table: TV and chi-square.
    povm = make_povm("tetra")
    mps = ghz_mps(3)
    table = table_from_density_matrix(povm, ket_to_density(ghz_ket(3)))
    n = 1_000_000
    outcomes, _ = sample_outcomes(mps, povm, n, seed=1234)
    idx = (outcomes[:, 0].astype(np.int64) * 16 + outcomes[:, 1] * 4 + outcomes[:, 2]).astype(
        np.int64
    )
    counts = np.bincount(idx, minlength=64)
    emp = counts / n
    tv = 0.5 * np.abs(emp - table.probs).sum()
    assert tv < 0.005
    expected = table.probs * n
    stat = ((counts - expected) ** 2 / expected).sum()
    pvalue = scipy.stats.chi2.sf(stat, df=63)
    assert pvalue > 1e-3


def test_sampler_uniform_marginals_maximally_mixed():
    # p = 3/4 sends every site to the maximally mixed state.
    povm = make_povm("tetra")
    mpo = depolarized_ghz_mpo(4, 0.75)
    n = 100_000
    outcomes, _ = sample_outcomes(mpo, povm, n, seed=77)
    sigma = np.sqrt(0.25 * 0.75 / n)
    for k in range(4):
        freqs = np.bincount(outcomes[:, k], minlength=4) / n
        assert np.max(np.abs(freqs - 0.25)) < 3 * sigma + 1e-12


def test_conditionals_sum_to_one_along_samples():
    povm = make_povm("pauli4")
    mpo = depolarized_ghz_mpo(4, 0.5)
    outcomes, _ = sample_outcomes(mpo, povm, 20, seed=3)
    for a in outcomes[:5]:
        conds = conditional_distributions(mpo, povm, a)
        assert np.allclose(conds.sum(axis=1), 1.0, atol=1e-10)
        assert conds.min() >= -1e-9


def test_numba_and_numpy_sampler_agree():
    povm = make_povm("tetra")
    cache = build_transfer_cache(ghz_mps(4), povm)
    rng = np.random.default_rng(0)
    uniforms = rng.random((300, 4))
    o_a = np.empty((300, 4), dtype=np.uint8)
    l_a = np.empty(300)
    o_b = np.empty((300, 4), dtype=np.uint8)
    l_b = np.empty(300)
    assert _sample_kernel(cache.G, cache.R, uniforms, o_a, l_a) == -1
    assert _sample_numpy(cache.G, cache.R, uniforms, o_b, l_b) == -1
    assert np.array_equal(o_a, o_b)
    assert np.allclose(l_a, l_b, atol=1e-12)


def test_numba_and_numpy_logprob_agree():
    povm = make_povm("pauli6")
    cache = build_transfer_cache(ghz_mps(3), povm)
    strings = all_outcome_strings(3, 6)
    out_a = np.empty(len(strings))
    out_b = np.empty(len(strings))
    _logprob_kernel(cache.G, strings, out_a)
    _logprob_numpy(cache.G, strings, out_b)
    both_inf = np.isneginf(out_a) & np.isneginf(out_b)
    assert np.allclose(out_a[~both_inf], out_b[~both_inf], atol=1e-12)
    assert np.array_equal(np.isneginf(out_a), np.isneginf(out_b))


def test_invalid_outcome_string_rejected():
    povm = make_povm("tetra")
    with pytest.raises(ValueError):
        exact_probability(ghz_mps(3), povm, [0, 0])
    with pytest.raises(ValueError):
        exact_probability(ghz_mps(3), povm, [0, 0, 9])
