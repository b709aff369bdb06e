import numpy as np
import pytest

from povmtomo.errors import SizeGuardError
from povmtomo.models import Adam, MultinomialRBM
from povmtomo.povm import all_outcome_strings
from povmtomo.seeding import derive_rng


def enumeration_oracle(model):
    """Joint P(v, h) over all visible strings and hidden bit patterns."""
    strings = all_outcome_strings(model.N, model.m)
    n_h = model.n_hidden
    joint = np.zeros((len(strings), 1 << n_h))
    for vi, v in enumerate(strings):
        for hbits in range(1 << n_h):
            h = np.array([(hbits >> j) & 1 for j in range(n_h)], dtype=float)
            energy = 0.0
            for i in range(model.N):
                energy -= model.b[i, v[i]]
                for j in range(n_h):
                    energy -= model.W[i, j, v[i]] * h[j]
            energy -= float(model.c @ h)
            joint[vi, hbits] = np.exp(-energy)
    return joint / joint.sum()


def test_zero_parameter_conditionals_uniform():
    model = MultinomialRBM(2, 4, 3, seed=0, init_scale=0.0)
    v = np.array([[0, 2], [3, 1]])
    assert np.allclose(model.hidden_conditional(v), 0.5, atol=1e-14)
    h = np.array([[1.0, 0.0, 1.0]])
    assert np.allclose(model.visible_conditional(h), 0.25, atol=1e-14)


def test_conditionals_match_joint_enumeration():
    model = MultinomialRBM(2, 4, 2, seed=1, init_scale=0.7)
    joint = enumeration_oracle(model)
    strings = all_outcome_strings(2, 4)

    # hidden conditional p(h_0 = 1 | v) from the joint
    v_idx = 5
    h_marg = joint[v_idx] / joint[v_idx].sum()
    p_h0 = sum(h_marg[hbits] for hbits in range(4) if hbits & 1)
    model_p = model.hidden_conditional(strings[v_idx : v_idx + 1])[0, 0]
    assert model_p == pytest.approx(p_h0, abs=1e-12)

    # visible conditional p(v_0 = k | h) from the joint via Bayes on E
    h = np.array([[1.0, 0.0]])
    pv = model.visible_conditional(h)[0]
    logits = model.W[:, 0, :] * 1.0 + model.b  # h = (1, 0)
    expect = np.exp(logits - logits.max(axis=1, keepdims=True))
    expect /= expect.sum(axis=1, keepdims=True)
    assert np.allclose(pv, expect, atol=1e-12)


def test_exact_table_zero_model_uniform():
    model = MultinomialRBM(3, 4, 2, seed=0, init_scale=0.0)
    table = model.exact_table()
    assert np.allclose(table.probs, 1.0 / 64.0, atol=1e-12)
    assert table.probs.sum() == pytest.approx(1.0, abs=1e-10)


def test_exact_table_matches_enumeration():
    model = MultinomialRBM(2, 4, 2, seed=3, init_scale=0.6)
    joint = enumeration_oracle(model)
    marginal = joint.sum(axis=1)
    assert np.max(np.abs(model.exact_table().probs - marginal)) < 1e-12


def test_exact_guards():
    with pytest.raises(SizeGuardError):
        MultinomialRBM(2, 4, 20, seed=0).exact_table()
    with pytest.raises(SizeGuardError):
        MultinomialRBM(11, 4, 4, seed=0).exact_table()


def test_exact_gradient_matches_finite_differences():
    model = MultinomialRBM(2, 4, 2, seed=5, init_scale=0.4)
    rng = np.random.default_rng(0)
    batch = rng.integers(0, 4, size=(6, 2))
    _, grads = model.exact_nll_and_grad(batch)
    eps = 1e-6
    worst = 0.0
    for p, g in zip(model.parameters, grads):
        fp, fg = p.reshape(-1), g.reshape(-1)
        for i in rng.choice(fp.size, size=min(25, fp.size), replace=False):
            old = fp[i]
            fp[i] = old + eps
            up = model.exact_nll_and_grad(batch)[0]
            fp[i] = old - eps
            down = model.exact_nll_and_grad(batch)[0]
            fp[i] = old
            fd = (up - down) / (2 * eps)
            worst = max(worst, abs(fd - fg[i]) / max(1e-8, abs(fd) + abs(fg[i])))
    assert worst < 1e-6


def test_gibbs_chain_matches_exact_table():
    # long-chain empirical distribution vs enumerated marginal, TV < 0.01
    model = MultinomialRBM(2, 4, 2, seed=7, init_scale=0.8)
    table = model.exact_table()
    samples = model.gibbs_chain(n_sweeps=6000, seed=123, n_chains=200)
    flat = samples[500:].reshape(-1, 2)  # burn-in
    idx = flat[:, 0] * 4 + flat[:, 1]
    emp = np.bincount(idx, minlength=16) / len(idx)
    tv = 0.5 * np.abs(emp - table.probs).sum()
    assert tv < 0.01


def test_cd_training_memorizes_single_string():
    target = np.array([[1, 3]])
    model = MultinomialRBM(2, 4, 4, seed=9, init_scale=0.05)
    opt = Adam(model.parameters, lr=5e-2)
    rng = derive_rng(0, "cd_test")
    batch = np.repeat(target, 32, axis=0)
    for _ in range(400):
        model.cd_update(batch, k=1, optimizer=opt, rng=rng)
    table = model.exact_table()
    assert table.probs[table.index_of(target[0])] >= 0.9


@pytest.mark.parametrize("k", [1, 5])
def test_cd_training_decreases_exact_nll(k):
    rng_data = np.random.default_rng(3)
    # structured data: two correlated modes
    mode = rng_data.integers(0, 2, size=2000)
    data = np.stack([mode * 2, mode * 2 + 1], axis=1)
    model = MultinomialRBM(2, 4, 4, seed=11, init_scale=0.05)
    opt = Adam(model.parameters, lr=2e-2)
    rng = derive_rng(1, "cd_test", k)
    nll0 = float(-model.log_prob(data).mean())
    for _ in range(200):
        batch = data[rng_data.integers(0, len(data), size=64)]
        model.cd_update(batch, k=k, optimizer=opt, rng=rng)
    nll1 = float(-model.log_prob(data).mean())
    assert nll1 < nll0 - 0.1 * abs(nll0)


def test_zero_step_size_is_noop():
    model = MultinomialRBM(2, 4, 3, seed=13)
    before = model.copy_parameters()
    opt = Adam(model.parameters, lr=0.0)
    rng = derive_rng(2, "cd_test")
    model.cd_update(np.array([[0, 1], [2, 3]]), k=1, optimizer=opt, rng=rng)
    for p, q in zip(model.parameters, before):
        assert np.array_equal(p, q)


def test_exact_full_batch_training_monotone_decrease():
    # exact-gradient descent must cut NLL by well over 10%
    rng_data = np.random.default_rng(17)
    data = np.stack([rng_data.integers(0, 2, size=500)] * 2, axis=1)
    model = MultinomialRBM(2, 2, 3, seed=15, init_scale=0.1)
    opt = Adam(model.parameters, lr=2e-2)
    start = float(-model.log_prob(data).mean())
    for _ in range(250):
        _, grads = model.exact_nll_and_grad(data)
        opt.step(grads)
    end = float(-model.log_prob(data).mean())
    assert end < 0.9 * start
