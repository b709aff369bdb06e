"""Restricted Boltzmann machine with multinomial (softmax) visible units.

Visible layer: N sites, each a categorical unit over m outcomes encoded
one-hot. Hidden layer: n_H binary units. With weights W[i, j, k] (site i,
hidden j, category k), visible biases b[i, k] and hidden biases c[j], the
energy of a joint configuration is

    E(v, h) = - sum_ijk W[i,j,k] v[i,k] h_j - sum_ik b[i,k] v[i,k]
              - sum_j c_j h_j

giving the block conditionals

    p(v_i = k | h) = softmax_k( sum_j W[i,j,k] h_j + b[i,k] )
    p(h_j = 1 | v) = sigmoid( sum_ik W[i,j,k] v[i,k] + c_j )

Training follows contrastive divergence: the positive statistics use the
data with hidden probabilities, the negative statistics a k-step block
Gibbs reconstruction. Hidden units stay binary throughout; the
L-dimensional hidden generalization is not implemented.
"""

import numpy as np

from ..errors import SizeGuardError
from ..povm import ProbabilityTable, all_outcome_strings
from ..seeding import derive_rng

EXACT_TABLE_GUARD_BITS = 20
EXACT_HIDDEN_GUARD = 16


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _categorical(probs, uniforms):
    """Sample per-site categories: probs (..., m), uniforms (...)."""
    cum = probs.cumsum(axis=-1)
    return (cum <= uniforms[..., None]).sum(axis=-1).clip(max=probs.shape[-1] - 1)


class MultinomialRBM:
    def __init__(self, n_sites: int, m: int, n_hidden: int, seed: int = 0, init_scale: float = 0.01):
        self.N = int(n_sites)
        self.m = int(m)
        self.n_hidden = int(n_hidden)
        rng = derive_rng(seed, "rbm_init")
        self.W = init_scale * rng.normal(size=(self.N, self.n_hidden, self.m))
        self.b = np.zeros((self.N, self.m))
        self.c = np.zeros(self.n_hidden)

    @property
    def parameters(self):
        return [self.W, self.b, self.c]

    def copy_parameters(self):
        return [p.copy() for p in self.parameters]

    def set_parameters(self, params):
        for dst, src in zip(self.parameters, params):
            dst[:] = src

    # -- conditionals --------------------------------------------------------

    def _onehot(self, v):
        v = np.asarray(v, dtype=np.int64)
        out = np.zeros((v.shape[0], self.N, self.m))
        rows = np.arange(v.shape[0])[:, None]
        cols = np.arange(self.N)[None, :]
        out[rows, cols, v] = 1.0
        return out

    def hidden_conditional(self, v) -> np.ndarray:
        """p(h_j = 1 | v) for integer-coded visible batch (B, N)."""
        v = np.asarray(v, dtype=np.int64)
        act = self.c + sum(self.W[i, :, v[:, i]] for i in range(self.N))
        return _sigmoid(act)

    def visible_conditional(self, h) -> np.ndarray:
        """Per-site softmax p(v_i = k | h) for hidden batch (B, n_H)."""
        logits = np.einsum("bj,ijk->bik", h, self.W) + self.b
        return _softmax(logits)

    # -- Gibbs sampling -------------------------------------------------------

    def gibbs_step(self, v, rng) -> np.ndarray:
        ph = self.hidden_conditional(v)
        h = (rng.random(ph.shape) < ph).astype(np.float64)
        pv = self.visible_conditional(h)
        return _categorical(pv, rng.random(v.shape))

    def gibbs_chain(self, n_sweeps: int, seed: int, n_chains: int = 1, v0=None) -> np.ndarray:
        """All visited visible states of `n_chains` parallel chains, (S, B, N)."""
        rng = derive_rng(seed, "rbm_gibbs")
        if v0 is None:
            v = rng.integers(0, self.m, size=(n_chains, self.N))
        else:
            v = np.array(v0, dtype=np.int64)
        out = np.empty((n_sweeps, v.shape[0], self.N), dtype=np.int64)
        for s in range(n_sweeps):
            v = self.gibbs_step(v, rng)
            out[s] = v
        return out

    # -- contrastive divergence ------------------------------------------------

    def cd_grads(self, batch, k: int, rng):
        """CD-k estimate of the NLL gradient (descent direction for Adam).

        Positive phase uses hidden probabilities on the data; the negative
        chain starts at the data and alternates sampled hiddens with
        sampled visibles for k steps; the final statistics again use
        hidden probabilities.
        """
        if k < 1:
            raise ValueError("CD needs k >= 1")
        v_data = np.asarray(batch, dtype=np.int64)
        B = v_data.shape[0]
        ph_data = self.hidden_conditional(v_data)
        v = v_data
        for _ in range(k):
            v = self.gibbs_step(v, rng)
        ph_model = self.hidden_conditional(v)

        oh_data = self._onehot(v_data)
        oh_model = self._onehot(v)
        gW = (
            np.einsum("bik,bj->ijk", oh_model, ph_model)
            - np.einsum("bik,bj->ijk", oh_data, ph_data)
        ) / B
        gb = (oh_model.mean(axis=0) - oh_data.mean(axis=0))
        gc = ph_model.mean(axis=0) - ph_data.mean(axis=0)
        return [gW, gb, gc]

    def cd_update(self, batch, k: int, optimizer, rng):
        optimizer.step(self.cd_grads(batch, k, rng))

    # -- exact quantities (enumeration oracle, small models only) --------------

    def unnormalized_log_prob(self, v) -> np.ndarray:
        """log sum_h exp(-E(v, h)), up to the partition function."""
        v = np.asarray(v, dtype=np.int64)
        rows = np.arange(v.shape[0])[:, None]
        cols = np.arange(self.N)[None, :]
        bias = self.b[cols, v].sum(axis=1)
        act = self.c + sum(self.W[i, :, v[:, i]] for i in range(self.N))
        return bias + np.logaddexp(0.0, act).sum(axis=1)

    def _check_exact_guards(self):
        if self.N * np.log2(self.m) > EXACT_TABLE_GUARD_BITS:
            raise SizeGuardError(f"exact RBM table capped at m^N <= 2^{EXACT_TABLE_GUARD_BITS}")
        if self.n_hidden > EXACT_HIDDEN_GUARD:
            raise SizeGuardError(f"exact RBM path capped at n_H <= {EXACT_HIDDEN_GUARD}")

    def exact_table(self) -> ProbabilityTable:
        """Exact normalized marginal over all visible strings."""
        self._check_exact_guards()
        strings = all_outcome_strings(self.N, self.m)
        logw = self.unnormalized_log_prob(strings)
        logw -= logw.max()
        w = np.exp(logw)
        return ProbabilityTable(N=self.N, m=self.m, probs=w / w.sum())

    def log_prob(self, v) -> np.ndarray:
        """Exact normalized log-probabilities (enumerates the partition sum)."""
        self._check_exact_guards()
        strings = all_outcome_strings(self.N, self.m)
        logw_all = self.unnormalized_log_prob(strings)
        mx = logw_all.max()
        logz = mx + np.log(np.exp(logw_all - mx).sum())
        return self.unnormalized_log_prob(v) - logz

    def exact_nll_and_grad(self, batch):
        """Enumeration-based NLL and exact gradient (tiny models; test oracle)."""
        self._check_exact_guards()
        v_data = np.asarray(batch, dtype=np.int64)
        strings = all_outcome_strings(self.N, self.m)
        table = self.exact_table()
        nll = float(-self.log_prob(v_data).mean())

        ph_data = self.hidden_conditional(v_data)
        oh_data = self._onehot(v_data)
        ph_all = self.hidden_conditional(strings)
        oh_all = self._onehot(strings)
        p = table.probs
        gW = np.einsum("bik,bj,b->ijk", oh_all, ph_all, p) - np.einsum(
            "bik,bj->ijk", oh_data, ph_data
        ) / v_data.shape[0]
        gb = np.einsum("bik,b->ik", oh_all, p) - oh_data.mean(axis=0)
        gc = np.einsum("bj,b->j", ph_all, p) - ph_data.mean(axis=0)
        return nll, [gW, gb, gc]
