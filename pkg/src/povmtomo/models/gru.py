"""Stacked-GRU autoregressive model over outcome strings.

The model factorizes P(a) into per-site conditionals via the chain rule:
step i consumes the one-hot encoding of a_{i-1} (a zero vector at i=1,
with zero initial hidden states), pushes it through three stacked gated
recurrent units, and emits softmax logits for a_i from the top hidden
state through a linear map. Gates follow

    z = sigmoid(W_z [h; x])      r = sigmoid(W_r [h; x])
    c = tanh(W_c [r*h; x])       h' = (1 - z)*h + z*c

with no gate biases; the output layer has a bias. All parameters are
real. Training is maximum likelihood with backpropagation through time,
written as jit-able batch kernels (see povmtomo.backend).

Internally the layer-1 input block is zero-padded from m to H columns so
all three layers share array shapes; the padded columns receive zero
input and therefore zero gradient, and they are stripped again when
parameters are exported (see povmtomo.datafiles for the on-disk layout).
"""

import numpy as np

from ..backend import dispatch, njit
from ..seeding import derive_rng

N_LAYERS = 3
SAMPLE_CHUNK = 65536


def _nll_grad_impl(batch, Wzr, Wc, U, b, gWzr, gWc, gU, gb):
    """Summed NLL and parameter gradients for one batch (B, T) of strings."""
    B, T = batch.shape
    m = U.shape[0]
    H = Wc.shape[1]
    L = Wc.shape[0]

    h_store = np.zeros((T, L, B, H))
    z_store = np.empty((T, L, B, H))
    r_store = np.empty((T, L, B, H))
    c_store = np.empty((T, L, B, H))
    x0 = np.zeros((T, B, H))
    for t in range(1, T):
        for i in range(B):
            x0[t, i, batch[i, t - 1]] = 1.0

    dlogits = np.empty((T, B, m))
    nll = 0.0
    hp = np.zeros((L, B, H))
    for t in range(T):
        x = x0[t]
        for l in range(L):
            cat = np.empty((B, 2 * H))
            cat[:, :H] = hp[l]
            cat[:, H:] = x
            zr = 1.0 / (1.0 + np.exp(-np.dot(cat, Wzr[l].T)))
            z = zr[:, :H]
            r = zr[:, H:]
            cat2 = np.empty((B, 2 * H))
            cat2[:, :H] = r * hp[l]
            cat2[:, H:] = x
            c = np.tanh(np.dot(cat2, Wc[l].T))
            h = (1.0 - z) * hp[l] + z * c
            z_store[t, l] = z
            r_store[t, l] = r
            c_store[t, l] = c
            h_store[t, l] = h
            x = h
        logits = np.dot(x, U.T)
        for i in range(B):
            mx = logits[i, 0] + b[0]
            for k in range(m):
                logits[i, k] += b[k]
                if logits[i, k] > mx:
                    mx = logits[i, k]
            tot = 0.0
            for k in range(m):
                logits[i, k] = np.exp(logits[i, k] - mx)
                tot += logits[i, k]
            target = batch[i, t]
            nll -= np.log(logits[i, target] / tot)
            for k in range(m):
                dlogits[t, i, k] = logits[i, k] / tot
            dlogits[t, i, target] -= 1.0
        for l in range(L):
            hp[l] = h_store[t, l]

    dh_carry = np.zeros((L, B, H))
    for t in range(T - 1, -1, -1):
        gU += np.dot(dlogits[t].T, h_store[t, L - 1])
        for k in range(m):
            s = 0.0
            for i in range(B):
                s += dlogits[t, i, k]
            gb[k] += s
        dx_down = np.dot(dlogits[t], U)
        for l in range(L - 1, -1, -1):
            dh = dh_carry[l] + dx_down
            if t == 0:
                hp_l = np.zeros((B, H))
            else:
                hp_l = h_store[t - 1, l]
            if l == 0:
                x = x0[t]
            else:
                x = h_store[t, l - 1]
            z = z_store[t, l]
            r = r_store[t, l]
            c = c_store[t, l]

            dz = dh * (c - hp_l)
            dc = dh * z
            dhp = dh * (1.0 - z)
            da_c = dc * (1.0 - c * c)
            cat2 = np.empty((B, 2 * H))
            cat2[:, :H] = r * hp_l
            cat2[:, H:] = x
            gWc[l] += np.dot(da_c.T, cat2)
            dcat2 = np.dot(da_c, Wc[l])
            drh = dcat2[:, :H]
            dx = dcat2[:, H:].copy()
            dr = drh * hp_l
            dhp = dhp + drh * r
            da_zr = np.empty((B, 2 * H))
            da_zr[:, :H] = dz * z * (1.0 - z)
            da_zr[:, H:] = dr * r * (1.0 - r)
            cat = np.empty((B, 2 * H))
            cat[:, :H] = hp_l
            cat[:, H:] = x
            gWzr[l] += np.dot(da_zr.T, cat)
            dcat = np.dot(da_zr, Wzr[l])
            dhp = dhp + dcat[:, :H]
            dx = dx + dcat[:, H:]
            dh_carry[l] = dhp
            dx_down = dx
    return nll


def _logprob_impl(batch, Wzr, Wc, U, b, out):
    """Exact chain-rule log P(a) for each row of the batch."""
    B, T = batch.shape
    m = U.shape[0]
    H = Wc.shape[1]
    L = Wc.shape[0]
    hp = np.zeros((L, B, H))
    x = np.zeros((B, H))
    out[:] = 0.0
    for t in range(T):
        if t > 0:
            x = np.zeros((B, H))
            for i in range(B):
                x[i, batch[i, t - 1]] = 1.0
        for l in range(L):
            cat = np.empty((B, 2 * H))
            cat[:, :H] = hp[l]
            cat[:, H:] = x
            zr = 1.0 / (1.0 + np.exp(-np.dot(cat, Wzr[l].T)))
            z = zr[:, :H]
            r = zr[:, H:]
            cat2 = np.empty((B, 2 * H))
            cat2[:, :H] = r * hp[l]
            cat2[:, H:] = x
            c = np.tanh(np.dot(cat2, Wc[l].T))
            h = (1.0 - z) * hp[l] + z * c
            hp[l] = h
            x = h
        logits = np.dot(x, U.T)
        for i in range(B):
            mx = logits[i, 0] + b[0]
            for k in range(m):
                logits[i, k] += b[k]
                if logits[i, k] > mx:
                    mx = logits[i, k]
            tot = 0.0
            for k in range(m):
                tot += np.exp(logits[i, k] - mx)
            out[i] += logits[i, batch[i, t]] - mx - np.log(tot)


def _sample_impl(uniforms, Wzr, Wc, U, b, out_outcomes, out_logp):
    """Ancestral sampling; consumes one uniform per (sample, site)."""
    B, T = out_outcomes.shape
    m = U.shape[0]
    H = Wc.shape[1]
    L = Wc.shape[0]
    hp = np.zeros((L, B, H))
    x = np.zeros((B, H))
    out_logp[:] = 0.0
    for t in range(T):
        for l in range(L):
            cat = np.empty((B, 2 * H))
            cat[:, :H] = hp[l]
            cat[:, H:] = x
            zr = 1.0 / (1.0 + np.exp(-np.dot(cat, Wzr[l].T)))
            z = zr[:, :H]
            r = zr[:, H:]
            cat2 = np.empty((B, 2 * H))
            cat2[:, :H] = r * hp[l]
            cat2[:, H:] = x
            c = np.tanh(np.dot(cat2, Wc[l].T))
            h = (1.0 - z) * hp[l] + z * c
            hp[l] = h
            x = h
        logits = np.dot(x, U.T)
        x = np.zeros((B, H))
        for i in range(B):
            mx = logits[i, 0] + b[0]
            for k in range(m):
                logits[i, k] += b[k]
                if logits[i, k] > mx:
                    mx = logits[i, k]
            tot = 0.0
            for k in range(m):
                logits[i, k] = np.exp(logits[i, k] - mx)
                tot += logits[i, k]
            u = uniforms[i, t] * tot
            csum = 0.0
            choice = m - 1
            for k in range(m):
                csum += logits[i, k]
                if u < csum:
                    choice = k
                    break
            out_outcomes[i, t] = choice
            out_logp[i] += np.log(logits[i, choice] / tot)
            x[i, choice] = 1.0


# Compiled twins; the same Python bodies run uncompiled as the numpy path.
_nll_grad_numba = njit(_nll_grad_impl)
_logprob_numba = njit(_logprob_impl)
_sample_numba = njit(_sample_impl)

_nll_grad = dispatch(_nll_grad_numba, _nll_grad_impl)
_logprob = dispatch(_logprob_numba, _logprob_impl)
_sample = dispatch(_sample_numba, _sample_impl)


class GRUStack:
    """Three stacked GRUs with a softmax read-out; exact densities and sampling."""

    def __init__(self, n_sites: int, m: int, hidden: int = 100, seed: int = 0):
        if hidden < m:
            raise ValueError("hidden size must be >= outcome alphabet size")
        self.N = int(n_sites)
        self.m = int(m)
        self.H = int(hidden)
        H = self.H
        rng = derive_rng(seed, "gru_init")
        # runtime layout: gates packed as [z; r], inputs padded to width H
        self.Wzr = np.zeros((N_LAYERS, 2 * H, 2 * H))
        self.Wc = np.zeros((N_LAYERS, H, 2 * H))
        for l in range(N_LAYERS):
            d_in = self.m if l == 0 else H
            bound = np.sqrt(6.0 / (H + d_in + H))
            for block in range(3):  # z, r, c
                w = rng.uniform(-bound, bound, size=(H, H + d_in))
                if block < 2:
                    self.Wzr[l, block * H : (block + 1) * H, : H + d_in] = w
                else:
                    self.Wc[l, :, : H + d_in] = w
        bound = np.sqrt(6.0 / (H + self.m))
        self.U = rng.uniform(-bound, bound, size=(self.m, H))
        self.b = np.zeros(self.m)

    # -- parameter plumbing ------------------------------------------------

    @property
    def parameters(self):
        return [self.Wzr, self.Wc, self.U, self.b]

    def n_parameters(self) -> int:
        # true count, excluding layer-1 padding columns
        H, m = self.H, self.m
        return 3 * H * (H + m) + 2 * 3 * H * 2 * H + m * H + m

    def export_arrays(self):
        """Named parameter arrays in their true (unpadded) shapes."""
        H, m = self.H, self.m
        out = []
        for l in range(N_LAYERS):
            d_in = m if l == 0 else H
            out.append((f"layer{l}.W_z", self.Wzr[l, :H, : H + d_in].copy()))
            out.append((f"layer{l}.W_r", self.Wzr[l, H:, : H + d_in].copy()))
            out.append((f"layer{l}.W_c", self.Wc[l, :, : H + d_in].copy()))
        out.append(("output.U", self.U.copy()))
        out.append(("output.b", self.b.copy()))
        return out

    def import_arrays(self, named):
        H, m = self.H, self.m
        arrays = dict(named)
        for l in range(N_LAYERS):
            d_in = m if l == 0 else H
            self.Wzr[l] = 0.0
            self.Wc[l] = 0.0
            self.Wzr[l, :H, : H + d_in] = arrays[f"layer{l}.W_z"]
            self.Wzr[l, H:, : H + d_in] = arrays[f"layer{l}.W_r"]
            self.Wc[l, :, : H + d_in] = arrays[f"layer{l}.W_c"]
        self.U[:] = arrays["output.U"]
        self.b[:] = arrays["output.b"]

    def copy_parameters(self):
        return [p.copy() for p in self.parameters]

    def set_parameters(self, params):
        for dst, src in zip(self.parameters, params):
            dst[:] = src

    # -- densities and gradients --------------------------------------------

    def _as_batch(self, outcomes):
        batch = np.ascontiguousarray(outcomes, dtype=np.int64)
        if batch.ndim != 2 or batch.shape[1] != self.N:
            raise ValueError(f"expected outcome batch of shape (B, {self.N})")
        return batch

    def log_prob(self, outcomes) -> np.ndarray:
        batch = self._as_batch(outcomes)
        out = np.empty(batch.shape[0])
        for start in range(0, batch.shape[0], SAMPLE_CHUNK):
            stop = min(start + SAMPLE_CHUNK, batch.shape[0])
            _logprob(batch[start:stop], self.Wzr, self.Wc, self.U, self.b, out[start:stop])
        return out

    def nll_and_grad(self, outcomes):
        """(mean NLL, gradient list matching .parameters) for one minibatch."""
        batch = self._as_batch(outcomes)
        B = batch.shape[0]
        gWzr = np.zeros_like(self.Wzr)
        gWc = np.zeros_like(self.Wc)
        gU = np.zeros_like(self.U)
        gb = np.zeros_like(self.b)
        nll = _nll_grad(batch, self.Wzr, self.Wc, self.U, self.b, gWzr, gWc, gU, gb)
        scale = 1.0 / B
        return nll * scale, [gWzr * scale, gWc * scale, gU * scale, gb * scale]

    def mean_nll(self, outcomes, batch_size: int = 8192) -> float:
        lp = self.log_prob(outcomes)
        return float(-lp.mean())

    def sample_with_logprob(self, n_samples: int, seed: int):
        """(outcomes, log_probs); deterministic per seed, chunked as in tensornet."""
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        outcomes = np.empty((n_samples, self.N), dtype=np.uint8)
        logp = np.empty(n_samples)
        start = 0
        chunk_index = 0
        while start < n_samples:
            stop = min(start + SAMPLE_CHUNK, n_samples)
            rng = derive_rng(seed, "gru_sample", chunk_index)
            uniforms = rng.random((stop - start, self.N))
            _sample(
                uniforms, self.Wzr, self.Wc, self.U, self.b,
                outcomes[start:stop], logp[start:stop],
            )
            start = stop
            chunk_index += 1
        return outcomes, logp

    def conditionals(self, outcomes) -> np.ndarray:
        """(B, N, m) per-step conditional distributions along given strings."""
        batch = self._as_batch(outcomes)
        B = batch.shape[0]
        H, m = self.H, self.m
        hp = np.zeros((N_LAYERS, B, H))
        x = np.zeros((B, H))
        out = np.empty((B, self.N, m))
        for t in range(self.N):
            if t > 0:
                x = np.zeros((B, H))
                x[np.arange(B), batch[:, t - 1]] = 1.0
            for l in range(N_LAYERS):
                cat = np.concatenate([hp[l], x], axis=1)
                zr = 1.0 / (1.0 + np.exp(-cat @ self.Wzr[l].T))
                z, r = zr[:, :H], zr[:, H:]
                cat2 = np.concatenate([r * hp[l], x], axis=1)
                c = np.tanh(cat2 @ self.Wc[l].T)
                h = (1.0 - z) * hp[l] + z * c
                hp[l] = h
                x = h
            logits = x @ self.U.T + self.b
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            out[:, t, :] = p / p.sum(axis=1, keepdims=True)
        return out
