"""Exact POVM sampling from dense pure states.

Ground states of the spin models live in dense 2^N vectors (N <= 16), so
the full m^N outcome table is out of reach while single strings remain
cheap: conditionals P(a_k | a_<k) come from the one-site reduced density
matrix of the partially collapsed state, and choosing outcome a applies
the Kraus factor sqrt(M^(a)) at that site. Completeness of the POVM makes
each conditional sum to one without renormalization, up to roundoff.
"""

import numpy as np

from .backend import dispatch, njit
from .errors import SizeGuardError
from .povm import SingleQubitPOVM, table_from_ket
from .seeding import derive_rng

DENSE_SAMPLE_MAX_N = 16
DENSE_SAMPLE_CHUNK = 4096


def povm_kraus(povm: SingleQubitPOVM) -> np.ndarray:
    """Hermitian square roots sqrt(M^(a)) of the POVM elements."""
    out = np.empty_like(povm.elements)
    for a in range(povm.m):
        w, U = np.linalg.eigh(povm.elements[a])
        w = np.clip(w, 0.0, None)
        out[a] = (U * np.sqrt(w)) @ U.conj().T
    return out


def _dense_sample_impl(psi0, M, K, uniforms, out_outcomes, out_logp):
    n, N = out_outcomes.shape
    m = M.shape[0]
    dim = psi0.shape[0]
    psi = np.empty(dim, dtype=np.complex128)
    w = np.empty(m)
    for i in range(n):
        psi[:] = psi0
        logp = 0.0
        for k in range(N):
            right = 1 << (N - k - 1)
            left = dim >> (N - k)  # 2^k blocks of the already-collapsed sites
            r00 = 0.0
            r11 = 0.0
            r01 = 0.0 + 0.0j
            for l in range(left):
                base = l * 2 * right
                for r in range(right):
                    a0 = psi[base + r]
                    a1 = psi[base + right + r]
                    r00 += a0.real * a0.real + a0.imag * a0.imag
                    r11 += a1.real * a1.real + a1.imag * a1.imag
                    r01 += a0 * np.conj(a1)
            total = 0.0
            for a in range(m):
                val = (
                    M[a, 0, 0].real * r00
                    + M[a, 1, 1].real * r11
                    + 2.0 * (M[a, 1, 0] * r01).real
                )
                w[a] = val if val > 0.0 else 0.0
                total += w[a]
            u = uniforms[i, k] * total
            choice = m - 1
            csum = 0.0
            for a in range(m):
                csum += w[a]
                if u < csum:
                    choice = a
                    break
            out_outcomes[i, k] = choice
            logp += np.log(w[choice] / total)
            k00 = K[choice, 0, 0]
            k01 = K[choice, 0, 1]
            k10 = K[choice, 1, 0]
            k11 = K[choice, 1, 1]
            scale = 1.0 / np.sqrt(w[choice] / total)
            for l in range(left):
                base = l * 2 * right
                for r in range(right):
                    a0 = psi[base + r]
                    a1 = psi[base + right + r]
                    psi[base + r] = (k00 * a0 + k01 * a1) * scale
                    psi[base + right + r] = (k10 * a0 + k11 * a1) * scale
            # keep the collapsed state normalized against drift
            norm = 0.0
            for idx in range(dim):
                norm += psi[idx].real ** 2 + psi[idx].imag ** 2
            inv = 1.0 / np.sqrt(norm)
            for idx in range(dim):
                psi[idx] *= inv
        out_logp[i] = logp


_dense_sample_numba = njit(_dense_sample_impl)


def _dense_sample_numpy(psi0, M, K, uniforms, out_outcomes, out_logp):
    n, N = out_outcomes.shape
    m = M.shape[0]
    dim = psi0.shape[0]
    psi = np.broadcast_to(psi0, (n, dim)).copy()
    logp = np.zeros(n)
    rows = np.arange(n)
    for k in range(N):
        right = 1 << (N - k - 1)
        t = psi.reshape(n, dim // (2 * right), 2, right)
        rho = np.einsum("blsr,bltr->bst", t, t.conj())
        w = np.einsum("ats,bst->ba", M, rho).real
        w = np.clip(w, 0.0, None)
        total = w.sum(axis=1)
        u = uniforms[:, k] * total
        choice = np.minimum((w.cumsum(axis=1) <= u[:, None]).sum(axis=1), m - 1)
        out_outcomes[:, k] = choice
        logp += np.log(w[rows, choice] / total)
        Ksel = K[choice]
        t = np.einsum("bst,bltr->blsr", Ksel, t)
        psi = t.reshape(n, dim)
        psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    out_logp[:] = logp


_dense_sample = dispatch(_dense_sample_numba, _dense_sample_numpy)


def sample_from_ket(ket: np.ndarray, povm: SingleQubitPOVM, n_samples: int, seed: int):
    """(outcomes, log_probs) of exact POVM samples from a dense pure state."""
    dim = ket.shape[0]
    N = int(round(np.log2(dim)))
    if 1 << N != dim:
        raise ValueError("ket dimension is not a power of two")
    if N > DENSE_SAMPLE_MAX_N:
        raise SizeGuardError(f"dense conditional sampling capped at N = {DENSE_SAMPLE_MAX_N}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    psi0 = np.ascontiguousarray(ket, dtype=np.complex128)
    M = povm.elements
    K = povm_kraus(povm)
    out = np.empty((n_samples, N), dtype=np.uint8)
    logp = np.empty(n_samples)
    start = 0
    chunk_index = 0
    while start < n_samples:
        stop = min(start + DENSE_SAMPLE_CHUNK, n_samples)
        rng = derive_rng(seed, "dense_sample", chunk_index)
        uniforms = rng.random((stop - start, N))
        _dense_sample(psi0, M, K, uniforms, out[start:stop], logp[start:stop])
        start = stop
        chunk_index += 1
    return out, logp


def born_log_prob_batch(ket: np.ndarray, povm: SingleQubitPOVM, outcomes: np.ndarray) -> np.ndarray:
    """log P(a) = log <psi| (x)_k M^(a_k) |psi> for a batch of strings."""
    outcomes = np.asarray(outcomes)
    dim = ket.shape[0]
    N = int(round(np.log2(dim)))
    out = np.empty(outcomes.shape[0])
    M = povm.elements
    for startc in range(0, outcomes.shape[0], DENSE_SAMPLE_CHUNK):
        stopc = min(startc + DENSE_SAMPLE_CHUNK, outcomes.shape[0])
        batch = outcomes[startc:stopc]
        phi = np.broadcast_to(ket, (batch.shape[0], dim)).copy()
        for k in range(N):
            right = 1 << (N - k - 1)
            t = phi.reshape(batch.shape[0], dim // (2 * right), 2, right)
            Msel = M[batch[:, k].astype(np.int64)]
            phi = np.einsum("bst,bltr->blsr", Msel, t).reshape(batch.shape[0], dim)
        vals = np.einsum("d,bd->b", ket.conj(), phi).real
        with np.errstate(divide="ignore"):
            out[startc:stopc] = np.log(np.clip(vals, 0.0, None))
    return out


def ket_ref_log_prob(ket: np.ndarray, povm: SingleQubitPOVM):
    """Callable batch -> exact log P(a); table-backed when m^N fits the guard."""
    dim = ket.shape[0]
    N = int(round(np.log2(dim)))
    if N * np.log2(povm.m) <= 24:
        table = table_from_ket(povm, ket)
        lookup = table.lookup

        def _ref(outcomes):
            with np.errstate(divide="ignore"):
                return np.log(lookup(np.asarray(outcomes)))

        return _ref
    return lambda outcomes: born_log_prob_batch(ket, povm, outcomes)
