"""MPS/MPO states for the (noisy) GHZ family and exact outcome sampling.

For a product POVM, the outcome distribution of an MPS or MPO factors
through per-site transfer matrices G_k(a)[l, r]; closing the unsampled
sites with the summed transfer matrix (equivalently, the all-ones vector
on the outcome index) yields every conditional P(a_k | a_<k) exactly, so
ancestral sampling is exact and each sample's probability is returned
alongside it. Right environments are cached once per (state, POVM) pair;
per-sample work is a single left-to-right pass.

Intermediate left vectors are rescaled to unit max-norm at every step.
Conditionals are ratios, so the rescaling changes nothing mathematically;
it only keeps long chains away from underflow.
"""

from dataclasses import dataclass

import numpy as np

from .backend import dispatch, njit
from .errors import SizeGuardError
from .povm import SingleQubitPOVM
from .seeding import derive_rng

DENSE_CONTRACT_MAX_N = 12
SAMPLE_CHUNK = 65536

NEG_COND_TOL = 1e-9


@dataclass(frozen=True)
class MPS:
    """Pure state as a chain of (left, physical=2, right) tensors."""

    tensors: tuple

    @property
    def N(self):
        return len(self.tensors)

    def to_ket(self) -> np.ndarray:
        if self.N > DENSE_CONTRACT_MAX_N:
            raise SizeGuardError("dense MPS contraction capped at N = 12")
        psi = self.tensors[0]  # (1, 2, D)
        for A in self.tensors[1:]:
            psi = np.einsum("apb,bqc->apqc", psi.reshape(1, -1, psi.shape[-1]), A)
            psi = psi.reshape(1, -1, A.shape[-1])
        return psi.reshape(-1)

    def norm(self) -> float:
        cache = build_transfer_cache(self, _trivial_povm())
        return float(np.sqrt(exact_probability_cached(cache, np.zeros(self.N, dtype=np.uint8))))


@dataclass(frozen=True)
class MPO:
    """Operator (density matrix) as a chain of (left, ket=2, bra=2, right) tensors."""

    tensors: tuple

    @property
    def N(self):
        return len(self.tensors)

    def to_density_matrix(self) -> np.ndarray:
        if self.N > 8:
            raise SizeGuardError("dense MPO contraction capped at N = 8")
        rho = self.tensors[0]  # (1, 2, 2, D)
        kdim = 2
        for B in self.tensors[1:]:
            rho = np.einsum("astb,bpqc->asptqc", rho.reshape(1, kdim, kdim, -1), B)
            kdim *= 2
            rho = rho.reshape(1, kdim, kdim, B.shape[-1])
        return rho.reshape(kdim, kdim)


def _trivial_povm():
    """Single-element 'POVM' {identity}: turns the sampler cache into a norm check."""
    eye = np.eye(2, dtype=complex)[None, :, :]
    return SingleQubitPOVM(
        id="__identity__",
        m=1,
        elements=eye,
        overlap=np.array([[2.0]]),
        overlap_inverse=np.array([[0.5]]),
    )


def ghz_mps(N: int) -> MPS:
    """Bond-dimension-2 MPS of (|0...0> + |1...1>)/sqrt(2)."""
    if N < 2:
        raise ValueError("GHZ needs N >= 2")
    first = np.zeros((1, 2, 2), dtype=complex)
    first[0, 0, 0] = first[0, 1, 1] = 2.0**-0.5
    bulk = np.zeros((2, 2, 2), dtype=complex)
    bulk[0, 0, 0] = bulk[1, 1, 1] = 1.0
    last = np.zeros((2, 2, 1), dtype=complex)
    last[0, 0, 0] = last[1, 1, 0] = 1.0
    return MPS(tensors=(first,) + (bulk,) * (N - 2) + (last,))


_DILATION_KRAUS_SIGMAS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def depolarized_ghz_mpo(N: int, p: float) -> MPO:
    """GHZ state with per-site depolarization, as a bond-dimension-4 MPO.

    Mirrors the dilation construction: attach a four-level ancilla per
    site, apply the isometry |psi> -> sqrt(1-p)|psi>|0> + sqrt(p/3)
    (X|psi>|1> + Y|psi>|2> + Z|psi>|3>), and trace the ancilla, which sums
    the resulting tensor against its conjugate over the ancilla index.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarization probability must be in [0,1], got {p}")
    coeffs = [np.sqrt(1.0 - p), np.sqrt(p / 3.0), np.sqrt(p / 3.0), np.sqrt(p / 3.0)]
    kraus = [c * s for c, s in zip(coeffs, _DILATION_KRAUS_SIGMAS)]
    out = []
    for A in ghz_mps(N).tensors:
        Dl, _, Dr = A.shape
        # T[k, l, s, r] = (K_k A)[l, s, r]
        T = np.einsum("kst,ltr->klsr", np.stack(kraus), A)
        B = np.einsum("klsr,kmtq->lmstrq", T, T.conj())
        out.append(B.reshape(Dl * Dl, 2, 2, Dr * Dr))
    return MPO(tensors=tuple(out))


class TransferCache:
    """Per-(state, POVM) sampling cache.

    G: (N, m, D, D) complex transfer matrices, bonds zero-padded to the
       largest bond dimension; entry [k, a] maps left to right bond.
    R: (N+1, D) right environments of the outcome-summed chain, each
       rescaled to unit max-norm (only ratios are ever used).
    """

    def __init__(self, G: np.ndarray, R: np.ndarray, N: int, m: int):
        self.G = G
        self.R = R
        self.N = N
        self.m = m


def _site_transfer(tensor: np.ndarray, elements: np.ndarray) -> np.ndarray:
    if tensor.ndim == 3:  # MPS: double layer
        G = np.einsum("lsr,mtq,ats->almrq", tensor, tensor.conj(), elements)
        Dl = tensor.shape[0] ** 2
        Dr = tensor.shape[2] ** 2
        return G.reshape(elements.shape[0], Dl, Dr)
    # MPO
    return np.einsum("lstr,ats->alr", tensor, elements)


def build_transfer_cache(state, povm: SingleQubitPOVM) -> TransferCache:
    mats = [_site_transfer(t, povm.elements) for t in state.tensors]
    N = len(mats)
    m = povm.m
    D = max(max(g.shape[1], g.shape[2]) for g in mats)
    G = np.zeros((N, m, D, D), dtype=complex)
    for k, g in enumerate(mats):
        G[k, :, : g.shape[1], : g.shape[2]] = g
    S = G.sum(axis=1)  # outcome-summed transfer = all-ones closure
    R = np.zeros((N + 1, D), dtype=complex)
    R[N, 0] = 1.0
    for k in range(N - 1, -1, -1):
        v = S[k] @ R[k + 1]
        scale = np.max(np.abs(v))
        if scale == 0.0:
            raise ValueError("state contracts to zero; broken tensors")
        R[k] = v / scale
    return TransferCache(G=G, R=R, N=N, m=m)


def exact_probability_cached(cache: TransferCache, a) -> float:
    a = np.asarray(a, dtype=np.int64)
    L = np.zeros(cache.G.shape[2], dtype=complex)
    L[0] = 1.0
    log_scale = 0.0
    for k in range(cache.N):
        L = L @ cache.G[k, a[k]]
        s = np.max(np.abs(L))
        if s == 0.0:
            return 0.0
        L /= s
        log_scale += np.log(s)
    val = L[0].real * np.exp(log_scale)
    assert abs(L[0].imag) * np.exp(log_scale) <= 1e-10
    return max(float(val), 0.0)


def exact_probability(state, povm: SingleQubitPOVM, a) -> float:
    """P(a) for an MPS or MPO under the product POVM; linear cost in N."""
    a = np.asarray(a, dtype=np.int64)
    if a.shape[0] != state.N:
        raise ValueError("outcome string length does not match state")
    if np.any(a < 0) or np.any(a >= povm.m):
        raise ValueError("outcome symbol out of range")
    return exact_probability_cached(build_transfer_cache(state, povm), a)


# ---------------------------------------------------------------------------
# log P for a batch of strings: numba kernel + numpy fallback
# ---------------------------------------------------------------------------


@njit
def _logprob_kernel(G, outcomes, out):
    n, N = outcomes.shape
    D = G.shape[2]
    L = np.empty(D, dtype=np.complex128)
    Lnew = np.empty(D, dtype=np.complex128)
    for i in range(n):
        L[:] = 0.0
        L[0] = 1.0
        acc = 0.0
        dead = False
        for k in range(N):
            a = outcomes[i, k]
            s = 0.0
            for e in range(D):
                v = 0.0 + 0.0j
                for d in range(D):
                    v += L[d] * G[k, a, d, e]
                Lnew[e] = v
                av = abs(v)
                if av > s:
                    s = av
            if s == 0.0:
                dead = True
                break
            for e in range(D):
                L[e] = Lnew[e] / s
            acc += np.log(s)
        if dead or L[0].real <= 0.0:
            out[i] = -np.inf
        else:
            out[i] = acc + np.log(L[0].real)


def _logprob_numpy(G, outcomes, out):
    n, N = outcomes.shape
    D = G.shape[2]
    L = np.zeros((n, D), dtype=complex)
    L[:, 0] = 1.0
    acc = np.zeros(n)
    for k in range(N):
        L = np.einsum("nd,nde->ne", L, G[k, outcomes[:, k]])
        s = np.abs(L).max(axis=1)
        alive = s > 0.0
        acc[~alive] = -np.inf
        s_safe = np.where(alive, s, 1.0)
        L /= s_safe[:, None]
        acc[alive] += np.log(s_safe[alive])
    head = L[:, 0].real
    with np.errstate(divide="ignore", invalid="ignore"):
        out[:] = np.where(np.isfinite(acc) & (head > 0.0), acc + np.log(np.maximum(head, 1e-300)), -np.inf)


def exact_log_prob(state_or_cache, povm: SingleQubitPOVM | None, outcomes: np.ndarray) -> np.ndarray:
    """log P(a) for a (B, N) batch of outcome strings."""
    cache = (
        state_or_cache
        if isinstance(state_or_cache, TransferCache)
        else build_transfer_cache(state_or_cache, povm)
    )
    outcomes = np.ascontiguousarray(outcomes, dtype=np.uint8)
    out = np.empty(outcomes.shape[0])
    kern = dispatch(_logprob_kernel, _logprob_numpy)
    for start in range(0, outcomes.shape[0], SAMPLE_CHUNK):
        stop = min(start + SAMPLE_CHUNK, outcomes.shape[0])
        kern(cache.G, outcomes[start:stop], out[start:stop])
    return out


# ---------------------------------------------------------------------------
# ancestral sampling: numba kernel + numpy fallback
# ---------------------------------------------------------------------------


@njit
def _sample_kernel(G, R, uniforms, out_outcomes, out_logp):
    n, N = out_outcomes.shape
    m = G.shape[1]
    D = G.shape[2]
    probs = np.empty(m)
    amps = np.empty((m, D), dtype=np.complex128)
    L = np.empty(D, dtype=np.complex128)
    for i in range(n):
        L[:] = 0.0
        L[0] = 1.0
        logp = 0.0
        for k in range(N):
            total = 0.0
            for a in range(m):
                w = 0.0
                for e in range(D):
                    v = 0.0 + 0.0j
                    for d in range(D):
                        v += L[d] * G[k, a, d, e]
                    amps[a, e] = v
                    w += (v * R[k + 1, e]).real
                probs[a] = w
                total += w
            if total <= 0.0:
                return i  # broken state tensors
            bad = False
            for a in range(m):
                pa = probs[a] / total
                if pa < -NEG_COND_TOL:
                    bad = True
                probs[a] = pa if pa > 0.0 else 0.0
            if bad:
                return i
            norm = probs.sum()
            u = uniforms[i, k] * norm
            choice = m - 1
            csum = 0.0
            for a in range(m):
                csum += probs[a]
                if u < csum:
                    choice = a
                    break
            out_outcomes[i, k] = choice
            logp += np.log(probs[choice] / norm)
            s = 0.0
            for e in range(D):
                av = abs(amps[choice, e])
                if av > s:
                    s = av
            for e in range(D):
                L[e] = amps[choice, e] / s
        out_logp[i] = logp
    return -1


def _sample_numpy(G, R, uniforms, out_outcomes, out_logp):
    n, N = out_outcomes.shape
    m, D = G.shape[1], G.shape[2]
    L = np.zeros((n, D), dtype=complex)
    L[:, 0] = 1.0
    logp = np.zeros(n)
    for k in range(N):
        amps = np.einsum("nd,ade->nae", L, G[k])
        w = np.real(amps @ R[k + 1])
        total = w.sum(axis=1, keepdims=True)
        if np.any(total <= 0.0):
            return int(np.argmax(total.ravel() <= 0.0))
        p = w / total
        if np.any(p < -NEG_COND_TOL):
            return int(np.argmax((p < -NEG_COND_TOL).any(axis=1)))
        p = np.clip(p, 0.0, None)
        norm = p.sum(axis=1, keepdims=True)
        u = uniforms[:, k, None] * norm
        choice = np.minimum((p.cumsum(axis=1) <= u).sum(axis=1), m - 1)
        out_outcomes[:, k] = choice
        rows = np.arange(n)
        logp += np.log(p[rows, choice] / norm[:, 0])
        L = amps[rows, choice]
        L /= np.abs(L).max(axis=1, keepdims=True)
    out_logp[:] = logp
    return -1


def sample_outcomes(state, povm: SingleQubitPOVM, n_samples: int, seed: int):
    """Draw i.i.d. outcome strings with their exact log-probabilities.

    Returns (outcomes, log_probs): a (n_samples, N) uint8 array and the
    matching (n_samples,) array of chain-rule log-probabilities.
    Deterministic given the seed: samples are produced in fixed-size
    chunks, each driven by a sub-stream derived from (seed, chunk index),
    so the output is independent of how chunks might be scheduled.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    cache = build_transfer_cache(state, povm)
    return sample_from_cache(cache, n_samples, seed)


def sample_from_cache(cache: TransferCache, n_samples: int, seed: int):
    out_outcomes = np.empty((n_samples, cache.N), dtype=np.uint8)
    out_logp = np.empty(n_samples)
    kern = dispatch(_sample_kernel, _sample_numpy)
    start = 0
    chunk_index = 0
    while start < n_samples:
        stop = min(start + SAMPLE_CHUNK, n_samples)
        rng = derive_rng(seed, "tn_sample", chunk_index)
        uniforms = rng.random((stop - start, cache.N))
        bad = kern(
            cache.G, cache.R, uniforms, out_outcomes[start:stop], out_logp[start:stop]
        )
        if bad >= 0:
            raise ValueError(
                f"conditional distribution with negative mass beyond {NEG_COND_TOL} "
                f"at sample {start + bad}; state tensors are broken"
            )
        start = stop
        chunk_index += 1
    return out_outcomes, out_logp


def conditional_distributions(state, povm: SingleQubitPOVM, a) -> np.ndarray:
    """The (N, m) array of conditionals P(a_k = . | a_<k) along string `a`."""
    cache = build_transfer_cache(state, povm)
    a = np.asarray(a, dtype=np.int64)
    D = cache.G.shape[2]
    L = np.zeros(D, dtype=complex)
    L[0] = 1.0
    out = np.empty((cache.N, cache.m))
    for k in range(cache.N):
        amps = np.einsum("d,ade->ae", L, cache.G[k])
        w = np.real(amps @ cache.R[k + 1])
        out[k] = w / w.sum()
        L = amps[a[k]]
        L /= np.abs(L).max()
    return out
