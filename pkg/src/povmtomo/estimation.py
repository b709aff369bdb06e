"""Figures of merit: KL, classical fidelity, and direct stochastic estimators.

Monte-Carlo estimators work against any "model": an object exposing

    N, m
    sample_with_logprob(n, seed) -> (outcomes (n, N) uint8, log_probs (n,))
    log_prob(outcomes) -> (B,) exact log-probabilities

GRUStack implements this natively; TableModel and TensorStateModel adapt
dense tables and MPS/MPO states to the same surface.
"""

import math
from dataclasses import dataclass

import numpy as np

from .backend import dispatch, njit
from .dense import LocalObservable, quantum_fidelity
from .errors import SizeGuardError
from .povm import ProbabilityTable, SingleQubitPOVM, all_outcome_strings
from .reconstruction import reconstruct_density_matrix, rotated_elements
from .seeding import derive_rng
from .tensornet import TransferCache, build_transfer_cache, exact_log_prob, sample_from_cache

LOGP_FLOOR = math.log(1e-300)


@dataclass(frozen=True)
class EstimatorResult:
    """Monte-Carlo mean with its one-s.d. statistical uncertainty."""

    mean: float
    stderr: float
    n_samples: int
    variance: float
    imag_mean: float = 0.0

    @staticmethod
    def from_samples(values: np.ndarray, imag_mean: float = 0.0) -> "EstimatorResult":
        n = values.shape[0]
        var = float(values.var(ddof=1)) if n > 1 else 0.0
        return EstimatorResult(
            mean=float(values.mean()),
            stderr=math.sqrt(var / n),
            n_samples=n,
            variance=var,
            imag_mean=imag_mean,
        )


# ---------------------------------------------------------------------------
# model adapters
# ---------------------------------------------------------------------------


class TableModel:
    """A dense ProbabilityTable with the model sampling/density surface."""

    def __init__(self, table: ProbabilityTable):
        self.table = table
        self.N = table.N
        self.m = table.m
        self._cum = np.cumsum(table.probs)

    def log_prob(self, outcomes) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.table.lookup(np.asarray(outcomes)))

    def sample_with_logprob(self, n_samples: int, seed: int):
        rng = derive_rng(seed, "table_sample")
        u = rng.random(n_samples) * self._cum[-1]
        idx = np.searchsorted(self._cum, u, side="right")
        out = np.empty((n_samples, self.N), dtype=np.uint8)
        rem = idx.astype(np.int64)
        for k in range(self.N - 1, -1, -1):
            out[:, k] = rem % self.m
            rem //= self.m
        with np.errstate(divide="ignore"):
            logp = np.log(self.table.probs[idx])
        return out, logp


class TensorStateModel:
    """An MPS/MPO under a product POVM, exposed as an exactly-known model."""

    def __init__(self, state, povm: SingleQubitPOVM):
        self.state = state
        self.povm = povm
        self.N = state.N
        self.m = povm.m
        self._cache = build_transfer_cache(state, povm)

    def log_prob(self, outcomes) -> np.ndarray:
        return exact_log_prob(self._cache, None, outcomes)

    def sample_with_logprob(self, n_samples: int, seed: int):
        return sample_from_cache(self._cache, n_samples, seed)


def model_table(model) -> ProbabilityTable:
    """Enumerate a model's exact distribution into a dense table."""
    strings = all_outcome_strings(model.N, model.m)
    probs = np.exp(model.log_prob(strings))
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise AssertionError(f"model distribution sums to {total}; not normalized")
    return ProbabilityTable(N=model.N, m=model.m, probs=probs / total)


# ---------------------------------------------------------------------------
# divergences and classical fidelity
# ---------------------------------------------------------------------------


def kl_divergence_exact(P: ProbabilityTable, model) -> float:
    """D(P || P_model) = sum_a P(a) log(P(a)/P_model(a)), enumerated exactly.

    Terms with P(a) = 0 contribute zero; a model zero where P > 0 makes
    the divergence +inf.
    """
    if isinstance(model, ProbabilityTable):
        q = model.probs
        if model.N != P.N or model.m != P.m:
            raise ValueError("table shapes differ")
    else:
        strings = all_outcome_strings(P.N, P.m)
        q = np.exp(model.log_prob(strings))
    p = P.probs
    mask = p > 0.0
    if np.any(q[mask] == 0.0):
        return math.inf
    val = float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))
    return max(val, 0.0) if val > -1e-10 else val


def classical_fidelity_exact(P: ProbabilityTable, Q: ProbabilityTable) -> float:
    """Bhattacharyya coefficient sum_a sqrt(P(a) Q(a))."""
    if P.N != Q.N or P.m != Q.m:
        raise ValueError("table shapes differ")
    return float(np.sqrt(P.probs * Q.probs).sum())


def classical_fidelity(model, ref_log_prob, n_samples: int, seed: int) -> EstimatorResult:
    """Monte-Carlo F_C = E_{a~model} sqrt(P_ref(a) / P_model(a)).

    `ref_log_prob` maps a (B, N) outcome batch to exact reference
    log-probabilities. Samples whose model probability underflows 1e-300
    signal a degenerate model and raise.
    """
    outcomes, lp_model = model.sample_with_logprob(n_samples, seed)
    if np.any(lp_model < LOGP_FLOOR):
        raise ValueError("model produced a sample with probability below 1e-300")
    lp_ref = ref_log_prob(outcomes)
    w = np.exp(0.5 * (lp_ref - lp_model))
    return EstimatorResult.from_samples(w)


# ---------------------------------------------------------------------------
# Q coefficients and direct observable estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QCoefficients:
    """Expansion coefficients of an observable over the POVM outcome basis.

    values[idx] is Q_O restricted to the support outcomes (site order =
    `support`, first site most significant). Off-support sites contribute
    the identity's expansion, whose coefficients are identically one, so
    Q depends only on the support outcomes and the estimator variance is
    independent of the total qubit number.
    """

    support: tuple
    values: np.ndarray
    povm_id: str

    def lookup(self, outcomes: np.ndarray, m: int) -> np.ndarray:
        idx = np.zeros(outcomes.shape[0], dtype=np.int64)
        for s in self.support:
            idx = idx * m + outcomes[:, s].astype(np.int64)
        return self.values[idx]


def q_coefficients(obs: LocalObservable, povm: SingleQubitPOVM) -> QCoefficients:
    """Solve Tr[O M^(a')] = sum_a Q(a) T[a, a'] on the support sites."""
    Tinv = povm.overlap_inverse
    if Tinv is None:
        raise_not_invertible(povm)
    k = len(obs.support)
    if k > 4:
        raise SizeGuardError("Q coefficients capped at support size 4")
    m = povm.m

    strings = all_outcome_strings(k, m)
    t_vec = np.empty(m**k, dtype=complex)
    for i, s in enumerate(strings):
        op = np.array([[1.0 + 0.0j]])
        for a in s:
            op = np.kron(op, povm.elements[a])
        t_vec[i] = np.trace(obs.operator @ op)

    q = t_vec.reshape((m,) * k)
    for axis in range(k):
        q = np.tensordot(Tinv, q, axes=([1], [axis]))
        q = np.moveaxis(q, 0, axis)
    q = q.reshape(m**k)

    # round-trip invariant: sum_a Q(a) M^(a) must reproduce O on the support
    recon = np.zeros_like(obs.operator)
    for i, s in enumerate(strings):
        op = np.array([[1.0 + 0.0j]])
        for a in s:
            op = np.kron(op, povm.elements[a])
        recon = recon + q[i] * op
    if np.max(np.abs(recon - obs.operator)) > 1e-10:
        raise AssertionError("Q-coefficient reconstruction failed")
    return QCoefficients(support=tuple(obs.support), values=q, povm_id=povm.id)


def raise_not_invertible(povm):
    from .errors import OverlapNotInvertibleError

    raise OverlapNotInvertibleError(
        f"POVM {povm.id!r} has a singular overlap matrix; direct estimation "
        "of local observables is unavailable"
    )


def estimate_observable(samples: np.ndarray, q: QCoefficients, m: int) -> EstimatorResult:
    """Sample mean of Q_O over model samples; imaginary part is tracked."""
    vals = q.lookup(np.asarray(samples), m)
    imag_mean = float(vals.imag.mean())
    return EstimatorResult.from_samples(vals.real, imag_mean=imag_mean)


def expectation_from_table(table: ProbabilityTable, q: QCoefficients) -> complex:
    """Exact-weight version of the estimator: sum_a P(a) Q_O(a_support)."""
    probs = table.probs.reshape((table.m,) * table.N)
    keep = set(q.support)
    drop = tuple(ax for ax in range(table.N) if ax not in keep)
    marg = probs.sum(axis=drop)
    # axes of marg follow ascending site order; reorder to match q.support
    asc = sorted(q.support)
    perm = [asc.index(s) for s in q.support]
    marg = np.transpose(marg, axes=perm)
    return complex(np.tensordot(marg.reshape(-1), q.values.reshape(-1), axes=1))


# ---------------------------------------------------------------------------
# MPS fidelity estimator
# ---------------------------------------------------------------------------


def _qvalue_impl(D, outcomes, out):
    n, N = outcomes.shape
    Dm = D.shape[2]
    L = np.empty(Dm, dtype=np.complex128)
    Lnew = np.empty(Dm, dtype=np.complex128)
    for i in range(n):
        L[:] = 0.0
        L[0] = 1.0
        for k in range(N):
            a = outcomes[i, k]
            for e in range(Dm):
                v = 0.0 + 0.0j
                for d in range(Dm):
                    v += L[d] * D[k, a, d, e]
                Lnew[e] = v
            for e in range(Dm):
                L[e] = Lnew[e]
        out[i] = L[0]


_qvalue_numba = njit(_qvalue_impl)


def _qvalue_numpy(D, outcomes, out):
    n, N = outcomes.shape
    Dm = D.shape[2]
    L = np.zeros((n, Dm), dtype=complex)
    L[:, 0] = 1.0
    for k in range(N):
        L = np.einsum("nd,nde->ne", L, D[k, outcomes[:, k]])
    out[:] = L[:, 0]


_qvalue = dispatch(_qvalue_numba, _qvalue_numpy)


def mps_fidelity_cache(target_mps, povm: SingleQubitPOVM) -> np.ndarray:
    """Per-site transfer tensors of Q_{|Psi><Psi|} through the inverse overlap."""
    from .tensornet import _site_transfer

    Nrot = rotated_elements(povm)
    mats = [_site_transfer(t, Nrot) for t in target_mps.tensors]
    m = povm.m
    Dm = max(max(g.shape[1], g.shape[2]) for g in mats)
    D = np.zeros((len(mats), m, Dm, Dm), dtype=complex)
    for k, g in enumerate(mats):
        D[k, :, : g.shape[1], : g.shape[2]] = g
    return D


def mps_fidelity_estimate(model, target_mps, povm: SingleQubitPOVM, n_samples: int, seed: int) -> EstimatorResult:
    """Monte-Carlo estimate of F^2(|Psi><Psi|, rho_model).

    Per sample, Q(a) = <Psi| (x)_k N(a_k) |Psi> is contracted through the
    MPS virtual bonds. The raw sample variance is part of the result;
    large targets make it blow up, which is data, not an error.
    """
    D = mps_fidelity_cache(target_mps, povm)
    outcomes, _ = model.sample_with_logprob(n_samples, seed)
    vals = np.empty(n_samples, dtype=complex)
    chunk = 65536
    for start in range(0, n_samples, chunk):
        stop = min(start + chunk, n_samples)
        _qvalue(D, outcomes[start:stop], vals[start:stop])
    return EstimatorResult.from_samples(vals.real, imag_mean=float(vals.imag.mean()))


# ---------------------------------------------------------------------------
# classical-vs-quantum fidelity bound
# ---------------------------------------------------------------------------


def fc_geq_f_check(model, rho_exact: np.ndarray, povm: SingleQubitPOVM):
    """(F_C, F, bound_holds): exact F_C vs quantum F of the reconstruction."""
    from .povm import table_from_density_matrix

    p_rho = table_from_density_matrix(povm, rho_exact)
    p_model = model_table(model)
    fc = classical_fidelity_exact(p_model, p_rho)
    rho_rec, _ = reconstruct_density_matrix(p_model, povm)
    rho_rec = 0.5 * (rho_rec + rho_rec.conj().T)
    F = quantum_fidelity(rho_exact, rho_rec)
    return fc, F, bool(fc >= F - 1e-8)
