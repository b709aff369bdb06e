"""Dense state vectors and density matrices at desk scale.

Conventions: qubit 0 is the leftmost tensor factor and the most
significant bit of dense basis indices, so basis state |b_0 b_1 ... >
sits at index sum_k b_k * 2^(N-1-k).

Ground states are obtained with an implicitly restarted Lanczos solve
(scipy/ARPACK) on a matrix-free Hamiltonian action; this stands in for
the tensor-network ground-state machinery used at larger sizes, which is
out of scope here.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, SizeGuardError
from .povm import PAULI_X, PAULI_Y, PAULI_Z
from .seeding import derive_rng

DENSE_KET_MAX_N = 12
GROUND_STATE_MAX_N = 20
LANCZOS_MAXITER = 2000


def ghz_ket(N: int) -> np.ndarray:
    """(|0...0> + |1...1>)/sqrt(2) as a dense amplitude vector."""
    if not 2 <= N <= DENSE_KET_MAX_N:
        raise SizeGuardError(f"dense GHZ requires 2 <= N <= {DENSE_KET_MAX_N}")
    psi = np.zeros(1 << N, dtype=complex)
    psi[0] = psi[-1] = 1.0 / np.sqrt(2.0)
    return psi


def ket_to_density(ket: np.ndarray) -> np.ndarray:
    return np.outer(ket, ket.conj())


def num_qubits(dim: int) -> int:
    N = int(round(np.log2(dim)))
    if 1 << N != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return N


def apply_single_site(op: np.ndarray, psi: np.ndarray, site: int, N: int) -> np.ndarray:
    """Apply a 2x2 operator at `site` to a dense ket."""
    left = 1 << site
    right = 1 << (N - site - 1)
    t = psi.reshape(left, 2, right)
    return np.einsum("st,atb->asb", op, t).reshape(psi.shape)


def _left_mul_site(op: np.ndarray, rho: np.ndarray, site: int, N: int) -> np.ndarray:
    left = 1 << site
    right = 1 << (N - site - 1)
    t = rho.reshape(left, 2, right * rho.shape[1])
    return np.einsum("st,atb->asb", op, t).reshape(rho.shape)


def _right_mul_site(op: np.ndarray, rho: np.ndarray, site: int, N: int) -> np.ndarray:
    left = 1 << site
    right = 1 << (N - site - 1)
    t = rho.reshape(rho.shape[0] * left, 2, right)
    return np.einsum("asb,st->atb", t, op).reshape(rho.shape)


def depolarize(rho: np.ndarray, p: float) -> np.ndarray:
    """Per-site depolarizing channel rho -> (1-p) rho + (p/3) sum_s s rho s.

    This is the Kraus form of the isometric dilation with coefficients
    sqrt(1-p) and sqrt(p/3); the channel is applied independently to every
    site. At p = 3/4 each site is mapped to the maximally mixed state.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarization probability must be in [0,1], got {p}")
    N = num_qubits(rho.shape[0])
    out = rho.astype(complex)
    for site in range(N):
        acc = (1.0 - p) * out
        for sigma in (PAULI_X, PAULI_Y, PAULI_Z):
            tmp = _left_mul_site(sigma, out, site, N)
            tmp = _right_mul_site(sigma.conj().T, tmp, site, N)
            acc = acc + (p / 3.0) * tmp
        out = acc
    return out


@dataclass(frozen=True)
class LocalObservable:
    """Hermitian operator acting on an ordered tuple of sites."""

    support: tuple
    operator: np.ndarray

    def __post_init__(self):
        k = len(self.support)
        if self.operator.shape != (1 << k, 1 << k):
            raise ValueError("operator shape does not match support size")
        if np.max(np.abs(self.operator - self.operator.conj().T)) > 1e-12:
            raise ValueError("observable must be Hermitian")
        if len(set(self.support)) != k:
            raise ValueError("support sites must be distinct")


def pauli_observable(kind: str, sites) -> LocalObservable:
    """Convenience builder for products of single Pauli matrices, e.g. ('zz', (0, 3))."""
    mats = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}
    op = np.array([[1.0 + 0.0j]])
    for ch in kind:
        op = np.kron(op, mats[ch])
    return LocalObservable(support=tuple(sites), operator=op)


@dataclass(frozen=True)
class HamiltonianSpec:
    """Lattice spin model: 1D transverse-field Ising or triangular Heisenberg.

    kind "tfim1d":  H = J sum_<ij> sz_i sz_j + h sum_i sx_i on a chain.
    kind "heis_tri": H = sum_<ij> (sx sx + sy sy + sz sz) on an L x L
    triangular lattice, site index i = n1 * L + n2.
    """

    kind: str
    N: int
    J: float = 1.0
    h: float = 1.0
    L: int = 0
    boundary: str = "open"
    edges: tuple = field(default=(), compare=False)

    @staticmethod
    def tfim(N: int, J: float = 1.0, h: float = 1.0, boundary: str = "open"):
        edges = [(i, i + 1) for i in range(N - 1)]
        if boundary == "periodic":
            if N < 3:
                raise ValueError("periodic chain needs N >= 3")
            edges.append((N - 1, 0))
        elif boundary != "open":
            raise ValueError(f"unknown boundary {boundary!r}")
        return HamiltonianSpec(kind="tfim1d", N=N, J=J, h=h, boundary=boundary, edges=tuple(edges))

    @staticmethod
    def heisenberg_triangular(L: int, boundary: str = "periodic"):
        edges = triangular_edges(L, boundary)
        return HamiltonianSpec(
            kind="heis_tri", N=L * L, J=1.0, h=0.0, L=L, boundary=boundary, edges=tuple(edges)
        )


def triangular_edges(L: int, boundary: str = "periodic"):
    """Nearest-neighbour bonds of the L x L triangular lattice.

    Offsets (+1,0), (0,+1), (+1,-1) count each bond once; a periodic
    lattice needs L >= 3 to avoid duplicate bonds.
    """
    if boundary == "periodic" and L < 3:
        raise ValueError("periodic triangular lattice needs L >= 3")
    if boundary not in ("open", "periodic"):
        raise ValueError(f"unknown boundary {boundary!r}")
    edges = []
    for n1 in range(L):
        for n2 in range(L):
            i = n1 * L + n2
            for d1, d2 in ((1, 0), (0, 1), (1, -1)):
                m1, m2 = n1 + d1, n2 + d2
                if boundary == "periodic":
                    j = (m1 % L) * L + (m2 % L)
                    edges.append((i, j))
                elif 0 <= m1 < L and 0 <= m2 < L:
                    edges.append((i, m1 * L + m2))
    return edges


def _bit_signs(N: int) -> np.ndarray:
    """(N, 2^N) array of +-1 eigenvalues of sz at each site."""
    idx = np.arange(1 << N, dtype=np.int64)
    signs = np.empty((N, 1 << N), dtype=np.float64)
    for site in range(N):
        bit = (idx >> (N - site - 1)) & 1
        signs[site] = 1.0 - 2.0 * bit
    return signs


class HamiltonianAction:
    """Matrix-free action ket -> H ket for a HamiltonianSpec."""

    def __init__(self, spec: HamiltonianSpec):
        if spec.N > GROUND_STATE_MAX_N:
            raise SizeGuardError(f"matrix-free path capped at N = {GROUND_STATE_MAX_N}")
        self.spec = spec
        self.N = spec.N
        self.dim = 1 << spec.N
        signs = _bit_signs(spec.N)
        # Diagonal part: J sum_<ij> sz_i sz_j (all zz couplings are diagonal).
        zz_coupling = spec.J if spec.kind == "tfim1d" else 1.0
        self.diag = np.zeros(self.dim)
        for i, j in spec.edges:
            self.diag += zz_coupling * signs[i] * signs[j]
        self._signs = signs

    def apply(self, psi: np.ndarray) -> np.ndarray:
        spec = self.spec
        N = self.N
        out = self.diag * psi
        if spec.kind == "tfim1d":
            for site in range(N):
                out = out + spec.h * _flip_site(psi, site, N)
        elif spec.kind == "heis_tri":
            # sx sx + sy sy flips anti-aligned pairs with amplitude 2.
            for i, j in spec.edges:
                flipped = _flip_site(_flip_site(psi, i, N), j, N)
                anti = self._signs[i] * self._signs[j] < 0
                out[anti] += 2.0 * flipped[anti]
        else:
            raise ValueError(f"unknown Hamiltonian kind {spec.kind!r}")
        return out

    def dense_matrix(self) -> np.ndarray:
        """Explicit matrix (test oracle; N <= 12)."""
        if self.N > 12:
            raise SizeGuardError("dense Hamiltonian assembly capped at N = 12")
        H = np.zeros((self.dim, self.dim))
        eye = np.eye(self.dim)
        for col in range(self.dim):
            H[:, col] = self.apply(eye[:, col])
        return H


def _flip_site(psi: np.ndarray, site: int, N: int) -> np.ndarray:
    left = 1 << site
    right = 1 << (N - site - 1)
    return psi.reshape(left, 2, right)[:, ::-1, :].reshape(psi.shape)


def build_hamiltonian(spec: HamiltonianSpec) -> HamiltonianAction:
    return HamiltonianAction(spec)


def ground_state(spec: HamiltonianSpec, seed: int = 0):
    """Lowest eigenpair via Lanczos; returns (ket, energy).

    Deterministic: the start vector is drawn from a seeded stream. The
    residual ||H psi - E psi|| is verified to be <= 1e-8; failure raises
    ConvergenceError rather than returning silently.
    """
    action = build_hamiltonian(spec)
    if action.dim == 2:
        raise SizeGuardError("single-site ground state not supported")
    rng = derive_rng(seed, "ground_state", spec.N)
    v0 = rng.normal(size=action.dim)
    v0 /= np.linalg.norm(v0)
    op = spla.LinearOperator((action.dim, action.dim), matvec=action.apply, dtype=np.float64)
    try:
        vals, vecs = spla.eigsh(op, k=1, which="SA", v0=v0, maxiter=LANCZOS_MAXITER, tol=1e-12)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(f"Lanczos did not converge within {LANCZOS_MAXITER} iterations") from exc
    energy = float(vals[0])
    psi = vecs[:, 0]
    # Fix the global sign so results are reproducible bit for bit.
    pivot = np.argmax(np.abs(psi))
    if psi[pivot] < 0:
        psi = -psi
    resid = np.linalg.norm(action.apply(psi) - energy * psi)
    if resid > 1e-8:
        raise ConvergenceError(f"ground-state residual {resid:.3e} exceeds 1e-8")
    return psi.astype(complex), energy


def expectation(state: np.ndarray, obs: LocalObservable) -> float:
    """<O> for a dense ket (1D array) or density matrix (2D array)."""
    if state.ndim == 1:
        N = num_qubits(state.shape[0])
        _check_support(obs, N)
        phi = _apply_local(obs, state, N)
        val = np.vdot(state, phi)
    else:
        N = num_qubits(state.shape[0])
        _check_support(obs, N)
        val = np.trace(_apply_local_matrix(obs, state, N))
    assert abs(val.imag) <= 1e-10
    return float(val.real)


def _check_support(obs: LocalObservable, N: int):
    if any(s < 0 or s >= N for s in obs.support):
        raise ValueError(f"support {obs.support} out of range for N = {N}")


def _apply_local(obs: LocalObservable, psi: np.ndarray, N: int) -> np.ndarray:
    """O|psi> for O supported on obs.support."""
    k = len(obs.support)
    t = psi.reshape((2,) * N)
    src = list(obs.support)
    t = np.moveaxis(t, src, range(k))
    t = t.reshape(1 << k, -1)
    t = obs.operator @ t
    t = t.reshape((2,) * N)
    t = np.moveaxis(t, range(k), src)
    return t.reshape(psi.shape)


def _apply_local_matrix(obs: LocalObservable, rho: np.ndarray, N: int) -> np.ndarray:
    """O rho for O supported on obs.support (acting on the ket side)."""
    dim = rho.shape[0]
    k = len(obs.support)
    t = rho.reshape((2,) * N + (dim,))
    src = list(obs.support)
    t = np.moveaxis(t, src, range(k))
    t = t.reshape(1 << k, -1)
    t = obs.operator @ t
    t = t.reshape((2,) * k + (2,) * (N - k) + (dim,))
    t = np.moveaxis(t, range(k), src)
    return t.reshape(dim, dim)


def quantum_fidelity(rho1: np.ndarray, rho2: np.ndarray) -> float:
    """Tr sqrt( sqrt(rho1) rho2 sqrt(rho1) ) via Hermitian eigendecompositions.

    Negative eigenvalues within roundoff are clamped to zero; the clamp
    magnitude is not hidden from callers who need it (see
    `quantum_fidelity_with_clamp`).
    """
    F, _ = quantum_fidelity_with_clamp(rho1, rho2)
    return F


def quantum_fidelity_with_clamp(rho1: np.ndarray, rho2: np.ndarray):
    """Fidelity plus the total negative-eigenvalue mass clamped on the way."""
    for rho in (rho1, rho2):
        if np.max(np.abs(rho - rho.conj().T)) > 1e-8:
            raise ValueError("fidelity inputs must be Hermitian")
    clamp = 0.0
    w1, U1 = np.linalg.eigh(rho1)
    clamp += float(-w1[w1 < 0].sum())
    w1 = np.clip(w1, 0.0, None)
    sqrt1 = (U1 * np.sqrt(w1)) @ U1.conj().T
    inner = sqrt1 @ rho2 @ sqrt1
    w2 = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    clamp += float(-w2[w2 < 0].sum())
    w2 = np.clip(w2, 0.0, None)
    return float(np.sqrt(w2).sum()), clamp
