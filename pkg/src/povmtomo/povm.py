"""Single-qubit informationally complete POVMs and Born-rule evaluation.

Three built-in measurements are provided, identified by the strings used
in configs and dataset headers:

* ``"tetra"``  - 4 outcomes, sub-normalized rank-1 projectors pointing to
  the vertices of a regular tetrahedron on the Bloch sphere. Symmetric,
  invertible overlap matrix.
* ``"pauli6"`` - 6 outcomes, 1/3 times the projectors onto the six Pauli
  eigenstates. Overlap matrix is singular (rank 4), so linear inversion
  and local-observable estimation are unavailable.
* ``"pauli4"`` - 4 outcomes: 1/3 of the |0>, |+>, |r> projectors plus the
  completing element. Invertible overlap matrix.

The N-qubit measurement is always the tensor product of one single-qubit
POVM per site; outcome strings are arrays a[k] in {0..m-1} with site 0
the leftmost tensor factor (most significant index).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import SizeGuardError

ATOL_ELEMENT = 1e-12
ATOL_PROB = 1e-10

# Dense probability tables are capped at 2^24 entries.
TABLE_GUARD_BITS = 24

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (PAULI_X, PAULI_Y, PAULI_Z)

POVM_IDS = ("tetra", "pauli6", "pauli4")


@dataclass(frozen=True)
class SingleQubitPOVM:
    """An m-outcome single-qubit POVM with its overlap matrix.

    Attributes:
        id: one of "tetra", "pauli6", "pauli4".
        m: number of outcomes.
        elements: (m, 2, 2) complex array, elements[a] = M^(a).
        overlap: (m, m) real matrix of pairwise traces Tr[M^(a) M^(a')].
        overlap_inverse: inverse of `overlap`, or None when singular.
    """

    id: str
    m: int
    elements: np.ndarray
    overlap: np.ndarray
    overlap_inverse: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.elements.setflags(write=False)
        self.overlap.setflags(write=False)
        if self.overlap_inverse is not None:
            self.overlap_inverse.setflags(write=False)

    def validate(self):
        """Check the defining invariants; raises AssertionError on violation."""
        m = self.m
        assert self.elements.shape == (m, 2, 2)
        for a in range(m):
            M = self.elements[a]
            assert np.max(np.abs(M - M.conj().T)) <= ATOL_ELEMENT, "element not Hermitian"
            assert np.linalg.eigvalsh(M).min() >= -ATOL_ELEMENT, "element not PSD"
        total = self.elements.sum(axis=0)
        assert np.max(np.abs(total - np.eye(2))) <= ATOL_ELEMENT, "elements do not sum to identity"
        T = overlap_matrix(self.elements)
        assert np.max(np.abs(T - self.overlap)) <= ATOL_ELEMENT, "stored overlap inconsistent"
        if self.overlap_inverse is not None:
            resid = self.overlap @ self.overlap_inverse - np.eye(m)
            assert np.max(np.abs(resid)) <= 1e-10


@dataclass
class ProbabilityTable:
    """Dense outcome distribution over all m^N strings (small N only).

    probs is indexed by sum_k a[k] * m^(N-1-k), i.e. site 0 is the most
    significant digit, matching the tensor-factor order of the operators.
    """

    N: int
    m: int
    probs: np.ndarray

    def __post_init__(self):
        if self.probs.shape != (self.m**self.N,):
            raise ValueError("table shape does not match (N, m)")

    def validate(self):
        assert self.probs.min() >= 0.0
        assert abs(self.probs.sum() - 1.0) <= ATOL_PROB

    def index_of(self, a) -> int:
        a = np.asarray(a)
        idx = 0
        for k in range(self.N):
            idx = idx * self.m + int(a[k])
        return idx

    def lookup(self, outcomes: np.ndarray) -> np.ndarray:
        """Probabilities for a batch of outcome strings, shape (B, N)."""
        outcomes = np.asarray(outcomes)
        idx = np.zeros(outcomes.shape[0], dtype=np.int64)
        for k in range(self.N):
            idx = idx * self.m + outcomes[:, k].astype(np.int64)
        return self.probs[idx]


def _bloch_element(s) -> np.ndarray:
    sx, sy, sz = s
    return 0.25 * (np.eye(2, dtype=complex) + sx * PAULI_X + sy * PAULI_Y + sz * PAULI_Z)


def _ket_projector(ket) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    return np.outer(ket, ket.conj())


def overlap_matrix(elements: np.ndarray) -> np.ndarray:
    """Pairwise traces Tr[M^(a) M^(a')], returned as a real matrix.

    The imaginary parts vanish for Hermitian elements; they are checked
    against ATOL_ELEMENT before being dropped.
    """
    m = elements.shape[0]
    T = np.einsum("aij,bji->ab", elements, elements)
    assert np.max(np.abs(T.imag)) <= ATOL_ELEMENT
    T = T.real
    assert np.max(np.abs(T - T.T)) <= ATOL_ELEMENT
    return 0.5 * (T + T.T)


def invert_overlap(T: np.ndarray) -> np.ndarray | None:
    """Inverse of a symmetric overlap matrix, or None when singular.

    Singularity is decided by the relative singular-value cutoff 1e-10;
    the three built-in POVMs sit far from that boundary on either side.
    """
    T = np.asarray(T, dtype=float)
    svals = np.linalg.svd(T, compute_uv=False)
    if svals[-1] < 1e-10 * svals[0]:
        return None
    Tinv = np.linalg.solve(T, np.eye(T.shape[0]))
    resid = np.max(np.abs(T @ Tinv - np.eye(T.shape[0])))
    if resid > 1e-10:
        return None
    return Tinv


# Closed forms for the built-in overlap matrices, used as construction-time
# cross-checks against the matrices recomputed from the elements.
def _tetra_overlap_exact() -> np.ndarray:
    T = np.full((4, 4), 1.0 / 12.0)
    np.fill_diagonal(T, 0.25)
    return T


def _pauli6_overlap_exact() -> np.ndarray:
    T = np.full((6, 6), 0.5)
    for i in range(3):
        T[2 * i, 2 * i] = 1.0
        T[2 * i + 1, 2 * i + 1] = 1.0
        T[2 * i, 2 * i + 1] = 0.0
        T[2 * i + 1, 2 * i] = 0.0
    return T / 9.0


def _pauli4_overlap_exact() -> np.ndarray:
    T = np.array(
        [
            [1.0, 0.5, 0.5, 1.0],
            [0.5, 1.0, 0.5, 1.0],
            [0.5, 0.5, 1.0, 1.0],
            [1.0, 1.0, 1.0, 6.0],
        ]
    )
    return T / 9.0


_EXACT_OVERLAPS = {
    "tetra": _tetra_overlap_exact,
    "pauli6": _pauli6_overlap_exact,
    "pauli4": _pauli4_overlap_exact,
}

# Bloch directions of the tetrahedral POVM, outcome order 0..3.
TETRA_DIRECTIONS = np.array(
    [
        [0.0, 0.0, 1.0],
        [2.0 * np.sqrt(2.0) / 3.0, 0.0, -1.0 / 3.0],
        [-np.sqrt(2.0) / 3.0, np.sqrt(2.0 / 3.0), -1.0 / 3.0],
        [-np.sqrt(2.0) / 3.0, -np.sqrt(2.0 / 3.0), -1.0 / 3.0],
    ]
)


def _pauli_eigenkets():
    k0 = np.array([1.0, 0.0])
    k1 = np.array([0.0, 1.0])
    kp = np.array([1.0, 1.0]) / np.sqrt(2.0)
    km = np.array([1.0, -1.0]) / np.sqrt(2.0)
    kr = np.array([1.0, 1.0j]) / np.sqrt(2.0)
    kl = np.array([1.0, -1.0j]) / np.sqrt(2.0)
    return k0, k1, kp, km, kr, kl


def make_povm(povm_id: str) -> SingleQubitPOVM:
    """Construct one of the built-in POVMs by id string.

    Elements are built from their definitions; the resulting overlap
    matrix is cross-checked against the known closed form before the
    object is returned. The overlap inverse is attached when it exists
    (tetra, pauli4) and left as None otherwise (pauli6).
    """
    if povm_id not in POVM_IDS:
        raise ValueError(f"unknown POVM id {povm_id!r}; expected one of {POVM_IDS}")

    if povm_id == "tetra":
        elements = np.stack([_bloch_element(s) for s in TETRA_DIRECTIONS])
    elif povm_id == "pauli6":
        kets = _pauli_eigenkets()
        elements = np.stack([_ket_projector(k) / 3.0 for k in kets])
    else:  # pauli4
        k0, _, kp, _, kr, _ = _pauli_eigenkets()
        m0 = _ket_projector(k0) / 3.0
        m1 = _ket_projector(kp) / 3.0
        m2 = _ket_projector(kr) / 3.0
        m3 = np.eye(2, dtype=complex) - m0 - m1 - m2
        elements = np.stack([m0, m1, m2, m3])

    T = overlap_matrix(elements)
    T_exact = _EXACT_OVERLAPS[povm_id]()
    if np.max(np.abs(T - T_exact)) > ATOL_ELEMENT:
        raise AssertionError(f"constructed overlap for {povm_id} deviates from closed form")

    povm = SingleQubitPOVM(
        id=povm_id,
        m=elements.shape[0],
        elements=elements,
        overlap=T,
        overlap_inverse=invert_overlap(T),
    )
    povm.validate()
    return povm


def born_probability(povm: SingleQubitPOVM, rho: np.ndarray, a) -> float:
    """Tr[(M^(a_1) x ... x M^(a_N)) rho] by sequential single-site contraction.

    The m^N-element product operator is never materialized; each site's
    element is traced into the density matrix in turn, shrinking it by a
    factor 2 per step.
    """
    a = np.asarray(a, dtype=np.int64)
    N = a.shape[0]
    dim = 1 << N
    if rho.shape != (dim, dim):
        raise ValueError(f"rho has shape {rho.shape}, outcome string implies {(dim, dim)}")
    if np.any(a < 0) or np.any(a >= povm.m):
        raise ValueError("outcome symbol out of range")

    R = rho
    for k in range(N):
        half = R.shape[0] // 2
        M = povm.elements[a[k]]
        Rt = R.reshape(2, half, 2, half)
        # Tr over this site: sum_{s,t} M[t,s] R[s,:,t,:]
        R = np.einsum("ts,sitj->ij", M, Rt)
    p = R[0, 0]
    assert abs(p.imag) <= ATOL_PROB, "Born probability has non-negligible imaginary part"
    return float(p.real)


def _check_table_guard(N: int, m: int):
    if N * np.log2(m) > TABLE_GUARD_BITS + 1e-9:
        raise SizeGuardError(f"m^N = {m}^{N} exceeds the 2^{TABLE_GUARD_BITS} table guard")


def table_from_density_matrix(povm: SingleQubitPOVM, rho: np.ndarray) -> ProbabilityTable:
    """Full outcome table by progressive contraction of rho with the elements.

    Cost and memory stay O(max(m,4)^N): each step trades one ket/bra index
    pair (4 states) for one outcome index (m states).
    """
    dim = rho.shape[0]
    N = int(round(np.log2(dim)))
    if 1 << N != dim:
        raise ValueError("rho dimension is not a power of two")
    m = povm.m
    _check_table_guard(N, m)

    # Mten[a, t, s] so that Tr[M rho] = sum M[t, s] rho[s, t]
    Mten = povm.elements
    R = rho.reshape(1, dim, dim)
    for _ in range(N):
        K, dk, _ = R.shape
        half = dk // 2
        Rt = R.reshape(K, 2, half, 2, half)
        R = np.einsum("ats,ksitj->kaij", Mten, Rt).reshape(K * m, half, half)
    probs = R.reshape(m**N).real.copy()

    # Clamp Born-rule roundoff; anything more negative is a real bug.
    neg = probs < 0
    if neg.any():
        if probs.min() < -ATOL_PROB:
            raise AssertionError(f"table entry below -{ATOL_PROB}: {probs.min()}")
        probs[neg] = 0.0
    total = probs.sum()
    if abs(total - 1.0) > ATOL_PROB:
        raise AssertionError(f"table sums to {total}, expected 1")
    return ProbabilityTable(N=N, m=m, probs=probs)


def table_from_ket(povm: SingleQubitPOVM, ket: np.ndarray) -> ProbabilityTable:
    """Full outcome table for a pure state."""
    rho = np.outer(ket, ket.conj())
    return table_from_density_matrix(povm, rho)


def full_probability_table(povm: SingleQubitPOVM, rho: np.ndarray) -> ProbabilityTable:
    """Enumeration wrapper over the Born rule for small N (m^N <= 2^24)."""
    return table_from_density_matrix(povm, rho)


def all_outcome_strings(N: int, m: int) -> np.ndarray:
    """(m^N, N) array of every outcome string, in table index order."""
    _check_table_guard(N, m)
    idx = np.arange(m**N, dtype=np.int64)
    out = np.empty((m**N, N), dtype=np.uint8)
    for k in range(N - 1, -1, -1):
        out[:, k] = idx % m
        idx //= m
    return out
