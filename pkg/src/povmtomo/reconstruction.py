"""Dense density-matrix reconstruction from outcome distributions.

The inversion contracts the distribution with the factorized inverse
overlap matrix and the POVM elements:

    rho = sum_a P(a) (x)_k  sum_a' Tinv[a_k, a'] M^(a')

accumulated string by string over the enumerated table. Reconstructions
from finite statistics need not be positive semi-definite; no projection
or symmetrization is applied to the returned matrix. Physicality is
quantified in an attached diagnostics record instead.
"""

from dataclasses import dataclass

import numpy as np

from .dense import quantum_fidelity_with_clamp
from .errors import OverlapNotInvertibleError, SizeGuardError
from .povm import ProbabilityTable, SingleQubitPOVM

RECONSTRUCT_MAX_N = 8


@dataclass(frozen=True)
class ReconstructionDiagnostics:
    trace_deviation: float
    hermiticity_deviation: float
    min_eigenvalue: float
    negativity: float


def rotated_elements(povm: SingleQubitPOVM) -> np.ndarray:
    """N(a) = sum_a' Tinv[a, a'] M^(a'): the single-site inversion factors."""
    if povm.overlap_inverse is None:
        raise OverlapNotInvertibleError(
            f"POVM {povm.id!r} has a singular overlap matrix; linear inversion "
            "and direct observable estimation are unavailable"
        )
    return np.einsum("ab,bst->ast", povm.overlap_inverse, povm.elements)


def _table_from_source(source, povm: SingleQubitPOVM) -> ProbabilityTable:
    if isinstance(source, ProbabilityTable):
        return source
    # model object: enumerate its exact distribution
    from .estimation import model_table

    return model_table(source)


def reconstruct_density_matrix(source, povm: SingleQubitPOVM):
    """(rho, diagnostics) from a ProbabilityTable or a model with exact densities."""
    table = _table_from_source(source, povm)
    if table.m != povm.m:
        raise ValueError("table alphabet does not match POVM")
    N = table.N
    if N > RECONSTRUCT_MAX_N:
        raise SizeGuardError(f"dense reconstruction capped at N = {RECONSTRUCT_MAX_N}")
    Nrot = rotated_elements(povm)
    m = povm.m

    cur = table.probs.astype(complex).reshape(1, 1, m**N)
    for _ in range(N):
        d = cur.shape[0]
        rest = cur.shape[2] // m
        t = cur.reshape(d, d, m, rest)
        cur = np.einsum("ast,xyar->xsytr", Nrot, t).reshape(2 * d, 2 * d, rest)
    rho = cur[:, :, 0]

    herm_dev = float(np.max(np.abs(rho - rho.conj().T)))
    trace_dev = float(abs(np.trace(rho).real - 1.0) + abs(np.trace(rho).imag))
    eigs = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    diag = ReconstructionDiagnostics(
        trace_deviation=trace_dev,
        hermiticity_deviation=herm_dev,
        min_eigenvalue=float(eigs.min()),
        negativity=float(-eigs[eigs < 0].sum()),
    )
    return rho, diag


def reconstruction_fidelity(source, rho_true: np.ndarray, povm: SingleQubitPOVM) -> float:
    """Quantum fidelity between the true state and the reconstruction.

    Negative reconstruction eigenvalues are clamped inside the fidelity
    computation only; the clamp mass is available from
    `reconstruction_fidelity_with_clamp`.
    """
    F, _ = reconstruction_fidelity_with_clamp(source, rho_true, povm)
    return F


def reconstruction_fidelity_with_clamp(source, rho_true, povm: SingleQubitPOVM):
    rho_rec, _ = reconstruct_density_matrix(source, povm)
    rho_rec = 0.5 * (rho_rec + rho_rec.conj().T)
    return quantum_fidelity_with_clamp(rho_true, rho_rec)
