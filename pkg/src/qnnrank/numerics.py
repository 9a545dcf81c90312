"""Dense Hermitian linear algebra used throughout the package.

Every exponent that appears in a circuit is ``i`` times a Hermitian matrix,
so a single eigendecomposition serves both the exponential and its
directional derivative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-12
DEFAULT_REL_TOL = 1e-8


class NotHermitianError(ValueError):
    pass


class NotPSDError(ValueError):
    pass


class EigenFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class EigDecomposition:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def check_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotHermitianError(f"{name} must be square, got shape {a.shape}")
    scale = max(float(np.max(np.abs(a), initial=0.0)), 1.0)
    dev = float(np.max(np.abs(a - a.conj().T), initial=0.0))
    if dev > tol * scale:
        raise NotHermitianError(f"{name} is not Hermitian: max|A - A^H| = {dev:.3e}")
    return a


def hermitian_eig(a: np.ndarray, tol: float = HERMITIAN_TOL) -> EigDecomposition:
    a = check_hermitian(a, tol)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # LAPACK reports the failed iteration in the message
        raise EigenFailure(f"eigendecomposition did not converge: {exc}") from exc
    return EigDecomposition(w, v)


def unitary_exp(a: np.ndarray) -> np.ndarray:
    """Return ``exp(iA)`` for Hermitian ``A``."""
    eig = hermitian_eig(a)
    v = eig.eigenvectors
    return (v * np.exp(1j * eig.eigenvalues)) @ v.conj().T


def _divided_difference(lam: np.ndarray) -> np.ndarray:
    # (e^{ia} - e^{ib}) / (i(a - b)) written as e^{i(a+b)/2} sinc((a-b)/2):
    # no cancellation near degenerate pairs, and equals e^{ia} on the diagonal.
    a = lam[:, None]
    b = lam[None, :]
    return np.exp(0.5j * (a + b)) * np.sinc((a - b) / (2 * np.pi))


def unitary_exp_directional(
    a: np.ndarray, e: np.ndarray, eig: EigDecomposition | None = None
) -> np.ndarray:
    """Derivative of ``exp(i(A + tE))`` at ``t = 0`` (Daleckii-Krein).

    ``eig`` may carry a precomputed decomposition of ``A`` when many
    directions are differentiated at the same point.
    """
    a = np.asarray(a)
    e = check_hermitian(e, name="direction")
    if a.shape != e.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {e.shape}")
    if eig is None:
        eig = hermitian_eig(a)
    v = eig.eigenvectors
    e_t = v.conj().T @ e @ v
    return v @ (1j * e_t * _divided_difference(eig.eigenvalues)) @ v.conj().T


def unitary_exp_directional_many(a: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Vectorised :func:`unitary_exp_directional` over a stack ``(k, d, d)``."""
    eig = hermitian_eig(a)
    v = eig.eigenvectors
    vh = v.conj().T
    phi = _divided_difference(eig.eigenvalues)
    e_t = vh @ directions @ v
    return v @ (1j * e_t * phi) @ vh


def psd_rank(m: np.ndarray, rel_tol: float = DEFAULT_REL_TOL) -> int:
    """Count eigenvalues above ``rel_tol * lambda_max`` of a PSD matrix."""
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    m = np.asarray(m)
    if m.size == 0:
        return 0
    w = hermitian_eig(m, tol=1e-10).eigenvalues
    return rank_from_spectrum(w, rel_tol)


def rank_from_spectrum(w: np.ndarray, rel_tol: float = DEFAULT_REL_TOL) -> int:
    if w.size == 0:
        return 0
    lam_max = float(w[-1])
    if lam_max <= 0:
        return 0
    if w[0] < -1e-8 * lam_max:
        raise NotPSDError(f"matrix is not PSD: min eigenvalue {w[0]:.3e}, max {lam_max:.3e}")
    return int(np.count_nonzero(w > rel_tol * lam_max))
