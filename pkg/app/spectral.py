"""
Spectral decomposition of the base Gram matrix and the reweighted family

    K_mu = sum_r mu_r^2 v_r v_r^T

over the retained positive eigenpairs (lambda_r, v_r).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.linalg import eigh

from .errors import IndexOutOfRange, LengthMismatch, NoPositiveSpectrum, NotSymmetric, UsageError
from .logging import log_performance

logger = logging.getLogger(__name__)

DEFAULT_REL_TOL = 1e-10


@dataclass(frozen=True)
class SpectralModel:
    """Positive spectrum of a Gram matrix, optionally with learned coefficients mu."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mu: Optional[np.ndarray] = None

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=float)
        vecs = np.array(self.eigenvectors, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise NoPositiveSpectrum("Spectral model needs at least one eigenvalue")
        if vecs.ndim != 2 or vecs.shape[1] != lam.size:
            raise LengthMismatch(f"Eigenvector block {vecs.shape} does not match {lam.size} eigenvalues")
        if vecs.shape[1] > vecs.shape[0]:
            raise LengthMismatch(f"Rank {vecs.shape[1]} exceeds sample count {vecs.shape[0]}")
        if np.any(lam <= 0):
            raise NoPositiveSpectrum("Eigenvalues must be strictly positive")
        if np.any(np.diff(lam) > 0):
            raise UsageError("Eigenvalues must be sorted in non-increasing order")
        lam.setflags(write=False)
        vecs.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenvectors", vecs)
        if self.mu is not None:
            object.__setattr__(self, "mu", _check_mu(self, self.mu))

    @property
    def p(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def N(self) -> int:
        return int(self.eigenvectors.shape[0])

    @property
    def beta(self) -> float:
        """Sum of sqrt(lambda_r): the value of theta^T mu at the baseline coefficients."""
        return float(np.sqrt(self.eigenvalues).sum())

    def baseline_mu(self) -> np.ndarray:
        """mu_r = sqrt(lambda_r), which reproduces the retained spectrum of K."""
        return np.sqrt(self.eigenvalues)

    def with_mu(self, mu: np.ndarray) -> "SpectralModel":
        return replace(self, mu=np.asarray(mu, dtype=float))

    def save(self, path: Union[str, Path]) -> Path:
        """Write eigenvalues, eigenvectors and mu (if any) to an .npz artifact."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {"eigenvalues": self.eigenvalues, "eigenvectors": self.eigenvectors}
        if self.mu is not None:
            arrays["mu"] = self.mu
        with open(path, "wb") as f:
            np.savez(f, **arrays)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SpectralModel":
        with np.load(Path(path)) as data:
            mu = data["mu"] if "mu" in data.files else None
            return cls(eigenvalues=data["eigenvalues"], eigenvectors=data["eigenvectors"], mu=mu)


def _check_mu(model: SpectralModel, mu) -> np.ndarray:
    mu = np.array(mu, dtype=float).ravel()
    if mu.size != model.p:
        raise LengthMismatch(f"mu has length {mu.size}, spectral model has rank {model.p}")
    mu.setflags(write=False)
    return mu


def _resolve_mu(model: SpectralModel, mu: Optional[np.ndarray]) -> np.ndarray:
    if mu is not None:
        return _check_mu(model, mu)
    if model.mu is None:
        raise UsageError("No coefficients given and the spectral model carries none")
    return model.mu


@log_performance()
def decompose(K: np.ndarray, rel_tol: float = DEFAULT_REL_TOL) -> SpectralModel:
    """
    Keep the eigenpairs of K with lambda_r > rel_tol * lambda_max, sorted descending.

    The largest-magnitude entry of each eigenvector is made non-negative.
    """
    if not 0 < rel_tol < 1:
        raise UsageError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] == 0:
        raise NotSymmetric(f"Expected a non-empty square matrix, got shape {K.shape}")
    if not np.all(np.isfinite(K)):
        raise NotSymmetric("Matrix contains non-finite entries")
    scale = max(1.0, float(np.abs(K).max()))
    asym = float(np.abs(K - K.T).max())
    if asym > 1e-10 * scale:
        raise NotSymmetric(f"Matrix is not symmetric (max |K - K^T| = {asym:.3e})")

    w, V = eigh((K + K.T) / 2.0)
    lam_max = float(w.max())
    if lam_max <= 0:
        raise NoPositiveSpectrum("Gram matrix has no positive eigenvalue")

    keep = np.flatnonzero(w > rel_tol * lam_max)
    order = keep[np.argsort(-w[keep], kind="stable")]
    lam = w[order]
    vecs = V[:, order]

    pivots = np.argmax(np.abs(vecs), axis=0)
    signs = np.where(vecs[pivots, np.arange(vecs.shape[1])] < 0, -1.0, 1.0)
    vecs = vecs * signs

    logger.debug("Decomposed %dx%d matrix: kept %d of %d eigenpairs",
                 K.shape[0], K.shape[1], lam.size, w.size)
    return SpectralModel(eigenvalues=lam, eigenvectors=vecs)


def assemble_k_mu(model: SpectralModel, mu: Optional[np.ndarray] = None) -> np.ndarray:
    mu = _resolve_mu(model, mu)
    V = model.eigenvectors
    K = (V * mu ** 2) @ V.T
    return (K + K.T) / 2.0


def entry(model: SpectralModel, mu: Optional[np.ndarray], i: int, j: int) -> float:
    """(K_mu)_ij = b_i^T K_mu b_j, read from the factorization without assembling K_mu."""
    for name, idx in (("i", i), ("j", j)):
        if not 0 <= idx < model.N:
            raise IndexOutOfRange(f"Index {name}={idx} outside [0, {model.N})")
    mu = _resolve_mu(model, mu)
    V = model.eigenvectors
    return float(np.dot(mu ** 2 * V[i], V[j]))


def training_block(model: SpectralModel, mu: Optional[np.ndarray], n: int) -> np.ndarray:
    """n x n block of K_mu over the leading (training) rows."""
    if not 0 < n <= model.N:
        raise IndexOutOfRange(f"Training count {n} outside (0, {model.N}]")
    mu = _resolve_mu(model, mu)
    Vt = model.eigenvectors[:n]
    K_t = (Vt * mu ** 2) @ Vt.T
    return (K_t + K_t.T) / 2.0


def cross_block(model: SpectralModel, mu: Optional[np.ndarray], n: int) -> np.ndarray:
    """n x N block of K_mu: kernel values between training rows and every sample."""
    if not 0 < n <= model.N:
        raise IndexOutOfRange(f"Training count {n} outside (0, {model.N}]")
    mu = _resolve_mu(model, mu)
    V = model.eigenvectors
    return (V[:n] * mu ** 2) @ V.T
