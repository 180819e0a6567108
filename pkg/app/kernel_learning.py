"""
Learning the spectral coefficients mu by maximizing Tr(S_b) / Tr(S_w).

Both traces are diagonal quadratic forms in mu over the base kernels:

    Tr(S_b) = sum_r mu_r^2 f_r        Tr(S_w) = sum_r mu_r^2 g_r

so the criterion Q(mu) = mu^T (D_b - alpha D_w) mu under theta^T mu = beta has a
closed-form stationary point. That point is a saddle whenever D_b - alpha D_w is
indefinite; the maximizer of Q over the constraint set, up to scale, is the
vertex beta * e_r on the largest f_r - alpha g_r. Dinkelbach updates of alpha
take whichever of the two candidates has the higher ratio.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateStationaryPoint,
    DegenerateWithinScatter,
    IndexOutOfRange,
    InsufficientClasses,
    LengthMismatch,
    UsageError,
)
from .logging import StructuredLogger, log_performance
from .spectral import SpectralModel

logger = logging.getLogger(__name__)
events = StructuredLogger(__name__)

CLAMP_REL = 1e-12
DEGENERATE_REL = 1e-12
VERTEX_WITHIN_REL = 1e-10


class LearnMode(str, Enum):
    DINKELBACH = "dinkelbach"
    FIXED_ALPHA = "fixed_alpha"


@dataclass(frozen=True)
class LearnOptions:
    mode: LearnMode = LearnMode.DINKELBACH
    alpha: float = 1.0
    tol: float = 1e-8
    max_iter: int = 100

    def __post_init__(self):
        try:
            object.__setattr__(self, "mode", LearnMode(self.mode))
        except ValueError as e:
            raise UsageError(f"Unknown learning mode {self.mode!r}",
                             hint="Use dinkelbach or fixed_alpha") from e
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise UsageError(f"alpha must be positive, got {self.alpha}")
        if not (math.isfinite(self.tol) and self.tol > 0):
            raise UsageError(f"tol must be positive, got {self.tol}")
        if isinstance(self.max_iter, bool) or int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise UsageError(f"max_iter must be an integer >= 1, got {self.max_iter}")
        object.__setattr__(self, "max_iter", int(self.max_iter))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LearnOptions":
        unknown = set(data) - {"mode", "alpha", "tol", "max_iter"}
        if unknown:
            raise UsageError(f"Unknown learning option(s): {sorted(unknown)}")
        defaults = cls()
        return cls(
            mode=data.get("mode", defaults.mode),
            alpha=float(data.get("alpha", defaults.alpha)),
            tol=float(data.get("tol", defaults.tol)),
            max_iter=data.get("max_iter", defaults.max_iter),
        )

    def to_dict(self) -> Dict[str, Any]:
        if self.mode is LearnMode.FIXED_ALPHA:
            return {"mode": self.mode.value, "alpha": self.alpha}
        return {"mode": self.mode.value, "tol": self.tol, "max_iter": self.max_iter}


@dataclass(frozen=True)
class ScatterSummaries:
    """Per-base-kernel between (f) and within (g) class trace contributions."""

    f: np.ndarray
    g: np.ndarray

    @property
    def p(self) -> int:
        return int(self.f.size)

    @property
    def D_b(self) -> np.ndarray:
        return np.diag(self.f)

    @property
    def D_w(self) -> np.ndarray:
        return np.diag(self.g)


@dataclass(frozen=True)
class LearnedCoefficients:
    mu: np.ndarray
    alpha: float
    beta: float
    iterations: int
    ratio_trace: float
    mode: LearnMode = LearnMode.DINKELBACH
    stop_reason: str = "converged"
    history: Tuple[float, ...] = field(default=())

    def summary(self) -> Dict[str, float]:
        abs_mu = np.abs(self.mu)
        return {
            "p": int(self.mu.size),
            "beta": float(self.beta),
            "ratio_trace": float(self.ratio_trace),
            "min_abs": float(abs_mu.min()),
            "max_abs": float(abs_mu.max()),
            "l2_norm": float(np.linalg.norm(self.mu)),
        }


def class_pair_weight(labels: Sequence[str], j: int, k: int, i: str) -> float:
    """1/n_i when rows j and k both belong to class i, else 0."""
    n = len(labels)
    for name, idx in (("j", j), ("k", k)):
        if not 0 <= idx < n:
            raise IndexOutOfRange(f"Index {name}={idx} outside [0, {n})")
    if labels[j] != i or labels[k] != i:
        return 0.0
    n_i = sum(1 for label in labels if label == i)
    return 1.0 / n_i


def _class_codes(labels: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
    _, codes, counts = np.unique(np.asarray(labels, dtype=object).astype(str),
                                 return_inverse=True, return_counts=True)
    return codes.ravel(), counts


@log_performance()
def scatter_summaries(model: SpectralModel, labels: Sequence[str], n: int) -> ScatterSummaries:
    """
    f and g from class-block partial sums of the training rows of each eigenvector.

    With S_ir the sum of v_r over class i and T_r the sum over all training rows:
        f_r = (sum_i S_ir^2 / n_i - T_r^2 / n) / n
        g_r = (sum_j v_r[j]^2 - sum_i S_ir^2 / n_i) / n
    """
    if len(labels) != n:
        raise LengthMismatch(f"{len(labels)} labels for {n} training rows")
    if not 0 < n <= model.N:
        raise IndexOutOfRange(f"Training count {n} outside (0, {model.N}]")
    codes, counts = _class_codes(labels)
    if counts.size < 2:
        raise InsufficientClasses(f"Scatter summaries need at least 2 classes, got {counts.size}")

    V = model.eigenvectors[:n]
    H = np.zeros((n, counts.size))
    H[np.arange(n), codes] = 1.0
    S = H.T @ V
    T = V.sum(axis=0)
    grouped = (S ** 2 / counts[:, None]).sum(axis=0)
    f = (grouped - T ** 2 / n) / n
    g = ((V ** 2).sum(axis=0) - grouped) / n
    return ScatterSummaries(f=f, g=g)


def criterion_q(summaries: ScatterSummaries, mu: np.ndarray, alpha: float) -> float:
    """Q(mu) = mu^T (D_b - alpha D_w) mu."""
    mu = np.asarray(mu, dtype=float)
    return float(np.sum(mu ** 2 * (summaries.f - alpha * summaries.g)))


def trace_ratio(summaries: ScatterSummaries, mu: np.ndarray) -> float:
    """Tr(S_b) / Tr(S_w) at mu."""
    mu2 = np.asarray(mu, dtype=float) ** 2
    between = float(np.sum(mu2 * summaries.f))
    within = float(np.sum(mu2 * summaries.g))
    if not within > 1e-14 * max(abs(between) + abs(within), np.finfo(float).tiny):
        raise DegenerateWithinScatter(
            f"Within-class scatter trace is not positive ({within:.3e})",
            hint="Training samples of each client must not coincide",
        )
    return between / within


def _ratio_or_none(summaries: ScatterSummaries, mu: np.ndarray) -> Optional[float]:
    try:
        return trace_ratio(summaries, mu)
    except DegenerateWithinScatter:
        return None


def total_scatter_trace(K_block: np.ndarray) -> float:
    """(1/n) tr(K) - (1/n^2) 1^T K 1 over a training block of K_mu."""
    K_block = np.asarray(K_block, dtype=float)
    n = K_block.shape[0]
    return float(np.trace(K_block) / n - K_block.sum() / n ** 2)


def solve_mu(summaries: ScatterSummaries, eigenvalues: np.ndarray, alpha: float) -> np.ndarray:
    """
    Stationary point of Q under theta^T mu = beta:

        mu = beta * M^-1 theta / (theta^T M^-1 theta),  M = D_b - alpha D_w

    Entries of M below 1e-12 * max|M| in magnitude are clamped to that floor with
    their sign kept. The denominator counts as zero when it is within 1e-12 of
    the absolute sum of M^-1 theta.
    """
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if eigenvalues.size != summaries.p:
        raise LengthMismatch(f"{eigenvalues.size} eigenvalues for {summaries.p} base kernels")
    beta = float(np.sqrt(eigenvalues).sum())
    if summaries.p == 1:
        return np.array([beta])

    m = summaries.f - alpha * summaries.g
    peak = float(np.abs(m).max())
    if not peak > 0:
        raise DegenerateStationaryPoint("D_b - alpha D_w vanishes", alpha=alpha)
    floor = CLAMP_REL * peak
    small = np.abs(m) < floor
    m = np.where(small, np.where(m < 0, -floor, floor), m)

    w = 1.0 / m
    denom = float(w.sum())
    if abs(denom) <= DEGENERATE_REL * float(np.abs(w).sum()):
        raise DegenerateStationaryPoint(
            f"theta^T M^-1 theta vanishes at alpha={alpha:.6g}", alpha=alpha,
        )
    return beta * w / denom


def subproblem_maximizer(summaries: ScatterSummaries,
                         eigenvalues: np.ndarray,
                         alpha: float) -> Optional[np.ndarray]:
    """
    beta * e_r for r = argmax (f_r - alpha g_r), the maximizer of Q over mu
    with theta^T mu = beta once mu is normalized to unit length.

    Only base kernels whose within-class contribution exceeds 1e-10 of the
    largest |f_r| + |g_r| are eligible. Returns None when none is.
    """
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if eigenvalues.size != summaries.p:
        raise LengthMismatch(f"{eigenvalues.size} eigenvalues for {summaries.p} base kernels")
    beta = float(np.sqrt(eigenvalues).sum())
    if summaries.p == 1:
        return np.array([beta])

    energy = float(np.max(np.abs(summaries.f) + np.abs(summaries.g)))
    eligible = summaries.g > VERTEX_WITHIN_REL * energy
    if not np.any(eligible):
        return None
    gain = np.where(eligible, summaries.f - alpha * summaries.g, -np.inf)
    mu = np.zeros(summaries.p)
    mu[int(np.argmax(gain))] = beta
    return mu


@log_performance()
def learn_kernel(model: SpectralModel,
                 labels: Sequence[str],
                 n: int,
                 options: Optional[LearnOptions] = None) -> LearnedCoefficients:
    """
    Learn mu in fixed-alpha mode (one solve) or by Dinkelbach iteration.

    Dinkelbach starts from alpha_0 = ratio at mu_0 = sqrt(lambda). Each step
    scores the stationary point and the subproblem maximizer at the current
    alpha and moves to the better one. The best-ratio iterate seen is returned,
    mu_0 included.

    Raises:
        DegenerateStationaryPoint: theta^T M^-1 theta vanishes at any step
    """
    options = options or LearnOptions()
    summaries = scatter_summaries(model, labels, n)
    lam = model.eigenvalues
    beta = model.beta

    if options.mode is LearnMode.FIXED_ALPHA:
        mu = solve_mu(summaries, lam, options.alpha)
        ratio = trace_ratio(summaries, mu)
        result = LearnedCoefficients(mu=mu, alpha=options.alpha, beta=beta, iterations=1,
                                     ratio_trace=ratio, mode=options.mode,
                                     stop_reason="fixed_alpha", history=(ratio,))
        events.log_learning(options.mode.value, options.alpha, 1, ratio, result.stop_reason)
        return result

    mu0 = model.baseline_mu()
    alpha = trace_ratio(summaries, mu0)
    history = [alpha]
    best_mu, best_ratio = mu0, alpha
    stop_reason = "max_iterations"
    iterations = 0

    for _ in range(options.max_iter):
        candidates = [solve_mu(summaries, lam, alpha)]
        vertex = subproblem_maximizer(summaries, lam, alpha)
        if vertex is not None:
            candidates.append(vertex)
        scored = [(_ratio_or_none(summaries, c), c) for c in candidates]
        scored = [(r, c) for r, c in scored if r is not None]
        if not scored:
            raise DegenerateWithinScatter(
                f"Every candidate at alpha={alpha:.6g} has a vanishing within-class scatter",
                hint="Training samples of each client must not coincide",
            )
        new_alpha, mu = max(scored, key=lambda item: item[0])
        iterations += 1
        logger.debug("Dinkelbach step %d: alpha=%.6g -> %.6g", iterations, alpha, new_alpha)
        history.append(new_alpha)
        if new_alpha > best_ratio:
            best_mu, best_ratio = mu, new_alpha
        converged = abs(new_alpha - alpha) <= options.tol
        alpha = new_alpha
        if converged:
            stop_reason = "converged"
            break

    events.log_learning(options.mode.value, alpha, iterations, best_ratio, stop_reason)
    return LearnedCoefficients(mu=np.asarray(best_mu, dtype=float), alpha=alpha, beta=beta,
                               iterations=iterations, ratio_trace=best_ratio, mode=options.mode,
                               stop_reason=stop_reason, history=tuple(history))
