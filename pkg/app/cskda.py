"""
Client-specific kernel discriminant analysis on a learned kernel matrix.

Training rows are reduced to the m_b-dimensional span of the centred class
means in feature space, using only kernel values:

    C = (A_nc - I_nc / n) B,   P_b^T P_b = C^T K_t C / n
    W = C E_m U_b^(-1/2) / sqrt(n),   y(z) = W^T (r(z) - r_bar)

where r(z) holds the kernel values between z and the n training rows and
r_bar = K_t 1 / n. Each client then gets a 1-D Fisher direction
a_i ~ S_t^-1 mu_i in the reduced space.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .dataset import VerificationDataset
from .errors import (
    DegenerateBetweenScatter,
    DimensionMismatch,
    IndexOutOfRange,
    InsufficientClasses,
    SingularPopulationScatter,
    UnknownClient,
    UsageError,
)
from .logging import StructuredLogger, log_performance
from .spectral import SpectralModel, cross_block, training_block

logger = logging.getLogger(__name__)
events = StructuredLogger(__name__)


class ClassificationMode(str, Enum):
    """Client-model (OnC) or impostor-model (OnI) decision rule."""

    CLIENT_MODEL = "OnC"
    IMPOSTOR_MODEL = "OnI"

    @classmethod
    def parse(cls, value: Union[str, "ClassificationMode"]) -> "ClassificationMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"onc": cls.CLIENT_MODEL, "client_model": cls.CLIENT_MODEL, "client": cls.CLIENT_MODEL,
                   "oni": cls.IMPOSTOR_MODEL, "impostor_model": cls.IMPOSTOR_MODEL,
                   "impostor": cls.IMPOSTOR_MODEL}
        if key not in aliases:
            raise UsageError(f"Unknown classification mode {value!r}", hint="Use OnC or OnI")
        return aliases[key]


class Decision(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass(frozen=True)
class FitOptions:
    rank_rel_tol: float = 1e-10
    ridge_condition: float = 1e12
    ridge_scale: float = 1e-8
    normalize_directions: bool = True


@dataclass(frozen=True)
class CskdaModel:
    """
    Fitted client-specific discriminant.

    Attributes:
        clients: client identities, row order of every per-client array
        counts: training rows per client (n_i)
        projection: W, n x m_b map from centred kernel columns to the reduced space
        E_m, U_b: retained eigenvectors / eigenvalues of P_b^T P_b
        B: diag(sqrt(n_i))
        r_bar: mean training kernel column
        client_means, impostor_means: mu_i and mu_Omega per client (c x m_b)
        fisher_directions: a_i per client (c x m_b)
        st_inverse: inverse (or ridge / pseudo-inverse) of S_t
        projected_client_means, projected_impostor_means: 1-D means per client
    """

    clients: Tuple[str, ...]
    counts: np.ndarray
    projection: np.ndarray
    E_m: np.ndarray
    U_b: np.ndarray
    B: np.ndarray
    r_bar: np.ndarray
    client_means: np.ndarray
    impostor_means: np.ndarray
    fisher_directions: np.ndarray
    st_inverse: np.ndarray
    projected_client_means: np.ndarray
    projected_impostor_means: np.ndarray
    degenerate_clients: Tuple[str, ...] = field(default=())

    @property
    def m_b(self) -> int:
        return int(self.U_b.size)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def client_weights(self) -> np.ndarray:
        """n x c matrix whose column i maps a centred kernel column to z~ for client i."""
        return self.projection @ self.fisher_directions.T

    def client_index(self, client: str) -> int:
        try:
            return self.clients.index(client)
        except ValueError:
            raise UnknownClient(f"Unknown client {client!r}", client=client) from None

    def save(self, path: Union[str, Path]) -> Tuple[Path, Path]:
        """Write a JSON header and an .npz with the numeric fields next to it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        npz_path = path.with_suffix(".npz")
        arrays = {name: getattr(self, name) for name in (
            "counts", "projection", "E_m", "U_b", "B", "r_bar", "client_means",
            "impostor_means", "fisher_directions", "st_inverse",
            "projected_client_means", "projected_impostor_means")}
        with open(npz_path, "wb") as f:
            np.savez(f, **arrays)
        header = {
            "clients": list(self.clients),
            "m_b": self.m_b,
            "n": self.n,
            "degenerate_clients": list(self.degenerate_clients),
            "arrays": npz_path.name,
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(header, f, indent=2)
        return path, npz_path


@dataclass(frozen=True)
class ModelPack:
    """Learned spectral model (mu set) plus the fitted discriminant."""

    spectral: SpectralModel
    cskda: CskdaModel

    def __post_init__(self):
        if self.spectral.mu is None:
            raise UsageError("ModelPack needs a spectral model with coefficients")


@dataclass(frozen=True)
class ClaimScore:
    claimed_client: str
    d_c: float
    d_i: float
    projected: float


def _class_structure(labels: Sequence[str], clients: Sequence[str]):
    labels = np.asarray(labels, dtype=object)
    n = labels.size
    A = np.zeros((n, len(clients)))
    counts = np.zeros(len(clients))
    for i, client in enumerate(clients):
        members = labels == client
        counts[i] = members.sum()
        if counts[i] == 0:
            raise InsufficientClasses(f"Client {client!r} has no training rows")
        A[members, i] = 1.0 / counts[i]
    if int(counts.sum()) != n:
        raise DimensionMismatch("Training labels contain identities outside the client list")
    I_nc = np.ones((n, len(clients)))
    B = np.diag(np.sqrt(counts))
    return A, I_nc, B, counts


def between_scatter_gram(K_t: np.ndarray,
                         labels: Sequence[str],
                         clients: Optional[Sequence[str]] = None) -> np.ndarray:
    """
    c x c matrix P_b^T P_b from the training block of K_mu:

        B [A^T K A - A^T K I / n - I^T K A / n + I^T K I / n^2] B / n
    """
    K_t = np.asarray(K_t, dtype=float)
    n = len(labels)
    if K_t.shape != (n, n):
        raise DimensionMismatch(f"Training block {K_t.shape} does not match {n} labels")
    if clients is None:
        clients = list(dict.fromkeys(labels))
    A, I_nc, B, _ = _class_structure(labels, clients)
    inner = (A.T @ K_t @ A
             - A.T @ K_t @ I_nc / n
             - I_nc.T @ K_t @ A / n
             + I_nc.T @ K_t @ I_nc / n ** 2)
    G = B @ inner @ B / n
    return (G + G.T) / 2.0


def _invert_population_scatter(S_t: np.ndarray, options: FitOptions) -> np.ndarray:
    m_b = S_t.shape[0]
    trace = float(np.trace(S_t))
    if not (np.isfinite(trace) and trace > 0):
        raise SingularPopulationScatter(f"Population scatter has trace {trace:.3e}")
    inverse = None
    if np.linalg.cond(S_t) <= options.ridge_condition:
        try:
            inverse = linalg.inv(S_t)
        except linalg.LinAlgError:
            inverse = None
    if inverse is None or not np.all(np.isfinite(inverse)):
        eps = options.ridge_scale * trace / m_b
        logger.warning("Population scatter ill-conditioned; adding ridge %.3e", eps)
        try:
            inverse = linalg.inv(S_t + eps * np.eye(m_b))
        except linalg.LinAlgError:
            inverse = linalg.pinv(S_t)
    if not np.all(np.isfinite(inverse)):
        inverse = linalg.pinv(S_t)
    if not np.all(np.isfinite(inverse)):
        raise SingularPopulationScatter("Population scatter could not be inverted")
    return inverse


@log_performance()
def fit(model: SpectralModel,
        mu: Optional[np.ndarray],
        dataset: VerificationDataset,
        options: Optional[FitOptions] = None) -> CskdaModel:
    """
    Fit the discriminant on the training block (rows 0..n-1) of K_mu.

    Raises:
        InsufficientClasses: fewer than two clients
        DegenerateBetweenScatter: P_b^T P_b has no positive eigenvalue
        SingularPopulationScatter: S_t cannot be inverted even with a ridge
    """
    options = options or FitOptions()
    clients = tuple(dataset.clients)
    if len(clients) < 2:
        raise InsufficientClasses(f"Need at least 2 clients, got {len(clients)}")
    n = dataset.n
    labels = dataset.train_labels
    if model.N != dataset.N:
        raise DimensionMismatch(f"Spectral model covers {model.N} samples, dataset has {dataset.N}")
    mu = model.mu if mu is None else mu

    K_t = training_block(model, mu, n)
    A, I_nc, B, counts = _class_structure(labels, clients)
    G = between_scatter_gram(K_t, labels, clients)

    evals, evecs = linalg.eigh(G)
    order = np.argsort(-evals, kind="stable")
    evals, evecs = evals[order], evecs[:, order]
    top = float(evals[0])
    total = max(float(np.trace(K_t)) / n, np.finfo(float).tiny)
    if not top > options.rank_rel_tol * total:
        raise DegenerateBetweenScatter("Between-class scatter has no positive eigenvalue",
                                       hint="Client means coincide in feature space")
    keep = int(np.count_nonzero(evals > options.rank_rel_tol * top))
    m_b = max(1, min(keep, len(clients) - 1, n))
    E_m, U_b = evecs[:, :m_b], evals[:m_b]

    C = (A - I_nc / n) @ B
    W = C @ E_m / np.sqrt(U_b) / np.sqrt(n)

    r_bar = K_t.mean(axis=1)
    Y = (W.T @ (K_t - r_bar[:, None])).T

    client_means = np.vstack([Y[np.asarray(labels == c)].mean(axis=0) for c in clients])
    ratios = counts / (n - counts)
    impostor_means = -(ratios[:, None] * client_means)

    S_t = Y.T @ Y / n
    st_inverse = _invert_population_scatter(S_t, options)

    V = client_means @ st_inverse.T
    norms = np.linalg.norm(V, axis=1)
    tiny = np.finfo(float).eps * max(1.0, float(norms.max()))
    directions = np.zeros_like(V)
    for i in range(len(clients)):
        if norms[i] > tiny:
            directions[i] = V[i] / norms[i] if options.normalize_directions else V[i]

    projected_client = np.einsum("ij,ij->i", directions, client_means)
    projected_impostor = -(ratios * projected_client)
    scale = max(float(np.abs(projected_client).max()), np.finfo(float).tiny)
    degenerate = tuple(
        c for c, pc, pi in zip(clients, projected_client, projected_impostor)
        if abs(pc - pi) <= 1e-12 * scale
    )
    result = CskdaModel(
        clients=clients,
        counts=counts,
        projection=W,
        E_m=E_m,
        U_b=U_b,
        B=B,
        r_bar=r_bar,
        client_means=client_means,
        impostor_means=impostor_means,
        fisher_directions=directions,
        st_inverse=st_inverse,
        projected_client_means=projected_client,
        projected_impostor_means=projected_impostor,
        degenerate_clients=degenerate,
    )
    events.log_fit(m_b, len(clients), degenerate)
    return result


def _kernel_column(pack: ModelPack, sample_index: int) -> np.ndarray:
    spectral = pack.spectral
    if not 0 <= sample_index < spectral.N:
        raise IndexOutOfRange(f"Sample index {sample_index} outside [0, {spectral.N})")
    n = pack.cskda.n
    V = spectral.eigenvectors
    return (V[:n] * spectral.mu ** 2) @ V[sample_index]


def project(pack: ModelPack, sample_index: int, client: str) -> float:
    """z~ = a_i^T W^T (r(z) - r_bar) for one sample and one claimed client."""
    i = pack.cskda.client_index(client)
    r = _kernel_column(pack, sample_index)
    w_i = pack.cskda.projection @ pack.cskda.fisher_directions[i]
    return float(w_i @ (r - pack.cskda.r_bar))


def project_all(pack: ModelPack) -> np.ndarray:
    """c x N matrix of projections of every sample onto every client direction."""
    R = cross_block(pack.spectral, pack.spectral.mu, pack.cskda.n)
    return pack.cskda.client_weights.T @ (R - pack.cskda.r_bar[:, None])


def score_claim(pack: ModelPack, sample_index: int, claimed: str) -> ClaimScore:
    z = project(pack, sample_index, claimed)
    i = pack.cskda.client_index(claimed)
    return ClaimScore(
        claimed_client=claimed,
        d_c=abs(z - float(pack.cskda.projected_client_means[i])),
        d_i=abs(z - float(pack.cskda.projected_impostor_means[i])),
        projected=z,
    )


def decide(score: ClaimScore,
           mode: Union[str, ClassificationMode],
           threshold: float) -> Decision:
    """Client model accepts iff d_c <= t; impostor model accepts iff d_i > t."""
    mode = ClassificationMode.parse(mode)
    if not threshold >= 0:
        raise UsageError(f"Threshold must be non-negative, got {threshold}")
    if mode is ClassificationMode.CLIENT_MODEL:
        accepted = score.d_c <= threshold
    else:
        accepted = score.d_i > threshold
    return Decision.ACCEPT if accepted else Decision.REJECT
