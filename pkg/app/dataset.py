"""
Verification datasets: ingestion, histogram equalization and synthetic protocols.

A dataset holds every sample of the transductive set (train, evaluation and
test rows together). Rows are stored training-first; ``order`` records the
original file row of each stored row so files can be written back unchanged.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import (
    DatasetFileNotFound,
    DatasetFormatError,
    DimensionMismatch,
    InsufficientTraining,
    InvalidGenerationParameters,
    LengthMismatch,
    MissingRole,
    PixelRangeError,
    ProtocolError,
    UnknownIdentity,
)
from .schemas.report_v1 import validate_protocol

logger = logging.getLogger(__name__)

TRAIN = "train"
EVALUATION = "evaluation"
TEST = "test"
ROLES = (TRAIN, EVALUATION, TEST)

CLIENT = "client"
IMPOSTOR = "impostor"

WARPS = ("none", "quadratic-lift", "radial")

IDENTITY_COLUMN = "identity"

PathLike = Union[str, Path]


def _read_only(values: np.ndarray) -> np.ndarray:
    values = np.array(values, copy=True)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class ProtocolConfig:
    """Client/impostor split and positional role lists per identity."""

    client_ids: Tuple[str, ...]
    impostor_ids: Tuple[str, ...]
    role_assignment: Mapping[str, Tuple[str, ...]]

    def __post_init__(self):
        overlap = set(self.client_ids) & set(self.impostor_ids)
        if overlap:
            raise ProtocolError(
                f"Identities listed as both client and impostor: {sorted(overlap)}",
                identities=sorted(overlap),
            )
        for identity, roles in self.role_assignment.items():
            bad = [r for r in roles if r not in ROLES]
            if bad:
                raise ProtocolError(f"Unknown role(s) {bad} for identity {identity!r}")

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "ProtocolConfig":
        validate_protocol(data)
        return cls(
            client_ids=tuple(str(c) for c in data["clients"]),
            impostor_ids=tuple(str(i) for i in data["impostors"]),
            role_assignment={str(k): tuple(v) for k, v in data["roles"].items()},
        )

    def to_dict(self) -> Dict[str, object]:
        return {
            "clients": list(self.client_ids),
            "impostors": list(self.impostor_ids),
            "roles": {k: list(v) for k, v in self.role_assignment.items()},
        }

    def designation(self) -> Dict[str, str]:
        out = {c: CLIENT for c in self.client_ids}
        out.update({i: IMPOSTOR for i in self.impostor_ids})
        return out


@dataclass(frozen=True)
class VerificationDataset:
    """
    Immutable sample set under a verification protocol.

    Attributes:
        samples: N x M float matrix, training rows first
        labels: identity per row
        roles: train / evaluation / test per row
        designation: client or impostor per identity
        order: original file row of each stored row
        clients: client identities in protocol order
    """

    samples: np.ndarray
    labels: np.ndarray
    roles: np.ndarray
    designation: Mapping[str, str]
    order: np.ndarray
    clients: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2:
            raise DimensionMismatch(f"Samples must be a 2-D matrix, got shape {samples.shape}")
        if samples.shape[0] == 0:
            raise DatasetFormatError("Dataset has no samples")
        if not np.all(np.isfinite(samples)):
            raise DatasetFormatError("Samples contain non-finite values")

        labels = np.asarray(self.labels, dtype=object)
        roles = np.asarray(self.roles, dtype=object)
        order = np.asarray(self.order, dtype=np.int64)
        n_rows = samples.shape[0]
        for name, arr in (("labels", labels), ("roles", roles), ("order", order)):
            if arr.shape != (n_rows,):
                raise LengthMismatch(f"{name} has {arr.shape[0]} entries for {n_rows} samples")

        bad_roles = sorted({str(r) for r in roles} - set(ROLES))
        if bad_roles:
            raise ProtocolError(f"Unknown role(s): {bad_roles}")

        designation = dict(self.designation)
        undesignated = sorted({str(l) for l in labels} - set(designation))
        if undesignated:
            raise ProtocolError(
                f"Identities without client/impostor designation: {undesignated}",
                identities=undesignated,
            )

        is_train = roles == TRAIN
        n_train = int(is_train.sum())
        if not np.all(is_train[:n_train]):
            raise ProtocolError("Training rows must occupy the leading block of the dataset")
        train_impostors = sorted({str(l) for l in labels[is_train] if designation[l] != CLIENT})
        if train_impostors:
            raise ProtocolError(
                f"Impostor identities cannot have training rows: {train_impostors}",
                identities=train_impostors,
            )

        clients = tuple(self.clients) or tuple(k for k, v in designation.items() if v == CLIENT)
        counts = pd.Series(labels[is_train]).value_counts()
        short = [c for c in clients if int(counts.get(c, 0)) < 2]
        if short:
            raise InsufficientTraining(
                f"Clients with fewer than 2 training rows: {short}",
                hint="Every client needs at least two training samples",
                clients=short,
            )

        object.__setattr__(self, "samples", _read_only(samples))
        object.__setattr__(self, "labels", _read_only(labels))
        object.__setattr__(self, "roles", _read_only(roles))
        object.__setattr__(self, "order", _read_only(order))
        object.__setattr__(self, "designation", dict(designation))
        object.__setattr__(self, "clients", clients)

    @classmethod
    def from_rows(cls,
                  samples: np.ndarray,
                  labels: Sequence[str],
                  roles: Sequence[str],
                  protocol: ProtocolConfig) -> "VerificationDataset":
        """Build a dataset from rows in file order, moving training rows to the front."""
        roles_arr = np.asarray(roles, dtype=object)
        perm = np.argsort(roles_arr != TRAIN, kind="stable")
        return cls(
            samples=np.asarray(samples, dtype=float)[perm],
            labels=np.asarray(labels, dtype=object)[perm],
            roles=roles_arr[perm],
            designation=protocol.designation(),
            order=perm,
            clients=protocol.client_ids,
        )

    @property
    def N(self) -> int:
        return int(self.samples.shape[0])

    @property
    def M(self) -> int:
        return int(self.samples.shape[1])

    @property
    def n(self) -> int:
        return int(np.count_nonzero(self.roles == TRAIN))

    @property
    def E(self) -> int:
        return int(np.count_nonzero(self.roles == EVALUATION))

    @property
    def I(self) -> int:  # noqa: E743
        return int(np.count_nonzero(self.roles == TEST))

    @property
    def impostors(self) -> Tuple[str, ...]:
        return tuple(k for k, v in self.designation.items() if v == IMPOSTOR)

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[: self.n]

    def client_counts(self) -> Dict[str, int]:
        """Training rows per client, in client order."""
        counts = pd.Series(self.train_labels).value_counts()
        return {c: int(counts.get(c, 0)) for c in self.clients}

    def indices(self, role: str) -> np.ndarray:
        if role not in ROLES:
            raise ProtocolError(f"Unknown role {role!r}")
        return np.flatnonzero(self.roles == role)

    def identity_rows(self, identity: str) -> np.ndarray:
        if identity not in self.designation:
            raise UnknownIdentity(f"Identity {identity!r} is not part of the dataset")
        return np.flatnonzero(self.labels == identity)

    def is_client(self, identity: str) -> bool:
        return self.designation.get(identity) == CLIENT

    def protocol(self) -> ProtocolConfig:
        """Protocol in file order (role lists positional over each identity's file rows)."""
        inverse = np.argsort(self.order, kind="stable")
        roles: Dict[str, List[str]] = {}
        for stored in inverse:
            roles.setdefault(str(self.labels[stored]), []).append(str(self.roles[stored]))
        return ProtocolConfig(
            client_ids=self.clients,
            impostor_ids=self.impostors,
            role_assignment={k: tuple(v) for k, v in roles.items()},
        )


def _read_samples(samples_path: Path) -> Tuple[np.ndarray, List[str]]:
    try:
        frame = pd.read_csv(samples_path, dtype=str, keep_default_na=False, na_values=[""])
    except pd.errors.ParserError as e:
        raise DimensionMismatch(f"Rows of {samples_path} have differing lengths: {e}") from e
    except pd.errors.EmptyDataError as e:
        raise DatasetFormatError(f"Samples file {samples_path} is empty") from e

    columns = list(frame.columns)
    if not columns or columns[-1] != IDENTITY_COLUMN:
        raise DatasetFormatError(
            f"Samples file must end with an '{IDENTITY_COLUMN}' column, got {columns[-1:] or 'none'}"
        )
    if len(columns) < 2:
        raise DatasetFormatError("Samples file has no feature columns")
    if frame.empty:
        raise DatasetFormatError(f"Samples file {samples_path} has no rows")

    short_rows = frame.index[frame.isna().any(axis=1)].tolist()
    if short_rows:
        raise DimensionMismatch(
            f"Rows with missing fields (first at data row {short_rows[0] + 1})",
            rows=[int(r) + 1 for r in short_rows],
        )
    try:
        features = frame[columns[:-1]].astype(float).to_numpy()
    except ValueError as e:
        raise DatasetFormatError(f"Non-numeric feature value in {samples_path}: {e}") from e
    return features, frame[IDENTITY_COLUMN].astype(str).tolist()


def _read_protocol(protocol_path: Path) -> ProtocolConfig:
    try:
        with open(protocol_path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"Protocol file {protocol_path} is not valid JSON: {e}") from e
    return ProtocolConfig.from_dict(data)


def load_dataset(samples_path: PathLike, protocol_path: PathLike) -> VerificationDataset:
    """
    Load a samples CSV and its protocol JSON into a validated dataset.

    Raises:
        DatasetFileNotFound: either file is missing
        DimensionMismatch: rows of differing length
        UnknownIdentity: protocol names an identity absent from the samples
        MissingRole: a sample has no role
        InsufficientTraining: a client has fewer than two training rows
    """
    samples_path, protocol_path = Path(samples_path), Path(protocol_path)
    for path in (samples_path, protocol_path):
        if not path.exists():
            raise DatasetFileNotFound(f"File not found: {path}", path=str(path))

    features, identities = _read_samples(samples_path)
    protocol = _read_protocol(protocol_path)

    present = set(identities)
    referenced = set(protocol.client_ids) | set(protocol.impostor_ids) | set(protocol.role_assignment)
    missing = sorted(referenced - present)
    if missing:
        raise UnknownIdentity(
            f"Protocol references identities absent from samples: {missing}",
            identities=missing,
        )

    designation = protocol.designation()
    roles: List[str] = []
    seen: Dict[str, int] = {}
    for row, identity in enumerate(identities):
        if identity not in designation:
            raise MissingRole(
                f"Identity {identity!r} (row {row + 1}) is neither client nor impostor",
                identity=identity,
            )
        position = seen.get(identity, 0)
        assigned = protocol.role_assignment.get(identity, ())
        if position >= len(assigned):
            raise MissingRole(
                f"Sample {position} of identity {identity!r} (row {row + 1}) has no role",
                identity=identity,
            )
        roles.append(assigned[position])
        seen[identity] = position + 1

    for identity, assigned in protocol.role_assignment.items():
        if len(assigned) > seen.get(identity, 0):
            raise ProtocolError(
                f"Identity {identity!r} has {len(assigned)} roles for {seen.get(identity, 0)} samples",
                identity=identity,
            )

    dataset = VerificationDataset.from_rows(features, identities, roles, protocol)
    logger.info("Loaded dataset %s: N=%d M=%d n=%d E=%d I=%d clients=%d impostors=%d",
                samples_path, dataset.N, dataset.M, dataset.n, dataset.E, dataset.I,
                len(dataset.clients), len(dataset.impostors))
    return dataset


def save_dataset(dataset: VerificationDataset,
                 samples_path: PathLike,
                 protocol_path: PathLike) -> None:
    """Write the samples CSV and protocol JSON, rows in original file order."""
    samples_path, protocol_path = Path(samples_path), Path(protocol_path)
    inverse = np.argsort(dataset.order, kind="stable")
    frame = pd.DataFrame(dataset.samples[inverse],
                         columns=[f"f{j}" for j in range(dataset.M)])
    frame[IDENTITY_COLUMN] = dataset.labels[inverse]

    samples_path.parent.mkdir(parents=True, exist_ok=True)
    protocol_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(samples_path, index=False, lineterminator="\n")
    with open(protocol_path, "w", encoding="utf-8") as f:
        json.dump(dataset.protocol().to_dict(), f, indent=2)
        f.write("\n")


def histogram_equalize(image: Iterable[float], width: int, height: int) -> np.ndarray:
    """
    Cumulative-histogram remap of an 8-bit image given as a flat vector.

    out = round(255 * (cdf(v) - cdf_min) / (W*H - cdf_min)); a constant image maps to 0.
    """
    pixels = np.asarray(image if isinstance(image, np.ndarray) else list(image), dtype=float)
    total = int(width) * int(height)
    if pixels.ndim != 1 or pixels.shape[0] != total:
        raise LengthMismatch(
            f"Image has {pixels.size} pixels, expected {width}x{height}={total}"
        )
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    if np.any(pixels < 0) or np.any(pixels > 255) or np.any(pixels != np.round(pixels)):
        raise PixelRangeError("Pixel intensities must be integers in [0, 255]")

    values = pixels.astype(np.int64)
    cdf = np.cumsum(np.bincount(values, minlength=256))
    cdf_min = int(cdf[values.min()])
    if cdf_min == total:
        return np.zeros(total, dtype=np.int64)
    scaled = 255.0 * (cdf[values] - cdf_min) / (total - cdf_min)
    return np.floor(scaled + 0.5).astype(np.int64)


def equalize_dataset(dataset: VerificationDataset, width: int, height: int) -> VerificationDataset:
    """Histogram-equalize every sample; labels, roles and order are kept."""
    if dataset.M != int(width) * int(height):
        raise LengthMismatch(
            f"Samples have {dataset.M} features, expected {width}x{height}={int(width) * int(height)}"
        )
    equalized = np.vstack([histogram_equalize(row, width, height) for row in dataset.samples])
    return replace(dataset, samples=equalized.astype(float))


def _warp(points: np.ndarray, warp: str, separation: float) -> np.ndarray:
    if warp == "none":
        return points
    if warp == "quadratic-lift":
        return points * points / separation
    # radial
    radius = np.linalg.norm(points, axis=1, keepdims=True)
    return points * np.cos(radius / separation)


def generate_synthetic_protocol(num_clients: int,
                                num_impostors: int,
                                samples_per_identity: int,
                                dim: int,
                                separation: float,
                                warp: str = "none",
                                seed: int = 0,
                                spread: float = 1.0) -> VerificationDataset:
    """
    Gaussian identity clusters under a Lausanne-style split.

    Identity means are ``separation`` times orthonormal directions when there are
    no more identities than dimensions, random unit directions otherwise. Each
    client gets max(1, s // 4) evaluation and test samples with the rest used for
    training; impostors split their samples between evaluation and test.
    """
    if num_clients < 2:
        raise InvalidGenerationParameters(f"num_clients must be >= 2, got {num_clients}")
    if num_impostors < 0:
        raise InvalidGenerationParameters(f"num_impostors must be >= 0, got {num_impostors}")
    if samples_per_identity < 4:
        raise InvalidGenerationParameters(
            f"samples_per_identity must be >= 4, got {samples_per_identity}"
        )
    if dim < 1:
        raise InvalidGenerationParameters(f"dim must be >= 1, got {dim}")
    if not (math.isfinite(separation) and separation > 0):
        raise InvalidGenerationParameters(f"separation must be positive, got {separation}")
    if not (math.isfinite(spread) and spread > 0):
        raise InvalidGenerationParameters(f"spread must be positive, got {spread}")
    if warp not in WARPS:
        raise InvalidGenerationParameters(f"warp must be one of {WARPS}, got {warp!r}")

    rng = np.random.default_rng(seed)
    identities = num_clients + num_impostors
    if identities <= dim:
        q, _ = np.linalg.qr(rng.standard_normal((dim, identities)))
        directions = q.T
    else:
        g = rng.standard_normal((identities, dim))
        directions = g / np.linalg.norm(g, axis=1, keepdims=True)
    means = separation * directions

    client_ids = [f"c{k:03d}" for k in range(num_clients)]
    impostor_ids = [f"i{k:03d}" for k in range(num_impostors)]

    s = samples_per_identity
    k = max(1, s // 4)
    client_roles = [TRAIN] * (s - 2 * k) + [EVALUATION] * k + [TEST] * k
    n_eval = math.ceil(s / 2)
    impostor_roles = [EVALUATION] * n_eval + [TEST] * (s - n_eval)

    rows, labels, roles = [], [], []
    for idx, identity in enumerate(client_ids + impostor_ids):
        cluster = means[idx] + spread * rng.standard_normal((s, dim))
        rows.append(_warp(cluster, warp, separation))
        labels.extend([identity] * s)
        roles.extend(client_roles if idx < num_clients else impostor_roles)

    protocol = ProtocolConfig(
        client_ids=tuple(client_ids),
        impostor_ids=tuple(impostor_ids),
        role_assignment={
            **{c: tuple(client_roles) for c in client_ids},
            **{i: tuple(impostor_roles) for i in impostor_ids},
        },
    )
    dataset = VerificationDataset.from_rows(np.vstack(rows), labels, roles, protocol)
    logger.debug("Generated synthetic protocol: clients=%d impostors=%d N=%d warp=%s seed=%d",
                 num_clients, num_impostors, dataset.N, warp, seed)
    return dataset
