"""Kernel functions and transductive Gram matrices"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Union

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import VerificationDataset
from .errors import DatasetFormatError, DimensionMismatch, InvalidKernelSpec, NonFiniteKernel
from .logging import log_performance

logger = logging.getLogger(__name__)

POLYNOMIAL = "polynomial"
RBF = "rbf"
LINEAR = "linear"
FAMILIES = (POLYNOMIAL, RBF, LINEAR)

_ALIASES = {"poly": POLYNOMIAL, "polynomial": POLYNOMIAL, "rbf": RBF,
            "gaussian": RBF, "linear": LINEAR}


def _format_number(value: float) -> str:
    return f"{value:g}"


@dataclass(frozen=True)
class KernelSpec:
    """
    Kernel family and parameters.

    polynomial: (a * <x, y> + b) ** d
    rbf:        exp(-||x - y||^2 / sigma^2)
    linear:     polynomial with a=1, b=0, d=1
    """

    family: str = LINEAR
    poly_a: float = 1.0
    poly_b: float = 0.0
    poly_d: int = 1
    rbf_sigma: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidKernelSpec(f"Unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if self.family == LINEAR:
            object.__setattr__(self, "poly_a", 1.0)
            object.__setattr__(self, "poly_b", 0.0)
            object.__setattr__(self, "poly_d", 1)
        if self.family in (POLYNOMIAL, LINEAR):
            d = self.poly_d
            if isinstance(d, bool) or not float(d).is_integer() or int(d) < 1:
                raise InvalidKernelSpec(f"Polynomial degree must be an integer >= 1, got {d!r}")
            object.__setattr__(self, "poly_d", int(d))
            for name in ("poly_a", "poly_b"):
                if not math.isfinite(float(getattr(self, name))):
                    raise InvalidKernelSpec(f"{name} must be finite")
        if self.family == RBF:
            sigma = float(self.rbf_sigma)
            if not (math.isfinite(sigma) and sigma > 0):
                raise InvalidKernelSpec(f"RBF sigma must be positive, got {self.rbf_sigma!r}")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(family=LINEAR)

    @classmethod
    def polynomial(cls, a: float, b: float, d: int) -> "KernelSpec":
        return cls(family=POLYNOMIAL, poly_a=float(a), poly_b=float(b), poly_d=d)

    @classmethod
    def rbf(cls, sigma: float) -> "KernelSpec":
        return cls(family=RBF, rbf_sigma=float(sigma))

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """Parse 'linear', 'rbf:sigma=2' or 'polynomial:a=0.0001,b=1,d=2'."""
        head, _, tail = text.strip().partition(":")
        family = _ALIASES.get(head.strip().lower())
        if family is None:
            raise InvalidKernelSpec(f"Unknown kernel family in {text!r}",
                                    hint="Use linear, rbf:sigma=S or polynomial:a=A,b=B,d=D")
        params: Dict[str, str] = {}
        for item in filter(None, (p.strip() for p in tail.split(","))):
            key, sep, value = item.partition("=")
            if not sep:
                raise InvalidKernelSpec(f"Kernel parameter {item!r} is not key=value")
            params[key.strip().lower()] = value.strip()
        return cls.from_dict({"family": family, **params})

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "KernelSpec":
        family = _ALIASES.get(str(data.get("family", "")).lower())
        if family is None:
            raise InvalidKernelSpec(f"Unknown kernel family {data.get('family')!r}")
        allowed = {POLYNOMIAL: {"a", "b", "d"}, RBF: {"sigma"}, LINEAR: set()}[family]
        unknown = set(data) - allowed - {"family"}
        if unknown:
            raise InvalidKernelSpec(f"Unexpected parameter(s) {sorted(unknown)} for {family} kernel")
        try:
            if family == POLYNOMIAL:
                missing = allowed - set(data)
                if missing:
                    raise InvalidKernelSpec(f"Polynomial kernel missing {sorted(missing)}")
                d = float(data["d"])
                return cls.polynomial(float(data["a"]), float(data["b"]), int(d) if d.is_integer() else d)
            if family == RBF:
                if "sigma" not in data:
                    raise InvalidKernelSpec("RBF kernel missing sigma")
                return cls.rbf(float(data["sigma"]))
        except ValueError as e:
            raise InvalidKernelSpec(f"Invalid kernel parameter: {e}") from e
        return cls.linear()

    def to_dict(self) -> Dict[str, Union[str, float, int]]:
        if self.family == POLYNOMIAL:
            return {"family": POLYNOMIAL, "a": self.poly_a, "b": self.poly_b, "d": self.poly_d}
        if self.family == RBF:
            return {"family": RBF, "sigma": self.rbf_sigma}
        return {"family": LINEAR}

    def describe(self) -> str:
        """Short label used as a table key."""
        if self.family == POLYNOMIAL:
            return (f"polynomial a={_format_number(self.poly_a)} "
                    f"b={_format_number(self.poly_b)} d={self.poly_d}")
        if self.family == RBF:
            return f"rbf sigma={_format_number(self.rbf_sigma)}"
        return LINEAR


def kernel_eval(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DimensionMismatch(f"Kernel arguments differ in dimension: {x.size} vs {y.size}")
    if spec.family == RBF:
        diff = x - y
        return float(np.exp(-np.dot(diff, diff) / spec.rbf_sigma ** 2))
    return float((spec.poly_a * np.dot(x, y) + spec.poly_b) ** spec.poly_d)


@log_performance()
def gram_matrix(spec: KernelSpec, data: Union[VerificationDataset, np.ndarray]) -> np.ndarray:
    """
    N x N Gram matrix over every sample (train, evaluation and test together).

    Symmetry is enforced by averaging with the transpose.
    Raises NonFiniteKernel when a kernel value overflows or is NaN.
    """
    X = data.samples if isinstance(data, VerificationDataset) else np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DatasetFormatError(f"Gram matrix needs a non-empty sample matrix, got shape {X.shape}")

    if spec.family == RBF:
        K = np.exp(-cdist(X, X, metric="sqeuclidean") / spec.rbf_sigma ** 2)
    else:
        K = (spec.poly_a * (X @ X.T) + spec.poly_b) ** spec.poly_d

    if not np.all(np.isfinite(K)):
        raise NonFiniteKernel(f"Kernel {spec.describe()} produced non-finite values",
                              kernel=spec.describe())
    K = (K + K.T) / 2.0
    logger.debug("Gram matrix %s: N=%d kernel=%s", K.shape, K.shape[0], spec.describe())
    return K
