"""
End-to-end pipeline orchestration: data, Gram matrix, spectrum, coefficients,
discriminant fit and per-mode evaluation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .cskda import ClassificationMode, FitOptions, ModelPack, fit
from .dataset import (
    VerificationDataset,
    equalize_dataset,
    generate_synthetic_protocol,
    load_dataset,
)
from .errors import ConfigError, DegenerateWithinScatter, KernelVerifyError, UsageError
from .evaluation import VerificationReport, evaluate, render_table
from .kernel_learning import (
    LearnedCoefficients,
    LearnOptions,
    scatter_summaries,
    trace_ratio,
    learn_kernel,
)
from .kernels import KernelSpec, gram_matrix
from .logging import StructuredLogger, log_performance
from .schemas.report_v1 import validate_run_config
from .spectral import DEFAULT_REL_TOL, SpectralModel, decompose

logger = logging.getLogger(__name__)
events = StructuredLogger(__name__)

_SYNTHETIC_KEYS = {"clients": int, "impostors": int, "per": int, "dim": int,
                   "sep": float, "warp": str}


@dataclass(frozen=True)
class SyntheticSource:
    clients: int
    impostors: int
    per: int
    dim: int
    sep: float
    warp: str = "none"

    @classmethod
    def parse(cls, text: str) -> "SyntheticSource":
        """Parse 'clients=5,impostors=3,per=6,dim=8,sep=8,warp=radial'."""
        values: Dict[str, Any] = {}
        for item in filter(None, (p.strip() for p in text.split(","))):
            key, sep, raw = item.partition("=")
            key = key.strip()
            if not sep or key not in _SYNTHETIC_KEYS:
                raise UsageError(f"Bad synthetic parameter {item!r}",
                                 hint=f"Accepted keys: {', '.join(_SYNTHETIC_KEYS)}")
            try:
                values[key] = _SYNTHETIC_KEYS[key](raw.strip())
            except ValueError as e:
                raise UsageError(f"Bad value for {key}: {raw!r}") from e
        return cls.from_dict(values)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SyntheticSource":
        missing = [k for k in ("clients", "impostors", "per", "dim", "sep") if k not in data]
        if missing:
            raise UsageError(f"Synthetic source missing {missing}")
        unknown = sorted(set(data) - set(_SYNTHETIC_KEYS))
        if unknown:
            raise UsageError(f"Unknown synthetic parameter(s) {unknown}")
        return cls(**{k: _SYNTHETIC_KEYS[k](v) for k, v in data.items()})

    def to_dict(self) -> Dict[str, Any]:
        return {"clients": self.clients, "impostors": self.impostors, "per": self.per,
                "dim": self.dim, "sep": self.sep, "warp": self.warp}

    def build(self, seed: int, spread: float = 1.0) -> VerificationDataset:
        return generate_synthetic_protocol(self.clients, self.impostors, self.per, self.dim,
                                           self.sep, self.warp, seed, spread=spread)


@dataclass(frozen=True)
class FileSource:
    samples: str
    protocol: str

    def build(self, seed: int = 0, spread: float = 1.0) -> VerificationDataset:
        return load_dataset(self.samples, self.protocol)

    def to_dict(self) -> Dict[str, Any]:
        return {"samples": self.samples, "protocol": self.protocol}


Source = Union[SyntheticSource, FileSource]


@dataclass(frozen=True)
class RunConfig:
    source: Source
    kernel: KernelSpec = field(default_factory=KernelSpec.linear)
    learn: LearnOptions = field(default_factory=LearnOptions)
    baseline: bool = False
    modes: Tuple[ClassificationMode, ...] = (ClassificationMode.CLIENT_MODEL,
                                             ClassificationMode.IMPOSTOR_MODEL)
    seed: int = 0
    heq: Optional[Tuple[int, int]] = None
    report_path: Optional[str] = None
    roc_path: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.source, (SyntheticSource, FileSource)):
            raise UsageError("Run needs exactly one of a synthetic or a file source")
        modes = tuple(dict.fromkeys(ClassificationMode.parse(m) for m in self.modes))
        if not modes:
            raise UsageError("At least one classification mode must be selected")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Optional[Path] = None) -> "RunConfig":
        """Build from a --config JSON body; file paths resolve against base_dir."""
        validate_run_config(data)
        source_data = data["source"]
        if "synthetic" in source_data:
            source: Source = SyntheticSource.from_dict(source_data["synthetic"])
        else:
            files = source_data["files"]
            root = base_dir or Path(".")
            source = FileSource(samples=str(root / files["samples"]),
                                protocol=str(root / files["protocol"]))
        kernel = data["kernel"]
        spec = KernelSpec.parse(kernel) if isinstance(kernel, str) else KernelSpec.from_dict(kernel)
        heq = data.get("heq")
        output = data.get("output", {})
        return cls(
            source=source,
            kernel=spec,
            learn=LearnOptions.from_dict(data.get("learn", {})),
            baseline=bool(data.get("baseline", False)),
            modes=tuple(data.get("modes", ("OnC", "OnI"))),
            seed=int(data.get("seed", 0)),
            heq=(int(heq["width"]), int(heq["height"])) if heq else None,
            report_path=output.get("report"),
            roc_path=output.get("roc"),
        )

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Run config not found: {path}", path=str(path))
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Run config {path} is not valid JSON: {e}") from e
        return cls.from_dict(data, base_dir=path.parent)

    @property
    def method(self) -> str:
        return "baseline" if self.baseline else "learned"


@dataclass
class RunResult:
    config: RunConfig
    reports: List[VerificationReport]
    pack: ModelPack
    learned: Optional[LearnedCoefficients] = None


@dataclass
class SweepResult:
    reports: List[VerificationReport]
    table: pd.DataFrame
    failures: List[Dict[str, Any]]


def load_source(config: RunConfig, spread: float = 1.0) -> VerificationDataset:
    dataset = config.source.build(config.seed, spread=spread)
    if config.heq is not None:
        dataset = equalize_dataset(dataset, *config.heq)
    return dataset


def _baseline_summary(model: SpectralModel, dataset: VerificationDataset) -> Dict[str, Any]:
    mu = model.baseline_mu()
    try:
        ratio: Optional[float] = trace_ratio(
            scatter_summaries(model, dataset.train_labels, dataset.n), mu)
    except DegenerateWithinScatter:
        ratio = None
    return {"p": model.p, "beta": model.beta, "ratio_trace": ratio,
            "min_abs": float(mu.min()), "max_abs": float(mu.max()),
            "l2_norm": float(np.linalg.norm(mu))}


@log_performance()
def run_pipeline(config: RunConfig,
                 dataset: Optional[VerificationDataset] = None,
                 *,
                 rel_tol: float = DEFAULT_REL_TOL,
                 fit_options: Optional[FitOptions] = None) -> RunResult:
    """load/generate -> gram_matrix -> decompose -> learn (or baseline mu) -> fit -> evaluate."""
    if dataset is None:
        dataset = load_source(config)

    K = gram_matrix(config.kernel, dataset)
    spectral = decompose(K, rel_tol=rel_tol)
    events.log_spectrum(dataset.N, spectral.p, spectral.eigenvalues)

    learned: Optional[LearnedCoefficients] = None
    if config.baseline:
        mu = spectral.baseline_mu()
        mu_summary = _baseline_summary(spectral, dataset)
        learn_echo: Dict[str, Any] = {"mode": "baseline"}
        alpha = None
    else:
        learned = learn_kernel(spectral, dataset.train_labels, dataset.n, config.learn)
        mu = learned.mu
        mu_summary = learned.summary()
        learn_echo = {**config.learn.to_dict(), "iterations": learned.iterations,
                      "stop_reason": learned.stop_reason}
        alpha = learned.alpha
        logger.info("Learned kernel: alpha=%.6g iterations=%d ratio_trace=%.6g stop=%s",
                    learned.alpha, learned.iterations, learned.ratio_trace, learned.stop_reason)

    spectral = spectral.with_mu(mu)
    model = fit(spectral, mu, dataset, fit_options)
    logger.info("Fitted discriminant: m_b=%d clients=%d", model.m_b, len(model.clients))
    pack = ModelPack(spectral=spectral, cskda=model)

    reports = [
        evaluate(pack, dataset, mode, method=config.method, kernel=config.kernel.to_dict(),
                 learn=learn_echo, alpha=alpha, mu_summary=mu_summary)
        for mode in config.modes
    ]
    return RunResult(config=config, reports=reports, pack=pack, learned=learned)


def run_comparison(config: RunConfig,
                   dataset: Optional[VerificationDataset] = None,
                   **kwargs) -> Tuple[List[VerificationReport], pd.DataFrame]:
    """Baseline and learned pipelines on the same data and seed, as one paired table."""
    if dataset is None:
        dataset = load_source(config)
    baseline = run_pipeline(replace(config, baseline=True), dataset, **kwargs)
    learned = run_pipeline(replace(config, baseline=False), dataset, **kwargs)
    reports = baseline.reports + learned.reports
    return reports, render_table(reports)


def run_sweep(config: RunConfig,
              grid: Sequence[KernelSpec],
              dataset: Optional[VerificationDataset] = None,
              **kwargs) -> SweepResult:
    """
    One run per kernel on a shared dataset. A failing grid point is recorded in
    `failures` and as a table row carrying its error code.
    """
    if not grid:
        raise UsageError("Sweep grid is empty", hint="Pass at least one --grid kernel")
    if dataset is None:
        dataset = load_source(config)

    reports: List[VerificationReport] = []
    failures: List[Dict[str, Any]] = []
    for spec in grid:
        try:
            result = run_pipeline(replace(config, kernel=spec), dataset, **kwargs)
        except KernelVerifyError as e:
            logger.warning("Grid point %s failed: %s", spec.describe(), e.message)
            failures.append({"kernel": spec.describe(), "code": e.code.value, "message": e.message})
            continue
        reports.extend(result.reports)

    table = render_table(reports)
    table["error"] = ""
    if failures:
        failed = pd.DataFrame([{"method": config.method, "kernel": f["kernel"], "mode": m.value,
                                "error": f["code"]}
                               for f in failures for m in config.modes])
        table = pd.concat([table, failed], ignore_index=True)
    table = table.sort_values("mode", kind="stable").reset_index(drop=True)
    return SweepResult(reports=reports, table=table, failures=failures)
