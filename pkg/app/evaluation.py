"""
EER-calibrated verification evaluation.

Thresholds are calibrated on the evaluation claims at the equal error rate and
then frozen for the test claims. Rates are percentages.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .cskda import ClassificationMode, ModelPack, project_all
from .dataset import EVALUATION, TEST, VerificationDataset
from .errors import (
    DatasetFileNotFound,
    EmptyRoleSet,
    NoGenuineClaims,
    NoImpostorClaims,
    SchemaError,
    UsageError,
)
from .kernels import KernelSpec
from .logging import StructuredLogger
from .schemas.report_v1 import create_report_v1_output, validate_report_array

logger = logging.getLogger(__name__)
events = StructuredLogger(__name__)

Mode = ClassificationMode

TABLE_COLUMNS = ["method", "kernel", "mode", "threshold", "eval_far", "eval_frr",
                 "test_far", "test_frr", "test_ter"]


@dataclass(frozen=True)
class Claim:
    sample_index: int
    claimed_client: str
    genuine: bool


class EerPoint(NamedTuple):
    threshold: float
    far: float
    frr: float


def claim_set(dataset: VerificationDataset, role: str) -> List[Claim]:
    """
    Genuine claims: each client sample claims its own identity.
    Impostor claims: each impostor sample claims every client.
    """
    if role not in (EVALUATION, TEST):
        raise UsageError(f"Claims are built for evaluation or test rows, not {role!r}")
    rows = dataset.indices(role)
    if rows.size == 0:
        raise EmptyRoleSet(f"No {role} samples in the dataset", role=role)

    claims: List[Claim] = []
    for idx in rows:
        identity = str(dataset.labels[idx])
        if dataset.is_client(identity):
            claims.append(Claim(int(idx), identity, True))
        else:
            claims.extend(Claim(int(idx), client, False) for client in dataset.clients)

    if not any(c.genuine for c in claims):
        raise NoGenuineClaims(f"No genuine {role} claims: FRR is undefined", role=role)
    if all(c.genuine for c in claims):
        raise NoImpostorClaims(f"No impostor {role} claims: FAR is undefined", role=role,
                               hint="Assign evaluation and test samples to impostor identities")
    return claims


def _counts_at(genuine: np.ndarray, impostor: np.ndarray, thresholds: np.ndarray, mode: Mode):
    """Accepted impostors and rejected genuines at each threshold."""
    g = np.sort(genuine)
    imp = np.sort(impostor)
    g_at_or_below = np.searchsorted(g, thresholds, side="right")
    i_at_or_below = np.searchsorted(imp, thresholds, side="right")
    if mode is Mode.CLIENT_MODEL:
        false_accepts = i_at_or_below
        false_rejects = g.size - g_at_or_below
    else:
        false_accepts = imp.size - i_at_or_below
        false_rejects = g_at_or_below
    return false_accepts, false_rejects


def _candidates(genuine: np.ndarray, impostor: np.ndarray):
    scores = np.unique(np.concatenate([genuine, impostor]))
    mids = (scores[:-1] + scores[1:]) / 2.0
    thresholds = np.concatenate([scores, mids])
    is_mid = np.concatenate([np.zeros(scores.size, bool), np.ones(mids.size, bool)])
    return thresholds, is_mid


def _as_scores(values: Sequence[float], error, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise error(f"No {what} scores to calibrate on")
    return arr


def calibrate_eer(genuine: Sequence[float],
                  impostor: Sequence[float],
                  mode: Union[str, Mode] = Mode.CLIENT_MODEL) -> EerPoint:
    """
    Threshold where FAR and FRR are closest.

    Candidates are the distinct scores and the midpoints between neighbours.
    Ties go to lower FAR + FRR, then to midpoints, then to the smaller threshold.
    """
    mode = Mode.parse(mode)
    g = _as_scores(genuine, NoGenuineClaims, "genuine")
    imp = _as_scores(impostor, NoImpostorClaims, "impostor")
    thresholds, is_mid = _candidates(g, imp)
    fa, fr = _counts_at(g, imp, thresholds, mode)

    # exact integer keys: |FA/I - FR/G| and FA/I + FR/G scaled by G*I
    gap = np.abs(fa * g.size - fr * imp.size)
    total = fa * g.size + fr * imp.size
    best = np.lexsort((thresholds, ~is_mid, total, gap))[0]
    return EerPoint(
        threshold=float(thresholds[best]),
        far=100.0 * fa[best] / imp.size,
        frr=100.0 * fr[best] / g.size,
    )


def error_rates(genuine: Sequence[float],
                impostor: Sequence[float],
                mode: Union[str, Mode],
                threshold: float) -> EerPoint:
    """FAR and FRR at a fixed threshold."""
    mode = Mode.parse(mode)
    g = _as_scores(genuine, NoGenuineClaims, "genuine")
    imp = _as_scores(impostor, NoImpostorClaims, "impostor")
    fa, fr = _counts_at(g, imp, np.array([threshold], dtype=float), mode)
    return EerPoint(float(threshold), 100.0 * fa[0] / imp.size, 100.0 * fr[0] / g.size)


def roc_sweep(genuine: Sequence[float],
              impostor: Sequence[float],
              mode: Union[str, Mode] = Mode.CLIENT_MODEL) -> pd.DataFrame:
    """FAR/FRR at every candidate threshold, sorted by threshold ascending."""
    mode = Mode.parse(mode)
    g = _as_scores(genuine, NoGenuineClaims, "genuine")
    imp = _as_scores(impostor, NoImpostorClaims, "impostor")
    thresholds, _ = _candidates(g, imp)
    thresholds = np.sort(thresholds)
    fa, fr = _counts_at(g, imp, thresholds, mode)
    return pd.DataFrame({
        "threshold": thresholds,
        "far": 100.0 * fa / imp.size,
        "frr": 100.0 * fr / g.size,
    })


@dataclass(frozen=True)
class VerificationReport:
    method: str
    mode: Mode
    threshold: float
    eval_far: float
    eval_frr: float
    test_far: float
    test_frr: float
    test_ter: float
    kernel: Dict[str, Any]
    learn: Dict[str, Any]
    alpha: Optional[float]
    mu_summary: Dict[str, Any]
    m_b: int
    claims: Dict[str, int]
    test_genuine: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False, compare=False)
    test_impostor: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        return create_report_v1_output({
            "method": self.method,
            "mode": self.mode.value,
            "threshold": float(self.threshold),
            "eval_far": float(self.eval_far),
            "eval_frr": float(self.eval_frr),
            "test_far": float(self.test_far),
            "test_frr": float(self.test_frr),
            "test_ter": float(self.test_ter),
            "kernel": dict(self.kernel),
            "learn": dict(self.learn),
            "alpha": None if self.alpha is None else float(self.alpha),
            "mu_summary": dict(self.mu_summary),
            "m_b": int(self.m_b),
            "claims": dict(self.claims),
        })

    def roc(self) -> pd.DataFrame:
        return roc_sweep(self.test_genuine, self.test_impostor, self.mode)


def _claim_distances(claims: List[Claim], projections: np.ndarray, pack: ModelPack, mode: Mode):
    model = pack.cskda
    client_idx = np.array([model.client_index(c.claimed_client) for c in claims])
    samples = np.array([c.sample_index for c in claims])
    z = projections[client_idx, samples]
    if mode is Mode.CLIENT_MODEL:
        d = np.abs(z - model.projected_client_means[client_idx])
    else:
        d = np.abs(z - model.projected_impostor_means[client_idx])
    genuine = np.array([c.genuine for c in claims])
    return d[genuine], d[~genuine]


def evaluate(pack: ModelPack,
             dataset: VerificationDataset,
             mode: Union[str, Mode],
             *,
             method: str = "learned",
             kernel: Optional[Mapping[str, Any]] = None,
             learn: Optional[Mapping[str, Any]] = None,
             alpha: Optional[float] = None,
             mu_summary: Optional[Mapping[str, Any]] = None) -> VerificationReport:
    """Calibrate on evaluation claims at the EER point, then score test claims at that threshold."""
    mode = Mode.parse(mode)
    projections = project_all(pack)

    eval_claims = claim_set(dataset, EVALUATION)
    test_claims = claim_set(dataset, TEST)
    eval_g, eval_i = _claim_distances(eval_claims, projections, pack, mode)
    test_g, test_i = _claim_distances(test_claims, projections, pack, mode)

    eer = calibrate_eer(eval_g, eval_i, mode)
    test = error_rates(test_g, test_i, mode, eer.threshold)

    if mu_summary is None:
        mu = np.abs(pack.spectral.mu)
        mu_summary = {"p": int(mu.size), "beta": pack.spectral.beta, "ratio_trace": None,
                      "min_abs": float(mu.min()), "max_abs": float(mu.max()),
                      "l2_norm": float(np.linalg.norm(mu))}

    report = VerificationReport(
        method=method,
        mode=mode,
        threshold=eer.threshold,
        eval_far=eer.far,
        eval_frr=eer.frr,
        test_far=test.far,
        test_frr=test.frr,
        test_ter=test.far + test.frr,
        kernel=dict(kernel or {"family": "linear"}),
        learn=dict(learn or {"mode": "baseline"}),
        alpha=alpha,
        mu_summary=dict(mu_summary),
        m_b=pack.cskda.m_b,
        claims={
            "eval_genuine": int(eval_g.size),
            "eval_impostor": int(eval_i.size),
            "test_genuine": int(test_g.size),
            "test_impostor": int(test_i.size),
        },
        test_genuine=test_g,
        test_impostor=test_i,
    )
    events.log_evaluation(mode.value, report.threshold, report.test_far,
                          report.test_frr, report.test_ter)
    return report


def _roc_paths(reports: Sequence[VerificationReport], roc_path: Path) -> List[Path]:
    if len(reports) == 1:
        return [roc_path]
    modes = [r.mode.value for r in reports]
    stems = []
    for r in reports:
        tag = r.mode.value if modes.count(r.mode.value) == 1 else f"{r.method}_{r.mode.value}"
        stems.append(roc_path.with_name(f"{roc_path.stem}_{tag}{roc_path.suffix}"))
    return stems


def emit_report(reports: Sequence[VerificationReport],
                out_path: Union[str, Path],
                roc_path: Optional[Union[str, Path]] = None) -> List[Path]:
    """
    Write the report array as JSON and, optionally, one test-set ROC CSV per report.

    With several reports the ROC file name gets the mode (and method when modes
    repeat) appended to its stem.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    payload = validate_report_array([r.to_dict() for r in reports])
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    out_path.write_text(text, encoding="utf-8")
    events.log_export_event("report", str(out_path), len(payload), len(text.encode("utf-8")))
    written = [out_path]

    if roc_path is not None and reports:
        for report, path in zip(reports, _roc_paths(reports, Path(roc_path))):
            path.parent.mkdir(parents=True, exist_ok=True)
            frame = report.roc()
            frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
            events.log_export_event("roc", str(path), len(frame), path.stat().st_size)
            written.append(path)
    return written


def load_reports(path: Union[str, Path]) -> List[Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise DatasetFileNotFound(f"Report file not found: {path}", path=str(path))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"Report file {path} is not valid JSON: {e}") from e
    return validate_report_array(data)


def _kernel_label(kernel: Mapping[str, Any]) -> str:
    return KernelSpec.from_dict(kernel).describe()


def render_table(reports: Sequence[Union[VerificationReport, Mapping[str, Any]]],
                 decimals: int = 2) -> pd.DataFrame:
    """Presentation table with rates rounded to `decimals` places."""
    rows = []
    for report in reports:
        data = report.to_dict() if isinstance(report, VerificationReport) else dict(report)
        rows.append({
            "method": data["method"],
            "kernel": _kernel_label(data["kernel"]),
            "mode": data["mode"],
            **{k: data[k] for k in TABLE_COLUMNS[3:]},
        })
    frame = pd.DataFrame(rows, columns=TABLE_COLUMNS)
    numeric = TABLE_COLUMNS[3:]
    frame[numeric] = frame[numeric].astype(float).round(decimals)
    return frame
