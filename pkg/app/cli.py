#!/usr/bin/env python3
"""kernel-verify command line: run, sweep, gen, report."""
from __future__ import annotations

import functools
import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import typer

from .config import Config
from .cskda import ClassificationMode
from .dataset import save_dataset
from .errors import ErrorCode, KernelVerifyError, UsageError, fail_with_error
from .evaluation import emit_report, load_reports, render_table
from .kernel_learning import LearnOptions
from .kernels import KernelSpec
from .logging import StructuredLogger, setup_logging
from .runner import (
    FileSource,
    RunConfig,
    SyntheticSource,
    load_source,
    run_comparison,
    run_pipeline,
    run_sweep,
)

app = typer.Typer(help="Learned spectral kernels with client-specific discriminant verification",
                  add_completion=False, no_args_is_help=True)

logger = logging.getLogger(__name__)
events = StructuredLogger(__name__)


def _bootstrap(verbose: bool) -> Config:
    cfg = Config()
    issues = cfg.validate()
    setup_logging(level=cfg.get("logging.level", "INFO"),
                  verbose=verbose,
                  log_dir=cfg.get("logging.log_dir", "logs"),
                  file_logging=bool(cfg.get("logging.file_logging", True)))
    for warning in issues["warnings"]:
        logger.warning("Config: %s", warning)
    if issues["errors"]:
        fail_with_error(ErrorCode.E_CONFIG, "; ".join(issues["errors"]),
                        hint="Check config.toml and KERNEL_VERIFY_* environment variables")
    return cfg


def _guarded(func):
    """Map pipeline exceptions to the error envelope and taxonomy exit codes."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (typer.Exit, typer.Abort, SystemExit):
            raise
        except KernelVerifyError as e:
            logger.debug("Command failed", exc_info=True)
            fail_with_error(e)
        except Exception as e:  # pragma: no cover - last-resort envelope
            logger.exception("Unexpected failure")
            fail_with_error(ErrorCode.E_UNKNOWN, f"{type(e).__name__}: {e}")
    return wrapper


def _parse_modes(modes: str):
    items = [m for m in (p.strip() for p in modes.split(",")) if m]
    if not items:
        raise UsageError("--modes needs at least one of OnC, OnI")
    return tuple(ClassificationMode.parse(m) for m in items)


def _parse_heq(heq: Optional[str]):
    if not heq:
        return None
    width, sep, height = heq.lower().partition("x")
    try:
        return int(width), int(height)
    except ValueError:
        raise UsageError(f"--heq expects WIDTHxHEIGHT, got {heq!r}") from None


def _source(synthetic: Optional[str], samples: Optional[Path], protocol: Optional[Path]):
    if synthetic and (samples or protocol):
        raise UsageError("--synthetic cannot be combined with --samples/--protocol")
    if synthetic:
        return SyntheticSource.parse(synthetic)
    if samples and protocol:
        return FileSource(samples=str(samples), protocol=str(protocol))
    raise UsageError("Give --synthetic or both --samples and --protocol")


def _learn_options(cfg: Config, learn: Optional[str], alpha: Optional[float],
                   tol: Optional[float], max_iter: Optional[int]) -> LearnOptions:
    base = cfg.get_learn_options()
    return LearnOptions(
        mode=learn or base.mode,
        alpha=alpha if alpha is not None else base.alpha,
        tol=tol if tol is not None else base.tol,
        max_iter=max_iter if max_iter is not None else base.max_iter,
    )


def _build_config(cfg: Config, *, config_file, synthetic, samples, protocol, kernel, learn,
                  alpha, tol, max_iter, baseline, modes, seed, heq, out, roc) -> RunConfig:
    if config_file is not None:
        run_config = RunConfig.from_file(config_file)
        overrides = {}
        if out is not None:
            overrides["report_path"] = str(out)
        if roc is not None:
            overrides["roc_path"] = str(roc)
        if overrides:
            run_config = replace(run_config, **overrides)
        return run_config
    return RunConfig(
        source=_source(synthetic, samples, protocol),
        kernel=KernelSpec.parse(kernel),
        learn=_learn_options(cfg, learn, alpha, tol, max_iter),
        baseline=baseline,
        modes=_parse_modes(modes),
        seed=seed,
        heq=_parse_heq(heq),
        report_path=str(out) if out is not None else None,
        roc_path=str(roc) if roc is not None else None,
    )


def _report_path(cfg: Config, run_config: RunConfig) -> Path:
    return Path(run_config.report_path or cfg.get("output.report_path", "reports/report.json"))


def _roc_path(cfg: Config, run_config: RunConfig) -> Optional[Path]:
    path = run_config.roc_path or cfg.get("output.roc_path") or None
    return Path(path) if path else None


@app.command()
@_guarded
def run(synthetic: Optional[str] = typer.Option(None, help="clients=C,impostors=I,per=S,dim=D,sep=X[,warp=W]"),
        samples: Optional[Path] = typer.Option(None, help="Samples CSV (f0..f{M-1},identity)"),
        protocol: Optional[Path] = typer.Option(None, help="Protocol JSON"),
        kernel: str = typer.Option("linear", help="linear | rbf:sigma=S | polynomial:a=A,b=B,d=D"),
        learn: Optional[str] = typer.Option(None, help="dinkelbach | fixed_alpha"),
        alpha: Optional[float] = typer.Option(None, help="alpha for fixed_alpha mode"),
        tol: Optional[float] = typer.Option(None, help="Dinkelbach tolerance on alpha"),
        max_iter: Optional[int] = typer.Option(None, help="Dinkelbach iteration cap"),
        baseline: bool = typer.Option(False, "--baseline", help="Use mu_r = sqrt(lambda_r) (fixed kernel)"),
        compare: bool = typer.Option(False, "--compare", help="Run baseline and learned on the same data"),
        modes: str = typer.Option("OnC,OnI", help="Comma-separated subset of OnC,OnI"),
        seed: int = typer.Option(0, help="Seed for synthetic data"),
        heq: Optional[str] = typer.Option(None, help="Histogram-equalize samples as WIDTHxHEIGHT images"),
        out: Optional[Path] = typer.Option(None, help="Report JSON path"),
        roc: Optional[Path] = typer.Option(None, help="ROC CSV path"),
        config_file: Optional[Path] = typer.Option(None, "--config", help="Run config JSON"),
        verbose: bool = typer.Option(False, "--verbose", "-v", help="DEBUG logging")):
    """Learn the kernel, fit the discriminant and evaluate each mode."""
    cfg = _bootstrap(verbose)
    run_config = _build_config(cfg, config_file=config_file, synthetic=synthetic, samples=samples,
                               protocol=protocol, kernel=kernel, learn=learn, alpha=alpha, tol=tol,
                               max_iter=max_iter, baseline=baseline, modes=modes, seed=seed,
                               heq=heq, out=out, roc=roc)
    kwargs = {"rel_tol": cfg.get_spectral_tolerance(), "fit_options": cfg.get_fit_options()}
    dataset = load_source(run_config, spread=float(cfg.get("synthetic.spread", 1.0)))

    if compare:
        reports, table = run_comparison(run_config, dataset, **kwargs)
    else:
        reports = run_pipeline(run_config, dataset, **kwargs).reports
        table = render_table(reports)

    decimals = int(cfg.get("evaluation.decimals", 2))
    written = emit_report(reports, _report_path(cfg, run_config), _roc_path(cfg, run_config))
    typer.echo(table.round(decimals).to_string(index=False))
    for path in written:
        logger.info("Wrote %s", path)


@app.command()
@_guarded
def sweep(grid: List[str] = typer.Option([], "--grid", help="Kernel spec; repeat for each grid point"),
          synthetic: Optional[str] = typer.Option(None, help="clients=C,impostors=I,per=S,dim=D,sep=X[,warp=W]"),
          samples: Optional[Path] = typer.Option(None, help="Samples CSV"),
          protocol: Optional[Path] = typer.Option(None, help="Protocol JSON"),
          learn: Optional[str] = typer.Option(None, help="dinkelbach | fixed_alpha"),
          alpha: Optional[float] = typer.Option(None, help="alpha for fixed_alpha mode"),
          baseline: bool = typer.Option(False, "--baseline", help="Use mu_r = sqrt(lambda_r)"),
          modes: str = typer.Option("OnC,OnI", help="Comma-separated subset of OnC,OnI"),
          seed: int = typer.Option(0, help="Seed for synthetic data"),
          out: Path = typer.Option(Path("reports/sweep.json"), help="Report JSON path; the table goes next to it as CSV"),
          config_file: Optional[Path] = typer.Option(None, "--config",
                                                     help="Run config JSON; its kernel is the grid when --grid is absent"),
          verbose: bool = typer.Option(False, "--verbose", "-v", help="DEBUG logging")):
    """Run the pipeline once per kernel in the grid and tabulate the results."""
    cfg = _bootstrap(verbose)
    if config_file is not None:
        run_config = RunConfig.from_file(config_file)
        specs = [KernelSpec.parse(item) for item in grid] or [run_config.kernel]
    else:
        if not grid:
            raise UsageError("Sweep grid is empty", hint="Pass at least one --grid kernel")
        specs = [KernelSpec.parse(item) for item in grid]
        run_config = RunConfig(
            source=_source(synthetic, samples, protocol),
            learn=_learn_options(cfg, learn, alpha, None, None),
            baseline=baseline,
            modes=_parse_modes(modes),
            seed=seed,
        )
    dataset = load_source(run_config, spread=float(cfg.get("synthetic.spread", 1.0)))
    result = run_sweep(run_config, specs, dataset, rel_tol=cfg.get_spectral_tolerance(),
                       fit_options=cfg.get_fit_options())

    emit_report(result.reports, out)
    table_path = out.with_suffix(".csv")
    result.table.to_csv(table_path, index=False, lineterminator="\n")
    events.log_export_event("sweep_table", str(table_path), len(result.table),
                            table_path.stat().st_size)
    decimals = int(cfg.get("evaluation.decimals", 2))
    typer.echo(result.table.round(decimals).to_string(index=False))


@app.command()
@_guarded
def gen(synthetic: str = typer.Option(..., help="clients=C,impostors=I,per=S,dim=D,sep=X[,warp=W]"),
        seed: int = typer.Option(0, help="Generator seed"),
        samples_out: Path = typer.Option(Path("data/samples.csv"), "--samples-out", help="Samples CSV to write"),
        protocol_out: Path = typer.Option(Path("data/protocol.json"), "--protocol-out", help="Protocol JSON to write"),
        verbose: bool = typer.Option(False, "--verbose", "-v", help="DEBUG logging")):
    """Write a synthetic dataset as a samples CSV and protocol JSON."""
    cfg = _bootstrap(verbose)
    dataset = SyntheticSource.parse(synthetic).build(seed, spread=float(cfg.get("synthetic.spread", 1.0)))
    save_dataset(dataset, samples_out, protocol_out)
    typer.echo(json.dumps({"samples": str(samples_out), "protocol": str(protocol_out),
                           "N": dataset.N, "n": dataset.n, "E": dataset.E, "I": dataset.I}))


@app.command()
@_guarded
def report(path: Path = typer.Argument(..., help="Report JSON written by run or sweep"),
           decimals: Optional[int] = typer.Option(None, help="Decimal places"),
           verbose: bool = typer.Option(False, "--verbose", "-v", help="DEBUG logging")):
    """Re-render a stored report file as a table."""
    cfg = _bootstrap(verbose)
    places = decimals if decimals is not None else int(cfg.get("evaluation.decimals", 2))
    table = render_table(load_reports(path), decimals=places)
    typer.echo(table.to_string(index=False))


def main():
    app()


if __name__ == "__main__":
    main()
