"""
The ``mcdetect`` command line.

Each subcommand runs one experiment and writes its CSV files, together
with a ``manifest.json`` recording what was run, into the output directory.
"""

from __future__ import annotations

from enum import Enum
from importlib import metadata
from pathlib import Path
from typing import TYPE_CHECKING, Any
import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time

from attrs import field

from mcdetect import config, exceptions, experiments
from mcdetect._attrs import frozen

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

#: Names the default output directory when ``--out`` is not given.
OUTPUT_DIR_ENV = "MCDETECT_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"

ROC_COLUMNS = (
    "detector",
    "mu",
    "target_pfa",
    "tau3",
    "achieved_pfa",
    "pfa_ci_low",
    "pfa_ci_high",
    "pm",
    "pm_ci_low",
    "pm_ci_high",
)
SWEEP_COLUMNS = (
    "K",
    "detector",
    "target_pfa",
    "achieved_pfa",
    "pm",
    "pm_ci_low",
    "pm_ci_high",
)
CHANNEL_COLUMNS = (
    "kb",
    "t",
    "analytic_mean",
    "simulated_mean",
    "standard_error",
    "relative_gap",
    "asymptote",
)
POISSON_COLUMNS = (
    "kb",
    "t",
    "analytic_mean",
    "empirical_mean",
    "tv_distance",
    "trials",
)
HISTOGRAM_COLUMNS = ("kb", "count", "frequency", "poisson")
THRESHOLD_COLUMNS = (
    "detector",
    "mu",
    "target_pfa",
    "tau3",
    "achieved_pfa",
    "samples",
)

_DISTRIBUTIONS = ("mcdetect", "numpy", "scipy", "attrs", "rpds-py")


class Experiment(str, Enum):
    VALIDATE_CHANNEL = "validate-channel"
    VALIDATE_POISSON = "validate-poisson"
    ROC = "roc"
    SWEEP_K = "sweep-k"
    CALIBRATE = "calibrate"


@frozen
class RunConfig:
    """
    One invocation of the command line.

    ``seed`` and ``workers``, when given, override the configuration file,
    as do each of the ``section.key=value`` ``overrides`` (in order).
    """

    experiment: Experiment = field(converter=Experiment)
    out: Path = field(converter=Path)
    config_path: Path | None = None
    seed: int | None = None
    workers: int | None = None
    overrides: tuple[str, ...] = field(default=(), converter=tuple)

    def assignments(self) -> list[str]:
        assignments = list(self.overrides)
        if self.seed is not None:
            assignments.append(f"run.seed={self.seed}")
        if self.workers is not None:
            assignments.append(f"run.workers={self.workers}")
        return assignments


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return repr(float(value))
    return value


def write_csv(
    path: Path,
    fieldnames: Sequence[str],
    rows: Iterable[Mapping[str, Any]],
) -> None:
    """
    Write ``rows`` with a header, in the column order given.

    Floats are written in their shortest form which reads back exactly.
    """
    with path.open("w", newline="", encoding="utf-8") as file:
        writer = csv.DictWriter(
            file,
            fieldnames=fieldnames,
            lineterminator="\n",
        )
        writer.writeheader()
        for row in rows:
            writer.writerow({name: _cell(row[name]) for name in fieldnames})
    logger.info("wrote %s", path)


def _versions() -> dict[str, str | None]:
    versions: dict[str, str | None] = {"python": platform.python_version()}
    for name in _DISTRIBUTIONS:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def config_hash(table: config.Table) -> str:
    """
    A digest of every setting which can change an experiment's output.

    Defaults are included, so that spelling a default out does not change
    the digest, and the worker count is left out.
    """
    resolved = {}
    for key in config.config_schema():
        value = table.get(key.name, key.default)
        if value is not None and key.name not in config.EXECUTION_KEYS:
            resolved[key.name] = value
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_manifest(path: Path, **entries: Any) -> None:
    """
    Record a run next to its outputs.
    """
    manifest = {"versions": _versions(), **entries}
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.info("wrote %s", path)


def _validate_channel(cfg: experiments.ExperimentConfig, out: Path):
    rows = experiments.validate_channel(cfg)
    write_csv(
        out / "channel_validation.csv",
        CHANNEL_COLUMNS,
        (row.row() for row in rows),
    )
    return {"rows": len(rows)}


def _validate_poisson(cfg: experiments.ExperimentConfig, out: Path):
    results = experiments.validate_poisson(cfg)
    write_csv(
        out / "poisson_validation.csv",
        POISSON_COLUMNS,
        (result.row() for result in results),
    )
    write_csv(
        out / "poisson_histogram.csv",
        HISTOGRAM_COLUMNS,
        (row for result in results for row in result.histogram_rows()),
    )
    return {"rows": len(results)}


def _roc(cfg: experiments.ExperimentConfig, out: Path):
    result = experiments.run_roc(cfg)
    write_csv(out / "roc.csv", ROC_COLUMNS, result.rows())
    return {
        "rows": len(result.points),
        "excluded_pfa_targets": list(result.excluded),
    }


def _sweep_k(cfg: experiments.ExperimentConfig, out: Path):
    points = experiments.sweep_k(cfg)
    write_csv(
        out / "sweepk.csv",
        SWEEP_COLUMNS,
        (point.row() for point in points),
    )
    return {"rows": len(points)}


def _calibrate(cfg: experiments.ExperimentConfig, out: Path):
    rows = experiments.calibrate(cfg)
    write_csv(
        out / "thresholds.csv",
        THRESHOLD_COLUMNS,
        (row.row() for row in rows),
    )
    return {"rows": len(rows)}


_EXPERIMENTS: dict[
    Experiment,
    Callable[[experiments.ExperimentConfig, Path], dict[str, Any]],
] = {
    Experiment.VALIDATE_CHANNEL: _validate_channel,
    Experiment.VALIDATE_POISSON: _validate_poisson,
    Experiment.ROC: _roc,
    Experiment.SWEEP_K: _sweep_k,
    Experiment.CALIBRATE: _calibrate,
}


def _error(error: BaseException) -> dict[str, str]:
    return {"type": type(error).__name__, "message": str(error)}


def run(run_config: RunConfig) -> int:
    """
    Run one experiment, returning the process exit status.

    The manifest is written whether or not the experiment succeeds.
    """
    started = time.perf_counter()
    out = run_config.out
    out.mkdir(parents=True, exist_ok=True)
    entries: dict[str, Any] = {
        "experiment": run_config.experiment.value,
        "config_path": (
            None
            if run_config.config_path is None
            else str(run_config.config_path)
        ),
        "overrides": run_config.assignments(),
        "config_hash": None,
        "seed": None,
        "workers": None,
    }

    def finish(status: str, code: int, **more: Any) -> int:
        write_manifest(
            out / "manifest.json",
            **entries,
            **more,
            status=status,
            wall_time=time.perf_counter() - started,
        )
        return code

    try:
        if run_config.config_path is None:
            text = config.default_text()
        else:
            text = run_config.config_path.read_text()
        table = config.parse_table(text, run_config.assignments())
        cfg = config.from_table(table)
    except exceptions.InvalidConfiguration as error:
        logger.error("%s", error)  # noqa: TRY400
        return finish("invalid-configuration", 2, error=_error(error))
    except OSError as error:
        logger.error("cannot read configuration: %s", error)  # noqa: TRY400
        return finish("invalid-configuration", 2, error=_error(error))

    entries.update(
        config_hash=config_hash(table),
        seed=cfg.seed,
        workers=cfg.workers,
    )
    logger.info(
        "running %s with seed %d on %d workers",
        run_config.experiment.value,
        cfg.seed,
        cfg.workers,
    )
    try:
        summary = _EXPERIMENTS[run_config.experiment](cfg, out)
    except Exception as error:
        logger.exception("%s failed", run_config.experiment.value)
        return finish("failed", 1, error=_error(error))
    return finish("ok", 0, **summary)


def schema_text() -> str:
    """
    A table of every configuration key.
    """
    lines = []
    for key in config.config_schema():
        if key.required:
            default = "required"
        elif key.default is None:
            default = "optional"
        else:
            default = f"default {key.default!r}"
        unit = f" [{key.unit}]" if key.unit else ""
        lines.append(
            f"{key.name}{unit}: {key.kind.value}, {default}\n"
            f"    {key.description}",
        )
    return "\n".join(lines) + "\n"


def parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcdetect",
        description="Molecular communication target detection experiments.",
        epilog=(
            "With network.topology = resample (the default) every trial "
            "draws new sensors and rebuilds the candidate table of the "
            "generalized likelihood ratio, which dominates the run time at "
            "the default scale. Use --set network.topology=fixed, or a "
            "smaller grid.per_axis and grid.mu_points, for quick runs."
        ),
    )
    parser.add_argument(
        "experiment",
        nargs="?",
        choices=[each.value for each in Experiment],
        help="the experiment to run",
    )
    parser.add_argument(
        "--config",
        type=Path,
        help="a TOML configuration file (default: the bundled defaults)",
    )
    parser.add_argument(
        "--out",
        type=Path,
        help=(
            f"the output directory (default: ${OUTPUT_DIR_ENV}, "
            f"or {DEFAULT_OUTPUT_DIR!r})"
        ),
    )
    parser.add_argument("--seed", type=int, help="override run.seed")
    parser.add_argument("--workers", type=int, help="override run.workers")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        dest="overrides",
        metavar="SECTION.KEY=VALUE",
        help="override one configuration key (may be repeated)",
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    parser.add_argument(
        "--schema",
        action="store_true",
        help="describe every configuration key and exit",
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    arguments = parser()
    args = arguments.parse_args(argv)

    if args.schema:
        sys.stdout.write(schema_text())
        return 0
    if args.experiment is None:
        arguments.error("an experiment is required")

    logging.basicConfig(
        level=args.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.captureWarnings(True)

    out = args.out
    if out is None:
        out = Path(os.environ.get(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR))
    return run(
        RunConfig(
            experiment=args.experiment,
            out=out,
            config_path=args.config,
            seed=args.seed,
            workers=args.workers,
            overrides=args.overrides,
        ),
    )
