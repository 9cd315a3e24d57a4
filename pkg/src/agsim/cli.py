"""Configuration parsing, experiment execution, and CSV emission.

Config files are line-oriented ``key = value`` text with ``#`` comments and
comma-separated lists.  Recognized keys: scenario, k, m, trials, seed,
estimators, detectors, eta_list, elapsed_ms_list, out.  Every key except
scenario has a default.  The output CSV is plot-ready, one row per
(estimator, detector, eta, elapsed) cell.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import dataclass

from .errors import ConfigurationError
from .geometry import SCENARIOS
from .harness import (
    DEFAULT_ELAPSED_GRID_S,
    DEFAULT_ETA_SWEEP,
    Report,
    TrialConfig,
    run_experiment,
)
from .propagation import SystemParams

CSV_HEADER = "scenario,estimator,detector,eta,k,m,elapsed_ms,p_out,ci_low,ci_high,trials"

_KNOWN_KEYS = ("scenario", "k", "m", "trials", "seed", "estimators",
               "detectors", "eta_list", "elapsed_ms_list", "out")


@dataclass(frozen=True)
class RunConfig:
    """Validated textual configuration, ready to map onto a TrialConfig."""

    scenario: str
    k: int = 8
    m: int = 64
    trials: int = 2000
    seed: int = 0
    estimators: tuple[str, ...] = ("TD", "ZC")
    detectors: tuple[str, ...] = ("ZF", "VMS")
    eta_list: tuple[float, ...] = DEFAULT_ETA_SWEEP
    elapsed_ms_list: tuple[float, ...] = tuple(1e3 * t for t in DEFAULT_ELAPSED_GRID_S)
    out: str = "outage.csv"


def _fail(line_no: int, message: str):
    raise ConfigurationError(f"line {line_no}: {message}")


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines into a RunConfig; errors carry line numbers."""
    values: dict[str, object] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            _fail(line_no, f"expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KNOWN_KEYS:
            _fail(line_no, f"unknown key {key!r} (known: {', '.join(_KNOWN_KEYS)})")
        if key in values:
            _fail(line_no, f"duplicate key {key!r}")
        if not value:
            _fail(line_no, f"empty value for {key!r}")
        try:
            values[key] = _convert(key, value)
        except ConfigurationError:
            raise
        except ValueError as exc:
            _fail(line_no, f"bad value for {key!r}: {exc}")
        if key == "scenario" and values[key] not in SCENARIOS:
            _fail(line_no, f"scenario must be one of {sorted(SCENARIOS)}, got {value!r}")
    if "scenario" not in values:
        raise ConfigurationError("missing required key 'scenario'")
    cfg = RunConfig(**values)  # type: ignore[arg-type]
    _validate(cfg)
    return cfg


def _convert(key: str, value: str):
    if key in ("k", "m", "trials", "seed"):
        return int(value)
    if key in ("eta_list", "elapsed_ms_list"):
        return tuple(float(v.strip()) for v in value.split(","))
    if key in ("estimators", "detectors"):
        return tuple(v.strip().upper() for v in value.split(","))
    return value  # scenario, out


def _validate(cfg: RunConfig) -> None:
    if cfg.trials < 1:
        raise ConfigurationError("trials must be >= 1")
    if cfg.k < 1:
        raise ConfigurationError("k must be >= 1")
    bad = set(cfg.estimators) - {"TD", "ZC"}
    if bad:
        raise ConfigurationError(f"unknown estimators: {sorted(bad)}")
    bad = set(cfg.detectors) - {"ZF", "VMS"}
    if bad:
        raise ConfigurationError(f"unknown detectors: {sorted(bad)}")
    for eta in cfg.eta_list:
        if not -1.0 <= eta <= 1.0:
            raise ConfigurationError(f"eta {eta} outside [-1, 1]")
    for t in cfg.elapsed_ms_list:
        if t < 0:
            raise ConfigurationError(f"elapsed time {t} ms is negative")


def to_trial_config(cfg: RunConfig, seed: int | None = None) -> TrialConfig:
    return TrialConfig(
        scenario=SCENARIOS[cfg.scenario],
        k=cfg.k,
        params=SystemParams(n_antennas=cfg.m),
        estimators=cfg.estimators,
        detectors=cfg.detectors,
        eta_values=cfg.eta_list,
        elapsed_grid_s=tuple(sorted(t / 1e3 for t in cfg.elapsed_ms_list)),
        trials=cfg.trials,
        master_seed=cfg.seed if seed is None else seed,
    )


def _format(x: float) -> str:
    return f"{x:.6g}"


def render_csv(cfg: RunConfig, report: Report) -> str:
    """CSV text, rows sorted by (estimator, detector, eta, elapsed_ms)."""
    lines = [CSV_HEADER]
    for est, det, eta, elapsed_s in sorted(report.cells):
        stats = report.cells[(est, det, eta, elapsed_s)]
        lines.append(",".join([
            cfg.scenario, est, det, _format(eta), str(cfg.k), str(cfg.m),
            _format(elapsed_s * 1e3), _format(stats.p_out),
            _format(stats.ci_low), _format(stats.ci_high), str(report.trials),
        ]))
    return "\n".join(lines) + "\n"


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".outage-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: RunConfig, workers: int | None = None, seed: int | None = None,
        stream=None) -> int:
    """Execute the experiment and write the outage CSV atomically."""
    stream = stream if stream is not None else sys.stdout
    workers = workers if workers is not None else (os.cpu_count() or 1)
    trial_config = to_trial_config(cfg, seed)
    report = run_experiment(trial_config, workers=workers)
    try:
        _write_atomic(cfg.out, render_csv(cfg, report))
    except OSError as exc:
        print(f"error: cannot write {cfg.out}: {exc}", file=sys.stderr)
        return 1
    for est, det, eta, elapsed_s in sorted(report.cells):
        stats = report.cells[(est, det, eta, elapsed_s)]
        print(f"{cfg.scenario} {est:>2} {det:>3} eta={_format(eta):<5} "
              f"t={_format(elapsed_s * 1e3)} ms  p_out={_format(stats.p_out)} "
              f"[{_format(stats.ci_low)}, {_format(stats.ci_high)}]", file=stream)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="simulate",
        description="Multiuser air-ground uplink outage simulation")
    parser.add_argument("--config", required=True, help="path to key=value config file")
    parser.add_argument("--workers", type=int, default=None,
                        help="parallel trial workers (default: CPU count)")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed override (beats config and AGSIM_SEED)")
    args = parser.parse_args(argv)

    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    seed = args.seed
    if seed is None and "AGSIM_SEED" in os.environ:
        try:
            seed = int(os.environ["AGSIM_SEED"])
        except ValueError:
            print("error: AGSIM_SEED must be an integer", file=sys.stderr)
            return 2

    try:
        return run(cfg, workers=args.workers, seed=seed)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
