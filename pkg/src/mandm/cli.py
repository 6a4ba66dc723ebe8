"""`mandm` command line: serve, sim, gen-archive, bench-load.

Structured logs go to stderr; data (JSON summaries, bench reports) goes
to stdout or to files. Exit codes: 0 success, 1 validation/config
error, 2 runtime or I/O error.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
import time
from pathlib import Path

import click

from .config import load_config, resolve_config_path
from .errors import ConfigError, MandmError, ValidationError
from .history import HistoryArchive, HistoryLoader
from .report import write_bench_report
from .simulator import run_scenario
from .triplestore import TripleStore

log = logging.getLogger("mandm")

EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValidationError, ConfigError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except (MandmError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_RUNTIME)
    return wrapper


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging to stderr.")
def main(verbose: bool) -> None:
    """Digital-twin monitoring service for an HPC cluster."""
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


@main.command()
@click.option("--config", "config_path", default=None,
              help="Config file (or set MANDM_CONFIG).")
@_exit_codes
def serve(config_path: str | None) -> None:
    """Run the twin service: sim loop, HTTP API, live stream."""
    import uvicorn

    from .server import TwinService, create_app

    cfg = load_config(resolve_config_path(config_path))
    service = TwinService(cfg)
    service.start_ticking()
    app = create_app(service)
    try:
        uvicorn.run(app, host=cfg.server.host, port=cfg.server.port, log_level="info")
    finally:
        service.stop()


@main.command()
@click.option("--config", "config_path", default=None)
@click.option("--ticks", type=int, required=True, help="Number of sim ticks to run.")
@click.option("--realtime", is_flag=True,
              help="Pace ticks at the sim's tick interval in wall time.")
@_exit_codes
def sim(config_path: str | None, ticks: int, realtime: bool) -> None:
    """Run the simulation pipeline offline and print a JSON summary."""
    cfg = load_config(resolve_config_path(config_path))
    sim_cfg = cfg.require_sim()
    store = TripleStore(cfg.store_path) if cfg.store_path else None
    pace = (lambda *_: time.sleep(sim_cfg.tick_interval_s)) if realtime else None
    try:
        result = run_scenario(
            sim_cfg, ticks,
            store=store, archive=cfg.archive,
            usage_cfg=cfg.usage, alert_rules=cfg.alert_rules,
            on_tick=pace,
        )
    finally:
        if store is not None:
            store.close()
    click.echo(json.dumps(result.counts()))


@main.command("gen-archive")
@click.option("--config", "config_path", default=None)
@click.option("--hours", type=float, required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@_exit_codes
def gen_archive(config_path: str | None, hours: float, out_dir: str) -> None:
    """Generate a segment archive offline: floor(hours*3600/interval) files."""
    cfg = load_config(resolve_config_path(config_path))
    sim_cfg = cfg.require_sim()
    interval = cfg.archive.segment_interval_s if cfg.archive else 300
    archive = HistoryArchive(Path(out_dir), interval)
    n_ticks = int(hours * 3600) // sim_cfg.tick_interval_s
    result = run_scenario(
        sim_cfg, n_ticks,
        archive=archive, usage_cfg=cfg.usage, alert_rules=cfg.alert_rules,
    )
    log.info("wrote %d segments to %s", result.segments_written, out_dir)
    click.echo(json.dumps({"segments": result.segments_written, "out": str(out_dir)}))


@main.command("bench-load")
@click.option("--archive", "archive_dir", type=click.Path(exists=True), required=True)
@click.option("--from", "from_ts", type=int, default=0, help="Range start (unix ts).")
@click.option("--to", "to_ts", type=int, default=2**62, help="Range end, exclusive.")
@click.option("--latency-ms", type=float, default=0.0,
              help="Injected per-file latency simulating network/VPN fetch.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable summary.")
@click.option("--report", "report_dir", type=click.Path(), default=None,
              help="Write load_times.csv and load_times.png into this directory.")
@_exit_codes
def bench_load(archive_dir: str, from_ts: int, to_ts: int, latency_ms: float,
               as_json: bool, report_dir: str | None) -> None:
    """Synchronously load a segment range and report timing (never asserts)."""
    archive = HistoryArchive(Path(archive_dir))
    loader = HistoryLoader(archive, per_file_latency_s=latency_ms / 1000.0)
    report = loader.bench_load(from_ts, to_ts)
    if report_dir:
        csv_path, png_path = write_bench_report(report, Path(report_dir))
        log.info("bench report: %s, %s", csv_path, png_path)
    summary = {
        "files": report.files,
        "total_s": round(report.total_s, 6),
        "s_per_file": round(report.s_per_file, 6),
    }
    if as_json:
        click.echo(json.dumps(summary))
    else:
        click.echo(
            f"loaded {summary['files']} files in {summary['total_s']:.2f} s "
            f"({summary['s_per_file']:.4f} s/file)"
        )


if __name__ == "__main__":
    main()
