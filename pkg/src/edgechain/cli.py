"""Command-line entry point.

Exit status: 0 success, 1 configuration or I/O error, 2 audit failure.
The output directory is ``--out``, else ``$EDGECHAIN_OUT``, else
``runs/<subcommand>``.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import click

from . import __version__
from .admission import Scheduler
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .hashing import canonical
from .harness import ExperimentResult, compare_schedulers, mean_by, run_experiment, scale_sweep, sweep_beta
from .ledger import LedgerError, load_chain
from .replay import replay_blocks

OUT_ENV = "EDGECHAIN_OUT"
EXIT_CONFIG = 1
EXIT_AUDIT = 2


@dataclass(frozen=True)
class RunManifest:
    config_path: str | None
    output_dir: str
    subcommand: str
    seeds: tuple[int, ...]
    version: str = __version__

    def write(self, out: Path) -> None:
        (out / "manifest.json").write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    raise SystemExit(code)


def _resolve(config: str | None, seeds: tuple[int, ...], beta: float | None, scheduler: str | None,
             scale: float | None, timeslots: int | None) -> ExperimentConfig:
    try:
        cfg = load_config(config)
        kw = {}
        if seeds:
            kw["seeds"] = tuple(seeds)
        if beta is not None:
            if beta < 1:
                raise ConfigError("pricing.beta", "must be >= 1")
            kw["beta"] = beta
        if scheduler is not None:
            try:
                kw["scheduler"] = Scheduler.parse(scheduler)
            except ValueError as exc:
                raise ConfigError("scheduler", str(exc)) from None
        if scale is not None:
            if scale <= 0:
                raise ConfigError("system.resource_scale", "must be > 0")
            kw["resource_scale"] = scale
        if timeslots is not None:
            if timeslots < 1:
                raise ConfigError("timeslots", "must be >= 1")
            kw["timeslots"] = timeslots
        return cfg.with_(**kw)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, f"config {exc}")


def _prepare(cfg: ExperimentConfig, config: str | None, out: str | None, sub: str) -> Path:
    """Create the output directory and write manifest and config copy
    before any simulation starts."""
    path = Path(out or os.environ.get(OUT_ENV) or Path("runs") / sub)
    try:
        path.mkdir(parents=True, exist_ok=True)
        RunManifest(config, str(path), sub, cfg.seeds).write(path)
        dump_config(cfg, path / "config.yaml")
    except OSError as exc:
        _fail(EXIT_CONFIG, f"cannot write output directory {path}: {exc.strerror or exc}")
    return path


def _finish(result: ExperimentResult) -> None:
    for a in result.audits:
        if not a.ok:
            failed = [k for k, v in a.checks.items() if not v]
            _fail(EXIT_AUDIT, f"audit failed: {', '.join(failed)}; {'; '.join(a.details[:3])}")


_COMMON = (
    click.option("--config", type=click.Path(dir_okay=False), default=None, help="YAML config file."),
    click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory."),
    click.option("--timeslots", type=int, default=None, help="Override the number of timeslots."),
    click.option("--seed", "--seeds", "seeds", multiple=True, type=int,
                 help="Seed; repeat for several. Overrides the config."),
)


def _common(fn):
    for opt in reversed(_COMMON):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Edge resource governance on a permissioned ledger: simulations and audits."""


@main.command()
@_common
@click.option("--beta", type=float, default=None, help="Priority influence factor.")
@click.option("--scheduler", default=None, help="Pricing, FCFS or Priority.")
@click.option("--scale", type=float, default=None, help="Fraction of the total capacity.")
def run(config, out, timeslots, seeds, beta, scheduler, scale) -> None:
    """One full experiment per seed, with ledger, audit and all artifacts."""
    cfg = _resolve(config, seeds, beta, scheduler, scale, timeslots)
    path = _prepare(cfg, config, out, "run")
    result = run_experiment(cfg, path)
    for r, a in zip(result.reports, result.audits):
        click.echo(f"seed {r.seed}: acceptance {r.acceptance_rate:.4f} ({r.accepted}/{r.submitted}), "
                   f"blocks {r.blocks}, audit {'ok' if a.ok else 'FAILED'}")
    click.echo(f"mean acceptance {result.mean_acceptance():.4f}; outputs in {path}")
    _finish(result)


@main.command("sweep-beta")
@_common
@click.option("--beta", "betas", type=float, multiple=True, help="Beta value; repeat to replace the sweep list.")
@click.option("--scheduler", default=None, help="Pricing, FCFS or Priority.")
@click.option("--scale", type=float, default=None, help="Fraction of the total capacity.")
def sweep_beta_cmd(config, out, timeslots, seeds, betas, scheduler, scale) -> None:
    """Acceptance rate against beta (beta_sweep.csv)."""
    cfg = _resolve(config, seeds, None, scheduler, scale, timeslots)
    if betas:
        if any(b < 1 for b in betas):
            _fail(EXIT_CONFIG, "config sweep.beta_values: every beta must be >= 1")
        cfg = cfg.with_(sweep=replace(cfg.sweep, beta_values=tuple(betas)))
    path = _prepare(cfg, config, out, "sweep-beta")
    result = sweep_beta(cfg, path)
    means = mean_by(result.rows, 1)
    for (b,), v in means.items():
        click.echo(f"beta {b:<5g} acceptance {v:.5f}")
    best = max(means, key=means.get)[0]
    click.echo(f"maximum at beta {best:g}; outputs in {path}")
    _finish(result)


@main.command()
@_common
@click.option("--beta", type=float, default=None, help="Comparison beta (default from config).")
@click.option("--scale", type=float, default=None, help="Fraction of the total capacity.")
def compare(config, out, timeslots, seeds, beta, scale) -> None:
    """Pricing against FCFS and Priority scheduling (scheduler_cmp.csv)."""
    cfg = _resolve(config, seeds, None, None, scale, timeslots)
    if beta is not None:
        if beta < 1:
            _fail(EXIT_CONFIG, "config sweep.compare_beta: must be >= 1")
        cfg = cfg.with_(sweep=replace(cfg.sweep, compare_beta=beta))
    path = _prepare(cfg, config, out, "compare")
    result = compare_schedulers(cfg, path)
    for (s,), v in mean_by(result.rows, 1).items():
        click.echo(f"{s:<9} acceptance {v:.5f}")
    click.echo(f"outputs in {path}")
    _finish(result)


@main.command()
@_common
@click.option("--scale", "scales", type=float, multiple=True, help="Capacity fraction; repeat to replace the list.")
@click.option("--beta", type=float, default=None, help="Comparison beta (default from config).")
def scale(config, out, timeslots, seeds, scales, beta) -> None:
    """Acceptance per scheduler as capacity shrinks (scale_sweep.csv)."""
    cfg = _resolve(config, seeds, None, None, None, timeslots)
    sweep = cfg.sweep
    if scales:
        if any(s <= 0 for s in scales):
            _fail(EXIT_CONFIG, "config sweep.scales: every scale must be > 0")
        sweep = replace(sweep, scales=tuple(scales))
    if beta is not None:
        if beta < 1:
            _fail(EXIT_CONFIG, "config sweep.compare_beta: must be >= 1")
        sweep = replace(sweep, compare_beta=beta)
    cfg = cfg.with_(sweep=sweep)
    path = _prepare(cfg, config, out, "scale")
    result = scale_sweep(cfg, path)
    for (sc, s), v in mean_by(result.rows, 2).items():
        click.echo(f"scale {sc:<4g} {s:<9} acceptance {v:.5f}")
    click.echo(f"outputs in {path}")
    _finish(result)


@main.command()
@click.argument("chain_file", type=click.Path(dir_okay=False))
@click.option("--state", type=click.Path(dir_okay=False), default=None,
              help="Saved state to compare with (default: the matching state_*.json next to the chain).")
def replay(chain_file, state) -> None:
    """Rebuild state from a chain file and audit it."""
    try:
        blocks = load_chain(chain_file)
    except OSError as exc:
        _fail(EXIT_CONFIG, f"cannot read {chain_file}: {exc.strerror or exc}")
    except (LedgerError, ValueError) as exc:
        _fail(EXIT_AUDIT, f"corrupt chain file: {exc}")
    try:
        result = replay_blocks(blocks)
    except ValueError as exc:
        _fail(EXIT_AUDIT, f"corrupt chain file: {exc}")
    summary = result.summary()
    ok = result.ok
    chain_path = Path(chain_file)
    state_path = Path(state) if state else chain_path.with_name(
        chain_path.name.replace("chain_", "state_", 1).replace(".jsonl", ".json"))
    if state_path.exists() and state_path != chain_path:
        same = canonical(result.snapshot()) == state_path.read_text().strip()
        summary["state_matches"] = same
        ok = ok and same
    click.echo(json.dumps(summary, indent=2, sort_keys=True))
    click.echo(f"audit {'pass' if ok else 'FAIL'}")
    if not ok:
        raise SystemExit(EXIT_AUDIT)


if __name__ == "__main__":  # pragma: no cover
    main()
