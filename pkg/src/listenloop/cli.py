"""Operator command line: ingestion, iteration control, consensus,
reporting (tables, CSV, and figures), simulation, and the service runner.

Every command is a thin shell over the library modules. Usage errors exit
with code 2 (click's default); runtime failures print one machine-parsable
``error: <Type>: <message>`` line on stderr and exit 1.
"""

from __future__ import annotations

import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from . import reports
from .config import AppConfig, load_config
from .consensus import run_consensus_for_iteration
from .domain import AudioRecord
from .engine import ActiveLearningEngine, EngineConfig
from .errors import ListenLoopError
from .ingestion import (
    EmbeddingPool,
    audio_id_for,
    load_manifest,
    load_sidecar,
    parse_chunk_filename,
)
from .partition import (
    PartitionConfig,
    assign_disjoint_sets,
    num_disjoint_sets,
    select_window,
    split_labeled,
)
from .persistence import Database
from .simulator import SimConfig, compare_strategies, run_simulation, standard_config


def _fail(exc: BaseException) -> None:
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(1)


def _echo(text: str) -> None:
    if os.environ.get("NO_COLOR"):
        click.echo(click.unstyle(text))
    else:
        click.echo(text)


def _parse_when(value: str) -> datetime:
    dt = datetime.fromisoformat(value)
    return dt if dt.tzinfo else dt.replace(tzinfo=timezone.utc)


class _Context:
    def __init__(self, config_path: str | None):
        self.config_path = config_path
        self._config: AppConfig | None = None

    @property
    def config(self) -> AppConfig:
        if self._config is None:
            self._config = load_config(self.config_path)
        return self._config

    def open_db(self) -> Database:
        db = Database(self.config.storage)
        db.migrate()
        return db

    def load_pool(self) -> EmbeddingPool:
        pool = EmbeddingPool()
        for sidecar in self.config.sidecars:
            with open(sidecar, "rb") as fh:
                pool.extend(load_sidecar(fh))
        for manifest in self.config.manifests:
            with open(manifest) as fh:
                pool.extend(load_manifest(fh))
        return pool


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Path to the YAML config file.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Budget-constrained active-learning labeling for audio pools."""
    ctx.obj = _Context(config_path)


@main.command()
@click.pass_obj
def migrate(ctx: _Context) -> None:
    """Create or upgrade the storage schema."""
    try:
        db = Database(ctx.config.storage)
        version = db.migrate()
        _echo(f"storage {ctx.config.storage} at schema v{version}")
    except ListenLoopError as exc:
        _fail(exc)


@main.command()
@click.option("--sidecar", "sidecars", multiple=True, type=click.Path(exists=True),
              help="Binary embedding sidecar file(s).")
@click.option("--manifest", "manifests", multiple=True, type=click.Path(exists=True),
              help="Text manifest variant(s).")
@click.option("--duration", default=10.0, show_default=True, help="Chunk duration in seconds.")
@click.option("--sampling-rate", default=44100, show_default=True)
@click.option("--bits-per-sample", default=16, show_default=True)
@click.option("--channels", default=1, show_default=True)
@click.pass_obj
def ingest(ctx: _Context, sidecars, manifests, duration, sampling_rate,
           bits_per_sample, channels) -> None:
    """Register sidecar audios in the catalog (nodes auto-created)."""
    try:
        db = ctx.open_db()
        records = []
        for path in sidecars:
            with open(path, "rb") as fh:
                records.extend(load_sidecar(fh))
        for path in manifests:
            with open(path) as fh:
                records.extend(load_manifest(fh))
        if not records:
            raise ValueError("nothing to ingest; pass --sidecar or --manifest")
        path_id = db.ensure_path(ctx.config.audio_root or ".")
        audios = []
        for rec in records:
            filename = f"{rec.audio_id}.wav"
            node_id, recorded_at = parse_chunk_filename(filename)
            db.register_node(node_id)
            audios.append(AudioRecord(
                audio_id=audio_id_for(filename), filename=filename, node_id=node_id,
                recorded_at=recorded_at, duration=duration, sampling_rate=sampling_rate,
                bits_per_sample=bits_per_sample, channels=channels, path_id=path_id,
            ))
        count = db.add_audios(audios)
        _echo(f"ingested {count} audios into {ctx.config.storage}")
    except (ListenLoopError, ValueError, OSError) as exc:
        _fail(exc)


@main.command()
@click.option("--node", required=True, help="Recording node to iterate on.")
@click.option("--from", "window_from", required=True, help="Window start (ISO-8601 UTC).")
@click.option("--to", "window_to", required=True, help="Window end (ISO-8601 UTC).")
@click.option("--budget", type=int, default=None, help="Proposals this iteration.")
@click.option("--iteration-id", default=None, help="Explicit id (replays if committed).")
@click.option("--json", "as_json", is_flag=True, help="Structured output.")
@click.pass_obj
def iterate(ctx: _Context, node, window_from, window_to, budget, iteration_id, as_json) -> None:
    """Run one AL iteration and print its summary."""
    try:
        db = ctx.open_db()
        pool = ctx.load_pool()
        engine = ActiveLearningEngine(db, pool, EngineConfig(
            budget=ctx.config.budget, n_smax=ctx.config.n_smax,
            n_mmax=ctx.config.n_mmax, seed=ctx.config.seed,
        ))
        record = engine.run_iteration(
            node, _parse_when(window_from), _parse_when(window_to),
            budget=budget, iteration_id=iteration_id,
        )
        if as_json:
            click.echo(json.dumps(record.summary(), sort_keys=True))
        else:
            for line in reports.iteration_summary_lines(record):
                _echo(line)
    except (ListenLoopError, ValueError, OSError) as exc:
        _fail(exc)


@main.command()
@click.option("--iteration", "iteration_id", required=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def consensus(ctx: _Context, iteration_id, as_json) -> None:
    """Compute consensus for an iteration's proposals and promote medoids."""
    try:
        db = ctx.open_db()
        run = run_consensus_for_iteration(db, iteration_id)
        payload = {
            "iteration_id": iteration_id,
            "outcomes": len(run.outcomes),
            "promoted": run.promoted,
            "consensus_yield": run.consensus_yield,
        }
        if as_json:
            click.echo(json.dumps(payload, sort_keys=True))
        else:
            _echo(
                f"iteration {iteration_id}: {run.promoted}/{len(run.outcomes)} proposals"
                f" promoted (yield {run.consensus_yield:.2f})"
            )
    except (ListenLoopError, ValueError) as exc:
        _fail(exc)


@main.command()
@click.option("--histogram", is_flag=True, help="Tag-frequency histogram.")
@click.option("--projection", "projection_iteration", default=None,
              help="2D projection for the given iteration id.")
@click.option("--plan", "plan_window", nargs=3, type=str, default=None,
              help="Partition preview: NODE FROM TO (ISO-8601).")
@click.option("--top", default=50, show_default=True, help="Histogram classes to keep.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Directory for CSV + PNG outputs.")
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def report(ctx: _Context, histogram, projection_iteration, plan_window, top,
           out_dir, as_json) -> None:
    """Render reports as tables, with CSV and figure files under --out."""
    try:
        if not histogram and projection_iteration is None and not plan_window:
            raise ValueError(
                "pick a report: --histogram, --projection <iteration>, or --plan NODE FROM TO"
            )
        db = ctx.open_db()
        out = Path(out_dir) if out_dir else None
        if histogram:
            entries = db.tag_frequency_histogram(top)
            if as_json:
                click.echo(json.dumps(reports.histogram_rows(entries), sort_keys=True))
            else:
                for class_id, name, count in entries:
                    _echo(f"{count:>8}  {name} (class {class_id})")
            if out:
                csv_path = reports.write_csv(reports.histogram_rows(entries), out / "histogram.csv")
                fig_path = reports.render_histogram_figure(entries, out / "histogram.png")
                _echo(f"wrote {csv_path} and {fig_path}")
        if projection_iteration is not None:
            pool = ctx.load_pool()
            rows = reports.projection_rows(db, pool, projection_iteration)
            if as_json:
                click.echo(json.dumps(rows, sort_keys=True))
            else:
                by_role: dict[str, int] = {}
                for row in rows:
                    by_role[row["role"]] = by_role.get(row["role"], 0) + 1
                _echo(f"projection of {projection_iteration}: " + ", ".join(
                    f"{role}={count}" for role, count in sorted(by_role.items())
                ))
            if out:
                csv_path = reports.write_csv(rows, out / "projection.csv")
                fig_path = reports.render_projection_figure(
                    rows, out / "projection.png",
                    title=f"Iteration {projection_iteration}",
                )
                _echo(f"wrote {csv_path} and {fig_path}")
        if plan_window:
            node, frm, to = plan_window
            pool = ctx.load_pool()
            s_w = select_window(db, node, _parse_when(frm), _parse_when(to))
            _, s_wnh = split_labeled(s_w, (l.audio_id for l in db.labeled_audios()))
            n_ds = num_disjoint_sets(len(s_wnh), PartitionConfig(ctx.config.n_smax))
            if n_ds == 0:
                _echo("window has no unlabeled audios; nothing to partition")
                return
            plan = assign_disjoint_sets(
                pool.subset(sorted(s_wnh)), n_ds, n_smax=ctx.config.n_smax
            )
            if as_json:
                click.echo(json.dumps(reports.plan_rows(plan), sort_keys=True))
            else:
                for line in reports.plan_report_lines(plan):
                    _echo(line)
            if out:
                csv_path = reports.write_csv(reports.plan_rows(plan), out / "plan.csv")
                _echo(f"wrote {csv_path}")
    except (ListenLoopError, ValueError, OSError) as exc:
        _fail(exc)


@main.command()
@click.option("--seeds", default=1, show_default=True, help="Seeds to run.")
@click.option("--strategy", default="mal_mf", show_default=True,
              type=click.Choice(["mal_mf", "random"]))
@click.option("--strategy-compare", is_flag=True,
              help="Run mal_mf and random paired over the seeds.")
@click.option("--iterations", default=None, type=int)
@click.option("--budget", default=None, type=int)
@click.option("--classes", default=None, type=int)
@click.option("--per-class", default=None, type=int)
@click.option("--noise", default=None, type=float)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Directory for CSV/JSON + figure outputs.")
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def simulate(ctx: _Context, seeds, strategy, strategy_compare, iterations, budget,
             classes, per_class, noise, out_dir, as_json) -> None:
    """Closed-loop simulation with oracle labelers."""
    try:
        overrides = {}
        if iterations is not None:
            overrides["iterations"] = iterations
        if budget is not None:
            overrides["budget"] = budget
        if classes is not None:
            overrides["k_classes"] = classes
        if per_class is not None:
            overrides["per_class"] = per_class
        if noise is not None:
            overrides["labeler_noise"] = noise
        config = standard_config(strategy=strategy, **overrides)
        out = Path(out_dir) if out_dir else None
        if strategy_compare:
            comparison = compare_strategies(config, seeds=list(range(seeds)))
            if as_json:
                click.echo(json.dumps(comparison.to_dict(), sort_keys=True))
            else:
                for line in reports.comparison_lines(comparison):
                    _echo(line)
            if out:
                csv_path = reports.write_csv(
                    reports.comparison_rows(comparison), out / "comparison.csv"
                )
                fig_path = reports.render_accuracy_figure(comparison, out / "comparison.png")
                _echo(f"wrote {csv_path} and {fig_path}")
        else:
            sim_report = run_simulation(SimConfig(**{**overrides, "strategy": strategy}))
            if as_json:
                click.echo(sim_report.to_json())
            else:
                for m in sim_report.metrics:
                    _echo(
                        f"iter {m.iteration:>3}: proposals={m.proposals}"
                        f" labeled={m.labeled_total}"
                        f" accuracy={m.propagation_accuracy:.4f}"
                        f" yield={m.consensus_yield:.2f}"
                    )
            if out:
                out.mkdir(parents=True, exist_ok=True)
                (out / "simulation.json").write_text(sim_report.to_json())
                _echo(f"wrote {out / 'simulation.json'}")
    except (ListenLoopError, ValueError, OSError) as exc:
        _fail(exc)


@main.command()
@click.option("--port", default=None, type=int, help="Override the configured port.")
@click.pass_obj
def serve(ctx: _Context, port) -> None:
    """Run the HTTP service."""
    try:
        import uvicorn

        from .service import app_from_config

        app = app_from_config(ctx.config)
        uvicorn.run(app, host="0.0.0.0", port=port or ctx.config.port, log_level="info")
    except (ListenLoopError, ValueError, OSError) as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
