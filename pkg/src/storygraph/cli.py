"""Batch entry point: everything the service does, without a server.

Commands operate on a project directory (the folder holding project.json).
Exit codes: 0 success, 1 domain error, 2 usage error. Reporting commands
accept --format json for machine consumption.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import persistence
from .errors import StoryGraphError
from .evaluation import load_corpus, render_summary_table, run_eval, summarize
from .export import export_bundle
from .graph import classify_topology, parse_graph, validate
from .media import MediaParams, MediaQueue, enqueue_media, graph_with_assets
from .orchestrator import edit_nodes, run_pipeline
from .persistence import load_project, new_project, save_project, take_snapshot
from .service import ServiceConfig, make_backend


def domain_errors(func):
    """Map library failures to exit code 1 with a readable message."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (StoryGraphError, FileNotFoundError, KeyError, ValueError) as exc:
            message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
            raise click.ClickException(f"{type(exc).__name__}: {message}")

    return wrapper


def backend_options(func):
    func = click.option(
        "--backend", "backend_mode", type=click.Choice(["scripted", "remote"]),
        default="scripted", show_default=True, help="Text/media backend.",
    )(func)
    func = click.option("--seed", type=int, default=0, show_default=True,
                        help="Seed for the scripted backend.")(func)
    func = click.option("--base-url", default=None,
                        help="Remote backend endpoint (requires --backend remote).")(func)
    func = click.option("--api-key-env", default="STORYGRAPH_API_KEY", show_default=True,
                        help="Env var holding the remote API key.")(func)
    return func


def build_backend(backend_mode: str, seed: int, base_url: str | None, api_key_env: str):
    return make_backend(backend_mode, seed=seed, base_url=base_url, api_key_env=api_key_env)


def open_project(project_path: Path) -> tuple[Path, persistence.Project]:
    directory = Path(project_path)
    return directory.parent, load_project(directory.parent, directory.name)


def persist(project: persistence.Project, root: Path, reason: str) -> None:
    project.version += 1
    take_snapshot(project, root, reason)
    save_project(project, root)


project_argument = click.argument(
    "project_path", metavar="PROJECT_DIR", type=click.Path(path_type=Path)
)
format_option = click.option(
    "--format", "output_format", type=click.Choice(["text", "json"]),
    default="text", show_default=True,
)


@click.group()
@click.version_option(package_name="storygraph")
def main():
    """Node-based storytelling: graphs, generation, media, export, eval."""


@main.command()
@click.argument("project_path", metavar="PROJECT_DIR", type=click.Path(path_type=Path))
@click.option("--name", default=None, help="Display name (defaults to the directory name).")
@domain_errors
def new(project_path: Path, name: str | None):
    """Create an empty project at PROJECT_DIR."""
    directory = Path(project_path)
    if (directory / "project.json").exists():
        raise click.ClickException(f"{directory} already holds a project")
    project = new_project(name or directory.name, project_id=directory.name)
    save_project(project, directory.parent)
    click.echo(f"created project {project.project_id} at {directory}")


@main.command()
@click.argument("prompt")
@project_argument
@backend_options
@format_option
@domain_errors
def generate(prompt: str, project_path: Path, backend_mode: str, seed: int,
             base_url: str | None, api_key_env: str, output_format: str):
    """Generate a whole story into the project from PROMPT."""
    root, project = open_project(project_path)
    backend = build_backend(backend_mode, seed, base_url, api_key_env)
    run = run_pipeline(prompt, backend)
    project.assets = [replace(a, stale=True) for a in project.assets]
    narrative = run.transcripts[0].response
    project.graph = persistence.attach_assets(
        replace(run.graph, story_context=narrative), project.assets
    )
    project.transcripts.extend(run.transcripts)
    persist(project, root, f"generate: {prompt[:60]}")
    topology = classify_topology(project.graph).value
    if output_format == "json":
        click.echo(json.dumps({
            "topology": topology,
            "nodes": len(project.graph.nodes),
            "version": project.version,
            "warnings": list(run.warnings),
        }))
        return
    click.echo(f"{topology} story with {len(project.graph.nodes)} nodes")
    for warning in run.warnings:
        click.echo(f"warning: {warning}")


@main.command()
@project_argument
@click.option("--nodes", "node_list", required=True,
              help="Comma-separated node ids to rewrite.")
@click.option("--instruction", required=True, help="Edit instruction for the backend.")
@backend_options
@domain_errors
def edit(project_path: Path, node_list: str, instruction: str, backend_mode: str,
         seed: int, base_url: str | None, api_key_env: str):
    """Rewrite the selected nodes' text; structure is preserved."""
    root, project = open_project(project_path)
    selection = [token.strip() for token in node_list.split(",") if token.strip()]
    backend = build_backend(backend_mode, seed, base_url, api_key_env)
    before = {nid: project.graph.node(nid).segment for nid in selection}
    edited = edit_nodes(project.graph, selection, instruction, backend)
    changed = {nid for nid, old in before.items() if edited.node(nid).segment != old}
    project.assets = [
        replace(a, stale=True) if a.node_id in changed else a for a in project.assets
    ]
    project.graph = persistence.attach_assets(edited, project.assets)
    persist(project, root, f"edit: {instruction[:60]}")
    click.echo(f"edited nodes {', '.join(selection)}")


@main.command()
@project_argument
@click.option("--nodes", "node_list", required=True, help="Comma-separated node ids.")
@click.option("--kind", type=click.Choice(["audio", "image", "video"]), required=True)
@click.option("--voice", default=None, help="Voice name (audio only).")
@click.option("--style", default=None, help="Style instructions passed to the backend.")
@click.option("--workers", type=int, default=1, show_default=True)
@backend_options
@format_option
@domain_errors
def media(project_path: Path, node_list: str, kind: str, voice: str | None,
          style: str | None, workers: int, backend_mode: str, seed: int,
          base_url: str | None, api_key_env: str, output_format: str):
    """Generate media for the selected nodes and attach the assets."""
    root, project = open_project(project_path)
    selection = [token.strip() for token in node_list.split(",") if token.strip()]
    backend = build_backend(backend_mode, seed, base_url, api_key_env)
    queue = MediaQueue(
        asset_root=persistence.project_dir(root, project.project_id),
        existing_assets=project.assets,
    )
    params = MediaParams(kind=kind, voice=voice, style_instructions=style)
    enqueue_media(project.graph, selection, params, queue=queue)
    queue.drain(backend, worker_count=workers)

    project.graph = graph_with_assets(project.graph, queue)
    project.assets = list(queue.all_assets())
    project.jobs.extend(queue.job_list())
    project.version += 1
    save_project(project, root)

    jobs = queue.job_list()
    failed = sum(1 for job in jobs if job.status != "done")
    if output_format == "json":
        click.echo(json.dumps([
            {
                "node_id": job.node_id,
                "status": job.status,
                "version": job.asset.version if job.asset else None,
                "uri": job.asset.uri if job.asset else None,
                "duration_s": job.asset.duration_s if job.asset else None,
                "error": job.error,
            }
            for job in jobs
        ]))
    else:
        for job in jobs:
            if job.status == "done":
                suffix = f"v{job.asset.version} {job.asset.uri}"
                if job.asset.duration_s is not None:
                    suffix += f" ({job.asset.duration_s:.1f}s)"
                click.echo(f"{job.node_id}: done {suffix}")
            else:
                click.echo(f"{job.node_id}: failed {job.error}")
    if failed:
        raise click.ClickException(f"{failed} media job(s) failed")


@main.command()
@project_argument
@click.option("--nodes", "node_list", default=None, help="Export only these nodes.")
@click.option("--path", "path_list", default=None,
              help="Export one root-to-sink path (comma-separated ids).")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Destination directory (default: PROJECT_DIR/export).")
@format_option
@domain_errors
def export(project_path: Path, node_list: str | None, path_list: str | None,
           out_dir: Path | None, output_format: str):
    """Write the export bundle: graph, manifest, subtitles, storyboard, assets."""
    root, project = open_project(project_path)
    nodes = [t.strip() for t in node_list.split(",")] if node_list else None
    path = [t.strip() for t in path_list.split(",")] if path_list else None
    destination = out_dir or (Path(project_path) / "export")
    inventory = export_bundle(
        project.graph,
        destination,
        nodes=nodes,
        path=path,
        asset_root=persistence.project_dir(root, project.project_id),
    )
    if output_format == "json":
        click.echo(json.dumps({
            "destination": str(destination),
            "files": list(inventory.files),
            "warnings": list(inventory.warnings),
        }))
        return
    for name in inventory.files:
        click.echo(f"wrote {destination / name}")
    for warning in inventory.warnings:
        click.echo(f"warning: {warning}")


@main.command()
@click.option("--corpus", default="branching", show_default=True,
              help="branching, linear, or a TSV file path.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Concurrent trials.")
@click.option("--node-count/--no-node-count", "check_node_count", default=True,
              show_default=True, help="Require 8-12 nodes for a pass.")
@format_option
@domain_errors
def eval(corpus: str, seed: int, jobs: int, check_node_count: bool, output_format: str):
    """Run the scripted-backend experiment and print the summary table."""
    from .backends import ScriptedBackend

    prompts = load_corpus(corpus)
    records = run_eval(
        prompts, ScriptedBackend(seed=seed), check_node_count=check_node_count, jobs=jobs
    )
    summary = summarize(records)
    label = corpus.capitalize() if corpus in ("branching", "linear") else Path(corpus).stem
    if output_format == "json":
        click.echo(json.dumps({
            "corpus": corpus,
            "k": summary.k,
            "n": summary.n,
            "rate": summary.rate,
            "ci_low": summary.ci_low,
            "ci_high": summary.ci_high,
            "records": [
                {
                    "prompt": r.prompt,
                    "expected": r.expected.value,
                    "observed": getattr(r.observed, "value", str(r.observed)),
                    "node_count": r.node_count,
                    "passed": r.passed,
                }
                for r in records
            ],
        }))
        return
    click.echo(render_summary_table([(label, summary)]))


@main.command()
@click.argument("graph_file", type=click.Path(exists=True, path_type=Path))
@format_option
@domain_errors
def validate_cmd(graph_file: Path, output_format: str):
    """Validate a graph document; exit 0 when clean, 1 otherwise."""
    try:
        graph = parse_graph(graph_file.read_text(encoding="utf-8"), lenient=True)
    except StoryGraphError as exc:
        if output_format == "json":
            click.echo(json.dumps({"ok": False, "violations": [str(exc)]}))
        else:
            click.echo(f"invalid: {exc}")
        sys.exit(1)
    report = validate(graph)
    if output_format == "json":
        click.echo(json.dumps({
            "ok": report.ok,
            "violations": [v.message for v in report.violations],
            "warnings": list(report.warnings),
            "nodes": len(graph.nodes),
            "edges": len(graph.edges),
            "topology": classify_topology(graph).value if graph.nodes else None,
        }))
    else:
        if report.ok:
            topology = classify_topology(graph).value if graph.nodes else "empty"
            click.echo(
                f"OK: {len(graph.nodes)} nodes, {len(graph.edges)} edges, {topology}"
            )
        for violation in report.violations:
            click.echo(f"violation: {violation.message}")
        for warning in report.warnings:
            click.echo(f"warning: {warning}")
    if not report.ok:
        sys.exit(1)


# click uses the function name; "validate" would shadow the library import
main.add_command(validate_cmd, name="validate")


@main.command()
@click.option("--root", "project_root", type=click.Path(path_type=Path),
              default=Path("storygraph-projects"), show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8321, show_default=True)
@click.option("--workers", "media_workers", type=int, default=1, show_default=True,
              help="Media queue worker threads.")
@backend_options
@domain_errors
def serve(project_root: Path, host: str, port: int, media_workers: int,
          backend_mode: str, seed: int, base_url: str | None, api_key_env: str):
    """Run the HTTP service."""
    from .service import serve as run_server

    backend = build_backend(backend_mode, seed, base_url, api_key_env)
    config = ServiceConfig(
        project_root=Path(project_root), backend=backend, worker_count=media_workers
    )
    click.echo(f"serving on http://{host}:{port} (projects in {project_root})")
    run_server(config, host=host, port=port)


if __name__ == "__main__":
    main()
