"""Operator-facing command surface.

Exit codes are stable: 0 ok, 2 parse/format error, 3 uniqueness failure,
4 provider error, 5 inconsistency verdict (only with
``--fail-on-inconsistent``), 6 simulation failure. Commands never touch
the network unless ``--provider`` or ``--embedder service`` is given.
"""
from __future__ import annotations

import functools
import json
import re
import sys
from pathlib import Path

import click

from . import consistency, ingest, sim, sop
from .errors import FormatError, ProviderFailure, SimulationError, TracesmithError
from .model import dump_trace, load_trace, trace_to_dict, TaskDefinition
from .provider import CassetteStore, Gateway
from .signer import (
    ElementNotFound,
    NotUnique,
    StabilityPolicy,
    build_config,
    config_to_dict,
    load_config,
    save_config,
)

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_NOT_UNIQUE = 3
EXIT_PROVIDER = 4
EXIT_INCONSISTENT = 5
EXIT_SIMULATION = 6


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, NotUnique):
        return EXIT_NOT_UNIQUE
    if isinstance(exc, ProviderFailure):
        return EXIT_PROVIDER
    if isinstance(exc, (SimulationError, ElementNotFound)):
        return EXIT_SIMULATION
    return EXIT_FORMAT


def output_options(fn):
    @click.option("--json", "as_json", is_flag=True, help="Machine-readable JSON on stdout.")
    @click.option("--quiet", is_flag=True, help="Suppress human-readable output.")
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (TracesmithError, ValueError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code_for(exc))

    return wrapper


def _emit(payload: dict, human: str, *, as_json: bool, quiet: bool) -> None:
    if as_json:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    elif not quiet:
        click.echo(human)


def _load_toml_style(path: Path) -> dict[str, dict[str, str]]:
    """Flat ``[section]`` / ``key = value`` config file parser."""
    sections: dict[str, dict[str, str]] = {}
    current = sections.setdefault("", {})
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1].strip(), {})
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        value = value.strip()
        if len(value) >= 2 and value[0] in "\"'" and value[-1] == value[0]:
            value = value[1:-1]
        current[key.strip()] = value
    return sections


def _settings(settings_path: str | None) -> dict[str, dict[str, str]]:
    path = Path(settings_path) if settings_path else Path("tracesmith.toml")
    if path.exists():
        return _load_toml_style(path)
    if settings_path:
        raise FormatError(f"settings file not found: {settings_path}")
    return {}


def _gateway(settings: dict) -> Gateway:
    provider_cfg = settings.get("provider", {})
    mode = provider_cfg.get("mode", "live")
    cassette_path = provider_cfg.get("cassette")
    cassette = CassetteStore(cassette_path) if cassette_path else None
    return Gateway(
        complete_url=provider_cfg.get("complete_url"),
        embed_url=provider_cfg.get("embed_url"),
        mode=mode,
        cassette=cassette,
    )


def _embedder_for(name: str, settings: dict):
    if name == "service":
        return consistency.service_embedder(_gateway(settings))
    return consistency.baseline_embedder()


@click.group()
@click.version_option(package_name="tracesmith")
def main() -> None:
    """Demonstration-to-SOP compiler, element signer, and trace-consistency tools."""


@main.command("ingest")
@click.argument("recording", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="Write the ingest report JSON here.")
@output_options
def ingest_cmd(recording: str, out: str | None, as_json: bool, quiet: bool) -> None:
    """Parse and filter a recorder export."""
    rec = ingest.load_recording(recording)
    report = ingest.filter_irrelevant(rec)
    payload = ingest.report_to_dict(report)
    if out:
        Path(out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    dropped = ", ".join(f"{i}:{r}" for i, r in report.dropped) or "none"
    _emit(
        payload,
        f"title: {rec.title!r}\nsteps kept: {len(report.recording.steps)} of {len(rec.steps)}\n"
        f"dropped: {dropped}",
        as_json=as_json,
        quiet=quiet,
    )


@main.group("sop")
def sop_group() -> None:
    """SOP generation and instantiation."""


@sop_group.command("generate")
@click.option("--demo", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--task-example", required=True, help="Concrete example task description.")
@click.option("--task-general", required=True, help="General task description for the SOP.")
@click.option("--offline", "mode", flag_value="offline", default=True, help="Deterministic fallback generator (default).")
@click.option("--provider", "mode", flag_value="provider", help="Generate through the completion provider.")
@click.option("--out", type=click.Path(dir_okay=False), help="Write sop.json here.")
@click.option("--settings", "settings_path", type=click.Path(), help="tracesmith.toml-style settings file.")
@output_options
def sop_generate(mode, demo, task_example, task_general, out, settings_path, as_json, quiet) -> None:
    """Compile a demonstration into an SOP template."""
    task = TaskDefinition(example_description=task_example, general_description=task_general)
    report = ingest.filter_irrelevant(ingest.load_recording(demo))
    if mode == "provider":
        gateway = _gateway(_settings(settings_path))
        prompt = sop.build_prompt(task, report.recording)
        template = sop.parse_sop_response(gateway.complete(prompt))
    else:
        template = sop.generate_fallback_sop(task, report.recording)
    if out:
        sop.save_template(template, out)
    warnings = [f"unbound placeholder <{n}>" for n in template.unbound_placeholders()]
    warnings += [f"parameter {n!r} unused" for n in template.unused_params()]
    for w in warnings:
        click.echo(f"warning: {w}", err=True)
    payload = sop.template_to_dict(template) | {"warnings": warnings}
    _emit(
        payload,
        "\n".join(f"{i + 1}. {s}" for i, s in enumerate(template.steps)),
        as_json=as_json,
        quiet=quiet,
    )


@sop_group.command("instantiate")
@click.option("--template", "template_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--params", "params_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--strict", is_flag=True, help="Error on unresolved placeholders or unused params.")
@click.option("--out", type=click.Path(dir_okay=False), help="Write the instance JSON here.")
@output_options
def sop_instantiate(template_path, params_path, strict, out, as_json, quiet) -> None:
    """Fill template placeholders with concrete parameter values."""
    template = sop.load_template(template_path)
    try:
        params = json.loads(Path(params_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{params_path}: not valid JSON: {exc}") from exc
    if not isinstance(params, dict):
        raise FormatError(f"{params_path}: params must be a JSON object")
    instance = sop.instantiate(template, {str(k): str(v) for k, v in params.items()}, strict=strict)
    for w in instance.warnings:
        click.echo(f"warning: {w}", err=True)
    if out:
        sop.save_instance(instance, out)
    _emit(
        sop.instance_to_dict(instance),
        "\n".join(f"{i + 1}. {s}" for i, s in enumerate(instance.steps)),
        as_json=as_json,
        quiet=quiet,
    )


def _load_snapshot_map(directory: Path) -> dict:
    """Snapshot per SOP step index: either ``<index>.html`` files or a
    pages.json mapping ``{"<index>": "relative.html"}``."""
    from .dom import load_snapshot

    mapping_file = directory / "pages.json"
    snapshots = {}
    if mapping_file.exists():
        mapping = json.loads(mapping_file.read_text(encoding="utf-8"))
        cache: dict[str, object] = {}
        for idx, rel in mapping.items():
            if rel not in cache:
                cache[rel] = load_snapshot(directory / rel)
            snapshots[int(idx)] = cache[rel]
        return snapshots
    for path in sorted(directory.glob("*.html")):
        m = re.fullmatch(r"(\d+)", path.stem)
        if m:
            snapshots[int(m.group(1))] = load_snapshot(path)
    if not snapshots:
        raise FormatError(f"{directory}: no pages.json and no <index>.html snapshots")
    return snapshots


@main.command("sign")
@click.option("--recording", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--snapshots", "snapshots_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--policy", "policy_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--task-id", help="Task id recorded in the config (defaults to a title slug).")
@click.option("--provider", "use_provider", is_flag=True, help="Let the provider propose signatures when the search fails.")
@click.option("--settings", "settings_path", type=click.Path(), help="tracesmith.toml-style settings file.")
@output_options
def sign_cmd(recording, snapshots_dir, out, policy_path, task_id, use_provider, settings_path, as_json, quiet) -> None:
    """Build the per-step element-signature configuration."""
    report = ingest.filter_irrelevant(ingest.load_recording(recording))
    policy = StabilityPolicy.from_file(policy_path) if policy_path else StabilityPolicy()
    provider = _gateway(_settings(settings_path)) if use_provider else None
    snapshots = _load_snapshot_map(Path(snapshots_dir))
    out_path = Path(out)
    version = 1
    if out_path.exists():
        version = load_config(out_path).version + 1
    config, diagnostics = build_config(
        report.recording,
        snapshots,
        policy,
        provider,
        task_id=task_id,
        version=version,
    )
    save_config(config, out_path)
    payload = config_to_dict(config) | {
        "diagnostics": [{"stepIndex": d.step_index, "reason": d.reason} for d in diagnostics]
    }
    human = f"signed {len(config.entries)} steps -> {out}"
    if diagnostics:
        human += "\n" + "\n".join(f"step {d.step_index}: {d.reason}" for d in diagnostics)
    _emit(payload, human, as_json=as_json, quiet=quiet)
    if diagnostics:
        sys.exit(EXIT_NOT_UNIQUE)


@main.command("simulate")
@click.option("--sop", "sop_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--site", "site_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "sig_config_path", type=click.Path(exists=True, dir_okay=False),
              help="signatures.json used to resolve elements first.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--task-id", default="task")
@output_options
def simulate_cmd(sop_path, site_path, sig_config_path, out, task_id, as_json, quiet) -> None:
    """Execute an instantiated SOP against a fixture site."""
    instance = sop.load_instance(sop_path)
    site = sim.load_site(site_path)
    config = load_config(sig_config_path) if sig_config_path else None
    trace = sim.run(instance, site, config, task_id=task_id)
    dump_trace(trace, out)
    _emit(
        trace_to_dict(trace),
        f"simulated {len(trace.steps)} steps -> {out} (final page: {trace.meta.get('finalPage')})",
        as_json=as_json,
        quiet=quiet,
    )


@main.command("score")
@click.option("--a", "path_a", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--embedder", type=click.Choice(["baseline", "service"]), default="baseline")
@click.option("--settings", "settings_path", type=click.Path(), help="tracesmith.toml-style settings file.")
@output_options
def score_cmd(path_a, path_b, embedder, settings_path, as_json, quiet) -> None:
    """Consistency score between two traces."""
    embed = _embedder_for(embedder, _settings(settings_path))
    fa = consistency.extract_features(load_trace(path_a))
    fb = consistency.extract_features(load_trace(path_b))
    value = consistency.score(embed(fa), embed(fb))
    _emit({"score": value, "embedder": embedder}, f"{value:.6f}", as_json=as_json, quiet=quiet)


@main.command("monitor")
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--golden", "golden_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--threshold", type=float, help="Override the golden manifest threshold.")
@click.option("--agg", type=click.Choice(["max", "mean"]), help="Override the manifest aggregation.")
@click.option("--embedder", type=click.Choice(["baseline", "service"]), default="baseline")
@click.option("--fail-on-inconsistent", is_flag=True, help="Exit 5 when the verdict is inconsistent.")
@click.option("--settings", "settings_path", type=click.Path(), help="tracesmith.toml-style settings file.")
@output_options
def monitor_cmd(trace_path, golden_dir, threshold, agg, embedder, fail_on_inconsistent, settings_path, as_json, quiet) -> None:
    """Compare a trace against a golden store and classify it."""
    store = consistency.load_golden_store(golden_dir)
    cfg = consistency.ConsistencyConfig(
        threshold=threshold if threshold is not None else store.threshold,
        aggregation=agg or store.aggregation,
        embedder=embedder,
    )
    embed = _embedder_for(embedder, _settings(settings_path))
    report = consistency.monitor(
        load_trace(trace_path), store.traces, cfg, ids=store.ids, embedder=embed
    )
    payload = {
        "score": report.score,
        "verdict": report.verdict,
        "nearestGoldenId": report.nearest_golden_id,
        "threshold": cfg.threshold,
        "aggregation": cfg.aggregation,
    }
    _emit(
        payload,
        f"score {report.score:.6f} vs threshold {cfg.threshold} -> {report.verdict} "
        f"(nearest: {report.nearest_golden_id})",
        as_json=as_json,
        quiet=quiet,
    )
    if fail_on_inconsistent and not report.consistent:
        sys.exit(EXIT_INCONSISTENT)


@main.command("eval")
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", "threshold_raw", required=True,
              help="Decision threshold in [0,1], or 'auto' to sweep for best F1.")
@click.option("--embedder", type=click.Choice(["baseline", "service"]), default="baseline")
@click.option("--settings", "settings_path", type=click.Path(), help="tracesmith.toml-style settings file.")
@output_options
def eval_cmd(pairs_path, threshold_raw, embedder, settings_path, as_json, quiet) -> None:
    """Accuracy/precision/recall/F1 of threshold classification on labeled pairs."""
    pairs = consistency.load_pairs(pairs_path)
    embed = _embedder_for(embedder, _settings(settings_path))
    if threshold_raw == "auto":
        threshold = consistency.select_threshold(pairs, embedder=embed)
    else:
        try:
            threshold = float(threshold_raw)
        except ValueError:
            raise FormatError(f"--threshold must be a float or 'auto', got {threshold_raw!r}") from None
    cfg = consistency.ConsistencyConfig(threshold=threshold, embedder=embedder)
    result = consistency.evaluate(pairs, cfg, embedder=embed)
    payload = result.to_dict() | {"thresholdMode": threshold_raw, "pairs": len(pairs)}
    _emit(
        payload,
        f"threshold {threshold:.4f}: accuracy {result.accuracy:.4f}, f1 {result.f1:.4f} "
        f"(tp {result.tp} fp {result.fp} tn {result.tn} fn {result.fn})",
        as_json=as_json,
        quiet=quiet,
    )


@main.group("suite")
def suite_group() -> None:
    """Labeled consistency-suite generation."""


@suite_group.command("generate")
@click.option("--base", "base_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory of base trace JSON files.")
@click.option("--n", "n_per_trace", required=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Pairs JSONL path; variant traces land in a traces/ dir beside it.")
@output_options
def suite_generate(base_dir, n_per_trace, seed, out, as_json, quiet) -> None:
    """Generate similar/dissimilar labeled pairs from base traces."""
    base_paths = sorted(Path(base_dir).glob("*.json"))
    if not base_paths:
        raise FormatError(f"{base_dir}: no base trace JSON files")
    base = [load_trace(p) for p in base_paths]
    out_path = Path(out)
    pairs_path = sim.generate_suite(
        base, n_per_trace, seed, out_path.parent, pairs_name=out_path.name
    )
    n_pairs = sum(1 for _ in pairs_path.read_text(encoding="utf-8").splitlines())
    _emit(
        {"pairs": n_pairs, "out": str(pairs_path), "baseTraces": len(base)},
        f"wrote {n_pairs} labeled pairs -> {pairs_path}",
        as_json=as_json,
        quiet=quiet,
    )


if __name__ == "__main__":
    main()
