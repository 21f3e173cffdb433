"""Command-line entry points binding the modules together.

Subcommands: tm-check, agent-run, corpus build, attack, ablate, sweep.
Reports are emitted as line-delimited JSON; tables additionally as text.
Defaults can come from a TOML or JSON config file; flags win over the file.
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import click

from . import harness, machines, turing
from .engine import EngineConfig, ScriptedGenerator, WireGenerator, reasoning_loop
from .monitor import MonitorConfig
from .retrieval import Corpus, chunk_corpus, registry_from_config


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if p.suffix == ".toml":
        return tomllib.loads(p.read_text())
    return json.loads(p.read_text())


def _cfg_default(config: dict, key: str, fallback):
    return config.get(key, fallback)


@click.group()
def main() -> None:
    """Stack-memory agent runtime and automata equivalence checker."""


@main.command("tm-check")
@click.option("--machine", "machine_file", type=click.Path(exists=True), default=None)
@click.option("--fixture", type=click.Choice(sorted(machines.FIXTURES)), default=None)
@click.option("--inputs", "inputs_file", type=click.Path(exists=True), default=None)
@click.option("--budget", type=int, default=10_000, show_default=True)
@click.option("--sama", is_flag=True, help="Binary-flag construction (sigma = 1).")
@click.option("--sigma", type=float, default=10.0, show_default=True)
@click.option("--random", "n_random", type=int, default=0,
              help="Check N seeded random machines instead of a machine file.")
@click.option("--seed", type=int, default=0, show_default=True)
def tm_check(machine_file, fixture, inputs_file, budget, sama, sigma, n_random, seed):
    """Check native-vs-stack-machine equivalence, one JSON report per pair."""
    failures = 0
    if n_random:
        rng = random.Random(seed)
        for i in range(n_random):
            tm = turing.random_machine(rng, machine_id=f"random{i}")
            inputs = turing.random_inputs(rng, sorted(tm.input_alphabet), 20, 6)
            for inp in inputs:
                report = turing.check_lemma1(
                    tm, inp, budget, sigma=sigma, sama=sama, machine_id=f"random{i}"
                )
                click.echo(json.dumps(report.to_dict(), sort_keys=True))
                failures += not report.success
        sys.exit(1 if failures else 0)
    if fixture:
        tm = machines.FIXTURES[fixture]()
        machine_id = fixture
    elif machine_file:
        tm = turing.TuringMachine.from_json(Path(machine_file).read_text())
        machine_id = Path(machine_file).stem
    else:
        raise click.UsageError("provide --machine, --fixture, or --random")
    if inputs_file:
        inputs = [tuple(line.strip()) for line in Path(inputs_file).read_text().splitlines()]
    else:
        inputs = turing.all_inputs(sorted(tm.input_alphabet), 4)
    for inp in inputs:
        report = turing.check_lemma1(
            tm, inp, budget, sigma=sigma, sama=sama, machine_id=machine_id
        )
        click.echo(json.dumps(report.to_dict(), sort_keys=True))
        failures += not report.success
    sys.exit(1 if failures else 0)


@main.command("agent-run")
@click.option("--query", required=True)
@click.option("--generator", "generator_spec", required=True,
              help="scripted:FILE or wire:URL")
@click.option("--metric", type=click.Choice(["cppl", "uct"]), default=None)
@click.option("--sigma", type=float, default=None)
@click.option("--max-loop", type=int, default=None)
@click.option("--trace", "trace_out", type=click.Path(), default=None)
@click.option("--tools", "tools_file", type=click.Path(exists=True), default=None)
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), default=None)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
def agent_run(query, generator_spec, metric, sigma, max_loop, trace_out,
              tools_file, corpus_file, config_file):
    """Run one reasoning session and print the conclusion."""
    config = _load_config(config_file)
    metric = metric or _cfg_default(config, "metric", "cppl")
    if sigma is None:
        sigma = _cfg_default(
            config, "sigma",
            harness.DEFAULT_SIGMA_CPPL if metric == "cppl" else harness.DEFAULT_SIGMA_UCT,
        )
    max_loop = max_loop or _cfg_default(config, "max_loop", 12)
    kind, _, target = generator_spec.partition(":")
    if kind == "scripted":
        gen = ScriptedGenerator.from_file(target)
    elif kind == "wire":
        gen = WireGenerator(target)
    else:
        raise click.UsageError("generator must be scripted:FILE or wire:URL")
    registry = None
    if tools_file:
        corpus = Corpus.from_jsonl(corpus_file) if corpus_file else None
        registry = registry_from_config(json.loads(Path(tools_file).read_text()), corpus)
    cfg = EngineConfig(
        monitor=MonitorConfig(metric=metric, sigma=sigma,
                              large_value=max(harness.DEFAULT_LARGE_VALUE, sigma)),
        max_loop=max_loop,
        tools=registry,
    )
    conclusion, trace = reasoning_loop(query, gen, cfg)
    if trace_out:
        Path(trace_out).write_text(trace.to_jsonl())
    click.echo(conclusion)


@main.group()
def corpus() -> None:
    """Corpus ingestion and indexing."""


@corpus.command("build")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def corpus_build(in_path, out_path):
    """Chunk a directory of .txt files or a JSONL corpus into an index."""
    p = Path(in_path)
    c = Corpus.from_directory(p) if p.is_dir() else Corpus.from_jsonl(p)
    chunks = chunk_corpus(c)
    with open(out_path, "w") as fh:
        for ch in chunks:
            fh.write(json.dumps({
                "doc_id": ch.doc_id,
                "chunk_index": ch.chunk_index,
                "token_start": ch.token_start,
                "token_end": ch.token_end,
                "text": ch.text,
            }, sort_keys=True) + "\n")
    click.echo(f"wrote {len(chunks)} chunks from {len(c.documents)} documents")


def _suite_options(config, cases_n, seed):
    cases, corp, noise = harness.generate_suite(n_cases=cases_n, seed=seed)
    return cases, corp, noise


@main.command("attack")
@click.option("--attack", "attack_kind", type=click.Choice(list(harness.ATTACK_KINDS)),
              required=True)
@click.option("--noise", "noise_kind", type=click.Choice(list(harness.NOISE_KINDS)),
              required=True)
@click.option("--cases", "cases_n", type=int, default=harness.DEFAULT_CASES)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--metric", type=click.Choice(["cppl", "uct"]), default=None)
@click.option("--sigma", type=float, default=None)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
def attack(attack_kind, noise_kind, cases_n, seed, metric, sigma, config_file):
    """Run the noise-poisoning suite for one (attack, noise) combination."""
    config = _load_config(config_file)
    metric = metric or _cfg_default(config, "metric", "cppl")
    sigma = sigma if sigma is not None else _cfg_default(config, "sigma", harness.DEFAULT_SIGMA_CPPL)
    cases, corp, noise = _suite_options(config, cases_n, seed)
    spec = harness.AttackSpec(attack_kind, noise_kind)
    report = harness.run_attack_suite(cases, corp, spec, noise, metric=metric, sigma=sigma)
    click.echo(report.to_json())


@main.command("attack-table")
@click.option("--cases", "cases_n", type=int, default=harness.DEFAULT_CASES)
@click.option("--seed", type=int, default=7, show_default=True)
def attack_table(cases_n, seed):
    """Run all six (attack, noise) combinations and render the result table."""
    cases, corp, noise = harness.generate_suite(n_cases=cases_n, seed=seed)
    reports = harness.run_attack_table(cases, corp, noise)
    for key, report in reports.items():
        click.echo(report.to_json())
    click.echo(harness.render_attack_table(reports))


@main.command("ablate")
@click.option("--variant", type=click.Choice(list(harness.VARIANTS)), required=True)
@click.option("--attack", "attack_kind", type=click.Choice(list(harness.ATTACK_KINDS)),
              default="structural", show_default=True)
@click.option("--noise", "noise_kind", type=click.Choice(list(harness.NOISE_KINDS)),
              default="irrelevant", show_default=True)
@click.option("--cases", "cases_n", type=int, default=harness.DEFAULT_CASES)
@click.option("--seed", type=int, default=7, show_default=True)
def ablate(variant, attack_kind, noise_kind, cases_n, seed):
    """Run one ablation variant on the noise suite."""
    cases, corp, noise = harness.generate_suite(n_cases=cases_n, seed=seed)
    report = harness.run_ablation(
        cases, corp, variant,
        attack=harness.AttackSpec(attack_kind, noise_kind), noise=noise,
    )
    click.echo(report.to_json())


@main.command("sweep")
@click.option("--metric", type=click.Choice(["cppl", "uct"]), default="cppl",
              show_default=True)
@click.option("--sigmas", default=None,
              help="Comma-separated sigma grid; defaults to the metric's grid.")
@click.option("--cases", "cases_n", type=int, default=harness.DEFAULT_CASES)
@click.option("--seed", type=int, default=7, show_default=True)
def sweep(metric, sigmas, cases_n, seed):
    """Sigma sensitivity sweep; one JSON row per grid point."""
    grid = (
        [float(s) for s in sigmas.split(",")]
        if sigmas
        else list(harness.DEFAULT_SWEEP_GRIDS[metric])
    )
    cases, corp, _ = harness.generate_suite(n_cases=cases_n, seed=seed)
    for row in harness.sweep_sigma(cases, corp, grid, metric=metric):
        click.echo(json.dumps(row.to_dict(), sort_keys=True))


if __name__ == "__main__":
    main()
