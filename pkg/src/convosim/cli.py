"""Command-line entry point.

Subcommands cover the full pipeline: import a source corpus, simulate
conversations against agent endpoints, filter them, compute statistics and
curves, score downstream predictions, build classifier training data, and
run the human-evaluation service.  Every random choice is governed by an
explicit --seed; identical invocations over identical inputs produce
identical bytes (manifests carry the only timestamp).
"""

from __future__ import annotations

import dataclasses
import json
import sys

import click

from . import analysis, corpus, evalsuite, simulator
from .agents import AgentEndpoint, GenerationConfig
from .agents.mock_server import DEFAULT_ROLE_AGENTS
from .humaneval import protocol as he_protocol
from .humaneval.service import HumanEvalService

DEFAULT_AGENT_KINDS = {role: f"scripted:{name}" for role, name in DEFAULT_ROLE_AGENTS.items()}


def _fail(message: str) -> "click.ClickException":
    return click.ClickException(message)


def _open_read(path):
    try:
        return open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise _fail(f"cannot read {path}: {exc.strerror}")


def _open_write(path):
    try:
        return open(path, "w", encoding="utf-8")
    except OSError as exc:
        raise _fail(f"cannot write {path}: {exc.strerror}")


def _load_dataset(path, *, name=None, provenance="imported"):
    try:
        return corpus.load_canonical(path, name=name, provenance=provenance)
    except OSError as exc:
        raise _fail(f"cannot read {path}: {exc.strerror}")
    except corpus.CorpusFormatError as exc:
        raise _fail(str(exc))


def _load_endpoints(config_path, overrides, generation_overrides) -> dict[str, AgentEndpoint]:
    """Role endpoints: built-in scripted defaults, then the config file,
    then --agent role=kind flags; generation flags override everything."""
    kinds = dict(DEFAULT_AGENT_KINDS)
    defaults: dict = {}
    per_role_cfg: dict[str, dict] = {}
    if config_path:
        with _open_read(config_path) as fp:
            try:
                cfg = json.load(fp)
            except ValueError as exc:
                raise _fail(f"{config_path}: not valid JSON ({exc})")
        defaults = cfg.get("defaults", {})
        for role, value in cfg.get("roles", {}).items():
            if isinstance(value, str):
                kinds[role] = value
            elif isinstance(value, dict) and "kind" in value:
                kinds[role] = value["kind"]
                per_role_cfg[role] = value
            else:
                raise _fail(f"{config_path}: role {role!r} needs a kind string or object")
    for item in overrides:
        role, sep, kind = item.partition("=")
        if not sep or not role or not kind:
            raise _fail(f"--agent expects role=kind, got {item!r}")
        kinds[role] = kind
    endpoints = {}
    for role, kind in kinds.items():
        merged_gen = dict(defaults.get("generation", {}))
        merged_gen.update(per_role_cfg.get(role, {}).get("generation", {}))
        merged_gen.update(generation_overrides)
        try:
            endpoints[role] = AgentEndpoint(
                kind=kind,
                generation=GenerationConfig.from_mapping(merged_gen),
                timeout=per_role_cfg.get(role, {}).get("timeout", defaults.get("timeout", 10.0)),
                retries=per_role_cfg.get(role, {}).get("retries", defaults.get("retries", 2)),
            )
        except (TypeError, ValueError) as exc:
            raise _fail(f"agent config for role {role!r}: {exc}")
    return endpoints


def _generation_overrides(beam_size, top_p, temperature, max_new_tokens) -> dict:
    out = {}
    if beam_size is not None:
        out["beam_size"] = beam_size
    if top_p is not None:
        out["top_p"] = top_p
    if temperature is not None:
        out["temperature"] = temperature
    if max_new_tokens is not None:
        out["max_new_tokens"] = max_new_tokens
    return out


@click.group()
def main():
    """Simulate information-seeking conversations and measure the result."""


@main.command("import")
@click.option("--format", "fmt", type=click.Choice(["quac"]), default="quac", show_default=True)
@click.option("--in", "in_path", required=True, help="source JSON file")
@click.option("--out", "out_path", required=True, help="canonical conversations JSONL")
@click.option("--name", default="quac", show_default=True, help="dataset name")
@click.option("--provenance", type=click.Choice(list(corpus.PROVENANCES)), default="human",
              show_default=True)
@click.option("--docs-out", default=None, help="also write the unique documents as JSONL")
@click.option("--refs-out", default=None, help="also write per-question gold references as JSONL")
def import_cmd(fmt, in_path, out_path, name, provenance, docs_out, refs_out):
    """Convert a source corpus into the canonical conversation format."""
    with _open_read(in_path) as fp:
        try:
            raw = json.load(fp)
        except ValueError as exc:
            raise _fail(f"{in_path}: not valid JSON ({exc})")
    try:
        dataset = corpus.import_quac(raw, name=name, provenance=provenance)
    except (corpus.CorpusFormatError, KeyError, TypeError) as exc:
        raise _fail(f"{in_path}: {exc}")
    with _open_write(out_path) as fp:
        corpus.write_canonical(dataset, fp)
    click.echo(f"wrote {len(dataset)} conversations ({dataset.n_pairs()} pairs) to {out_path}")
    if docs_out:
        documents = corpus.dataset_documents(dataset)
        with _open_write(docs_out) as fp:
            corpus.write_documents(documents, fp)
        click.echo(f"wrote {len(documents)} documents to {docs_out}")
    if refs_out:
        records = corpus.quac_references(raw)
        with _open_write(refs_out) as fp:
            for rec in records:
                fp.write(json.dumps(rec, sort_keys=True, ensure_ascii=False,
                                    separators=(",", ":")) + "\n")
        click.echo(f"wrote {len(records)} reference records to {refs_out}")


@main.command()
@click.option("--mode", type=click.Choice(list(simulator.MODES)), required=True)
@click.option("--preset", type=click.Choice(list(simulator.PRESETS)), default=None,
              help="semi: 6 turns, no early stop; wiki: 12 turns, stop past 3 unanswerable")
@click.option("--max-turns", type=int, default=None, help="turn cap (overrides preset)")
@click.option("--unanswerable-budget", type=int, default=None,
              help="stop once this many unanswerable answers is exceeded")
@click.option("--k", type=int, default=10, show_default=True, help="extractor candidates kept")
@click.option("--candidate-policy", type=click.Choice(list(simulator.CANDIDATE_POLICIES)),
              default="top1", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True, help="parallel conversations")
@click.option("--agents", "agents_path", default=None, help="agent endpoint config JSON")
@click.option("--agent", "agent_overrides", multiple=True, metavar="ROLE=KIND",
              help="override one role's endpoint, e.g. caf=remote:http://host:8000")
@click.option("--beam-size", type=int, default=None)
@click.option("--top-p", type=float, default=None)
@click.option("--temperature", type=float, default=None)
@click.option("--max-new-tokens", type=int, default=None)
@click.option("--in", "in_path", required=True, help="documents JSONL")
@click.option("--out", "out_path", required=True, help="canonical conversations JSONL")
@click.option("--name", default="synthetic", show_default=True, help="dataset name")
@click.option("--min-words", type=int, default=None, help="skip shorter passages")
@click.option("--max-words", type=int, default=None, help="skip longer passages")
def simulate(mode, preset, max_turns, unanswerable_budget, k, candidate_policy, seed, jobs,
             agents_path, agent_overrides, beam_size, top_p, temperature, max_new_tokens,
             in_path, out_path, name, min_words, max_words):
    """Simulate one conversation per document; also writes OUT.manifest.json."""
    if preset:
        config = simulator.PRESETS[preset](
            mode, k=k, candidate_policy=candidate_policy, seed=seed
        )
        if max_turns is not None:
            config = dataclasses.replace(config, max_turns=max_turns)
        if unanswerable_budget is not None:
            config = dataclasses.replace(config, unanswerable_budget=unanswerable_budget)
    else:
        try:
            config = simulator.SimulationConfig(
                mode=mode,
                max_turns=max_turns if max_turns is not None else 6,
                unanswerable_budget=unanswerable_budget,
                k=k,
                candidate_policy=candidate_policy,
                seed=seed,
            )
        except ValueError as exc:
            raise _fail(str(exc))
    endpoints = _load_endpoints(
        agents_path, agent_overrides,
        _generation_overrides(beam_size, top_p, temperature, max_new_tokens),
    )
    with _open_read(in_path) as fp:
        try:
            documents = corpus.read_documents(fp, path=in_path)
        except corpus.CorpusFormatError as exc:
            raise _fail(str(exc))
    documents = corpus.filter_documents_by_length(documents, min_words, max_words)
    if not documents:
        raise _fail("no documents to simulate after length filtering")
    result = simulator.run_batch(documents, endpoints, config, jobs=jobs, dataset_name=name)
    with _open_write(out_path) as fp:
        corpus.write_canonical(result.dataset, fp)
    manifest = simulator.build_manifest(config, endpoints, result)
    with _open_write(f"{out_path}.manifest.json") as fp:
        json.dump(manifest, fp, sort_keys=True, indent=2)
        fp.write("\n")
    click.echo(
        f"simulated {len(result.dataset)} conversations "
        f"({result.dataset.n_pairs()} pairs) from {result.attempted} documents; "
        f"{result.aborted} aborted"
    )
    for error in result.errors:
        click.echo(f"  aborted {error.doc_id}: {error.message}", err=True)


@main.command("filter")
@click.option("--in", "in_path", required=True, help="canonical conversations JSONL")
@click.option("--out", "out_path", required=True, help="kept conversations JSONL")
@click.option("--dropped", "dropped_path", default=None, help="dropped-pair report JSONL")
@click.option("--threshold", type=float, default=0.5, show_default=True,
              help="minimum answer-recovery F1")
@click.option("--keep-failing", is_flag=True,
              help="audit mode: keep below-threshold pairs in the output")
@click.option("--agents", "agents_path", default=None, help="agent endpoint config JSON")
@click.option("--agent", "agent_overrides", multiple=True, metavar="ROLE=KIND")
@click.option("--name", default=None, help="dataset name (defaults to the input path)")
def filter_cmd(in_path, out_path, dropped_path, threshold, keep_failing, agents_path,
               agent_overrides, name):
    """Roundtrip-filter answer-first synthetic conversations."""
    dataset = _load_dataset(in_path, name=name or in_path, provenance="synthetic-sym")
    endpoints = _load_endpoints(agents_path, agent_overrides, {})
    if "caf" not in endpoints:
        raise _fail("filtering needs an endpoint for role 'caf'")
    try:
        filter_config = simulator.FilterConfig(
            f1_threshold=threshold, drop_below=not keep_failing
        )
        result = simulator.roundtrip_filter(dataset, endpoints["caf"], filter_config)
    except ValueError as exc:
        raise _fail(str(exc))
    with _open_write(out_path) as fp:
        corpus.write_canonical(result.kept, fp)
    if dropped_path:
        with _open_write(dropped_path) as fp:
            for d in result.dropped:
                fp.write(json.dumps(
                    {"conv_id": d.conv_id, "t": d.turn_index, "reason": d.reason, "f1": d.f1},
                    sort_keys=True, separators=(",", ":"),
                ) + "\n")
    click.echo(simulator.format_filter_report([(dataset.name, result)]))
    click.echo(f"checked {result.total_pairs} pairs, kept {result.kept.n_pairs()}, "
               f"dropped {len(result.dropped)}")


@main.command()
@click.option("--in", "in_path", required=True, help="canonical conversations JSONL")
@click.option("--name", default=None, help="dataset name (defaults to the input path)")
@click.option("--json-out", default=None, help="also write the report as JSON")
def stats(in_path, name, json_out):
    """Surface statistics of a conversation dataset."""
    dataset = _load_dataset(in_path, name=name or in_path)
    try:
        stat_report = analysis.dataset_statistics(dataset)
    except ValueError as exc:
        raise _fail(str(exc))
    click.echo(analysis.format_stat_report(stat_report))
    if json_out:
        with _open_write(json_out) as fp:
            json.dump(dataclasses.asdict(stat_report), fp, sort_keys=True, indent=2)
            fp.write("\n")


@main.command()
@click.option("--in", "in_path", required=True, help="canonical conversations JSONL")
@click.option("--scores", "score_files", multiple=True, metavar="NAME=PATH",
              help="external per-pair scores: lines of 'conv_id t score'")
@click.option("--out", "out_path", default=None, help="write the table here instead of stdout")
def curves(in_path, score_files, out_path):
    """Per-turn means of informativeness and any external scores."""
    dataset = _load_dataset(in_path)
    scorers: dict[str, analysis.Scorer] = {"informativeness": analysis.informativeness}
    for item in score_files:
        label, sep, path = item.partition("=")
        if not sep or not label or not path:
            raise _fail(f"--scores expects NAME=PATH, got {item!r}")
        with _open_read(path) as fp:
            try:
                scores = analysis.read_score_file(fp)
            except ValueError as exc:
                raise _fail(f"{path}: {exc}")
        scorers[label] = analysis.make_file_scorer(scores)
    table = analysis.format_curves(analysis.per_turn_curves(dataset, scorers))
    if out_path:
        with _open_write(out_path) as fp:
            fp.write(table + "\n")
    else:
        click.echo(table)


@main.command("eval-cqa")
@click.option("--pred", "pred_path", required=True,
              help="predictions: lines of 'question_id<TAB>answer'")
@click.option("--gold", "gold_path", required=True,
              help="gold references: JSONL of {qid, dialogue_id, refs}")
@click.option("--human-f1", "human_f1_path", default=None,
              help="per-question human F1 ('qid<TAB>f1'); enables HEQ")
def eval_cqa(pred_path, gold_path, human_f1_path):
    """Answer F1 (and HEQ against human per-question F1)."""
    with _open_read(pred_path) as fp:
        try:
            predictions = evalsuite.read_prediction_file(fp)
        except ValueError as exc:
            raise _fail(f"{pred_path}: {exc}")
    with _open_read(gold_path) as fp:
        try:
            references, dialogues = evalsuite.read_reference_file(fp)
        except ValueError as exc:
            raise _fail(f"{gold_path}: {exc}")
    try:
        result = evalsuite.cqa_f1(predictions, references)
    except ValueError as exc:
        raise _fail(str(exc))
    click.echo(f"F1:    {result.score:.1f}")
    if result.missing:
        click.echo(f"  ({len(result.missing)} questions had no prediction and scored 0)", err=True)
    if human_f1_path:
        with _open_read(human_f1_path) as fp:
            try:
                human = evalsuite.read_per_question_f1(fp)
            except ValueError as exc:
                raise _fail(f"{human_f1_path}: {exc}")
        try:
            heq_q, heq_d = evalsuite.heq(result.per_question, human, dialogues)
        except ValueError as exc:
            raise _fail(str(exc))
        click.echo(f"HEQ-Q: {heq_q:.1f}")
        click.echo(f"HEQ-D: {heq_d:.1f}")


@main.command("eval-retrieval")
@click.option("--in", "in_path", required=True,
              help="rankings: lines of 'query_id<TAB>id1,id2,...<TAB>gold_id'")
@click.option("--k", "ks", type=int, multiple=True, default=(5, 20), show_default=True)
def eval_retrieval(in_path, ks):
    """Mean reciprocal rank and recall at k over passage rankings."""
    with _open_read(in_path) as fp:
        try:
            rankings = evalsuite.read_ranking_file(fp)
        except ValueError as exc:
            raise _fail(f"{in_path}: {exc}")
    try:
        click.echo(f"MRR:  {evalsuite.mrr(rankings) * 100:.1f}")
        for k in ks:
            click.echo(f"R@{k}: {evalsuite.recall_at_k(rankings, k) * 100:.1f}")
    except ValueError as exc:
        raise _fail(str(exc))


@main.command("eval-bleu")
@click.option("--generated", "gen_path", required=True, help="canonical conversations JSONL")
@click.option("--gold", "gold_path", required=True, help="canonical conversations JSONL")
@click.option("--max-order", type=int, default=4, show_default=True)
def eval_bleu(gen_path, gold_path, max_order):
    """N-gram overlap of generated questions against gold, aligned by
    conversation and turn."""
    generated = _questions_by_position(_load_dataset(gen_path))
    gold = _questions_by_position(_load_dataset(gold_path))
    try:
        scores = evalsuite.intrinsic_bleu_eval(generated, gold, max_order=max_order)
    except ValueError as exc:
        raise _fail(str(exc))
    for n, score in enumerate(scores, start=1):
        click.echo(f"B-{n}: {score * 100:.1f}")


def _questions_by_position(dataset) -> dict[tuple[str, int], str]:
    return {
        (conv.conv_id, pair.turn_index): pair.question
        for conv in dataset.conversations
        for pair in conv.turns
    }


@main.command("build-classifier-data")
@click.option("--kind", type=click.Choice(["specificity", "relevance"]), required=True)
@click.option("--in", "in_path", required=True, help="canonical conversations JSONL")
@click.option("--out", "out_path", required=True, help="training examples JSONL")
@click.option("--seed", type=int, default=0, show_default=True)
def build_classifier_data(kind, in_path, out_path, seed):
    """Contrastive training examples for the question-specificity or
    answer-relevance classifier."""
    dataset = _load_dataset(in_path)
    if kind == "specificity":
        examples = analysis.build_specificity_training_set(dataset, seed=seed)
    else:
        examples = analysis.build_relevance_training_set(dataset, seed=seed)
    with _open_write(out_path) as fp:
        analysis.write_classifier_examples(examples, fp)
    n_pos = sum(1 for e in examples if e.label == "positive")
    click.echo(f"wrote {len(examples)} examples ({n_pos} positive, "
               f"{len(examples) - n_pos} negative) to {out_path}")


@main.command("humaneval-create")
@click.option("--dataset-a", "path_a", required=True, help="canonical conversations JSONL")
@click.option("--dataset-b", "path_b", required=True, help="canonical conversations JSONL")
@click.option("--name-a", default=None, help="source tag for dataset A (defaults to its path)")
@click.option("--name-b", default=None, help="source tag for dataset B (defaults to its path)")
@click.option("--n", type=int, required=True, help="number of comparison tasks")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, help="tasks JSONL")
def humaneval_create(path_a, path_b, name_a, name_b, n, seed, out_path):
    """Sample pairwise judgment tasks from two aligned datasets."""
    dataset_a = _load_dataset(path_a, name=name_a or path_a)
    dataset_b = _load_dataset(path_b, name=name_b or path_b)
    try:
        tasks = he_protocol.create_tasks(dataset_a, dataset_b, n, seed=seed)
    except ValueError as exc:
        raise _fail(str(exc))
    with _open_write(out_path) as fp:
        he_protocol.write_tasks(tasks, fp)
    click.echo(f"wrote {len(tasks)} tasks to {out_path}")


@main.command("humaneval-serve")
@click.option("--tasks", "tasks_path", required=True, help="tasks JSONL")
@click.option("--votes", "votes_path", required=True, help="append-only vote log")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--ui-dir", default=None, help="static annotator UI directory to serve at /")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--bootstrap-samples", type=int, default=100_000, show_default=True)
@click.option("--significance", type=float, default=0.1, show_default=True)
@click.option("--panel", type=int, default=5, show_default=True, help="annotators per task (odd)")
def humaneval_serve(tasks_path, votes_path, host, port, ui_dir, seed, bootstrap_samples,
                    significance, panel):
    """Serve the judgment collection API (and optionally the annotator UI)."""
    with _open_read(tasks_path) as fp:
        try:
            tasks = he_protocol.read_tasks(fp)
        except (ValueError, KeyError) as exc:
            raise _fail(f"{tasks_path}: {exc}")
    try:
        service = HumanEvalService(
            tasks, votes_path, host=host, port=port, ui_dir=ui_dir, seed=seed,
            n_samples=bootstrap_samples, significance=significance, panel_size=panel,
        )
    except (ValueError, OSError) as exc:
        raise _fail(str(exc))
    click.echo(f"serving {len(tasks)} tasks on {service.address} (votes -> {votes_path})")
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()


@main.command("humaneval-report")
@click.option("--tasks", "tasks_path", required=True, help="tasks JSONL")
@click.option("--votes", "votes_path", required=True, help="vote log")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--bootstrap-samples", type=int, default=100_000, show_default=True)
@click.option("--significance", type=float, default=0.1, show_default=True)
@click.option("--keep-unanswerable", is_flag=True,
              help="do not exclude tasks with an unanswerable candidate")
@click.option("--keep-generic", is_flag=True,
              help="do not exclude tasks with a generic follow-up question")
@click.option("--json-out", default=None, help="also write the report as JSON")
def humaneval_report(tasks_path, votes_path, seed, bootstrap_samples, significance,
                     keep_unanswerable, keep_generic, json_out):
    """Aggregate a vote log into the significance report."""
    with _open_read(tasks_path) as fp:
        try:
            tasks = he_protocol.read_tasks(fp)
        except (ValueError, KeyError) as exc:
            raise _fail(f"{tasks_path}: {exc}")
    try:
        with _open_read(votes_path) as fp:
            votes = he_protocol.read_votes(fp)
    except click.ClickException:
        raise
    rules = he_protocol.ExclusionRules(
        exclude_unanswerable=not keep_unanswerable,
        exclude_generic_followup=not keep_generic,
    )
    try:
        eval_report = he_protocol.report(
            tasks, votes, rules=rules, seed=seed,
            n_samples=bootstrap_samples, significance=significance,
        )
    except ValueError as exc:
        raise _fail(str(exc))
    click.echo(he_protocol.format_report(eval_report))
    if json_out:
        with _open_write(json_out) as fp:
            fp.write(eval_report.to_json())
            fp.write("\n")


if __name__ == "__main__":
    sys.exit(main())
