"""Command-line entry points: corpus, extract, qgen, llm, eval, serve, chat."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .corpus import derive_relation_dataset, ingest_note, load_annotations
from .dialogue import (
    Condition,
    Phase,
    TurnKind,
    finish_session,
    next_turn,
    start_session,
    submit_answer,
    transcript_text,
)
from .errors import DischargeQaError
from .evaluation import (
    EvalReport,
    compute_mrr,
    judge_transcript,
    load_cloze_test,
    load_rankings,
    aggregate_heuristic,
    score_cloze,
)
from .extraction import (
    classify_relation,
    external_backend,
    extract_events,
    gazetteer_backend,
    generate_candidates,
    mark_pair,
)
from .llmclient import ChatRequest, complete
from .qgen import AssemblyMode, question_set_from_note, question_set_to_dict
from .service import ServiceConfig, create_app, load_config, transport_from_config
from .verify import verify_answer

MODE_NAMES = {"gpt": AssemblyMode.GPT, "gpt-ie": AssemblyMode.GPT_IE,
              "human": AssemblyMode.HUMAN}


def _read_note(path, fmt):
    return ingest_note(Path(path).read_text(encoding="utf-8"), fmt)


def _backend_from_options(kind, gazetteer, endpoint):
    if kind == "external":
        if not endpoint:
            raise click.UsageError("--endpoint is required with --backend external")
        return external_backend(endpoint)
    if not gazetteer:
        raise click.UsageError("--gazetteer is required with --backend gazetteer")
    doc = json.loads(Path(gazetteer).read_text(encoding="utf-8"))
    return gazetteer_backend(doc.get("terms", doc), doc.get("patterns"))


def _transport(fixture=None):
    return transport_from_config(ServiceConfig(llm_fixture=fixture))


def _fail(exc):
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@click.group()
def main():
    """Teach patients their discharge instructions through guided Q&A."""


@main.group("corpus")
def corpus_group():
    """Work with annotated note collections."""


@corpus_group.command("validate")
@click.argument("path", type=click.Path(exists=True))
def corpus_validate(path):
    """Check an annotation file against the data-model invariants."""
    try:
        notes = load_annotations(path)
    except DischargeQaError as exc:
        _fail(exc)
    events = sum(len(n.events) for n in notes)
    relations = sum(len(n.relations) for n in notes)
    click.echo(f"ok: {len(notes)} notes, {events} events, {relations} relations")


@corpus_group.command("pairs")
@click.argument("path", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None,
              help="Write JSONL here instead of stdout.")
def corpus_pairs(path, out):
    """Derive labeled relation pairs (positives plus compliant negatives)."""
    try:
        examples = derive_relation_dataset(load_annotations(path))
    except DischargeQaError as exc:
        _fail(exc)
    lines = [json.dumps({"note_id": ex.note_id, "head": ex.head, "tail": ex.tail,
                         "rtype": ex.rtype.value, "label": ex.label}, ensure_ascii=False)
             for ex in examples]
    if out:
        Path(out).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        positives = sum(1 for ex in examples if ex.label)
        click.echo(f"wrote {len(examples)} pairs ({positives} positive) to {out}")
    else:
        for line in lines:
            click.echo(line)


@main.group("extract")
def extract_group():
    """Run event and relation extraction on one note."""


_backend_options = [
    click.option("--backend", "backend_kind", default="gazetteer",
                 type=click.Choice(["gazetteer", "external"])),
    click.option("--gazetteer", type=click.Path(exists=True), default=None,
                 help="Gazetteer JSON (terms plus pattern rules)."),
    click.option("--endpoint", default=None, help="External extractor URL."),
    click.option("--format", "fmt", default="plain",
                 type=click.Choice(["plain", "sectioned_json"])),
]


def _with_backend_options(command):
    for option in reversed(_backend_options):
        command = option(command)
    return command


@extract_group.command("events")
@click.argument("note_path", type=click.Path(exists=True))
@_with_backend_options
def extract_events_cmd(note_path, backend_kind, gazetteer, endpoint, fmt):
    """Extract typed medical events from the visit recap."""
    try:
        note = _read_note(note_path, fmt)
        backend = _backend_from_options(backend_kind, gazetteer, endpoint)
        events = extract_events(note, backend)
    except DischargeQaError as exc:
        _fail(exc)
    click.echo(json.dumps([
        {"event_id": ev.event_id, "start": ev.span.start, "end": ev.span.end,
         "etype": ev.etype.value, "surface": ev.surface}
        for ev in events], indent=2, ensure_ascii=False))


@extract_group.command("relations")
@click.argument("note_path", type=click.Path(exists=True))
@_with_backend_options
def extract_relations_cmd(note_path, backend_kind, gazetteer, endpoint, fmt):
    """Classify every type-compliant event pair in the note."""
    try:
        note = _read_note(note_path, fmt)
        backend = _backend_from_options(backend_kind, gazetteer, endpoint)
        events = extract_events(note, backend)
        rows = []
        for head, tail, rtype in generate_candidates(events):
            prediction = classify_relation(mark_pair(note.full_text, head, tail), backend)
            rows.append({
                "head": {"start": head.span.start, "end": head.span.end,
                         "etype": head.etype.value, "surface": head.surface},
                "tail": {"start": tail.span.start, "end": tail.span.end,
                         "etype": tail.etype.value, "surface": tail.surface},
                "rtype": rtype.value,
                "label": prediction.label,
                "confidence": prediction.confidence,
            })
    except DischargeQaError as exc:
        _fail(exc)
    click.echo(json.dumps(rows, indent=2, ensure_ascii=False))


@main.command("qgen")
@click.argument("note_path", type=click.Path(exists=True))
@click.option("--mode", default="gpt-ie", type=click.Choice(sorted(MODE_NAMES)))
@click.option("--out", type=click.Path(), default=None)
@click.option("--gazetteer", type=click.Path(exists=True), default=None)
@click.option("--human-file", type=click.Path(exists=True), default=None)
@click.option("--fixture", type=click.Path(exists=True), default=None,
              help="Replay LLM fixture (JSONL).")
@click.option("--n-min", default=4, show_default=True)
@click.option("--format", "fmt", default="plain",
              type=click.Choice(["plain", "sectioned_json"]))
def qgen_cmd(note_path, mode, out, gazetteer, human_file, fixture, n_min, fmt):
    """Generate the question set for one note."""
    try:
        note = _read_note(note_path, fmt)
        backend = None
        if gazetteer:
            doc = json.loads(Path(gazetteer).read_text(encoding="utf-8"))
            backend = gazetteer_backend(doc.get("terms", doc), doc.get("patterns"))
        question_set = question_set_from_note(
            note, MODE_NAMES[mode], backend=backend, transport=_transport(fixture),
            human_path=human_file, n_min=n_min)
    except DischargeQaError as exc:
        _fail(exc)
    payload = json.dumps(question_set_to_dict(question_set), indent=2, ensure_ascii=False)
    if out:
        Path(out).write_text(payload + "\n", encoding="utf-8")
        click.echo(f"wrote {len(question_set.questions)} questions to {out}")
    else:
        click.echo(payload)


@main.group("llm")
def llm_group():
    """Inspect and record the language-model transport."""


@llm_group.command("ping")
@click.option("--fixture", type=click.Path(exists=True), default=None)
@click.option("--model", default="gpt-4", show_default=True)
def llm_ping(fixture, model):
    """Send a trivial request through the configured transport."""
    try:
        result = complete(ChatRequest(model, (("user", "ping"),), max_tokens=16),
                          _transport(fixture))
    except DischargeQaError as exc:
        _fail(exc)
    click.echo(f"ok: {result.text}")


@llm_group.command("record", context_settings={"ignore_unknown_options": True})
@click.option("--fixture", required=True, type=click.Path())
@click.argument("args", nargs=-1, type=click.UNPROCESSED)
def llm_record(fixture, args):
    """Run another subcommand while recording every LLM exchange."""
    if not args:
        raise click.UsageError("give the subcommand to run after --")
    previous = os.environ.get("DISCHARGEQA_RECORD_FIXTURE")
    os.environ["DISCHARGEQA_RECORD_FIXTURE"] = fixture
    try:
        main.main(args=list(args), prog_name="dischargeqa", standalone_mode=False)
    finally:
        if previous is None:
            os.environ.pop("DISCHARGEQA_RECORD_FIXTURE", None)
        else:
            os.environ["DISCHARGEQA_RECORD_FIXTURE"] = previous
    click.echo(f"recorded LLM calls to {fixture}", err=True)


@main.group("eval")
def eval_group():
    """Score cloze sheets, rankings, transcripts, and coded feedback."""


@eval_group.command("cloze")
@click.option("--test", "test_path", required=True, type=click.Path(exists=True))
@click.option("--responses", "responses_path", required=True, type=click.Path(exists=True))
def eval_cloze(test_path, responses_path):
    """Score one patient's cloze responses."""
    try:
        test = load_cloze_test(test_path)
        doc = json.loads(Path(responses_path).read_text(encoding="utf-8"))
        responses = doc["responses"] if isinstance(doc, dict) else doc
        score = score_cloze(test, responses)
    except DischargeQaError as exc:
        _fail(exc)
    report = EvalReport("cloze", {
        "note_id": test.note_id,
        "accuracy": score.accuracy,
        "items": [{"given": r.given, "expected": r.expected, "correct": r.correct}
                  for r in score.per_item],
    })
    click.echo(json.dumps(report.to_dict(), indent=2, ensure_ascii=False))


@eval_group.command("mrr")
@click.option("--rankings", "rankings_path", required=True, type=click.Path(exists=True))
@click.option("--aspect", required=True)
@click.option("--target", required=True)
def eval_mrr(rankings_path, aspect, target):
    """Mean reciprocal rank of one condition in a preference study."""
    try:
        rankings = load_rankings(rankings_path, aspect=aspect)
        value = compute_mrr(rankings, target)
    except (DischargeQaError, ValueError) as exc:
        _fail(exc)
    report = EvalReport("mrr", {"aspect": aspect, "target": target,
                                "evaluators": len(rankings), "mrr": value})
    click.echo(json.dumps(report.to_dict(), indent=2, ensure_ascii=False))


@eval_group.command("judge")
@click.option("--note", "note_path", required=True, type=click.Path(exists=True))
@click.option("--transcript", "transcript_path", required=True, type=click.Path(exists=True))
@click.option("--fixture", type=click.Path(exists=True), default=None)
@click.option("--model", default="gpt-4", show_default=True)
@click.option("--strict", is_flag=True, default=False)
def eval_judge(note_path, transcript_path, fixture, model, strict):
    """Have the LLM judge score a finished session transcript."""
    from .dialogue import parse_transcript

    try:
        note_text = Path(note_path).read_text(encoding="utf-8")
        header, turns = parse_transcript(Path(transcript_path).read_text(encoding="utf-8"))
        scores = judge_transcript(note_text, turns, header.get("phase", ""),
                                  _transport(fixture), model_id=model, strict=strict)
    except DischargeQaError as exc:
        _fail(exc)
    report = EvalReport("judge", {"session_id": header.get("session_id"),
                                  "scores": scores.to_dict()})
    click.echo(json.dumps(report.to_dict(), indent=2, ensure_ascii=False))


@eval_group.command("heuristic")
@click.option("--codes", "codes_path", required=True, type=click.Path(exists=True))
def eval_heuristic(codes_path):
    """Positive rates over binary-coded feedback responses."""
    try:
        codes = json.loads(Path(codes_path).read_text(encoding="utf-8"))
        rates = aggregate_heuristic(codes)
    except DischargeQaError as exc:
        _fail(exc)
    report = EvalReport("heuristic", {"responses": len(codes), "rates": rates})
    click.echo(json.dumps(report.to_dict(), indent=2, ensure_ascii=False))


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--llm-fixture", type=click.Path(exists=True), default=None)
@click.option("--store-dir", type=click.Path(), default=None)
@click.option("--gazetteer", type=click.Path(exists=True), default=None)
@click.option("--human-questions", type=click.Path(exists=True), default=None)
@click.option("--cloze-dir", type=click.Path(exists=True), default=None)
@click.option("--frontend", type=click.Path(exists=True), default=None)
def serve(host, port, config_path, llm_fixture, store_dir, gazetteer,
          human_questions, cloze_dir, frontend):
    """Run the REST service (and the web UI when built)."""
    import uvicorn

    config = load_config(config_path, llm_fixture=llm_fixture, store_dir=store_dir,
                         gazetteer_path=gazetteer, human_questions=human_questions,
                         cloze_dir=cloze_dir, frontend_dir=frontend)
    uvicorn.run(create_app(config), host=host, port=port, log_level="info")


@main.command("chat")
@click.argument("note_path", type=click.Path(exists=True))
@click.option("--condition", default="QA", type=click.Choice(["None", "Q", "QA"]))
@click.option("--source", default="gpt-ie", type=click.Choice(sorted(MODE_NAMES)))
@click.option("--gazetteer", type=click.Path(exists=True), default=None)
@click.option("--human-file", type=click.Path(exists=True), default=None)
@click.option("--fixture", type=click.Path(exists=True), default=None)
@click.option("--cloze", "cloze_path", type=click.Path(exists=True), default=None)
@click.option("--repeat/--no-repeat", default=False,
              help="Re-ask a question once after an incorrect answer.")
@click.option("--transcript", "transcript_out", type=click.Path(), default=None)
def chat(note_path, condition, source, gazetteer, human_file, fixture, cloze_path,
         repeat, transcript_out):
    """Hold a question session over one note in the terminal."""
    try:
        note = _read_note(note_path, "plain")
        cond = Condition(condition)
        mode = MODE_NAMES[source]
        transport = _transport(fixture)
        backend = None
        if gazetteer:
            doc = json.loads(Path(gazetteer).read_text(encoding="utf-8"))
            backend = gazetteer_backend(doc.get("terms", doc), doc.get("patterns"))
        questions = []
        if cond is not Condition.NONE:
            questions = question_set_from_note(
                note, mode, backend=backend, transport=transport,
                human_path=human_file).questions

        def verifier(note_text, history, question, answer):
            return verify_answer(note_text, history, question.text, answer, transport,
                                 answer_key=question.answer_key)

        session = start_session(note, cond, mode, questions,
                                repeat_on_incorrect=repeat)
    except DischargeQaError as exc:
        _fail(exc)

    click.echo("--- discharge instructions ---")
    click.echo(note.full_text)
    click.echo("--- conversation ---")
    while session.phase in (Phase.Reading, Phase.Asking):
        for turn in next_turn(session):
            click.echo(f"bot: {turn.text}")
        if session.phase is Phase.AwaitingAnswer:
            answer = click.prompt("you", default="", show_default=False)
            try:
                emitted = submit_answer(session, answer,
                                        verifier if cond is Condition.QA else None)
            except DischargeQaError as exc:
                click.echo(f"(could not take that answer: {exc})")
                continue
            for turn in emitted:
                if turn.kind is not TurnKind.Answer:
                    click.echo(f"bot: {turn.text}")

    cloze_result = None
    if cloze_path:
        try:
            test = load_cloze_test(cloze_path, note)
            responses = [click.prompt(item.blanked_sentence, default="",
                                      show_default=False)
                         for item in test.items]
            score = score_cloze(test, responses)
        except DischargeQaError as exc:
            _fail(exc)
        cloze_result = {
            "accuracy": score.accuracy,
            "items": [{"given": r.given, "expected": r.expected, "correct": r.correct}
                      for r in score.per_item],
        }
        click.echo(f"quiz accuracy: {score.accuracy:.0%}")
    finish_session(session, cloze_result)
    if transcript_out:
        Path(transcript_out).write_text(transcript_text(session), encoding="utf-8")
        click.echo(f"transcript written to {transcript_out}", err=True)


if __name__ == "__main__":
    main()
