import json

import pytest
from click.testing import CliRunner

from dischargeqa.cli import main
from dischargeqa.dialogue import (
    Condition,
    Phase,
    finish_session,
    next_turn,
    parse_transcript,
    start_session,
    submit_answer,
    transcript_text,
)
from dischargeqa.evaluation import JUDGE_SCORE_KEYS, judge_transcript
from dischargeqa.llmclient import ChatRequest, RecordingTransport, ScriptedTransport, complete
from dischargeqa.qgen import AssemblyMode, load_human_questions
from tests.conftest import NOTE_TEXT, LEXICON


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def note_file(tmp_path):
    path = tmp_path / "note.txt"
    path.write_text(NOTE_TEXT, encoding="utf-8")
    return str(path)


@pytest.fixture
def gazetteer_file(tmp_path):
    path = tmp_path / "gazetteer.json"
    path.write_text(json.dumps({"terms": LEXICON}), encoding="utf-8")
    return str(path)


@pytest.fixture
def annotations_file(tmp_path):
    def locate(needle, occurrence=0):
        start = -1
        for _ in range(occurrence + 1):
            start = NOTE_TEXT.index(needle, start + 1)
        return start, start + len(needle)

    cut = NOTE_TEXT.index("Followup Instructions:")
    events = []
    for event_id, (needle, occurrence, etype) in {
        "e1": ("abdominal pain", 0, "Symptom"),
        "e2": ("CT scan", 0, "Test"),
        "e3": ("CT scan", 1, "Test"),
        "e4": ("find the cause of your pain", 0, "TestGoal"),
    }.items():
        start, end = locate(needle, occurrence)
        events.append({"event_id": event_id, "start": start, "end": end,
                       "etype": etype})
    doc = [{
        "note_id": "note-demo",
        "full_text": NOTE_TEXT,
        "visit_recap": [0, cut],
        "detailed_instructions": [cut, len(NOTE_TEXT)],
        "split": "train",
        "events": events,
        "relations": [{"head": "e2", "tail": "e4", "rtype": "TestGoal"}],
    }]
    path = tmp_path / "annotations.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


class TestCorpusCommands:
    def test_validate(self, runner, annotations_file):
        result = runner.invoke(main, ["corpus", "validate", annotations_file])
        assert result.exit_code == 0
        assert result.output.strip() == "ok: 1 notes, 4 events, 1 relations"

    def test_validate_rejects_bad_file(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"not": "a list"}), encoding="utf-8")
        result = runner.invoke(main, ["corpus", "validate", str(bad)])
        assert result.exit_code == 1

    def test_pairs_stdout(self, runner, annotations_file):
        result = runner.invoke(main, ["corpus", "pairs", annotations_file])
        assert result.exit_code == 0
        rows = [json.loads(line) for line in result.output.splitlines() if line]
        assert len(rows) == 2
        labels = {(row["head"], row["label"]) for row in rows}
        assert ("e2", True) in labels
        assert ("e3", False) in labels

    def test_pairs_to_file(self, runner, annotations_file, tmp_path):
        out = tmp_path / "pairs.jsonl"
        result = runner.invoke(main, ["corpus", "pairs", annotations_file,
                                      "--out", str(out)])
        assert result.exit_code == 0
        assert "wrote 2 pairs (1 positive)" in result.output
        assert len(out.read_text(encoding="utf-8").splitlines()) == 2


class TestExtractCommands:
    def test_events(self, runner, note_file, gazetteer_file):
        result = runner.invoke(main, ["extract", "events", note_file,
                                      "--gazetteer", gazetteer_file])
        assert result.exit_code == 0
        events = json.loads(result.output)
        surfaces = {(ev["surface"], ev["etype"]) for ev in events}
        assert ("CT scan", "Test") in surfaces
        assert ("abdominal pain", "Symptom") in surfaces

    def test_events_requires_gazetteer(self, runner, note_file):
        result = runner.invoke(main, ["extract", "events", note_file])
        assert result.exit_code == 2

    def test_relations(self, runner, note_file, gazetteer_file):
        result = runner.invoke(main, ["extract", "relations", note_file,
                                      "--gazetteer", gazetteer_file])
        assert result.exit_code == 0
        rows = json.loads(result.output)
        accepted = [(r["head"]["surface"], r["tail"]["surface"], r["rtype"])
                    for r in rows if r["label"]]
        assert ("CT scan", "find the cause of your pain", "TestGoal") in accepted


class TestQgenCommand:
    def test_human_mode_unknown_note_id_fails(self, runner, note_file,
                                              human_questions_file):
        # the file keys questions by "note-demo" but a bare text file gets a
        # content-hash id, so the lookup must fail loudly
        result = runner.invoke(main, [
            "qgen", note_file, "--mode", "human",
            "--human-file", str(human_questions_file)])
        assert result.exit_code == 1

    def test_human_mode_with_array_file(self, runner, note_file, tmp_path):
        human = tmp_path / "questions.json"
        human.write_text(json.dumps([
            {"text": "What condition did the CT scan show?"},
            {"text": "How often should you take Ciprofloxacin?"},
        ]), encoding="utf-8")
        result = runner.invoke(main, ["qgen", note_file, "--mode", "human",
                                      "--human-file", str(human)])
        assert result.exit_code == 0
        doc = json.loads(result.output)
        assert [q["text"] for q in doc["questions"]] == [
            "What condition did the CT scan show?",
            "How often should you take Ciprofloxacin?"]

    def test_gpt_ie_mode(self, runner, note_file, gazetteer_file, tmp_path):
        out = tmp_path / "questions.json"
        result = runner.invoke(main, ["qgen", note_file, "--mode", "gpt-ie",
                                      "--gazetteer", gazetteer_file,
                                      "--out", str(out)])
        assert result.exit_code == 0
        assert "questions to" in result.output
        doc = json.loads(out.read_text(encoding="utf-8"))
        texts = [q["text"] for q in doc["questions"]]
        assert "What is the goal of test CT scan?" in texts
        assert len(texts) >= 4

    def test_gpt_ie_needs_gazetteer(self, runner, note_file):
        result = runner.invoke(main, ["qgen", note_file, "--mode", "gpt-ie"])
        assert result.exit_code == 1


class TestEvalCommands:
    def test_cloze(self, runner, tmp_path, cloze_items):
        test_path = tmp_path / "cloze.json"
        test_path.write_text(json.dumps({"note_id": "note-demo",
                                         "items": cloze_items}), encoding="utf-8")
        responses_path = tmp_path / "responses.json"
        responses_path.write_text(json.dumps({"responses": [
            "diverticulitis", "Ciprofloxacin", "500mg", "7 days",
            "abdominal pain"]}), encoding="utf-8")
        result = runner.invoke(main, ["eval", "cloze", "--test", str(test_path),
                                      "--responses", str(responses_path)])
        assert result.exit_code == 0
        report = json.loads(result.output)
        assert report["kind"] == "cloze"
        assert report["data"]["accuracy"] == 1.0

    def test_mrr(self, runner, tmp_path):
        rankings = tmp_path / "rankings.csv"
        rankings.write_text(
            "evaluator_id,aspect,condition,rank\n"
            "ev1,Overall,QA,1\n"
            "ev1,Overall,Q,2\n"
            "ev1,Overall,None,3\n"
            "ev2,Overall,QA,2\n"
            "ev2,Overall,Q,1\n"
            "ev2,Overall,None,3\n",
            encoding="utf-8")
        result = runner.invoke(main, ["eval", "mrr", "--rankings", str(rankings),
                                      "--aspect", "Overall", "--target", "QA"])
        assert result.exit_code == 0
        report = json.loads(result.output)
        assert report["data"]["mrr"] == pytest.approx(0.75)
        assert report["data"]["evaluators"] == 2

    def test_heuristic(self, runner, tmp_path):
        codes = tmp_path / "codes.json"
        codes.write_text(json.dumps([
            {"comprehension": True, "usefulness": True},
            {"comprehension": False, "usefulness": True},
        ]), encoding="utf-8")
        result = runner.invoke(main, ["eval", "heuristic", "--codes", str(codes)])
        assert result.exit_code == 0
        report = json.loads(result.output)
        assert report["data"]["rates"]["comprehension"]["rate"] == 0.5
        assert report["data"]["rates"]["usefulness"]["rate"] == 1.0

    def test_judge(self, runner, tmp_path, note, human_questions_file):
        questions = load_human_questions(str(human_questions_file), note.note_id)
        session = start_session(note, Condition.Q, AssemblyMode.HUMAN, questions)
        while session.phase in (Phase.Reading, Phase.Asking):
            next_turn(session)
            if session.phase is Phase.AwaitingAnswer:
                submit_answer(session, "an answer")
        finish_session(session, None)

        transcript_path = tmp_path / "transcript.jsonl"
        transcript_path.write_text(transcript_text(session), encoding="utf-8")
        note_path = tmp_path / "note.txt"
        note_path.write_text(note.full_text, encoding="utf-8")

        scores_doc = dict.fromkeys(JUDGE_SCORE_KEYS, 4)
        fixture = tmp_path / "judge.jsonl"
        header, turns = parse_transcript(transcript_path.read_text(encoding="utf-8"))
        judge_transcript(note.full_text, turns, header["phase"],
                         RecordingTransport(ScriptedTransport(
                             [json.dumps(scores_doc)]), fixture))

        result = runner.invoke(main, ["eval", "judge", "--note", str(note_path),
                                      "--transcript", str(transcript_path),
                                      "--fixture", str(fixture)])
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        assert report["kind"] == "judge"
        assert report["data"]["scores"] == scores_doc


class TestLlmCommands:
    def ping_request(self):
        return ChatRequest("gpt-4", (("user", "ping"),), max_tokens=16)

    def test_ping_with_fixture(self, runner, tmp_path):
        fixture = tmp_path / "ping.jsonl"
        complete(self.ping_request(),
                 RecordingTransport(ScriptedTransport(["pong"]), fixture))
        result = runner.invoke(main, ["llm", "ping", "--fixture", str(fixture)])
        assert result.exit_code == 0
        assert result.output.strip() == "ok: pong"

    def test_ping_without_transport_fails(self, runner, monkeypatch):
        monkeypatch.delenv("LLM_BASE_URL", raising=False)
        monkeypatch.delenv("DISCHARGEQA_LLM_FIXTURE", raising=False)
        monkeypatch.delenv("DISCHARGEQA_RECORD_FIXTURE", raising=False)
        result = runner.invoke(main, ["llm", "ping"])
        assert result.exit_code == 1

    def test_record_wraps_subcommand(self, runner, tmp_path, monkeypatch):
        monkeypatch.delenv("DISCHARGEQA_RECORD_FIXTURE", raising=False)
        base = tmp_path / "base.jsonl"
        complete(self.ping_request(),
                 RecordingTransport(ScriptedTransport(["pong"]), base))

        recorded = tmp_path / "recorded.jsonl"
        result = runner.invoke(main, ["llm", "record", "--fixture", str(recorded),
                                      "--", "llm", "ping", "--fixture", str(base)])
        assert result.exit_code == 0, result.output
        assert recorded.exists()

        replayed = runner.invoke(main, ["llm", "ping", "--fixture", str(recorded)])
        assert replayed.exit_code == 0
        assert replayed.output.strip() == "ok: pong"


class TestChatCommand:
    def test_q_session_with_quiz_and_transcript(self, runner, tmp_path, note_file,
                                                cloze_items):
        # the note file hashes to its own id; key the question file by that id
        from dischargeqa.corpus import ingest_note
        note = ingest_note(NOTE_TEXT, "plain")
        human = tmp_path / "human.json"
        human.write_text(json.dumps({note.note_id: [
            {"text": "What condition did the CT scan show?"},
            {"text": "How often should you take Ciprofloxacin?"},
        ]}), encoding="utf-8")
        cloze = tmp_path / "cloze.json"
        cloze.write_text(json.dumps({"note_id": note.note_id,
                                     "items": cloze_items}), encoding="utf-8")
        transcript_out = tmp_path / "transcript.jsonl"

        result = runner.invoke(main, [
            "chat", note_file, "--condition", "Q", "--source", "human",
            "--human-file", str(human), "--cloze", str(cloze),
            "--transcript", str(transcript_out),
        ], input="diverticulitis\ntwice a day\n"
                 "diverticulitis\nCiprofloxacin\n500 mg\n7 days\nabdominal pain\n")
        assert result.exit_code == 0, result.output
        assert "What condition did the CT scan show?" in result.output
        assert "quiz accuracy: 100%" in result.output

        header, turns = parse_transcript(transcript_out.read_text(encoding="utf-8"))
        assert header["phase"] == "Finished"
        assert [t.kind.value for t in turns].count("Prompt") == 2

    def test_none_condition_has_no_prompts(self, runner, note_file):
        result = runner.invoke(main, ["chat", note_file, "--condition", "None",
                                      "--source", "human"])
        assert result.exit_code == 0, result.output
        assert "you:" not in result.output
