import pytest
from hypothesis import given
from hypothesis import strategies as st

from dischargeqa.errors import EmptyAnswer
from dischargeqa.llmclient import ScriptedTransport
from dischargeqa.verify import (
    APOLOGY,
    PHYSICIAN_ROLE,
    VERIFY_INSTRUCTION,
    Verdict,
    VerdictLabel,
    build_verification_prompt,
    parse_verdict,
    verify_answer,
)

NOTE = "You were treated for pneumonia. Take Keflex 250 mg for five days."


class TestPromptAssembly:
    def test_message_order_without_history(self):
        request = build_verification_prompt(NOTE, [], "What were you treated for?",
                                            "pneumonia")
        assert request.messages == (
            ("system", PHYSICIAN_ROLE),
            ("user", NOTE),
            ("assistant", "What were you treated for?"),
            ("user", "pneumonia"),
            ("user", VERIFY_INSTRUCTION),
        )

    def test_history_is_interleaved(self):
        history = [("Q1?", "A1", "F1"), ("Q2?", "A2", "F2")]
        request = build_verification_prompt(NOTE, history, "Q3?", "A3")
        roles = [role for role, _ in request.messages]
        assert roles == ["system", "user",
                         "assistant", "user", "assistant",
                         "assistant", "user", "assistant",
                         "assistant", "user", "user"]
        contents = [content for _, content in request.messages]
        assert contents[2:5] == ["Q1?", "A1", "F1"]
        assert contents[5:8] == ["Q2?", "A2", "F2"]
        assert contents[8:] == ["Q3?", "A3", VERIFY_INSTRUCTION]

    def test_blank_answer_rejected(self):
        with pytest.raises(EmptyAnswer):
            build_verification_prompt(NOTE, [], "Q?", "   ")

    def test_sampling_defaults(self):
        request = build_verification_prompt(NOTE, [], "Q?", "A")
        assert request.temperature == 0.0
        assert request.model_id == "gpt-4"


class TestParseVerdict:
    @pytest.mark.parametrize("text,label", [
        ("Correct! Great job remembering your medication.", VerdictLabel.Correct),
        ("That is correct.", VerdictLabel.Correct),
        ("Your answer is incorrect. The scan showed diverticulitis.",
         VerdictLabel.Incorrect),
        ("That is not correct, please look again.", VerdictLabel.Incorrect),
        ("Your answer is partially correct. You missed the dose.",
         VerdictLabel.PartiallyCorrect),
        ("Partially correct! You remembered the drug but not the schedule.",
         VerdictLabel.PartiallyCorrect),
        ("Keep studying the instructions.", VerdictLabel.Unparseable),
        ("", VerdictLabel.Unparseable),
    ])
    def test_labels(self, text, label):
        verdict = parse_verdict(text)
        assert verdict.label is label
        assert verdict.feedback == text

    def test_partially_correct_beats_correct(self):
        # "partially correct" contains "correct"; precedence must protect it
        assert parse_verdict("partially correct").label is VerdictLabel.PartiallyCorrect

    def test_incorrect_beats_correct(self):
        assert parse_verdict("incorrect").label is VerdictLabel.Incorrect

    @given(st.text(max_size=40), st.text(max_size=40))
    def test_partially_correct_never_reads_as_plain_correct(self, prefix, suffix):
        verdict = parse_verdict(prefix + "partially correct" + suffix)
        assert verdict.label is not VerdictLabel.Correct

    @given(st.text(max_size=40), st.text(max_size=40))
    def test_wrapped_incorrect_never_reads_as_correct(self, prefix, suffix):
        text = prefix + "incorrect" + suffix
        if "partially correct" in text.lower():
            return
        assert parse_verdict(text).label is VerdictLabel.Incorrect


class TestVerifyAnswer:
    def test_end_to_end_parse(self):
        transport = ScriptedTransport(["That is correct, well done."])
        verdict = verify_answer(NOTE, [], "Q?", "pneumonia", transport)
        assert verdict.label is VerdictLabel.Correct
        assert verdict.degraded is False

    def test_degrades_when_transport_dead(self):
        verdict = verify_answer(NOTE, [], "Q?", "pneumonia", None)
        assert verdict.label is VerdictLabel.Unparseable
        assert verdict.feedback == APOLOGY
        assert verdict.degraded is True

    def test_degrades_on_exhausted_script(self):
        verdict = verify_answer(NOTE, [], "Q?", "pneumonia", ScriptedTransport([]))
        assert verdict.degraded is True

    def test_answer_key_shortcut_is_opt_in(self):
        transport = ScriptedTransport(["Verdict: incorrect."])
        verdict = verify_answer(NOTE, [], "Q?", "Pneumonia ", transport,
                                answer_key="pneumonia")
        # key matches, but the shortcut is off, so the model is consulted
        assert verdict.label is VerdictLabel.Incorrect
        assert len(transport.calls) == 1

    def test_answer_key_shortcut_when_enabled(self):
        transport = ScriptedTransport(["should never be called"])
        verdict = verify_answer(NOTE, [], "Q?", " PNEUMONIA. ", transport,
                                answer_key="pneumonia", use_answer_key=True)
        assert verdict.label is VerdictLabel.Correct
        assert transport.calls == []

    def test_key_mismatch_still_asks_model(self):
        transport = ScriptedTransport(["partially correct, the dose was 250 mg"])
        verdict = verify_answer(NOTE, [], "Q?", "the flu", transport,
                                answer_key="pneumonia", use_answer_key=True)
        assert verdict.label is VerdictLabel.PartiallyCorrect
        assert len(transport.calls) == 1


def test_verdict_requires_feedback_unless_unparseable():
    with pytest.raises(ValueError):
        Verdict(VerdictLabel.Correct, "   ")
    Verdict(VerdictLabel.Unparseable, "")
