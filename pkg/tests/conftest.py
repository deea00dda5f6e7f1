import json

import pytest

from dischargeqa.corpus import ingest_note
from dischargeqa.extraction import gazetteer_backend

NOTE_TEXT = """\
You were admitted with abdominal pain. A CT scan was done to find the cause of your pain. \
The CT scan showed diverticulitis. You were treated with antibiotics and your pain improved.

Followup Instructions:
Please continue taking Ciprofloxacin 500 mg twice a day for 7 days.
You have a follow-up appointment at the gastroenterology clinic on Monday.
"""

LEXICON = {
    "Symptom": ["abdominal pain"],
    "Test": ["CT scan"],
    "TestGoal": ["find the cause of your pain"],
    "TestResult": ["diverticulitis"],
    "Medicine": ["antibiotics", "Ciprofloxacin"],
    "TreatmentResult": ["your pain improved"],
}


@pytest.fixture
def note():
    return ingest_note(NOTE_TEXT, "plain", note_id="note-demo")


@pytest.fixture
def backend():
    return gazetteer_backend(LEXICON)


@pytest.fixture
def human_questions_file(tmp_path):
    path = tmp_path / "human.json"
    path.write_text(json.dumps({
        "note-demo": [
            {"text": "What condition did the CT scan show?", "answer_key": "diverticulitis"},
            {"text": "How often should you take Ciprofloxacin?", "answer_key": "twice a day"},
        ],
    }), encoding="utf-8")
    return path


@pytest.fixture
def cloze_items():
    return [
        {"blanked_sentence": "The CT scan showed _____.", "gold": "diverticulitis"},
        {"blanked_sentence": "Please continue taking _____ 500 mg twice a day.",
         "gold": "Ciprofloxacin"},
        {"blanked_sentence": "Please continue taking Ciprofloxacin _____ twice a day.",
         "gold": "500 mg", "aliases": ["500mg"]},
        {"blanked_sentence": "Take Ciprofloxacin twice a day for _____.", "gold": "7 days"},
        {"blanked_sentence": "You were admitted with _____.", "gold": "abdominal pain"},
    ]
