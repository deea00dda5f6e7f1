"""Small text helpers shared by extraction, question generation, and scoring."""

import re

_TERMINAL_PUNCT = ".!?,;:"

_WS_RE = re.compile(r"\s+")

# A sentence ends at ". ", "! ", "? ", or a newline.
_BOUNDARY_RE = re.compile(r"[.!?] |\n")

_NUMBER_WORDS = {
    1: "one", 2: "two", 3: "three", 4: "four", 5: "five",
    6: "six", 7: "seven", 8: "eight", 9: "nine", 10: "ten",
}


def collapse_ws(text):
    """Trim and squash runs of whitespace down to single spaces."""
    return _WS_RE.sub(" ", text).strip()


def normalize_answer(text):
    """Lowercase, trim, collapse whitespace, and strip terminal punctuation."""
    return collapse_ws(text.lower()).rstrip(_TERMINAL_PUNCT).rstrip()


def normalize_surface(text):
    """Lowercase and collapse whitespace; used for seen/unseen surface matching."""
    return collapse_ws(text.lower())


def spell_count(n):
    """Spell small counts out as words ("four"); larger ones stay digits."""
    return _NUMBER_WORDS.get(n, str(n))


def sentence_spans(text):
    """Return (start, end) offsets of sentences, trimmed of edge whitespace.

    Boundaries are ". ", "! ", "? ", and newlines, which is deliberately
    simple: discharge notes are short declarative lines and this keeps the
    rule auditable.
    """
    spans = []
    cursor = 0
    for match in _BOUNDARY_RE.finditer(text):
        end = match.end() if match.group() != "\n" else match.start()
        spans.append((cursor, end))
        cursor = match.end()
    spans.append((cursor, len(text)))

    trimmed = []
    for start, end in spans:
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if end > start:
            trimmed.append((start, end))
    return trimmed


def sentence_enclosing(text, start, end):
    """Return the sentence span containing [start, end), or None."""
    for s_start, s_end in sentence_spans(text):
        if s_start <= start and end <= s_end:
            return (s_start, s_end)
    return None
