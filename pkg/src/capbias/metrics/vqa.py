"""VQA answer normalization, faithfulness checks, and soft/hard accuracy.

Four question types are built in: open-ended and multiple-choice variants
of object categorization and object counting.  Answers are normalized to a
canonical form before scoring; whatever the pipeline cannot resolve is
flagged for manual review and can be resolved later through an override
table keyed by (image_id, model, question_id).
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from capbias.records import GroundTruthRecord, PredictionRecord

OBJECT_CLASSES = (
    "backpack",
    "tie",
    "water bottle",
    "cup",
    "laptop",
    "mouse",
    "remote",
    "keyboard",
    "cell phone",
    "comic book",
)

OTHER_OPTION = "other"

DEFAULT_BOILERPLATE = (
    r"the objects? (?:in|on) (?:this|the) (?:image|picture|photo) (?:are|is)",
    r"there (?:are|is)",
    r"the (?:image|picture|photo) (?:shows|contains|has)",
    r"i (?:can )?see",
    r"the answer is",
    r"answer\s*:",
    r"objects?\s*:",
)

_NUMBER_WORDS = {
    "zero": "0",
    "one": "1",
    "two": "2",
    "three": "3",
    "four": "4",
    "five": "5",
    "six": "6",
    "seven": "7",
    "eight": "8",
    "nine": "9",
    "ten": "10",
}

_ARTICLES = re.compile(r"\b(?:a|an|the)\b")
_LETTER_PREFIX = re.compile(r"^\(?([a-z])[\s).:\-]+(.*)$")
_PUNCT_EDGES = re.compile(r"^[\s\"'.,;:!?]+|[\s\"'.,;:!?]+$")
_FIRST_INT = re.compile(r"\d+")


def _letters(n: int) -> Tuple[str, ...]:
    return tuple(chr(ord("a") + i) for i in range(n))


@dataclass(frozen=True)
class QuestionSpec:
    question_id: str
    kind: str  # "categorization" or "counting"
    multiple_choice: bool
    options: Optional[Dict[str, str]] = None  # letter -> canonical text
    classes: Tuple[str, ...] = OBJECT_CLASSES
    boilerplate: Tuple[str, ...] = DEFAULT_BOILERPLATE

    def __post_init__(self):
        if self.kind not in ("categorization", "counting"):
            raise ValueError(f"unknown question kind {self.kind!r}")
        if self.multiple_choice and not self.options:
            raise ValueError("multiple-choice question needs options")

    @property
    def max_answer_chars(self) -> int:
        # Counting answers are single digits or an option tag like "B) 3".
        if self.kind == "counting":
            return 4
        return 2 * max(len(c) for c in self.classes)

    @property
    def valid_answers(self) -> Tuple[str, ...]:
        if self.kind == "counting":
            if self.options:
                return tuple(self.options.values())
            return tuple(str(n) for n in range(2, 6))
        if self.options:
            return tuple(self.options.values())
        return self.classes + (OTHER_OPTION,)


def default_questions(classes: Sequence[str] = OBJECT_CLASSES) -> Dict[str, QuestionSpec]:
    classes = tuple(classes)
    mc_class_options = dict(zip(_letters(len(classes) + 1), classes + (OTHER_OPTION,)))
    return {
        "Q1": QuestionSpec("Q1", "categorization", False, classes=classes),
        "Q2": QuestionSpec("Q2", "counting", False, classes=classes),
        "Q3": QuestionSpec("Q3", "categorization", True, options=mc_class_options,
                           classes=classes),
        "Q4": QuestionSpec("Q4", "counting", True,
                           options={"a": "2", "b": "3", "c": "4", "d": "5"},
                           classes=classes),
    }


DEFAULT_QUESTIONS = default_questions()


@dataclass(frozen=True)
class NormalizedAnswer:
    canonical: str
    needs_review: bool
    flags: Tuple[str, ...] = ()


def _singularize(text: str) -> str:
    words = text.split()
    if not words:
        return text
    last = words[-1]
    if len(last) > 1 and last.endswith("s") and not last.endswith("ss"):
        words[-1] = last[:-1]
    return " ".join(words)


def _strip_boilerplate(text: str, patterns: Sequence[str]) -> str:
    for pattern in patterns:
        text = re.sub(pattern, " ", text)
    return text


def normalize_answer(raw: str, spec: QuestionSpec) -> NormalizedAnswer:
    """Reduce a free-form answer to canonical form.

    Returns the canonical text plus flags describing what happened; answers
    the pipeline cannot resolve come back with needs_review set.
    """
    flags: List[str] = []
    text = raw.strip().casefold()
    text = _strip_boilerplate(text, spec.boilerplate).strip()
    text = _PUNCT_EDGES.sub("", text)

    if spec.multiple_choice and spec.options:
        match = _LETTER_PREFIX.match(text)
        letter = None
        remainder = text
        if match:
            letter, remainder = match.group(1), match.group(2).strip()
        elif len(text) == 1 and text.isalpha():
            letter, remainder = text, ""
        if letter is not None:
            if letter in spec.options:
                flags.append("option_mapped")
                text = spec.options[letter]
            else:
                flags.append("invalid_option")
                text = remainder

    for word, digit in _NUMBER_WORDS.items():
        text = re.sub(rf"\b{word}\b", digit, text)

    if spec.kind == "counting":
        match = _FIRST_INT.search(text)
        if match:
            return NormalizedAnswer(match.group(0), False, tuple(flags))
        return NormalizedAnswer(text, True, tuple(flags + ["no_number"]))

    text = _ARTICLES.sub(" ", text)
    text = _PUNCT_EDGES.sub("", re.sub(r"\s+", " ", text)).strip()
    known = set(spec.classes) | {OTHER_OPTION}
    if text in known:
        return NormalizedAnswer(text, False, tuple(flags))
    # Often the class comes back counted and pluralized: "3 cups".
    stripped = re.sub(r"^\d+\s+", "", text)
    singular = _singularize(stripped)
    if singular in known:
        return NormalizedAnswer(singular, False, tuple(flags))
    return NormalizedAnswer(singular, True, tuple(flags + ["unmatched_class"]))


@dataclass(frozen=True)
class FaithResult:
    faithful: bool
    reason: Optional[str] = None


def faithfulness_check(raw: str, spec: QuestionSpec, flags: Sequence[str] = ()) -> FaithResult:
    """Format adherence: answer length and, for MC, option validity."""
    if "invalid_option" in flags:
        return FaithResult(False, "invalid_option")
    if len(raw.strip()) > spec.max_answer_chars:
        return FaithResult(False, "length")
    return FaithResult(True)


@dataclass(frozen=True)
class VqaResult:
    soft_by_bin: Dict[Tuple[str, str, int], float]
    hard_by_bin: Dict[Tuple[str, str, int], float]
    bin_sizes: Dict[Tuple[str, str, int], int]
    soft_overall: Dict[Tuple[str, str], float]
    hard_overall: Dict[Tuple[str, str], float]
    per_image_soft: Dict[Tuple[str, str, str], int]
    per_image_hard: Dict[Tuple[str, str, str], int]
    needs_review: Tuple[Tuple[str, str, str, str, str], ...]
    diagnostics: Tuple[str, ...] = field(default_factory=tuple)


def truth_answer(gt: GroundTruthRecord, spec: QuestionSpec) -> str:
    if spec.kind == "counting":
        return str(gt.count)
    return gt.label


def score_vqa(
    preds: Iterable[PredictionRecord],
    gts: Iterable[GroundTruthRecord],
    questions: Optional[Mapping[str, QuestionSpec]] = None,
    synonyms: Optional[Mapping[str, Sequence[str]]] = None,
    overrides: Optional[Mapping[Tuple[str, str, str], str]] = None,
) -> VqaResult:
    """Soft accuracy scores factuality alone; hard also requires faithfulness.

    Factuality compares the canonical answer with the ground truth, with
    synonyms accepted for categorization.  Each (model, question) pair seen
    in the log is expected to cover every truth image; gaps score 0.
    """
    questions = dict(questions or DEFAULT_QUESTIONS)
    overrides = dict(overrides or {})
    truths = {g.image_id: g for g in gts}
    if not truths:
        raise ValueError("no ground truth records")
    synonym_sets = {
        k.casefold(): {a.casefold() for a in v} for k, v in (synonyms or {}).items()
    }

    answered: Dict[Tuple[str, str], Dict[str, PredictionRecord]] = defaultdict(dict)
    diagnostics: List[str] = []
    for pred in preds:
        if pred.question_id not in questions:
            diagnostics.append(f"unknown question {pred.question_id!r} skipped")
            continue
        if pred.image_id not in truths:
            diagnostics.append(f"prediction for unknown image {pred.image_id!r} ignored")
            continue
        group = answered[(pred.model, pred.question_id)]
        if pred.image_id in group:
            diagnostics.append(f"duplicate answer for {pred.image_id!r} ignored")
            continue
        group[pred.image_id] = pred

    per_image_soft: Dict[Tuple[str, str, str], int] = {}
    per_image_hard: Dict[Tuple[str, str, str], int] = {}
    queue: List[Tuple[str, str, str, str, str]] = []
    soft_sum: Dict[Tuple[str, str, int], int] = defaultdict(int)
    hard_sum: Dict[Tuple[str, str, int], int] = defaultdict(int)
    sizes: Dict[Tuple[str, str, int], int] = defaultdict(int)

    for (model, question_id), by_image in sorted(answered.items()):
        spec = questions[question_id]
        for image_id, truth in truths.items():
            pred = by_image.get(image_id)
            if pred is None or pred.raw_text is None:
                diagnostics.append(
                    f"missing answer from {model!r} for {image_id!r}/{question_id}; scored 0"
                )
                soft = hard = 0
            else:
                raw = pred.raw_text
                normalized = normalize_answer(raw, spec)
                canonical = overrides.get((image_id, model, question_id))
                if canonical is None:
                    canonical = normalized.canonical
                    if normalized.needs_review:
                        queue.append((image_id, model, question_id, raw, canonical))
                else:
                    canonical = canonical.strip().casefold()
                expected = truth_answer(truth, spec).casefold()
                factual = canonical == expected
                if not factual and spec.kind == "categorization":
                    factual = canonical in synonym_sets.get(expected, set())
                faith = faithfulness_check(raw, spec, normalized.flags)
                soft = int(factual)
                hard = int(factual and faith.faithful)
            key = (model, question_id, image_id)
            per_image_soft[key] = soft
            per_image_hard[key] = hard
            bin_key = (model, question_id, truth.ev_offset)
            soft_sum[bin_key] += soft
            hard_sum[bin_key] += hard
            sizes[bin_key] += 1

    soft_by_bin = {k: soft_sum[k] / sizes[k] for k in sizes}
    hard_by_bin = {k: hard_sum[k] / sizes[k] for k in sizes}
    soft_overall: Dict[Tuple[str, str], float] = {}
    hard_overall: Dict[Tuple[str, str], float] = {}
    for model, question_id in answered:
        keys = [k for k in sizes if k[:2] == (model, question_id)]
        n = sum(sizes[k] for k in keys)
        soft_overall[(model, question_id)] = sum(soft_sum[k] for k in keys) / n
        hard_overall[(model, question_id)] = sum(hard_sum[k] for k in keys) / n

    return VqaResult(
        soft_by_bin=soft_by_bin,
        hard_by_bin=hard_by_bin,
        bin_sizes=dict(sizes),
        soft_overall=soft_overall,
        hard_overall=hard_overall,
        per_image_soft=per_image_soft,
        per_image_hard=per_image_hard,
        needs_review=tuple(queue),
        diagnostics=tuple(diagnostics),
    )


@dataclass(frozen=True)
class LengthStat:
    mean: float
    n: int


def response_length_stats(
    preds: Iterable[PredictionRecord],
    gts: Iterable[GroundTruthRecord],
) -> Dict[Tuple[str, int], LengthStat]:
    """Mean raw answer length in characters per (model, ev_offset)."""
    truths = {g.image_id: g for g in gts}
    sums: Dict[Tuple[str, int], int] = defaultdict(int)
    counts: Dict[Tuple[str, int], int] = defaultdict(int)
    for pred in preds:
        truth = truths.get(pred.image_id)
        if truth is None or pred.raw_text is None:
            continue
        key = (pred.model, truth.ev_offset)
        sums[key] += len(pred.raw_text)
        counts[key] += 1
    return {k: LengthStat(sums[k] / counts[k], counts[k]) for k in counts}
