"""Consensus voting over sampled decodes.

Each sampled output is canonicalized by executing its payload; samples whose
canonical answers are equal form one group, so distinct derivations with the
same value ("(88-105)/105" vs "88/105-1", or permuted count lists) pool
their votes. The plurality group wins. Samples that fail to parse or execute
cast no vote.
"""

from __future__ import annotations

import functools
import re
import string
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from .derivation import (
    DEFAULT_CONFIG,
    CountValue,
    DerivationError,
    EvalConfig,
    NumericValue,
    SpanListValue,
    execute_source,
    render_decimal,
)
from .linearize import MalformedOutput, Task, parse_output

_PUNCT = re.compile("[" + re.escape(string.punctuation) + "]")
_WS = re.compile(r"\s+")


def normalize_answer_text(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return _WS.sub(" ", _PUNCT.sub("", text.lower())).strip()


@dataclass(frozen=True)
class SampledOutput:
    raw: str
    index: int
    score: float | None = None


@dataclass(frozen=True)
class SampleSet:
    samples: tuple[SampledOutput, ...]

    def __post_init__(self):
        if not self.samples:
            raise ValueError("SampleSet needs at least one sample")
        if [s.index for s in self.samples] != list(range(len(self.samples))):
            raise ValueError("sample indices must be 0..N-1 without gaps")

    @classmethod
    def from_texts(cls, texts: list[str], scores: list[float] | None = None) -> "SampleSet":
        return cls(
            tuple(
                SampledOutput(raw=t, index=i, score=scores[i] if scores else None)
                for i, t in enumerate(texts)
            )
        )

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class NumericAnswer:
    value: Fraction
    exemplar: Optional[SampledOutput] = field(default=None, compare=False)

    def rendered(self, config: EvalConfig = DEFAULT_CONFIG) -> str:
        return render_decimal(self.value, config.render_precision)


@dataclass(frozen=True)
class CountAnswer:
    count: int
    exemplar: Optional[SampledOutput] = field(default=None, compare=False)


@dataclass(frozen=True)
class SpanSetAnswer:
    """Spans as produced, with order-insensitive, normalized-text equality."""

    spans: tuple[str, ...]
    exemplar: Optional[SampledOutput] = field(default=None, compare=False)

    def normalized(self) -> tuple[str, ...]:
        return tuple(sorted(normalize_answer_text(s) for s in self.spans))


@dataclass(frozen=True)
class ClarifyAnswer:
    question: str
    exemplar: Optional[SampledOutput] = field(default=None, compare=False)

    def normalized(self) -> str:
        return normalize_answer_text(self.question)


CanonicalAnswer = Union[NumericAnswer, CountAnswer, SpanSetAnswer, ClarifyAnswer]


def group_key(answer: CanonicalAnswer) -> tuple:
    """Hashable grouping key under the documented equality rules.

    Counts and plain numbers with the same value share a key: executing
    "len([...])" and executing a numeral both denote that number, so they
    are one answer for voting purposes.
    """
    if isinstance(answer, NumericAnswer):
        return ("num", answer.value)
    if isinstance(answer, CountAnswer):
        return ("num", Fraction(answer.count))
    if isinstance(answer, SpanSetAnswer):
        return ("spans", answer.normalized())
    return ("clarify", answer.normalized())


def answers_equal(
    a: CanonicalAnswer | None, b: CanonicalAnswer | None, config: EvalConfig = DEFAULT_CONFIG
) -> bool:
    if a is None or b is None:
        return a is b
    ka, kb = group_key(a), group_key(b)
    if ka[0] != kb[0]:
        return False
    if ka[0] == "num":
        diff = abs(ka[1] - kb[1])
        return diff <= Fraction(config.numeric_tolerance) or ka[1] == kb[1]
    return ka == kb


class AllSamplesDiscarded(Exception):
    """Every sample failed parsing or execution; fall back to greedy decode."""


def canonicalize(
    sample: SampledOutput, task: Task = Task.MULTI, config: EvalConfig = DEFAULT_CONFIG
) -> CanonicalAnswer | None:
    """Execute one sampled output into a canonical answer; None = discard.

    Clarifying outputs must carry a single-item string list as payload;
    everything else is executed through the derivation language.
    """
    try:
        parsed = parse_output(sample.raw, task)
    except MalformedOutput:
        return None
    if parsed.clarification_flag is True:
        try:
            result = execute_source(parsed.response_payload, config)
        except DerivationError:
            return None
        if not isinstance(result.value, SpanListValue) or len(result.value.items) != 1:
            return None
        return ClarifyAnswer(question=result.value.items[0], exemplar=sample)
    try:
        result = execute_source(parsed.response_payload, config)
    except DerivationError:
        return None
    value = result.value
    if isinstance(value, NumericValue):
        return NumericAnswer(value=value.value, exemplar=sample)
    if isinstance(value, CountValue):
        return CountAnswer(count=value.count, exemplar=sample)
    return SpanSetAnswer(spans=value.items, exemplar=sample)


@dataclass
class _Group:
    answer: CanonicalAnswer
    count: int
    min_index: int
    score_sum: float
    all_scored: bool
    members: list[SampledOutput]


@dataclass(frozen=True)
class VoteResult:
    winner: CanonicalAnswer
    tallies: tuple[tuple[CanonicalAnswer, int], ...]
    discarded: int

    def counts(self) -> list[int]:
        return [count for _, count in self.tallies]

    def to_record(self, config: EvalConfig = DEFAULT_CONFIG) -> dict:
        return {
            "winner": describe_answer(self.winner, config),
            "tallies": [
                {
                    "answer": describe_answer(answer, config),
                    "votes": count,
                    "exemplar": answer.exemplar.raw if answer.exemplar else None,
                }
                for answer, count in self.tallies
            ],
            "discarded": self.discarded,
        }


def describe_answer(answer: CanonicalAnswer | None, config: EvalConfig = DEFAULT_CONFIG) -> dict:
    if answer is None:
        return {"kind": "none"}
    if isinstance(answer, NumericAnswer):
        return {"kind": "number", "value": str(answer.value), "rendered": answer.rendered(config)}
    if isinstance(answer, CountAnswer):
        return {"kind": "count", "value": answer.count}
    if isinstance(answer, SpanSetAnswer):
        return {"kind": "spans", "value": list(answer.spans)}
    return {"kind": "clarify", "value": answer.question}


def consensus_vote(
    samples: SampleSet, task: Task = Task.MULTI, config: EvalConfig = DEFAULT_CONFIG
) -> VoteResult:
    """Plurality vote over canonicalized samples.

    Ties break on higher total sequence score when every sample in the tied
    groups carries one, then on the lowest exemplar sampling index; both
    rules make repeated runs deterministic.
    """
    groups: dict[tuple, _Group] = {}
    discarded = 0
    for sample in samples.samples:
        answer = canonicalize(sample, task, config)
        if answer is None:
            discarded += 1
            continue
        key = group_key(answer)
        group = groups.get(key)
        if group is None:
            groups[key] = _Group(
                answer=answer,
                count=1,
                min_index=sample.index,
                score_sum=sample.score or 0.0,
                all_scored=sample.score is not None,
                members=[sample],
            )
        else:
            group.count += 1
            group.score_sum += sample.score or 0.0
            group.all_scored = group.all_scored and sample.score is not None
            group.members.append(sample)
    if not groups:
        raise AllSamplesDiscarded(f"all {len(samples)} samples discarded")
    _merge_numeric_within_tolerance(groups, config)

    def compare(a: _Group, b: _Group) -> int:
        if a.count != b.count:
            return -1 if a.count > b.count else 1
        if a.all_scored and b.all_scored and a.score_sum != b.score_sum:
            return -1 if a.score_sum > b.score_sum else 1
        return -1 if a.min_index < b.min_index else 1

    ordered = sorted(groups.values(), key=functools.cmp_to_key(compare))
    tallies = tuple((g.answer, g.count) for g in ordered)
    return VoteResult(winner=ordered[0].answer, tallies=tallies, discarded=discarded)


def _merge_numeric_within_tolerance(groups: dict[tuple, _Group], config: EvalConfig) -> None:
    """Fold numeric groups whose exact values differ by at most the tolerance.

    Exact rational execution makes equivalent derivations collide exactly, so
    this almost never fires; it exists so the configured tolerance means the
    same thing for voting as for scoring. Earlier-seen groups absorb later ones.
    """
    tol = Fraction(config.numeric_tolerance)
    numeric_keys = [k for k in groups if k[0] == "num"]
    absorbed: set[tuple] = set()
    for i, key in enumerate(numeric_keys):
        if key in absorbed:
            continue
        for other in numeric_keys[i + 1 :]:
            if other in absorbed:
                continue
            if abs(key[1] - other[1]) <= tol:
                host, guest = groups[key], groups[other]
                host.count += guest.count
                host.score_sum += guest.score_sum
                host.all_scored = host.all_scored and guest.all_scored
                host.min_index = min(host.min_index, guest.min_index)
                host.members.extend(guest.members)
                absorbed.add(other)
    for key in absorbed:
        del groups[key]


def greedy_select(
    samples: SampleSet, task: Task = Task.MULTI, config: EvalConfig = DEFAULT_CONFIG
) -> CanonicalAnswer | None:
    """Canonical answer of the single greedy decode (baseline and fallback)."""
    if len(samples) != 1:
        raise ValueError("greedy selection expects exactly one sample")
    return canonicalize(samples.samples[0], task, config)
