"""End-to-end evaluation loop against a generation service.

For each turn: linearize the document and conversation history, request a
greedy decode or a batch of sampled decodes, reduce them to one canonical
answer (consensus voting or the greedy baseline), then score against gold.
Gold-history mode conditions every turn on gold prior responses and may
fan out requests concurrently; predicted-history mode feeds each turn's own
final response into the next turn's history and is sequential within a
dialogue. Reports are a deterministic function of (corpus, decodes, config)
regardless of request scheduling.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

from .corpus import Corpus, Dialogue, DialogueTurn
from .derivation import DEFAULT_CONFIG, EvalConfig
from .generation import (
    GREEDY,
    SAMPLE,
    GenerationRequest,
    Generator,
)
from .linearize import (
    ConversationHistory,
    HybridDocument,
    Task,
    build_model_input,
    format_target,
    normalize_whitespace,
)
from .metrics import (
    EmptyRecordSet,
    MetricReport,
    PredictionRecord,
    aggregate_report,
    record_scores,
    response_text,
)
from .voting import (
    AllSamplesDiscarded,
    CanonicalAnswer,
    ClarifyAnswer,
    SampledOutput,
    SampleSet,
    VoteResult,
    canonicalize,
    consensus_vote,
    greedy_select,
)

logger = logging.getLogger(__name__)

CV = "cv"


class UnknownTurnId(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    mode: str = CV  # "cv" or "greedy"
    history: str = "gold"  # "gold" or "predicted"
    eval_config: EvalConfig = field(default_factory=EvalConfig)
    num_samples: int = 40
    top_k: int = 40
    temperature: float = 0.5
    max_target_length: int = 128
    concurrency: int = 8

    def __post_init__(self):
        if self.mode not in (CV, GREEDY):
            raise ValueError(f"mode must be cv or greedy, got {self.mode!r}")
        if self.history not in ("gold", "predicted"):
            raise ValueError(f"history must be gold or predicted, got {self.history!r}")


@dataclass
class TurnResult:
    turn_id: str
    mode: str
    samples: list[str]
    vote: VoteResult | None
    answer: CanonicalAnswer | None
    final_text: str
    clarification_pred: bool
    fallback_used: bool
    latency_s: float


def run_turn(
    doc: HybridDocument,
    history: ConversationHistory,
    turn: DialogueTurn,
    generator: Generator,
    config: RunConfig,
) -> TurnResult:
    """Generate, vote (or greedy-select), and render one turn's response.

    When every sampled output is discarded, an extra greedy request is the
    fallback; if that decode is also unusable the turn yields the empty
    answer and scores zero. Malformed model output never aborts a run.
    """
    started = time.perf_counter()
    model_input = build_model_input(doc, history)
    vote: VoteResult | None = None
    answer: CanonicalAnswer | None = None
    fallback = False
    if config.mode == CV:
        response = generator.generate(
            GenerationRequest(
                input=model_input,
                mode=SAMPLE,
                num_samples=config.num_samples,
                top_k=config.top_k,
                temperature=config.temperature,
                max_target_length=config.max_target_length,
                turn_id=turn.turn_id,
            )
        )
        samples = SampleSet.from_texts(
            [o.text for o in response.outputs], [o.score for o in response.outputs]
        )
        try:
            vote = consensus_vote(samples, Task.MULTI, config.eval_config)
            answer = vote.winner
        except AllSamplesDiscarded:
            fallback = True
    else:
        response = generator.generate(
            GenerationRequest(
                input=model_input,
                mode=GREEDY,
                max_target_length=config.max_target_length,
                turn_id=turn.turn_id,
            )
        )
        samples = SampleSet.from_texts([o.text for o in response.outputs])
        answer = greedy_select(samples, Task.MULTI, config.eval_config)
    if fallback:
        greedy_response = generator.generate(
            GenerationRequest(
                input=model_input,
                mode=GREEDY,
                max_target_length=config.max_target_length,
                turn_id=turn.turn_id,
            )
        )
        answer = greedy_select(
            SampleSet.from_texts([o.text for o in greedy_response.outputs]),
            Task.MULTI,
            config.eval_config,
        )
    return TurnResult(
        turn_id=turn.turn_id,
        mode=config.mode,
        samples=[s.raw for s in samples.samples],
        vote=vote,
        answer=answer,
        final_text=response_text(answer, config.eval_config),
        clarification_pred=isinstance(answer, ClarifyAnswer),
        fallback_used=fallback,
        latency_s=time.perf_counter() - started,
    )


def _turn_record(
    dialogue: Dialogue, turn: DialogueTurn, result: TurnResult, config: RunConfig
) -> tuple[PredictionRecord, dict]:
    record = PredictionRecord(
        turn_id=turn.turn_id,
        predicted=result.answer,
        predicted_scale="",
        gold=turn.gold,
        clarification_pred=result.clarification_pred,
    )
    em, f1 = record_scores(record, config.eval_config)
    log = {
        "turn_id": turn.turn_id,
        "dialogue_id": dialogue.dialogue_id,
        "mode": result.mode,
        "history": config.history,
        "final_response": result.final_text,
        "clarification_pred": result.clarification_pred,
        "clarification_gold": turn.gold.req_clari,
        "em": em,
        "f1": round(f1, 6),
        "fallback_used": result.fallback_used,
        "latency_ms": round(result.latency_s * 1000, 3),
        "vote": result.vote.to_record(config.eval_config) if result.vote else None,
        "samples": result.samples,
        "gold": {
            "answer_type": turn.gold.answer_type,
            "answer": turn.gold.answer,
            "scale": turn.gold.scale,
            "source": turn.gold.source,
            "derivation": turn.gold.derivation,
            "clarification_question": turn.gold.clarification_question,
        },
    }
    return record, log


def _gold_histories(dialogue: Dialogue, config: RunConfig) -> list[ConversationHistory]:
    histories = []
    queries: list[str] = []
    responses: list[str] = []
    for turn in dialogue.turns:
        queries.append(turn.question)
        histories.append(ConversationHistory.from_turns(queries, responses))
        responses.append(turn.gold.response_text(config.eval_config))
    return histories


def run_eval(
    corpus: Corpus,
    generator: Generator,
    config: RunConfig = RunConfig(),
    log_stream: TextIO | None = None,
) -> tuple[MetricReport, list[dict]]:
    """Run every turn, score, and aggregate.

    Returns the metric report plus per-turn log records (also streamed as
    JSON lines to log_stream while running, so an aborted run keeps the
    turns finished before the transport failure).
    """
    logger.info(
        "run start: mode=%s history=%s; inputs are transmitted untruncated, "
        "source-length budgeting is the generation service's concern",
        config.mode,
        config.history,
    )
    records: list[PredictionRecord] = []
    logs: list[dict] = []

    def emit(pair: tuple[PredictionRecord, dict]) -> None:
        record, log = pair
        records.append(record)
        logs.append(log)
        if log_stream is not None:
            log_stream.write(json.dumps(log, ensure_ascii=False) + "\n")
            log_stream.flush()

    if config.history == "gold":
        jobs = []
        for dialogue in corpus.dialogues:
            doc = corpus.documents[dialogue.doc_uid]
            for turn, history in zip(dialogue.turns, _gold_histories(dialogue, config)):
                jobs.append((dialogue, doc, history, turn))
        with ThreadPoolExecutor(max_workers=max(1, config.concurrency)) as pool:
            futures = [
                pool.submit(run_turn, doc, history, turn, generator, config)
                for _, doc, history, turn in jobs
            ]
            try:
                for (dialogue, _, _, turn), future in zip(jobs, futures):
                    emit(_turn_record(dialogue, turn, future.result(), config))
            except BaseException:
                for future in futures:
                    future.cancel()
                raise
    else:
        for dialogue in corpus.dialogues:
            doc = corpus.documents[dialogue.doc_uid]
            queries: list[str] = []
            responses: list[str] = []
            for turn in dialogue.turns:
                queries.append(turn.question)
                history = ConversationHistory.from_turns(queries, responses)
                result = run_turn(doc, history, turn, generator, config)
                emit(_turn_record(dialogue, turn, result, config))
                responses.append(normalize_whitespace(result.final_text))
    report = aggregate_report(records, config.eval_config)
    return report, logs


def score_predictions(
    predictions_path: str | Path,
    corpus: Corpus,
    config: EvalConfig = DEFAULT_CONFIG,
) -> tuple[MetricReport, list[dict]]:
    """Score an offline predictions file against a corpus, no generator needed.

    Predictions are JSON lines carrying either a raw decoded string or a
    pre-split flag and payload, plus an optional scale:

        {"turn_id": "q1", "output": "[clari.] False [resp.] (88-105)/105"}
        {"turn_id": "q2", "clarification": true, "response": "[\"...\"]", "scale": ""}

    Every corpus turn is scored; turns without a usable prediction score 0.
    """
    predictions = _load_predictions(Path(predictions_path), corpus)
    records = []
    logs = []
    for dialogue in corpus.dialogues:
        for turn in dialogue.turns:
            raw, scale = predictions.get(turn.turn_id, (None, ""))
            answer = None
            if raw is not None:
                answer = canonicalize(SampledOutput(raw=raw, index=0), Task.MULTI, config)
            record = PredictionRecord(
                turn_id=turn.turn_id,
                predicted=answer,
                predicted_scale=scale,
                gold=turn.gold,
                clarification_pred=isinstance(answer, ClarifyAnswer),
            )
            em, f1 = record_scores(record, config)
            records.append(record)
            logs.append(
                {
                    "turn_id": turn.turn_id,
                    "dialogue_id": dialogue.dialogue_id,
                    "prediction": raw,
                    "final_response": response_text(answer, config),
                    "em": em,
                    "f1": round(f1, 6),
                }
            )
    if not records:
        raise EmptyRecordSet("corpus has no turns")
    return aggregate_report(records, config), logs


def _load_predictions(path: Path, corpus: Corpus) -> dict[str, tuple[str, str]]:
    turn_ids = {turn.turn_id for d in corpus.dialogues for turn in d.turns}
    predictions: dict[str, tuple[str, str]] = {}
    lines = path.read_text(encoding="utf-8").splitlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            turn_id = str(obj["turn_id"])
            if "output" in obj:
                raw = str(obj["output"])
            else:
                raw = format_target(
                    Task.MULTI, bool(obj["clarification"]), str(obj["response"])
                )
            scale = str(obj.get("scale", ""))
        except Exception as err:  # malformed line: warn, the turn scores 0
            logger.warning("%s:%d: malformed prediction line (%s); skipped", path, lineno, err)
            continue
        if turn_id not in turn_ids:
            raise UnknownTurnId(f"{path}:{lineno}: unknown turn id {turn_id!r}")
        predictions[turn_id] = (raw, scale)
    if not predictions:
        raise EmptyRecordSet(f"no usable prediction lines in {path}")
    return predictions


def write_jsonl(records: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
