import pytest
from hypothesis import given, settings, strategies as st

from pcqa.linearize import (
    RESERVED_MARKERS,
    ConversationHistory,
    HybridDocument,
    InvalidCombination,
    MalformedOutput,
    MarkerCollisionError,
    Task,
    build_model_input,
    format_target,
    linearize_document,
    linearize_history,
    parse_output,
)


@pytest.fixture
def doc():
    return HybridDocument(
        uid="d1",
        paragraphs=("Alpha.",),
        table=(("Year", "2018", "2019"), ("Revenue", "88", "105")),
    )


class TestLinearizeDocument:
    def test_template(self, doc):
        assert linearize_document(doc) == (
            "[paragraph] Alpha. </p> [table] Year : 2018 | 2019 </t> Revenue : 88 | 105"
        )

    def test_degenerate_no_paragraphs(self):
        doc = HybridDocument(uid="d", paragraphs=(), table=(("r", "c"),))
        assert linearize_document(doc) == "[paragraph] [table] r : c"

    def test_golden_file(self, small_corpus, golden_input):
        dialogue = small_corpus.dialogues[0]
        queries = [t.question for t in dialogue.turns[:2]]
        responses = [dialogue.turns[0].gold.response_text()]
        history = ConversationHistory.from_turns(queries, responses)
        built = build_model_input(small_corpus.documents[dialogue.doc_uid], history)
        assert built == golden_input

    def test_separator_count_matches_columns(self):
        doc = HybridDocument(
            uid="d", paragraphs=(), table=(("a", "b", "c", "d"), ("e", "f", "g", "h"))
        )
        text = linearize_document(doc)
        rows = text.split("[table] ")[1].split(" </t> ")
        for row in rows:
            assert row.count(" : ") + row.count(" | ") == 3

    def test_from_raw_pads_and_normalizes(self):
        doc = HybridDocument.from_raw(
            "d", ["  two\t spaces "], [["a", "b", "c"], ["d", "e"]]
        )
        assert doc.paragraphs == ("two spaces",)
        assert doc.table[1] == ("d", "e", "")

    def test_table_shape_validation(self):
        with pytest.raises(ValueError):
            HybridDocument(uid="d", paragraphs=(), table=())
        with pytest.raises(ValueError):
            HybridDocument(uid="d", paragraphs=(), table=(("only",),))
        with pytest.raises(ValueError):
            HybridDocument(uid="d", paragraphs=(), table=(("a", "b"), ("c",)))


class TestLinearizeHistory:
    def test_first_turn(self):
        assert linearize_history(ConversationHistory(("q1",))) == "[user] q1"

    def test_alternation(self):
        history = ConversationHistory(("q1", "r1", "q2"))
        assert linearize_history(history) == "[user] q1 [system] r1 [user] q2"

    def test_even_count_rejected(self):
        with pytest.raises(ValueError):
            ConversationHistory(("q1", "r1"))

    def test_empty_user_query_rejected(self):
        with pytest.raises(ValueError):
            ConversationHistory(("q1", "r1", "  "))

    def test_empty_system_response_allowed(self):
        history = ConversationHistory(("q1", "", "q2"))
        assert linearize_history(history) == "[user] q1 [system] [user] q2"

    def test_concatenation(self, doc):
        history = ConversationHistory(("q1",))
        assert build_model_input(doc, history) == linearize_document(doc) + " [user] q1"


class TestMarkerRejection:
    @pytest.mark.parametrize("marker", RESERVED_MARKERS)
    def test_document_text_rejected(self, marker):
        with pytest.raises(MarkerCollisionError):
            HybridDocument(uid="d", paragraphs=(f"has {marker} inside",), table=(("a", "b"),))
        with pytest.raises(MarkerCollisionError):
            HybridDocument(uid="d", paragraphs=(), table=((f"x {marker}", "b"),))

    @pytest.mark.parametrize("marker", RESERVED_MARKERS)
    def test_query_rejected(self, marker):
        with pytest.raises(MarkerCollisionError):
            ConversationHistory((f"what about {marker}?",))


class TestFormatTarget:
    def test_multitask_answer(self):
        assert format_target(Task.MULTI, False, "(1.06+0.91+4.04)/3") == (
            "[clari.] False [resp.] (1.06+0.91+4.04)/3"
        )

    def test_multitask_clarify(self):
        assert format_target(Task.MULTI, True, '["Which period are you asking about?"]') == (
            '[clari.] True [resp.] ["Which period are you asking about?"]'
        )

    def test_cnp_label_only(self):
        assert format_target(Task.CNP, True, "") == "True"
        assert format_target(Task.CNP, False, "") == "False"

    def test_single_task_payloads(self):
        assert format_target(Task.CQA, False, "(88-105)/105") == "(88-105)/105"
        assert format_target(Task.CQG, True, '["Which year?"]') == '["Which year?"]'

    @pytest.mark.parametrize(
        "task,flag,response",
        [
            (Task.CNP, True, "payload"),
            (Task.CQA, False, ""),
            (Task.CQG, True, ""),
            (Task.MULTI, False, ""),
            (Task.CQG, False, '["x"]'),
            (Task.CQA, True, "(1+2)"),
        ],
    )
    def test_invalid_combinations(self, task, flag, response):
        with pytest.raises(InvalidCombination):
            format_target(task, flag, response)


class TestParseOutput:
    def test_multitask(self):
        parsed = parse_output("[clari.] False [resp.] (88-105)/105", Task.MULTI)
        assert parsed.clarification_flag is False
        assert parsed.response_payload == "(88-105)/105"

    def test_missing_flag_marker(self):
        with pytest.raises(MalformedOutput):
            parse_output("[resp.] only", Task.MULTI)

    def test_missing_resp_marker(self):
        with pytest.raises(MalformedOutput):
            parse_output("[clari.] False 42", Task.MULTI)

    def test_bad_flag_token(self):
        with pytest.raises(MalformedOutput):
            parse_output("[clari.] maybe [resp.] 42", Task.MULTI)

    def test_empty_payload(self):
        with pytest.raises(MalformedOutput):
            parse_output("[clari.] True [resp.] ", Task.MULTI)

    def test_cnp(self):
        assert parse_output("True", Task.CNP).clarification_flag is True
        with pytest.raises(MalformedOutput):
            parse_output("yes", Task.CNP)

    def test_single_task_passthrough(self):
        parsed = parse_output(" (1+2)/3 ", Task.CQA)
        assert parsed.clarification_flag is None
        assert parsed.response_payload == "(1+2)/3"


_payloads = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyz0123456789+-*/()[],.\"' ?",
    min_size=1,
    max_size=60,
).map(str.strip).filter(bool)


@settings(max_examples=1000, deadline=None)
@given(flag=st.booleans(), response=_payloads)
def test_format_parse_round_trip(flag, response):
    decoded = format_target(Task.MULTI, flag, response)
    parsed = parse_output(decoded, Task.MULTI)
    assert parsed.clarification_flag is flag
    assert parsed.response_payload == response


@given(flag=st.booleans())
def test_cnp_round_trip(flag):
    assert parse_output(format_target(Task.CNP, flag, ""), Task.CNP).clarification_flag is flag
