#!/usr/bin/env python

import json

import pytest
from conftest import MILL_SENTENCE, TURN_SENTENCE, make_toy_dsl, make_toy_program

from plugins.module_utils.abstraction import (
    DURATION,
    INPUT,
    MACHINE,
    NATURAL_LANGUAGE,
    OUTPUT,
    PARAM,
    PROPERTY,
    SEMI_STRUCTURED,
    AbstractionConfig,
    ExtractedAction,
    ExtractionEmpty,
    NoCandidate,
    ProcedureDoc,
    RuleBasedExtractor,
    extract_actions,
    load_procedure,
    match_operation,
    procedure_to_doc,
    program_to_route_sheet,
    route_sheet_to_doc,
    split_sentences,
    synthesize_program,
)
from plugins.module_utils.dsl_core import FlowGrammar, validate_program
from plugins.module_utils.shop_common import dump_canonical


def test_split_sentences():
    assert split_sentences("Turn it.  Mill it! Done?") == ["Turn it.", "Mill it!", "Done?"]


class TestRuleBasedExtractor:
    def test_entities(self, toy_dsl):
        spans = RuleBasedExtractor.for_dsl(toy_dsl).entities(TURN_SENTENCE)
        by_label = {(s.label, s.name): s for s in spans}

        assert by_label[(MACHINE, "CNC Lathe")].text == "CNC Lathe"
        assert by_label[(INPUT, "Steel Bar")].text == "Steel Bar"
        assert by_label[(OUTPUT, "Shaft Blank")].text == "Shaft Blank"
        assert by_label[(PROPERTY, "diameter")].value == 40
        assert by_label[(PARAM, "spindle_speed")].value == 1200
        assert [s.value for s in spans if s.label == DURATION] == [20]

    def test_spans_do_not_overlap(self, toy_dsl):
        spans = RuleBasedExtractor.for_dsl(toy_dsl).entities(MILL_SENTENCE)

        for a, b in zip(spans, spans[1:]):
            assert a.end <= b.start

    def test_hours_become_minutes(self, toy_dsl):
        spans = RuleBasedExtractor.for_dsl(toy_dsl).entities("Mill the Shaft Blank for 1.5 hours.")

        assert [s.value for s in spans if s.label == DURATION] == [90]

    def test_extract_action(self, toy_dsl):
        [action] = RuleBasedExtractor.for_dsl(toy_dsl).extract(MILL_SENTENCE)

        assert action.verb_text == "mill"
        assert action.machine_text == "Vertical Mill"
        assert action.duration == 30
        assert action.params == {"feed_rate": 200}
        assert [(m.name, m.role) for m in action.flow_mentions()] == [
            ("Shaft Blank", INPUT),
            ("Finished Shaft", OUTPUT),
        ]

    def test_no_verb(self, toy_dsl):
        assert RuleBasedExtractor.for_dsl(toy_dsl).extract("Clean the workbench.") == []


class TestExtractActions:
    def test_empty_line_raises(self, toy_dsl):
        doc = ProcedureDoc("J09", NATURAL_LANGUAGE, sentences=(TURN_SENTENCE, "Inspect by eye."))

        with pytest.raises(ExtractionEmpty) as exc:
            extract_actions(doc, RuleBasedExtractor.for_dsl(toy_dsl))

        assert exc.value.details["sentence_index"] == 1

    def test_empty_line_collected(self, toy_dsl):
        doc = ProcedureDoc("J09", NATURAL_LANGUAGE, sentences=(TURN_SENTENCE, "Inspect by eye."))
        issues = []

        actions = extract_actions(doc, RuleBasedExtractor.for_dsl(toy_dsl), issues)

        assert [a.sentence_index for a in actions] == [0]
        assert [e.code for e in issues] == ["extraction_empty"]


class TestMatchOperation:
    def test_exact_verb_match(self, toy_dsl):
        [action] = RuleBasedExtractor.for_dsl(toy_dsl).extract(TURN_SENTENCE)

        best = match_operation(action, toy_dsl)[0]

        assert best.op_id == "turning"
        assert best.exact_score == 1.0
        assert best.label_coverage == 1.0
        assert best.structure_score == 1.0

    def test_threshold_raises_no_candidate(self, toy_dsl):
        [action] = RuleBasedExtractor.for_dsl(toy_dsl).extract(TURN_SENTENCE)

        with pytest.raises(NoCandidate):
            match_operation(action, toy_dsl, AbstractionConfig(tau_match=1.5))

    def test_unknown_verb(self, toy_dsl):
        action = ExtractedAction(sentence_index=2, verb_text="weld", object_texts=("plates",))

        with pytest.raises(NoCandidate) as exc:
            match_operation(action, toy_dsl)

        assert exc.value.details["verb"] == "weld"

    @pytest.mark.parametrize(
        "action",
        [
            ExtractedAction(sentence_index=0, verb_text="turn", object_texts=("Steel Bar",)),
            ExtractedAction(sentence_index=0, verb_text="mill", object_texts=("Shaft Blank",)),
            ExtractedAction(sentence_index=0, verb_text="turning", object_texts=("milling",)),
            ExtractedAction(sentence_index=0, verb_text="shape", object_texts=("turning", "blank")),
        ],
    )
    def test_raising_threshold_keeps_top_candidate(self, toy_dsl, action):
        top = match_operation(action, toy_dsl, AbstractionConfig(tau_match=0.0))[0]

        for step in range(1, 21):
            cfg = AbstractionConfig(tau_match=step / 20)
            try:
                ranked = match_operation(action, toy_dsl, cfg)
            except NoCandidate:
                assert top.combined_score < cfg.tau_match
                break
            assert ranked[0] == top


class TestSynthesizeProgram:
    def test_natural_language(self, toy_doc, toy_dsl):
        p = synthesize_program(toy_doc, toy_dsl)

        assert p == make_toy_program()
        assert validate_program(p, toy_dsl).ok

    def test_empty_document(self, toy_dsl):
        p = synthesize_program(ProcedureDoc("J00", NATURAL_LANGUAGE), toy_dsl)

        assert p.job_id == "J00"
        assert p.steps == ()
        assert p.flow_units == ()

    def test_beam_width_one_matches_wider_beam(self, toy_doc, toy_dsl):
        narrow = synthesize_program(toy_doc, toy_dsl, cfg=AbstractionConfig(beam_width=1))

        assert narrow == synthesize_program(toy_doc, toy_dsl)

    def test_shared_input_with_several_consumers(self):
        d = make_toy_dsl(FlowGrammar.bounded(1, 2))
        doc = ProcedureDoc("J01", NATURAL_LANGUAGE, sentences=(TURN_SENTENCE, MILL_SENTENCE, MILL_SENTENCE))

        p = synthesize_program(doc, d)

        blanks = [u for u in p.flow_units if u.flow_def == "Shaft Blank"]
        assert len(blanks) == 1
        assert blanks[0].consumers == frozenset({1, 2})
        assert validate_program(p, d).ok

    def test_base_grammar_keeps_one_consumer_per_unit(self, toy_dsl):
        doc = ProcedureDoc("J01", NATURAL_LANGUAGE, sentences=(TURN_SENTENCE, MILL_SENTENCE, MILL_SENTENCE))

        p = synthesize_program(doc, toy_dsl)

        assert all(len(u.consumers) <= 1 for u in p.flow_units)
        assert [u.raw_material for u in p.flow_units if u.flow_def == "Shaft Blank"] == [False, True]

    def test_route_sheet_round_trip(self, toy_program, toy_dsl):
        sheet = program_to_route_sheet(toy_program, toy_dsl)
        doc = route_sheet_to_doc(sheet)

        assert doc.kind == SEMI_STRUCTURED
        assert [name for name, _ in doc.rows] == ["Turning", "Milling"]
        assert synthesize_program(doc, toy_dsl) == toy_program

    def test_route_sheet_contents(self, toy_program, toy_dsl):
        sheet = program_to_route_sheet(toy_program, toy_dsl)

        assert sheet["rows"][0]["machine"] == "CNC Lathe"
        assert sheet["rows"][1]["duration"] == 30
        assert sheet["materials"] == [{"name": "Steel Bar", "properties": {"diameter": 40}}]

    def test_route_sheet_matches_golden_file(self, toy_program, toy_dsl, golden):
        golden("J01.sheet.json", dump_canonical(program_to_route_sheet(toy_program, toy_dsl)))


class TestLoadProcedure:
    def test_text_file(self, tmp_path):
        path = tmp_path / "J01.txt"
        path.write_text(f"{TURN_SENTENCE} {MILL_SENTENCE}\n")

        doc = load_procedure(path)

        assert doc.doc_id == "J01"
        assert doc.sentences == (TURN_SENTENCE, MILL_SENTENCE)

    def test_json_file(self, tmp_path, toy_doc):
        path = tmp_path / "J01.proc.json"
        path.write_text(json.dumps(procedure_to_doc(toy_doc)))

        assert load_procedure(path) == toy_doc
