#!/usr/bin/env python

import graphlib

import pytest

from plugins.module_utils.dsl_core import validate_dsl, validate_program
from plugins.module_utils.scenario_synth import (
    FormatError,
    build_dependency_superset,
    bundled_instances,
    eliminate_cycles,
    load_benchmark,
    load_bundled,
    parse_benchmark,
    read_scenario,
    render_step_sentence,
    synthesize_scenario,
    taillard_instance,
    write_scenario,
)
from plugins.module_utils.shop_common import ShopError, dump_canonical


class TestParseBenchmark:
    def test_parse(self):
        inst = parse_benchmark("# two jobs\n2 2\n0 3 1 2\n\n1 4 0 1\n", "tiny")

        assert inst.name == "tiny"
        assert (inst.n_jobs, inst.n_machines) == (2, 2)
        assert inst.matrix == (((0, 3), (1, 2)), ((1, 4), (0, 1)))

    @pytest.mark.parametrize(
        "text, line",
        [
            ("2 2\n0 3 1 x\n1 4 0 1\n", 2),
            ("", 0),
            ("2\n0 3\n", 1),
            ("2 2\n0 3 1 2\n", 2),
            ("1 2\n0 3 1\n", 2),
            ("1 2\n0 3 5 2\n", 2),
            ("1 2\n0 0 1 2\n", 2),
        ],
    )
    def test_format_errors(self, text, line):
        with pytest.raises(FormatError) as exc:
            parse_benchmark(text)

        assert exc.value.details["line"] == line

    def test_load_file(self, tmp_path):
        path = tmp_path / "tiny.jsp"
        path.write_text("1 1\n0 5\n")

        assert load_benchmark(path).name == "tiny"


class TestBundled:
    def test_ft06(self, ft06):
        assert (ft06.n_jobs, ft06.n_machines) == (6, 6)
        assert ft06.matrix[0] == ((2, 1), (0, 3), (1, 6), (3, 7), (5, 3), (4, 6))

    def test_manifest(self):
        names = bundled_instances()

        assert names[0] == "ft06"
        assert len(names) == 10
        assert all(load_bundled(n).problems() == [] for n in names)

    def test_la01(self):
        la01 = load_bundled("la01")

        assert (la01.n_jobs, la01.n_machines) == (10, 5)
        assert la01.matrix[0] == ((1, 21), (0, 53), (4, 95), (3, 55), (2, 34))
        loads = [sum(d for row in la01.matrix for m, d in row if m == k) for k in range(5)]
        assert max(loads) == 666

    def test_unknown(self):
        with pytest.raises(ShopError, match="no bundled instance"):
            load_bundled("abz5")


class TestTaillard:
    def test_deterministic(self):
        a = taillard_instance("a", 4, 3, 840612802, 398197754)
        b = taillard_instance("b", 4, 3, 840612802, 398197754)

        assert a.matrix == b.matrix

    def test_shape(self, small_instance):
        for row in small_instance.matrix:
            assert sorted(m for m, _ in row) == [0, 1, 2]
            assert all(1 <= d <= 99 for _, d in row)


class TestDependencies:
    def test_eliminate_cycles(self):
        a, b, c = (0, 0), (1, 0), (2, 0)

        deps = eliminate_cycles([(a, b), (b, c), (c, a), (a, b), (b, b)])

        assert deps.edges == ((a, b), (b, c))
        assert deps.dropped == ((c, a), (a, b), (b, b))

    def test_superset_is_acyclic_and_keeps_chains(self, small_instance):
        _, deps = build_dependency_superset(small_instance, ["A", "B", "C", "D"], seed=5, extra_edges=12)
        sorter = graphlib.TopologicalSorter()
        for x, y in deps.edges:
            sorter.add(y, x)

        sorter.prepare()
        for j in range(3):
            assert ((j, 0), (j, 1)) in deps.edges
            assert ((j, 1), (j, 2)) in deps.edges

    def test_mapping_is_injective(self, small_instance):
        mapping, _ = build_dependency_superset(small_instance, ["A", "B", "C", "D"], seed=2)

        assert sorted(mapping) == [0, 1, 2]
        assert len(set(mapping.values())) == 3

    def test_too_few_devices(self, small_instance):
        with pytest.raises(ShopError):
            build_dependency_superset(small_instance, ["A"])


def test_render_step_sentence():
    text = render_step_sentence(0, "mill", "milled", "Vertical Mill", 30, {"feed_rate": 200})

    assert text == "Mill the workpiece on the Vertical Mill for 30 minutes with feed rate 200."


def test_render_step_sentence_with_flows():
    text = render_step_sentence(3, "turn", "turned", "CNC Lathe", 20, {}, inputs=["Steel Bar"], outputs=["Shaft Blank"])

    assert text == "The Steel Bar is turned on the CNC Lathe for 20 minutes to produce the Shaft Blank."


class TestSynthesizeScenario:
    def test_gold_artifacts_validate(self, small_scenario):
        assert validate_dsl(small_scenario.dsl).ok
        for p in small_scenario.programs:
            assert validate_program(p, small_scenario.dsl).ok

    def test_corpus_alternates_kinds(self, small_scenario):
        kinds = [doc.kind for doc in small_scenario.corpus]

        assert kinds == ["natural-language", "semi-structured", "natural-language"]
        assert [doc.doc_id for doc in small_scenario.corpus] == ["J01", "J02", "J03"]

    def test_solver_input_matches_instance_durations(self, small_scenario, small_instance):
        durations = [[d for _, d in row] for row in small_scenario.solver_input.jobs]

        assert durations == [[d for _, d in row] for row in small_instance.matrix]

    def test_same_seed_same_scenario(self, small_instance, small_scenario):
        again = synthesize_scenario(small_instance, seed=0)

        assert again.programs == small_scenario.programs
        assert again.corpus == small_scenario.corpus
        assert again.dsl == small_scenario.dsl

    def test_write_is_byte_identical(self, tmp_path, small_instance):
        a = write_scenario(synthesize_scenario(small_instance, seed=1), tmp_path / "a")
        b = write_scenario(synthesize_scenario(small_instance, seed=1), tmp_path / "b")

        assert [p.relative_to(tmp_path / "a") for p in a] == [p.relative_to(tmp_path / "b") for p in b]
        assert all(x.read_bytes() == y.read_bytes() for x, y in zip(a, b))

    def test_ft06_mapping_matches_golden_file(self, ft06, golden):
        s = synthesize_scenario(ft06, seed=0)

        doc = {"mapping": {str(k): v for k, v in sorted(s.mapping.items())}, "dependencies": s.dependencies.to_doc()}
        golden("ft06_seed0_mapping.json", dump_canonical(doc))

    def test_read_back(self, scenario_dir, small_scenario):
        files = read_scenario(scenario_dir)

        assert files.scenario_id == "ta-3x3"
        assert files.dsl == small_scenario.dsl
        assert files.programs == small_scenario.programs
        assert files.corpus == small_scenario.corpus
        assert files.solver_input == small_scenario.solver_input
        assert files.constraints == small_scenario.constraints
        assert files.route_sheets == small_scenario.route_sheets
