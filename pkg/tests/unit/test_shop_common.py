#!/usr/bin/env python

import json

import pytest

from plugins.module_utils.shop_common import (
    ShopError,
    ShopModuleBase,
    ShopModuleFailure,
    ShopUsageError,
    canonical_number,
    dump_canonical,
    jsonable,
    run_module,
    shop_argument_spec,
    spec_to_parser,
    write_text_atomic,
)


def test_init():
    base = ShopModuleBase({"out": None})

    assert not base.changed
    assert base.result == {"changed": False, "msg": ""}
    assert base.written == []


def test_exit_json_records_written(tmp_path):
    base = ShopModuleBase({"out": str(tmp_path)})
    base.write_json(tmp_path / "b.json", {"x": 1})
    base.write_json(tmp_path / "a.json", {"x": 2})

    result = base.exit_json(msg="done")

    assert result["changed"] is True
    assert result["msg"] == "done"
    assert result["written"] == sorted([str(tmp_path / "a.json"), str(tmp_path / "b.json")])


def test_fail_json_raises():
    base = ShopModuleBase({})

    with pytest.raises(ShopModuleFailure) as exc:
        base.fail_json("broken", step=3)

    assert exc.value.to_dict() == {"code": "module_failure", "msg": "broken", "details": {"step": 3}}


def test_require_path_missing(tmp_path):
    base = ShopModuleBase({"dsl": str(tmp_path / "nope.json")})

    with pytest.raises(ShopUsageError):
        base.require_path("dsl")


def test_require_paths_reports_missing(tmp_path):
    present = tmp_path / "a.txt"
    present.write_text("x")
    base = ShopModuleBase({"docs": [str(present), str(tmp_path / "b.txt")]})

    with pytest.raises(ShopUsageError) as exc:
        base.require_paths("docs")

    assert exc.value.details["paths"] == [str(tmp_path / "b.txt")]


def test_out_dir_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("SHOPDSL_OUT_DIR", str(tmp_path / "env-out"))
    base = ShopModuleBase({"out": None})

    assert base.out_dir() == tmp_path / "env-out"
    assert (tmp_path / "env-out").is_dir()


class TestCanonicalJson:
    def test_integer_valued_floats_become_ints(self):
        assert canonical_number(3.0) == 3
        assert isinstance(canonical_number(3.0), int)

    def test_rounding(self):
        assert canonical_number(0.1 + 0.2) == 0.3

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            canonical_number(float("nan"))

    def test_sets_are_sorted(self):
        assert jsonable({"s": {3, 1, 2}}) == {"s": [1, 2, 3]}

    def test_dump_is_key_sorted_with_newline(self):
        text = dump_canonical({"b": 1, "a": (1.0, 2.5)})

        assert text.endswith("\n")
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text) == {"a": [1, 2.5], "b": 1}

    def test_dump_is_deterministic(self):
        doc = {"z": [{"k": 0.333333333}], "a": {"y": 2, "x": 1}}

        assert dump_canonical(doc) == dump_canonical(json.loads(dump_canonical(doc)))


def test_write_text_atomic_leaves_no_temp(tmp_path):
    path = tmp_path / "deep" / "file.json"
    write_text_atomic(path, "hello\n")

    assert path.read_text() == "hello\n"
    assert [p.name for p in path.parent.iterdir()] == ["file.json"]


class TestArgumentSpec:
    def spec(self):
        spec = shop_argument_spec()
        spec.update(
            {
                "inputs": {"type": "list", "elements": "path", "required": True, "positional": True},
                "limit": {"type": "float", "default": 60.0},
                "gantt": {"type": "bool", "default": False},
            }
        )
        return spec

    def test_defaults(self, monkeypatch):
        monkeypatch.delenv("SHOPDSL_OUT_DIR", raising=False)
        monkeypatch.delenv("SHOPDSL_LOG_LEVEL", raising=False)
        args = spec_to_parser("t", self.spec()).parse_args(["a", "b"])

        assert args.inputs == ["a", "b"]
        assert args.seed == 0
        assert args.limit == 60.0
        assert args.gantt is False
        assert args.out is None
        assert args.log_level == "WARNING"

    def test_flags(self):
        args = spec_to_parser("t", self.spec()).parse_args(["a", "--seed", "7", "--gantt", "--limit", "1.5"])

        assert args.seed == 7
        assert args.gantt is True
        assert args.limit == 1.5

    def test_env_default(self, monkeypatch):
        monkeypatch.setenv("SHOPDSL_OUT_DIR", "/tmp/somewhere")
        args = spec_to_parser("t", self.spec()).parse_args(["a"])

        assert args.out == "/tmp/somewhere"


class TestRunModule:
    spec = {"name": {"type": "str", "required": True, "positional": True}, **shop_argument_spec()}

    def test_success_prints_result(self, tmp_path, capsys):
        def run(module):
            return module.exit_json(name=module.params["name"])

        rc = run_module("t", self.spec, run, ["x", "--out", str(tmp_path)])

        assert rc == 0
        assert json.loads(capsys.readouterr().out)["name"] == "x"

    def test_usage_error_is_exit_2(self, tmp_path):
        def run(module):
            raise ShopUsageError("bad input")

        assert run_module("t", self.spec, run, ["x", "--out", str(tmp_path)]) == 2

    def test_missing_argument_is_exit_2(self, capsys):
        assert run_module("t", self.spec, lambda m: {}, []) == 2

    def test_domain_error_writes_error_json(self, tmp_path, capsys):
        def run(module):
            raise ShopError("flow broke", step=["J01", 2])

        rc = run_module("t", self.spec, run, ["x", "--out", str(tmp_path)])

        assert rc == 1
        assert json.loads((tmp_path / "error.json").read_text()) == {
            "code": "shop_error",
            "msg": "flow broke",
            "details": {"step": ["J01", 2]},
        }
        assert "flow broke" in capsys.readouterr().err

    def test_run_receives_parsed_params(self, tmp_path, mocker):
        run = mocker.Mock(return_value={"changed": False})

        run_module("t", self.spec, run, ["x", "--seed", "4", "--out", str(tmp_path)])

        module = run.call_args[0][0]
        assert module.params["seed"] == 4
        assert module.params["name"] == "x"
