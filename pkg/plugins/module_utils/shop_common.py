"""
Common utilities for shopdsl modules.
"""

import argparse
import json
import logging
import math
import os
import sys
import tempfile
import typing as t
from pathlib import Path

SCHEMA_VERSION = 1

logger = logging.getLogger(__name__)


class ShopError(Exception):
    """Root of every domain error raised by shopdsl."""

    code = "shop_error"

    def __init__(self, msg: str, **details: t.Any) -> None:
        super().__init__(msg)
        self.msg = msg
        self.details: dict[str, t.Any] = details

    def to_dict(self) -> dict[str, t.Any]:
        return {"code": self.code, "msg": self.msg, "details": jsonable(self.details)}


class ShopModuleFailure(ShopError):
    """Raised by ShopModuleBase.fail_json; the CLI turns it into exit code 1."""

    code = "module_failure"


class ShopUsageError(ShopError):
    """Bad arguments or missing inputs; the CLI turns it into exit code 2."""

    code = "usage_error"


class ShopModuleBase:
    """Base class for shopdsl command modules."""

    def __init__(self, params: dict[str, t.Any]) -> None:
        self.params = params
        self.changed: bool = False
        self.result: dict[str, t.Any] = {"changed": False, "msg": ""}
        self.written: list[str] = []

    def out_dir(self) -> Path:
        """Resolve the output directory, creating it if needed."""
        out = self.params.get("out") or os.environ.get("SHOPDSL_OUT_DIR") or "."
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def write_text(self, path: Path, text: str) -> Path:
        write_text_atomic(path, text)
        self.written.append(str(path))
        self.changed = True
        return path

    def write_json(self, path: Path, doc: t.Any) -> Path:
        """Write a canonical JSON document atomically and record it."""
        return self.write_text(path, dump_canonical(doc))

    def exit_json(self, **kwargs: t.Any) -> dict[str, t.Any]:
        """Finish with a result summary."""
        self.result.update(kwargs)
        self.result["changed"] = self.changed
        self.result["written"] = sorted(self.written)
        return self.result

    def fail_json(self, msg: str = "", **kwargs: t.Any) -> t.NoReturn:
        """Abort with failure, optionally including additional error details."""
        raise ShopModuleFailure(msg, **kwargs)

    def require_path(self, key: str) -> Path:
        """A path parameter that must exist; missing paths are usage errors."""
        value = self.params.get(key)
        if not value:
            raise ShopUsageError(f"missing required path: {key}", param=key)
        path = Path(value)
        if not path.exists():
            raise ShopUsageError(f"{key}: no such file or directory: {path}", param=key, path=str(path))
        return path

    def require_paths(self, key: str) -> list[Path]:
        values = self.params.get(key) or []
        missing = [v for v in values if not Path(v).exists()]
        if not values or missing:
            raise ShopUsageError(f"{key}: missing paths {missing}", param=key, paths=missing)
        return [Path(v) for v in values]


def shop_argument_spec() -> dict[str, t.Any]:
    """Common argument specification for shopdsl commands."""
    return {
        "out": {
            "type": "path",
            "default": None,
            "env": "SHOPDSL_OUT_DIR",
            "help": "output directory",
        },
        "seed": {"type": "int", "default": 0, "help": "random seed"},
        "log_level": {
            "type": "str",
            "default": "WARNING",
            "env": "SHOPDSL_LOG_LEVEL",
            "choices": ["DEBUG", "INFO", "WARNING", "ERROR"],
            "help": "logging level",
        },
    }


def configure_logging(level: str = "WARNING") -> None:
    """Install a single stream handler on the package logger."""
    root = logging.getLogger("plugins")
    root.setLevel(level.upper())
    if not any(getattr(h, "_shopdsl", False) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(
            logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
        )
        handler._shopdsl = True  # type: ignore[attr-defined]
        root.addHandler(handler)


def canonical_number(value: float | int, places: int | None = 6) -> float | int:
    """Integer-valued floats become ints; other floats are rounded to ``places``
    decimals, or kept exact when ``places`` is None."""
    if isinstance(value, bool) or isinstance(value, int):
        return value
    if not math.isfinite(value):
        raise ValueError(f"non-finite number {value!r} cannot be serialized")
    if float(value).is_integer():
        return int(value)
    return float(value) if places is None else round(float(value), places)


def jsonable(value: t.Any, places: int | None = 6) -> t.Any:
    """Convert tuples, sets and numpy scalars into canonical JSON values."""
    if isinstance(value, dict):
        return {str(k): jsonable(v, places) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v, places) for v in value]
    if isinstance(value, (set, frozenset)):
        return sorted((jsonable(v, places) for v in value), key=_sort_key)
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float):
        return canonical_number(value, places)
    return value


def _sort_key(value: t.Any) -> str:
    return json.dumps(value, sort_keys=True)


def dump_canonical(doc: t.Any, places: int | None = 6) -> str:
    """Byte-deterministic JSON text: sorted keys, two-space indent, trailing newline.

    Floats are rounded to ``places`` decimals; pass None for repr-exact floats.
    """
    return json.dumps(jsonable(doc, places), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_text_atomic(path: Path | str, text: str) -> None:
    """Write through a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.debug(f"wrote {path}")


def read_json(path: Path | str) -> t.Any:
    """Read a JSON document."""
    with open(path, encoding="utf-8") as f:
        return json.load(f)


_ARG_TYPES: dict[str, t.Callable[[str], t.Any]] = {"str": str, "path": str, "int": int, "float": float}


def spec_to_parser(prog: str, argument_spec: dict[str, t.Any], description: str = "") -> argparse.ArgumentParser:
    """argparse parser from an argument-spec dict.

    Keys per option: type (str/path/int/float/bool/list), default, required,
    choices, env, help, positional, elements.
    """
    parser = argparse.ArgumentParser(prog=prog, description=description)
    for name, opt in argument_spec.items():
        kind = opt.get("type", "str")
        default = opt.get("default")
        env = opt.get("env")
        if env and os.environ.get(env):
            default = os.environ[env]
        kwargs: dict[str, t.Any] = {"help": opt.get("help", "")}
        if kind == "bool":
            kwargs["action"] = argparse.BooleanOptionalAction
            kwargs["default"] = bool(default)
        else:
            kwargs["type"] = _ARG_TYPES[opt.get("elements", "str") if kind == "list" else kind]
            kwargs["default"] = default
            if "choices" in opt:
                kwargs["choices"] = opt["choices"]
            if kind == "list":
                kwargs["nargs"] = "+" if opt.get("required") else "*"
        if opt.get("positional"):
            if opt.get("required"):
                kwargs.pop("default", None)
            elif kind != "list":
                kwargs["nargs"] = "?"
            parser.add_argument(name, **kwargs)
        else:
            if opt.get("required") and kind != "bool":
                kwargs["required"] = default is None
            parser.add_argument("--" + name.replace("_", "-"), dest=name, **kwargs)
    return parser


def run_module(
    prog: str,
    argument_spec: dict[str, t.Any],
    run: t.Callable[[ShopModuleBase], dict[str, t.Any]],
    argv: t.Sequence[str] | None = None,
    description: str = "",
) -> int:
    """Parse arguments, run a command module and map the outcome to an exit code.

    0 on success, 1 on a domain failure (error.json is written next to the
    outputs), 2 on a usage error.
    """
    parser = spec_to_parser(prog, argument_spec, description)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    params = vars(args)
    configure_logging(params.get("log_level") or "WARNING")
    module = ShopModuleBase(params)
    try:
        result = run(module)
    except ShopUsageError as e:
        print(f"{prog}: {e.msg}", file=sys.stderr)
        return 2
    except ShopError as e:
        print(f"{prog}: {e.msg}", file=sys.stderr)
        try:
            write_text_atomic(module.out_dir() / "error.json", dump_canonical(e.to_dict()))
        except OSError as write_error:
            logger.error(f"could not write error.json: {write_error}")
        return 1
    print(dump_canonical(result), end="")
    return 0
