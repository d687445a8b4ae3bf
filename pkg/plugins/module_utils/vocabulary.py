"""
Bundled vocabulary bank: devices with their operations and parameter
ranges, raw materials, product names and intermediate stages.
"""

import json
import typing as t
from importlib import resources
from pathlib import Path

from .dsl_codec import param_from_doc
from .dsl_core import ParamSpec

_PACKAGE = __name__.rsplit(".", 1)[0]


def load_vocabulary_bank(path: Path | str | None = None) -> dict[str, t.Any]:
    """The bundled bank, or a bank file with the same layout."""
    if path is not None:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    text = resources.files(_PACKAGE).joinpath("data", "vocabulary.json").read_text(encoding="utf-8")
    return json.loads(text)


def device_params(device: dict[str, t.Any]) -> dict[str, ParamSpec]:
    return {name: param_from_doc(doc) for name, doc in sorted(device.get("params", {}).items())}


def material_properties(material: dict[str, t.Any]) -> dict[str, ParamSpec]:
    return {name: param_from_doc(doc) for name, doc in sorted(material.get("properties", {}).items())}


def wip_name(product: str, stage: str) -> str:
    return f"{product} {stage}"


def final_name(product: str) -> str:
    return f"Finished {product}"
