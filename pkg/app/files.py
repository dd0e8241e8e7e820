# app/files.py
import json
import os
import tempfile
from pathlib import Path
from typing import Any, List, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from app.errors import InputError, SpecError
from app.schemas import LayerSpec, ModelConfig, ModelLayer

M = TypeVar("M", bound=BaseModel)
PathLike = Union[str, Path]


def read_json(path: PathLike) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise SpecError(f"{path} is not valid JSON ({e.msg} at line {e.lineno})") from e


def dumps(payload: Any) -> str:
    """Canonical JSON: sorted keys, fixed indent, trailing newline."""
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def atomic_write_text(path: PathLike, text: str) -> None:
    """Write via a temp file in the target directory, then rename over the target."""
    target = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent or Path("."))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def validate(model: Type[M], payload: Any, source: str) -> M:
    """model_validate, with pydantic errors reported as SpecError naming the field."""
    try:
        return model.model_validate(payload)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first["loc"]) or model.__name__
        raise SpecError(f"{first['msg']} (in {source})", field=field) from e


def _model_layer(obj: Any, source: str) -> ModelLayer:
    if not isinstance(obj, dict):
        raise SpecError(f"layer entries must be objects (in {source})")
    fields = dict(obj)
    width = fields.pop("width", fields.get("filters"))
    layer = validate(LayerSpec, fields, source)
    return validate(ModelLayer, {"layer": layer, "width": width}, source)


def parse_model(payload: Any, source: str = "model") -> ModelConfig:
    """Accepts a list of layer objects (LayerSpec fields plus `width`) or {name, layers}."""
    name = "model"
    if isinstance(payload, dict) and "layers" in payload:
        name = str(payload.get("name", name))
        payload = payload["layers"]
    if isinstance(payload, dict):
        payload = [payload]
    if not isinstance(payload, list) or not payload:
        raise SpecError(f"expected a non-empty list of layers (in {source})", field="layers")
    entries = [_model_layer(obj, source) for obj in payload]
    return validate(ModelConfig, {"name": name, "layers": entries}, source)


def load_model(path: PathLike) -> ModelConfig:
    payload = read_json(path)
    parsed = parse_model(payload, str(path))
    if parsed.name == "model":
        parsed = parsed.model_copy(update={"name": Path(path).stem})
    return parsed


def load_layers(path: PathLike) -> List[LayerSpec]:
    """A layer spec file holds one layer object or a whole model."""
    return [entry.layer for entry in parse_model(read_json(path), str(path)).layers]
