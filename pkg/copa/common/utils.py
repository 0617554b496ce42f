"""Common utilities for copa documents."""
import json
from pathlib import Path
from typing import Any, Type, TypeVar

from pydantic import BaseModel, TypeAdapter, ValidationError

from .errors import InputError, SchemaError

ModelT = TypeVar("ModelT", bound=BaseModel)


def ensure_directory_exists(directory) -> None:
    """Create directory if it doesn't exist."""
    Path(directory).mkdir(parents=True, exist_ok=True)


def field_path_of(error: ValidationError) -> str:
    """Dotted path of the first failing field, e.g. ``0.score``."""
    errors = error.errors()
    if not errors:
        return ""
    return ".".join(str(part) for part in errors[0].get("loc", ()))


def validate_document(model: Any, data: Any, source: str = "document") -> Any:
    """
    Validate ``data`` against a pydantic model class or a typing annotation.

    Args:
        model: A BaseModel subclass, or any type TypeAdapter accepts
        data: Parsed JSON data
        source: Name used in the error message

    Returns:
        The validated object

    Raises:
        SchemaError: naming the first failing field
    """
    try:
        if isinstance(model, type) and issubclass(model, BaseModel):
            return model.model_validate(data)
        return TypeAdapter(model).validate_python(data)
    except ValidationError as e:
        path = field_path_of(e)
        first = e.errors()[0]["msg"] if e.errors() else "invalid"
        raise SchemaError(f"{source}: field '{path}': {first}", field_path=path)


def read_json(path) -> Any:
    """Read a JSON file, mapping I/O and syntax failures onto copa errors."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"File not found: {path}", {"path": str(path)})
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: malformed JSON ({e.msg} at line {e.lineno})", field_path="")
    except OSError as e:
        raise InputError(f"Cannot read {path}: {e}", {"path": str(path)})


def load_document(model: Type[ModelT], path) -> ModelT:
    """Read and validate a JSON document."""
    return validate_document(model, read_json(path), source=str(path))


def write_document(path, document: Any) -> Path:
    """Write a pydantic model (or plain data) as indented JSON."""
    path = Path(path)
    ensure_directory_exists(path.parent)
    if isinstance(document, BaseModel):
        text = document.model_dump_json(indent=2)
    else:
        text = json.dumps(document, indent=2, sort_keys=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text + "\n")
    return path
