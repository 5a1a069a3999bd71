"""
Run configuration: flat key=value files merged with command-line flags.

Precedence is model defaults < config file < explicit flags. Keys are
case-insensitive and may use hyphens; list-valued fields take comma-separated
values (``hops=100,50,25``).
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Type, TypeVar, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError

from ..exceptions import ConfigurationError

logger = logging.getLogger(__name__)

M = TypeVar('M', bound=BaseModel)


def normalize_key(key: str) -> str:
    return key.strip().lower().replace('-', '_')


def read_config_file(path: Optional[Union[str, Path]]) -> Dict[str, str]:
    """Parse a key=value file; returns an empty mapping when no path is given."""
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError('config', str(path), "config file not found")
    values = dotenv_values(path)
    return {normalize_key(k): v for k, v in values.items() if v is not None}


def merge_settings(file_values: Mapping[str, Any], flag_values: Mapping[str, Any]) -> Dict[str, Any]:
    """File values overridden by every flag that was given explicitly (not None)."""
    merged = dict(file_values)
    merged.update({normalize_key(k): v for k, v in flag_values.items() if v is not None})
    return merged


def _is_sequence_field(model: Type[BaseModel], name: str) -> bool:
    annotation = str(model.model_fields[name].annotation)
    return annotation.startswith(('typing.List', 'typing.Tuple', 'list', 'tuple'))


def _coerce(model: Type[BaseModel], name: str, value: Any) -> Any:
    if isinstance(value, str) and _is_sequence_field(model, name):
        return [v.strip() for v in value.split(',') if v.strip()]
    return value


def build(model: Type[M], settings: Mapping[str, Any], **fixed: Any) -> M:
    """
    Instantiate ``model`` from the settings that name one of its fields.

    ``fixed`` values win over settings. Validation errors surface as
    ConfigurationError naming the first offending field.
    """
    values = {k: _coerce(model, k, v) for k, v in settings.items() if k in model.model_fields}
    values.update({k: v for k, v in fixed.items() if v is not None})
    try:
        return model(**values)
    except ValidationError as e:
        first = e.errors()[0]
        field = '.'.join(str(p) for p in first.get('loc', ())) or model.__name__
        raise ConfigurationError(field, first.get('input'), first.get('msg', 'invalid value')) from e


def check_known(settings: Mapping[str, Any], models: Iterable[Type[BaseModel]],
                extra: Iterable[str] = ()) -> None:
    """Reject config keys that no model of the command understands."""
    known = set(extra)
    for model in models:
        known.update(model.model_fields)
    unknown = sorted(set(settings) - known)
    if unknown:
        raise ConfigurationError('config', unknown, "unknown configuration keys")


def resolved_config(command: str, **sections: Any) -> str:
    """JSON rendering of the fully materialized configuration of a command."""
    body: Dict[str, Any] = {'command': command}
    for name, value in sections.items():
        body[name] = value.model_dump(mode='json') if isinstance(value, BaseModel) else value
    return json.dumps(body, indent=2, sort_keys=True, default=str)
