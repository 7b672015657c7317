"""Canonical JSON encoding with orjson.

Ledger transactions are hashed into Merkle roots and reports are compared
byte for byte across reruns, so every JSON document the simulator writes goes
through `canonical_json`: keys sorted, numpy values native, no whitespace
unless indentation is asked for.
"""

from typing import Any

import orjson
from starlette.responses import JSONResponse

_CANONICAL = orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS


def canonical_json(content: Any, *, indent: bool = False) -> bytes:
    """Deterministic JSON bytes for `content`.

    Raises:
        TypeError: If `content` holds a value orjson cannot encode.
    """
    option = (_CANONICAL | orjson.OPT_INDENT_2) if indent else _CANONICAL
    try:
        return orjson.dumps(content, option=option)
    except orjson.JSONEncodeError as exc:
        raise TypeError(str(exc)) from exc


class ORJSONResponse(JSONResponse):
    """Inspection API response in the same canonical encoding as the run files."""

    media_type = "application/json"

    def render(self, content: Any) -> bytes:
        return canonical_json(content)
