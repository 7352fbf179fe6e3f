"""
JSON reading and writing of packing instances.

Format (UTF-8, 0-based indices):
    {"n": int, "m": int, "weights": [...], "capacities": [...],
     "entries": [[i, j, s], ...], "upper_bounds": [...]}   # upper_bounds optional

Loading validates every invariant and reports the first violation with
its indices as an InstanceError.
"""

import json
from pathlib import Path
from typing import Any, Dict, Union

from pydantic import ValidationError

from src.exceptions import InstanceError
from src.logger import get_logger
from src.packing.instance import PipInstance

logger = get_logger(__name__)


def _first_error(exc: ValidationError) -> str:
    err = exc.errors()[0]
    location = ".".join(str(part) for part in err.get("loc", ())) or "instance"
    return f"{location}: {err.get('msg')}"


def instance_from_dict(data: Dict[str, Any]) -> PipInstance:
    """
    Build a PipInstance from the decoded JSON document.

    Args:
        data: Decoded JSON object

    Returns:
        PipInstance: Validated instance

    Raises:
        InstanceError: On missing fields, wrong shapes or invariant violations
    """
    if not isinstance(data, dict):
        raise InstanceError("instance document must be a JSON object")
    for key in ("n", "m", "weights", "capacities", "entries"):
        if key not in data:
            raise InstanceError(f"missing field '{key}'")

    n, m = data["n"], data["m"]
    if not isinstance(n, int) or not isinstance(m, int) or n < 0 or m < 0:
        raise InstanceError(f"fields 'n' and 'm' must be nonnegative integers, got n={n!r}, m={m!r}")
    if not isinstance(data["weights"], list) or len(data["weights"]) != n:
        raise InstanceError(f"field 'weights' must be a list of length n={n}")
    if not isinstance(data["capacities"], list) or len(data["capacities"]) != m:
        raise InstanceError(f"field 'capacities' must be a list of length m={m}")
    if not isinstance(data["entries"], list):
        raise InstanceError("field 'entries' must be a list of [i, j, s] triples")

    entries = []
    for pos, entry in enumerate(data["entries"]):
        if not isinstance(entry, list) or len(entry) != 3:
            raise InstanceError(f"entries[{pos}]: expected [i, j, s], got {entry!r}")
        i, j, s = entry
        if not isinstance(i, int) or not isinstance(j, int):
            raise InstanceError(f"entries[{pos}]: indices must be integers, got i={i!r}, j={j!r}")
        if not 0 <= i < n:
            raise InstanceError(f"entries[{pos}]: item index {i} out of range [0, {n})")
        if not 0 <= j < m:
            raise InstanceError(f"entries[{pos}]: constraint index {j} out of range [0, {m})")
        if not isinstance(s, (int, float)) or s <= 0:
            raise InstanceError(f"entries[{pos}]: size must be a positive number (i={i}, j={j}, s={s!r})")
        entries.append((i, j, float(s)))

    seen = {}
    for pos, (i, j, _) in enumerate(entries):
        if (i, j) in seen:
            raise InstanceError(
                f"entries[{pos}]: duplicate entry for (i={i}, j={j}), first at entries[{seen[(i, j)]}]"
            )
        seen[(i, j)] = pos

    try:
        inst = PipInstance.from_entries(
            weights=data["weights"],
            capacities=data["capacities"],
            entries=entries,
            upper_bounds=data.get("upper_bounds"),
        )
        dropped = data.get("dropped_items")
        if dropped:
            inst = PipInstance(**{**inst.model_dump(), "dropped_items": tuple(dropped)})
    except ValidationError as e:
        raise InstanceError(_first_error(e)) from e
    return inst


def instance_to_dict(inst: PipInstance) -> Dict[str, Any]:
    """Encode an instance in the JSON exchange format."""
    data: Dict[str, Any] = {
        "n": inst.n,
        "m": inst.m,
        "weights": list(inst.weights),
        "capacities": list(inst.capacities),
        "entries": [[i, j, s] for i, j, s in inst.entries()],
    }
    if inst.upper_bounds is not None:
        data["upper_bounds"] = list(inst.upper_bounds)
    if inst.dropped_items:
        data["dropped_items"] = list(inst.dropped_items)
    return data


def parse_instance(text: str) -> PipInstance:
    """
    Parse an instance from JSON text.

    Raises:
        InstanceError: With line/column diagnostics on malformed JSON
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceError(f"malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    return instance_from_dict(data)


def load_instance(path: Union[str, Path]) -> PipInstance:
    """Read and validate an instance file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InstanceError(f"cannot read instance file {path}: {e}") from e
    inst = parse_instance(text)
    logger.info(f"Loaded instance {path.name}: n={inst.n}, m={inst.m}")
    return inst


def save_instance(inst: PipInstance, path: Union[str, Path]) -> None:
    """Write an instance file (pretty-printed JSON)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(instance_to_dict(inst), indent=2), encoding="utf-8")
    logger.info(f"Wrote instance {path}")
