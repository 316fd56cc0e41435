"""CSV and JSON writers for experiment output. A path of "-" means stdout."""
import csv
import json
import sys
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Mapping, Sequence, TextIO

import numpy as np

from .logging import get_logger

logger = get_logger("traces")

STDOUT = "-"


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


@contextmanager
def open_output(path: str) -> Iterator[TextIO]:
    if path == STDOUT:
        yield sys.stdout
        sys.stdout.flush()
        return
    with open(path, "w", newline="", encoding="utf-8") as handle:
        yield handle
    logger.info(f"wrote {path}")


def write_csv(rows: Sequence[Mapping[str, Any]], header: Sequence[str], path: str) -> None:
    with open_output(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(row[key]) for key in header])


def read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def write_json(payload: Mapping[str, Any], path: str) -> None:
    with open_output(path) as handle:
        json.dump(payload, handle, indent=2, default=_jsonable)
        handle.write("\n")
