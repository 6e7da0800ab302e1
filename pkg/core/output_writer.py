import csv
import json
import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"
SUMMARY_SCHEMA_VERSION = 1


def _format(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def ensure_dir(path: str):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise RuntimeError(f"Cannot create output directory {path}: {e}")


def write_csv(path: str, fieldnames, rows):
    """
    CSV с фиксированным заголовком; числа с плавающей точкой — 17 значащих цифр.
    """
    ensure_dir(os.path.dirname(path) or ".")
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format(row.get(k)) for k in fieldnames})
    logger.info(f"Wrote {path}")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_summary(path: str, payload: dict):
    """
    summary.json: эхо конфигурации, seed, версия, время выполнения и результаты критериев.
    """
    ensure_dir(os.path.dirname(path) or ".")
    body = dict(payload)
    body.setdefault("tool_version", TOOL_VERSION)
    body.setdefault("summary_schema_version", SUMMARY_SCHEMA_VERSION)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(_jsonable(body), sort_keys=True, indent=2))
        f.write("\n")
    logger.info(f"Wrote {path}")
