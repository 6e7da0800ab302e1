import csv
import json
import logging
import logging.handlers
import threading

import numpy as np
import pytest

from core import worker_pool
from core.logging_setup import setup_logging
from core.output_writer import TOOL_VERSION, write_csv, write_summary


def test_csv_uses_full_precision(tmp_path):
    path = tmp_path / "out" / "table.csv"
    write_csv(str(path), ["a", "b", "c", "d"], [{"a": 0.1, "b": np.float64(1 / 3), "c": True, "d": None},
                                                {"a": np.int64(7), "b": "x", "c": np.bool_(False)}])
    text = path.read_text(encoding="utf-8").splitlines()
    assert text[0] == "a,b,c,d"
    assert text[1] == "0.10000000000000001,0.33333333333333331,true,"
    assert text[2] == "7,x,false,"
    with open(path, encoding="utf-8") as f:
        assert float(next(csv.DictReader(f))["b"]) == 1 / 3


def test_summary_is_plain_json(tmp_path):
    path = tmp_path / "summary.json"
    write_summary(str(path), {"values": np.array([1.0, np.inf]), "count": np.int64(3), "ok": np.bool_(True)})
    body = json.loads(path.read_text(encoding="utf-8"))
    assert body["values"] == [1.0, None]
    assert body["count"] == 3
    assert body["ok"] is True
    assert body["tool_version"] == TOOL_VERSION


def test_map_replicas_keeps_order():
    worker_pool.init_pool(4)

    def work(r):
        return r * r

    assert worker_pool.map_replicas(work, range(20)) == [r * r for r in range(20)]
    assert worker_pool.map_replicas(work, [3]) == [9]


def test_pool_is_reused_for_same_size():
    first = worker_pool.init_pool(2)
    assert worker_pool.init_pool(2) is first
    assert worker_pool.get_pool() is first
    assert worker_pool.init_pool(3) is not first


def test_default_threads_from_environment(monkeypatch):
    monkeypatch.setenv("LANGEVIN_THREADS", "3")
    assert worker_pool.default_threads() == 3
    monkeypatch.setenv("LANGEVIN_THREADS", "zero")
    with pytest.raises(RuntimeError):
        worker_pool.default_threads()


@pytest.fixture
def restore_logging():
    root = logging.getLogger()
    violations = logging.getLogger("violations")
    saved = (list(root.handlers), root.level, list(violations.handlers), violations.propagate)
    yield
    for logger, handlers in ((root, saved[0]), (violations, saved[2])):
        for handler in list(logger.handlers):
            if handler not in handlers:
                logger.removeHandler(handler)
                handler.close()
    root.setLevel(saved[1])
    violations.propagate = saved[3]


def test_logging_splits_files(tmp_path, restore_logging):
    setup_logging(str(tmp_path))
    logging.getLogger("services.test").info("progress message")
    logging.getLogger("services.test").error("broken run")
    logging.getLogger("violations").warning("criterion failed")
    for handler in logging.getLogger().handlers + logging.getLogger("violations").handlers:
        handler.flush()
    debug = (tmp_path / "debug_info.log").read_text(encoding="utf-8")
    errors = (tmp_path / "error_critical.log").read_text(encoding="utf-8")
    violations = (tmp_path / "violations.log").read_text(encoding="utf-8")
    assert "progress message" in debug and "broken run" not in debug
    assert "broken run" in errors
    assert "criterion failed" in violations and "criterion failed" not in debug


def test_logging_setup_is_idempotent(tmp_path, restore_logging):
    setup_logging(str(tmp_path))
    setup_logging(str(tmp_path))
    handlers = [h for h in logging.getLogger().handlers if isinstance(h, logging.handlers.RotatingFileHandler)]
    assert len(handlers) == 2
    assert len(logging.getLogger("violations").handlers) == 1


def test_concurrent_first_calls_share_one_pool(monkeypatch):
    monkeypatch.setenv("LANGEVIN_THREADS", "2")
    worker_pool.shutdown_pool()
    barrier = threading.Barrier(16)
    pools = []

    def first_call():
        barrier.wait()
        pools.append(worker_pool.get_pool())

    threads = [threading.Thread(target=first_call) for _ in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len({id(pool) for pool in pools}) == 1
