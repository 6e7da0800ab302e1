import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List

from marshmallow import ValidationError

from core.output_writer import write_csv, write_summary
from models.noise import NoiseSource
from schemas.experiment_schemas import SCHEMAS, ExperimentConfigSchema

logger = logging.getLogger(__name__)
violations_logger = logging.getLogger("violations")


@dataclass
class ExperimentOutput:
    """
    Результат одного эксперимента: CSV-таблица, блок итогов и критерии приёмки.
    """
    csv_name: str
    fieldnames: List[str]
    rows: List[dict]
    results: dict = field(default_factory=dict)
    criteria: Dict[str, dict] = field(default_factory=dict)

    def check(self, name: str, passed: bool, **detail):
        self.criteria[name] = {"passed": bool(passed), **detail}
        if not passed:
            violations_logger.warning(f"Criterion {name} failed: {detail}")

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.criteria.values())


def validate_config(name: str, data: dict) -> dict:
    """
    Проверяет блок конфигурации схемой эксперимента; ValidationError пробрасывается.
    """
    if name not in SCHEMAS:
        raise ValidationError(f"Unknown experiment {name!r}", field_name="experiment")
    data = dict(data)
    declared = data.get("experiment")
    if declared is not None and declared != name:
        raise ValidationError(f"Config is for experiment {declared!r}, not {name!r}", field_name="experiment")
    return SCHEMAS[name]().load(data)


def build_source(params: dict) -> NoiseSource:
    return NoiseSource(seed=int(params["seed"]))


def run_experiment(name: str, params: dict, out_dir: str, runner: Callable) -> int:
    """
    Запускает эксперимент, пишет CSV и summary.json. Возвращает код выхода:
    0 — все критерии выполнены, 1 — есть нарушения.
    """
    config = ExperimentConfigSchema().load({
        "name": name, "params": params, "seed": params["seed"], "replicas": params["replicas"], "out_dir": out_dir,
    })
    started = time.perf_counter()
    logger.info(f"Experiment {config.name} started with seed {config.seed}, {config.replicas} replicas")
    output = runner(config.params, build_source(config.params))
    elapsed = time.perf_counter() - started
    write_csv(os.path.join(config.out_dir, output.csv_name), output.fieldnames, output.rows)
    write_summary(os.path.join(config.out_dir, "summary.json"), {
        "experiment": name,
        "config": config.params,
        "seed": config.seed,
        "schema_version": config.schema_version,
        "wall_clock_seconds": elapsed,
        "results": output.results,
        "criteria": output.criteria,
        "passed": output.passed,
    })
    logger.info(f"Experiment {name} finished in {elapsed:.1f}s, passed={output.passed}")
    return 0 if output.passed else 1
