import os
import yaml

RUNTIME_FILE = os.path.join(os.getcwd(), "config", "runtime.yaml")


def load_config_yml(filepath: str) -> dict:
    """
    Читает файл эксперимента (YAML или JSON — JSON является подмножеством YAML).
    """
    if not os.path.exists(filepath):
        raise FileNotFoundError(f"Config file not found: {filepath}")

    with open(filepath, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)

    if not isinstance(data, dict):
        raise ValueError(f"Config file {filepath} must contain a mapping")
    return data


def load_runtime_env(filepath: str = RUNTIME_FILE) -> None:
    """
    Читает runtime.yaml и ставит ключи как переменные окружения.
    Уже заданные переменные не перезаписываются; отсутствие файла — не ошибка.
    """
    if not os.path.exists(filepath):
        return

    with open(filepath, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}

    for key, val in data.items():
        if val is None or key in os.environ:
            continue
        os.environ[key] = str(val)
