import logging
import os
import sys

import click
import yaml
from marshmallow import ValidationError

from config.loader import load_config_yml, load_runtime_env
from controllers.experiment_controller import RUNNERS
from controllers.utils import run_experiment, validate_config
from core.logging_setup import setup_logging
from core.worker_pool import init_pool, shutdown_pool

logger = logging.getLogger(__name__)

CONFIG_ERRORS = (FileNotFoundError, ValueError, ValidationError, yaml.YAMLError)


def _load(name: str, config: str, seed):
    data = load_config_yml(config)
    if seed is not None:
        data["seed"] = seed
    return validate_config(name, data)


def _experiment_command(name: str):
    @click.command(name=name, help=f"Run the {name} experiment.")
    @click.option("--config", "config", required=True, type=click.Path(dir_okay=False), help="Experiment config (YAML/JSON).")
    @click.option("--out", "out", default="./out", show_default=True, type=click.Path(file_okay=False), help="Output directory.")
    @click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker threads (default: all cores).")
    @click.option("--seed", type=click.IntRange(min=0, max=2 ** 64 - 1), default=None, help="Override the config seed.")
    def command(config, out, threads, seed):
        try:
            params = _load(name, config, seed)
        except CONFIG_ERRORS as e:
            click.echo(f"Invalid config {config}: {e}", err=True)
            return 2
        try:
            init_pool(threads)
            return run_experiment(name, params, out, RUNNERS[name])
        except ValueError as e:
            logger.error(f"Experiment {name} rejected its parameters: {e}")
            click.echo(f"Invalid parameters: {e}", err=True)
            return 2
        except Exception as e:
            logger.exception(f"Experiment {name} failed: {e}")
            click.echo(f"Experiment failed: {e}", err=True)
            return 1
        finally:
            shutdown_pool()

    return command


def create_app() -> click.Group:
    """
    Группа команд: по одной на эксперимент плюс validate-config.
    """
    @click.group(help="Lattice Langevin dynamics and stochastic homogenization experiments.")
    @click.option("--log-dir", default=None, type=click.Path(file_okay=False), help="Overrides LANGEVIN_LOG_DIR.")
    def cli(log_dir):
        load_runtime_env()  # Ставим env переменные
        setup_logging(log_dir)

    for name in RUNNERS:
        cli.add_command(_experiment_command(name))

    @cli.command(name="validate-config", help="Validate a config without running it.")
    @click.option("--config", "config", required=True, type=click.Path(dir_okay=False))
    @click.option("--experiment", "experiment", default=None, type=click.Choice(sorted(RUNNERS)))
    def validate(config, experiment):
        try:
            data = load_config_yml(config)
            name = experiment or data.get("experiment")
            if name is None:
                raise ValidationError("Config does not name its experiment", field_name="experiment")
            validate_config(name, data)
        except CONFIG_ERRORS as e:
            click.echo(f"Invalid config {config}: {e}", err=True)
            return 2
        click.echo(f"Config {config} is valid for {name}")
        return 0

    return cli


def run_cli(argv=None) -> int:
    """
    Точка входа: возвращает код выхода (0 — успех, 1 — нарушен критерий или сбой, 2 — ошибка конфигурации).
    """
    app = create_app()
    try:
        code = app.main(args=argv, prog_name="langevin", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        return 1
    return 0 if code is None else int(code)


if __name__ == "__main__":
    logger.info(f"Langevin experiments launched PID={os.getpid()}")
    sys.exit(run_cli())
