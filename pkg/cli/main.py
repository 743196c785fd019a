import json
import os
import sys
from typing import List, Optional, Sequence

import click

# Add the project root to Python path when run as a script
if os.path.exists(os.path.join(os.path.dirname(__file__), "..", "services")):
    sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.experiment import build_experiment_config
from services.reports_service import reports_service
from services.workflows_service import workflows_service
from utils.config import get_settings, load_experiment_config
from utils.errors import LabError
from utils.logging import get_logger, setup_logging

settings = get_settings()
logger = get_logger(__name__)

SUBCOMMANDS = {
    "correlation": "Single-molecule correlation function, offset and long-time average.",
    "offset-scan": "Offset heatmap over inverse temperature and interaction strength.",
    "bkk-stats": "Eigenstate diagonal elements of the coupling and their thermal participation.",
    "oracle": "Closed-form correlation curves (spin coherence, pure dephasing, harmonic bath).",
    "eth-demo": "Synthetic ETH environments: correlation, polynomial decay and offset versus dimension.",
    "master-eq": "Second-order master equation for a qubit with an offset-bearing bath.",
    "ensemble": "Molecule ensemble correlation and the Lorentzian-mixture 1/f susceptibility.",
    "fit": "Decay-model extraction from a correlation series.",
    "davies": "Davies integrability diagnostic of a correlation series.",
}


def _common_options(func):
    func = click.option("--format", "output_format", type=click.Choice(["csv", "json", "both"]), default=None, help="Table output format.")(func)
    func = click.option("--jobs", type=click.IntRange(min=1), default=None, help="Worker pool size for scans.")(func)
    func = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(func)
    func = click.option("--seed", type=int, default=None, help="Seed for every random draw.")(func)
    func = click.option("--config", "config_path", type=str, default=None, help="key = value or JSON configuration file.")(func)
    return func


def _run(command: str, config_path: Optional[str], seed: Optional[int], out: Optional[str], jobs: Optional[int], output_format: Optional[str]) -> int:
    values, lines = load_experiment_config(config_path) if config_path else ({}, {})
    config = build_experiment_config(
        command,
        values,
        lines,
        overrides={"seed": seed, "out": out, "jobs": jobs, "format": output_format},
    )
    execution = workflows_service.execute(command, config)
    directory = reports_service.output_directory(command, config.out)
    paths = reports_service.write_execution(execution, config, directory)
    click.echo(json.dumps({"command": command, "status": execution.status, "directory": str(directory), "files": [p.name for p in paths]}))
    return 0


@click.group(help="Numerical laboratory for thermal environments with correlation-function offsets.")
@click.option("--log-level", default=None, help="Override LOG_LEVEL.")
def cli(log_level: Optional[str]):
    setup_logging(level=log_level)


def _register(name: str, help_text: str):
    @cli.command(name=name, help=help_text)
    @_common_options
    def command(config_path, seed, out, jobs, output_format):
        return _run(name, config_path, seed, out, jobs, output_format)

    return command


for _name, _help in SUBCOMMANDS.items():
    _register(_name, _help)


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run the experiment and map failures to exit codes 0/2/3"""
    args: Optional[List[str]] = list(argv) if argv is not None else None
    try:
        result = cli.main(args=args, prog_name="offsetlab", standalone_mode=False)
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 2
    except LabError as e:
        logger.log_error(e, {"argv": args})
        click.echo(json.dumps(e.to_dict(), sort_keys=True), err=True)
        return e.exit_code
    except Exception as e:
        logger.error("Unexpected failure", error=str(e), error_type=type(e).__name__, exc_info=True)
        click.echo(json.dumps({"error": type(e).__name__, "message": str(e), "exit_code": 3}), err=True)
        return 3
    return result if isinstance(result, int) else 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
