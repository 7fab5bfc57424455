# src/app.py

import logging
from typing import List, Optional

import click
import typer

from src import config
from src.exceptions import FlowMatchError, NumericalError
from src.routes.estimation import estimation_router
from src.routes.experiments import experiment_router
from src.routes.snapshots import snapshot_router
from src.schemas.cli import CliSettings, OutputFormat
from src.utils.logging_config import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


def include_router(app: typer.Typer, router: typer.Typer) -> None:
    """Registra los comandos del router al primer nivel (sin subgrupo)."""
    app.registered_commands.extend(router.registered_commands)


def get_app() -> typer.Typer:
    app = typer.Typer(
        name="flowmatch",
        help="Aprendizaje de parámetros de flujo por estimación del permanente (BP + punto de silla).",
        no_args_is_help=True,
        pretty_exceptions_enable=False,
        add_completion=False,
    )

    # Opciones globales: se guardan en ctx.obj y las leen todos los subcomandos
    @app.callback()
    def global_options(
        ctx: typer.Context,
        seed: int = typer.Option(0, "--seed", help="Semilla de los generadores aleatorios"),
        threads: int = typer.Option(config.DEFAULT_THREADS, "--threads", min=1),
        tol: Optional[float] = typer.Option(None, "--tol", help="Tolerancia de convergencia de BP"),
        format: Optional[OutputFormat] = typer.Option(None, "--format"),
        verbose: int = typer.Option(0, "-v", "--verbose", count=True),
    ):
        ctx.obj = CliSettings(seed=seed, threads=threads, tol=tol, format=format, verbose=verbose)
        level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
        configure_logging(level)

    # Registrar los comandos
    include_router(app, snapshot_router)
    include_router(app, estimation_router)
    include_router(app, experiment_router)

    return app


def main(argv: Optional[List[str]] = None) -> int:
    """Ejecuta la CLI y traduce las excepciones a códigos de salida."""
    app = get_app()
    try:
        result = app(args=argv, standalone_mode=False, prog_name="flowmatch")
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.Abort:
        typer.echo("Abortado", err=True)
        return EXIT_USAGE
    except NumericalError as exc:
        typer.echo(f"Error numérico: {exc}", err=True)
        return EXIT_NUMERICAL
    except (FlowMatchError, ValueError, OSError) as exc:
        typer.echo(f"Error: {exc}", err=True)
        return EXIT_USAGE
    # con standalone_mode=False click devuelve el código de salida de Exit como entero
    return result if isinstance(result, int) else EXIT_OK
