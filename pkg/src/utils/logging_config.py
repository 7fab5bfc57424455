# src/utils/logging_config.py

import logging

from rich.logging import RichHandler

_CONFIGURED = False


def configure_logging(level: int = logging.WARNING) -> None:
    """Instala un RichHandler en el logger del paquete (solo una vez)."""
    global _CONFIGURED
    package_logger = logging.getLogger("src")
    package_logger.setLevel(level)
    if _CONFIGURED:
        return
    handler = RichHandler(rich_tracebacks=False, show_path=False)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    package_logger.addHandler(handler)
    package_logger.propagate = False
    _CONFIGURED = True
