import logging
import traceback
from django.core.management.base import CommandError
from core.exceptions import (
    AsapError, ConfigError, NoSafeBoundsError, UnstableSystemError,
    ValidationFailureError,
)

logger = logging.getLogger('asap')


def command_exception_handler(exc, stage):
    """
    Translate an exception raised inside a pipeline stage into a CommandError
    carrying the process exit code.

    Args:
        exc: The exception raised by the stage
        stage: Name of the stage that was running

    Returns:
        CommandError: ready to be raised from a management command
    """
    if isinstance(exc, ConfigError):
        message = f"Configuration error: {exc.message}"

    elif isinstance(exc, UnstableSystemError):
        message = f"Unstable closed loop: {exc.message}"

    elif isinstance(exc, NoSafeBoundsError):
        trace = exc.details.get('per_a_trace', [])
        rows = ', '.join(f"a={row.a:g}:{row.status}" for row in trace)
        message = f"No safe bounds exist for this placement ({rows})"

    elif isinstance(exc, ValidationFailureError):
        message = f"Validation failure: {exc.message}"

    elif isinstance(exc, AsapError):
        message = f"{type(exc).__name__}: {exc.message}"

    else:
        logger.error(
            f"[{stage.upper()}] Unhandled exception: {exc}\n{traceback.format_exc()}"
        )
        return CommandError(f"Internal error during stage '{stage}': {exc}", returncode=1)

    logger.error(f"[{stage.upper()}] {message}")
    return CommandError(message, returncode=exc.exit_code)
