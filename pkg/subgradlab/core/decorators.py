"""
Decorators for common patterns across the CLI.
"""

import functools
from typing import Any, Callable, Optional, TypeVar

import structlog
from pydantic import ValidationError as PydanticValidationError

from subgradlab.core.exceptions import SubgradLabError

logger = structlog.get_logger(__name__)

F = TypeVar("F", bound=Callable[..., int])

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_LEFT_DOMAIN = 2


def handle_command_errors(operation_name: Optional[str] = None):
    """
    Decorator to map command failures onto the CLI exit-code contract.

    Handles:
    - SubgradLabError -> exit 1, error dict logged
    - pydantic ValidationError -> exit 1, field locations logged
    - ValueError -> exit 1
    - Exception -> exit 1, logged with traceback

    Args:
        operation_name: Name of operation for log events (defaults to function name)
    """

    def decorator(func: F) -> F:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> int:
            op_name = operation_name or func.__name__
            try:
                return func(*args, **kwargs)
            except SubgradLabError as e:
                logger.error("command failed", operation=op_name, **e.to_dict())
                return EXIT_FAILURE
            except PydanticValidationError as e:
                locations = [".".join(str(part) for part in err["loc"]) for err in e.errors()]
                logger.error("invalid configuration", operation=op_name, locations=locations, message=str(e))
                return EXIT_FAILURE
            except ValueError as e:
                logger.error("invalid input", operation=op_name, message=str(e))
                return EXIT_FAILURE
            except Exception as e:
                logger.error("unexpected error", operation=op_name, error=str(e), exc_info=True)
                return EXIT_FAILURE

        return wrapper  # type: ignore[return-value]

    return decorator
