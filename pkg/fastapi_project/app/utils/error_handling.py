"""
Standardized error handling utilities for consistent error management.

This module provides:
- Custom error classes with context (offending column, time step, epoch, primitive)
- Centralized error logging
- User-friendly error messages for the API and the CLI
"""

import functools
import logging
from datetime import datetime, UTC
from typing import Dict, Any, Optional
from enum import Enum

logger = logging.getLogger(__name__)


class ErrorCode(Enum):
    """Standardized error codes for consistent error handling"""

    # Validation errors
    VALIDATION_ERROR = "VALIDATION_ERROR"
    SHAPE_MISMATCH = "SHAPE_MISMATCH"
    NON_FINITE_INPUT = "NON_FINITE_INPUT"

    # Resource errors
    NOT_FOUND = "NOT_FOUND"
    CONFLICT = "CONFLICT"

    # Numerical errors
    SOLVER_ERROR = "SOLVER_ERROR"
    OPTIMIZER_ERROR = "OPTIMIZER_ERROR"
    TRAINING_DIVERGED = "TRAINING_DIVERGED"
    AUTODIFF_ERROR = "AUTODIFF_ERROR"
    PLACEMENT_ERROR = "PLACEMENT_ERROR"

    # Server errors
    SERVER_ERROR = "SERVER_ERROR"
    DATABASE_ERROR = "DATABASE_ERROR"
    IO_ERROR = "IO_ERROR"


class AppError(Exception):
    """
    Custom application error with structured information.

    Provides consistent error handling across the application with:
    - Error codes for programmatic handling
    - Context for debugging
    - User-friendly messages
    - Timestamps for logging
    """

    def __init__(
        self,
        message: str,
        code: ErrorCode = ErrorCode.SERVER_ERROR,
        context: Optional[Dict[str, Any]] = None,
        user_message: Optional[str] = None,
        status_code: int = 500
    ):
        super().__init__(message)
        self.message = message
        self.code = code
        self.context = context or {}
        self.user_message = user_message or self._get_default_user_message(code)
        self.status_code = status_code
        self.timestamp = datetime.now(UTC).isoformat()

    def _get_default_user_message(self, code: ErrorCode) -> str:
        """Generate user-friendly messages for error codes"""
        messages = {
            ErrorCode.VALIDATION_ERROR: "Please check your input and try again.",
            ErrorCode.SHAPE_MISMATCH: "Input arrays have incompatible shapes.",
            ErrorCode.NON_FINITE_INPUT: "Input contains NaN or infinite values.",
            ErrorCode.NOT_FOUND: "The requested resource was not found.",
            ErrorCode.CONFLICT: "The target already exists.",
            ErrorCode.SOLVER_ERROR: "The numerical solver failed.",
            ErrorCode.OPTIMIZER_ERROR: "Parameter fitting failed for every restart.",
            ErrorCode.TRAINING_DIVERGED: "Training produced a non-finite loss.",
            ErrorCode.AUTODIFF_ERROR: "Differentiation failed.",
            ErrorCode.PLACEMENT_ERROR: "Could not place wells on distinct cells.",
            ErrorCode.SERVER_ERROR: "An unexpected error occurred. Please try again.",
            ErrorCode.DATABASE_ERROR: "Database operation failed. Please try again.",
            ErrorCode.IO_ERROR: "Reading or writing a file failed.",
        }
        return messages.get(code, "An unexpected error occurred.")

    def to_dict(self) -> Dict[str, Any]:
        """Convert error to dictionary for JSON serialization"""
        return {
            "message": self.message,
            "code": self.code.value,
            "user_message": self.user_message,
            "context": self.context,
            "timestamp": self.timestamp,
            "status_code": self.status_code
        }

    def __str__(self) -> str:
        return f"{self.code.value}: {self.message}"


class ValidationError(AppError):
    """Specific error for validation failures"""

    def __init__(self, message: str, field: str = None, value: Any = None, code: ErrorCode = ErrorCode.VALIDATION_ERROR):
        context = {}
        if field:
            context["field"] = field
        if value is not None:
            context["value"] = str(value)

        super().__init__(
            message=message,
            code=code,
            context=context,
            status_code=400
        )


class ResourceNotFoundError(AppError):
    """Error for missing resources"""

    def __init__(self, resource_type: str, resource_id: Any):
        message = f"{resource_type} with ID {resource_id} not found"
        context = {
            "resource_type": resource_type,
            "resource_id": str(resource_id)
        }

        super().__init__(
            message=message,
            code=ErrorCode.NOT_FOUND,
            context=context,
            status_code=404
        )


class NumericalError(AppError):
    """Error raised by solvers, integrators and optimizers."""

    def __init__(self, message: str, code: ErrorCode = ErrorCode.SOLVER_ERROR, context: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            code=code,
            context=context,
            status_code=422
        )


class ConvergenceError(NumericalError):
    """A linear solve or a fit did not converge."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(
            message=message,
            code=ErrorCode.SOLVER_ERROR,
            context={"step": step} if step is not None else {}
        )


class TrainingDivergedError(NumericalError):
    """Training produced a non-finite loss at a given epoch."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(
            message=f"Non-finite loss {loss} at epoch {epoch}",
            code=ErrorCode.TRAINING_DIVERGED,
            context={"epoch": epoch, "loss": str(loss)}
        )
        self.epoch = epoch


class AutodiffError(NumericalError):
    """A differentiation primitive produced a non-finite value or is not allowed on the time path."""

    def __init__(self, message: str, primitive: str):
        super().__init__(
            message=message,
            code=ErrorCode.AUTODIFF_ERROR,
            context={"primitive": primitive}
        )
        self.primitive = primitive


def log_error(error: AppError) -> None:
    """
    Log error with structured information for monitoring.
    """
    log_data = {
        "error_code": error.code.value,
        "error_message": error.message,
        "context": error.context,
        "error_timestamp": error.timestamp
    }

    # Log at appropriate level based on error type
    if error.status_code >= 500:
        logger.error("%s: %s", error.code.value, error.message, extra=log_data)
    elif error.status_code >= 400:
        logger.warning("%s: %s", error.code.value, error.message, extra=log_data)
    else:
        logger.info("%s: %s", error.code.value, error.message, extra=log_data)


def handle_api_error(error: Exception, context: Dict[str, Any] = None) -> AppError:
    """
    Convert various exception types to structured AppError.

    This provides a central place to map different exception types
    to our standardized error format.
    """
    context = context or {}

    if isinstance(error, AppError):
        return error

    if isinstance(error, FileNotFoundError):
        return AppError(
            message=f"File not found: {error}",
            code=ErrorCode.NOT_FOUND,
            context={**context, "original_error": str(error)},
            status_code=404
        )

    if isinstance(error, (OSError, UnicodeDecodeError)):
        return AppError(
            message=f"I/O error: {error}",
            code=ErrorCode.IO_ERROR,
            context={**context, "original_error": str(error)},
            status_code=500
        )

    # numpy.linalg.LinAlgError, scipy sparse solver failures, FloatingPointError
    if "linalg" in str(type(error)).lower() or isinstance(error, (FloatingPointError, ArithmeticError)):
        return NumericalError(
            message=f"Numerical error: {error}",
            context={**context, "original_error": str(error)}
        )

    if "sql" in str(type(error)).lower():
        return AppError(
            message=f"Database error: {str(error)}",
            code=ErrorCode.DATABASE_ERROR,
            context={**context, "original_error": str(error)},
            status_code=500
        )

    if isinstance(error, (ValueError, KeyError, TypeError)):
        return AppError(
            message=f"Invalid input: {error}",
            code=ErrorCode.VALIDATION_ERROR,
            context={**context, "original_error": str(error)},
            status_code=400
        )

    # Default: treat as server error
    return AppError(
        message=f"Unexpected error: {str(error)}",
        code=ErrorCode.SERVER_ERROR,
        context={**context, "original_error": str(error), "error_type": str(type(error))},
        status_code=500
    )


def get_user_friendly_message(error: AppError) -> str:
    """
    Get user-friendly error message based on error code and context.
    """
    base_message = error.user_message

    if error.code == ErrorCode.VALIDATION_ERROR and "field" in error.context:
        field = error.context["field"]
        return f"Please check the {field} field and try again."

    if error.code == ErrorCode.NOT_FOUND and "resource_type" in error.context:
        resource_type = error.context["resource_type"]
        return f"The {resource_type.lower()} you're looking for doesn't exist."

    if error.code == ErrorCode.TRAINING_DIVERGED and "epoch" in error.context:
        return f"Training diverged at epoch {error.context['epoch']}. Try a smaller learning rate."

    return base_message


# Decorator for consistent error handling in functions
def handle_errors(default_return=None, reraise=True):
    """
    Decorator to add consistent error handling to functions.

    Usage:
        @handle_errors(default_return=1, reraise=False)
        def cmd_graph(args):
            ...
    """
    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except AppError as e:
                log_error(e)
                if reraise:
                    raise
                return default_return
            except Exception as e:
                # Convert other exceptions to AppError
                app_error = handle_api_error(e, context={"function": func.__name__})
                log_error(app_error)

                if reraise:
                    raise app_error from e
                return default_return
        return wrapper
    return decorator
