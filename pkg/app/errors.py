"""
Error Taxonomy and Handling System

Implements structured error codes (E-* taxonomy) with CLI exit codes and a
machine-readable error envelope for the kernel verification pipeline.
"""

import json
import sys
from typing import Dict, Any, Optional, Union
from enum import Enum


class ErrorCode(Enum):
    """Standard error codes for the kernel verification pipeline"""

    # Configuration and invocation
    E_CONFIG = "E-CONFIG"
    E_USAGE = "E-USAGE"
    E_FILE_NOT_FOUND = "E-FILE-NOT-FOUND"
    E_SCHEMA = "E-SCHEMA"

    # Dataset ingestion and protocol
    E_FORMAT = "E-FORMAT"
    E_DIMENSION = "E-DIMENSION"
    E_UNKNOWN_IDENTITY = "E-UNKNOWN-IDENTITY"
    E_PROTOCOL = "E-PROTOCOL"
    E_MISSING_ROLE = "E-MISSING-ROLE"
    E_INSUFFICIENT_TRAINING = "E-INSUFFICIENT-TRAINING"
    E_PIXEL_RANGE = "E-PIXEL-RANGE"
    E_LENGTH = "E-LENGTH"
    E_GENERATION = "E-GENERATION"

    # Kernel and spectrum
    E_KERNEL = "E-KERNEL"
    E_NOT_SYMMETRIC = "E-NOT-SYMMETRIC"
    E_NO_SPECTRUM = "E-NO-SPECTRUM"
    E_NON_FINITE = "E-NON-FINITE"
    E_INDEX = "E-INDEX"

    # Learning and discriminant fitting
    E_DEGENERATE_STATIONARY = "E-DEGENERATE-STATIONARY"
    E_DEGENERATE_WITHIN = "E-DEGENERATE-WITHIN"
    E_DEGENERATE_BETWEEN = "E-DEGENERATE-BETWEEN"
    E_SINGULAR_SCATTER = "E-SINGULAR-SCATTER"
    E_CLASSES = "E-CLASSES"
    E_UNKNOWN_CLIENT = "E-UNKNOWN-CLIENT"

    # Evaluation protocol
    E_EMPTY_ROLE = "E-EMPTY-ROLE"
    E_NO_IMPOSTOR_CLAIMS = "E-NO-IMPOSTOR-CLAIMS"
    E_NO_GENUINE_CLAIMS = "E-NO-GENUINE-CLAIMS"

    # Catch-all
    E_UNKNOWN = "E-UNKNOWN"


class ErrorInfo:
    """Error code metadata and handling information"""

    def __init__(
        self,
        code: ErrorCode,
        meaning: str,
        when_to_use: str,
        cli_exit_code: int
    ):
        self.code = code
        self.meaning = meaning
        self.when_to_use = when_to_use
        self.cli_exit_code = cli_exit_code


# Exit codes: 0 success, 1 runtime/numerical error, 2 usage/validation error
ERROR_TAXONOMY = {
    ErrorCode.E_CONFIG: ErrorInfo(
        ErrorCode.E_CONFIG, "Bad/missing config", "Config file or setting out of range", 2
    ),
    ErrorCode.E_USAGE: ErrorInfo(
        ErrorCode.E_USAGE, "Bad command line", "Conflicting or missing options", 2
    ),
    ErrorCode.E_FILE_NOT_FOUND: ErrorInfo(
        ErrorCode.E_FILE_NOT_FOUND, "Input file missing", "Samples/protocol/report path absent", 2
    ),
    ErrorCode.E_SCHEMA: ErrorInfo(
        ErrorCode.E_SCHEMA, "JSON document failed schema", "Protocol, run config or report shape invalid", 2
    ),
    ErrorCode.E_FORMAT: ErrorInfo(
        ErrorCode.E_FORMAT, "Samples file unreadable", "CSV header or numeric parse failure", 2
    ),
    ErrorCode.E_DIMENSION: ErrorInfo(
        ErrorCode.E_DIMENSION, "Dimension mismatch", "Rows or vectors of differing length", 2
    ),
    ErrorCode.E_UNKNOWN_IDENTITY: ErrorInfo(
        ErrorCode.E_UNKNOWN_IDENTITY, "Identity not in samples", "Protocol names an absent identity", 2
    ),
    ErrorCode.E_PROTOCOL: ErrorInfo(
        ErrorCode.E_PROTOCOL, "Protocol inconsistent", "Overlapping designations or illegal roles", 2
    ),
    ErrorCode.E_MISSING_ROLE: ErrorInfo(
        ErrorCode.E_MISSING_ROLE, "Sample without role", "Role list shorter than identity rows", 2
    ),
    ErrorCode.E_INSUFFICIENT_TRAINING: ErrorInfo(
        ErrorCode.E_INSUFFICIENT_TRAINING, "Too few training rows", "Client with fewer than 2 train rows", 2
    ),
    ErrorCode.E_PIXEL_RANGE: ErrorInfo(
        ErrorCode.E_PIXEL_RANGE, "Pixel out of range", "Intensity outside integer [0,255]", 2
    ),
    ErrorCode.E_LENGTH: ErrorInfo(
        ErrorCode.E_LENGTH, "Length mismatch", "Vector length disagrees with declared shape", 2
    ),
    ErrorCode.E_GENERATION: ErrorInfo(
        ErrorCode.E_GENERATION, "Invalid generation parameters", "Synthetic counts or separation invalid", 2
    ),
    ErrorCode.E_KERNEL: ErrorInfo(
        ErrorCode.E_KERNEL, "Invalid kernel spec", "Unknown family or parameter out of range", 2
    ),
    ErrorCode.E_NOT_SYMMETRIC: ErrorInfo(
        ErrorCode.E_NOT_SYMMETRIC, "Matrix not symmetric", "Decomposition input fails symmetry check", 1
    ),
    ErrorCode.E_NO_SPECTRUM: ErrorInfo(
        ErrorCode.E_NO_SPECTRUM, "No positive eigenvalue", "Gram matrix is zero or negative definite", 1
    ),
    ErrorCode.E_NON_FINITE: ErrorInfo(
        ErrorCode.E_NON_FINITE, "Non-finite kernel value", "Gram matrix overflowed or holds NaN", 1
    ),
    ErrorCode.E_INDEX: ErrorInfo(
        ErrorCode.E_INDEX, "Index out of range", "Sample index outside the transductive set", 1
    ),
    ErrorCode.E_DEGENERATE_STATIONARY: ErrorInfo(
        ErrorCode.E_DEGENERATE_STATIONARY, "Degenerate stationary point", "theta' M^-1 theta vanishes", 1
    ),
    ErrorCode.E_DEGENERATE_WITHIN: ErrorInfo(
        ErrorCode.E_DEGENERATE_WITHIN, "Within-class scatter vanishes", "Trace ratio undefined", 1
    ),
    ErrorCode.E_DEGENERATE_BETWEEN: ErrorInfo(
        ErrorCode.E_DEGENERATE_BETWEEN, "Between-class scatter vanishes", "No positive eigenvalue in Pb'Pb", 1
    ),
    ErrorCode.E_SINGULAR_SCATTER: ErrorInfo(
        ErrorCode.E_SINGULAR_SCATTER, "Population scatter singular", "Ridge and pseudo-inverse both failed", 1
    ),
    ErrorCode.E_CLASSES: ErrorInfo(
        ErrorCode.E_CLASSES, "Too few classes", "Fewer than 2 client classes or an empty class", 2
    ),
    ErrorCode.E_UNKNOWN_CLIENT: ErrorInfo(
        ErrorCode.E_UNKNOWN_CLIENT, "Unknown client", "Claim names a non-enrolled identity", 2
    ),
    ErrorCode.E_EMPTY_ROLE: ErrorInfo(
        ErrorCode.E_EMPTY_ROLE, "Empty role set", "No samples carry the requested role", 2
    ),
    ErrorCode.E_NO_IMPOSTOR_CLAIMS: ErrorInfo(
        ErrorCode.E_NO_IMPOSTOR_CLAIMS, "No impostor claims", "FAR undefined for the role", 2
    ),
    ErrorCode.E_NO_GENUINE_CLAIMS: ErrorInfo(
        ErrorCode.E_NO_GENUINE_CLAIMS, "No genuine claims", "FRR undefined for the role", 2
    ),
    ErrorCode.E_UNKNOWN: ErrorInfo(
        ErrorCode.E_UNKNOWN, "Unclassified failure", "Final catch-all", 1
    ),
}


class KernelVerifyError(Exception):
    """Base class for all pipeline errors; carries an E-* code and optional hint."""

    code: ErrorCode = ErrorCode.E_UNKNOWN
    hint: Optional[str] = None

    def __init__(self, message: str, hint: Optional[str] = None, **context: Any):
        super().__init__(message)
        self.message = message
        if hint is not None:
            self.hint = hint
        self.context = context

    @property
    def exit_code(self) -> int:
        return ERROR_TAXONOMY[self.code].cli_exit_code


class ConfigError(KernelVerifyError):
    code = ErrorCode.E_CONFIG
    hint = "Check config.toml and KERNEL_VERIFY_* environment variables"


class UsageError(KernelVerifyError):
    code = ErrorCode.E_USAGE


class DatasetFileNotFound(KernelVerifyError):
    code = ErrorCode.E_FILE_NOT_FOUND
    hint = "Check the samples/protocol paths"


class SchemaError(KernelVerifyError):
    code = ErrorCode.E_SCHEMA


class DatasetFormatError(KernelVerifyError):
    code = ErrorCode.E_FORMAT
    hint = "Expected header f0,...,f{M-1},identity with decimal-point reals"


class DimensionMismatch(KernelVerifyError):
    code = ErrorCode.E_DIMENSION


class UnknownIdentity(KernelVerifyError):
    code = ErrorCode.E_UNKNOWN_IDENTITY


class ProtocolError(KernelVerifyError):
    code = ErrorCode.E_PROTOCOL


class MissingRole(KernelVerifyError):
    code = ErrorCode.E_MISSING_ROLE


class InsufficientTraining(KernelVerifyError):
    code = ErrorCode.E_INSUFFICIENT_TRAINING
    hint = "Every client needs at least 2 training rows"


class PixelRangeError(KernelVerifyError):
    code = ErrorCode.E_PIXEL_RANGE


class LengthMismatch(KernelVerifyError):
    code = ErrorCode.E_LENGTH


class InvalidGenerationParameters(KernelVerifyError):
    code = ErrorCode.E_GENERATION


class InvalidKernelSpec(KernelVerifyError):
    code = ErrorCode.E_KERNEL
    hint = "Use linear, polynomial:a=..,b=..,d=.. or rbf:sigma=.."


class NotSymmetric(KernelVerifyError):
    code = ErrorCode.E_NOT_SYMMETRIC


class NoPositiveSpectrum(KernelVerifyError):
    code = ErrorCode.E_NO_SPECTRUM


class NonFiniteKernel(KernelVerifyError):
    code = ErrorCode.E_NON_FINITE
    hint = "Lower the polynomial scale or degree, or rescale the samples"


class IndexOutOfRange(KernelVerifyError):
    code = ErrorCode.E_INDEX


class DegenerateStationaryPoint(KernelVerifyError):
    code = ErrorCode.E_DEGENERATE_STATIONARY
    hint = "Try a different alpha or the dinkelbach mode"


class DegenerateWithinScatter(KernelVerifyError):
    code = ErrorCode.E_DEGENERATE_WITHIN


class DegenerateBetweenScatter(KernelVerifyError):
    code = ErrorCode.E_DEGENERATE_BETWEEN


class SingularPopulationScatter(KernelVerifyError):
    code = ErrorCode.E_SINGULAR_SCATTER


class InsufficientClasses(KernelVerifyError):
    code = ErrorCode.E_CLASSES


class UnknownClient(KernelVerifyError):
    code = ErrorCode.E_UNKNOWN_CLIENT


class EmptyRoleSet(KernelVerifyError):
    code = ErrorCode.E_EMPTY_ROLE


class NoImpostorClaims(KernelVerifyError):
    code = ErrorCode.E_NO_IMPOSTOR_CLAIMS


class NoGenuineClaims(KernelVerifyError):
    code = ErrorCode.E_NO_GENUINE_CLAIMS


def create_error_envelope(
    error: Union[KernelVerifyError, ErrorCode],
    message: Optional[str] = None,
    hint: Optional[str] = None,
    context: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """
    Create a structured error envelope for CLI output.

    Args:
        error: A pipeline exception or a bare error code
        message: Human-readable message (defaults to the exception text)
        hint: Optional hint for resolution
        context: Additional context fields (paths, identities, counts)

    Returns:
        Structured error envelope dictionary
    """
    if isinstance(error, KernelVerifyError):
        code = error.code
        message = message or error.message
        hint = hint or error.hint
        merged = dict(error.context)
        merged.update(context or {})
        context = merged
    else:
        code = error

    info = ERROR_TAXONOMY[code]
    envelope = {
        "error": {
            "code": code.value,
            "message": message or info.meaning,
            "hint": hint,
            "exit_code": info.cli_exit_code,
        }
    }
    if context:
        envelope["error"]["context"] = context
    return envelope


def fail_with_error(
    error: Union[KernelVerifyError, ErrorCode],
    message: Optional[str] = None,
    hint: Optional[str] = None,
    context: Optional[Dict[str, Any]] = None
) -> None:
    """
    Fail with structured error handling for CLI mode.

    Prints `<code>: <message>`, an optional hint and the JSON envelope to
    STDERR, then exits with the taxonomy exit code.
    """
    envelope = create_error_envelope(error, message, hint, context)
    body = envelope["error"]

    print(f"{body['code']}: {body['message']}", file=sys.stderr)
    if body.get("hint"):
        print(f"Hint: {body['hint']}", file=sys.stderr)
    print(f"ERROR_ENVELOPE: {json.dumps(envelope, default=str)}", file=sys.stderr)

    sys.exit(body["exit_code"])


def get_error_info(code: ErrorCode) -> ErrorInfo:
    """Get error information for a specific code"""
    return ERROR_TAXONOMY[code]


def is_validation_error(code: ErrorCode) -> bool:
    """Check if an error code signals bad input rather than a numerical failure"""
    return ERROR_TAXONOMY[code].cli_exit_code == 2


def fail_config_error(message: str) -> None:
    """Fail with configuration error"""
    fail_with_error(
        ErrorCode.E_CONFIG,
        message,
        hint="Check config.toml and KERNEL_VERIFY_* environment variables"
    )
