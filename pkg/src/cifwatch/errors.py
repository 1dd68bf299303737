"""Exception hierarchy. ``exit_code`` is what the CLI returns for each family."""

from __future__ import annotations


class CifwatchError(Exception):
    exit_code = 1


class ConfigError(CifwatchError):
    exit_code = 2


class BackendError(CifwatchError):
    """A text-generation, embedding or geocoding service failed."""

    exit_code = 3

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class RetriableError(BackendError):
    """Transient network failure; ``query`` names the request that failed."""

    def __init__(self, message: str, query: str, status: int | None = None):
        super().__init__(message, status)
        self.query = query


class FixtureMissError(BackendError):
    def __init__(self, prompt_hash: str):
        super().__init__(f"no scripted completion for prompt hash {prompt_hash}")
        self.prompt_hash = prompt_hash


class DataError(CifwatchError):
    exit_code = 4


class SchemaError(DataError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f"{':' if where else 'line '}{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.path = path


class ParseError(DataError):
    def __init__(self, message: str, excerpt: str = ""):
        super().__init__(f"{message}: {excerpt!r}" if excerpt else message)
        self.excerpt = excerpt


class StageError(CifwatchError):
    """Wraps a failure with the pipeline stage and artifact it happened in."""

    def __init__(self, stage: str, artifact: str, cause: CifwatchError):
        super().__init__(f"stage {stage!r} failed ({artifact}): {cause}")
        self.stage = stage
        self.artifact = artifact
        self.cause = cause
        self.exit_code = cause.exit_code


def add_context(exc: Exception, context: str) -> Exception:
    """Append ``context`` to the message of ``exc`` in place and return it."""
    if exc.args:
        exc.args = (f"{exc.args[0]} ({context})",) + exc.args[1:]
    else:
        exc.args = (context,)
    return exc
