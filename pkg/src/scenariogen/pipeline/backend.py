"""Backend contract shared by the template engine and the remote model client."""

from __future__ import annotations

from typing import Callable, Optional

from pydantic import BaseModel


class BackendError(RuntimeError):
    """Any failure that comes from the generation backend."""


class BackendUnavailable(BackendError):
    pass


class SchemaViolation(BackendError):
    """The backend kept answering with output that does not validate."""

    def __init__(self, agent: str, attempts: int, last_error: str):
        super().__init__(f"{agent}: no valid output after {attempts} attempt(s): {last_error}")
        self.agent = agent
        self.attempts = attempts
        self.last_error = last_error


Check = Optional[Callable[[BaseModel], None]]


class GenerationBackend:
    """One call per agent: inputs in, a validated schema instance out.

    ``check`` runs after schema validation for constraints a schema cannot
    express (for example that a behavior tree parses); it raises ``ValueError``
    to reject the output.
    """

    name = "abstract"

    def ask(self, agent: str, payload: dict, schema: type[BaseModel], check: Check = None) -> BaseModel:
        raise NotImplementedError
