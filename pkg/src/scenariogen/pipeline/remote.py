"""Chat-completion client for running the generation agents on a remote model.

The wire format is the common ``/chat/completions`` shape: a system prompt
(from ``data/prompts/<agent>.txt``) plus one user message holding the agent's
inputs as JSON. Replies must be a JSON object matching the agent's schema;
invalid replies are sent back with the validation error, up to
``max_retries`` attempts in total.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from string import Template
from typing import Optional

import httpx
import yaml
from pydantic import ValidationError

from .backend import BackendError, BackendUnavailable, Check, GenerationBackend, SchemaViolation

log = logging.getLogger(__name__)

TOKEN_ENV = "SCENARIOGEN_API_TOKEN"
RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class RemoteConfig:
    """Endpoint settings. The token itself is never stored, only the name of
    the environment variable that holds it.

    Args:
        base_url: API root, e.g. ``https://host/v1``.
        model: model name sent with every request.
        token_env: environment variable holding the bearer token.
        temperature: sampling temperature.
        max_retries: attempts per agent call, for transport and schema failures alike.
        timeout: per-request timeout in seconds.
        max_in_flight: cap on concurrent requests through one backend.
        prompt_dir: directory with ``<agent>.txt`` prompt files; bundled prompts when unset.
    """

    base_url: str
    model: str
    token_env: str = TOKEN_ENV
    temperature: float = 0.2
    max_retries: int = 3
    timeout: float = 60.0
    max_in_flight: int = 4
    prompt_dir: Optional[str] = None

    @classmethod
    def from_file(cls, path) -> "RemoteConfig":
        """Read a YAML or JSON config; ``SCENARIOGEN_BASE_URL`` / ``SCENARIOGEN_MODEL`` override it."""
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
        doc = doc.get("remote", doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown remote config keys: {sorted(unknown)}")
        doc = dict(doc)
        doc["base_url"] = os.environ.get("SCENARIOGEN_BASE_URL", doc.get("base_url"))
        doc["model"] = os.environ.get("SCENARIOGEN_MODEL", doc.get("model"))
        if not doc["base_url"] or not doc["model"]:
            raise ValueError("remote config needs base_url and model")
        return cls(**doc)


def load_prompt(agent: str, prompt_dir: Optional[str] = None) -> str:
    if prompt_dir:
        return Path(prompt_dir, f"{agent}.txt").read_text(encoding="utf-8")
    return (resources.files("scenariogen") / "data" / "prompts" / f"{agent}.txt").read_text(encoding="utf-8")


_FENCE = re.compile(r"^```(?:json)?\s*|\s*```$", re.MULTILINE)


def extract_json(text: str):
    """The JSON object in a model reply, tolerating code fences and chatter around it."""
    body = _FENCE.sub("", text.strip())
    start, end = body.find("{"), body.rfind("}")
    if start < 0 or end < start:
        raise ValueError("reply contains no JSON object")
    return json.loads(body[start:end + 1])


class RemoteBackend(GenerationBackend):
    """Generation agents answered by a chat-completion endpoint."""

    name = "remote"

    def __init__(self, config: RemoteConfig, transport: Optional[httpx.BaseTransport] = None, backoff: float = 1.0):
        self.config = config
        self.backoff = backoff
        self._gate = threading.BoundedSemaphore(config.max_in_flight)
        self._client = httpx.Client(base_url=config.base_url.rstrip("/") + "/", timeout=config.timeout,
                                    transport=transport)

    def close(self):
        self._client.close()

    def _token(self) -> str:
        token = os.environ.get(self.config.token_env)
        if not token:
            raise BackendUnavailable(f"no API token: set {self.config.token_env}")
        return token

    def _post(self, messages: list) -> str:
        body = {"model": self.config.model, "temperature": self.config.temperature, "messages": messages}
        headers = {"Authorization": f"Bearer {self._token()}"}
        last = ""
        for attempt in range(1, self.config.max_retries + 1):
            try:
                with self._gate:
                    resp = self._client.post("chat/completions", json=body, headers=headers)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise BackendError(f"malformed completion response: {exc}") from None
                if resp.status_code not in RETRY_STATUS:
                    raise BackendError(f"endpoint answered {resp.status_code}: {resp.text[:200]}")
                last = f"HTTP {resp.status_code}"
            log.warning("remote call failed (attempt %d/%d): %s", attempt, self.config.max_retries, last)
            if attempt < self.config.max_retries:
                time.sleep(self.backoff * 2 ** (attempt - 1))
        raise BackendUnavailable(f"endpoint unreachable after {self.config.max_retries} attempts: {last}")

    def ask(self, agent, payload, schema, check: Check = None):
        system = Template(load_prompt(agent, self.config.prompt_dir)).safe_substitute(
            schema=json.dumps(schema.model_json_schema(), indent=1, sort_keys=True))
        messages = [{"role": "system", "content": system},
                    {"role": "user", "content": json.dumps(payload, sort_keys=True)}]
        error = ""
        for _ in range(self.config.max_retries):
            reply = self._post(messages)
            try:
                out = schema.model_validate(extract_json(reply))
                if check is not None:
                    check(out)
                return out
            except (ValidationError, ValueError) as exc:
                error = str(exc)
            messages = messages + [
                {"role": "assistant", "content": reply},
                {"role": "user",
                 "content": f"That reply was rejected: {error}\nAnswer again with the corrected JSON object only."},
            ]
        raise SchemaViolation(agent, self.config.max_retries, error)
