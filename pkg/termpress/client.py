from __future__ import annotations

import asyncio
import hashlib
import json
import logging
import re
import time
from collections.abc import Iterable, Sequence
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Literal, Protocol

import httpx
from pydantic import BaseModel

from termpress.errors import (
    GatewayAuthError,
    GatewayError,
    GatewayRateLimitError,
    GatewayTimeoutError,
    GatewayTransportError,
    MockTranscriptMissError,
    PromptBindingError,
    ResponseParseError,
    RuleParseError,
    RuleValidationError,
)
from termpress.rules import rule_from_mapping, rule_to_document, serialize_rule
from termpress.schemas import CompressionRule, PromptRequest, RuleProposal, TemplateId
from termpress.settings import Settings, get_settings


logger = logging.getLogger(__name__)

TERMINAL_STATE_CHARS = 500
OUTPUT_HEAD_CHARS = 2000
OUTPUT_TAIL_CHARS = 500
SNIPPET_CHARS = 2000
WILDCARD_HASH = "*"

# template placeholder -> binding name
TEMPLATE_PLACEHOLDERS: dict[TemplateId, dict[str, str]] = {
    TemplateId.PROPOSAL_WITH_CACHE: {
        "cached_rules_json": "cached_rules",
        "instruction": "instruction",
        "task_category": "task_category",
        "terminal_state": "terminal_state",
    },
    TemplateId.PROPOSAL_NO_CACHE: {
        "instruction": "instruction",
        "task_category": "task_category",
        "terminal_state": "terminal_state",
    },
    TemplateId.SPAWN_NEW: {
        "output_length": "output_length",
        "command": "command",
        "raw_output_head": "output_head",
        "raw_output_tail": "output_tail",
        "task_instruction": "instruction",
    },
    TemplateId.SPAWN_REPLACEMENT: {
        "old_rule_json": "old_rule",
        "command": "command",
        "raw_output_snippet": "raw_output_snippet",
        "agent_feedback": "agent_feedback",
    },
}

_PLACEHOLDER = re.compile(r"\{(\w+)\}")
_FENCE = re.compile(r"```[A-Za-z0-9_-]*\s*\n?(.*?)```", re.DOTALL)

REPAIR_SUFFIX = (
    "\n\nYour previous reply could not be used: {note}\n"
    "Output ONLY the JSON object, no other text.\n"
)


@lru_cache(maxsize=None)
def load_template(template_id: TemplateId) -> str:
    return (
        resources.files("termpress")
        .joinpath(f"prompts/{template_id.value}.txt")
        .read_text(encoding="utf-8")
    )


def effective_bindings(request: PromptRequest) -> dict[str, str]:
    """The bindings a template actually consumes, truncated to their limits."""
    wanted = TEMPLATE_PLACEHOLDERS[request.template_id]
    bound: dict[str, str] = {}
    for binding in sorted(set(wanted.values())):
        if binding not in request.bindings:
            raise PromptBindingError(binding)
        bound[binding] = str(request.bindings[binding])

    if request.template_id is TemplateId.PROPOSAL_WITH_CACHE:
        cached = bound["cached_rules"].strip()
        if cached in ("", "[]"):
            raise PromptBindingError(
                "cached_rules", "cached_rules is empty; use the proposal_no_cache template"
            )
    if "terminal_state" in bound:
        bound["terminal_state"] = bound["terminal_state"][:TERMINAL_STATE_CHARS]
    if "output_head" in bound:
        bound["output_head"] = bound["output_head"][:OUTPUT_HEAD_CHARS]
    if "output_tail" in bound:
        bound["output_tail"] = bound["output_tail"][-OUTPUT_TAIL_CHARS:]
    if "raw_output_snippet" in bound:
        bound["raw_output_snippet"] = bound["raw_output_snippet"][:SNIPPET_CHARS]
    return bound


def render_prompt(request: PromptRequest) -> str:
    bound = effective_bindings(request)
    placeholders = TEMPLATE_PLACEHOLDERS[request.template_id]

    def substitute(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in placeholders:
            return match.group(0)
        return bound[placeholders[name]]

    text = _PLACEHOLDER.sub(substitute, load_template(request.template_id))
    if request.repair_note:
        text += REPAIR_SUFFIX.format(note=request.repair_note)
    return text


def bindings_hash(request: PromptRequest) -> str:
    canonical = json.dumps(effective_bindings(request), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def cached_rules_json(rules: Iterable[CompressionRule]) -> str:
    return json.dumps([rule_to_document(rule) for rule in rules], indent=2, ensure_ascii=False)


def proposal_request(
    instruction: str,
    category: str | None,
    terminal_state: str,
    candidates: Sequence[CompressionRule],
) -> PromptRequest:
    bindings: dict[str, str | int] = {
        "instruction": instruction,
        "task_category": category or "general",
        "terminal_state": terminal_state,
    }
    if not candidates:
        return PromptRequest(template_id=TemplateId.PROPOSAL_NO_CACHE, bindings=bindings)
    bindings["cached_rules"] = cached_rules_json(candidates)
    return PromptRequest(template_id=TemplateId.PROPOSAL_WITH_CACHE, bindings=bindings)


def spawn_new_request(
    command: str,
    output: str,
    instruction: str,
    output_length: int | None = None,
) -> PromptRequest:
    """`output_length` is the size of the raw observation; it defaults to len(output)."""
    return PromptRequest(
        template_id=TemplateId.SPAWN_NEW,
        bindings={
            "command": command,
            "output_length": len(output) if output_length is None else output_length,
            "output_head": output[:OUTPUT_HEAD_CHARS],
            "output_tail": output[-OUTPUT_TAIL_CHARS:],
            "instruction": instruction,
        },
    )


def spawn_replacement_request(
    old_rule: CompressionRule,
    command: str,
    raw_output: str,
    feedback: str,
) -> PromptRequest:
    return PromptRequest(
        template_id=TemplateId.SPAWN_REPLACEMENT,
        bindings={
            "old_rule": serialize_rule(old_rule),
            "command": command,
            "raw_output_snippet": raw_output[:SNIPPET_CHARS],
            "agent_feedback": feedback,
        },
    )


class Gateway(Protocol):
    async def complete(self, request: PromptRequest) -> str: ...


class TokenBucket:
    def __init__(self, rate: float, capacity: float | None = None) -> None:
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._updated = time.monotonic()
        self._lock = asyncio.Lock()

    async def acquire(self) -> None:
        while True:
            async with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            await asyncio.sleep(wait)


class ChatCompletionGateway:
    """OpenAI-compatible chat completions over httpx."""

    def __init__(
        self,
        settings: Settings | None = None,
        transport: httpx.AsyncBaseTransport | None = None,
    ) -> None:
        self.settings = settings or get_settings()
        self.base_url = self.settings.llm_endpoint.rstrip("/")
        headers = {}
        if self.settings.llm_api_key:
            headers["Authorization"] = f"Bearer {self.settings.llm_api_key}"
        self._client = httpx.AsyncClient(
            timeout=self.settings.llm_timeout_seconds, headers=headers, transport=transport
        )
        self._semaphore = asyncio.Semaphore(self.settings.llm_max_concurrency)
        rate = self.settings.llm_requests_per_second
        self._bucket = TokenBucket(rate) if rate else None

    async def __aenter__(self) -> ChatCompletionGateway:
        return self

    async def __aexit__(self, *exc_info: object) -> None:
        await self.aclose()

    async def aclose(self) -> None:
        await self._client.aclose()

    def _payload(self, request: PromptRequest) -> dict:
        temperature = request.temperature
        if temperature is None:
            temperature = self.settings.llm_temperature
        return {
            "model": self.settings.llm_model,
            "messages": [{"role": "user", "content": render_prompt(request)}],
            "temperature": temperature,
            "max_tokens": request.max_tokens or self.settings.llm_max_tokens,
        }

    async def _post(self, payload: dict) -> str:
        try:
            response = await self._client.post(f"{self.base_url}/chat/completions", json=payload)
        except httpx.TimeoutException as exc:
            raise GatewayTimeoutError(f"request timed out: {exc}") from exc
        except httpx.TransportError as exc:
            raise GatewayTransportError(f"transport failure: {exc}") from exc

        status = response.status_code
        if status in (401, 403):
            raise GatewayAuthError(f"provider rejected credentials (HTTP {status})")
        if status == 429:
            raise GatewayRateLimitError("provider rate limit hit (HTTP 429)")
        if status >= 500:
            raise GatewayTransportError(f"provider error (HTTP {status})")
        try:
            response.raise_for_status()
        except httpx.HTTPStatusError as exc:
            raise GatewayError(f"provider refused the request (HTTP {status})") from exc
        try:
            return response.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayError("provider response has no message content") from exc

    async def complete(self, request: PromptRequest) -> str:
        payload = self._payload(request)
        retried = False
        while True:
            try:
                async with self._semaphore:
                    if self._bucket is not None:
                        await self._bucket.acquire()
                    return await self._post(payload)
            except GatewayError as exc:
                if not exc.transient or retried:
                    raise
                retried = True
                logger.warning("%s; retrying once", exc)
                await asyncio.sleep(self.settings.llm_retry_backoff_seconds)


class ScriptedResponse(BaseModel):
    template_id: TemplateId
    bindings_hash: str
    response_text: str


def load_transcript(path: str | Path) -> list[ScriptedResponse]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ScriptedResponse.model_validate(item) for item in data]


def save_transcript(entries: Iterable[ScriptedResponse], path: str | Path) -> None:
    document = [entry.model_dump(mode="json") for entry in entries]
    Path(path).write_text(json.dumps(document, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


class ScriptedGateway:
    """Replays a recorded transcript.

    Exact (template, bindings hash) entries win over a template's "*" entry.
    """

    def __init__(self, entries: Iterable[ScriptedResponse]) -> None:
        self._exact: dict[tuple[TemplateId, str], str] = {}
        self._fallback: dict[TemplateId, str] = {}
        for entry in entries:
            if entry.bindings_hash == WILDCARD_HASH:
                self._fallback[entry.template_id] = entry.response_text
            else:
                self._exact[(entry.template_id, entry.bindings_hash)] = entry.response_text
        self.requests: list[PromptRequest] = []

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedGateway:
        return cls(load_transcript(path))

    async def complete(self, request: PromptRequest) -> str:
        render_prompt(request)
        self.requests.append(request)
        key = (request.template_id, bindings_hash(request))
        if key in self._exact:
            return self._exact[key]
        if request.template_id in self._fallback:
            return self._fallback[request.template_id]
        raise MockTranscriptMissError(
            f"no scripted response for {request.template_id.value} {key[1][:12]}"
        )


class RecordingGateway:
    def __init__(self, inner: Gateway, path: str | Path) -> None:
        self.inner = inner
        self.path = Path(path)
        self.entries: list[ScriptedResponse] = []

    async def complete(self, request: PromptRequest) -> str:
        text = await self.inner.complete(request)
        self.entries.append(
            ScriptedResponse(
                template_id=request.template_id,
                bindings_hash=bindings_hash(request),
                response_text=text,
            )
        )
        return text

    def save(self) -> None:
        save_transcript(self.entries, self.path)


def extract_json_object(text: str) -> dict:
    decoder = json.JSONDecoder()
    sources = [match.group(1) for match in _FENCE.finditer(text)] + [text]
    for source in sources:
        for match in re.finditer(r"\{", source):
            try:
                value, _ = decoder.raw_decode(source, match.start())
            except json.JSONDecodeError:
                continue
            if isinstance(value, dict):
                return value
    raise ResponseParseError("no JSON object found in response", text)


def _salvage_rules(
    items: object, key: str, proposal: RuleProposal, raw: str
) -> list[CompressionRule]:
    if items is None:
        return []
    if not isinstance(items, list):
        raise ResponseParseError(f"{key} must be a list", raw)
    rules: list[CompressionRule] = []
    for index, item in enumerate(items):
        try:
            rules.append(rule_from_mapping(item))
        except (RuleParseError, RuleValidationError) as exc:
            message = f"dropped {key}[{index}]: {exc}"
            proposal.diagnostics.append(message)
            logger.warning(message)
    return rules


def parse_rule_response(
    text: str,
    expected: Literal["proposal", "single_rule"],
    cold_start: bool = False,
) -> RuleProposal | CompressionRule:
    data = extract_json_object(text)
    if expected == "single_rule":
        if "rule_id" not in data and isinstance(data.get("rules"), list):
            if len(data["rules"]) != 1:
                raise ResponseParseError("expected exactly one rule object", text)
            data = data["rules"][0]
        try:
            return rule_from_mapping(data)
        except (RuleParseError, RuleValidationError) as exc:
            raise ResponseParseError(str(exc), text) from exc

    known = {"selected_rule_ids", "modified_rules", "new_rules", "rules"}
    if not known & data.keys():
        raise ResponseParseError("response carries no proposal fields", text)
    proposal = RuleProposal()
    selected = data.get("selected_rule_ids") or []
    if not isinstance(selected, list):
        raise ResponseParseError("selected_rule_ids must be a list", text)
    proposal.selected_rule_ids = [item for item in selected if isinstance(item, str)]
    proposal.modified_rules = _salvage_rules(data.get("modified_rules"), "modified_rules", proposal, text)
    proposal.new_rules = _salvage_rules(data.get("new_rules"), "new_rules", proposal, text)
    proposal.new_rules += _salvage_rules(data.get("rules"), "rules", proposal, text)

    if cold_start and (proposal.selected_rule_ids or proposal.modified_rules):
        proposal.diagnostics.append("cold-start proposal cannot select or modify rules; ignored")
        proposal.selected_rule_ids = []
        proposal.modified_rules = []
    if not 3 <= proposal.rule_count <= 7:
        logger.info("proposal holds %d rules, outside the 3-7 target", proposal.rule_count)
    return proposal


async def _complete_and_parse(
    gateway: Gateway,
    request: PromptRequest,
    expected: Literal["proposal", "single_rule"],
) -> RuleProposal | CompressionRule:
    cold_start = request.template_id is TemplateId.PROPOSAL_NO_CACHE
    raw = await gateway.complete(request)
    try:
        return parse_rule_response(raw, expected, cold_start=cold_start)
    except ResponseParseError as exc:
        logger.info("unusable %s response (%s); asking once more", request.template_id.value, exc)
        repaired = request.model_copy(update={"repair_note": str(exc)})
        raw = await gateway.complete(repaired)
        return parse_rule_response(raw, expected, cold_start=cold_start)


async def propose_rules(
    gateway: Gateway,
    instruction: str,
    category: str | None,
    terminal_state: str,
    candidates: Sequence[CompressionRule],
) -> RuleProposal:
    request = proposal_request(instruction, category, terminal_state, candidates)
    return await _complete_and_parse(gateway, request, "proposal")


async def spawn_rule(
    gateway: Gateway,
    command: str,
    output: str,
    instruction: str,
    output_length: int | None = None,
) -> CompressionRule:
    request = spawn_new_request(command, output, instruction, output_length)
    return await _complete_and_parse(gateway, request, "single_rule")


async def spawn_replacement(
    gateway: Gateway,
    old_rule: CompressionRule,
    command: str,
    raw_output: str,
    feedback: str,
) -> CompressionRule:
    request = spawn_replacement_request(old_rule, command, raw_output, feedback)
    return await _complete_and_parse(gateway, request, "single_rule")
