"""Backend-agnostic LLM access: templates, transcripts, transport, parsing.

Prompt templates live as data files with <<name>> placeholder markers;
rendering is byte-stable so completions can be keyed, cached and replayed.
The scripted backend is a pure map from (template id, prompt digest) to a
response and errors on a miss, which is what makes runs replayable without
any network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

from importlib import resources

import requests

from .core import (
    Bundle,
    Money,
    PriceFunction,
    Scenario,
    XorBid,
    format_money,
    money_from_text,
)

logger = logging.getLogger(__name__)

TEMPLATE_IDS = (
    "seed_step1",
    "seed_step2",
    "seed_step3",
    "seed_step4",
    "bundle_value",
    "nl_answer",
    "equivalence",
    "proxy_value_infer",
    "proxy_next_question",
    "proxy_decision_part1",
    "proxy_decision_part2",
)

REPROMPT_TEXT = (
    "Your previous response was not in the required format. "
    "Please respond only in the required format."
)


class GatewayError(Exception):
    """Base class for template, transport and parsing failures."""


class RenderError(GatewayError):
    pass


class ParseError(GatewayError):
    pass


class InvalidBundleError(ParseError):
    pass


class BackendUnavailable(GatewayError):
    pass


class FixtureMissing(GatewayError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str

    def placeholders(self) -> set[str]:
        return set(re.findall(r"<<([a-z_]+)>>", self.body))


def get_template(template_id: str) -> PromptTemplate:
    if template_id not in TEMPLATE_IDS:
        raise KeyError(f"unknown template id: {template_id!r}")
    body = (
        resources.files("auctionlab")
        .joinpath("templates", f"{template_id}.txt")
        .read_text(encoding="utf-8")
    )
    return PromptTemplate(id=template_id, body=body)


def render(template: PromptTemplate, bindings: Mapping[str, object]) -> str:
    """Substitute <<name>> markers; every marker must be bound."""
    missing = template.placeholders() - set(bindings)
    if missing:
        raise RenderError(
            f"template {template.id!r} has unbound placeholders: {sorted(missing)}"
        )

    def repl(match: re.Match) -> str:
        return str(bindings[match.group(1)])

    return re.sub(r"<<([a-z_]+)>>", repl, template.body)


# ---------------------------------------------------------------------------
# Transcripts

PROXY_QUERY = "proxy_query"
PERSON_ANSWER = "person_answer"
AUCTIONEER_MSG = "auctioneer_msg"
PROXY_BID = "proxy_bid"

CHANNEL_VALUE = "value"
CHANNEL_DEMAND = "demand"
CHANNEL_NATURAL = "natural"
CHANNEL_EQUIVALENCE = "equivalence"
CHANNEL_ENGINE = "engine"

_ROLE_LABELS = {
    PROXY_QUERY: "Proxy",
    PERSON_ANSWER: "Person",
    AUCTIONEER_MSG: "Auctioneer",
    PROXY_BID: "Proxy bid",
}


@dataclass(frozen=True)
class TranscriptEvent:
    role: str
    channel: str
    text: str
    timestamp: int


@dataclass
class Transcript:
    """Append-only conversation log rendered into prompt bindings.

    The full history covers every channel; the primary history keeps only
    natural-language exchanges.
    """

    events: list[TranscriptEvent] = field(default_factory=list)

    def append(self, role: str, channel: str, text: str) -> TranscriptEvent:
        event = TranscriptEvent(role=role, channel=channel, text=text, timestamp=len(self.events))
        self.events.append(event)
        return event

    @staticmethod
    def _render(events: Sequence[TranscriptEvent]) -> str:
        if not events:
            return "(no prior conversation)"
        return "\n".join(
            f"{_ROLE_LABELS[e.role]} ({e.channel}): {e.text}" for e in events
        )

    def history(self) -> str:
        return self._render(self.events)

    def primary_history(self) -> str:
        return self._render([e for e in self.events if e.channel == CHANNEL_NATURAL])


# ---------------------------------------------------------------------------
# Backends

def _digest(template_id: str, messages: Sequence[str]) -> str:
    payload = json.dumps(
        {"template": template_id, "messages": list(messages)},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:24]


class ScriptedBackend:
    """Deterministic backend: a pure map from prompt digests to responses."""

    kind = "scripted"

    def __init__(self) -> None:
        self.fixtures: dict[tuple[str, str], str] = {}

    def add_messages(self, template_id: str, messages: Sequence[str], response: str) -> str:
        key = (template_id, _digest(template_id, messages))
        self.fixtures[key] = response
        return key[1]

    def add(
        self,
        template_id: str,
        bindings: Mapping[str, object],
        response: str,
        turns: Sequence[tuple[str, str]] = (),
    ) -> str:
        """Register a fixture by rendering the prompt the caller will send."""
        template = get_template(template_id)
        messages: list[str] = []
        for q, a in turns:
            messages.extend([q, a])
        messages.append(render(template, bindings))
        return self.add_messages(template_id, messages, response)

    def complete_messages(self, template_id: str, messages: Sequence[str]) -> str:
        key = (template_id, _digest(template_id, messages))
        if key not in self.fixtures:
            raise FixtureMissing(
                f"no fixture for template {template_id!r} digest {key[1]}"
            )
        return self.fixtures[key]

    def save_dir(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        by_template: dict[str, list[tuple[str, str]]] = {}
        for (template_id, digest), response in self.fixtures.items():
            by_template.setdefault(template_id, []).append((digest, response))
        for template_id, records in by_template.items():
            path = directory / f"{template_id}.jsonl"
            with open(path, "w", encoding="utf-8") as fh:
                for digest, response in sorted(records):
                    fh.write(
                        json.dumps(
                            {
                                "template_id": template_id,
                                "bindings_digest": digest,
                                "response_text": response,
                            },
                            sort_keys=True,
                            ensure_ascii=False,
                        )
                    )
                    fh.write("\n")

    @classmethod
    def load_dir(cls, directory: str | Path) -> "ScriptedBackend":
        backend = cls()
        for path in sorted(Path(directory).glob("*.jsonl")):
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    record = json.loads(line)
                    key = (record["template_id"], record["bindings_digest"])
                    backend.fixtures[key] = record["response_text"]
        return backend


def _requests_transport(url: str, headers: dict, payload: dict, timeout: float) -> tuple[int, dict]:
    response = requests.post(url, headers=headers, json=payload, timeout=timeout)
    try:
        body = response.json()
    except ValueError:
        body = {}
    return response.status_code, body


class RemoteBackend:
    """Chat-completion transport over HTTPS with bounded retries and a cache."""

    kind = "remote"

    def __init__(
        self,
        model: str,
        base_url: str = "https://api.openai.com/v1",
        api_key: str = "",
        temperature: float = 0.0,
        max_retries: int = 3,
        timeout: float = 60.0,
        retry_wait: float = 1.0,
        cache: bool = True,
        cache_path: str | Path | None = None,
        transport: Callable[[str, dict, dict, float], tuple[int, dict]] = _requests_transport,
    ) -> None:
        self.model = model
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.temperature = temperature
        self.max_retries = max_retries
        self.timeout = timeout
        self.retry_wait = retry_wait
        self.cache_enabled = cache
        self.cache_path = Path(cache_path) if cache_path else None
        self.transport = transport
        self._cache: dict[tuple[str, str], str] = {}
        if self.cache_path and self.cache_path.exists():
            with open(self.cache_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        record = json.loads(line)
                        self._cache[(record["template_id"], record["digest"])] = record["response"]

    def _store(self, key: tuple[str, str], response: str) -> None:
        self._cache[key] = response
        if self.cache_path:
            with open(self.cache_path, "a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {"template_id": key[0], "digest": key[1], "response": response},
                        sort_keys=True,
                        ensure_ascii=False,
                    )
                )
                fh.write("\n")

    def complete_messages(self, template_id: str, messages: Sequence[str]) -> str:
        key = (template_id, _digest(template_id, messages))
        if self.cache_enabled and key in self._cache:
            return self._cache[key]
        chat = []
        for i, text in enumerate(messages):
            role = "user" if i % 2 == 0 else "assistant"
            chat.append({"role": role, "content": text})
        payload = {"model": self.model, "messages": chat, "temperature": self.temperature}
        url = f"{self.base_url}/chat/completions"
        headers = {"Authorization": f"Bearer {self.api_key}", "Content-Type": "application/json"}
        last_error = "no attempts made"
        for attempt in range(self.max_retries + 1):
            try:
                status, body = self.transport(url, headers, payload, self.timeout)
            except Exception as exc:
                last_error = f"transport error: {exc}"
                logger.warning("completion attempt %d failed: %s", attempt + 1, last_error)
                time.sleep(self.retry_wait * (attempt + 1) if self.retry_wait else 0)
                continue
            if status == 200:
                try:
                    text = body["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError):
                    raise BackendUnavailable(f"malformed completion body: {body!r}")
                logger.debug(
                    "completion ok: template=%s digest=%s prompt_chars=%d",
                    template_id,
                    key[1],
                    sum(len(m) for m in messages),
                )
                if self.cache_enabled:
                    self._store(key, text)
                return text
            if status in (429,) or status >= 500:
                last_error = f"transient HTTP {status}"
                logger.warning("completion attempt %d failed: %s", attempt + 1, last_error)
                time.sleep(self.retry_wait * (attempt + 1) if self.retry_wait else 0)
                continue
            raise BackendUnavailable(f"HTTP {status}: {body!r}")
        raise BackendUnavailable(f"retries exhausted: {last_error}")


LlmBackend = ScriptedBackend | RemoteBackend


def complete(
    backend: LlmBackend,
    template: PromptTemplate | str,
    bindings: Mapping[str, object],
    turns: Sequence[tuple[str, str]] = (),
) -> str:
    """Render the template and obtain one completion.

    turns is an optional list of earlier (prompt, response) exchanges sent
    as chat context ahead of the rendered prompt.
    """
    if isinstance(template, str):
        template = get_template(template)
    prompt = render(template, bindings)
    messages: list[str] = []
    for q, a in turns:
        messages.extend([q, a])
    messages.append(prompt)
    return backend.complete_messages(template.id, messages)


def complete_parsed(
    backend: LlmBackend,
    template: PromptTemplate | str,
    bindings: Mapping[str, object],
    parser: Callable[[str], object],
    turns: Sequence[tuple[str, str]] = (),
    max_attempts: int = 3,
):
    """Complete and parse, re-prompting on malformed output up to a limit."""
    if isinstance(template, str):
        template = get_template(template)
    prompt = render(template, bindings)
    messages: list[str] = []
    for q, a in turns:
        messages.extend([q, a])
    messages.append(prompt)
    last: ParseError | None = None
    for _ in range(max_attempts):
        text = backend.complete_messages(template.id, messages)
        try:
            return parser(text)
        except ParseError as exc:
            last = exc
            messages = messages + [text, REPROMPT_TEXT]
    raise ParseError(f"unparseable after {max_attempts} attempts: {last}")


# ---------------------------------------------------------------------------
# Output parsers. All are total: they return a value or raise a typed
# ParseError, never anything else.

_BUNDLE_VALUE_RE = re.compile(r"Bundle value:\s*\$\s*([0-9][0-9,]*(?:\.[0-9]{1,2})?)")
_ANSWER_RE = re.compile(r'Answer:\s*"([^"\n]*)"')
_QUESTION_RE = re.compile(r'Question:\s*"([^"\n]*)"')
_CODE_RE = re.compile(r"[A-Z][A-Z0-9]*")


def parse_bundle_value(text: str) -> Money:
    """Extract the last 'Bundle value: $X' figure as cents."""
    matches = _BUNDLE_VALUE_RE.findall(text)
    if not matches:
        raise ParseError("no 'Bundle value: $...' line found")
    return money_from_text(matches[-1])


def parse_answer(text: str) -> str:
    matches = _ANSWER_RE.findall(text)
    if not matches:
        raise ParseError("no 'Answer: \"...\"' line found")
    return matches[-1]


def parse_question(text: str) -> str:
    matches = _QUESTION_RE.findall(text)
    if not matches:
        raise ParseError("no 'Question: \"...\"' line found")
    return matches[-1]


class Action(Enum):
    TARGET_BUNDLE = "TARGET_BUNDLE"
    CHECK = "CHECK"
    HAPPY = "HAPPY"


@dataclass(frozen=True)
class Decision:
    action: Action
    bundle: Bundle | None = None


def parse_decision(text: str, scenario: Scenario) -> Decision:
    """Parse the target/check/happy action, validating any good codes."""
    hits = [
        (m.start(), Action(m.group(0)))
        for m in re.finditer(r"\b(TARGET_BUNDLE|CHECK|HAPPY)\b", text)
    ]
    if len(hits) != 1:
        raise ParseError(f"expected exactly one action keyword, found {len(hits)}")
    start, action = hits[0]
    if action is not Action.TARGET_BUNDLE:
        return Decision(action=action)
    tail_lines = text[start + len("TARGET_BUNDLE"):].splitlines()
    rest = tail_lines[0].lstrip(" :") if tail_lines else ""
    codes = _CODE_RE.findall(rest)
    if not codes:
        raise ParseError("TARGET_BUNDLE without any good codes")
    known = set(scenario.codes)
    bad = [c for c in codes if c not in known]
    if bad:
        raise InvalidBundleError(f"unknown good codes: {bad}")
    return Decision(action=action, bundle=scenario.bundle_from_codes(codes))


def parse_equivalence_bundles(text: str, scenario: Scenario, limit: int = 5) -> list[Bundle]:
    """Extract up to `limit` proposed bundles, or none if EQUIVALENT."""
    proposals: list[Bundle] = []
    known = set(scenario.codes)
    for raw in re.findall(r"Bundle:\s*([A-Z0-9, ]+)", text):
        codes = _CODE_RE.findall(raw)
        good = [c for c in codes if c in known]
        if not good:
            continue
        bundle = scenario.bundle_from_codes(good)
        if bundle not in proposals:
            proposals.append(bundle)
        if len(proposals) == limit:
            break
    if not proposals and not re.search(r"\bEQUIVALENT\b", text):
        raise ParseError("neither EQUIVALENT nor any 'Bundle: ...' line found")
    return proposals


def parse_seed_versions(text: str) -> list[str]:
    """Split a three-version persona draft into its candidate texts."""
    parts = re.split(r"^Version\s+\d+\s*:", text, flags=re.MULTILINE)
    versions = [p.strip() for p in parts[1:] if p.strip()]
    if len(versions) < 3:
        raise ParseError(f"expected 3 'Version k:' sections, found {len(versions)}")
    return versions[:3]


# ---------------------------------------------------------------------------
# Binding renderers shared by proxies, simulated bidders and fixture tooling.

def render_atoms_block(bid: XorBid, scenario: Scenario) -> str:
    lines = []
    for i, (bundle, value) in enumerate(bid.atoms, start=1):
        lines.append(
            f"[[[[ Atomic bid {i} - Bundle: {scenario.describe_bundle(bundle)} ; "
            f"Valued at {format_money(value)} ]]]]"
        )
    return "\n".join(lines)


def render_value_pairs(pairs: Sequence[tuple[Bundle, Money]], scenario: Scenario) -> str:
    if not pairs:
        return "(none)"
    return "\n".join(
        f"{scenario.describe_bundle(b)}: {format_money(v)}" for b, v in pairs
    )


def render_price_lines(prices: PriceFunction, scenario: Scenario) -> str:
    lines = [
        f"{scenario.describe_bundle(bundle)}: {format_money(max(value - prices.offset, 0))}"
        for bundle, value in prices.base.atoms
    ]
    return "\n".join(lines)


def render_item_codes(scenario: Scenario) -> str:
    return ", ".join(f"{code} (quantity 1)" for code in scenario.codes)
