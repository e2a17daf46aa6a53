"""Design-strategy acquisition over a pluggable text-completion provider.

A specification goes in, a block-structured design strategy comes out.
The provider is plain text-in/text-out: the remote implementation talks
to a chat-completions-style HTTP endpoint, while the scripted provider
replays recorded exchanges keyed by prompt hash, so the whole pipeline
runs deterministic and offline.

Strategies are asked for with in-context examples and explicit
step-by-step reasoning, parsed from a fixed block format, and converted
into wildcard-subject triplets for store retrieval.  Completed design
attempts can be folded back in as regeneration few-shots: the achieved
measurements become the example's "wanted" specification, with the old
strategy as its answer.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import string
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, NamedTuple, Protocol, Sequence

from .kg import Store, Triplet, normalize_text

__all__ = [
    "DesignHistoryEntry",
    "DesignSpec",
    "DesignStrategy",
    "MetricTarget",
    "Provider",
    "ProviderConfig",
    "RemoteProvider",
    "ScriptedProvider",
    "StrategyBlock",
    "StrategyError",
    "StrategyParseError",
    "TripletExtraction",
    "build_regeneration_fewshot",
    "build_strategy_prompt",
    "kg_vocabulary",
    "make_provider",
    "parse_strategy",
    "prompt_digest",
    "render_fewshot",
    "request_strategy",
    "spec_from_dict",
    "spec_to_dict",
    "strategy_to_triplets",
    "tie_break",
    "transcript_entry",
]

log = logging.getLogger(__name__)


class StrategyError(Exception):
    pass


class StrategyParseError(StrategyError):
    """Response text did not follow the block format; raw text retained."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


# ---------------------------------------------------------------------------
# domain types


_COMPARATORS = {">": ">", "<": "<", "=": "=", ">=": ">=", "<=": "<=",
                "≥": ">=", "≤": "<="}

_ROLE_RE = re.compile(r"^(stage-\d+|bias|compensation)$")


@dataclass(frozen=True)
class MetricTarget:
    """One specification line, e.g. dm gain > 80 dB."""

    metric: str
    comparator: str
    value: float
    unit: str = ""

    def __post_init__(self):
        if not self.metric.strip():
            raise StrategyError("metric name must be non-empty")
        try:
            object.__setattr__(self, "comparator",
                               _COMPARATORS[self.comparator])
        except KeyError:
            raise StrategyError(
                f"unknown comparator {self.comparator!r}; use one of "
                + ", ".join(sorted(set(_COMPARATORS.values())))) from None
        if not math.isfinite(self.value):
            raise StrategyError(f"target for {self.metric!r} must be finite")

    def render(self) -> str:
        text = f"{self.metric} {self.comparator} {self.value:g}"
        return f"{text} {self.unit}" if self.unit else text


@dataclass(frozen=True)
class DesignSpec:
    """Circuit class plus metric targets and operating environment."""

    circuit_class: str
    targets: tuple[MetricTarget, ...]
    environment: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "environment", dict(self.environment))
        if not self.circuit_class.strip():
            raise StrategyError("circuit class must be non-empty")
        seen = set()
        for t in self.targets:
            key = normalize_text(t.metric)
            if key in seen:
                raise StrategyError(f"duplicate target metric {t.metric!r}")
            seen.add(key)

    def render(self) -> str:
        lines = [t.render() for t in self.targets]
        for key in sorted(self.environment):
            lines.append(f"{key}: {self.environment[key]}")
        return "\n".join(lines)

    def target_for(self, metric: str) -> MetricTarget | None:
        wanted = normalize_text(metric)
        for t in self.targets:
            if normalize_text(t.metric) == wanted:
                return t
        return None


@dataclass(frozen=True)
class StrategyBlock:
    role: str
    description: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not _ROLE_RE.match(self.role):
            raise StrategyError(
                f"block role {self.role!r} is not stage-<n>, bias, or "
                "compensation")
        object.__setattr__(self, "description", dict(self.description))


@dataclass(frozen=True)
class DesignStrategy:
    blocks: tuple[StrategyBlock, ...]
    rationale: str = ""

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise StrategyError("a strategy needs at least one block")

    def render(self) -> str:
        lines = []
        for block in self.blocks:
            lines.append(f"- block: {block.role}")
            for key, value in block.description.items():
                lines.append(f"  {key}: {value}")
        return "\n".join(lines)


@dataclass(frozen=True)
class DesignHistoryEntry:
    """One completed (or attempted) pass through the design flow."""

    spec: DesignSpec
    strategy: DesignStrategy
    topology: str = ""
    achieved: Mapping[str, float] = field(default_factory=dict)
    met: bool = False

    def __post_init__(self):
        object.__setattr__(self, "achieved", dict(self.achieved))


# ---------------------------------------------------------------------------
# providers


class Provider(Protocol):
    def complete(self, prompt: str) -> str: ...


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "scripted"
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.0
    transcript_path: str | None = None
    timeout_s: float = 60.0
    api_key_env: str = "COMPLETIONS_API_KEY"

    def __post_init__(self):
        if self.kind not in ("remote", "scripted"):
            raise StrategyError(f"unknown provider kind {self.kind!r}")


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def transcript_entry(prompt: str, response: str) -> dict:
    """Build one scripted-transcript record from a live exchange."""
    return {"prompt_sha256": prompt_digest(prompt), "response": response}


class ScriptedProvider:
    """Deterministic offline replay of recorded prompt/response pairs.

    Records are consumed in order per prompt hash, so the same prompt may
    appear several times with different answers (a conversation).
    """

    def __init__(self, transcript: Iterable[Mapping] | str | os.PathLike):
        if isinstance(transcript, (str, os.PathLike)):
            with open(transcript, "r", encoding="utf-8") as fh:
                records = json.load(fh)
        else:
            records = list(transcript)
        self._queues: dict[str, list[str]] = {}
        for i, rec in enumerate(records):
            try:
                digest = rec["prompt_sha256"]
                response = rec["response"]
            except (KeyError, TypeError) as exc:
                raise StrategyError(
                    f"transcript record {i}: missing field {exc}") from exc
            self._queues.setdefault(digest, []).append(response)
        self.calls = 0

    def complete(self, prompt: str) -> str:
        digest = prompt_digest(prompt)
        queue = self._queues.get(digest)
        if not queue:
            raise StrategyError(
                f"no scripted response for prompt with digest "
                f"{digest[:12]}... ({len(prompt)} chars)")
        self.calls += 1
        return queue.pop(0)


class RemoteProvider:
    """Chat-completions-style HTTP provider; API key read from the
    environment at call time, never stored."""

    def __init__(self, config: ProviderConfig):
        if not config.endpoint:
            raise StrategyError("remote provider needs an endpoint")
        self.config = config

    def complete(self, prompt: str) -> str:
        import requests  # deferred so offline use never needs it

        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise StrategyError(
                f"set {self.config.api_key_env} to use the remote provider")
        payload = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        reply = requests.post(
            self.config.endpoint, json=payload,
            headers={"Authorization": f"Bearer {key}"},
            timeout=self.config.timeout_s)
        reply.raise_for_status()
        data = reply.json()
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise StrategyError(
                f"malformed completion response: {exc}") from exc


def make_provider(config: ProviderConfig) -> Provider:
    if config.kind == "scripted":
        if not config.transcript_path:
            raise StrategyError("scripted provider needs a transcript path")
        return ScriptedProvider(config.transcript_path)
    return RemoteProvider(config)


# ---------------------------------------------------------------------------
# prompts


def _template(name: str) -> string.Template:
    text = resources.files("analogkit.fixtures").joinpath(
        "templates", name).read_text(encoding="utf-8")
    return string.Template(text)


def render_fewshot(entry: DesignHistoryEntry) -> str:
    """One worked example: specification, then analysis, then strategy."""
    return (
        f"EXAMPLE\n"
        f"SPECIFICATION ({entry.spec.circuit_class}):\n"
        f"{entry.spec.render()}\n"
        f"ANALYSIS:\n{entry.strategy.rationale}\n"
        f"STRATEGY:\n{entry.strategy.render()}\n")


def build_strategy_prompt(spec: DesignSpec,
                          fewshots: Sequence[DesignHistoryEntry]) -> str:
    """Format instructions, worked examples, then the target spec last."""
    if not fewshots:
        raise StrategyError(
            "at least one fewshot example is required; seed with a design "
            "flow from another circuit class if none exist")
    rendered = "\n".join(render_fewshot(e) for e in fewshots)
    return _template("strategy_prompt.txt").substitute(
        fewshots=rendered, circuit_class=spec.circuit_class,
        spec=spec.render())


_BLOCK_RE = re.compile(r"^\s*-\s*block\s*:\s*(.+?)\s*$")
_KV_RE = re.compile(r"^\s+([A-Za-z][\w -]*?)\s*:\s*(.+?)\s*$")
_STRATEGY_RE = re.compile(r"^\s*STRATEGY\s*:\s*$", re.MULTILINE)
_ANALYSIS_RE = re.compile(r"^\s*ANALYSIS\s*:\s*$", re.MULTILINE)


def parse_strategy(response: str) -> DesignStrategy:
    """Extract blocks from the fixed response format.

    Free text before the STRATEGY marker (after ANALYSIS if present)
    becomes the rationale.  Unindented prose after the blocks is ignored.
    """
    marker = _STRATEGY_RE.search(response)
    if marker is None:
        raise StrategyParseError(
            "no STRATEGY: section found; answer with ANALYSIS: then "
            "STRATEGY: followed by '- block:' entries", raw=response)
    head = response[:marker.start()]
    analysis = _ANALYSIS_RE.search(head)
    rationale = (head[analysis.end():] if analysis else head).strip()

    found: list[tuple[str, dict[str, str]]] = []
    description: dict[str, str] | None = None

    for line in response[marker.end():].splitlines():
        if not line.strip():
            continue
        block_match = _BLOCK_RE.match(line)
        if block_match:
            description = {}
            found.append((block_match.group(1), description))
            continue
        kv_match = _KV_RE.match(line)
        if kv_match and description is not None:
            description[kv_match.group(1)] = kv_match.group(2)
        elif description is not None:
            break  # unindented prose: the strategy section has ended
    if not found:
        raise StrategyParseError(
            "STRATEGY: section contains no '- block:' entries",
            raw=response)
    try:
        return DesignStrategy(
            blocks=tuple(StrategyBlock(role=r, description=d)
                         for r, d in found),
            rationale=rationale)
    except StrategyError as exc:
        raise StrategyParseError(str(exc), raw=response) from exc


def request_strategy(spec: DesignSpec,
                     fewshots: Sequence[DesignHistoryEntry],
                     provider: Provider, retries: int = 2) -> DesignStrategy:
    """Ask for a strategy, re-prompting with the parse error when needed."""
    prompt = build_strategy_prompt(spec, fewshots)
    attempt = prompt
    last: StrategyParseError | None = None
    for _ in range(retries + 1):
        response = provider.complete(attempt)
        try:
            return parse_strategy(response)
        except StrategyParseError as exc:
            last = exc
            attempt = (f"{prompt}\n\nYour previous answer could not be "
                       f"parsed: {exc}. Answer again using exactly the "
                       "required format.")
    raise last


# ---------------------------------------------------------------------------
# triplets


class TripletExtraction(NamedTuple):
    triplets: list[Triplet]
    warnings: list[str]


_TRIPLET_RE = re.compile(
    r"<\s*([^,<>]*?)\s*,\s*([^,<>]+?)\s*,\s*([^<>]+?)\s*>")


def kg_vocabulary(store: Store) -> frozenset[str]:
    """Every relation name used by the store's entities."""
    return frozenset(t.relation for e in store.entities()
                     for t in e.triplets())


def strategy_to_triplets(strategy: DesignStrategy, provider: Provider,
                         vocabulary: Iterable[str] | None = None,
                         ) -> TripletExtraction:
    """Turn block descriptions into wildcard-subject query triplets.

    The provider does the conversion (with formatting examples in the
    prompt); its output is filtered to the given relation vocabulary,
    with anything outside it reported rather than guessed at.
    """
    vocab = (None if vocabulary is None
             else {normalize_text(v) for v in vocabulary})
    template = _template("triplet_prompt.txt")
    triplets: list[Triplet] = []
    warnings: list[str] = []
    had_descriptions = False
    for index, block in enumerate(strategy.blocks, start=1):
        if not block.description:
            warnings.append(f"block {index} ({block.role}): empty "
                            "description yields no triplets")
            continue
        had_descriptions = True
        description = "; ".join(f"{k} = {v}"
                                for k, v in block.description.items())
        response = provider.complete(
            template.substitute(description=description))
        for match in _TRIPLET_RE.finditer(response):
            subject, relation, obj = match.groups()
            relation = normalize_text(relation)
            if vocab is not None and relation not in vocab:
                warnings.append(f"unknown relation {relation!r} ignored")
                continue
            triplet = Triplet(
                subject=None if subject in ("", "_") else subject,
                relation=relation, obj=normalize_text(obj))
            if triplet not in triplets:
                triplets.append(triplet)
    if had_descriptions and not triplets:
        raise StrategyError(
            "no usable triplets extracted from the strategy")
    return TripletExtraction(triplets, warnings)


# ---------------------------------------------------------------------------
# regeneration few-shots and tie-breaking


def build_regeneration_fewshot(entry: DesignHistoryEntry
                               ) -> DesignHistoryEntry:
    """Reverse cause and effect: what was achieved becomes what is wanted.

    The returned fewshot presents the measured results as an equality
    specification whose known-good answer is the strategy that produced
    them, verbatim.
    """
    if not entry.achieved:
        raise StrategyError(
            "entry has no achieved measurements to turn into a fewshot")
    units = {normalize_text(t.metric): t.unit for t in entry.spec.targets}
    targets = tuple(
        MetricTarget(metric=metric, comparator="=",
                     value=float(value),
                     unit=units.get(normalize_text(metric), ""))
        for metric, value in sorted(entry.achieved.items()))
    spec = DesignSpec(circuit_class=entry.spec.circuit_class,
                      targets=targets,
                      environment=entry.spec.environment)
    return DesignHistoryEntry(spec=spec, strategy=entry.strategy,
                              topology=entry.topology, met=True)


def tie_break(candidates: Sequence[str], provider: Provider,
              goal: str = "the stated design goal") -> str:
    """Pick one of several equally ranked names; always returns a member.

    The provider is consulted only when there is a real choice; an answer
    not naming exactly one candidate falls back to the first (highest
    query rank).
    """
    if not candidates:
        raise StrategyError("tie_break needs at least one candidate")
    if len(candidates) == 1:
        return candidates[0]
    prompt = _template("tiebreak_prompt.txt").substitute(
        goal=goal, candidates="\n".join(f"- {c}" for c in candidates))
    try:
        response = normalize_text(provider.complete(prompt))
    except StrategyError:
        log.warning("tie-break provider failed; falling back to rank 1")
        return candidates[0]
    named = [c for c in candidates if normalize_text(c) in response]
    if len(named) == 1:
        return named[0]
    log.warning("tie-break answer %r names %d candidates; "
                "falling back to rank 1", response, len(named))
    return candidates[0]


# ---------------------------------------------------------------------------
# serialization


def spec_to_dict(spec: DesignSpec) -> dict:
    return {
        "schema": 1,
        "circuit_class": spec.circuit_class,
        "targets": [{"metric": t.metric, "comparator": t.comparator,
                     "value": t.value, "unit": t.unit}
                    for t in spec.targets],
        "environment": dict(spec.environment),
    }


def spec_from_dict(data: Mapping) -> DesignSpec:
    if data.get("schema") != 1:
        raise StrategyError(f"unsupported spec schema {data.get('schema')!r}")
    try:
        targets = tuple(
            MetricTarget(metric=t["metric"], comparator=t["comparator"],
                         value=float(t["value"]), unit=t.get("unit", ""))
            for t in data["targets"])
        return DesignSpec(circuit_class=data["circuit_class"],
                          targets=targets,
                          environment=data.get("environment", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise StrategyError(f"malformed spec record: {exc}") from exc
