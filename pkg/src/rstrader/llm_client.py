"""Chat-completion adapter for the analyst/direction/sizing/reflection
agents, with transcript recording for deterministic replay.

Agents must answer inside a fenced ``json`` block with fixed keys per role;
free text belongs in the ``rationale`` field. Schema violations are errors
(retried, then degraded by the caller), never silently coerced. Every
exchange is appended to a newline-delimited JSON transcript; replaying the
transcript reproduces a recorded run bit-for-bit.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
import re
import time
from dataclasses import dataclass, field

from .decision import (
    Direction,
    DirectionAgent,
    DirectionVerdict,
    PolicyContext,
    SizingAgent,
    SizingEstimate,
)
from .memory import MemoryRecord
from .perception import AnalystReport, AnalyzerAgent, Signal, RISK_CUES
from .reward_reflection import RewardRecord

logger = logging.getLogger(__name__)

ROLES = ("analyst", "direction", "sizing", "reflection")


class CompletionError(RuntimeError):
    """Endpoint unusable after retries (network, parse, or schema failure)."""


class SchemaError(ValueError):
    """Response payload violates the role's schema."""


class ReplayMismatchError(RuntimeError):
    """A replayed prompt diverged from the recorded transcript."""


class ReplayExhaustedError(RuntimeError):
    """The transcript ran out of recorded exchanges."""


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model: str
    temperature: float = 0.7
    credential_env: str = "RSTRADER_API_KEY"  # never passed as a flag
    max_retries: int = 3
    backoff_base: float = 0.5
    timeout: float = 30.0


@dataclass(frozen=True)
class PromptTemplate:
    role: str
    template: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown template role {self.role!r}")

    def render(self, slots: dict) -> str:
        try:
            rendered = self.template.format(**slots)
        except (KeyError, IndexError) as exc:
            raise ValueError(f"{self.role} template slot missing: {exc}") from exc
        return rendered


@dataclass
class AgentExchange:
    role: str
    prompt: str
    model: str
    temperature: float
    response_text: str
    parsed: dict
    retry_count: int
    timestamp: str = ""


# double-formatted: once for the key list here, once at render time
_RESPONSE_CONTRACT = (
    'Answer with a fenced block: ```json\n{{{{...}}}}\n``` using exactly the keys {keys}.'
)

_FIP_PREAMBLE = (
    "Reason about the causal chain behind recent moves, the momentum across "
    "the 1-day, 7-day and 30-day horizons, and the probability of each "
    "outcome before you answer.\n"
)
_PLAIN_PREAMBLE = "Decide directly.\n"

_DIRECTION_RISK_FIELDS = (
    "Current position: {position} shares. Cash: {cash:.2f}.\n"
    "Risk cues present in memory: {risk_cues}.\n"
)

_ANALYST_RISK_GUIDE = (
    "Flag indicators of potential downside and signals of market volatility "
    "explicitly as risk cues.\n"
)


def build_templates(rs: bool = True, fip: bool = True) -> dict[str, PromptTemplate]:
    """Prompt templates for each agent role, honoring the ablation variants:
    rs=False strips position/risk fields, fip=False swaps the reasoning
    preamble for a plain instruction."""
    preamble = _FIP_PREAMBLE if fip else _PLAIN_PREAMBLE
    analyst = (
        "You are a financial analyst for {ticker} on {date}.\n"
        + (_ANALYST_RISK_GUIDE if rs else "")
        + "Source kind: {source_kind}.\nText:\n{text}\n"
        + _RESPONSE_CONTRACT.format(keys='["summary","sentiment","risk_cues","stability"]')
    )
    direction = (
        "You are the trade-direction agent for {ticker} on {date}.\n"
        + preamble
        + "Backward momentum (1/7/30 trading days): {d1:.4f}, {d7:.4f}, {d30:.4f}.\n"
        + (_DIRECTION_RISK_FIELDS if rs else "")
        + "Retrieved memory:\n{memories}\n"
        + _RESPONSE_CONTRACT.format(keys='["action","rationale"]')
    )
    sizing = (
        "You are the quantity-and-risk agent for {ticker} on {date}.\n"
        + preamble
        + "Chosen direction: {direction}. Price: {price:.4f}. Equity: {equity:.2f}.\n"
        + (
            "Current position: {position} shares. Historical CVaR at "
            "{cvar_alpha:.2f}: {cvar_estimate:.6f} (budget {cvar_budget:.4f}).\n"
            if rs
            else ""
        )
        + "Estimate the win probability and payoff ratio for this trade.\n"
        + _RESPONSE_CONTRACT.format(keys='["win_prob","payoff_ratio","rationale"]')
    )
    reflection = (
        "You are the reflection agent for {ticker} on {date}.\n"
        "Action taken: {action}. Reward: {reward:.6g}. "
        "Sliding-window P&L benchmark: {benchmark:.6g}.\n"
        "Write one short lesson for future decisions.\n"
        + _RESPONSE_CONTRACT.format(keys='["note"]')
    )
    return {
        "analyst": PromptTemplate("analyst", analyst),
        "direction": PromptTemplate("direction", direction),
        "sizing": PromptTemplate("sizing", sizing),
        "reflection": PromptTemplate("reflection", reflection),
    }


_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def parse_fenced_payload(text: str, role: str) -> dict:
    """Extract and validate the fenced JSON payload for a role."""
    match = _FENCE_RE.search(text)
    raw = match.group(1) if match else text
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{role}: response is not parseable JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise SchemaError(f"{role}: payload must be a JSON object")
    _VALIDATORS[role](payload)
    return payload


def _validate_direction(payload: dict) -> None:
    action = payload.get("action")
    if action not in ("buy", "sell", "hold"):
        raise SchemaError(f"direction: action must be buy/sell/hold, got {action!r}")


def _validate_sizing(payload: dict) -> None:
    p = payload.get("win_prob")
    b = payload.get("payoff_ratio")
    if not isinstance(p, (int, float)) or not 0.0 <= float(p) <= 1.0:
        raise SchemaError(f"sizing: win_prob must lie in [0, 1], got {p!r}")
    if not isinstance(b, (int, float)) or float(b) <= 0.0:
        raise SchemaError(f"sizing: payoff_ratio must be positive, got {b!r}")


def _validate_analyst(payload: dict) -> None:
    if not isinstance(payload.get("summary"), str):
        raise SchemaError("analyst: summary must be a string")
    s = payload.get("sentiment")
    if not isinstance(s, (int, float)) or not -1.0 <= float(s) <= 1.0:
        raise SchemaError(f"analyst: sentiment must lie in [-1, 1], got {s!r}")
    cues = payload.get("risk_cues")
    if not isinstance(cues, list) or any(c not in RISK_CUES for c in cues):
        raise SchemaError(f"analyst: risk_cues must be a list from {RISK_CUES}, got {cues!r}")
    if payload.get("stability") not in ("stable", "volatile"):
        raise SchemaError("analyst: stability must be stable/volatile")


def _validate_reflection(payload: dict) -> None:
    if not isinstance(payload.get("note"), str):
        raise SchemaError("reflection: note must be a string")


_VALIDATORS = {
    "direction": _validate_direction,
    "sizing": _validate_sizing,
    "analyst": _validate_analyst,
    "reflection": _validate_reflection,
}


def _default_transport(config: EndpointConfig):
    import requests

    def send(payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        credential = os.environ.get(config.credential_env, "")
        if credential:
            headers["Authorization"] = f"Bearer {credential}"
        resp = requests.post(config.url, json=payload, headers=headers, timeout=config.timeout)
        resp.raise_for_status()
        return resp.json()

    return send


class TranscriptRecorder:
    """Appends exchanges to a newline-delimited JSON transcript file."""

    def __init__(self, path: str, config_hash: str = ""):
        self.path = path
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"kind": "header", "config_hash": config_hash}) + "\n")

    def record(self, exchange: AgentExchange) -> None:
        obj = {
            "kind": "exchange",
            "role": exchange.role,
            "prompt": exchange.prompt,
            "model": exchange.model,
            "temperature": exchange.temperature,
            "response_text": exchange.response_text,
            "parsed": exchange.parsed,
            "retry_count": exchange.retry_count,
            "timestamp": exchange.timestamp,
        }
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


class ChatCompletionClient:
    """Sends rendered prompts to a chat-completion endpoint with exponential
    backoff; every successful exchange is recorded when a recorder is set."""

    def __init__(
        self,
        config: EndpointConfig,
        transport=None,
        recorder: TranscriptRecorder | None = None,
        sleep=time.sleep,
    ):
        self.config = config
        self.transport = transport or _default_transport(config)
        self.recorder = recorder
        self._sleep = sleep

    def complete(self, template: PromptTemplate, slots: dict) -> AgentExchange:
        prompt = template.render(slots)
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        }
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt > 0:
                self._sleep(self.config.backoff_base * 2 ** (attempt - 1))
            try:
                response = self.transport(payload)
                text = response["choices"][0]["message"]["content"]
                parsed = parse_fenced_payload(text, template.role)
            except Exception as exc:  # transport, parse, or schema failure: retry
                last_error = exc
                logger.warning("%s call attempt %d failed: %s", template.role, attempt + 1, exc)
                continue
            exchange = AgentExchange(
                role=template.role,
                prompt=prompt,
                model=self.config.model,
                temperature=self.config.temperature,
                response_text=text,
                parsed=parsed,
                retry_count=attempt,
                timestamp=dt.datetime.now(dt.timezone.utc).isoformat(),
            )
            if self.recorder is not None:
                self.recorder.record(exchange)
            return exchange
        raise CompletionError(
            f"{template.role} call failed after {self.config.max_retries + 1} attempts: {last_error}"
        )


class ReplayClient:
    """Answers prompts from a recorded transcript, in order.

    Any divergence between a rendered prompt and the recorded one raises;
    this is what makes replayed backtests bit-identical to the original.
    """

    def __init__(self, path: str):
        self.path = path
        self.config_hash = ""
        self._exchanges: list[dict] = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if obj.get("kind") == "header":
                    self.config_hash = obj.get("config_hash", "")
                else:
                    self._exchanges.append(obj)
        self._cursor = 0

    def remaining(self) -> int:
        return len(self._exchanges) - self._cursor

    def complete(self, template: PromptTemplate, slots: dict) -> AgentExchange:
        prompt = template.render(slots)
        if self._cursor >= len(self._exchanges):
            raise ReplayExhaustedError(
                f"transcript {self.path} exhausted at call {self._cursor + 1} ({template.role})"
            )
        recorded = self._exchanges[self._cursor]
        if recorded["role"] != template.role or recorded["prompt"] != prompt:
            raise ReplayMismatchError(
                f"transcript {self.path} diverged at call {self._cursor + 1}: "
                f"recorded {recorded['role']!r} prompt does not match the "
                f"rendered {template.role!r} prompt"
            )
        self._cursor += 1
        return AgentExchange(
            role=recorded["role"],
            prompt=recorded["prompt"],
            model=recorded["model"],
            temperature=recorded["temperature"],
            response_text=recorded["response_text"],
            parsed=recorded["parsed"],
            retry_count=recorded["retry_count"],
            timestamp=recorded.get("timestamp", ""),
        )


def summarize_memories(records: list[MemoryRecord]) -> str:
    if not records:
        return "(none)"
    lines = []
    for rec in records:
        if isinstance(rec.content, AnalystReport):
            lines.append(
                f"[{rec.id} {rec.layer}] {rec.content.summary} "
                f"(sentiment {rec.content.sentiment:+.2f}; cues: {', '.join(rec.content.risk_cues)})"
            )
        else:
            lines.append(f"[{rec.id} {rec.layer}] {rec.content.text}")
    return "\n".join(lines)


def _memory_risk_cues(records: list[MemoryRecord]) -> str:
    cues: set[str] = set()
    for rec in records:
        cues.update(getattr(rec.content, "risk_cues", ()))
    cues.discard("none")
    return ", ".join(sorted(cues)) if cues else "none"


class LLMAnalyzer(AnalyzerAgent):
    """Analyst role against the endpoint; failures are degraded upstream by
    ``perception.analyze``."""

    def __init__(self, client, templates: dict[str, PromptTemplate], ticker: str):
        self.client = client
        self.templates = templates
        self.ticker = ticker

    def analyze(self, signal: Signal) -> AnalystReport:
        slots = {
            "ticker": self.ticker,
            "date": signal.timestamp.date().isoformat(),
            "source_kind": signal.source_kind,
            "text": signal.text,
        }
        exchange = self.client.complete(self.templates["analyst"], slots)
        payload = exchange.parsed
        cues = tuple(payload["risk_cues"]) or ("none",)
        return AnalystReport(
            signal_ref=signal.origin_id,
            summary=payload["summary"],
            sentiment=float(payload["sentiment"]),
            risk_cues=cues,
            stability_class=payload["stability"],
        )


class LLMDirectionAgent(DirectionAgent):
    def __init__(self, client, templates: dict[str, PromptTemplate]):
        self.client = client
        self.templates = templates

    def decide(self, ctx: PolicyContext) -> DirectionVerdict:
        slots = {
            "ticker": ctx.ticker,
            "date": ctx.t,
            "d1": ctx.momentum.d1,
            "d7": ctx.momentum.d7,
            "d30": ctx.momentum.d30,
            "position": ctx.account.position,
            "cash": ctx.account.cash,
            "risk_cues": _memory_risk_cues(ctx.retrieved),
            "memories": summarize_memories(ctx.retrieved),
        }
        try:
            exchange = self.client.complete(self.templates["direction"], slots)
        except CompletionError as exc:
            return DirectionVerdict(Direction.HOLD, f"direction agent failed ({exc}); holding", True)
        action = exchange.parsed["action"]
        direction = {"buy": Direction.BUY, "sell": Direction.SELL, "hold": Direction.HOLD}[action]
        return DirectionVerdict(direction, str(exchange.parsed.get("rationale", "")))


class LLMSizingAgent(SizingAgent):
    def __init__(self, client, templates: dict[str, PromptTemplate], constants):
        self.client = client
        self.templates = templates
        self.constants = constants

    def estimate(self, ctx: PolicyContext, direction: Direction) -> SizingEstimate:
        from .decision import cvar

        window = ctx.recent_returns[-self.constants.lookback :]
        risk = cvar(window, self.constants.cvar_alpha) if window.size else 0.0
        slots = {
            "ticker": ctx.ticker,
            "date": ctx.t,
            "direction": direction.name.lower(),
            "price": ctx.price,
            "equity": ctx.account.equity(ctx.price),
            "position": ctx.account.position,
            "cvar_alpha": self.constants.cvar_alpha,
            "cvar_estimate": risk,
            "cvar_budget": self.constants.cvar_budget,
        }
        try:
            exchange = self.client.complete(self.templates["sizing"], slots)
        except CompletionError as exc:
            # zero-edge estimate sizes to zero, degrading the decision to hold
            return SizingEstimate(0.5, 1.0, f"sizing agent failed ({exc})", True)
        payload = exchange.parsed
        return SizingEstimate(
            win_prob=float(payload["win_prob"]),
            payoff_ratio=float(payload["payoff_ratio"]),
            rationale=str(payload.get("rationale", "")),
        )


class LLMReflector:
    """Reflection role: produces the note text; falls back to None so the
    caller keeps the deterministic wording on failure."""

    def __init__(self, client, templates: dict[str, PromptTemplate], ticker: str):
        self.client = client
        self.templates = templates
        self.ticker = ticker

    def note_text(self, record: RewardRecord) -> str | None:
        delta = record.position_after - record.position_before
        action = "held" if delta == 0 else (f"bought {delta}" if delta > 0 else f"sold {-delta}")
        slots = {
            "ticker": self.ticker,
            "date": record.t,
            "action": action,
            "reward": record.reward,
            "benchmark": record.benchmark_pnl,
        }
        try:
            exchange = self.client.complete(self.templates["reflection"], slots)
        except CompletionError:
            return None
        return str(exchange.parsed["note"])
