"""Hierarchical memory: layered storage of analyst reports and reflection
notes with recency-decayed retrieval and reward-driven promotion/weakening.

Records live in shallow, intermediate, or deep layers with per-layer decay
half-lives. Attributed reward promotes records deeper (one threshold per
step up), halves importance each extra threshold of accumulated negative
reward, and evicts below twice the threshold. Layer moves are monotone:
weakening lowers importance, never the layer.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Any

from .perception import AnalystReport

LAYERS = ("shallow", "intermediate", "deep")
_LAYER_RANK = {name: i for i, name in enumerate(LAYERS)}

# Recency decay constants, in trading days.
DEFAULT_TAUS = {"shallow": 3.0, "intermediate": 14.0, "deep": 90.0}


class UnknownRecordError(KeyError):
    pass


@dataclass
class MemoryRecord:
    id: int
    layer: str
    content: Any  # AnalystReport or ReflectionNote
    created_at: int
    last_access: int
    importance: float = 1.0
    attributed_reward: float = 0.0
    weaken_mark: float = 0.0  # reference level for stepped importance halving

    def __post_init__(self):
        if self.layer not in LAYERS:
            raise ValueError(f"unknown layer {self.layer!r}")
        if self.importance < 0:
            raise ValueError("importance must be >= 0")
        if self.last_access < self.created_at:
            raise ValueError("last_access must be >= created_at")


@dataclass(frozen=True)
class RetrievalQuery:
    ticker: str
    date: int  # trading-day index
    k: int
    tags: tuple[str, ...] | None = None  # optional risk-cue filter

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


class MemoryStore:
    """Single-ticker memory store; all mutation goes through one owner."""

    def __init__(
        self,
        taus: dict[str, float] | None = None,
        promotion_threshold: float = 1.0,
    ):
        if promotion_threshold <= 0:
            raise ValueError("promotion threshold must be positive")
        self.taus = dict(DEFAULT_TAUS if taus is None else taus)
        for layer in LAYERS:
            if self.taus.get(layer, 0) <= 0:
                raise ValueError(f"tau for layer {layer!r} must be positive")
        self.promotion_threshold = promotion_threshold
        self._records: dict[int, MemoryRecord] = {}
        self._next_id = 1
        self._last_decay_date: int | None = None

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, record_id: int) -> bool:
        return record_id in self._records

    def get(self, record_id: int) -> MemoryRecord:
        try:
            return self._records[record_id]
        except KeyError:
            raise UnknownRecordError(record_id) from None

    def records(self) -> list[MemoryRecord]:
        """Snapshot in id order, for reporting and dumps."""
        return [self._records[i] for i in sorted(self._records)]

    def insert(self, content: Any, date: int) -> MemoryRecord:
        """Store a report or note; stable content starts deep, the rest
        shallow."""
        stability = getattr(content, "stability_class", None)
        layer = "deep" if stability == "stable" else "shallow"
        record = MemoryRecord(
            id=self._next_id,
            layer=layer,
            content=content,
            created_at=date,
            last_access=date,
        )
        self._next_id += 1
        self._records[record.id] = record
        return record

    def retrieve(self, query: RetrievalQuery) -> list[MemoryRecord]:
        """Top-k records by importance * exp(-staleness / tau_layer).

        Ties break toward newer created_at, then lower id. Returned records
        have last_access bumped to the query date.
        """
        candidates = []
        tag_set = set(query.tags) if query.tags else None
        for rec in self._records.values():
            if rec.importance <= 0:
                continue
            if tag_set is not None:
                cues = set(getattr(rec.content, "risk_cues", ()))
                if not cues & tag_set:
                    continue
            staleness = query.date - rec.last_access
            score = rec.importance * math.exp(-staleness / self.taus[rec.layer])
            candidates.append((score, rec))
        candidates.sort(key=lambda sr: (-sr[0], -sr[1].created_at, sr[1].id))
        chosen = [rec for _, rec in candidates[: query.k]]
        for rec in chosen:
            rec.last_access = query.date
        return chosen

    def reinforce(self, record_id: int, reward_share: float) -> MemoryRecord:
        """Attribute a signed reward share to a record and apply the
        promotion/weakening rules."""
        rec = self.get(record_id)
        rec.attributed_reward += reward_share
        theta = self.promotion_threshold
        if rec.attributed_reward >= 2 * theta:
            target = "deep"
        elif rec.attributed_reward >= theta:
            target = "intermediate"
        else:
            target = "shallow"
        if _LAYER_RANK[target] > _LAYER_RANK[rec.layer]:
            rec.layer = target
        while rec.attributed_reward <= rec.weaken_mark - theta:
            rec.importance *= 0.5
            rec.weaken_mark -= theta
        if rec.attributed_reward <= -2 * theta:
            rec.importance = 0.0
        return rec

    def decay_step(self, date: int) -> None:
        """Once-per-day bookkeeping: sweep evicted (importance-0) records.

        Idempotent for repeated calls with the same date.
        """
        if self._last_decay_date == date:
            return
        self._last_decay_date = date
        for record_id in [i for i, r in self._records.items() if r.importance <= 0]:
            del self._records[record_id]

    # --- dump / restore (newline-delimited JSON) ---

    def dump(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(_record_to_obj(rec), sort_keys=True) + "\n")

    @classmethod
    def restore(
        cls,
        path: str,
        taus: dict[str, float] | None = None,
        promotion_threshold: float = 1.0,
    ) -> "MemoryStore":
        store = cls(taus=taus, promotion_threshold=promotion_threshold)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = _record_from_obj(json.loads(line))
                store._records[rec.id] = rec
                store._next_id = max(store._next_id, rec.id + 1)
        return store


def _record_to_obj(rec: MemoryRecord) -> dict:
    content = dataclasses.asdict(rec.content)
    content["kind"] = "report" if isinstance(rec.content, AnalystReport) else "note"
    return {
        "id": rec.id,
        "layer": rec.layer,
        "created_at": rec.created_at,
        "last_access": rec.last_access,
        "importance": rec.importance,
        "attributed_reward": rec.attributed_reward,
        "weaken_mark": rec.weaken_mark,
        "content": content,
    }


def _record_from_obj(obj: dict) -> MemoryRecord:
    content_obj = dict(obj["content"])
    kind = content_obj.pop("kind")
    if kind == "report":
        content_obj["risk_cues"] = tuple(content_obj["risk_cues"])
        content: Any = AnalystReport(**content_obj)
    else:
        from .reward_reflection import ReflectionNote

        content_obj["linked_ids"] = tuple(content_obj["linked_ids"])
        content = ReflectionNote(**content_obj)
    return MemoryRecord(
        id=obj["id"],
        layer=obj["layer"],
        content=content,
        created_at=obj["created_at"],
        last_access=obj["last_access"],
        importance=obj["importance"],
        attributed_reward=obj["attributed_reward"],
        weaken_mark=obj["weaken_mark"],
    )
