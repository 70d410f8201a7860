"""Selection reports shared by the greedy baselines and the parallel engine."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

DROP_REASONS = frozenset({
    "earlyDrop",  # delta below the early-dropping threshold
    "blockExhausted",  # left in a block whose best delta fell below alpha
    "backwardRemoved",
    "collinear",  # numerically in the span of the selected set
    "degenerate",  # zero within-class variance
    "belowAlphaAtMerge",
    "belowAlpha",  # initial singleton below alpha
    "capReached",  # max_features already reached at merge
})


@dataclass(frozen=True)
class TraceEvent:
    stage: str
    action: str  # "add" or "remove"
    feature: int
    t: float
    delta: float
    round: int = 0


@dataclass(frozen=True)
class DropEvent:
    feature: int
    round: int
    reason: str
    stage: str = ""

    def __post_init__(self):
        if self.reason not in DROP_REASONS:
            raise ValueError(f"unknown drop reason {self.reason!r}")


@dataclass
class SelectionReport:
    """Outcome of one selection run.

    ``selected`` lists the surviving features in admission order; ``trace``
    records every add/remove with the criterion value right after it, so the
    final ``t`` can be replayed from the events.
    """

    method: str
    selected: list[int]
    names: list[str]
    t: float
    trace: list[TraceEvent] = field(default_factory=list)
    drop_log: list[DropEvent] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)

    def replay(self) -> list[int]:
        """Rebuild the selected list from the add/remove events."""
        current: list[int] = []
        for ev in self.trace:
            if ev.action == "add":
                current.append(ev.feature)
            elif ev.action == "remove":
                current.remove(ev.feature)
        return current

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SelectionReport":
        d = dict(d)
        d["trace"] = [TraceEvent(**e) for e in d.get("trace", [])]
        d["drop_log"] = [DropEvent(**e) for e in d.get("drop_log", [])]
        return cls(**d)
