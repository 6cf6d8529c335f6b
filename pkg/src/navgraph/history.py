"""History records kept between agent steps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence


@dataclass(frozen=True)
class HistoryEntry:
    """One completed step: the summarized observation, the thought, the applied action.

    ``action`` is the human-readable text shown to the model. The structured
    fields below it record the same move for downstream checks.
    """

    step: int
    observation_summary: str
    thought: str
    action: str
    from_viewpoint: str = ""
    to_viewpoint: str = ""
    turn_deg: float = 0.0
    distance_m: float = 0.0

    def __post_init__(self) -> None:
        if self.step < 0:
            raise ValueError("history step must be >= 0")
        if not self.observation_summary.strip() or not self.action.strip():
            raise ValueError(f"history entry {self.step} has an empty observation or action")


class HistoryBuffer(Sequence[HistoryEntry]):
    """Append-only list of entries with contiguous step indices from 0."""

    def __init__(self, entries: Sequence[HistoryEntry] = ()) -> None:
        self._entries: list[HistoryEntry] = []
        for e in entries:
            self.append(e)

    def append(self, entry: HistoryEntry) -> None:
        if entry.step != len(self._entries):
            raise ValueError(f"expected history step {len(self._entries)}, got {entry.step}")
        self._entries.append(entry)

    def __getitem__(self, index):
        return self._entries[index]

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[HistoryEntry]:
        return iter(self._entries)

    def __eq__(self, other) -> bool:
        if isinstance(other, HistoryBuffer):
            return self._entries == other._entries
        return NotImplemented

    def __repr__(self) -> str:
        return f"HistoryBuffer({self._entries!r})"

    def copy(self) -> "HistoryBuffer":
        return HistoryBuffer(self._entries)
