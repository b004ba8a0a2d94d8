"""Run profiles: per-rank counters and their aggregates.

The CSV schema deliberately uses the same column names the profiling tables
are usually read with: per-run communication/work times (avg and max over
ranks), total scores communicated, and candidate counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class RankStats:
    rank: int = 0
    mult_count: int = 0
    cand_total: int = 0
    cand_max: int = 0
    scores_communicated: int = 0
    gathered_elements: int = 0
    comm_elements_sent: int = 0
    comm_elements_received: int = 0
    collective_calls: int = 0
    work_seconds: float = 0.0
    comm_seconds: float = 0.0


CSV_COLUMNS = (
    "p",
    "algo",
    "C_avg",
    "C_max",
    "W_avg",
    "W_max",
    "Scores",
    "Cand_avg",
    "Cand_max",
)


@dataclass
class RunProfile:
    """Counters for one run: one RankStats per rank plus derived aggregates."""

    algo: str
    p: int
    ranks: list[RankStats]
    witnesses: dict[tuple[int, int], float] = field(default_factory=dict)

    def _values(self, name: str) -> list:
        return [getattr(r, name) for r in self.ranks]

    def total(self, name: str):
        return sum(self._values(name))

    def avg(self, name: str) -> float:
        vals = self._values(name)
        return sum(vals) / len(vals) if vals else 0.0

    def max(self, name: str):
        vals = self._values(name)
        return max(vals) if vals else 0

    def csv_row(self) -> list[str]:
        return [
            str(self.p),
            self.algo,
            f"{self.avg('comm_seconds'):.6f}",
            f"{self.max('comm_seconds'):.6f}",
            f"{self.avg('work_seconds'):.6f}",
            f"{self.max('work_seconds'):.6f}",
            str(self.total("scores_communicated")),
            f"{self.avg('cand_total'):.1f}",
            str(self.max("cand_total")),
        ]
