"""Ranking metrics (Top-K hits, average precision, ROC AUC) and report tables.

All metrics consume a :class:`ScoreTable` (higher score = more anomalous) and a
:class:`~mobanom.core.LabelSet`.  Ordering is deterministic: score descending,
ties broken by ascending agent id.  Agents present in the labels but omitted by
a detector are excluded from AP/AUC denominators (and can never be retrieved by
Top-K); the omission count is surfaced in the report rather than silently
rewarding a detector that refuses to score.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, LabelSet, UndefinedMetricError, params_hash

__all__ = [
    "ScoreTable",
    "EvalReport",
    "ReportRow",
    "top_k_hits",
    "average_precision",
    "roc_auc",
    "make_report",
    "params_hash",
]


@dataclass
class ScoreTable:
    """Per-agent anomaly scores from one detector (higher = more anomalous)."""

    detector: str
    scores: dict[str, float] = field(default_factory=dict)
    params_hash: str = ""
    omitted: dict[str, str] = field(default_factory=dict)
    dataset_id: str = ""

    def __post_init__(self):
        for agent_id, s in self.scores.items():
            if not np.isfinite(s):
                raise ValueError(f"non-finite score for {agent_id!r}: {s!r}")

    def to_jsonl(self) -> str:
        lines = []
        for agent_id in sorted(self.scores):
            lines.append(
                json.dumps(
                    {
                        "agent_id": agent_id,
                        "score": self.scores[agent_id],
                        "method": self.detector,
                        "params_hash": self.params_hash,
                    },
                    separators=(",", ":"),
                )
            )
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, text: str) -> "ScoreTable":
        scores = {}
        method = ""
        phash = ""
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            scores[str(obj["agent_id"])] = float(obj["score"])
            method = str(obj.get("method", method))
            phash = str(obj.get("params_hash", phash))
        return cls(detector=method, scores=scores, params_hash=phash)


def _ranked_agents(scores: dict[str, float]) -> list[str]:
    # score descending, then agent id ascending
    return sorted(scores, key=lambda a: (-scores[a], a))


def top_k_hits(scores: ScoreTable | dict[str, float], labels: LabelSet, k: int) -> int:
    """Number of labeled outliers among the K highest-scored agents."""
    if k < 1:
        raise ConfigError(f"K must be >= 1, got {k}")
    table = scores.scores if isinstance(scores, ScoreTable) else scores
    ranked = _ranked_agents(table)
    hits = 0
    for agent_id in ranked[:k]:
        e = labels.entries.get(agent_id)
        if e is not None and e.is_outlier:
            hits += 1
    return hits


def _binary_arrays(scores, labels: LabelSet):
    table = scores.scores if isinstance(scores, ScoreTable) else scores
    agents = [a for a in _ranked_agents(table) if a in labels.entries]
    y = np.array([1 if labels.entries[a].is_outlier else 0 for a in agents], dtype=np.int64)
    s = np.array([table[a] for a in agents], dtype=np.float64)
    return agents, y, s


def average_precision(scores: ScoreTable | dict[str, float], labels: LabelSet) -> float:
    """Mean of precision evaluated at each true outlier's rank."""
    _, y, _ = _binary_arrays(scores, labels)
    n_pos = int(y.sum())
    if len(y) == 0 or n_pos == 0:
        raise UndefinedMetricError("average precision needs at least one scored positive")
    hits = np.cumsum(y)
    ranks = np.arange(1, len(y) + 1)
    return float(np.mean((hits / ranks)[y == 1]))


def roc_auc(scores: ScoreTable | dict[str, float], labels: LabelSet) -> float:
    """Mann-Whitney AUC: P(score(pos) > score(neg)), ties counted as 1/2.

    Computed from midranks, which makes it exactly invariant under any
    strictly increasing transform of the scores.
    """
    _, y, s = _binary_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    order = np.argsort(s, kind="stable")
    sorted_s = s[order]
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[y == 1].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass
class ReportRow:
    detector: str
    top_k_hits: dict[int, int]
    ap: float | None
    auc: float | None
    n_agents: int
    n_outliers: int
    omitted_agents: int


@dataclass
class EvalReport:
    rows: list[ReportRow]
    ks: list[int]
    dataset_id: str = ""
    config_hash: str = ""

    def to_text(self) -> str:
        headers = ["Detector"] + [f"Top-{k} Hits" for k in self.ks] + [
            "AP score",
            "AUC score",
            "Agents",
            "Outliers",
            "Omitted",
        ]
        body = []
        for r in self.rows:
            body.append(
                [r.detector]
                + [str(r.top_k_hits[k]) for k in self.ks]
                + [
                    "-" if r.ap is None else f"{r.ap:.4f}",
                    "-" if r.auc is None else f"{r.auc:.4f}",
                    str(r.n_agents),
                    str(r.n_outliers),
                    str(r.omitted_agents),
                ]
            )
        widths = [max(len(headers[c]), *(len(row[c]) for row in body)) if body else len(headers[c]) for c in range(len(headers))]
        out = io.StringIO()
        out.write("  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip() + "\n")
        out.write("  ".join("-" * w for w in widths) + "\n")
        for row in body:
            out.write("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() + "\n")
        return out.getvalue()

    def to_csv(self) -> str:
        headers = ["detector"] + [f"top_{k}_hits" for k in self.ks] + [
            "ap",
            "auc",
            "n_agents",
            "n_outliers",
            "omitted_agents",
        ]
        lines = [",".join(headers)]
        for r in self.rows:
            lines.append(
                ",".join(
                    [r.detector]
                    + [str(r.top_k_hits[k]) for k in self.ks]
                    + [
                        "-" if r.ap is None else f"{r.ap:.6f}",
                        "-" if r.auc is None else f"{r.auc:.6f}",
                        str(r.n_agents),
                        str(r.n_outliers),
                        str(r.omitted_agents),
                    ]
                )
            )
        return "\n".join(lines) + "\n"


def make_report(
    score_tables: list[ScoreTable],
    labels: LabelSet,
    ks: list[int],
    dataset_id: str = "",
    config_hash: str = "",
) -> EvalReport:
    """One report row per ScoreTable; undefined metrics render as ``-``."""
    if not score_tables or not ks:
        raise ConfigError("make_report needs at least one score table and one K")
    for table in score_tables:
        if table.dataset_id and dataset_id and table.dataset_id != dataset_id:
            raise ConfigError(
                f"score table {table.detector!r} is for dataset {table.dataset_id!r}, "
                f"expected {dataset_id!r}"
            )
    rows = []
    for table in score_tables:
        labeled = set(labels.entries)
        scored = set(table.scores)
        omitted = len((labeled - scored) | set(table.omitted))
        try:
            ap = average_precision(table, labels)
        except UndefinedMetricError:
            ap = None
        try:
            auc = roc_auc(table, labels)
        except UndefinedMetricError:
            auc = None
        rows.append(
            ReportRow(
                detector=table.detector,
                top_k_hits={k: top_k_hits(table, labels, k) for k in ks},
                ap=ap,
                auc=auc,
                n_agents=len(scored),
                n_outliers=labels.n_outliers(),
                omitted_agents=omitted,
            )
        )
    return EvalReport(rows=rows, ks=list(ks), dataset_id=dataset_id, config_hash=config_hash)
