"""AUROC / FPR95 and the per-(scorer, OOD set) evaluation report.

ID samples are the positive class; scores are oriented higher = ID.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyInput, NonFinite


def _scores(values, name: str) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput(f"{name} scores are empty")
    if not np.isfinite(v).all():
        raise NonFinite(f"{name} scores contain NaN or Inf")
    return v


def auroc(id_scores, ood_scores) -> float:
    """Mann-Whitney estimate of P(id > ood), ties counted as one half."""
    pos = _scores(id_scores, "ID")
    neg = _scores(ood_scores, "OOD")
    n_pos, n_neg = pos.size, neg.size
    ranks = rankdata(np.concatenate([pos, neg]), method="average")
    u = ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def fpr_at_tpr(id_scores, ood_scores, tpr_target: float = 0.95) -> float:
    """Fraction of OOD scores at or above the ``ceil(tpr * n_id)``-th largest ID score."""
    if not 0.0 < tpr_target <= 1.0:
        raise ValueError(f"tpr_target must lie in (0, 1], got {tpr_target}")
    pos = _scores(id_scores, "ID")
    neg = _scores(ood_scores, "OOD")
    # guard against products like 0.95 * 20 landing a hair above an integer
    k = max(1, math.ceil(tpr_target * pos.size - 1e-9))
    threshold = np.sort(pos)[::-1][k - 1]
    return float(np.count_nonzero(neg >= threshold) / neg.size)


@dataclass(frozen=True)
class EvalEntry:
    scorer: str
    ood_set: str
    auroc: float
    fpr95: float
    n_id: int
    n_ood: int


@dataclass
class EvalReport:
    entries: list[EvalEntry] = field(default_factory=list)
    averages: dict[str, dict[str, float]] = field(default_factory=dict)

    def scorers(self) -> list[str]:
        return list(dict.fromkeys(e.scorer for e in self.entries))

    def ood_sets(self) -> list[str]:
        return list(dict.fromkeys(e.ood_set for e in self.entries))

    def get(self, scorer: str, ood_set: str) -> EvalEntry:
        for e in self.entries:
            if e.scorer == scorer and e.ood_set == ood_set:
                return e
        raise KeyError((scorer, ood_set))

    def to_dict(self) -> dict:
        return {
            "entries": [asdict(e) for e in self.entries],
            "averages": self.averages,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping) -> "EvalReport":
        entries = [EvalEntry(**e) for e in doc["entries"]]
        return cls(entries, {k: dict(v) for k, v in doc["averages"].items()})

    def to_markdown(self) -> str:
        """Per-dataset FPR95 / AUROC columns followed by the average, in percent."""
        sets = self.ood_sets()
        head = ["Method"]
        for name in sets + ["Average"]:
            head += [f"{name} FPR95", f"{name} AUROC"]
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for scorer in self.scorers():
            row = [scorer]
            for name in sets:
                e = self.get(scorer, name)
                row += [f"{100 * e.fpr95:.2f}", f"{100 * e.auroc:.2f}"]
            avg = self.averages[scorer]
            row += [f"{100 * avg['fpr95']:.2f}", f"{100 * avg['auroc']:.2f}"]
            lines.append("| " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"


def evaluate(
    id_scores: Mapping[str, np.ndarray],
    ood_scores: Mapping[str, Mapping[str, np.ndarray]],
    tpr_target: float = 0.95,
) -> EvalReport:
    """Score every (scorer, OOD set) pair against the scorer's ID scores.

    ``id_scores[scorer]`` is the ID score vector; ``ood_scores[scorer][name]``
    the OOD vector for dataset ``name``. Entries keep the mapping order.
    """
    report = EvalReport()
    for scorer, pos in id_scores.items():
        if scorer not in ood_scores or not ood_scores[scorer]:
            raise EmptyInput(f"no OOD scores for scorer {scorer!r}")
        rows = []
        for name, neg in ood_scores[scorer].items():
            rows.append(
                EvalEntry(
                    scorer, name, auroc(pos, neg), fpr_at_tpr(pos, neg, tpr_target),
                    int(np.size(pos)), int(np.size(neg)),
                )
            )
        report.entries.extend(rows)
        report.averages[scorer] = {
            "auroc": float(np.mean([r.auroc for r in rows])),
            "fpr95": float(np.mean([r.fpr95 for r in rows])),
        }
    return report
