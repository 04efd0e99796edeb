"""Retrieval evaluation: per-city Average Precision and the mean over cities.

The geotagging task is scored as retrieval: each city's test recordings
are ranked by SVM decision value and AP is the mean of precision at the
ranks holding relevant recordings. Score ties are broken by recording
identifier (ascending) so rankings, and therefore reports, are
deterministic.
"""

from dataclasses import dataclass, field

import numpy as np


def average_precision(scores, relevance, ids=None):
    """AP of a ranked list: (1/R) * sum of precision at each relevant rank.

    Items are ranked by descending score with ties broken by ascending
    identifier (positional index when ids is omitted). Errors when no
    item is relevant.
    """
    scores = np.asarray(scores, dtype=np.float64)
    relevance = np.asarray(relevance).astype(bool)
    if scores.ndim != 1 or scores.shape != relevance.shape:
        raise ValueError(
            f"scores {scores.shape} and relevance {relevance.shape} must be "
            "1-D and equal length"
        )
    if ids is None:
        ids = list(range(scores.size))
    elif len(ids) != scores.size:
        raise ValueError("ids must match scores in length")
    total_relevant = int(relevance.sum())
    if total_relevant == 0:
        raise ValueError("undefined AP: no relevant items")

    order = sorted(range(scores.size), key=lambda i: (-scores[i], ids[i]))
    hits = 0
    precision_sum = 0.0
    for rank, idx in enumerate(order, start=1):
        if relevance[idx]:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / total_relevant


def mean_average_precision(per_city):
    """Unweighted arithmetic mean of per-city AP values."""
    if len(per_city) == 0:
        raise ValueError("no cities to average")
    return float(sum(per_city[c] for c in sorted(per_city)) / len(per_city))


@dataclass
class EvalReport:
    """Per-city AP table plus their mean and a digest of the configuration."""

    per_city_ap: dict
    map_score: float
    config_digest: str = ""

    def __post_init__(self):
        for city, ap in self.per_city_ap.items():
            if not 0.0 <= ap <= 1.0:
                raise ValueError(f"AP for {city!r} outside [0, 1]: {ap}")
        expected = mean_average_precision(self.per_city_ap)
        if abs(expected - self.map_score) > 1e-12:
            raise ValueError("map_score is not the mean of per_city_ap")

    def to_text_table(self):
        width = max([len(c) for c in self.per_city_ap] + [len("MAP")])
        lines = [f"{'city'.ljust(width)}  AP", f"{'-' * width}  ------"]
        for city in sorted(self.per_city_ap):
            lines.append(f"{city.ljust(width)}  {self.per_city_ap[city]:.4f}")
        lines.append(f"{'-' * width}  ------")
        lines.append(f"{'MAP'.ljust(width)}  {self.map_score:.4f}")
        return "\n".join(lines) + "\n"


def build_report(models, test_kernels, test_labels, config_digest=""):
    """Score every city's test split and assemble the evaluation report.

    models, test_kernels and test_labels are keyed by city; test_labels
    maps each recording identifier in the city's cross kernel to its
    binary relevance. Identifier mismatches between kernel and labels are
    an error.
    """
    from .svm import decision_values  # local import: svm depends on this module

    if set(models) != set(test_kernels) or set(models) != set(test_labels):
        raise ValueError("models, kernels and labels must cover the same cities")
    per_city = {}
    for city in sorted(models):
        kernel = test_kernels[city]
        labels_by_id = test_labels[city]
        if set(kernel.row_ids) != set(labels_by_id):
            raise ValueError(
                f"{city}: kernel rows and relevance labels name different recordings"
            )
        scores = decision_values(models[city], kernel)
        relevance = [bool(labels_by_id[rid]) for rid in kernel.row_ids]
        per_city[city] = average_precision(scores, relevance, ids=kernel.row_ids)
    return EvalReport(
        per_city_ap=per_city,
        map_score=mean_average_precision(per_city),
        config_digest=config_digest,
    )
