import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from audiogeotag.evaluate import (
    EvalReport,
    average_precision,
    build_report,
    mean_average_precision,
)
from audiogeotag.kernels import KernelMatrix
from audiogeotag.svm import SvmModel


def brute_force_ap(order, relevance):
    """Walk a ranking accumulating precision at every relevant rank."""
    total_relevant = sum(relevance)
    hits = 0
    acc = 0.0
    for rank, idx in enumerate(order, start=1):
        if relevance[idx]:
            hits += 1
            acc += hits / rank
    return acc / total_relevant


class TestAveragePrecision:
    def test_perfect_ranking(self):
        assert average_precision([5.0, 4.0, 3.0, 2.0], [1, 1, 0, 0]) == 1.0

    def test_hand_computed_three_items(self):
        ap = average_precision([3.0, 2.0, 1.0], [1, 0, 1])
        assert ap == (1.0 + 2.0 / 3.0) / 2.0

    def test_exhaustive_four_item_orderings(self):
        relevance = [1, 0, 1, 0]
        for perm in itertools.permutations(range(4)):
            scores = np.empty(4)
            scores[list(perm)] = [4.0, 3.0, 2.0, 1.0]  # item perm[0] ranked first
            expected = brute_force_ap(perm, relevance)
            assert average_precision(scores, relevance) == expected

    def test_no_relevant_items_error(self):
        with pytest.raises(ValueError, match="undefined AP"):
            average_precision([1.0, 2.0], [0, 0])

    def test_ties_broken_by_identifier(self):
        scores = [1.0, 1.0, 1.0]
        relevance = [0, 0, 1]
        # ascending ids put the relevant item last: AP = 1/3
        assert average_precision(scores, relevance, ids=["a", "b", "c"]) == 1.0 / 3.0
        # renaming moves it first
        assert average_precision(scores, relevance, ids=["c", "b", "a"]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            average_precision([1.0], [1, 0])
        with pytest.raises(ValueError, match="ids"):
            average_precision([1.0, 2.0], [1, 0], ids=["a"])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_invariant_under_monotone_transforms(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.normal(size=12)
        relevance = rng.integers(0, 2, size=12)
        if relevance.sum() == 0:
            relevance[0] = 1
        base = average_precision(scores, relevance)
        assert average_precision(3.0 * scores + 7.0, relevance) == base
        assert average_precision(np.exp(scores / 4.0), relevance) == base

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_appending_worst_nonrelevant_never_increases(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.normal(size=10)
        relevance = rng.integers(0, 2, size=10)
        if relevance.sum() == 0:
            relevance[3] = 1
        base = average_precision(scores, relevance)
        extended = average_precision(
            np.append(scores, scores.min() - 1.0), np.append(relevance, 0)
        )
        assert extended <= base + 1e-15


class TestMeanAveragePrecision:
    def test_single_city(self):
        assert mean_average_precision({"paris": 0.7}) == 0.7

    def test_two_cities(self):
        assert mean_average_precision({"a": 0.4, "b": 0.6}) == 0.5

    def test_ten_perfect_cities(self):
        assert mean_average_precision({f"c{i}": 1.0 for i in range(10)}) == 1.0

    def test_empty_error(self):
        with pytest.raises(ValueError, match="no cities"):
            mean_average_precision({})


class TestEvalReport:
    def test_map_must_match_mean(self):
        with pytest.raises(ValueError, match="mean"):
            EvalReport({"a": 0.5, "b": 0.7}, map_score=0.9)

    def test_ap_range_checked(self):
        with pytest.raises(ValueError, match="outside"):
            EvalReport({"a": 1.5}, map_score=1.5)

    def test_text_table(self):
        report = EvalReport({"paris": 0.75, "tokyo": 0.25}, map_score=0.5)
        table = report.to_text_table()
        assert "paris" in table and "0.7500" in table
        assert table.strip().endswith("0.5000")


class TestBuildReport:
    def make_inputs(self):
        # two cities, three test recordings each, one shared cross kernel
        train_ids = ("t0", "t1", "t2", "t3")
        test_ids = ("e0", "e1", "e2")
        rng = np.random.default_rng(0)
        kernel = KernelMatrix(
            rng.uniform(0.1, 1.0, size=(3, 4)), test_ids, train_ids
        )
        models = {
            "paris": SvmModel(("t0", "t1"), np.array([1.0, -1.0]), 0.1, 1.0),
            "tokyo": SvmModel(("t2", "t3"), np.array([0.5, -0.5]), -0.2, 1.0),
        }
        kernels = {"paris": kernel, "tokyo": kernel}
        labels = {
            "paris": {"e0": True, "e1": False, "e2": True},
            "tokyo": {"e0": False, "e1": True, "e2": False},
        }
        return models, kernels, labels

    def test_report_internally_consistent(self):
        models, kernels, labels = self.make_inputs()
        report = build_report(models, kernels, labels, config_digest="d1")
        assert report.config_digest == "d1"
        assert set(report.per_city_ap) == {"paris", "tokyo"}
        assert report.map_score == mean_average_precision(report.per_city_ap)

    def test_constant_scores_deterministic(self):
        models, kernels, labels = self.make_inputs()
        models["paris"] = SvmModel((), np.zeros(0), 0.5, 1.0)  # constant scores
        a = build_report(models, kernels, labels)
        b = build_report(models, kernels, labels)
        assert a.per_city_ap == b.per_city_ap

    def test_identifier_mismatch(self):
        models, kernels, labels = self.make_inputs()
        labels["paris"] = {"e0": True, "eX": False, "e2": True}
        with pytest.raises(ValueError, match="different recordings"):
            build_report(models, kernels, labels)

    def test_city_key_mismatch(self):
        models, kernels, labels = self.make_inputs()
        del kernels["tokyo"]
        with pytest.raises(ValueError, match="same cities"):
            build_report(models, kernels, labels)
