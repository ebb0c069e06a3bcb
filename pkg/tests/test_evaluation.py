import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pandaface.errors import ClosedSetViolation, EmptyScores
from pandaface.evaluation import (ProbeOutcome, export_report, leave_one_out,
                                  rank_accuracy, roc_curve, tar_at_far)

from conftest import fast_config


def brute_force_tar(genuine, impostor, far_target):
    """Try every score (plus +inf) as a threshold; keep the best legal TAR."""
    genuine = np.asarray(genuine, dtype=np.float64)
    impostor = np.asarray(impostor, dtype=np.float64)
    best = 0.0
    for tau in list(genuine) + list(impostor) + [np.inf, -np.inf]:
        far = float(np.mean(impostor >= tau))
        if far <= far_target:
            best = max(best, float(np.mean(genuine >= tau)))
    return best


class TestRocCurve:
    def test_perfect_separation(self):
        roc = roc_curve([0.9, 0.8, 0.7], [0.1, 0.2])
        by_far = dict(roc)
        assert by_far[0.0] == 1.0

    def test_identical_distributions_diagonal(self):
        scores = [0.1, 0.4, 0.4, 0.9]
        roc = roc_curve(scores, scores)
        for far, tar in roc:
            assert tar == pytest.approx(far)

    def test_hand_counted_point(self):
        roc = roc_curve([0.9, 0.8, 0.1], [0.7, 0.2, 0.15, 0.05])
        by_far = dict(roc)
        assert by_far[0.0] == pytest.approx(2.0 / 3.0)

    def test_empty_raises(self):
        with pytest.raises(EmptyScores):
            roc_curve([], [0.5])

    def test_endpoints(self):
        roc = roc_curve([0.5], [0.4])
        assert roc[0][0] == 0.0
        assert roc[-1] == (1.0, 1.0)

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=40),
           st.lists(st.floats(-5, 5), min_size=1, max_size=40))
    @settings(max_examples=60, deadline=None)
    def test_monotone(self, genuine, impostor):
        roc = roc_curve(genuine, impostor)
        fars = [far for far, _ in roc]
        tars = [tar for _, tar in roc]
        assert fars == sorted(fars)
        assert tars == sorted(tars)
        assert len(set(fars)) == len(fars)


class TestTarAtFar:
    def test_perfect(self):
        roc = roc_curve([0.9, 0.8], [0.1, 0.2])
        assert tar_at_far(roc, 0.01) == 1.0

    def test_step_convention(self):
        assert tar_at_far([(0.0, 0.5), (0.02, 0.9)], 0.01) == 0.5

    def test_matches_brute_force(self, rng):
        for _ in range(25):
            genuine = rng.normal(0.6, 0.3, size=rng.integers(3, 40))
            impostor = rng.normal(0.0, 0.3, size=rng.integers(3, 60))
            roc = roc_curve(genuine, impostor)
            for far_target in (0.0, 0.01, 0.05, 0.1, 0.5, 1.0):
                assert tar_at_far(roc, far_target) == \
                    brute_force_tar(genuine, impostor, far_target)


def outcome(true_id, table):
    return ProbeOutcome("p", true_id, table, None)


class TestRankAccuracy:
    def test_all_top(self):
        probes = [outcome("a", {"a": 0.9, "b": 0.1}),
                  outcome("b", {"a": 0.0, "b": 0.5})]
        assert rank_accuracy(probes, 2) == [1.0, 1.0]

    def test_monotone_and_saturates(self):
        probes = [outcome("a", {"a": 0.1, "b": 0.9, "c": 0.5}),
                  outcome("c", {"a": 0.8, "b": 0.2, "c": 0.4})]
        accs = rank_accuracy(probes, 3)
        assert all(x <= y for x, y in zip(accs, accs[1:]))
        assert accs[2] == 1.0

    def test_tie_break_matches_identify(self):
        # true id "b" ties with "a": tie-break ranks "a" first, so "b"
        # lands at rank 2
        probes = [outcome("b", {"a": 0.5, "b": 0.5, "c": 0.1})]
        assert rank_accuracy(probes, 2) == [0.0, 1.0]


@pytest.fixture(scope="module")
def result(tiny_dataset):
    return leave_one_out(tiny_dataset, fast_config(), threads=2)


@pytest.fixture(scope="module")
def result_two_fars(tiny_dataset):
    return leave_one_out(tiny_dataset, fast_config(), threads=2,
                         fars=(0.01, 0.05))


class TestLeaveOneOut:
    def test_counts(self, result):
        assert result.counts["probes"] == 4
        assert len(result.genuine) == 4
        assert len(result.impostor) == 4  # (|ids| - 1) per probe

    def test_probe_order_is_manifest_order(self, result, tiny_dataset):
        assert [p.name for p in result.probes] == [s[0] for s in tiny_dataset]

    def test_own_identity_ranks_high(self, result):
        # own-id score above the median of each probe's score table
        for probe in result.probes:
            values = sorted(probe.per_id_scores.values())
            own = probe.per_id_scores[probe.true_id]
            assert own >= values[len(values) // 2]

    def test_separates_tiny_fixture(self, result):
        assert result.rank_accuracies[0] == 1.0
        assert min(result.genuine) > max(result.impostor)

    def test_closed_set_violation(self, tiny_dataset):
        with pytest.raises(ClosedSetViolation):
            leave_one_out(tiny_dataset[:3], fast_config())

    def test_threads_do_not_change_results(self, result, tiny_dataset):
        again = leave_one_out(tiny_dataset, fast_config(), threads=1)
        assert again.genuine == result.genuine
        assert again.impostor == result.impostor
        assert again.roc == result.roc


class TestExportReport:
    def test_files_and_keys(self, result_two_fars, tmp_path):
        paths = export_report(result_two_fars, tmp_path / "report")
        assert [p.name for p in paths] == ["scores.csv", "roc.csv",
                                           "summary.json"]
        summary = json.loads(paths[2].read_text())
        assert 0.0 <= summary["tar_at_far_1pct"] <= 1.0
        assert 0.0 <= summary["rank_1"] <= 1.0
        assert summary["counts"]["probes"] == 4
        assert "0.05" in summary["tar_at_far"]

    def test_roc_sorted(self, result_two_fars, tmp_path):
        paths = export_report(result_two_fars, tmp_path / "report")
        rows = paths[1].read_text().splitlines()
        assert rows[0] == "far,tar"
        fars = [float(line.split(",")[0]) for line in rows[1:]]
        assert fars == sorted(fars)

    def test_rerun_identical(self, result_two_fars, tmp_path):
        first = export_report(result_two_fars, tmp_path / "r1")
        second = export_report(result_two_fars, tmp_path / "r2")
        for a, b in zip(first, second):
            assert a.read_bytes() == b.read_bytes()
