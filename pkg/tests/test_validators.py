import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from vpet.errors import ShapeError, TooFewPointsError
from vpet.heads import ModelOutputs, softmax
from vpet.validators import (
    CRITERIA,
    ValidatorScore,
    ami,
    ari,
    bnm,
    build_panel,
    chi,
    competition_ranks,
    fmi,
    kmeans,
    rankme,
    read_scores_csv,
    score_model,
    select_config,
    v_measure,
    write_panel_csv,
)

labelings = st.lists(st.integers(min_value=0, max_value=3), min_size=2,
                     max_size=12)


class TestKMeans:
    def test_two_tight_pairs(self):
        pts = np.array([[0., 0.], [0., 1.], [10., 0.], [10., 1.]])
        result = kmeans(pts, 2, seed=3)
        a = result.assignments
        assert a[0] == a[1] and a[2] == a[3] and a[0] != a[2]
        assert result.inertia == pytest.approx(1.0, abs=1e-12)
        # matches the exhaustive-partition optimum
        assert result.inertia == pytest.approx(
            oracles.best_partition_inertia(pts, 2), abs=1e-9)

    def test_k_equals_n(self):
        pts = np.array([[0.], [5.], [9.]])
        result = kmeans(pts, 3, seed=1)
        assert sorted(result.assignments.tolist()) == [0, 1, 2]
        assert result.inertia == 0.0

    def test_identical_points(self):
        pts = np.ones((4, 2))
        result = kmeans(pts, 2, seed=0)
        assert result.inertia == 0.0

    def test_too_few_points(self):
        with pytest.raises(TooFewPointsError):
            kmeans(np.ones((2, 2)), 3, seed=0)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(40, 3))
        a = kmeans(pts, 4, seed=11)
        b = kmeans(pts, 4, seed=11)
        assert np.array_equal(a.assignments, b.assignments)
        assert np.array_equal(a.centroids, b.centroids)


class TestAgreementFixedCases:
    def test_identical_labelings_score_one(self):
        a = [0, 0, 1, 1, 2]
        assert ami(a, a) == pytest.approx(1.0, abs=1e-12)
        assert ari(a, a) == pytest.approx(1.0, abs=1e-12)
        assert v_measure(a, a) == pytest.approx(1.0, abs=1e-12)
        assert fmi(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_ami_against_constant(self):
        assert ami([0, 0, 1, 1], [0, 0, 0, 0]) == 0.0

    def test_ari_crossing(self):
        assert ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5, abs=1e-12)

    def test_ari_relabeling(self):
        assert ari([0, 0, 1, 1], [1, 1, 0, 0]) == pytest.approx(1.0)

    def test_ari_single_sample_undefined(self):
        assert math.isnan(ari([0], [0]))

    def test_v_measure_constant_second(self):
        assert v_measure([0, 0, 1, 1], [0, 0, 0, 0]) == 0.0

    def test_v_measure_crossing(self):
        assert v_measure([0, 0, 1, 1], [0, 1, 0, 1]) == 0.0

    def test_fmi_crossing_zero(self):
        assert fmi([0, 0, 1, 1], [0, 1, 0, 1]) == 0.0

    def test_fmi_all_one_cluster(self):
        assert fmi([0, 0, 0], [1, 1, 1]) == pytest.approx(1.0)


class TestAgreementOracles:
    @settings(max_examples=60, deadline=None)
    @given(a=labelings, seed=st.integers(0, 2**31))
    def test_matches_bruteforce(self, a, seed):
        rng = np.random.default_rng(seed)
        b = rng.integers(0, 4, size=len(a)).tolist()
        assert ami(a, b) == pytest.approx(oracles.ami_exact(a, b), abs=1e-10)
        assert ari(a, b) == pytest.approx(oracles.ari_pairs(a, b), abs=1e-10)
        assert v_measure(a, b) == pytest.approx(
            oracles.v_measure_conditional(a, b), abs=1e-10)
        assert fmi(a, b) == pytest.approx(oracles.fmi_pairs(a, b), abs=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(a=labelings, seed=st.integers(0, 2**31))
    def test_symmetry_and_relabeling_invariance(self, a, seed):
        rng = np.random.default_rng(seed)
        b = rng.integers(0, 3, size=len(a)).tolist()
        for fn in (ami, ari, v_measure, fmi):
            x = fn(a, b)
            y = fn(b, a)
            if not (isinstance(x, float) and math.isnan(x)):
                assert x == pytest.approx(y, abs=1e-10)
            # random permutation of the label alphabet of either side
            perm = rng.permutation(4)
            a2 = [int(perm[v]) for v in a]
            z = fn(a2, b)
            if not (isinstance(x, float) and math.isnan(x)):
                assert x == pytest.approx(z, abs=1e-10)

    def test_length_mismatch(self):
        for fn in (ami, ari, v_measure, fmi):
            with pytest.raises(ShapeError):
                fn([0, 1], [0, 1, 2])


class TestChi:
    def test_two_pairs_on_a_line(self):
        feats = np.array([[0.], [1.], [10.], [11.]])
        assert chi(feats, [0, 0, 1, 1]) == pytest.approx(200.0, abs=1e-9)

    def test_translation_invariance(self):
        rng = np.random.default_rng(3)
        feats = rng.normal(size=(20, 4))
        groups = rng.integers(0, 3, size=20)
        base = chi(feats, groups)
        shifted = chi(feats + np.array([5., -2., 0.5, 100.]), groups)
        assert shifted == pytest.approx(base, rel=1e-9)

    def test_scale_invariance(self):
        rng = np.random.default_rng(4)
        feats = rng.normal(size=(15, 3))
        groups = rng.integers(0, 2, size=15)
        assert chi(feats * 7.5, groups) == pytest.approx(chi(feats, groups),
                                                         rel=1e-9)

    def test_single_group_undefined(self):
        assert math.isnan(chi(np.ones((5, 2)), [0] * 5))

    def test_zero_within_scatter_is_best(self):
        feats = np.array([[0., 0.], [0., 0.], [1., 1.], [1., 1.], [2., 2.]])
        assert chi(feats, [0, 0, 1, 1, 2]) == math.inf

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(5, 12),
           k=st.integers(2, 4))
    def test_matches_direct_formula(self, seed, n, k):
        rng = np.random.default_rng(seed)
        feats = rng.normal(size=(n, 3))
        groups = (np.arange(n) % k).tolist()  # k non-empty groups
        assert chi(feats, groups) == pytest.approx(
            oracles.chi_direct(feats, groups), rel=1e-9)


class TestRankMe:
    def test_identity_three(self):
        assert rankme(np.eye(3), epsilon=0.0) == pytest.approx(3.0, abs=1e-9)

    def test_rank_one(self):
        outer = np.outer([1., 2., 3.], [4., 5.])
        assert rankme(outer, epsilon=0.0) == pytest.approx(1.0, abs=1e-9)

    def test_scale_invariance_at_zero_epsilon(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(20, 8))
        for alpha in (0.001, 3.0, 1e4):
            assert rankme(alpha * X, epsilon=0.0) == pytest.approx(
                rankme(X, epsilon=0.0), rel=1e-9)

    def test_zero_matrix_undefined(self):
        assert math.isnan(rankme(np.zeros((3, 3))))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(2, 10),
           d=st.integers(2, 6))
    def test_matches_eigh_oracle(self, seed, n, d):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, d))
        assert rankme(X) == pytest.approx(oracles.rankme_eigh(X, 1e-7),
                                          rel=1e-9)


class TestBnm:
    def test_identity(self):
        assert bnm(np.eye(3)) == pytest.approx(3.0, abs=1e-12)

    def test_rank_one_rows(self):
        P = np.tile([1.0, 0.0, 0.0], (4, 1))
        assert bnm(P) == pytest.approx(2.0, abs=1e-12)

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(8)
        P = softmax(rng.normal(size=(10, 4)))
        assert bnm(P[rng.permutation(10)]) == pytest.approx(bnm(P), rel=1e-12)

    def test_rejects_non_stochastic(self):
        with pytest.raises(ShapeError):
            bnm(np.array([[0.5, 0.4]]))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(2, 10),
           c=st.integers(2, 5))
    def test_matches_eigh_oracle(self, seed, n, c):
        rng = np.random.default_rng(seed)
        P = softmax(rng.normal(size=(n, c)))
        assert bnm(P) == pytest.approx(oracles.nuclear_norm_eigh(P), rel=1e-9)


class TestScoreModel:
    def build_outputs(self, seed=0, n=24, d=6, c=3):
        rng = np.random.default_rng(seed)
        feats = rng.normal(size=(n, d))
        logits = rng.normal(size=(n, c))
        preds = np.argmax(logits, axis=1)
        return ModelOutputs(features=feats, logits=logits, predictions=preds,
                            ids=np.arange(n, dtype=np.uint64))

    def test_returns_all_seven_in_order(self):
        scores = score_model(self.build_outputs(), 3, seed=5)
        assert tuple(s.criterion for s in scores) == CRITERIA
        assert all(s.higher_is_better for s in scores)

    def test_perfect_agreement(self):
        # predictions equal to the k-means labeling of well-separated blobs
        rng = np.random.default_rng(1)
        feats = np.vstack([rng.normal(0, .1, (8, 2)) + [c * 10, 0]
                           for c in range(3)])
        logits = np.full((24, 3), -10.0)
        truth = np.repeat(np.arange(3), 8)
        logits[np.arange(24), truth] = 10.0
        outputs = ModelOutputs(features=feats, logits=logits,
                               predictions=truth,
                               ids=np.arange(24, dtype=np.uint64))
        scores = {s.criterion: s for s in score_model(outputs, 3, seed=2)}
        for name in ("AMI", "ARI", "VMeasure", "FMI"):
            assert scores[name].value == pytest.approx(1.0, abs=1e-9)

    def test_identity_features_rankme(self):
        n = 4
        feats = np.eye(n)
        logits = np.tile(np.arange(n, dtype=float), (n, 1))
        outputs = ModelOutputs(features=feats, logits=logits,
                               predictions=np.argmax(logits, axis=1),
                               ids=np.arange(n, dtype=np.uint64))
        scores = {s.criterion: s for s in score_model(outputs, n, seed=3,
                                                      rankme_epsilon=0.0)}
        assert scores["RankMe"].value == pytest.approx(n, abs=1e-9)

    def test_uniform_logits_bnm_matches_oracle(self):
        n, c = 12, 4
        logits = np.ones((n, c))
        feats = np.random.default_rng(0).normal(size=(n, 5))
        outputs = ModelOutputs(features=feats, logits=logits,
                               predictions=np.zeros(n, dtype=np.int64),
                               ids=np.arange(n, dtype=np.uint64))
        scores = {s.criterion: s for s in score_model(outputs, c, seed=4)}
        expected = oracles.nuclear_norm_eigh(np.full((n, c), 1.0 / c))
        assert scores["BNM"].value == pytest.approx(expected, rel=1e-9)
        # constant predictions make the agreement metrics degenerate, but CHI
        # must be flagged rather than crash
        assert scores["CHI"].undefined


class TestPanel:
    def score_matrix(self, M):
        return [[ValidatorScore(f"c{j}", float(v)) for j, v in enumerate(row)]
                for row in M]

    def test_fixed_example(self):
        panel = build_panel(self.score_matrix(
            [[0.9, 0.2], [0.5, 0.8], [0.1, 0.4]]))
        assert panel.R.tolist() == [[1, 3], [2, 1], [3, 2]]
        assert panel.A.tolist() == [2.0, 1.5, 2.5]
        assert select_config(panel) == 1

    def test_single_config(self):
        panel = build_panel(self.score_matrix([[0.3, 0.7]]))
        assert panel.A.tolist() == [1.0]
        assert select_config(panel) == 0

    def test_full_tie_column(self):
        panel = build_panel(self.score_matrix([[0.5, 1.0], [0.5, 0.0]]))
        assert panel.R[:, 0].tolist() == [1, 1]

    def test_tie_breaks_to_lowest_index(self):
        panel = build_panel(self.score_matrix([[0.6, 0.4], [0.4, 0.6]]))
        assert panel.A.tolist() == [1.5, 1.5]
        assert select_config(panel) == 0

    def test_undefined_ranks_worst(self):
        rows = self.score_matrix([[0.9], [0.5], [0.1]])
        rows[1][0] = ValidatorScore("c0", math.nan, undefined=True)
        panel = build_panel(rows)
        assert panel.R[:, 0].tolist() == [1, 3, 2]

    def test_inf_ranks_best(self):
        rows = self.score_matrix([[1e9], [0.5]])
        rows[1][0] = ValidatorScore("c0", math.inf)
        panel = build_panel(rows)
        assert panel.R[:, 0].tolist() == [2, 1]

    def test_ragged_rejected(self):
        rows = self.score_matrix([[1.0, 2.0], [1.0, 2.0]])
        rows[1] = rows[1][:1]
        with pytest.raises(ShapeError):
            build_panel(rows)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31), h=st.integers(2, 6),
           ncrit=st.integers(1, 5), column=st.integers(0, 4))
    def test_monotone_transform_invariance(self, seed, h, ncrit, column):
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(h, ncrit))
        column = column % ncrit
        panel = build_panel(self.score_matrix(M))
        M2 = M.copy()
        M2[:, column] = np.exp(3.0 * M2[:, column]) + 7.0  # strictly increasing
        panel2 = build_panel(self.score_matrix(M2))
        assert np.array_equal(panel.R, panel2.R)
        assert select_config(panel) == select_config(panel2)

    def test_ranks_are_competition_style(self):
        ranks = competition_ranks([3.0, 3.0, 1.0, 2.0])
        assert ranks.tolist() == [1, 1, 4, 3]


def test_panel_csv_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    M = rng.normal(size=(3, 4))
    scores = [[ValidatorScore(CRITERIA[j], float(M[i, j])) for j in range(4)]
              for i in range(3)]
    panel = build_panel(scores, configs=["a", "b", "c"])
    write_panel_csv(panel, tmp_path / "panel.csv", tmp_path / "summary.csv")

    text = (tmp_path / "panel.csv").read_text().splitlines()
    assert text[0] == "config,criterion,score,rank"
    assert len(text) == 1 + 3 * 4
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert summary[0] == "config,average_rank,selected"
    assert sum(1 for line in summary[1:] if line.endswith("true")) == 1

    back = read_scores_csv(tmp_path / "panel.csv")
    assert back.configs == panel.configs
    assert np.allclose(back.M, panel.M)
    assert np.array_equal(back.R, panel.R)
