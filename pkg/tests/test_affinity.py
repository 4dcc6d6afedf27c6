"""Tests for pair features, self-labeling, logistic fitting, and edge costs.

Fitted coefficients are checked against an independently minimized copy of
the regularized loss (scipy BFGS) rather than against the implementation's
own optimizer.
"""

import math

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.special import expit

from liftedtrack.affinity import (
    LIFTED_FEATURES,
    NEARBY_FEATURES,
    AffinityConfig,
    AffinityModel,
    MatchTable,
    assemble_costs,
    edge_cost,
    feature_vector,
    fit_affinity_model,
    fit_logistic,
    generate_labels,
    iou_match_table,
    pair_probability,
    predict_p_same,
    read_match_table,
    write_match_table,
)
from liftedtrack.graph import BBox, Detection, build_graph
from liftedtrack.solver import solve_bruteforce


def reference_beta(features, labels, l2=1e-4):
    """Minimize mean log loss + 0.5*l2*|b|^2 with an off-the-shelf optimizer."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)

    def fun(beta):
        m = features @ beta
        losses = np.logaddexp(0.0, np.where(labels == 1, -m, m))
        return np.mean(losses) + 0.5 * l2 * beta @ beta

    def jac(beta):
        p = expit(features @ beta)
        return features.T @ (p - labels) / len(labels) + l2 * beta

    res = minimize(fun, np.zeros(features.shape[1]), jac=jac, method="BFGS",
                   options={"gtol": 1e-12, "maxiter": 5000})
    return res.x


def det(frame, left=0.0, top=0.0, size=10.0):
    return Detection(frame=frame, box=BBox(left, top, size, size), score=1.0)


class TestMatchTable:
    def test_symmetric_lookup_and_default(self):
        table = MatchTable({(3, 1): 0.6})
        assert table.get(1, 3) == 0.6
        assert table.get(3, 1) == 0.6
        assert table.get(0, 9) == 0.0

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="outside"):
            MatchTable({(0, 1): 1.5})

    def test_rejects_conflicting_duplicates(self):
        with pytest.raises(ValueError, match="conflicting"):
            MatchTable({(0, 1): 0.5, (1, 0): 0.6})

    def test_iou_table_window(self):
        # frames 1..8, identical boxes: only distances 1..5 stored
        dets = [det(f) for f in range(1, 9)]
        table = iou_match_table(dets, max_frame_gap=5)
        assert table.get(0, 1) == 1.0
        assert table.get(0, 5) == 1.0
        assert table.get(0, 6) == 0.0
        assert (0, 6) not in table.entries

    def test_iou_table_excludes_same_frame(self):
        dets = [det(1), det(1), det(2)]
        table = iou_match_table(dets)
        assert (0, 1) not in table.entries
        assert table.get(0, 2) == 1.0

    def test_text_roundtrip(self, tmp_path):
        dets = [det(1), det(1, left=20.0), det(2), det(3)]
        table = MatchTable({(0, 2): 0.8125, (1, 2): 0.25, (2, 3): 0.125})
        path = tmp_path / "matches.txt"
        write_match_table(path, table, dets)
        back = read_match_table(path, dets)
        assert back.entries == table.entries

    def test_read_reports_line_numbers(self, tmp_path):
        dets = [det(1), det(2)]
        path = tmp_path / "bad.txt"
        path.write_text("1 0 2 0 0.5\n1 0 2 0\n")
        with pytest.raises(ValueError, match="bad.txt:2"):
            read_match_table(path, dets)

    def test_read_rejects_unknown_detection(self, tmp_path):
        dets = [det(1), det(2)]
        path = tmp_path / "bad.txt"
        path.write_text("1 0 7 0 0.5\n")
        with pytest.raises(ValueError, match="no detection"):
            read_match_table(path, dets)


class TestGenerateLabels:
    def test_threshold_examples(self):
        table = MatchTable({(0, 1): 0.9, (0, 2): 0.05, (1, 2): 0.4})
        labeled = dict(generate_labels(table))
        assert labeled[(0, 1)] == 1
        assert labeled[(0, 2)] == 0
        assert (1, 2) not in labeled

    def test_boundaries_belong_to_dead_zone(self):
        table = MatchTable({(0, 1): 0.7, (0, 2): 0.1})
        assert generate_labels(table) == []

    def test_never_labels_dead_zone(self):
        cfg = AffinityConfig()
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(2, 12))
            entries = {}
            for a in range(n):
                for b in range(a + 1, n):
                    if rng.random() < 0.5:
                        entries[(a, b)] = float(rng.random())
            table = MatchTable(entries)
            for pair, label in generate_labels(table, cfg):
                value = table.entries[pair]
                assert label in (0, 1)
                assert value > cfg.t_high or value < cfg.t_low

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AffinityConfig(t_low=0.7, t_high=0.1)
        with pytest.raises(ValueError):
            AffinityConfig(t_low=-0.1, t_high=0.7)


class TestFeatureVector:
    def test_full_config_layout(self):
        vec = feature_vector(0.5, 2.0, NEARBY_FEATURES)
        assert np.array_equal(vec, [1.0, 0.5, 2.0, 1.0])

    def test_lifted_config_ignores_overlap(self):
        assert np.array_equal(
            feature_vector(0.9, 2.0, LIFTED_FEATURES),
            feature_vector(0.0, 2.0, LIFTED_FEATURES),
        )

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError, match="unknown feature"):
            feature_vector(0.5, 1.0, ("bias", "velocity"))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            feature_vector(0.5, math.inf, NEARBY_FEATURES)


class TestFitLogistic:
    def test_matches_reference_optimizer(self):
        rng = np.random.default_rng(11)
        features = np.column_stack(
            [np.ones(80), rng.normal(size=80), rng.uniform(0, 3, size=80)]
        )
        truth = np.array([0.3, 1.2, -0.8])
        labels = (rng.random(80) < expit(features @ truth)).astype(int)
        beta = fit_logistic(features, labels)
        expected = reference_beta(features, labels)
        assert np.max(np.abs(beta - expected)) < 1e-5

    def test_separable_slope_and_accuracy(self):
        # one feature: +2 for label 1, -2 for label 0
        features = np.array([[2.0]] * 6 + [[-2.0]] * 6)
        labels = np.array([1] * 6 + [0] * 6)
        beta = fit_logistic(features, labels)
        assert beta[0] > 0
        preds = (expit(features @ beta) > 0.5).astype(int)
        assert np.array_equal(preds, labels)

    def test_uninformative_features_predict_near_prior(self):
        rng = np.random.default_rng(12)
        features = np.column_stack([np.ones(40), rng.normal(size=40)])
        labels = np.array([0, 1] * 20)
        beta = fit_logistic(features, rng.permutation(labels))
        probs = expit(features @ beta)
        assert np.all(probs > 0.35) and np.all(probs < 0.65)

    def test_duplication_invariance(self):
        rng = np.random.default_rng(13)
        features = np.column_stack([np.ones(30), rng.normal(size=30)])
        labels = (rng.random(30) < 0.5).astype(int)
        beta_once = fit_logistic(features, labels)
        beta_twice = fit_logistic(np.vstack([features, features]),
                                  np.concatenate([labels, labels]))
        assert np.max(np.abs(beta_once - beta_twice)) < 1e-6

    def test_permutation_invariance(self):
        rng = np.random.default_rng(14)
        features = np.column_stack([np.ones(50), rng.normal(size=50)])
        labels = (rng.random(50) < 0.5).astype(int)
        base = fit_logistic(features, labels)
        for seed in range(5):
            order = np.random.default_rng(seed).permutation(50)
            shuffled = fit_logistic(features[order], labels[order])
            assert np.max(np.abs(base - shuffled)) < 1e-6

    def test_single_class_rejected(self):
        features = np.ones((5, 1))
        with pytest.raises(ValueError, match="each label"):
            fit_logistic(features, np.ones(5, dtype=int))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="does not match"):
            fit_logistic(np.ones((5, 2)), np.array([0, 1]))

    def test_monotone_in_overlap(self):
        # labels induced by the thresholds force a positive overlap slope
        rng = np.random.default_rng(15)
        table = MatchTable(
            {(0, i + 1): float(v) for i, v in enumerate(rng.random(60))}
        )
        labeled = generate_labels(table)
        raw = [(table.entries[pair], 0.0) for pair, _ in labeled]
        labels = [label for _, label in labeled]
        model = fit_affinity_model(raw, labels, ("bias", "iou_dm"))
        grid = [pair_probability(model, v, 0.0) for v in np.linspace(0, 1, 11)]
        assert all(a < b for a, b in zip(grid, grid[1:]))


class TestAffinityModel:
    def test_validation(self):
        with pytest.raises(ValueError, match="unknown feature"):
            AffinityModel(("bias", "speed"), (0.0, 1.0))
        with pytest.raises(ValueError, match="coefficients for"):
            AffinityModel(("bias", "d_ae"), (0.0,))
        with pytest.raises(ValueError, match="duplicate"):
            AffinityModel(("bias", "bias"), (0.0, 1.0))
        with pytest.raises(ValueError, match="non-finite"):
            AffinityModel(("bias",), (math.nan,))

    def test_json_roundtrip(self, tmp_path):
        model = AffinityModel(NEARBY_FEATURES, (0.25, -1.5, 3.0, 0.0))
        path = tmp_path / "model.json"
        model.save(path)
        assert AffinityModel.load(path) == model

    def test_predict_dimension_mismatch(self):
        model = AffinityModel(("bias", "d_ae"), (0.0, 1.0))
        with pytest.raises(ValueError, match="dimension"):
            predict_p_same(model, np.ones(3))

    def test_zero_score_gives_half(self):
        model = AffinityModel(("bias", "d_ae"), (0.0, 0.0))
        assert pair_probability(model, 0.3, 5.0) == 0.5

    def test_probability_strictly_inside_unit_interval(self):
        model = AffinityModel(("bias", "d_ae"), (30.0, -50.0))
        for d in (0.0, 1.0, 100.0):
            p = pair_probability(model, 0.0, d)
            assert 0.0 < p < 1.0

    def test_sigmoid_monotone_in_score(self):
        model = AffinityModel(("bias", "d_ae"), (0.0, 1.0))
        probs = [pair_probability(model, 0.0, d) for d in np.linspace(-5, 5, 21)]
        assert all(a < b for a, b in zip(probs, probs[1:]))


class TestEdgeCost:
    def test_half_maps_to_exact_zero(self):
        assert edge_cost(0.5) == 0.0

    def test_frozen_high_confidence_value(self):
        # logit(0.9) = ln 9
        assert edge_cost(0.9) == pytest.approx(2.1972245773362196, abs=1e-12)

    def test_antisymmetry(self):
        for p in (0.01, 0.2, 0.4, 0.6, 0.9, 0.999):
            assert edge_cost(p) == pytest.approx(-edge_cost(1.0 - p), abs=1e-12)

    def test_clamped_and_finite_everywhere(self):
        assert math.isfinite(edge_cost(0.0))
        assert math.isfinite(edge_cost(1.0))
        assert edge_cost(0.0) == pytest.approx(math.log(1e-6 / (1 - 1e-6)), rel=1e-12)
        assert edge_cost(-3.0) == edge_cost(0.0)
        assert edge_cost(7.0) == edge_cost(1.0)

    def test_roundtrip_through_sigmoid(self):
        for p in (0.1, 0.5, 0.9):
            assert expit(edge_cost(p)) == pytest.approx(p, abs=1e-12)


class TestAssembleCosts:
    def _models(self):
        # confidently separated training pairs: close-and-overlapping vs far
        rng = np.random.default_rng(20)
        raw, labels = [], []
        for _ in range(40):
            raw.append((float(rng.uniform(0.75, 1.0)), float(rng.uniform(0.0, 0.5))))
            labels.append(1)
            raw.append((float(rng.uniform(0.0, 0.05)), float(rng.uniform(2.0, 4.0))))
            labels.append(0)
        nearby = fit_affinity_model(raw, labels, NEARBY_FEATURES)
        lifted = fit_affinity_model(raw, labels, LIFTED_FEATURES)
        return nearby, lifted

    def test_same_frame_edges_fixed_strong_cut(self):
        nearby, lifted = self._models()
        dets = [det(1), det(1, left=40.0), det(2)]
        instance = build_graph(dets, max_frame_gap=1)
        table = iou_match_table(dets)
        latents = np.zeros((3, 4))
        costed = assemble_costs(instance, dets, table, latents, nearby, lifted)
        by_pair = {(u, v): c for u, v, c in costed.edges}
        assert by_pair[(0, 1)] == edge_cost(0.0)

    def test_lifted_cost_ignores_overlap_perturbation(self):
        nearby, lifted = self._models()
        dets = [det(f) for f in range(1, 6)]
        instance = build_graph(dets, max_frame_gap=1, lifted_gaps=(4,))
        latents = np.arange(20, dtype=float).reshape(5, 4) * 0.05
        high = MatchTable({(0, 1): 0.9, (0, 4): 0.9})
        low = MatchTable({})
        costed_high = assemble_costs(instance, dets, high, latents, nearby, lifted)
        costed_low = assemble_costs(instance, dets, low, latents, nearby, lifted)
        assert costed_high.lifted_edges == costed_low.lifted_edges
        assert costed_high.edges != costed_low.edges

    def test_all_high_overlap_sequence_merges_to_one_cluster(self):
        nearby, lifted = self._models()
        dets = [det(f, left=0.5 * f) for f in range(1, 6)]
        instance = build_graph(dets, max_frame_gap=2)
        table = iou_match_table(dets)
        latents = np.zeros((5, 4))
        costed = assemble_costs(instance, dets, table, latents, nearby, lifted)
        assert all(c > 0 for _, _, c in costed.edges)
        partition, _ = solve_bruteforce(costed)
        assert len(partition.blocks()) == 1

    def test_missing_latents_rejected(self):
        nearby, lifted = self._models()
        dets = [det(1), det(2), det(3)]
        instance = build_graph(dets, max_frame_gap=1)
        with pytest.raises(ValueError, match="latents"):
            assemble_costs(instance, dets, MatchTable({}), np.zeros((2, 4)),
                           nearby, lifted)
