"""Elastic-net probe training, neuron ranking, and layer attribution."""

import numpy as np
import pytest

from embproc import (
    DataError,
    LayerSpan,
    NeuronRanking,
    OccurrenceRecord,
    OccurrenceShard,
    ProbeDataset,
    ProbeModel,
    build_dataset,
    layer_distribution,
    load_labels,
    predict,
    rank_neurons,
    select_salient,
    smooth_objective,
    train_probe,
)
from embproc.probe import write_histogram, write_histogram_svg, write_ranking

from oracles import central_difference


def two_class_dataset(seed=0, n=40, dim=6, planted=2, margin=0.0):
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n, dim))
    if margin:
        features[:, planted] += margin * np.sign(features[:, planted])
    labels = (features[:, planted] > 0).astype(np.int64)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    return ProbeDataset(features=features, labels=labels, label_names=["neg", "pos"])


class TestSmoothObjective:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(50)
        n, dim, classes = 12, 5, 3
        features = rng.normal(size=(n, dim))
        labels = rng.integers(0, classes, size=n)
        labels[:classes] = np.arange(classes)
        weights = rng.normal(size=(classes, dim)) * 0.5
        bias = rng.normal(size=classes) * 0.1
        l2 = 1e-3

        _, grad_w, grad_b = smooth_objective(weights, bias, features, labels, l2)
        fd_w = central_difference(
            lambda w: smooth_objective(w, bias, features, labels, l2)[0], weights
        )
        fd_b = central_difference(
            lambda b: smooth_objective(weights, b, features, labels, l2)[0], bias
        )
        scale_w = np.maximum(np.abs(fd_w), 1e-8)
        scale_b = np.maximum(np.abs(fd_b), 1e-8)
        assert (np.abs(grad_w - fd_w) / scale_w).max() <= 1e-5
        assert (np.abs(grad_b - fd_b) / scale_b).max() <= 1e-5

    def test_loss_at_zero_is_log_classes(self):
        ds = two_class_dataset()
        loss, _, _ = smooth_objective(
            np.zeros((2, ds.dim)), np.zeros(2), ds.features, ds.labels, 0.0
        )
        assert loss == pytest.approx(np.log(2.0), abs=1e-12)


class TestTrainProbe:
    def test_planted_feature_dominates_and_separates(self):
        # labels follow feature 3 with a 0.3 margin, so the regularized
        # optimum still classifies every sample correctly
        ds = two_class_dataset(seed=51, n=200, dim=8, planted=3, margin=0.3)
        model = train_probe(ds, l1=1e-3, l2=1e-4, epochs=200, lr=0.5)
        accuracy = float((predict(model, ds.features) == ds.labels).mean())
        assert accuracy >= 0.99
        column_mass = np.abs(model.weights).sum(axis=0)
        assert int(np.argmax(column_mass)) == 3

    def test_unregularized_gradient_vanishes_at_convergence(self):
        # an XOR-pattern labeling is not linearly separable (the class
        # hulls cross), so the optimum is finite and reachable
        features = np.array([[1.5, 1.0], [1.0, -1.2], [-0.8, 0.9], [-1.3, -1.1]])
        labels = np.array([1, 0, 0, 1])
        ds = ProbeDataset(features=features, labels=labels, label_names=["a", "b"])
        model = train_probe(ds, l1=0.0, l2=0.0, epochs=500, lr=0.5)
        _, grad_w, grad_b = smooth_objective(
            model.weights, model.bias, ds.features, ds.labels, 0.0
        )
        assert max(np.abs(grad_w).max(), np.abs(grad_b).max()) < 1e-4

    def test_huge_l1_zeroes_weights_and_predicts_majority(self):
        rng = np.random.default_rng(52)
        features = rng.normal(size=(30, 4))
        labels = np.array([0] * 20 + [1] * 10)
        ds = ProbeDataset(features=features, labels=labels, label_names=["maj", "min"])
        model = train_probe(ds, l1=10.0, l2=0.0, epochs=50, lr=0.5)
        assert np.all(model.weights == 0.0)
        assert np.all(predict(model, ds.features) == 0)

    def test_loss_history_is_monotone(self):
        ds = two_class_dataset(seed=53, n=60, dim=5)
        model = train_probe(ds, epochs=100, lr=2.0)
        drops = np.diff(model.loss_history)
        assert len(model.loss_history) == 101
        assert drops.max() <= 1e-12
        assert model.final_loss == model.loss_history[-1]

    def test_training_is_deterministic(self):
        ds = two_class_dataset(seed=54)
        a = train_probe(ds, epochs=50)
        b = train_probe(ds, epochs=50)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)

    def test_parameter_validation(self):
        ds = two_class_dataset()
        with pytest.raises(DataError):
            train_probe(ds, lr=0.0)
        with pytest.raises(DataError):
            train_probe(ds, epochs=0)
        with pytest.raises(DataError):
            train_probe(ds, l1=-1.0)

    def test_dataset_validation(self):
        with pytest.raises(DataError):
            ProbeDataset(features=np.zeros((0, 2)), labels=np.zeros(0), label_names=["a", "b"])
        with pytest.raises(DataError):
            ProbeDataset(
                features=np.zeros((2, 2)), labels=np.array([0, 0]), label_names=["a", "b"]
            )
        with pytest.raises(DataError):
            ProbeDataset(
                features=np.array([[np.nan, 0.0]]), labels=np.array([0]), label_names=["a", "b"]
            )

    def test_model_rejects_rising_loss_history(self):
        with pytest.raises(DataError, match="increased"):
            ProbeModel(
                weights=np.zeros((2, 2)),
                bias=np.zeros(2),
                l1=0.0,
                l2=0.0,
                epochs=1,
                final_loss=1.0,
                seed=0,
                loss_history=[0.5, 1.0],
            )


class TestRanking:
    def test_worked_example(self):
        model = ProbeModel(
            weights=np.array([[0.0, 2.0], [0.0, -3.0]]),
            bias=np.zeros(2),
            l1=0.0,
            l2=0.0,
            epochs=1,
            final_loss=0.0,
            seed=0,
        )
        ranking = rank_neurons(model)
        assert ranking.entries == [(1, 5.0), (0, 0.0)]

    def test_all_zero_weights_keep_identity_order(self):
        model = ProbeModel(
            weights=np.zeros((2, 4)),
            bias=np.zeros(2),
            l1=0.0,
            l2=0.0,
            epochs=1,
            final_loss=0.0,
            seed=0,
        )
        assert [i for i, _ in rank_neurons(model).entries] == [0, 1, 2, 3]

    def test_scaling_weights_preserves_order(self):
        rng = np.random.default_rng(55)
        weights = rng.normal(size=(3, 7))
        base = ProbeModel(
            weights=weights, bias=np.zeros(3), l1=0, l2=0, epochs=1, final_loss=0.0, seed=0
        )
        doubled = ProbeModel(
            weights=2 * weights, bias=np.zeros(3), l1=0, l2=0, epochs=1, final_loss=0.0, seed=0
        )
        assert [i for i, _ in rank_neurons(base).entries] == [
            i for i, _ in rank_neurons(doubled).entries
        ]

    def test_ranking_validation(self):
        with pytest.raises(DataError, match="non-increasing"):
            NeuronRanking(entries=[(0, 1.0), (1, 2.0)])
        with pytest.raises(DataError, match="duplicate"):
            NeuronRanking(entries=[(0, 2.0), (0, 1.0)])


class TestSelectSalient:
    def ranking(self, scores):
        return NeuronRanking(entries=[(i, float(s)) for i, s in enumerate(scores)])

    def test_prefix_sum_example(self):
        assert select_salient(self.ranking([5.0, 3.0, 2.0]), mass=0.8) == [0, 1]

    def test_full_mass_excludes_trailing_zeros(self):
        assert select_salient(self.ranking([5.0, 3.0, 0.0, 0.0]), mass=1.0) == [0, 1]

    def test_singleton(self):
        for mass in (0.01, 0.5, 1.0):
            assert select_salient(self.ranking([2.0]), mass=mass) == [0]

    def test_zero_total_is_error(self):
        with pytest.raises(DataError, match="zero"):
            select_salient(self.ranking([0.0, 0.0]), mass=0.5)

    def test_mass_out_of_range_is_error(self):
        with pytest.raises(DataError):
            select_salient(self.ranking([1.0]), mass=0.0)
        with pytest.raises(DataError):
            select_salient(self.ranking([1.0]), mass=1.5)


class TestLayerDistribution:
    layout = [LayerSpan(layer=0, offset=0, width=3), LayerSpan(layer=1, offset=3, width=3)]

    def test_span_arithmetic(self):
        assert layer_distribution([0, 1, 4], self.layout) == {0: 2, 1: 1}

    def test_empty_selection_keeps_all_layers(self):
        assert layer_distribution([], self.layout) == {0: 0, 1: 0}

    def test_full_selection_counts_equal_widths(self):
        assert layer_distribution(list(range(6)), self.layout) == {0: 3, 1: 3}

    def test_counts_sum_to_selection_size(self):
        rng = np.random.default_rng(56)
        selected = list(rng.choice(6, size=4, replace=False))
        hist = layer_distribution(selected, self.layout)
        assert sum(hist.values()) == len(selected)

    def test_out_of_range_index_is_error(self):
        with pytest.raises(DataError, match="outside"):
            layer_distribution([6], self.layout)

    def test_span_validation(self):
        with pytest.raises(DataError):
            LayerSpan(layer=-1, offset=0, width=1)
        with pytest.raises(DataError):
            LayerSpan(layer=0, offset=0, width=0)
        with pytest.raises(DataError, match="overlap"):
            ProbeDataset(
                features=np.zeros((2, 4)),
                labels=np.array([0, 1]),
                label_names=["a", "b"],
                layout=[LayerSpan(0, 0, 3), LayerSpan(1, 2, 2)],
            )
        with pytest.raises(DataError, match="covers"):
            ProbeDataset(
                features=np.zeros((2, 4)),
                labels=np.array([0, 1]),
                label_names=["a", "b"],
                layout=[LayerSpan(0, 0, 3)],
            )


def shard_of(layer, rows):
    """rows: list of (word, sid, vector)."""
    records = [
        OccurrenceRecord(word=w, sentence_id=s, vector=np.asarray(v, dtype=np.float64))
        for w, s, v in rows
    ]
    return OccurrenceShard(layer=layer, dim=len(rows[0][2]), records=records)


class TestLabelJoin:
    def test_load_labels_round_trip(self, tmp_path):
        path = tmp_path / "labels.tsv"
        path.write_text("cat\t0\tNOUN\nruns\t0\tVERB\n\ncat\t1\tNOUN\n", encoding="utf-8")
        labels = load_labels(path)
        assert labels == {("cat", 0): "NOUN", ("runs", 0): "VERB", ("cat", 1): "NOUN"}

    def test_load_labels_conflict_is_error(self, tmp_path):
        path = tmp_path / "labels.tsv"
        path.write_text("cat\t0\tNOUN\ncat\t0\tVERB\n", encoding="utf-8")
        with pytest.raises(DataError, match="conflicting"):
            load_labels(path)

    def test_load_labels_repeated_identical_line_is_fine(self, tmp_path):
        path = tmp_path / "labels.tsv"
        path.write_text("cat\t0\tNOUN\ncat\t0\tNOUN\n", encoding="utf-8")
        assert load_labels(path) == {("cat", 0): "NOUN"}

    def test_load_labels_format_errors_name_lines(self, tmp_path):
        path = tmp_path / "labels.tsv"
        path.write_text("cat\t0\n", encoding="utf-8")
        with pytest.raises(DataError, match=r"labels\.tsv:1"):
            load_labels(path)
        path.write_text("cat\tzero\tNOUN\n", encoding="utf-8")
        with pytest.raises(DataError, match=r"labels\.tsv:1"):
            load_labels(path)
        path.write_text("\n", encoding="utf-8")
        with pytest.raises(DataError, match="no labels"):
            load_labels(path)

    def test_build_dataset_concatenates_layers_in_order(self):
        shard0 = shard_of(0, [("cat", 0, [1.0, 2.0]), ("dog", 1, [3.0, 4.0])])
        shard1 = shard_of(1, [("dog", 1, [30.0, 40.0]), ("cat", 0, [10.0, 20.0])])
        labels = {("cat", 0): "NOUN", ("dog", 1): "ANIMAL"}
        ds = build_dataset([shard1, shard0], labels)
        assert ds.dim == 4
        assert ds.layout == [LayerSpan(0, 0, 2), LayerSpan(1, 2, 2)]
        # keys sorted: ("cat",0) then ("dog",1)
        assert np.array_equal(ds.features[0], [1.0, 2.0, 10.0, 20.0])
        assert np.array_equal(ds.features[1], [3.0, 4.0, 30.0, 40.0])
        assert ds.label_names == ["ANIMAL", "NOUN"]
        assert list(ds.labels) == [1, 0]

    def test_build_dataset_ignores_unlabeled_occurrences(self):
        shard = shard_of(
            0, [("cat", 0, [1.0]), ("dog", 1, [2.0]), ("stray", 9, [9.0])]
        )
        labels = {("cat", 0): "a", ("dog", 1): "b"}
        ds = build_dataset([shard], labels)
        assert ds.features.shape == (2, 1)

    def test_build_dataset_multiplicity_mismatch_is_error(self):
        shard0 = shard_of(0, [("cat", 0, [1.0]), ("cat", 0, [2.0]), ("dog", 1, [3.0])])
        shard1 = shard_of(1, [("cat", 0, [5.0]), ("dog", 1, [6.0])])
        labels = {("cat", 0): "a", ("dog", 1): "b"}
        with pytest.raises(DataError, match="multiplicity"):
            build_dataset([shard0, shard1], labels)

    def test_build_dataset_no_matches_is_error(self):
        shard = shard_of(0, [("cat", 0, [1.0])])
        with pytest.raises(DataError, match="matched"):
            build_dataset([shard], {("other", 5): "x"})

    def test_build_dataset_single_class_is_error(self):
        shard = shard_of(0, [("cat", 0, [1.0]), ("dog", 1, [2.0])])
        with pytest.raises(DataError, match="2 classes"):
            build_dataset([shard], {("cat", 0): "same", ("dog", 1): "same"})

    def test_build_dataset_duplicate_layer_is_error(self):
        shard = shard_of(0, [("cat", 0, [1.0]), ("dog", 1, [2.0])])
        with pytest.raises(DataError, match="duplicate layer"):
            build_dataset([shard, shard], {("cat", 0): "a", ("dog", 1): "b"})


class TestArtifacts:
    def test_write_ranking_csv(self, tmp_path):
        ranking = NeuronRanking(entries=[(4, 5.0), (1, 2.5), (0, 0.0)])
        layout = [LayerSpan(0, 0, 3), LayerSpan(1, 3, 3)]
        path = tmp_path / "ranking.csv"
        write_ranking(ranking, layout, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines == [
            "neuron,layer,importance",
            "4,1,5.0",
            "1,0,2.5",
            "0,0,0.0",
        ]

    def test_write_histogram_csv_and_svg(self, tmp_path):
        hist = {1: 3, 0: 5}
        csv_path = tmp_path / "histogram.csv"
        write_histogram(hist, csv_path)
        assert csv_path.read_text(encoding="utf-8").splitlines() == [
            "layer,count",
            "0,5",
            "1,3",
        ]
        svg_path = tmp_path / "histogram.svg"
        write_histogram_svg(hist, svg_path)
        svg = svg_path.read_text(encoding="utf-8")
        assert svg.count("<rect") >= 2
        assert 'viewBox="0 0 800 500"' in svg
