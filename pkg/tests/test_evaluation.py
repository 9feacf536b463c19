import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import toy_dataset
from flightbp.errors import DimensionMismatch, EmptyDataset, EmptyMatrix, IndexOutOfRange
from flightbp.evaluation import (
    ConfusionMatrix,
    accuracy,
    confusion_matrix,
    decide,
    evaluate,
    parse_report,
    predict_class,
    render_report,
    report_from_matrix,
)
from flightbp.nn_core import LayerParams, NetworkParams, init_network

BINARY = ("NonFatal", "Fatal")


def constant_net(value, width=2):
    """Network whose tanh output is ``value`` for every input."""
    return NetworkParams(
        (LayerParams(np.zeros((1, width)), [0.0]), LayerParams([[0.0]], [np.arctanh(value)])), width
    )


def sign_net():
    """Outputs tanh(100 * x0): the sign of the first feature, for +/-1-coded data."""
    return NetworkParams((LayerParams([[1.0, 0.0]], [0.0], "identity"), LayerParams([[100.0]], [0.0])), 2)


def test_decide_rules():
    assert decide([0.0]) == 1
    assert decide([-1e-12]) == 0
    assert decide([0.2, 0.9, -0.1]) == 1
    assert decide([0.5, 0.5]) == 0
    with pytest.raises(DimensionMismatch):
        decide([])


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=6))
def test_decide_is_total(outputs):
    k = decide(outputs)
    assert 0 <= k < max(len(outputs), 2)


def test_predict_class_checks_width():
    with pytest.raises(DimensionMismatch):
        predict_class(init_network([3, 2, 1], seed=0), [1.0])


def test_confusion_matrix_examples():
    assert confusion_matrix([0, 1, 0], [0, 1, 0], 2).to_list() == [[2, 0], [0, 1]]
    assert confusion_matrix([0, 0], [1, 1], 2).to_list() == [[0, 2], [0, 0]]
    # pairs (a,p): (0,0) (1,1) (1,0) (0,1) (1,1)
    assert confusion_matrix([0, 1, 1, 0, 1], [0, 1, 0, 1, 1], 2).to_list() == [[1, 1], [1, 2]]


def test_confusion_matrix_errors():
    with pytest.raises(DimensionMismatch):
        confusion_matrix([0], [0, 1], 2)
    with pytest.raises(IndexOutOfRange):
        confusion_matrix([0, 2], [0, 1], 2)
    with pytest.raises(IndexOutOfRange):
        confusion_matrix([0], [-1], 2)


def test_accuracy_examples():
    m = lambda rows: ConfusionMatrix(np.array(rows), BINARY)
    assert accuracy(m([[2, 0], [0, 1]])) == 1.0
    assert accuracy(m([[0, 2], [0, 0]])) == 0.0
    assert accuracy(m([[1, 1], [1, 2]])) == 3 / 5
    with pytest.raises(EmptyMatrix):
        accuracy(m([[0, 0], [0, 0]]))


pairs = st.integers(2, 5).flatmap(
    lambda k: st.tuples(
        st.just(k),
        st.lists(st.tuples(st.integers(0, k - 1), st.integers(0, k - 1)), min_size=1, max_size=60),
    )
)


@given(pairs, st.randoms(use_true_random=False))
@settings(max_examples=300)
def test_matrix_is_permutation_invariant_and_conserves_marginals(case, rnd):
    k, ps = case
    actual, predicted = zip(*ps)
    m = confusion_matrix(actual, predicted, k)
    shuffled = list(ps)
    rnd.shuffle(shuffled)
    a2, p2 = zip(*shuffled)
    assert np.array_equal(confusion_matrix(a2, p2, k).counts, m.counts)
    assert m.counts.sum(axis=1).tolist() == [actual.count(c) for c in range(k)]
    assert m.counts.sum(axis=0).tolist() == [predicted.count(c) for c in range(k)]


def test_evaluate_perfect_predictor():
    data = toy_dataset([[1, 0], [-1, 0], [1, 5], [-1, 5]], [[1], [-1], [1], [-1]])
    report = evaluate(sign_net(), data, BINARY)
    assert report.accuracy == 1.0
    assert report.confusion.to_list() == [[2, 0], [0, 2]]
    assert report.precision.tolist() == [1.0, 1.0] and report.recall.tolist() == [1.0, 1.0]


def test_evaluate_constant_predictor_on_balanced_set():
    data = toy_dataset([[0, 0]] * 6, [[1], [-1]] * 3)
    report = evaluate(constant_net(0.3), data, BINARY)
    assert report.accuracy == 0.5
    assert report.empty_predicted == ("NonFatal",)
    assert report.precision[0] == 0.0


def test_evaluate_errors():
    with pytest.raises(EmptyDataset):
        evaluate(constant_net(0.1), toy_dataset(np.zeros((0, 2)), np.zeros((0, 1))), BINARY)
    with pytest.raises(DimensionMismatch):
        evaluate(constant_net(0.1), toy_dataset(np.zeros((2, 3)), np.ones((2, 1))), BINARY)


def test_multiclass_evaluation():
    net = NetworkParams((LayerParams(np.eye(3), np.zeros(3), "identity"), LayerParams(np.eye(3), np.zeros(3))), 3)
    data = toy_dataset(np.eye(3), 2 * np.eye(3) - 1)
    report = evaluate(net, data, ("A", "B", "C"))
    assert report.accuracy == 1.0 and report.confusion.to_list() == np.eye(3, dtype=int).tolist()


def test_render_text_report():
    report = report_from_matrix(confusion_matrix([0, 1], [0, 1], 2, BINARY))
    text = render_report(report)
    assert "accuracy: 1.0000" in text
    report = report_from_matrix(confusion_matrix([0, 1, 2, 2], [0, 2, 2, 1], 3, ("Minor", "Serious", "Fatal")))
    lines = render_report(report).splitlines()
    grid = [l for l in lines if l.split() and l.split()[0] in ("Minor", "Serious", "Fatal")][:3]
    assert [l.split()[0] for l in grid] == ["Minor", "Serious", "Fatal"]
    assert [l.split()[1:] for l in grid] == [["1", "0", "0"], ["0", "0", "1"], ["0", "1", "1"]]


@given(pairs)
@settings(max_examples=100)
def test_machine_readable_report_round_trip(case):
    k, ps = case
    actual, predicted = zip(*ps)
    names = tuple(f"class{i}" for i in range(k))
    report = report_from_matrix(confusion_matrix(actual, predicted, k, names))
    parsed = parse_report(render_report(report, machine_readable=True))
    assert parsed["confusion"] == report.confusion.to_list()
    assert parsed["accuracy"] == report.accuracy
    assert parsed["classes"] == list(names)
    assert parsed["precision"] == report.precision.tolist()
