"""Python-surface smoke tests against the compiled module."""

import json
import math

import numpy as np
import pytest

import mablab


def test_build_validate_shapes():
    g = mablab.build_architecture("alexnet-small", 10)
    assert mablab.validate(g) == []
    shapes = mablab.infer_shapes(g)
    assert shapes["output"] == [10]
    assert g.node_count() > 10


def test_serialize_round_trip():
    g = mablab.build_architecture("vgg11", 10)
    text = mablab.serialize(g)
    back = mablab.deserialize(text)
    assert mablab.serialize(back) == text


def test_detector_closed_form():
    img = np.zeros((3, 9, 9))
    triggered = mablab.apply_trigger(img, pattern="checkerboard")
    dmap = mablab.robust_detector(triggered)
    peak = dmap[0, 6, 0]
    assert peak == pytest.approx(1.24e4, rel=5e-3)

    white = mablab.apply_trigger(img, pattern="white-box")
    wmap = mablab.robust_detector(white)
    assert peak / wmap[0, 6, 0] > 1e3

    assert mablab.robust_detector(img).max() == 0.0


def test_injection_is_flagged_and_neutral():
    host = mablab.build_architecture("alexnet-small", 4, input_size=16)
    evil = mablab.inject_mab(host, mode="robust")
    assert evil.node_count() == host.node_count() + 9

    report = json.loads(mablab.scan_graph(evil))
    assert report["verdict"] == "suspicious"
    assert any(f["kind"] == "io-path" for f in report["findings"])
    assert json.loads(mablab.scan_graph(host))["verdict"] == "clean"

    params = mablab.init_params(host, 7)
    gray = np.zeros((3, 16, 16))
    a = mablab.forward_logits(host, params, gray)
    b = mablab.forward_logits(evil, params, gray)
    assert (a == b).all()


def test_train_eval_deterministic():
    train_set = mablab.make_synthetic(3, 45, 5, image_size=16)
    test_set = mablab.make_synthetic(3, 24, 6, image_size=16)
    g = mablab.build_architecture("alexnet-small", 3, input_size=16)
    params1, hist1 = mablab.train(g, train_set, test_set, epochs=1, seed=3)
    params2, hist2 = mablab.train(g, train_set, test_set, epochs=1, seed=3)
    assert hist1 == hist2
    m = mablab.evaluate(g, params1, test_set, trigger="checkerboard")
    assert 0.0 <= m.task_accuracy <= 1.0
    assert m.triggered_accuracy_ratio == pytest.approx(
        m.task_accuracy / m.triggered_accuracy
        if m.triggered_accuracy
        else math.inf
    )


def test_poison_counts():
    ds = mablab.make_synthetic(4, 50, 9, image_size=16)
    poisoned = mablab.poison_dataset(ds, fraction=0.2, target=1)
    changed = sum(
        1 for i in range(len(ds)) if not (ds.image(i) == poisoned.image(i)).all()
    )
    assert changed == 10
    assert sum(1 for i in range(len(ds)) if poisoned.label(i) == 1) >= 10


def test_ks_two_sample():
    d, p = mablab.ks_two_sample([1, 2, 3, 4], [2, 3, 4, 5])
    assert d == 0.25
    d, p = mablab.ks_two_sample([0, 0, 0], [1, 1, 1])
    assert d == 1.0
    assert p < 0.2


def test_errors_surface_as_python_exceptions():
    with pytest.raises(mablab.MabError):
        mablab.build_architecture("unknown", 4)
    with pytest.raises(mablab.MabError):
        mablab.deserialize("{bad json")
