import json

import numpy as np
import pytest

from futuresight import baselines, container, recognition
from futuresight.mixture import MixtureConfig, init_mixture, load_model, predict_all, save_model
from futuresight.nn import NetworkSpec


@pytest.fixture
def model():
    spec = NetworkSpec((5, 7, 9, 3), 0.5)
    m = init_mixture(spec, MixtureConfig(k=3, shared_layer_count=1, init_scale=0.7, bias_const=0.1), seed=11)
    # awkward values that a lossy decimal encoding would corrupt
    m.params.weights[0][0, 0] = 0.1 + 0.2
    m.params.biases[-1][0] = 1e-300
    return m


def test_mixture_round_trip_bitwise(tmp_path, model):
    f = tmp_path / "m.json"
    save_model(model, f, provenance={"seed": 11})
    back = load_model(f)
    assert back.spec == model.spec and back.config == model.config
    assert all(np.array_equal(a, b) for a, b in zip(back.tags, model.tags))
    assert all(np.array_equal(a, b) for a, b in zip(back.params.arrays(), model.params.arrays()))
    for x in np.random.default_rng(0).normal(size=(10, 5)):
        assert np.array_equal(predict_all(back, x), predict_all(model, x))
    doc = json.loads(f.read_text())
    assert doc["format"] == "futuresight-model-v1" and doc["type"] == "mixture-v1"


def test_truncated_file(tmp_path, model):
    f = tmp_path / "m.json"
    save_model(model, f)
    text = f.read_text()
    f.write_text(text[: len(text) // 2])
    with pytest.raises(container.ModelFormatError, match="malformed"):
        load_model(f)


def test_missing_file(tmp_path):
    with pytest.raises(container.ModelFormatError, match="cannot read"):
        load_model(tmp_path / "absent.json")


def edit(tmp_path, model, change):
    f = tmp_path / "m.json"
    save_model(model, f)
    doc = json.loads(f.read_text())
    change(doc)
    f.write_text(json.dumps(doc))
    return f


def test_mask_referencing_missing_network(tmp_path, model):
    def bump(doc):
        doc["masks"][1][4] = 3  # networks are 0..2
    with pytest.raises(container.ModelFormatError, match="hidden layer 2"):
        load_model(edit(tmp_path, model, bump))


def test_private_unit_in_shared_layer(tmp_path, model):
    def bump(doc):
        doc["masks"][0][0] = 1
    with pytest.raises(container.ModelFormatError, match="hidden layer 1"):
        load_model(edit(tmp_path, model, bump))


@pytest.mark.parametrize("change", [
    lambda d: d.__setitem__("format", "other-v9"),
    lambda d: d.__setitem__("type", "linear-regressor-v1"),
    lambda d: d["weights"][1].pop(),
    lambda d: d["biases"].pop(),
    lambda d: d.pop("masks"),
    lambda d: d["masks"][1].pop(),
    lambda d: d["spec"].__setitem__("layer_sizes", [5, 7, 9]),
    lambda d: d["weights"][0][0].__setitem__(0, "x"),
])
def test_corrupt_documents(tmp_path, model, change):
    with pytest.raises(container.ModelFormatError):
        load_model(edit(tmp_path, model, change))


def test_non_finite_weights_rejected(tmp_path, model):
    model.params.weights[2][0, 0] = np.inf
    f = tmp_path / "m.json"
    save_model(model, f)
    with pytest.raises(container.ModelFormatError, match="non-finite"):
        load_model(f)


def test_linear_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    reg = baselines.LinearRegressor(rng.normal(size=(3, 4)), rng.normal(size=3), 0.25)
    f = tmp_path / "l.json"
    baselines.save_linear(reg, f)
    back = baselines.load_linear(f)
    assert np.array_equal(back.W, reg.W) and np.array_equal(back.b, reg.b) and back.lam == 0.25
    with pytest.raises(container.ModelFormatError):
        load_model(f)


def test_knn_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    bank = baselines.NeighborBank(rng.normal(size=(6, 2)), rng.normal(size=(6, 3)))
    f = tmp_path / "k.json"
    baselines.save_knn(bank, 2, f)
    back, k = baselines.load_knn(f)
    assert k == 2
    assert np.array_equal(back.keys, bank.keys) and np.array_equal(back.values, bank.values)


def test_classifier_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    clf = recognition.LinearClassifier(["a", "b", "c"], rng.normal(size=(3, 4)), rng.normal(size=3),
                                       "logistic", 0.5, True)
    f = tmp_path / "c.json"
    recognition.save_classifier(clf, f)
    back = recognition.load_classifier(f)
    assert back.categories == clf.categories and back.loss == "logistic" and back.multi_label
    assert np.array_equal(back.W, clf.W) and np.array_equal(back.b, clf.b)
    doc = json.loads(f.read_text())
    doc["b"] = doc["b"][:2]
    f.write_text(json.dumps(doc))
    with pytest.raises(container.ModelFormatError):
        recognition.load_classifier(f)
