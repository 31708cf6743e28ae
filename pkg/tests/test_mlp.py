import json

import numpy as np
import pytest

from oralcad.errors import ContractError, FormatError, TrainingError
from oralcad.mlp import (
    LESION,
    NORMAL,
    LabeledSample,
    TrainingConfig,
    accuracy,
    backprop,
    classify,
    forward,
    init_network,
    load_model,
    predict_scores,
    sample_loss,
    save_model,
    target_for,
    train,
)


def numeric_gradient(model, xn, target, h=1e-3):
    """Five-point central differences; plain two-point differences lose
    about 1e-11 to roundoff, which swamps gradients near 1e-8."""
    grads = {}
    for name, arr in model.params().items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            f = []
            for step in (2, 1, -1, -2):
                arr[idx] = old + step * h
                f.append(sample_loss(model, xn, target))
            arr[idx] = old
            g[idx] = (-f[0] + 8 * f[1] - 8 * f[2] + f[3]) / (12 * h)
        grads[name] = g
    return grads


def gradient_rel_error(model, xn, target) -> float:
    """Largest ``|a - n| / max(|a| + |n|, 1e-8)`` over all parameters."""
    _, ana = backprop(model, xn, target)
    num = numeric_gradient(model, xn, target)
    worst = 0.0
    for k in ana:
        err = np.abs(ana[k] - num[k]) / np.maximum(np.abs(ana[k]) + np.abs(num[k]), 1e-8)
        worst = max(worst, float(err.max()))
    return worst


def random_case(rng):
    n_in, n_hid, n_out = (int(v) for v in rng.integers(1, [16, 12, 4]))
    model = init_network(int(rng.integers(0, 2 ** 31)), n_in, n_hid, n_out)
    for arr in model.params().values():
        arr += rng.normal(0, 0.5, arr.shape)
    return model, rng.normal(0, 1.5, n_in), rng.random(n_out)


def separable(n, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, (n, 15))
    w = rng.normal(0, 1, 15)
    margin = x @ w
    keep = np.abs(margin) > 0.3
    return [LabeledSample(xi * 10 + 3, LESION if m > 0 else NORMAL) for xi, m in zip(x[keep], margin[keep])]


def test_init_is_seeded_and_bounded():
    a, b = init_network(4), init_network(4)
    assert a.equals(b)
    assert a.shape == (15, 10, 2)
    assert np.all(np.abs(a.w1) <= 1 / np.sqrt(15)) and not a.b1.any()
    assert not init_network(5).equals(a)


def test_gradient_check_small():
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert gradient_rel_error(*random_case(rng)) <= 1e-4


def test_loss_is_mean_over_outputs():
    m = init_network(0, 3, 2, 2)
    x = np.array([0.1, -0.2, 0.3])
    lesion, normal = forward(m, x)
    expect = ((lesion - 1) ** 2 + normal ** 2) / 2
    assert sample_loss(m, x, target_for(LESION)) == pytest.approx(expect)


def test_target_encoding():
    assert target_for(LESION).tolist() == [1.0, 0.0]
    assert target_for(NORMAL).tolist() == [0.0, 1.0]


def test_separable_set_trains_well_and_reproducibly():
    data = separable(300)
    cfg = TrainingConfig(learning_rate=0.1, epochs=60, seed=3)
    m1 = train(data, cfg)
    m2 = train(data, cfg)
    assert accuracy(m1, data) >= 0.95
    assert m1.equals(m2)
    assert not train(data, TrainingConfig(learning_rate=0.1, epochs=60, seed=4)).equals(m1)


def test_xor_needs_the_hidden_layer():
    base = [([0, 0], NORMAL), ([1, 1], NORMAL), ([0, 1], LESION), ([1, 0], LESION)]
    data = [LabeledSample(np.array(x, float), y) for x, y in base * 10]
    m = train(data, TrainingConfig(learning_rate=0.5, epochs=2000, seed=1), n_hidden=4)
    assert accuracy(m, data) == 1.0


def test_training_needs_both_classes():
    with pytest.raises(TrainingError):
        train([LabeledSample(np.zeros(15), LESION)] * 3)
    with pytest.raises(TrainingError):
        train([])


def test_constant_feature_does_not_break_normalization():
    data = separable(100)
    data = [LabeledSample(np.concatenate([s.features[:14], [5.0]]), s.label) for s in data]
    m = train(data, TrainingConfig(epochs=5))
    assert m.feat_std[14] == 1.0
    assert np.all(np.isfinite(predict_scores(m, np.stack([s.features for s in data]))))


def test_batch_scores_match_single_forward():
    data = separable(40)
    m = train(data, TrainingConfig(epochs=3))
    X = np.stack([s.features for s in data])
    batch = predict_scores(m, X)
    single = [forward(m, x)[0] for x in X]
    assert np.allclose(batch, single, rtol=0, atol=1e-15)


def test_classify_threshold():
    m = train(separable(50), TrainingConfig(epochs=3))
    x = separable(50)[0].features
    label, score = classify(m, x, 0.0)
    assert label == LESION
    assert classify(m, x, 1.0)[0] == (LESION if score >= 1.0 else NORMAL)
    with pytest.raises(ContractError):
        classify(m, x, 1.5)


def test_bad_inputs():
    with pytest.raises(ContractError):
        LabeledSample(np.zeros(15), "maybe")
    with pytest.raises(ContractError):
        LabeledSample(np.array([np.nan] * 15), LESION)
    with pytest.raises(ContractError):
        forward(init_network(0), np.full(15, np.inf))
    with pytest.raises(ContractError):
        TrainingConfig(learning_rate=0)
    with pytest.raises(ContractError):
        TrainingConfig(epochs=0)


def test_save_load_roundtrip_is_exact(tmp_path):
    m = train(separable(60), TrainingConfig(epochs=4, seed=9))
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.equals(m)
    assert back.config["seed"] == 9
    save_model(back, tmp_path / "m2.json")
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_load_rejects_damaged_files(tmp_path):
    m = init_network(0)
    p = tmp_path / "m.json"
    save_model(m, p)
    text = p.read_text()
    (tmp_path / "trunc.json").write_text(text[: len(text) // 2])
    with pytest.raises(FormatError):
        load_model(tmp_path / "trunc.json")
    doc = json.loads(text)
    doc["w1"] = doc["w1"][:-1]
    (tmp_path / "shape.json").write_text(json.dumps(doc))
    with pytest.raises(FormatError, match="w1"):
        load_model(tmp_path / "shape.json")
    doc = json.loads(text)
    doc["format"] = "other"
    (tmp_path / "hdr.json").write_text(json.dumps(doc))
    with pytest.raises(FormatError):
        load_model(tmp_path / "hdr.json")
