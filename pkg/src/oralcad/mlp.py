"""Two-layer sigmoid perceptron (15-10-2 by default) trained by per-sample backpropagation.

Output unit 0 scores "lesion", unit 1 scores "normal". Inputs are z-scored
with statistics taken from the training set and stored in the model.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError, TrainingError
from .features import N_FEATURES

LESION, NORMAL = "lesion", "normal"
LABELS = (LESION, NORMAL)
MODEL_FORMAT = "oralcad-mlp"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.1
    epochs: int = 500
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ContractError(f"learning_rate must lie in (0, 1], got {self.learning_rate}")
        if self.epochs < 1:
            raise ContractError(f"epochs must be positive, got {self.epochs}")
        if self.seed < 0:
            raise ContractError("seed must be unsigned")


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ContractError(f"label must be one of {LABELS}, got {self.label!r}")
        f = np.asarray(self.features, dtype=np.float64)
        if not np.all(np.isfinite(f)):
            raise ContractError("sample features must be finite")
        object.__setattr__(self, "features", f)


@dataclass(eq=False)
class MlpModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    feat_mean: np.ndarray
    feat_std: np.ndarray
    config: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.w1.shape[1], self.w1.shape[0], self.w2.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "MlpModel":
        return MlpModel(*(np.array(a) for a in (self.w1, self.b1, self.w2, self.b2,
                                                 self.feat_mean, self.feat_std)),
                        config=dict(self.config))

    def equals(self, other: "MlpModel") -> bool:
        """Bit-identical parameters and normalization statistics."""
        names = ("w1", "b1", "w2", "b2", "feat_mean", "feat_std")
        return all(
            getattr(self, n).shape == getattr(other, n).shape
            and getattr(self, n).tobytes() == getattr(other, n).tobytes()
            for n in names
        )


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def init_network(seed: int, n_in: int = N_FEATURES, n_hidden: int = 10, n_out: int = 2) -> MlpModel:
    """Uniform +-1/sqrt(fan_in) weights, zero biases, identity normalization."""
    rng = np.random.default_rng(seed)
    lim1, lim2 = 1.0 / np.sqrt(n_in), 1.0 / np.sqrt(n_hidden)
    return MlpModel(
        w1=rng.uniform(-lim1, lim1, size=(n_hidden, n_in)),
        b1=np.zeros(n_hidden),
        w2=rng.uniform(-lim2, lim2, size=(n_out, n_hidden)),
        b2=np.zeros(n_out),
        feat_mean=np.zeros(n_in),
        feat_std=np.ones(n_in),
    )


def normalize_features(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ContractError("features must be finite")
    return (x - model.feat_mean) / model.feat_std


def _activations(model: MlpModel, xn: np.ndarray):
    hidden = sigmoid(model.w1 @ xn + model.b1)
    out = sigmoid(model.w2 @ hidden + model.b2)
    return hidden, out


def forward(model: MlpModel, features) -> tuple[float, float]:
    """``(score_lesion, score_normal)`` for one raw feature vector."""
    _, out = _activations(model, normalize_features(model, features))
    return float(out[0]), float(out[1])


def predict_scores(model: MlpModel, features) -> np.ndarray:
    """Lesion scores for a batch of raw feature vectors, shape ``(n,)``."""
    xn = normalize_features(model, np.atleast_2d(features))
    hidden = sigmoid(xn @ model.w1.T + model.b1)
    return sigmoid(hidden @ model.w2.T + model.b2)[:, 0]


def target_for(label: str, n_out: int = 2) -> np.ndarray:
    t = np.zeros(n_out)
    t[LABELS.index(label)] = 1.0
    return t


def sample_loss(model: MlpModel, xn: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over the output units for one normalized input."""
    _, out = _activations(model, xn)
    return float(np.mean((out - target) ** 2))


def backprop(model: MlpModel, xn: np.ndarray, target: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and its gradient w.r.t. every weight and bias for one normalized input."""
    hidden, out = _activations(model, xn)
    err = out - target
    delta_out = (2.0 / out.size) * err * out * (1.0 - out)
    delta_hidden = (model.w2.T @ delta_out) * hidden * (1.0 - hidden)
    grads = {
        "w1": np.outer(delta_hidden, xn),
        "b1": delta_hidden,
        "w2": np.outer(delta_out, hidden),
        "b2": delta_out,
    }
    return float(np.mean(err * err)), grads


def train(samples, config: TrainingConfig = TrainingConfig(), n_hidden: int = 10) -> MlpModel:
    """Per-sample SGD on squared error with one-hot targets.

    Normalization statistics come from ``samples`` only. The result depends
    only on ``samples`` (in order) and ``config``.
    """
    samples = list(samples)
    labels = {s.label for s in samples}
    if labels != set(LABELS):
        raise TrainingError(f"training needs samples of both classes, got {sorted(labels) or 'none'}")
    X = np.stack([s.features for s in samples])
    T = np.stack([target_for(s.label) for s in samples])
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0

    model = init_network(config.seed, n_in=X.shape[1], n_hidden=n_hidden)
    model.feat_mean, model.feat_std = mean, std
    model.config = asdict(config)
    Xn = (X - mean) / std

    rng = np.random.default_rng(config.seed)
    lr = config.learning_rate
    scale = 2.0 / T.shape[1]
    w1, b1, w2, b2 = model.w1, model.b1, model.w2, model.b2
    n = len(samples)
    for _ in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else range(n)
        for i in order:
            x, t = Xn[i], T[i]
            h = 1.0 / (1.0 + np.exp(-(w1 @ x + b1)))
            o = 1.0 / (1.0 + np.exp(-(w2 @ h + b2)))
            d_out = scale * (o - t) * o * (1.0 - o)
            d_hid = (w2.T @ d_out) * h * (1.0 - h)
            w2 -= lr * np.outer(d_out, h)
            b2 -= lr * d_out
            w1 -= lr * np.outer(d_hid, x)
            b1 -= lr * d_hid
    return model


def accuracy(model: MlpModel, samples, threshold: float = 0.5) -> float:
    samples = list(samples)
    if not samples:
        return float("nan")
    scores = predict_scores(model, np.stack([s.features for s in samples]))
    predicted = np.where(scores >= threshold, LESION, NORMAL)
    return float(np.mean(predicted == np.array([s.label for s in samples])))


def classify(model: MlpModel, features, threshold: float = 0.5) -> tuple[str, float]:
    """Label ``lesion`` iff the lesion score reaches ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ContractError(f"threshold must lie in [0, 1], got {threshold}")
    score, _ = forward(model, features)
    return (LESION if score >= threshold else NORMAL), score


# -- persistence ------------------------------------------------------------

def model_to_dict(model: MlpModel) -> dict:
    n_in, n_hidden, n_out = model.shape
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "layers": [n_in, n_hidden, n_out],
        "activation": "sigmoid",
        "loss": "mse",
        "outputs": list(LABELS[:n_out]),
        "w1": model.w1.tolist(),
        "b1": model.b1.tolist(),
        "w2": model.w2.tolist(),
        "b2": model.b2.tolist(),
        "feat_mean": model.feat_mean.tolist(),
        "feat_std": model.feat_std.tolist(),
        "training": model.config,
    }


def save_model(model: MlpModel, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(model_to_dict(model), indent=1) + "\n")
    os.replace(tmp, path)


def load_model(path) -> MlpModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: not a readable model file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: missing '{MODEL_FORMAT}' header")
    if doc.get("version") != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {doc.get('version')!r}")
    try:
        n_in, n_hidden, n_out = doc["layers"]
        arrays = {k: np.asarray(doc[k], dtype=np.float64)
                  for k in ("w1", "b1", "w2", "b2", "feat_mean", "feat_std")}
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed model record ({exc})") from exc
    expected = {"w1": (n_hidden, n_in), "b1": (n_hidden,), "w2": (n_out, n_hidden),
                "b2": (n_out,), "feat_mean": (n_in,), "feat_std": (n_in,)}
    for k, shp in expected.items():
        if arrays[k].shape != shp:
            raise FormatError(f"{path}: {k} has shape {arrays[k].shape}, expected {shp}")
        if not np.all(np.isfinite(arrays[k])):
            raise FormatError(f"{path}: {k} contains non-finite values")
    if np.any(arrays["feat_std"] <= 0):
        raise FormatError(f"{path}: feat_std must be positive")
    return MlpModel(**arrays, config=dict(doc.get("training") or {}))
