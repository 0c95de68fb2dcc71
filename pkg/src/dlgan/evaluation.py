"""Post-hoc quality metrics for synthetic windows.

Discriminative score: a recurrent classifier is trained to separate real
from synthetic windows; the score is |held-out accuracy - 0.5| (lower is
better). Predictive score: a recurrent one-step-ahead predictor is trained
on the synthetic set and evaluated on the real set by mean absolute error
in normalized units (train-on-synthetic, test-on-real; lower is better).
Both posterior models use 2 recurrent layers with hidden width
max(8, 2*M), 20 epochs, batch 64. The t-SNE export flattens windows,
embeds both sets into 2-D, and writes x,y,label rows.
"""

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import as_window_array
from .errors import InsufficientData, ShapeMismatch
from .nn import GRU, Adam, Linear, Module, no_grad
from .nn import tensor as T
from .nn.tensor import Tensor

POSTERIOR_EPOCHS = 20
POSTERIOR_BATCH = 64


@dataclass
class MetricsReport:
    discriminative_score: float
    predictive_score: float
    discriminative_std: float = 0.0
    predictive_std: float = 0.0
    trtr_score: float = None
    tsne_path: str = None
    dataset: str = ""
    seed: int = 0
    real_windows: int = 0
    synthetic_windows: int = 0
    metric_seeds: int = 1
    error_unit: str = "normalized"
    ablation: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")
        return path


class _RecurrentClassifier(Module):
    def __init__(self, n_features, hidden, rng):
        self.rnn = GRU(n_features, hidden, 2, rng, np.float32)
        self.head = Linear(hidden, 1, rng, np.float32)

    def __call__(self, x):
        _, last = self.rnn(x, return_sequence=False)
        return self.head(last)


class _RecurrentPredictor(Module):
    def __init__(self, n_features, hidden, rng):
        self.rnn = GRU(n_features, hidden, 2, rng, np.float32)
        self.head = Linear(hidden, n_features, rng, np.float32)

    def __call__(self, x):
        seq, _ = self.rnn(x)
        return T.sigmoid(self.head(seq))


def _prepare_pair(real, synth, seed, minimum=20):
    real = as_window_array(real, dtype=np.float32)
    synth = as_window_array(synth, dtype=np.float32)
    if real.shape[1:] != synth.shape[1:]:
        raise ShapeMismatch(f"window shapes differ: {real.shape[1:]} vs {synth.shape[1:]}")
    if len(real) < minimum or len(synth) < minimum:
        raise InsufficientData(
            f"need >= {minimum} windows per side, got {len(real)}/{len(synth)}")
    rng = np.random.default_rng([seed, 0xE7A1])
    count = min(len(real), len(synth))
    real = real[rng.choice(len(real), count, replace=False)]
    synth = synth[rng.choice(len(synth), count, replace=False)]
    return real, synth, rng


def discriminative_score(real, synth, seed=0, epochs=POSTERIOR_EPOCHS):
    """|held-out accuracy - 0.5| of a classifier separating real (label 1)
    from synthetic (label 0) windows; 80/20 train/test split."""
    real, synth, rng = _prepare_pair(real, synth, seed)
    data = np.concatenate([real, synth])
    labels = np.concatenate([np.ones(len(real)), np.zeros(len(synth))])
    order = rng.permutation(len(data))
    data, labels = data[order], labels[order]
    n_train = int(len(data) * 0.8)
    m = data.shape[2]
    model = _RecurrentClassifier(m, max(8, 2 * m), rng)
    opt = Adam(model.parameters(), lr=1e-3)
    for _ in range(epochs):
        for start in range(0, n_train, POSTERIOR_BATCH):
            stop = min(start + POSTERIOR_BATCH, n_train)
            xb = data[start:stop]
            yb = labels[start:stop]
            logits = model(Tensor(xb))
            loss = T.bce_with_logits(logits, yb.reshape(-1, 1))
            T.backward(loss)
            opt.step()
            opt.zero_grad()
    with no_grad():
        test_logits = model(Tensor(data[n_train:])).data.reshape(-1)
    predicted = (test_logits > 0).astype(np.float64)
    accuracy = float((predicted == labels[n_train:]).mean())
    return abs(accuracy - 0.5)


def predictive_score(real, synth, seed=0, epochs=POSTERIOR_EPOCHS):
    """Train a one-step-ahead predictor on ``synth``, report MAE on ``real``.

    The predictor maps steps 1..T-1 to steps 2..T for all features; the
    error is reported in normalized units.
    """
    real, synth, rng = _prepare_pair(real, synth, seed)
    if real.shape[1] < 2:
        raise InsufficientData("windows must have at least 2 steps")
    m = real.shape[2]
    model = _RecurrentPredictor(m, max(8, 2 * m), rng)
    opt = Adam(model.parameters(), lr=1e-3)
    train = synth[rng.permutation(len(synth))]
    for _ in range(epochs):
        for start in range(0, len(train), POSTERIOR_BATCH):
            xb = train[start:start + POSTERIOR_BATCH]
            pred = model(Tensor(xb[:, :-1, :]))
            loss = T.mae(pred, Tensor(xb[:, 1:, :]))
            T.backward(loss)
            opt.step()
            opt.zero_grad()
    errors = []
    with no_grad():
        for start in range(0, len(real), POSTERIOR_BATCH):
            xb = real[start:start + POSTERIOR_BATCH]
            pred = model(Tensor(xb[:, :-1, :])).data
            errors.append(np.abs(pred - xb[:, 1:, :]).reshape(len(xb), -1).mean(axis=1))
    return float(np.concatenate(errors).mean())


def score_over_seeds(metric, real, synth, seeds):
    values = [metric(real, synth, seed=s) for s in seeds]
    return float(np.mean(values)), float(np.std(values))


def tsne_export(real, synth, out_path, seed=0, image_path=None,
                perplexity=40.0, max_per_side=1000):
    """Embed flattened windows into 2-D and write CSV rows (x, y, label).

    Optionally writes a scatter image with real points in red and synthetic
    points in blue. Subsamples each side to ``max_per_side`` windows.
    """
    from sklearn.manifold import TSNE

    real, synth, rng = _prepare_pair(real, synth, seed, minimum=50)
    real = real[:max_per_side]
    synth = synth[:max_per_side]
    flat = np.concatenate([real, synth]).reshape(len(real) + len(synth), -1)
    embedding = TSNE(n_components=2, perplexity=perplexity, random_state=seed,
                     init="pca", learning_rate="auto").fit_transform(
                         flat.astype(np.float64))
    labels = ["real"] * len(real) + ["synth"] * len(synth)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "label"])
        for (x, y), label in zip(embedding, labels):
            writer.writerow([repr(float(x)), repr(float(y)), label])
    if image_path is not None:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(6, 6))
        n = len(real)
        ax.scatter(embedding[:n, 0], embedding[:n, 1], c="red", s=8,
                   alpha=0.5, label="real")
        ax.scatter(embedding[n:, 0], embedding[n:, 1], c="blue", s=8,
                   alpha=0.5, label="synthetic")
        ax.legend()
        ax.set_title("2-D embedding of real vs synthetic windows")
        fig.savefig(image_path, dpi=120, bbox_inches="tight")
        plt.close(fig)
    return out_path
