"""Predictive-performance harness: a small tanh MLP classifier, ROC AUC,
confusion metrics, and the real / synthetic / augmented training scenarios."""
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from scipy.stats import rankdata

from . import _mlp
from ._rng import rng_for
from .dataio import EmbeddingSet
from .errors import NumericalError, ValidationError
from .toygen import generate, sample_latents

FULL_SCALE_SYNTH_TOTAL = 55_000
HIDDEN = 16


@dataclass
class TrainParams:
    lr: float = 0.0005
    max_epochs: int = 20
    patience: int = 3
    seed: int = 0
    batch_size: int = 32
    hidden: int = HIDDEN
    decay: float = 0.99
    eps: float = 1e-8

    @classmethod
    def from_config(cls, config, seed=None):
        return cls(
            lr=config.lr,
            max_epochs=config.max_epochs,
            patience=config.patience,
            seed=config.seed if seed is None else seed,
            batch_size=config.batch_size,
        )


@dataclass
class ClassifierModel:
    layers: List[_mlp.Layer]
    log: List[dict] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    def param_vector(self):
        return np.concatenate(_mlp.flatten(self.layers))

    def with_params(self, vec):
        layers, off = _mlp.unflatten(self.layers, np.asarray(vec, dtype=np.float64), 0)
        if off != np.size(vec):
            raise ValidationError(f"parameter vector has length {np.size(vec)}, expected {off}")
        return ClassifierModel(layers, list(self.log), self.best_epoch)


def init_model(in_dim, hidden=HIDDEN, seed=0):
    return ClassifierModel(
        [
            _mlp.glorot_layer(rng_for(seed, "classifier", 0), in_dim, hidden, "tanh"),
            _mlp.glorot_layer(rng_for(seed, "classifier", 1), hidden, 1, "linear"),
        ]
    )


def _inputs(model, samples):
    x = samples.vectors if isinstance(samples, EmbeddingSet) else samples
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.in_dim:
        raise ValidationError(f"classifier expects dimension {model.in_dim}, got {x.shape[1]}")
    return x


def logits(model, samples):
    return _mlp.forward(model.layers, _inputs(model, samples))[-1][:, 0]


def predict_proba(model, samples):
    """Probability of class 1 (sigmoid of the logit)."""
    s = logits(model, samples)
    return np.where(s >= 0, 1.0 / (1.0 + np.exp(-np.abs(s))), np.exp(-np.abs(s)) / (1.0 + np.exp(-np.abs(s))))


def extract_embeddings(model, samples):
    """Hidden-layer activations, one row per sample."""
    return _mlp.forward(model.layers[:1], _inputs(model, samples))[-1]


def logistic_loss(model, x, y):
    """Mean binary cross-entropy and its gradient w.r.t. ``model.param_vector()``."""
    outs = _mlp.forward(model.layers, x)
    s = outs[-1][:, 0]
    loss = float(np.mean(np.logaddexp(0.0, s) - y * s))
    p = 0.5 * (1.0 + np.tanh(0.5 * s))
    ds = ((p - y) / x.shape[0])[:, None]
    _, grads = _mlp.backward(model.layers, outs, ds)
    return loss, np.concatenate([g.ravel() for pair in grads for g in pair])


class EarlyStopping:
    """Tracks validation loss; ``update`` returns True once ``patience``
    consecutive epochs pass without improvement. Epochs are 1-based."""

    def __init__(self, patience):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.bad = 0

    def update(self, epoch, loss):
        if loss < self.best:
            self.best, self.best_epoch, self.bad = loss, epoch, 0
            return False
        self.bad += 1
        return self.bad >= self.patience


def _xy(es):
    return es.vectors.astype(np.float64), es.labels.astype(np.float64)


def train(train_set, val_set, hp=None):
    """Minibatch RMS-scaled gradient descent with early stopping on val loss.

    Returns the model with the weights of the best validation epoch.
    """
    hp = hp or TrainParams()
    if hp.patience > hp.max_epochs:
        raise ValidationError("patience must not exceed max_epochs")
    x, y = _xy(train_set)
    if np.unique(y).size < 2:
        raise ValidationError("training set must contain both classes")
    xv, yv = _xy(val_set)
    model = init_model(x.shape[1], hp.hidden, hp.seed)
    theta = model.param_vector()
    sq = np.zeros_like(theta)
    stopper = EarlyStopping(hp.patience)
    best_theta = theta.copy()
    log = []
    for epoch in range(1, hp.max_epochs + 1):
        order = rng_for(hp.seed, "classifier", "epoch", epoch).permutation(x.shape[0])
        for start in range(0, x.shape[0], hp.batch_size):
            idx = order[start:start + hp.batch_size]
            _, grad = logistic_loss(model.with_params(theta), x[idx], y[idx])
            sq = hp.decay * sq + (1.0 - hp.decay) * grad * grad
            theta = theta - hp.lr * grad / (np.sqrt(sq) + hp.eps)
        current = model.with_params(theta)
        train_loss, _ = logistic_loss(current, x, y)
        val_loss, _ = logistic_loss(current, xv, yv)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise NumericalError(f"non-finite classifier loss at epoch {epoch}")
        log.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        stop = stopper.update(epoch, val_loss)
        if stopper.best_epoch == epoch:
            best_theta = theta.copy()
        if stop:
            break
    best = model.with_params(best_theta)
    best.log = log
    best.best_epoch = stopper.best_epoch
    return best


# ----------------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------------


def auc(scores, labels):
    """ROC AUC as the Mann-Whitney statistic; tied scores count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n1 = int(pos.sum())
    n0 = labels.size - n1
    if n1 == 0 or n0 == 0:
        raise ValidationError("AUC needs both classes present")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


@dataclass
class ClsMetrics:
    acc: float
    auc: Optional[float]
    f1: float
    sensitivity: Optional[float]
    specificity: Optional[float]
    tp: int
    tn: int
    fp: int
    fn: int

    def to_dict(self):
        return asdict(self)


def confusion_metrics(pred, labels, scores=None):
    pred = np.asarray(pred).astype(bool)
    labels = np.asarray(labels).astype(bool)
    if labels.size == 0:
        raise ValidationError("empty test set")
    tp = int(np.sum(pred & labels))
    tn = int(np.sum(~pred & ~labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    both = 0 < labels.sum() < labels.size
    return ClsMetrics(
        acc=(tp + tn) / labels.size,
        auc=auc(scores, labels.astype(int)) if scores is not None and both else None,
        f1=2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0,
        sensitivity=tp / (tp + fn) if (tp + fn) else None,
        specificity=tn / (tn + fp) if (tn + fp) else None,
        tp=tp, tn=tn, fp=fp, fn=fn,
    )


def evaluate(model, test, threshold=0.5):
    p = predict_proba(model, test)
    return confusion_metrics(p >= threshold, test.labels, p)


# ----------------------------------------------------------------------------
# scenarios
# ----------------------------------------------------------------------------


class ReplaySource:
    """Synthetic source that resamples real rows of the requested class."""

    def __init__(self, real):
        self.real = real

    def sample(self, label, n, seed):
        pool = np.flatnonzero(self.real.labels == label)
        if pool.size == 0:
            raise ValidationError(f"no real samples of class {label} to replay")
        idx = rng_for(seed, "replay", label).choice(pool, size=n, replace=True)
        return self.real.vectors[idx].astype(np.float64)


class GeneratorSource:
    """Synthetic source backed by toy generators: one conditional generator,
    or a dict ``{label: unconditional generator}``."""

    def __init__(self, generators):
        self.generators = generators

    def sample(self, label, n, seed):
        if isinstance(self.generators, dict):
            g = self.generators[label]
            return generate(g, sample_latents(n, g.latent_dim, seed, "scenario", label))
        g = self.generators
        return generate(g, sample_latents(n, g.latent_dim, seed, "scenario", label), np.full(n, label))


def _synthetic_set(source, counts, seed, offset=0):
    parts, labels = [], []
    for label, n in enumerate(counts):
        if n:
            parts.append(source.sample(label, n, seed))
            labels.append(np.full(n, label))
    x = np.concatenate(parts)
    y = np.concatenate(labels)
    return EmbeddingSet(x, y, "synthetic", np.arange(offset, offset + y.size))


def _merge(a, b):
    ids = np.arange(len(a) + len(b))
    return EmbeddingSet(np.concatenate([a.vectors, b.vectors]), np.concatenate([a.labels, b.labels]), "real", ids)


def scenario_sets(real_train, source, scale, seed):
    """Training sets for the three scenarios.

    ``synth``: balanced synthetic only, ``round(55000 * scale)`` rows rounded
    down to even. ``aug``: real plus enough synthetic minority rows to balance
    the classes exactly.
    """
    n_synth = int(round(FULL_SCALE_SYNTH_TOTAL * scale)) // 2
    if n_synth < 1:
        raise ValidationError(f"scenario_scale {scale} yields no synthetic samples")
    synth = _synthetic_set(source, (n_synth, n_synth), seed)
    counts = np.bincount(real_train.labels, minlength=2)
    minority = int(np.argmin(counts))
    extra = [0, 0]
    extra[minority] = int(counts.max() - counts.min())
    aug = real_train if extra[minority] == 0 else _merge(real_train, _synthetic_set(source, extra, seed + 1))
    return {"baseline": real_train, "synth": synth, "aug": aug}


def run_scenarios(real_train, real_val, source, config, seed=None):
    """Train one classifier per scenario; all are scored on ``real_val``.

    Returns a list of table rows (dicts) in the order baseline, synth, aug.
    """
    seed = config.seed if seed is None else seed
    sets = scenario_sets(real_train, source, config.scenario_scale, seed)
    rows = []
    models = {}
    for name, train_set in sets.items():
        model = train(train_set, real_val, TrainParams.from_config(config, seed))
        m = evaluate(model, real_val)
        counts = np.bincount(train_set.labels, minlength=2)
        rows.append({
            "scenario": name,
            "n_train": int(len(train_set)),
            "n_class0": int(counts[0]),
            "n_class1": int(counts[1]),
            "n_val": int(len(real_val)),
            "best_epoch": model.best_epoch,
            **m.to_dict(),
        })
        models[name] = model
    return rows, models


TABLE_COLUMNS = ("scenario", "acc", "auc", "f1", "sensitivity", "specificity", "n_train", "n_class0", "n_class1", "n_val", "best_epoch")
