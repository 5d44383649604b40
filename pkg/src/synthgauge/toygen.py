"""Seeded toy generators (mapping z->w, synthesis w->sample) and a data sampler.

The generator mirrors the two-network layout of a style-based GAN at desk
scale: a tanh mapping layer, then a stack of tanh synthesis layers. Gradients
are exact reverse-mode, so projection and federated training can use them
directly.
"""
import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from . import _mlp
from ._mlp import Layer
from ._rng import rng_for
from .dataio import EmbeddingSet
from .errors import ValidationError


@dataclass(frozen=True)
class ToyGenerator:
    latent_dim: int
    sample_dim: int
    mapping_layers: Tuple[Layer, ...]
    synthesis_layers: Tuple[Layer, ...]
    class_embeddings: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mapping_layers", tuple(self.mapping_layers))
        object.__setattr__(self, "synthesis_layers", tuple(self.synthesis_layers))
        if _mlp.check_chain(self.mapping_layers, self.latent_dim, "mapping") != self.latent_dim:
            raise ValidationError("mapping network must map latent_dim -> latent_dim")
        if not self.synthesis_layers:
            raise ValidationError("synthesis network needs at least one layer")
        if _mlp.check_chain(self.synthesis_layers, self.latent_dim, "synthesis") != self.sample_dim:
            raise ValidationError("synthesis network must end at sample_dim")
        if self.class_embeddings is not None:
            emb = np.array(self.class_embeddings, dtype=np.float64)
            if emb.ndim != 2 or emb.shape[1] != self.latent_dim or not np.all(np.isfinite(emb)):
                raise ValidationError(f"class embeddings must be finite (n_classes, {self.latent_dim})")
            emb.setflags(write=False)
            object.__setattr__(self, "class_embeddings", emb)

    @property
    def conditional(self):
        return self.class_embeddings is not None

    @property
    def n_classes(self):
        return 0 if self.class_embeddings is None else self.class_embeddings.shape[0]

    # -- parameters as one flat vector (used by the federation simulator) --

    def param_vector(self):
        parts = _mlp.flatten(self.mapping_layers) + _mlp.flatten(self.synthesis_layers)
        if self.conditional:
            parts.append(self.class_embeddings.ravel())
        return np.concatenate(parts)

    def with_params(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        mapping, off = _mlp.unflatten(self.mapping_layers, vec, 0)
        synthesis, off = _mlp.unflatten(self.synthesis_layers, vec, off)
        emb = None
        if self.conditional:
            emb = vec[off:off + self.class_embeddings.size].reshape(self.class_embeddings.shape)
            off += emb.size
        if off != vec.size:
            raise ValidationError(f"parameter vector has length {vec.size}, expected {off}")
        return replace(self, mapping_layers=mapping, synthesis_layers=synthesis, class_embeddings=emb)

    # -- serialisation --

    def to_dict(self):
        return {
            "latent_dim": self.latent_dim,
            "sample_dim": self.sample_dim,
            "seed": self.seed,
            "mapping": [layer.to_dict() for layer in self.mapping_layers],
            "synthesis": [layer.to_dict() for layer in self.synthesis_layers],
            "class_embeddings": None if self.class_embeddings is None else self.class_embeddings.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            latent_dim=d["latent_dim"],
            sample_dim=d["sample_dim"],
            mapping_layers=[Layer.from_dict(x) for x in d["mapping"]],
            synthesis_layers=[Layer.from_dict(x) for x in d["synthesis"]],
            class_embeddings=None if d.get("class_embeddings") is None else np.asarray(d["class_embeddings"]),
            seed=d.get("seed", 0),
        )


def new_generator(config=None, conditional=False, n_classes=2, *, latent_dim=None, sample_dim=None, seed=None):
    """Build the default generator: 1 mapping layer, synthesis latent->sample->sample.

    Weights are Glorot-uniform, biases zero, all drawn from streams keyed by
    ``(seed, "gen", layer)``. Explicit keyword arguments override ``config``.
    """
    latent_dim = latent_dim if latent_dim is not None else (config.latent_dim if config else 16)
    sample_dim = sample_dim if sample_dim is not None else (config.sample_dim if config else 32)
    seed = seed if seed is not None else (config.seed if config else 42)
    if latent_dim <= 0 or sample_dim <= 0:
        raise ValidationError(f"dims must be positive, got latent_dim={latent_dim}, sample_dim={sample_dim}")
    mapping = [_mlp.glorot_layer(rng_for(seed, "gen", "mapping", 0), latent_dim, latent_dim)]
    synthesis = [
        _mlp.glorot_layer(rng_for(seed, "gen", "synthesis", 0), latent_dim, sample_dim),
        _mlp.glorot_layer(rng_for(seed, "gen", "synthesis", 1), sample_dim, sample_dim),
    ]
    emb = None
    if conditional:
        if n_classes < 1:
            raise ValidationError("conditional generator needs at least one class")
        emb = 0.5 * rng_for(seed, "gen", "class_embeddings").standard_normal((n_classes, latent_dim))
    return ToyGenerator(latent_dim, sample_dim, mapping, synthesis, emb, seed)


def _as_batch(x, dim, what):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValidationError(f"{what}: expected dimension {dim}, got shape {np.shape(x)}")
    return x, single


def _class_offsets(g, cls, n):
    if g.conditional:
        if cls is None:
            raise ValidationError("conditional generator requires a class id")
        cls = np.broadcast_to(np.asarray(cls), (n,))
        if np.any(cls < 0) or np.any(cls >= g.n_classes):
            raise ValidationError(f"class id out of range [0, {g.n_classes})")
        return g.class_embeddings[cls]
    if cls is not None:
        raise ValidationError("unconditional generator does not take a class id")
    return 0.0


def mapping(z, g, cls=None):
    """z -> w. Accepts one vector or a batch of rows; conditional generators add
    the class embedding after the mapping nonlinearity."""
    zb, single = _as_batch(z, g.latent_dim, "mapping")
    w = _mlp.forward(g.mapping_layers, zb)[-1] + _class_offsets(g, cls, zb.shape[0])
    return w[0] if single else w


def synthesize(w, g):
    wb, single = _as_batch(w, g.latent_dim, "synthesize")
    out = _mlp.forward(g.synthesis_layers, wb)[-1]
    return out[0] if single else out


def grad_wrt_w(w, g, cotangent):
    """Gradient of <synthesize(w), cotangent> with respect to ``w``."""
    wb, single = _as_batch(w, g.latent_dim, "grad_wrt_w")
    cb, _ = _as_batch(cotangent, g.sample_dim, "grad_wrt_w cotangent")
    if cb.shape[0] != wb.shape[0]:
        raise ValidationError("one cotangent per latent vector required")
    outs = _mlp.forward(g.synthesis_layers, wb)
    gw, _ = _mlp.backward(g.synthesis_layers, outs, cb, need_params=False)
    return gw[0] if single else gw


def generate(g, z, cls=None):
    return synthesize(mapping(z, g, cls), g)


def forward_batch(g, z, cls=None):
    """Full z -> sample pass keeping every activation, for parameter gradients."""
    zb, _ = _as_batch(z, g.latent_dim, "forward_batch")
    m_outs = _mlp.forward(g.mapping_layers, zb)
    w = m_outs[-1] + _class_offsets(g, cls, zb.shape[0])
    s_outs = _mlp.forward(g.synthesis_layers, w)
    return {"mapping": m_outs, "synthesis": s_outs, "cls": cls}


def param_grad(g, cache, grad_out):
    """Gradient of sum(grad_out * output) w.r.t. ``g.param_vector()``."""
    gw, s_grads = _mlp.backward(g.synthesis_layers, cache["synthesis"], grad_out)
    _, m_grads = _mlp.backward(g.mapping_layers, cache["mapping"], gw)
    parts = [p.ravel() for pair in m_grads + s_grads for p in pair]
    if g.conditional:
        demb = np.zeros_like(g.class_embeddings)
        cls = np.broadcast_to(np.asarray(cache["cls"]), (gw.shape[0],))
        np.add.at(demb, cls, gw)
        parts.append(demb.ravel())
    return np.concatenate(parts)


def sample_latents(n, dim, seed, *keys):
    if n < 1 or dim < 1:
        raise ValidationError(f"need n >= 1 and dim >= 1, got n={n}, dim={dim}")
    return rng_for(seed, "latents", *keys).standard_normal((n, dim))


# ----------------------------------------------------------------------------
# ground-truth data
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class DataDistribution:
    """Two Gaussian classes in sample space; class 1 is the minority."""

    means: np.ndarray  # (2, D)
    factors: np.ndarray  # (2, D, D); covariance_c = factors[c] @ factors[c].T
    class_ratio: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.class_ratio < 1.0:
            raise ValidationError(f"class_ratio must lie in (0, 1), got {self.class_ratio}")
        for c in range(2):
            if np.linalg.matrix_rank(self.factors[c]) < self.factors[c].shape[0]:
                raise ValidationError(f"covariance factor of class {c} is rank deficient")

    @property
    def dim(self):
        return self.means.shape[1]

    def covariance(self, c):
        return self.factors[c] @ self.factors[c].T

    def mixture_moments(self):
        """Mean and covariance of the class mixture (population values)."""
        p = np.array([1.0 - self.class_ratio, self.class_ratio])
        mu = p @ self.means
        cov = sum(p[c] * (self.covariance(c) + np.outer(self.means[c] - mu, self.means[c] - mu)) for c in range(2))
        return mu, cov


def make_distribution(config=None, *, dim=None, class_ratio=None, seed=None, separation=0.75, scale=0.15):
    """Default two-class distribution, scaled to sit inside the tanh output range."""
    dim = dim if dim is not None else (config.sample_dim if config else 32)
    class_ratio = class_ratio if class_ratio is not None else (config.class_ratio if config else 0.02)
    seed = seed if seed is not None else (config.seed if config else 42)
    rng = rng_for(seed, "data", "distribution")
    mean0 = rng.uniform(-0.2, 0.2, dim)
    u = rng.standard_normal(dim)
    mean1 = mean0 + separation * u / np.linalg.norm(u)
    factors = np.stack([scale * (np.eye(dim) + 0.2 * rng.standard_normal((dim, dim)) / math.sqrt(dim)) for _ in range(2)])
    return DataDistribution(np.stack([mean0, mean1]), factors, class_ratio, seed)


def sample_dataset(dist, n, seed, source="real", *keys):
    """Draw ``n`` labelled samples: floor(ratio*n) minority, the rest majority, shuffled."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    n_min = int(math.floor(dist.class_ratio * n))
    if n_min == 0:
        warnings.warn(f"n*class_ratio = {n * dist.class_ratio:.3g} < 1: no minority samples drawn", stacklevel=2)
    counts = (n - n_min, n_min)
    rng = rng_for(seed, "data", "sample", *keys)
    parts, labels = [], []
    for c, m in enumerate(counts):
        eps = rng.standard_normal((m, dist.dim))
        parts.append(dist.means[c] + eps @ dist.factors[c].T)
        labels.append(np.full(m, c))
    x = np.concatenate(parts)
    y = np.concatenate(labels)
    order = rng.permutation(n)
    return EmbeddingSet(x[order], y[order], source)


def sample_class(dist, c, n, seed, *keys):
    """``n`` samples of class ``c`` as a float64 array."""
    rng = rng_for(seed, "data", "class", c, *keys)
    eps = rng.standard_normal((n, dist.dim))
    return dist.means[c] + eps @ dist.factors[c].T
