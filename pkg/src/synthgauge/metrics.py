"""Evaluation battery for synthetic data.

FID, KID, k-NN precision/recall, perceptual path length, authenticity, and
summary statistics for real-vs-projection distances. Every function accepts
either an :class:`~synthgauge.dataio.EmbeddingSet` or a plain ``N x D`` array.
"""
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from . import _mlp, numerics
from ._rng import rng_for
from .dataio import EmbeddingSet, MetricReport
from .errors import SynthGaugeError, ValidationError
from .toygen import mapping, synthesize


def _rows(x, what="input"):
    if isinstance(x, EmbeddingSet):
        x = x.vectors
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValidationError(f"{what}: expected an N x D array, got shape {x.shape}")
    return x


def _same_dim(a, b):
    if a.shape[1] != b.shape[1]:
        raise ValidationError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")


# ----------------------------------------------------------------------------
# feature extractor
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureExtractor:
    """Fixed map from sample space to feature space.

    ``layer=None`` is the identity extractor.
    """

    in_dim: int
    layer: Optional[_mlp.Layer] = None

    @classmethod
    def identity(cls, dim):
        return cls(dim, None)

    @classmethod
    def random(cls, in_dim, feature_dim, seed):
        return cls(in_dim, _mlp.glorot_layer(rng_for(seed, "extractor"), in_dim, feature_dim))

    @property
    def feature_dim(self):
        return self.in_dim if self.layer is None else self.layer.out_dim

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ValidationError(f"extractor expects dimension {self.in_dim}, got {x.shape[-1]}")
        return x.copy() if self.layer is None else self.layer(x)

    def vjp(self, x, cotangent):
        """Pull a feature-space cotangent back to sample space."""
        if self.layer is None:
            return np.asarray(cotangent, dtype=np.float64).copy()
        xb = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cb = np.atleast_2d(np.asarray(cotangent, dtype=np.float64))
        outs = _mlp.forward([self.layer], xb)
        g, _ = _mlp.backward([self.layer], outs, cb, need_params=False)
        return g.reshape(np.shape(x))


# ----------------------------------------------------------------------------
# FID
# ----------------------------------------------------------------------------


def fid(real, gen):
    """Frechet distance between Gaussians fitted to the two sets.

    The cross term uses tr sqrt(S_r^1/2 S_g S_r^1/2), which equals
    tr sqrt(S_r S_g) but only ever takes square roots of PSD matrices.
    """
    a, b = _rows(real, "real"), _rows(gen, "gen")
    _same_dim(a, b)
    mu_a, cov_a = numerics.mean_cov(a)
    mu_b, cov_b = numerics.mean_cov(b)
    root_a = numerics.sqrtm_spd(cov_a, "real covariance")
    inner = root_a @ cov_b @ root_a
    cross = numerics.sqrtm_spd(0.5 * (inner + inner.T), "covariance product")
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross))
    return max(value, 0.0)


# ----------------------------------------------------------------------------
# KID
# ----------------------------------------------------------------------------


def polynomial_kernel(x, y, degree=3):
    return (x @ y.T / x.shape[1] + 1.0) ** degree


def mmd2_unbiased(x, y, degree=3):
    """Unbiased MMD^2 with the cubic polynomial kernel (cross term keeps its diagonal)."""
    m, n = x.shape[0], y.shape[0]
    kxx = polynomial_kernel(x, x, degree)
    kyy = polynomial_kernel(y, y, degree)
    kxy = polynomial_kernel(x, y, degree)
    term_x = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    term_y = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(term_x + term_y - 2.0 * kxy.mean())


def block_indices(n, block_size, n_blocks, rng):
    """Index blocks that are disjoint until the set is exhausted, then reshuffled."""
    blocks = []
    perm = rng.permutation(n)
    pos = 0
    for _ in range(n_blocks):
        if pos + block_size > n:
            perm = rng.permutation(n)
            pos = 0
        blocks.append(perm[pos:pos + block_size])
        pos += block_size
    return blocks


def kid(real, gen, block_size=50, n_blocks=10, seed=0):
    """Block-averaged unbiased MMD^2. Returns ``(mean, std)`` over blocks."""
    a, b = _rows(real, "real"), _rows(gen, "gen")
    _same_dim(a, b)
    if block_size < 2:
        raise ValidationError(f"block_size must be >= 2, got {block_size}")
    if n_blocks < 1:
        raise ValidationError(f"n_blocks must be >= 1, got {n_blocks}")
    if block_size > min(a.shape[0], b.shape[0]):
        raise ValidationError(f"block_size {block_size} exceeds set sizes ({a.shape[0]}, {b.shape[0]})")
    ia = block_indices(a.shape[0], block_size, n_blocks, rng_for(seed, "kid", "real"))
    ib = block_indices(b.shape[0], block_size, n_blocks, rng_for(seed, "kid", "gen"))
    values = np.array([mmd2_unbiased(a[i], b[j]) for i, j in zip(ia, ib)])
    return float(values.mean()), float(values.std())


# ----------------------------------------------------------------------------
# precision / recall
# ----------------------------------------------------------------------------


def manifold_coverage(support, queries, k):
    """Fraction of ``queries`` inside the union of k-NN balls around ``support`` rows."""
    radii = numerics.knn_distance(support, None, k)
    d = numerics.pairwise_distances(queries, support)
    return float(np.mean(np.any(d <= radii[None, :], axis=1)))


def precision_recall(real, gen, k=3):
    a, b = _rows(real, "real"), _rows(gen, "gen")
    _same_dim(a, b)
    if not 1 <= k < min(a.shape[0], b.shape[0]):
        raise ValidationError(f"k={k} must satisfy 1 <= k < min(N_real, N_gen) = {min(a.shape[0], b.shape[0])}")
    return manifold_coverage(a, b, k), manifold_coverage(b, a, k)


# ----------------------------------------------------------------------------
# perceptual path length
# ----------------------------------------------------------------------------


def slerp(a, b, t):
    """Spherical interpolation between rows of ``a`` and ``b`` (t broadcast per row)."""
    t = np.asarray(t, dtype=np.float64)[:, None]
    na = a / np.linalg.norm(a, axis=1, keepdims=True)
    nb = b / np.linalg.norm(b, axis=1, keepdims=True)
    dot = np.clip(np.sum(na * nb, axis=1, keepdims=True), -1.0, 1.0)
    omega = np.arccos(dot)
    so = np.sin(omega)
    small = so < 1e-12
    so = np.where(small, 1.0, so)
    wa = np.where(small, 1.0 - t, np.sin((1.0 - t) * omega) / so)
    wb = np.where(small, t, np.sin(t * omega) / so)
    return wa * a + wb * b


def ppl_endpoints(g, n_paths, seed, interpolation="lerp_w", cls=None):
    """Sampled path endpoints and positions: ``(start, end, t, cls)``.

    For ``lerp_w`` the endpoints are w-vectors; for ``slerp_z`` they are z-vectors.
    """
    rng = rng_for(seed, "ppl")
    z1 = rng.standard_normal((n_paths, g.latent_dim))
    z2 = rng.standard_normal((n_paths, g.latent_dim))
    t = rng.uniform(0.0, 1.0, n_paths)
    if g.conditional and cls is None:
        cls = rng.integers(0, g.n_classes, n_paths)
    if interpolation == "lerp_w":
        return mapping(z1, g, cls), mapping(z2, g, cls), t, cls
    if interpolation == "slerp_z":
        return z1, z2, t, cls
    raise ValidationError(f"unknown interpolation {interpolation!r}")


def ppl(g, extractor, n_paths=1000, epsilon=1e-4, interpolation="lerp_w", seed=0, cls=None, return_terms=False):
    """Mean over sampled paths of ||F(G(p(t))) - F(G(p(t+eps)))||^2 / eps^2."""
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if n_paths < 1:
        raise ValidationError(f"n_paths must be >= 1, got {n_paths}")
    start, end, t, cls = ppl_endpoints(g, n_paths, seed, interpolation, cls)
    if interpolation == "lerp_w":
        delta = end - start
        wa = start + t[:, None] * delta
        wb = start + (t + epsilon)[:, None] * delta
    else:
        wa = mapping(slerp(start, end, t), g, cls)
        wb = mapping(slerp(start, end, t + epsilon), g, cls)
    fa = extractor(synthesize(wa, g))
    fb = extractor(synthesize(wb, g))
    diff = fa - fb
    terms = np.sum(diff * diff, axis=1) / (epsilon * epsilon)
    value = float(np.mean(terms))
    return (value, terms) if return_terms else value


# ----------------------------------------------------------------------------
# authenticity
# ----------------------------------------------------------------------------


def authenticity(train, gen):
    """Memorisation audit.

    A generated sample is flagged when it is strictly closer to its nearest
    training point than that training point is to any other training point.
    Returns ``(1 - flagged fraction, flags)``.
    """
    t, s = _rows(train, "train"), _rows(gen, "gen")
    _same_dim(t, s)
    if t.shape[0] < 2:
        raise ValidationError("authenticity needs at least 2 training samples")
    if s.shape[0] < 1:
        raise ValidationError("authenticity needs at least 1 generated sample")
    d = numerics.pairwise_distances(s, t)
    nearest = np.argmin(d, axis=1)
    d_near = d[np.arange(s.shape[0]), nearest]
    train_nn = numerics.knn_distance(t, None, 1)
    flags = d_near < train_nn[nearest]
    return float(s.shape[0] - int(flags.sum())) / s.shape[0], flags


# ----------------------------------------------------------------------------
# projection distance statistics
# ----------------------------------------------------------------------------


@dataclass
class DistanceStats:
    mean: float
    median: float
    q1: float
    q3: float
    min: float
    max: float
    count: int
    threshold: float
    flagged_close: List[int] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def summarize_distances(d, ids=None, close_threshold=None):
    d = np.asarray(d, dtype=np.float64)
    if d.size < 1:
        raise ValidationError("distance_stats needs at least one pair")
    ids = np.arange(d.size) if ids is None else np.asarray(ids)
    q1, median, q3 = np.percentile(d, [25, 50, 75], method="linear")
    thr = float(q1) if close_threshold is None else float(close_threshold)
    return DistanceStats(
        mean=float(d.mean()),
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        min=float(d.min()),
        max=float(d.max()),
        count=int(d.size),
        threshold=thr,
        flagged_close=[int(i) for i in ids[d < thr]],
    )


def pair_distance(u, v, metric="cosine"):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if metric == "cosine":
        if np.array_equal(u, v) and np.dot(u, u) > 1e-24:
            return 0.0
        return numerics.cosine_distance(u, v)
    if metric == "euclidean":
        return float(np.sqrt(np.sum((u - v) ** 2)))
    raise ValidationError(f"unknown metric {metric!r}")


def distance_stats(pairs, close_threshold=None, metric="cosine", ids=None):
    """Statistics of distances between real and projected feature vectors.

    ``pairs`` is a sequence of ``(real, projected)`` vectors (or two stacked
    arrays). Quartiles use linear interpolation; pairs closer than
    ``close_threshold`` (default: the first quartile) are flagged.
    """
    if isinstance(pairs, tuple) and len(pairs) == 2 and np.ndim(pairs[0]) == 2:
        pairs = list(zip(pairs[0], pairs[1]))
    pairs = list(pairs)
    ids = list(range(len(pairs))) if ids is None else list(ids)
    d = []
    for pid, (u, v) in zip(ids, pairs):
        try:
            d.append(pair_distance(u, v, metric))
        except SynthGaugeError as exc:
            raise type(exc)(f"pair {pid}: {exc}") from exc
    return summarize_distances(d, ids, close_threshold)


# ----------------------------------------------------------------------------
# aggregate report
# ----------------------------------------------------------------------------


def _annotated(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SynthGaugeError as exc:
        raise type(exc)(f"{name}: {exc}") from exc


def evaluate_all(real, gen, g, extractor, config, scenario="default", train=None, distance=None, cls=None):
    """Compute the whole battery on extractor features and return a :class:`MetricReport`.

    ``train`` (defaults to ``real``) is the reference set for authenticity;
    ``distance`` is an optional :class:`DistanceStats` to attach.
    """
    fr = extractor(_rows(real, "real"))
    fg = extractor(_rows(gen, "gen"))
    ft = fr if train is None else extractor(_rows(train, "train"))
    kid_mean, kid_std = _annotated("kid", kid, fr, fg, config.kid_block, config.kid_blocks, config.seed)
    p, r = _annotated("precision_recall", precision_recall, fr, fg, config.k)
    auth, _ = _annotated("authenticity", authenticity, ft, fg)
    return MetricReport(
        scenario=scenario,
        kid_mean=kid_mean,
        kid_std=kid_std,
        fid=_annotated("fid", fid, fr, fg),
        precision=p,
        recall=r,
        ppl=_annotated("ppl", ppl, g, extractor, config.ppl_paths, config.ppl_epsilon, "lerp_w", config.seed, cls),
        authenticity=auth,
        distance_stats=None if distance is None else distance.to_dict(),
    )
