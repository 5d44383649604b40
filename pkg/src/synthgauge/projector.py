"""Generator inversion in w-space and latent neighbour sampling."""
from dataclasses import asdict, dataclass
from typing import List, Optional

import numpy as np

from ._rng import rng_for
from .errors import NumericalError, SynthGaugeError, ValidationError
from .metrics import distance_stats
from .numerics import cosine_distance
from .toygen import grad_wrt_w, mapping, synthesize


@dataclass
class ProjectOptions:
    max_steps: int = 2000
    lr: float = 1.0
    tol: float = 1e-14
    seed: int = 0
    restarts: int = 3
    max_halvings: int = 60
    grow_after: int = 10


@dataclass
class ProjectionResult:
    target_id: int
    w_star: np.ndarray
    loss_curve: List[float]
    final_cosine: float
    steps_used: int
    restart: int = 0
    error: Optional[str] = None

    @property
    def final_loss(self):
        return self.loss_curve[-1]

    def to_dict(self):
        d = asdict(self)
        d["w_star"] = np.asarray(self.w_star).tolist()
        return d


def projection_loss(w, target_features, g, extractor):
    """Return ``(loss, grad)`` for L(w) = ||F(G(w)) - F(target)||^2."""
    x = synthesize(w, g)
    resid = extractor(x) - target_features
    loss = float(resid @ resid)
    grad = grad_wrt_w(w, g, extractor.vjp(x, 2.0 * resid))
    return loss, grad


def _descend(w, target_features, g, extractor, opt):
    """Gradient descent with backtracking: halve lr until the loss drops,
    restore the initial lr after ``grow_after`` consecutive clean steps."""
    loss, grad = projection_loss(w, target_features, g, extractor)
    if not np.isfinite(loss):
        raise NumericalError("non-finite projection loss at step 0")
    curve = []
    lr = opt.lr
    clean = 0
    for step in range(opt.max_steps):
        accepted = False
        halvings = 0
        while halvings <= opt.max_halvings:
            cand = w - lr * grad
            c_loss, c_grad = projection_loss(cand, target_features, g, extractor)
            if not np.isfinite(c_loss):
                raise NumericalError(f"non-finite projection loss at step {step + 1}")
            if c_loss < loss:
                accepted = True
                break
            lr *= 0.5
            halvings += 1
            clean = 0
        if not accepted:
            curve.append(loss)
            break
        w, loss, grad = cand, c_loss, c_grad
        curve.append(loss)
        if halvings == 0:
            clean += 1
            if clean >= opt.grow_after:
                lr = opt.lr
                clean = 0
        if loss <= opt.tol:
            break
    return w, curve


def project(target, g, extractor, opt=None, target_id=0, cls=None):
    """Invert ``g``: find w minimising the feature-space distance to ``target``.

    Each restart starts at ``mapping(z)`` for a fresh normal ``z``; the
    restart with the lowest final loss wins (earliest on ties).
    """
    opt = opt or ProjectOptions()
    if opt.max_steps < 1:
        raise ValidationError(f"max_steps must be >= 1, got {opt.max_steps}")
    if opt.restarts < 1:
        raise ValidationError(f"restarts must be >= 1, got {opt.restarts}")
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (g.sample_dim,):
        raise ValidationError(f"target must have dimension {g.sample_dim}, got shape {target.shape}")
    tf = extractor(target)
    best = None
    for r in range(opt.restarts):
        z = rng_for(opt.seed, "project", target_id, r).standard_normal(g.latent_dim)
        w0 = mapping(z, g, cls)
        w, curve = _descend(w0, tf, g, extractor, opt)
        if best is None or curve[-1] < best[1][-1]:
            best = (w, curve, r)
    w, curve, r = best
    fx = extractor(synthesize(w, g))
    try:
        cos = cosine_distance(tf, fx)
    except SynthGaugeError:
        cos = float("nan")
    return ProjectionResult(target_id, w, curve, cos, len(curve), r)


def batch_project(targets, g, extractor, opt=None, ids=None, cls=None, pair_features=None, close_threshold=None):
    """Project every target; failures are recorded per target.

    ``pair_features`` maps ``(targets, synthesized projections)`` to the
    vectors compared by the distance statistics (default: the extractor).
    Returns ``(results, DistanceStats)``. More than half failing raises.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    ids = list(range(targets.shape[0])) if ids is None else [int(i) for i in ids]
    classes = [None] * len(ids) if cls is None else list(np.broadcast_to(cls, (len(ids),)))
    results = []
    for tid, x, c in zip(ids, targets, classes):
        try:
            results.append(project(x, g, extractor, opt, target_id=tid, cls=c))
        except SynthGaugeError as exc:
            results.append(ProjectionResult(tid, np.full(g.latent_dim, np.nan), [float("nan")], float("nan"), 0, error=str(exc)))
    ok = [r for r in results if r.error is None]
    if len(results) - len(ok) > 0.5 * len(results):
        raise NumericalError(f"{len(results) - len(ok)} of {len(results)} projections failed")
    fn = pair_features or (lambda real, fake: (extractor(real), extractor(fake)))
    real_idx = [ids.index(r.target_id) for r in ok]
    fake = synthesize(np.stack([r.w_star for r in ok]), g)
    a, b = fn(targets[real_idx], fake)
    stats = distance_stats(list(zip(a, b)), close_threshold=close_threshold, ids=[r.target_id for r in ok])
    return results, stats


def generate_neighbors(w, n, radius, seed=0, space="latent_l2"):
    """``n`` points at exact L2 distance ``radius`` from ``w`` in uniformly random directions."""
    if space != "latent_l2":
        raise ValidationError(f"unsupported neighbour space {space!r}")
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if not radius > 0:
        raise ValidationError(f"radius must be positive, got {radius}")
    w = np.asarray(w, dtype=np.float64)
    u = rng_for(seed, "neighbors").standard_normal((n, w.size))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return w[None, :] + radius * u
