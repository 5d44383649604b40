"""Federated averaging simulator with clients that differ only in data volume.

Each client fits a shared toy generator to its own empirical moments
(moment matching on a per-round latent minibatch); the server aggregates
with sample-count-weighted FedAvg after every ``local_steps`` local updates.
Convergence is tracked on a held-out objective against the population
moments, which is what the speedup comparison uses.
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import numerics
from .errors import NumericalError, SynthGaugeError, ValidationError
from .toygen import forward_batch, make_distribution, new_generator, param_grad, sample_dataset, sample_latents

LAMBDA = 0.5
BATCH = 64
EVAL_BATCH = 256


def fedavg(params, weights):
    """Sample-count-weighted mean of parameter vectors."""
    params = [np.asarray(p, dtype=np.float64) for p in params]
    if not params:
        raise ValidationError("fedavg needs at least one client")
    if len(weights) != len(params):
        raise ValidationError(f"{len(params)} parameter vectors but {len(weights)} weights")
    length = params[0].shape
    for i, p in enumerate(params):
        if p.shape != length:
            raise ValidationError(f"client {i} parameter shape {p.shape} differs from {length}")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0):
        raise ValidationError("client weights must be positive")
    total = w.sum()
    if not total > 0:
        raise ValidationError("total weight is zero")
    frac = w / total
    out = frac[0] * params[0]
    for f, p in zip(frac[1:], params[1:]):
        out = out + f * p
    return out


def aggregation_weights(sizes):
    sizes = np.asarray(sizes, dtype=np.float64)
    return sizes / sizes.sum()


# ----------------------------------------------------------------------------
# objectives
# ----------------------------------------------------------------------------


def moment_loss(x, mu_t, cov_t, lam=LAMBDA):
    """``(loss, dloss/dx)`` for ||mean(x) - mu_t||^2 + lam * ||cov(x) - cov_t||_F^2."""
    b = x.shape[0]
    mu = x.mean(axis=0)
    xc = x - mu
    cov = xc.T @ xc / (b - 1)
    dmu = mu - mu_t
    dcov = cov - cov_t
    loss = float(dmu @ dmu + lam * np.sum(dcov * dcov))
    grad = np.broadcast_to(2.0 * dmu / b, x.shape) + (2.0 / (b - 1)) * xc @ (2.0 * lam * dcov)
    return loss, grad


@dataclass
class MomentObjective:
    """Moment-matching objective for a generator with the shape of ``template``.

    The latent minibatch is fixed within a round and keyed by ``(seed, round)``
    only, so clients holding identical data follow identical trajectories.
    """

    template: object
    mu: np.ndarray
    cov: np.ndarray
    seed: int
    lam: float = LAMBDA
    batch: int = BATCH

    def latents(self, round_index):
        return sample_latents(self.batch, self.template.latent_dim, self.seed, "fed", round_index)

    def __call__(self, params, round_index):
        g = self.template.with_params(params)
        cache = forward_batch(g, self.latents(round_index))
        loss, dx = moment_loss(cache["synthesis"][-1], self.mu, self.cov, self.lam)
        return loss, param_grad(g, cache, dx)


@dataclass
class HeldOutObjective:
    """Population-moment loss on a fixed evaluation latent batch (no gradient)."""

    template: object
    mu: np.ndarray
    cov: np.ndarray
    seed: int
    lam: float = LAMBDA
    batch: int = EVAL_BATCH

    def __post_init__(self):
        self._z = sample_latents(self.batch, self.template.latent_dim, self.seed, "fed-eval")

    def __call__(self, params):
        g = self.template.with_params(params)
        x = forward_batch(g, self._z)["synthesis"][-1]
        return moment_loss(x, self.mu, self.cov, self.lam)[0]


# ----------------------------------------------------------------------------
# clients
# ----------------------------------------------------------------------------


@dataclass
class ClientState:
    client_id: int
    sample_count: int
    params: np.ndarray
    objective: Callable
    evaluate: Optional[Callable] = None
    step: int = 0
    losses: List[float] = field(default_factory=list)
    eval_losses: List[float] = field(default_factory=list)

    def copy_with(self, params):
        return ClientState(
            self.client_id, self.sample_count, np.array(params, dtype=np.float64), self.objective, self.evaluate,
            self.step, list(self.losses), list(self.eval_losses),
        )


def local_train(client, steps, lr, round_index=0):
    """Run ``steps`` plain gradient steps; returns a new :class:`ClientState`.

    ``losses`` gains the objective value at each pre-update point; if the
    client has an ``evaluate`` callable, ``eval_losses`` gains its value after
    each update.
    """
    if steps < 0:
        raise ValidationError(f"steps must be >= 0, got {steps}")
    out = client.copy_with(client.params)
    theta = out.params
    for _ in range(steps):
        loss, grad = client.objective(theta, round_index)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            raise NumericalError(f"client {client.client_id}: non-finite loss at local step {out.step}")
        theta = theta - lr * grad
        out.step += 1
        out.losses.append(float(loss))
        if client.evaluate is not None:
            out.eval_losses.append(float(client.evaluate(theta)))
    out.params = theta
    return out


# ----------------------------------------------------------------------------
# federation runs
# ----------------------------------------------------------------------------


@dataclass
class FederationSetup:
    client_sizes: list
    rounds: int = 10
    local_steps: int = 100
    lr: float = 0.1
    seed: int = 42
    latent_dim: int = 16
    sample_dim: int = 32
    class_ratio: float = 0.02

    def __post_init__(self):
        if not self.client_sizes:
            raise ValidationError("need at least one client")
        if any(int(n) < 2 for n in self.client_sizes):
            raise ValidationError("every client needs at least 2 samples")
        if self.rounds < 1:
            raise ValidationError(f"rounds must be >= 1, got {self.rounds}")
        if self.local_steps < 0:
            raise ValidationError(f"local_steps must be >= 0, got {self.local_steps}")

    @classmethod
    def from_config(cls, config, client_sizes=None):
        return cls(
            client_sizes=list(client_sizes if client_sizes is not None else config.client_sizes),
            rounds=config.fed_rounds,
            local_steps=config.fed_exchange_every,
            lr=config.fed_lr,
            seed=config.seed,
            latent_dim=config.latent_dim,
            sample_dim=config.sample_dim,
            class_ratio=config.class_ratio,
        )


@dataclass
class FederationRun:
    setup: FederationSetup
    client_ids: List[int]
    weights: List[float]
    round_params: List[np.ndarray]
    client_losses: List[List[float]]  # per client, one entry per local step
    client_eval_losses: List[List[float]]
    global_eval_losses: List[float]  # aggregated model, one entry per round

    def to_dict(self, include_params=False):
        d = {
            "setup": self.setup.__dict__,
            "client_ids": self.client_ids,
            "weights": self.weights,
            "client_losses": self.client_losses,
            "client_eval_losses": self.client_eval_losses,
            "global_eval_losses": self.global_eval_losses,
        }
        if include_params:
            d["round_params"] = [p.tolist() for p in self.round_params]
        return d


def make_clients(setup, client_ids=None):
    """Clients drawing from one shared distribution, each keyed by its id."""
    ids = list(range(len(setup.client_sizes))) if client_ids is None else list(client_ids)
    dist = make_distribution(dim=setup.sample_dim, class_ratio=setup.class_ratio, seed=setup.seed)
    template = new_generator(latent_dim=setup.latent_dim, sample_dim=setup.sample_dim, seed=setup.seed)
    mu_pop, cov_pop = dist.mixture_moments()
    held_out = HeldOutObjective(template, mu_pop, cov_pop, setup.seed)
    init = template.param_vector()
    clients = []
    for cid, n in zip(ids, setup.client_sizes):
        data = sample_dataset(dist, int(n), setup.seed, "real", "client", cid).vectors.astype(np.float64)
        mu, cov = numerics.mean_cov(data)
        objective = MomentObjective(template, mu, cov, setup.seed)
        clients.append(ClientState(cid, int(n), init.copy(), objective, held_out))
    return clients, held_out


def federate(clients, rounds, local_steps, lr, held_out=None):
    """Synchronous FedAvg over prepared clients. Returns ``(clients, round_params, global_evals)``."""
    weights = [c.sample_count for c in clients]
    round_params, global_evals = [], []
    for r in range(rounds):
        trained = []
        for c in clients:
            try:
                trained.append(local_train(c, local_steps, lr, r))
            except SynthGaugeError as exc:
                raise type(exc)(f"round {r}: {exc}") from exc
        agg = fedavg([c.params for c in trained], weights)
        clients = [c.copy_with(agg) for c in trained]
        round_params.append(agg)
        if held_out is not None:
            global_evals.append(float(held_out(agg)))
    return clients, round_params, global_evals


def run_federation(setup, client_ids=None):
    clients, held_out = make_clients(setup, client_ids)
    clients, round_params, global_evals = federate(clients, setup.rounds, setup.local_steps, setup.lr, held_out)
    return FederationRun(
        setup=setup,
        client_ids=[c.client_id for c in clients],
        weights=aggregation_weights(setup.client_sizes).tolist(),
        round_params=round_params,
        client_losses=[c.losses for c in clients],
        client_eval_losses=[c.eval_losses for c in clients],
        global_eval_losses=global_evals,
    )


def run_isolated(setup, client_index=0):
    """The same client trained alone for ``rounds * local_steps`` steps."""
    solo = FederationSetup(
        client_sizes=[setup.client_sizes[client_index]],
        rounds=setup.rounds,
        local_steps=setup.local_steps,
        lr=setup.lr,
        seed=setup.seed,
        latent_dim=setup.latent_dim,
        sample_dim=setup.sample_dim,
        class_ratio=setup.class_ratio,
    )
    return run_federation(solo, client_ids=[client_index])


# ----------------------------------------------------------------------------
# convergence comparison
# ----------------------------------------------------------------------------

NOT_REACHED = "not reached"


def steps_to_threshold(curve, threshold):
    """1-based index of the first entry <= threshold, or None."""
    hits = np.flatnonzero(np.asarray(curve) <= threshold)
    return int(hits[0]) + 1 if hits.size else None


def speedup(fed_curve, isolated_curve, threshold):
    """(isolated steps to threshold) / (federated steps), or ``NOT_REACHED``."""
    a = steps_to_threshold(isolated_curve, threshold)
    b = steps_to_threshold(fed_curve, threshold)
    if a is None or b is None:
        return NOT_REACHED
    return a / b


THRESHOLD_FACTOR = 1.25


def relative_threshold(isolated, factor=THRESHOLD_FACTOR):
    """Held-out loss within ``factor`` of the best the isolated client ever reaches."""
    return factor * float(np.min(isolated.client_eval_losses[0]))


def client_speedup(fed, isolated, client_index, threshold=None):
    """Speedup of one client; ``threshold`` defaults to :func:`relative_threshold`."""
    if threshold is None:
        threshold = relative_threshold(isolated)
    return speedup(fed.client_eval_losses[client_index], isolated.client_eval_losses[0], threshold)
