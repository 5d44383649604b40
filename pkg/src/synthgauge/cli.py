"""Command-line driver: ``synthgauge <subcommand> [flags]``.

Subcommands: gen, metrics, project, sefa, fedsim, classify, tsne, pipeline.
``pipeline`` chains gen -> metrics -> classify -> project -> tsne.

Exit codes: 0 success, 2 validation/usage error, 3 numerical error, 1 other.
"""
import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _accel, classifier, dataio, fedsim, metrics, numerics, projector, sefa, toygen, viz
from ._rng import rng_for
from .errors import NumericalError, ValidationError


class Run:
    """Collects artifact paths relative to ``--out`` and writes the manifest."""

    def __init__(self, args, cfg, out):
        self.args = args
        self.cfg = cfg
        self.out = out
        self.outputs = []

    def path(self, name):
        self.outputs.append(name)
        return self.out / name

    def say(self, stage, msg):
        print(f"[{stage}] {msg}", flush=True)


# ----------------------------------------------------------------------------
# stages
# ----------------------------------------------------------------------------


def fit_class_generators(cfg, real):
    """One unconditional generator per class, fitted by moment matching."""
    gens = {}
    rounds = max(1, cfg.gen_fit_steps // cfg.fed_exchange_every)
    for label in (0, 1):
        data = real.vectors[real.labels == label].astype(np.float64)
        if data.shape[0] < 2:
            raise ValidationError(f"class {label} has fewer than 2 real samples; increase n_real")
        template = toygen.new_generator(cfg, seed=cfg.seed + label)
        mu, cov = numerics.mean_cov(data)
        client = fedsim.ClientState(0, data.shape[0], template.param_vector(), fedsim.MomentObjective(template, mu, cov, cfg.seed + label))
        clients, _, _ = fedsim.federate([client], rounds, cfg.fed_exchange_every, cfg.fed_lr)
        gens[label] = template.with_params(clients[0].params)
    return gens


def stage_gen(run):
    cfg = run.cfg
    dist = toygen.make_distribution(cfg)
    real = toygen.sample_dataset(dist, cfg.n_real, cfg.seed, "real", "train")
    val = toygen.sample_dataset(dist, cfg.n_val, cfg.seed, "real", "val")
    gens = fit_class_generators(cfg, real)
    n_min = int(np.floor(cfg.class_ratio * cfg.n_gen))
    source = classifier.GeneratorSource(gens)
    parts = [source.sample(0, cfg.n_gen - n_min, cfg.seed + 7), source.sample(1, n_min, cfg.seed + 7)] if n_min else [source.sample(0, cfg.n_gen, cfg.seed + 7)]
    labels = np.concatenate([np.zeros(cfg.n_gen - n_min, int), np.ones(n_min, int)])
    synth = dataio.EmbeddingSet(np.concatenate(parts), labels, "synthetic")
    dataio.write_embeddings(real, run.path("real.emb"))
    dataio.write_embeddings(val, run.path("val.emb"))
    dataio.write_embeddings(synth, run.path("synthetic.emb"))
    dataio.write_json({str(k): g.to_dict() for k, g in gens.items()}, run.path("generators.json"))
    run.say("gen", f"real={len(real)} val={len(val)} synthetic={len(synth)} generators=2")
    return real, val, synth, gens


def load_generators(path):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {int(k): toygen.ToyGenerator.from_dict(v) for k, v in data.items()}


def _report_row(name, real, gen, g, extractor, cfg):
    n = min(len(real), len(gen))
    local = dataio.PipelineConfig(**{**cfg.to_dict(), "kid_block": max(2, min(cfg.kid_block, n)), "k": max(1, min(cfg.k, n - 1))})
    return metrics.evaluate_all(real, gen, g, extractor, local, scenario=name)


def stage_metrics(run, real, synth, gens, extractor):
    cfg = run.cfg
    rows = []
    for label, name in ((0, "ben-GAN"), (1, "mal-GAN")):
        r = real.subset(np.flatnonzero(real.labels == label))
        s = synth.subset(np.flatnonzero(synth.labels == label))
        if len(r) < 2 or len(s) < 2:
            continue
        rows.append(_report_row(name, r, s, gens[label], extractor, cfg))
    dataio.write_json(rows, run.path("metrics.json"))
    for row in rows:
        run.say("metrics", f"{row.scenario}: fid={row.fid:.4g} kid={row.kid_mean:.3g} P={row.precision:.3f} R={row.recall:.3f} ppl={row.ppl:.4g} auth={row.authenticity:.3f}")
    return rows


def stage_classify(run, real, val, source):
    rows, models = classifier.run_scenarios(real, val, source, run.cfg)
    dataio.write_json(rows, run.path("scenarios.json"))
    viz.emit_csv(rows, run.path("scenarios.csv"), classifier.TABLE_COLUMNS)
    run.say("classify", " ".join(f"{r['scenario']}: acc={r['acc']:.3f}" for r in rows))
    return rows, models


def stage_project(run, targets, gens, extractor, model=None):
    cfg = run.cfg
    n = min(cfg.proj_targets, len(targets))
    opt = projector.ProjectOptions(max_steps=cfg.proj_steps, seed=cfg.seed, restarts=cfg.proj_restarts)
    results = []
    for label in (0, 1):
        idx = np.flatnonzero(targets.labels[:n] == label)
        for i in idx:
            results.append(projector.project(targets.vectors[i].astype(np.float64), gens[label], extractor, opt, target_id=int(targets.ids[i])))
    results.sort(key=lambda r: r.target_id)
    by_id = {int(t): k for k, t in enumerate(targets.ids)}
    real_x = np.stack([targets.vectors[by_id[r.target_id]].astype(np.float64) for r in results])
    fake_x = np.stack([toygen.synthesize(r.w_star, gens[int(targets.labels[by_id[r.target_id]])]) for r in results])
    if model is not None:
        a, b = classifier.extract_embeddings(model, real_x), classifier.extract_embeddings(model, fake_x)
    else:
        a, b = extractor(real_x), extractor(fake_x)
    stats = metrics.distance_stats(list(zip(a, b)), ids=[r.target_id for r in results])
    dataio.write_json({"projections": [r.to_dict() for r in results], "distance_stats": stats.to_dict()}, run.path("projections.json"))
    run.say("project", f"targets={len(results)} mean={stats.mean:.4g} median={stats.median:.4g} q1={stats.q1:.4g} flagged={len(stats.flagged_close)}")
    return results, stats


def stage_tsne(run, real, synth, model=None, name="tsne"):
    cfg = run.cfg
    x = real.vectors.astype(np.float64)
    y = synth.vectors.astype(np.float64) if synth is not None else np.zeros((0, x.shape[1]))
    feats = np.concatenate([x, y])
    if model is not None:
        feats = classifier.extract_embeddings(model, feats)
    labels = np.concatenate([real.labels, synth.labels if synth is not None else np.zeros(0, np.uint8)])
    sources = ["real"] * len(x) + ["synthetic"] * len(y)
    tcfg = viz.TsneConfig(output_dims=3, perplexity=cfg.tsne_perplexity, iterations=cfg.tsne_iterations, seed=cfg.seed)
    layout = viz.tsne(feats, tcfg)
    viz.emit_scatter(layout, labels, sources, run.path(f"{name}.svg"), title="t-SNE")
    rows = [[i, src, int(lab), *coords] for i, (src, lab, coords) in enumerate(zip(sources, labels, layout))]
    viz.emit_csv(rows, run.path(f"{name}.csv"), ["row", "source", "label", "x", "y", "z"])
    run.say("tsne", f"points={len(layout)} dims=3")
    return layout


def _subsample(es, n, seed):
    if len(es) <= n:
        return es
    idx = np.sort(rng_for(seed, "subsample").choice(len(es), n, replace=False))
    return es.subset(idx)


# ----------------------------------------------------------------------------
# subcommand handlers
# ----------------------------------------------------------------------------


def _extractor(cfg):
    return metrics.FeatureExtractor.random(cfg.sample_dim, cfg.feature_dim, cfg.seed)


def cmd_gen(run):
    stage_gen(run)


def cmd_metrics(run):
    args, cfg = run.args, run.cfg
    if not (args.real and args.gen):
        raise ValidationError("metrics requires --real and --gen")
    real, gen = dataio.read_embeddings(args.real), dataio.read_embeddings(args.gen)
    if args.generator:
        g = load_generators(args.generator)[0]
    else:
        g = toygen.new_generator(cfg, latent_dim=cfg.latent_dim, sample_dim=real.dim)
    report = _report_row("input", real, gen, g, metrics.FeatureExtractor.identity(real.dim), cfg)
    dataio.write_report(report, run.path("metrics.json"))
    run.say("metrics", f"fid={report.fid:.4g} kid={report.kid_mean:.3g} P={report.precision:.3f} R={report.recall:.3f} auth={report.authenticity:.3f}")


def _real_or_sampled(run, path, n, key):
    if path:
        return dataio.read_embeddings(path)
    dist = toygen.make_distribution(run.cfg)
    return toygen.sample_dataset(dist, n, run.cfg.seed, "real", key)


def cmd_project(run):
    args, cfg = run.args, run.cfg
    targets = _real_or_sampled(run, args.real, cfg.n_real, "train")
    gens = load_generators(args.generator) if args.generator else fit_class_generators(cfg, targets)
    stage_project(run, targets, gens, _extractor(cfg))


def cmd_sefa(run):
    cfg = run.cfg
    g = load_generators(run.args.generator)[0] if run.args.generator else toygen.new_generator(cfg)
    basis = sefa.factorize(g)
    dataio.write_json(basis.to_dict(), run.path("sefa_basis.json"))
    w = toygen.mapping(toygen.sample_latents(1, g.latent_dim, cfg.seed, "sefa")[0], g)
    indices = [i for i in (1, 3, 5) if i < len(basis)]
    grid = sefa.edit_sweep(w, g, basis, indices)
    rows = [[i, a, *np.asarray(s).tolist()] for i, a, s in grid]
    viz.emit_csv(rows, run.path("sefa_sweep.csv"), ["index", "alpha"] + [f"x{k}" for k in range(g.sample_dim)])
    viz.emit_small_multiples(grid, run.path("sefa_sweep.svg"), title="direction sweep")
    run.say("sefa", f"directions={len(basis)} top significance={basis.significances[0]:.4g} swept={indices}")


def cmd_fedsim(run):
    cfg = run.cfg
    setup = fedsim.FederationSetup.from_config(cfg)
    fed = fedsim.run_federation(setup)
    smallest = int(np.argmin(setup.client_sizes))
    iso = fedsim.run_isolated(setup, smallest)
    threshold = fedsim.relative_threshold(iso)
    ratio = fedsim.client_speedup(fed, iso, smallest, threshold)
    doc = fed.to_dict()
    doc["isolated_eval_losses"] = iso.client_eval_losses[0]
    doc["speedup"] = {"client": smallest, "threshold": threshold, "ratio": ratio,
                      "federated_steps": fedsim.steps_to_threshold(fed.client_eval_losses[smallest], threshold),
                      "isolated_steps": fedsim.steps_to_threshold(iso.client_eval_losses[0], threshold)}
    dataio.write_json(doc, run.path("federation.json"))
    rows = []
    for cid, losses, evals in zip(fed.client_ids, fed.client_losses, fed.client_eval_losses):
        rows.extend([cid, step + 1, loss, ev] for step, (loss, ev) in enumerate(zip(losses, evals)))
    viz.emit_csv(rows, run.path("client_losses.csv"), ["client", "step", "train_loss", "heldout_loss"])
    shown = ratio if isinstance(ratio, str) else f"{ratio:.3g}"
    run.say("fedsim", f"clients={setup.client_sizes} rounds={setup.rounds} smallest-client speedup={shown}")


def cmd_classify(run):
    args, cfg = run.args, run.cfg
    real = _real_or_sampled(run, args.real, cfg.n_real, "train")
    val = _real_or_sampled(run, args.val, cfg.n_val, "val")
    if args.gen:
        source = classifier.ReplaySource(dataio.read_embeddings(args.gen))
    elif args.generator:
        source = classifier.GeneratorSource(load_generators(args.generator))
    else:
        source = classifier.GeneratorSource(fit_class_generators(cfg, real))
    stage_classify(run, real, val, source)


def cmd_tsne(run):
    args, cfg = run.args, run.cfg
    real = _real_or_sampled(run, args.real, cfg.n_val, "val")
    gen = dataio.read_embeddings(args.gen) if args.gen else None
    stage_tsne(run, _subsample(real, 150, cfg.seed), None if gen is None else _subsample(gen, 150, cfg.seed + 1))


def cmd_pipeline(run):
    cfg = run.cfg
    real, val, synth, gens = stage_gen(run)
    extractor = _extractor(cfg)
    report_rows = stage_metrics(run, real, synth, gens, extractor)
    _, models = stage_classify(run, real, val, classifier.GeneratorSource(gens))
    _, stats = stage_project(run, real, gens, extractor, models["aug"])
    stage_tsne(run, _subsample(val, 150, cfg.seed), _subsample(synth, 150, cfg.seed + 1), models["aug"])
    summary = [dataclasses.replace(r, distance_stats=stats.to_dict()) for r in report_rows]
    dataio.write_json(summary, run.path("report.json"))


COMMANDS = {
    "gen": cmd_gen,
    "metrics": cmd_metrics,
    "project": cmd_project,
    "sefa": cmd_sefa,
    "fedsim": cmd_fedsim,
    "classify": cmd_classify,
    "tsne": cmd_tsne,
    "pipeline": cmd_pipeline,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="synthgauge", description="Generate-and-validate toolkit for synthetic data.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="PipelineConfig JSON file")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", default="synthgauge-out", help="output directory")
        p.add_argument("--real", help="real EMB1 file")
        p.add_argument("--gen", help="synthetic EMB1 file")
        p.add_argument("--val", help="validation EMB1 file (classify)")
        p.add_argument("--generator", help="generators.json written by `gen`")
        p.add_argument("--threads", type=int, help="worker threads (0 = auto)")
    return parser


def _threads(args):
    value = args.threads
    if value is None:
        env = os.environ.get("SYNTHGAUGE_THREADS", "").strip()
        try:
            value = int(env) if env else 0
        except ValueError:
            raise ValidationError(f"SYNTHGAUGE_THREADS must be an integer, got {env!r}") from None
    if value < 0:
        raise ValidationError(f"thread count must be >= 0, got {value}")
    return value


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = Path(args.out)
    manifest = {
        "subcommand": args.command,
        "version": __version__,
        "backend": _accel.backend(),
        "inputs": {k: getattr(args, k) for k in ("config", "real", "gen", "val", "generator") if getattr(args, k)},
        "outputs": [],
        "error": None,
    }
    start = time.perf_counter()
    code = 0
    run = None
    try:
        out.mkdir(parents=True, exist_ok=True)
        cfg = dataio.read_config(args.config) if args.config else dataio.PipelineConfig()
        if args.seed is not None:
            cfg = dataio.config_from_dict({**cfg.to_dict(), "seed": args.seed})
        manifest["config"] = cfg.to_dict()
        manifest["seed"] = cfg.seed
        _accel.set_threads(_threads(args))
        run = Run(args, cfg, out)
        COMMANDS[args.command](run)
    except ValidationError as exc:
        code, manifest["error"] = 2, f"validation error: {exc}"
    except NumericalError as exc:
        code, manifest["error"] = 3, f"numerical error: {exc}"
    except Exception as exc:  # noqa: BLE001 - reported in the manifest
        code, manifest["error"] = 1, f"{type(exc).__name__}: {exc}"
    if manifest["error"]:
        print(f"synthgauge: {manifest['error']}", file=sys.stderr)
    if run is not None:
        manifest["outputs"] = list(run.outputs)
    manifest["duration_s"] = time.perf_counter() - start
    try:
        out.mkdir(parents=True, exist_ok=True)
        dataio.write_json(manifest, out / "manifest.json")
    except OSError as exc:
        print(f"synthgauge: cannot write manifest: {exc}", file=sys.stderr)
        code = code or 1
    return code


if __name__ == "__main__":
    sys.exit(main())
