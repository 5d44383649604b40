"""Persistence: EMB1 embedding files, pipeline configs and metric reports.

EMB1 layout (little-endian)::

    b"EMB1" | u32 version=1 | u32 N | u32 dim | u8 source (0 real, 1 synthetic)
    | N*dim float32, row-major | N u8 labels | N u32 ids
"""
import dataclasses
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError, ValidationError

MAGIC = b"EMB1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIB")
SOURCES = ("real", "synthetic")


@dataclass
class EmbeddingSet:
    """N feature vectors with binary class labels (0 benign, 1 malignant).

    Vectors are stored as float32 so that a write/read cycle is exact.
    """

    vectors: np.ndarray
    labels: np.ndarray
    source: str = "real"
    ids: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float32)
        if v.ndim == 1:
            v = v.reshape(0, 0) if v.size == 0 else v[:, None]
        if v.ndim != 2:
            raise ValidationError(f"vectors must be N x dim, got shape {v.shape}")
        n = v.shape[0]
        labels = np.asarray(self.labels)
        if labels.shape != (n,):
            raise ValidationError(f"expected {n} labels, got shape {labels.shape}")
        if n and not np.all(np.isin(labels, (0, 1))):
            raise ValidationError("labels must be 0 or 1")
        if not np.all(np.isfinite(v)):
            raise ValidationError("vectors contain non-finite values")
        if self.source not in SOURCES:
            raise ValidationError(f"source must be one of {SOURCES}, got {self.source!r}")
        ids = np.arange(n, dtype=np.uint32) if self.ids is None else np.asarray(self.ids)
        if ids.shape != (n,):
            raise ValidationError(f"expected {n} ids, got shape {ids.shape}")
        if n and (ids.min() < 0 or ids.max() > 0xFFFFFFFF):
            raise ValidationError("ids must fit in u32")
        ids = ids.astype(np.uint32)
        if np.unique(ids).size != n:
            raise ValidationError("ids must be unique within a set")
        self.vectors = np.ascontiguousarray(v)
        self.labels = labels.astype(np.uint8)
        self.ids = ids

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def dim(self):
        return self.vectors.shape[1]

    def subset(self, index):
        index = np.asarray(index)
        return EmbeddingSet(self.vectors[index], self.labels[index], self.source, self.ids[index])

    def __eq__(self, other):
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self.source == other.source
            and self.vectors.shape == other.vectors.shape
            and self.vectors.tobytes() == other.vectors.tobytes()
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.ids, other.ids)
        )


def embeddings_to_bytes(es):
    n, dim = es.vectors.shape
    parts = [
        _HEADER.pack(MAGIC, VERSION, n, dim, SOURCES.index(es.source)),
        es.vectors.astype("<f4").tobytes(),
        es.labels.astype("u1").tobytes(),
        es.ids.astype("<u4").tobytes(),
    ]
    return b"".join(parts)


def embeddings_from_bytes(buf):
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}", offset=0)
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header", offset=len(buf))
    _, version, n, dim, source = _HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if source > 1:
        raise FormatError(f"invalid source tag {source}", offset=16)
    if n and dim == 0:
        raise FormatError("dim must be positive for a non-empty set", offset=12)
    off = _HEADER.size
    sizes = (n * dim * 4, n, n * 4)
    expected = off + sum(sizes)
    if len(buf) < expected:
        # report where the first incomplete section starts
        pos = off
        for size in sizes:
            if len(buf) < pos + size:
                break
            pos += size
        raise FormatError(f"truncated payload: {len(buf)} bytes, expected {expected}", offset=pos)
    if len(buf) > expected:
        raise FormatError(f"{len(buf) - expected} trailing bytes", offset=expected)
    vectors = np.frombuffer(buf, dtype="<f4", count=n * dim, offset=off).reshape(n, dim)
    off += sizes[0]
    labels = np.frombuffer(buf, dtype="u1", count=n, offset=off)
    bad = np.flatnonzero(labels > 1)
    if bad.size:
        raise FormatError(f"invalid label {labels[bad[0]]}", offset=off + int(bad[0]))
    off += sizes[1]
    ids = np.frombuffer(buf, dtype="<u4", count=n, offset=off)
    try:
        return EmbeddingSet(vectors.astype(np.float32), labels.copy(), SOURCES[source], ids.astype(np.uint32))
    except ValidationError as exc:
        raise FormatError(str(exc), offset=_HEADER.size) from exc


def write_embeddings(es, path):
    Path(path).write_bytes(embeddings_to_bytes(es))


def read_embeddings(path):
    return embeddings_from_bytes(Path(path).read_bytes())


# ----------------------------------------------------------------------------
# JSON helpers
# ----------------------------------------------------------------------------


def round_sig(x, digits=9):
    """Round a float to ``digits`` significant digits (ints and non-floats pass through)."""
    if isinstance(x, (bool, int, np.integer)):
        return int(x) if not isinstance(x, bool) else x
    x = float(x)
    if not math.isfinite(x):
        raise ValidationError(f"cannot serialise non-finite value {x}")
    return float(format(x, f".{digits}g"))


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return round_sig(obj)
    return obj


def dumps(obj):
    """Deterministic JSON: sorted keys, 2-space indent, floats at 9 significant digits."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(obj, path):
    Path(path).write_text(dumps(obj), encoding="utf-8")


# ----------------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    seed: int = 42
    latent_dim: int = 16
    sample_dim: int = 32
    class_ratio: float = 0.02
    client_sizes: list = field(default_factory=lambda: [200, 1200, 2000])
    # metrics
    k: int = 3
    kid_block: int = 50
    kid_blocks: int = 10
    ppl_epsilon: float = 1e-4
    ppl_paths: int = 1000
    # classifier
    lr: float = 0.0005
    max_epochs: int = 20
    patience: int = 3
    batch_size: int = 32
    scenario_scale: float = 0.02
    # federation
    fed_exchange_every: int = 100
    fed_rounds: int = 10
    fed_lr: float = 0.1
    # pipeline sizes
    n_real: int = 1000
    n_val: int = 500
    n_gen: int = 1000
    feature_dim: int = 32
    gen_fit_steps: int = 1000
    proj_targets: int = 20
    proj_steps: int = 500
    proj_restarts: int = 3
    tsne_perplexity: float = 20.0
    tsne_iterations: int = 500

    def __post_init__(self):
        self.validate()

    def validate(self):
        positive = [
            "latent_dim", "sample_dim", "k", "kid_block", "kid_blocks", "ppl_paths", "max_epochs",
            "patience", "batch_size", "fed_exchange_every", "fed_rounds", "n_real", "n_val", "n_gen",
            "feature_dim", "gen_fit_steps", "proj_targets", "proj_steps", "proj_restarts", "tsne_iterations",
        ]
        for name in positive:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value <= 0:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not 0.0 < self.class_ratio < 1.0:
            raise ValidationError(f"class_ratio must lie in (0, 1), got {self.class_ratio}")
        if not self.client_sizes or any(
            isinstance(c, bool) or not isinstance(c, (int, np.integer)) or c <= 0 for c in self.client_sizes
        ):
            raise ValidationError(f"client_sizes must be a non-empty list of positive integers, got {self.client_sizes!r}")
        for name in ("ppl_epsilon", "lr", "fed_lr", "scenario_scale", "tsne_perplexity"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.patience > self.max_epochs:
            raise ValidationError(f"patience ({self.patience}) must not exceed max_epochs ({self.max_epochs})")
        if self.kid_block < 2:
            raise ValidationError("kid_block must be at least 2")

    def to_dict(self):
        return dataclasses.asdict(self)


CONFIG_KEYS = frozenset(f.name for f in dataclasses.fields(PipelineConfig))


def config_from_dict(data, strict=True):
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    unknown = sorted(set(data) - CONFIG_KEYS)
    if unknown and strict:
        raise ValidationError(f"unknown config key {unknown[0]!r}")
    known = {k: v for k, v in data.items() if k in CONFIG_KEYS}
    if "client_sizes" in known:
        known["client_sizes"] = list(known["client_sizes"])
    return PipelineConfig(**known)


def read_config(path, strict=True):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON: {exc}") from exc
    return config_from_dict(data, strict=strict)


def write_config(cfg, path):
    write_json(cfg.to_dict(), path)


# ----------------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------------


@dataclass
class MetricReport:
    """One row of the generative-model comparison table."""

    scenario: str
    kid_mean: float
    kid_std: float
    fid: float
    precision: float
    recall: float
    ppl: float
    authenticity: float
    distance_stats: Optional[dict] = None

    def __post_init__(self):
        for name in ("precision", "recall", "authenticity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        if self.fid < 0:
            raise ValidationError(f"fid must be non-negative, got {self.fid}")
        ds = self.distance_stats
        if ds is not None and not ds["q1"] <= ds["median"] <= ds["q3"]:
            raise ValidationError("distance_stats quartiles out of order")

    def to_json(self):
        return dumps(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def write_report(report, path):
    Path(path).write_text(report.to_json(), encoding="utf-8")


def read_report(path):
    return MetricReport.from_json(Path(path).read_text(encoding="utf-8"))
