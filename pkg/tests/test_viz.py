import csv
import io
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from sklearn.metrics import silhouette_score

from synthgauge import viz
from synthgauge.errors import ValidationError


def clusters(seed, n=60):
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, 1))
    x[n // 2:] += 100.0
    return x, np.repeat([0, 1], n // 2)


SMALL = viz.TsneConfig(perplexity=10, iterations=500, seed=0)


def test_cluster_silhouette():
    x, y = clusters(0)
    layout = viz.tsne(x, SMALL)
    assert silhouette_score(layout, y) > 0.5


def test_entropy_matches_perplexity():
    x, _ = clusters(1)
    res = viz.tsne(x, SMALL, return_info=True)
    assert np.max(np.abs(res.row_entropies - np.log(10.0))) < 1e-4


def test_kl_non_increasing_after_exaggeration():
    x, _ = clusters(2)
    res = viz.tsne(x, SMALL, return_info=True)
    tail = np.asarray(res.kl_history[SMALL.exaggeration_iters:])
    assert np.all(np.diff(tail) <= 1e-12)


def test_centered_and_deterministic():
    x, _ = clusters(3)
    a, b = viz.tsne(x, SMALL), viz.tsne(x, SMALL)
    assert np.array_equal(a, b)
    assert np.max(np.abs(a.mean(axis=0))) < 1e-8


def test_duplicate_point_lands_close():
    r = np.random.default_rng(5)
    x = r.standard_normal((60, 5))
    x[59] = x[0]
    y = viz.tsne(x, viz.TsneConfig(perplexity=10, iterations=500, seed=1))
    d = np.sqrt(((y[:, None] - y[None]) ** 2).sum(-1))
    pairs = d[np.triu_indices(60, 1)]
    assert d[0, 59] <= np.percentile(pairs, 1)


def test_three_dims():
    x, _ = clusters(4)
    assert viz.tsne(x, viz.TsneConfig(output_dims=3, perplexity=10, iterations=300)).shape == (60, 3)


def test_validation():
    x, _ = clusters(0, 30)
    with pytest.raises(ValidationError):
        viz.tsne(x, viz.TsneConfig(perplexity=10))
    with pytest.raises(ValidationError):
        viz.tsne(x[:5], viz.TsneConfig(perplexity=1))
    with pytest.raises(ValidationError):
        viz.tsne(x, viz.TsneConfig(output_dims=4, perplexity=5))


class TestSvg:
    def test_empty_valid(self):
        root = ET.fromstring(viz.scatter_svg(np.zeros((0, 2))))
        assert root.tag.endswith("svg")

    def test_markers_and_colors(self):
        svg = viz.scatter_svg(np.array([[0.0, 1.0], [1.0, 0.0]]), [0, 1], ["real", "synthetic"])
        root = ET.fromstring(svg)
        assert 'fill="' + viz.CLASS_COLORS[0] in svg and 'fill="' + viz.CLASS_COLORS[1] in svg
        assert svg.count("<circle") == 3 and svg.count("<rect") == 4  # markers + legend; the extra rect is the background
        assert root.get("version") == "1.1"

    def test_three_panels(self):
        svg = viz.scatter_svg(np.random.default_rng(0).standard_normal((5, 3)), [0, 1, 0, 1, 0], ["real"] * 5)
        ET.fromstring(svg)
        assert svg.count('<g class="panel">') == 3
        assert "axis 1 vs 3" in svg

    def test_golden_bytes(self, tmp_path):
        layout = np.array([[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]])
        viz.emit_scatter(layout, [0, 1, 0], ["real", "synthetic", "real"], tmp_path / "a.svg")
        viz.emit_scatter(layout, [0, 1, 0], ["real", "synthetic", "real"], tmp_path / "b.svg")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_io_error_names_path(self, tmp_path):
        with pytest.raises(OSError, match="nope"):
            viz.emit_scatter(np.zeros((0, 2)), [], [], tmp_path / "nope" / "x.svg")

    def test_small_multiples(self):
        grid = [(i, a, np.arange(4) * a) for i in (1, 3) for a in (-1.0, 0.0, 1.0)]
        ET.fromstring(viz.small_multiples_svg(grid))


class TestCsv:
    def test_round_trip(self, tmp_path):
        rows = [{"name": 'a,"b"', "v": 0.1, "n": None}, {"name": "c\nd", "v": 2.5e-300, "n": 3}]
        viz.emit_csv(rows, tmp_path / "t.csv", ["name", "v", "n"])
        raw = (tmp_path / "t.csv").read_bytes()
        assert raw.count(b"\r\n") >= 3
        back = list(csv.reader(io.StringIO(raw.decode(), newline="")))
        assert back[0] == ["name", "v", "n"]
        assert back[1] == ['a,"b"', "0.1", ""] and float(back[2][1]) == 2.5e-300 and back[2][0] == "c\nd"
