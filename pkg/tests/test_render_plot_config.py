import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from shapetex.config import ConfigError, keys_for, parse_value, read_config_file, resolve
from shapetex.geometry import CameraModel, ObservationWindow, SurfaceOrientation
from shapetex.pattern import PointPattern
from shapetex.plot import CANVAS_WIDTH, map_svg, orientation_svg, overlay_svg, pattern_svg
from shapetex.render import INK, PAPER, disk_grid, gaussian_bumps, render_disks, render_tiles
from shapetex.simulate import SimulationSpec, simulate_on_plane

SVG = "{http://www.w3.org/2000/svg}"


class TestRender:
    def test_disk_area_and_centroid(self):
        img = render_disks([(30.3, 40.6)], [12.5], (64, 80), supersample=8)
        cover = (PAPER - img.pixels) / (PAPER - INK)
        assert cover.sum() == pytest.approx(math.pi * 12.5 ** 2, rel=2e-3)
        rr, cc = np.mgrid[0:64, 0:80]
        assert (cover * rr).sum() / cover.sum() == pytest.approx(30.3, abs=0.01)
        assert (cover * cc).sum() / cover.sum() == pytest.approx(40.6, abs=0.01)

    def test_disk_grid_shape(self):
        centers, radii, shape = disk_grid()
        assert shape == (232, 288) and len(centers) == 20
        assert np.all(radii == 24.0)
        j, rj, _ = disk_grid(jitter=1, seed=3)
        assert np.all(np.abs(j - centers) <= 1) and np.all(np.abs(rj / 24 - 1) <= 0.03)

    def test_bumps_peak_at_centres(self):
        pm = gaussian_bumps([(10, 12)], (30, 40), heights=[0.5])
        assert pm.grid.max() == 1.0 and pm.grid[10, 12] == 1.0

    def test_tiles_dark_at_lattice_points(self):
        cam = CameraModel(0.98, ObservationWindow.symmetric())
        spec = SimulationSpec.for_beta("regular", 100, SurfaceOrientation.from_degrees(30, 20), cam,
                                       seed=2, random_phase=True)
        img = render_tiles(spec, (200, 200), grout=0.3)
        from shapetex.imaging import ProbabilityMap, default_window

        rc = np.round(ProbabilityMap(np.zeros((200, 200)), default_window(200, 200))
                      .to_pixel(simulate_on_plane(spec).points)).astype(int)
        rc = rc[(rc >= 0).all(1) & (rc < 200).all(1)]
        assert np.all(img.pixels[rc[:, 0], rc[:, 1]] < 0.5)

    def test_tiles_need_regular(self):
        cam = CameraModel(0.98, ObservationWindow.symmetric())
        spec = SimulationSpec.for_beta("poisson", 100, SurfaceOrientation(0, 0), cam)
        with pytest.raises(ValueError):
            render_tiles(spec, (50, 50))


class TestPlot:
    def pattern(self):
        rng = np.random.default_rng(0)
        return PointPattern(rng.uniform(-0.5, 0.5, (30, 2)), ObservationWindow.symmetric())

    def test_valid_and_deterministic(self):
        p = self.pattern()
        for svg in (pattern_svg(p), orientation_svg(p, 0.5, 1.0)):
            root = ET.fromstring(svg)
            assert root.tag == SVG + "svg" and root.get("width") == str(CANVAS_WIDTH)
        assert pattern_svg(p) == pattern_svg(p)
        assert len(ET.fromstring(pattern_svg(p)).findall(SVG + "circle")) == 30

    @pytest.mark.parametrize("eta2, sign", [(0.0, (1, 0)), (math.pi / 2, (0, -1)), (math.pi, (-1, 0))])
    def test_arrow_direction(self, eta2, sign):
        line = ET.fromstring(orientation_svg(self.pattern(), 0.6, eta2)).find(SVG + "line")
        dx = float(line.get("x2")) - float(line.get("x1"))
        dy = float(line.get("y2")) - float(line.get("y1"))
        # x2 points up in the window, down in SVG coordinates
        assert np.allclose(np.sign(np.round([dx, dy], 6)), sign)
        assert math.hypot(dx, dy) == pytest.approx(0.4 * CANVAS_WIDTH * math.sin(0.6), abs=0.02)

    def test_map_and_overlay(self):
        pm = gaussian_bumps([(20, 20), (20, 60)], (40, 80))
        root = ET.fromstring(map_svg(pm))
        assert float(root.get("height")) == pytest.approx(CANVAS_WIDTH / 2)
        svg = overlay_svg(pm, pm.to_window([[20, 20], [20, 60]]), [(0, 1)], pm.to_window([[20, 20]]))
        root = ET.fromstring(svg)
        assert len(root.findall(SVG + "line")) == 1


class TestConfig:
    def test_defaults_and_preset(self):
        cfg = resolve("detect", {}, {})
        assert cfg["detect.k1"] == 37 and cfg["detect.k2"] == 0.25
        assert resolve("detect", {"detect.preset": "bricks"}, {})["detect.k1"] == 27
        assert resolve("detect", {"detect.preset": "bricks"}, {"detect.k1": "9"})["detect.k1"] == 9

    def test_precedence(self):
        cfg = resolve("simulate", {"simulate.beta": "100"}, {"simulate.beta": "200"})
        assert cfg["simulate.beta"] == 200.0
        assert resolve("simulate", {"simulate.beta": "100"}, {})["simulate.beta"] == 100.0

    def test_verb_sections(self):
        assert "detect.k2" not in keys_for("simulate")
        assert set(keys_for("pipeline")) >= {"camera.f", "preprocess.sigma", "detect.k1", "estimate.max_iter"}

    @pytest.mark.parametrize("key, raw", [
        ("detect.k2", "1.5"), ("simulate.eta1", "90"), ("preprocess.sigma", "0.2"),
        ("simulate.kind", "hex"), ("camera.window", "1,2,3"), ("simulate.random_phase", "maybe"),
        ("preprocess.threshold", "1.0"), ("camera.f", "abc"),
    ])
    def test_errors_name_key(self, key, raw):
        with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
            parse_value(key, raw)

    def test_values(self):
        assert parse_value("camera.window", "-1, 1, -0.5, 0.5") == ObservationWindow(-1, 1, -0.5, 0.5)
        assert parse_value("detect.cutoff", "none") is None
        assert parse_value("preprocess.threshold", "OTSU") == "otsu"
        assert parse_value("simulate.random_phase", "no") is False

    def test_file_errors(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("detect.k2 = 0.3\nnonsense\n")
        with pytest.raises(ConfigError, match=":2:"):
            read_config_file(f)
