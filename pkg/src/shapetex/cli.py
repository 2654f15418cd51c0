"""Command-line interface: ``shapetex <verb> [input] --out DIR [options]``.

Verbs: simulate, preprocess, detect, estimate, pipeline, plot.  Each run
writes its artifacts and a ``manifest.json`` into the output directory.
The manifest records every parameter, the seed, input and output hashes and
library versions, and nothing time-dependent, so equal configurations give
byte-identical manifests.  A stage whose recorded key (a hash of its
parameters and input hashes) matches the existing manifest, and whose
outputs are intact, is skipped.

Exit codes: 0 success, 1 numerical or validation failure, 2 I/O or
configuration failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import OPTIONS, ConfigError, keys_for, read_config_file, resolve, to_jsonable
from .detect import DetectionParams, latent_points, local_maxima, neighbour_pairs
from .errors import DegenerateInputError, ImageFormatError
from .estimate import EstimationConfig, estimate_orientation
from .geometry import CameraModel, ObservationWindow, ScalingContext, SurfaceOrientation
from .imaging import load_image, load_probability_map, preprocess, save_image, save_probability_map
from .pattern import PointPattern, parse_csv, read_pattern, sidecar_path, write_pattern
from .plot import map_svg, orientation_svg, overlay_svg, pattern_svg
from .render import render_tiles
from .simulate import SimulationSpec, simulate_by_thinning, simulate_on_plane

RUN_ROOT_ENV = "SHAPETEX_RUN_ROOT"
LOCK_NAME = ".shapetex.lock"
MANIFEST = "manifest.json"
SIM_WINDOW = ObservationWindow.symmetric()
PHOTO_WINDOW = ObservationWindow(-0.69, 0.69, -0.5, 0.5)


class RunLocked(OSError):
    pass


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(path: Path, text: str) -> None:
    path.write_text(text)


class Run:
    """Output directory of one command, with its lock and manifest."""

    def __init__(self, out: Path, command: str, seed: int, cfg: dict, force: bool = False):
        self.out = out
        self.command = command
        self.seed = seed
        self.cfg = cfg
        self.force = force
        self.inputs = {}
        self.stages = {}
        self.previous = {}

    def __enter__(self):
        self.out.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.out / LOCK_NAME, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RunLocked(f"run directory {self.out} is locked by another process "
                            f"(remove {LOCK_NAME} if stale)") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        man = self.out / MANIFEST
        if man.exists():
            try:
                self.previous = json.loads(man.read_text()).get("stages", {})
            except (json.JSONDecodeError, AttributeError):
                self.previous = {}
        return self

    def __exit__(self, *exc):
        (self.out / LOCK_NAME).unlink(missing_ok=True)
        return False

    def add_input(self, name: str, path: Path) -> str:
        digest = sha256_file(path)
        self.inputs[name] = {"path": str(path), "sha256": digest}
        return digest

    def stage_key(self, stage: str, params: dict, upstream: dict) -> str:
        blob = json.dumps({"stage": stage, "params": params, "upstream": upstream, "version": __version__},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def run_stage(self, stage: str, params: dict, upstream: dict, func) -> dict:
        """Run ``func(out_dir) -> [file names]`` unless an identical result is on disk."""
        key = self.stage_key(stage, params, upstream)
        prev = self.previous.get(stage, {})
        if not self.force and prev.get("key") == key and prev.get("status") == "done":
            outs = prev.get("outputs", {})
            if outs and all((self.out / f).exists() and sha256_file(self.out / f) == h for f, h in outs.items()):
                self.stages[stage] = prev
                print(f"{stage}: up to date, skipped")
                return outs
        try:
            names = func(self.out)
        except Exception as exc:
            self.stages[stage] = {"key": key, "status": "failed"}
            self.write_manifest("failed", {"stage": stage, "message": str(exc)})
            raise
        outs = {n: sha256_file(self.out / n) for n in sorted(names)}
        self.stages[stage] = {"key": key, "status": "done", "outputs": outs}
        print(f"{stage}: wrote {', '.join(sorted(names))}")
        return outs

    def manifest(self, status: str = "complete", error: dict | None = None) -> dict:
        m = {
            "tool": "shapetex",
            "version": __version__,
            "libraries": {"numpy": np.__version__, "scipy": scipy.__version__},
            "command": self.command,
            "seed": self.seed,
            "config": to_jsonable(self.cfg),
            "inputs": self.inputs,
            "stages": self.stages,
            "status": status,
        }
        if error:
            m["error"] = error
        return m

    def write_manifest(self, status="complete", error=None) -> str:
        text = _json(self.manifest(status, error))
        _write(self.out / MANIFEST, text)
        return hashlib.sha256(text.encode()).hexdigest()


# -- stages ------------------------------------------------------------------

def _camera(cfg, window):
    return CameraModel(cfg["camera.f"], window)


def stage_simulate(cfg, seed):
    window = cfg["camera.window"] or SIM_WINDOW
    cam = _camera(cfg, window)
    o = SurfaceOrientation.from_degrees(cfg["simulate.eta1"], cfg["simulate.eta2"], h=cfg["simulate.h"])
    if not o.is_admissible(cam):
        raise ValueError(f"orientation ({cfg['simulate.eta1']}, {cfg['simulate.eta2']}) deg is not admissible "
                         f"for this window and focal length")
    kind, beta = cfg["simulate.kind"], cfg["simulate.beta"]
    spec = SimulationSpec.for_beta(kind, beta, o, cam, seed=seed, random_phase=cfg["simulate.random_phase"])

    def run(out: Path):
        if cfg["simulate.method"] == "thinning":
            if kind != "poisson":
                raise ConfigError("simulate.method: thinning applies to poisson patterns only")
            pat = simulate_by_thinning(beta, ScalingContext.build(o, cam), seed)
        else:
            pat = simulate_on_plane(spec)
        write_pattern(pat, out / "pattern.csv")
        _write(out / "pattern.svg", pattern_svg(
            pat, f"simulated {kind} pattern, slant {cfg['simulate.eta1']:g} deg, tilt {cfg['simulate.eta2']:g} deg"))
        names = ["pattern.csv", "pattern.json", "pattern.svg"]
        if cfg["simulate.render_px"]:
            if kind != "regular":
                raise ConfigError("simulate.render_px: scenes can be rendered for regular patterns only")
            w = cfg["simulate.render_px"]
            h = int(round(w * window.height / window.width))
            save_image(render_tiles(spec, (w, h), grout=cfg["simulate.grout"]), out / "scene.pgm")
            names.append("scene.pgm")
        return names

    return run


def stage_preprocess(cfg, image: Path):
    def run(out: Path):
        fmt = None if cfg["preprocess.format"] == "auto" else cfg["preprocess.format"]
        img = load_image(image, fmt)
        thr = cfg["preprocess.threshold"]
        method, t = ("otsu", None) if thr == "otsu" else ("fixed", thr)
        pmap = preprocess(img, sigma=cfg["preprocess.sigma"], method=method, t=t,
                          margin_px=(cfg["preprocess.margin_x"], cfg["preprocess.margin_y"]))
        save_probability_map(pmap, out / "map.pgm")
        _write(out / "map.svg", map_svg(pmap))
        return ["map.pgm", "map.json", "map.svg"]

    return run


def detection_params(cfg) -> DetectionParams:
    return DetectionParams(cfg["detect.k1"], cfg["detect.k2"], cfg["detect.segment_step"], cfg["detect.cutoff"])


def stage_detect(cfg, map_path: Path):
    def run(out: Path):
        pmap = load_probability_map(map_path)
        if not pmap.grid.max() > 0:
            raise DegenerateInputError(f"{map_path}: probability map is zero everywhere")
        params = detection_params(cfg)
        pat = latent_points(pmap, params)
        write_pattern(pat, out / "points.csv")
        maxima = local_maxima(pmap, params.k1)
        edges = neighbour_pairs(maxima, pmap, params)
        _write(out / "overlay.svg", overlay_svg(pmap, pmap.to_window(maxima.rc), edges, pat.points))
        return ["points.csv", "points.json", "overlay.svg"]

    return run


def _outside_message(points, window):
    bad = points[~window.contains(points)]
    shown = ", ".join(f"({x:.4g}, {y:.4g})" for x, y in bad[:5])
    more = f" and {len(bad) - 5} more" if len(bad) > 5 else ""
    return f"{len(bad)} point(s) outside the estimation window {window.to_dict()}: {shown}{more}"


def stage_estimate(cfg, pattern_path: Path):
    def run(out: Path):
        pts = parse_csv(Path(pattern_path).read_text())
        side = sidecar_path(pattern_path)
        window = cfg["camera.window"]
        if window is None:
            window = ObservationWindow.from_dict(json.loads(side.read_text())["window"]) if side.exists() \
                else PHOTO_WINDOW
        if not np.all(window.contains(pts)):
            raise ValueError(_outside_message(pts, window))
        pat = PointPattern(pts, window)
        cam = _camera(cfg, window)
        ecfg = EstimationConfig(cam, cfg["estimate.grid_eta1"], cfg["estimate.grid_eta2"],
                                cfg["estimate.refine_tol"], cfg["estimate.max_iter"])
        res = estimate_orientation(pat, ecfg)
        result = {**res.to_dict(), "camera": cam.to_dict(), "pattern": Path(pattern_path).name}
        _write(out / "result.json", _json(result))
        _write(out / "orientation.svg", orientation_svg(pat, res.eta1_hat, res.eta2_hat))
        return ["result.json", "orientation.svg"]

    return run


# -- verbs -------------------------------------------------------------------

def _existing(path_str: str) -> Path:
    p = Path(path_str)
    if not p.exists():
        raise FileNotFoundError(f"input file not found: {p}")
    return p


def _out_dir(arg: str) -> Path:
    out = Path(arg)
    if not out.is_absolute():
        out = Path(os.environ.get(RUN_ROOT_ENV, ".")) / out
    return out


def _section(cfg, *sections):
    return {k: v for k, v in to_jsonable(cfg).items() if k.split(".")[0] in sections}


def cmd_simulate(args, cfg):
    with Run(_out_dir(args.out), "simulate", args.seed, cfg, args.force) as run:
        run.run_stage("simulate", {**_section(cfg, "camera", "simulate"), "seed": args.seed}, {},
                      stage_simulate(cfg, args.seed))
        run.write_manifest()


def _single(verb, args, cfg, sections, func_factory, input_name):
    src = _existing(args.input)
    with Run(_out_dir(args.out), verb, args.seed, cfg, args.force) as run:
        digest = run.add_input(input_name, src)
        upstream = {input_name: digest}
        side = src.with_suffix(".json")
        if side.exists():
            upstream["sidecar"] = sha256_file(side)
        run.run_stage(verb, _section(cfg, *sections), upstream, func_factory(cfg, src))
        run.write_manifest()


def cmd_preprocess(args, cfg):
    _single("preprocess", args, cfg, ("preprocess",), stage_preprocess, "image")


def cmd_detect(args, cfg):
    _single("detect", args, cfg, ("detect",), stage_detect, "map")


def cmd_estimate(args, cfg):
    _single("estimate", args, cfg, ("camera", "estimate"), stage_estimate, "pattern")


def cmd_pipeline(args, cfg):
    src = _existing(args.input)
    out = _out_dir(args.out)
    with Run(out, "pipeline", args.seed, cfg, args.force) as run:
        upstream = {"image": run.add_input("image", src)}
        plan = [
            ("preprocess", ("preprocess",), lambda: stage_preprocess(cfg, src)),
            ("detect", ("detect",), lambda: stage_detect(cfg, out / "map.pgm")),
            ("estimate", ("camera", "estimate"), lambda: stage_estimate(cfg, out / "points.csv")),
        ]
        for stage, sections, factory in plan:
            outs = run.run_stage(stage, _section(cfg, *sections), upstream, factory())
            upstream = {stage: outs}
        digest = run.write_manifest()
        print(f"manifest sha256 {digest}")


def _result_pattern(result_path: Path, res: dict) -> Path:
    """Pattern CSV behind a result: next to it (pipeline runs), else the input its manifest records."""
    local = result_path.parent / res["pattern"]
    if local.exists():
        return local
    man = result_path.parent / MANIFEST
    if man.exists():
        recorded = json.loads(man.read_text()).get("inputs", {}).get("pattern", {}).get("path")
        if recorded and Path(recorded).exists():
            return Path(recorded)
    raise FileNotFoundError(f"pattern {res['pattern']!r} for {result_path} not found next to it "
                            f"or via its manifest")


def cmd_plot(args, cfg):
    src = _existing(args.input)
    with Run(_out_dir(args.out), "plot", args.seed, cfg, args.force) as run:
        digest = run.add_input("artifact", src)

        def draw(out: Path):
            name = src.stem + ".svg"
            if src.suffix == ".csv":
                svg = pattern_svg(read_pattern(src))
            elif src.suffix == ".pgm":
                svg = map_svg(load_probability_map(src))
            elif src.suffix == ".json":
                res = json.loads(src.read_text())
                if "eta1_deg" not in res or "pattern" not in res:
                    raise ConfigError(f"{src}: not an estimation result")
                pat = read_pattern(_result_pattern(src, res))
                svg = orientation_svg(pat, math.radians(res["eta1_deg"]), math.radians(res["eta2_deg"]))
                name = src.stem + "_orientation.svg"
            else:
                raise ConfigError(f"{src}: cannot plot files of type {src.suffix!r}")
            _write(out / name, svg)
            return [name]

        run.run_stage("plot", {}, {"artifact": digest}, draw)
        run.write_manifest()


COMMANDS = {
    "simulate": (cmd_simulate, None, "simulate a point pattern on a slanted plane"),
    "preprocess": (cmd_preprocess, "image", "grayscale image (PGM or PNG) to probability map"),
    "detect": (cmd_detect, "map", "probability map (16-bit PGM) to point pattern"),
    "estimate": (cmd_estimate, "pattern", "point pattern CSV to slant/tilt estimate"),
    "pipeline": (cmd_pipeline, "image", "preprocess, detect and estimate in one run directory"),
    "plot": (cmd_plot, "artifact", "redraw the SVG figure for a pattern CSV, map PGM or result JSON"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shapetex", description="Surface orientation from texture.")
    parser.add_argument("--version", action="version", version=f"shapetex {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, (_, input_name, help_text) in COMMANDS.items():
        p = sub.add_parser(verb, help=help_text, description=help_text)
        if input_name:
            p.add_argument("input", metavar=input_name.upper(), help=f"input {input_name} file")
        p.add_argument("--out", default="run", help=f"output directory (relative paths are resolved "
                                                    f"against ${RUN_ROOT_ENV}, default the current directory)")
        p.add_argument("--seed", type=int, default=0, help="random seed (recorded in the manifest)")
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--force", action="store_true", help="recompute stages even if up to date")
        for key in keys_for(verb):
            opt = OPTIONS[key]
            default = "" if opt.default is None else f" (default {opt.default})"
            p.add_argument(f"--{key}", dest=key, default=argparse.SUPPRESS, metavar="VALUE",
                           help=opt.help + default)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    func = COMMANDS[args.verb][0]
    try:
        file_values = read_config_file(args.config) if args.config else {}
        overrides = {k: v for k, v in vars(args).items() if k in OPTIONS}
        cfg = resolve(args.verb, file_values, overrides)
        func(args, cfg)
    except (ConfigError, ImageFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
