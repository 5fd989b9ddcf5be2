"""Command-line entry point.

Exit status is 0 on success, 1 for usage or validation errors and 2 for
file-system errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import io
from .geometry import make_beam_direction_map
from .mapprep import DEFAULT_SIGMA, make_gradient_map, make_probability_map
from .metrics import SurfaceMask, compare, otsu_threshold
from .recon import ReconConfig, distribute, fill_holes
from .simulate import make_phantom, make_sweep
from .volume import ScalarVolume

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

_DEFAULTS = ReconConfig()


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _scalar(path: str, what: str) -> ScalarVolume:
    vol = io.load_volume(path)
    if not isinstance(vol, ScalarVolume):
        raise ValueError(f"{path}: {what} must be a scalar volume")
    return vol


def cmd_phantom(a) -> None:
    shape, meta = io.load_phantom_config(a.config)
    io.save_volume(make_phantom(shape, meta), a.out, "u8")


def cmd_prep_maps(a) -> None:
    label = _scalar(a.label, "the label")
    prob = make_probability_map(label, a.sigma)
    io.save_volume(prob, a.out_prob, "f32")
    io.save_volume(make_gradient_map(prob), a.out_dir, "vec3f32")


def cmd_simulate(a) -> None:
    spec, params = io.load_sweep_config(a.spec)
    label = _scalar(a.phantom, "the phantom")
    io.save_bundle(make_sweep(spec, label, params, seed=a.seed), a.out)


def cmd_reconstruct(a) -> None:
    cfg = ReconConfig(
        alpha=a.alpha,
        beta=a.beta,
        compensate=a.compensate,
        hole_fill_radius=a.hole_fill_radius,
        method=a.method,
    )
    frames = io.load_bundle(a.bundle)
    prob = _scalar(a.prob, "--prob")
    gdir = io.load_volume(a.dir)
    if isinstance(gdir, ScalarVolume):
        raise ValueError(f"{a.dir}: --dir must be a vec3f32 volume")
    bmap = make_beam_direction_map(frames.geom)
    out = distribute(frames, prob, gdir, bmap, prob.meta, cfg)
    io.save_volume(fill_holes(out, cfg.hole_fill_radius), a.out, "f32")
    if a.out_visited:
        io.save_volume(ScalarVolume(prob.meta, out.visited.astype(np.uint8)), a.out_visited, "u8")


def _named(items: Sequence[str]) -> List[Tuple[str, str]]:
    out = []
    for item in items:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        if not name or not path:
            raise UsageError(f"volume argument {item!r} must be NAME=PATH or PATH")
        out.append((name, path))
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        raise UsageError(f"volume names must be unique, got {names}")
    return out


def cmd_metrics(a) -> None:
    named = _named(a.volumes)
    mvol = _scalar(a.mask, "--mask")
    mask = SurfaceMask.from_label(mvol) if a.from_label else SurfaceMask(mvol.meta, mvol.data != 0)
    region = None
    if a.visited:
        region = _scalar(a.visited, "--visited").data != 0
    vols = [(n, _scalar(p, n)) for n, p in named]
    if a.threshold == "otsu":
        threshold = otsu_threshold(vols[0][1], region)
    else:
        try:
            threshold = float(a.threshold)
        except ValueError:
            raise UsageError(f"--threshold must be 'otsu' or a number, got {a.threshold!r}") from None
    rows = compare(vols, mask, threshold, region)
    if a.json:
        doc = {"threshold": threshold, "reports": [dict(name=n, **asdict(r)) for n, r in rows]}
        print(json.dumps(doc, indent=1))
        return
    width = max(len("volume"), *(len(n) for n, _ in rows))
    print(f"# threshold {threshold:.6g}")
    print(f"{'volume':<{width}}  surface_mean  background_mean  contrast_ratio       cnr  completeness")
    for n, r in rows:
        print(
            f"{n:<{width}}  {r.surface_mean:12.4f}  {r.background_mean:15.4f}  "
            f"{r.contrast_ratio:14.4f}  {r.cnr:8.4f}  {r.completeness:12.4f}"
        )


def cmd_export_slice(a) -> None:
    vol = _scalar(a.vol, "--vol")
    io.export_slice(vol, a.axis, a.index, a.out)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="aifrecon", description="Angle-weighted 3D ultrasound reconstruction tools.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("phantom", help="voxelize an analytic phantom", formatter_class=fmt)
    s.add_argument("--config", required=True, help="phantom JSON (grid and shape)")
    s.add_argument("--out", required=True, help="output u8 label volume")
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("prep-maps", help="probability and gradient maps from a label", formatter_class=fmt)
    s.add_argument("--label", required=True, help="binary label volume")
    s.add_argument("--sigma", type=float, default=DEFAULT_SIGMA, help="Gaussian sigma in voxels")
    s.add_argument("--out-prob", required=True, help="output f32 probability volume")
    s.add_argument("--out-dir", required=True, help="output vec3f32 gradient volume")
    s.set_defaults(func=cmd_prep_maps)

    s = sub.add_parser("simulate", help="synthesize a tracked frame bundle", formatter_class=fmt)
    s.add_argument("--spec", required=True, help="sweep JSON")
    s.add_argument("--phantom", required=True, help="label volume")
    s.add_argument("--seed", type=int, default=0, help="noise seed")
    s.add_argument("--out", required=True, help="output bundle directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("reconstruct", help="compound a bundle into a volume", formatter_class=fmt)
    s.add_argument("--bundle", required=True, help="frame bundle directory")
    s.add_argument("--prob", required=True, help="probability volume")
    s.add_argument("--dir", required=True, help="gradient volume")
    s.add_argument("--method", choices=("baseline", "aif"), default=_DEFAULTS.method, help="distribution rule")
    s.add_argument("--compensate", action="store_true", default=_DEFAULTS.compensate, help="oblique-angle compensation")
    s.add_argument("--alpha", type=float, default=_DEFAULTS.alpha, help="enhancement strength")
    s.add_argument("--beta", type=float, default=_DEFAULTS.beta, help="compensation cutoff on cos(angle)")
    s.add_argument("--hole-fill-radius", type=float, default=_DEFAULTS.hole_fill_radius, help="in voxels")
    s.add_argument("--out", required=True, help="output f32 volume")
    s.add_argument("--out-visited", help="optional u8 mask of voxels hit by any pixel")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("metrics", help="contrast and completeness table", formatter_class=fmt)
    s.add_argument("--mask", required=True, help="surface mask volume (nonzero = surface)")
    s.add_argument("--from-label", action="store_true", help="treat --mask as a label and derive its surface")
    s.add_argument("--threshold", default="otsu", help="'otsu' (on the first volume) or a number")
    s.add_argument("--visited", help="u8 volume restricting the evaluated region")
    s.add_argument("--json", action="store_true", help="print JSON instead of a table")
    s.add_argument("volumes", nargs="+", metavar="NAME=PATH", help="volumes to compare, in order")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("export-slice", help="write one plane as a PGM image", formatter_class=fmt)
    s.add_argument("--vol", required=True, help="scalar volume")
    s.add_argument("--axis", choices=("x", "y", "z"), required=True)
    s.add_argument("--index", type=int, required=True)
    s.add_argument("--out", required=True, help="output .pgm file")
    s.set_defaults(func=cmd_export_slice)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"aifrecon: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, IndexError) as exc:
        print(f"aifrecon: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
