"""Bone probability and gradient maps from a label volume.

Builds a sphere label, derives the smoothed boundary probability and its
unit gradient, reports how well the gradient agrees with the true radial
direction near the shell, and saves both maps as volume files.

    python3 demos/prepare_maps.py [--sigma S] [--out DIR]
"""

import argparse
from pathlib import Path

import numpy as np

from aifrecon import io
from aifrecon.geometry import VolumeMeta
from aifrecon.mapprep import make_gradient_map, make_probability_map
from aifrecon.simulate import Sphere, make_phantom


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sigma", type=float, default=3.0)
    ap.add_argument("--out", default="demo_out/maps")
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)

    meta = VolumeMeta((48, 48, 48))
    centre, radius = np.array([23.5, 23.5, 23.5]), 12.0
    label = make_phantom(Sphere(tuple(centre), radius), meta)
    prob = make_probability_map(label, a.sigma)
    gdir = make_gradient_map(prob)

    rel = meta.voxel_centers() - centre
    r = np.linalg.norm(rel, axis=-1)
    print("radius  mean p   mean cos(gradient, -radial)")
    for lo in range(4, 22, 2):
        sel = (r >= lo) & (r < lo + 2)
        cos = np.einsum("...k,...k->...", gdir.data[sel], -rel[sel] / r[sel, None])
        print(f"{lo:>3}-{lo + 2:<3} {prob.data[sel].mean():7.3f}   {cos.mean():+.3f}")
    print("the gradient climbs toward the shell from both sides, so it flips sign at the surface")

    io.save_volume(label, out / "label.vol", "u8")
    io.save_volume(prob, out / "prob.vol", "f32")
    io.save_volume(gdir, out / "dir.vol", "vec3f32")
    io.export_slice(prob, "z", 24, out / "prob_z24.pgm")
    print(f"maps written to {out}/")


if __name__ == "__main__":
    main()
