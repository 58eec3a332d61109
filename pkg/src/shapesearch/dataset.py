"""Synthetic desk-scale corpus generator.

Writes OFF files for jittered, rotated, stretched instances of five base
primitives plus a tab-separated manifest (path<TAB>label). Fully deterministic
for a fixed seed, down to the file bytes.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import BadSpec

CLASS_NAMES = ("sphere", "box", "cylinder", "cone", "torus")

STRETCH_RANGE = (0.8, 1.25)


def _grid(nu, nv, fn, wrap_u=False):
    """Triangulate a parametric surface sampled on an (nu+1) x (nv+1) grid."""
    verts = []
    for i in range(nu + 1 if not wrap_u else nu):
        for j in range(nv + 1):
            verts.append(fn(i, j))
    cols = nv + 1
    rows = nu + 1 if not wrap_u else nu

    def vid(i, j):
        return (i % rows) * cols + j

    tris = []
    for i in range(nu):
        for j in range(nv):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    return np.array(verts, dtype=np.float64), np.array(tris, dtype=np.int64)


def make_sphere(rows=10, cols=14):
    def fn(i, j):
        phi = math.pi * i / rows
        theta = 2.0 * math.pi * j / cols
        return (
            math.sin(phi) * math.cos(theta),
            math.sin(phi) * math.sin(theta),
            math.cos(phi),
        )

    return _grid(rows, cols, fn)


def make_box(n=4):
    verts = []
    tris = []
    axes = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
    for ax, au, av in axes:
        for sign in (1.0, -1.0):
            base = len(verts)
            for i in range(n + 1):
                for j in range(n + 1):
                    p = [0.0, 0.0, 0.0]
                    p[ax] = sign
                    p[au] = -1.0 + 2.0 * i / n
                    p[av] = -1.0 + 2.0 * j / n
                    verts.append(tuple(p))
            for i in range(n):
                for j in range(n):
                    a = base + i * (n + 1) + j
                    b = a + n + 1
                    tris.append((a, b, b + 1))
                    tris.append((a, b + 1, a + 1))
    return np.array(verts, dtype=np.float64), np.array(tris, dtype=np.int64)


def _disk_cap(verts, tris, center, radius, z, segments, flip):
    base = len(verts)
    verts.append((center[0], center[1], z))
    for j in range(segments):
        theta = 2.0 * math.pi * j / segments
        verts.append((radius * math.cos(theta), radius * math.sin(theta), z))
    for j in range(segments):
        a = base + 1 + j
        b = base + 1 + (j + 1) % segments
        tris.append((base, b, a) if flip else (base, a, b))


def make_cylinder(segments=18, stacks=6, radius=0.55, height=1.6):
    def fn(i, j):
        theta = 2.0 * math.pi * j / segments
        z = -height / 2 + height * i / stacks
        return (radius * math.cos(theta), radius * math.sin(theta), z)

    side_v, side_t = _grid(stacks, segments, fn)
    verts = [tuple(v) for v in side_v]
    tris = [tuple(t) for t in side_t]
    _disk_cap(verts, tris, (0.0, 0.0), radius, height / 2, segments, flip=False)
    _disk_cap(verts, tris, (0.0, 0.0), radius, -height / 2, segments, flip=True)
    return np.array(verts, dtype=np.float64), np.array(tris, dtype=np.int64)


def make_cone(segments=18, stacks=6, radius=0.75, height=1.5):
    def fn(i, j):
        theta = 2.0 * math.pi * j / segments
        frac = i / stacks
        r = radius * (1.0 - frac)
        return (r * math.cos(theta), r * math.sin(theta), -height / 2 + height * frac)

    side_v, side_t = _grid(stacks, segments, fn)
    verts = [tuple(v) for v in side_v]
    tris = [tuple(t) for t in side_t]
    _disk_cap(verts, tris, (0.0, 0.0), radius, -height / 2, segments, flip=True)
    return np.array(verts, dtype=np.float64), np.array(tris, dtype=np.int64)


def make_torus(segments=16, sides=10, major=0.7, minor=0.26):
    def fn(i, j):
        u = 2.0 * math.pi * i / segments
        v = 2.0 * math.pi * j / sides
        r = major + minor * math.cos(v)
        return (r * math.cos(u), r * math.sin(u), minor * math.sin(v))

    return _grid(segments, sides, fn)


GENERATORS = {
    "sphere": make_sphere,
    "box": make_box,
    "cylinder": make_cylinder,
    "cone": make_cone,
    "torus": make_torus,
}


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix via a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def write_off(path, vertices, triangles) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("OFF\n")
        fh.write(f"{len(vertices)} {len(triangles)} 0\n")
        for v in vertices:
            fh.write(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


def gen_dataset(out_dir, classes: int = 5, instances: int = 20,
                noise: float = 0.02, seed: int = 0) -> Path:
    """Generate the synthetic corpus and return the manifest path.

    Each instance is the class primitive with an anisotropic stretch, a
    uniform random rotation, Gaussian vertex jitter of the given level, and a
    random global translation/scale (which pose normalization removes again).
    """
    if classes < 2 or classes > len(CLASS_NAMES):
        raise BadSpec(f"classes must be in [2, {len(CLASS_NAMES)}]")
    if instances < 2:
        raise BadSpec("instances must be >= 2")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    for label in CLASS_NAMES[:classes]:
        base_verts, tris = GENERATORS[label]()
        for inst in range(instances):
            stretch = rng.uniform(*STRETCH_RANGE, size=3)
            rot = _random_rotation(rng)
            verts = (base_verts * stretch) @ rot.T
            if noise > 0:
                verts = verts + rng.normal(0.0, noise, size=verts.shape)
            verts = verts * rng.uniform(0.5, 2.0) + rng.uniform(-2.0, 2.0, size=3)
            name = f"{label}_{inst:03d}.off"
            write_off(out_dir / name, verts, tris)
            rows.append((name, label))
    manifest = out_dir / "manifest.tsv"
    with open(manifest, "w", encoding="utf-8", newline="\n") as fh:
        for name, label in rows:
            fh.write(f"{name}\t{label}\n")
    return manifest
