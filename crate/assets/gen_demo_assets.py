#!/usr/bin/env python3
"""Regenerates the demo asset base under assets/demo/.

Meshes are written in arbitrary raw units with their front facing the
declared `front_axis`; the loader is responsible for canonicalizing them.
"""

import json
import math
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "demo")
MESHES = os.path.join(OUT, "meshes")


class Mesh:
    def __init__(self):
        self.v = []
        self.c = []
        self.f = []

    def add_box(self, lo, hi, color=None):
        x0, y0, z0 = lo
        x1, y1, z1 = hi
        base = len(self.v)
        for z in (z0, z1):
            for y in (y0, y1):
                for x in (x0, x1):
                    self.v.append((x, y, z))
                    self.c.append(color)
        quads = [
            (0, 2, 3, 1), (4, 5, 7, 6),  # bottom, top
            (0, 1, 5, 4), (2, 6, 7, 3),  # -y, +y
            (0, 4, 6, 2), (1, 3, 7, 5),  # -x, +x
        ]
        for q in quads:
            self.f.append(tuple(base + i for i in q))

    def add_cylinder(self, center, radius, z0, z1, segments=16, color=None, top_radius=None):
        cx, cy = center
        top_radius = radius if top_radius is None else top_radius
        base = len(self.v)
        for i in range(segments):
            a = 2 * math.pi * i / segments
            self.v.append((cx + radius * math.cos(a), cy + radius * math.sin(a), z0))
            self.c.append(color)
        for i in range(segments):
            a = 2 * math.pi * i / segments
            self.v.append((cx + top_radius * math.cos(a), cy + top_radius * math.sin(a), z1))
            self.c.append(color)
        for i in range(segments):
            j = (i + 1) % segments
            self.f.append((base + i, base + j, base + segments + j, base + segments + i))
        self.f.append(tuple(base + i for i in reversed(range(segments))))
        self.f.append(tuple(base + segments + i for i in range(segments)))

    def add_sphere(self, center, radius, rings=8, segments=12, color=None, squash=1.0):
        cx, cy, cz = center
        base = len(self.v)
        self.v.append((cx, cy, cz - radius * squash))
        self.c.append(color)
        for r in range(1, rings):
            phi = math.pi * r / rings
            for s in range(segments):
                th = 2 * math.pi * s / segments
                self.v.append((
                    cx + radius * math.sin(phi) * math.cos(th),
                    cy + radius * math.sin(phi) * math.sin(th),
                    cz - radius * squash * math.cos(phi),
                ))
                self.c.append(color)
        top = len(self.v)
        self.v.append((cx, cy, cz + radius * squash))
        self.c.append(color)
        for s in range(segments):
            t = (s + 1) % segments
            self.f.append((base, base + 1 + t, base + 1 + s))
        for r in range(rings - 2):
            row = base + 1 + r * segments
            nxt = row + segments
            for s in range(segments):
                t = (s + 1) % segments
                self.f.append((row + s, row + t, nxt + t, nxt + s))
        last = base + 1 + (rings - 2) * segments
        for s in range(segments):
            t = (s + 1) % segments
            self.f.append((last + s, last + t, top))

    def transformed(self, fn):
        m = Mesh()
        m.v = [fn(p) for p in self.v]
        m.c = list(self.c)
        m.f = list(self.f)
        return m

    def write(self, path, with_colors):
        with open(path, "w") as fh:
            fh.write("# demo asset\n")
            for p, c in zip(self.v, self.c):
                if with_colors and c is not None:
                    fh.write("v %.6f %.6f %.6f %.4f %.4f %.4f\n" % (p + c))
                else:
                    fh.write("v %.6f %.6f %.6f\n" % p)
            for face in self.f:
                fh.write("f " + " ".join(str(i + 1) for i in face) + "\n")


def table(rng):
    m = Mesh()
    col = (0.55, 0.35, 0.2)
    m.add_box((-1, -1, 0.9), (1, 1, 1.0), col)
    t = 0.1 + 0.05 * rng.random()
    for sx in (-1, 1):
        for sy in (-1, 1):
            x = sx * (1 - t)
            y = sy * (1 - t)
            m.add_box((x - t, y - t, 0), (x + t, y + t, 0.9), col)
    return m


def chair(rng):
    m = Mesh()
    col = (0.3, 0.3, 0.6)
    m.add_box((-1, -1, 0.45), (1, 1, 0.55), col)
    m.add_box((-1, -1, 0.55), (1, -0.8, 1.0 + 0.2 * rng.random()), col)  # backrest at -y, front is +y
    for sx in (-1, 1):
        for sy in (-1, 1):
            m.add_box((sx * 0.9 - 0.08, sy * 0.9 - 0.08, 0), (sx * 0.9 + 0.08, sy * 0.9 + 0.08, 0.45), col)
    return m


def sofa(rng):
    m = Mesh()
    col = (0.5, 0.2, 0.2)
    m.add_box((-2, -1, 0), (2, 1, 0.5), col)
    m.add_box((-2, -1, 0.5), (2, -0.6, 1.0), col)
    arm = 0.3 + 0.2 * rng.random()
    m.add_box((-2, -0.6, 0.5), (-2 + arm, 1, 0.8), col)
    m.add_box((2 - arm, -0.6, 0.5), (2, 1, 0.8), col)
    return m


def bed(rng):
    m = Mesh()
    m.add_box((-1, -2, 0), (1, 2, 0.5), (0.9, 0.9, 0.85))
    m.add_box((-1, -2, 0.5), (1, -1.8, 1.2), (0.4, 0.25, 0.15))
    m.add_box((-0.8, -1.7, 0.5), (0.8, -1.2, 0.65), (1.0, 1.0, 1.0))
    return m


def cabinet(rng):
    m = Mesh()
    m.add_box((-1, -1, 0), (1, 1, 2), (0.7, 0.6, 0.5))
    m.add_box((-0.1, 1, 0.9), (0.1, 1.1, 1.1), (0.2, 0.2, 0.2))  # handle on the front
    return m


def desk(rng):
    m = Mesh()
    col = (0.6, 0.5, 0.4)
    m.add_box((-2, -1, 0.9), (2, 1, 1.0), col)
    m.add_box((-2, -1, 0), (-1.4, 1, 0.9), col)
    m.add_box((1.6, -1, 0), (2, 1, 0.9), col)
    return m


def plant(rng):
    m = Mesh()
    m.add_cylinder((0, 0), 0.5, 0, 0.6, color=(0.6, 0.3, 0.1), top_radius=0.6)
    m.add_sphere((0, 0, 1.2), 0.7, color=(0.1, 0.6, 0.1))
    return m


def picture(rng):
    m = Mesh()
    m.add_box((-1, -0.05, 0), (1, 0.05, 1.4), (0.1, 0.1, 0.1))
    return m


def shelf(rng):
    m = Mesh()
    col = (0.5, 0.4, 0.3)
    m.add_box((-1, -0.5, 0), (1, 0.5, 0.1), col)
    m.add_box((-1, -0.5, 0.8), (1, 0.5, 0.9), col)
    m.add_box((-1, -0.5, 0.1), (-0.9, 0.5, 0.8), col)
    m.add_box((0.9, -0.5, 0.1), (1, 0.5, 0.8), col)
    return m


def clock(rng):
    m = Mesh()
    disk = Mesh()
    disk.add_cylinder((0, 0), 1.0, -0.1, 0.1, segments=20, color=(0.9, 0.9, 0.9))
    # rotate so the disk faces +y
    return disk.transformed(lambda p: (p[0], p[2], p[1] + 1.0))


def mirror(rng):
    m = Mesh()
    m.add_box((-0.8, -0.03, 0), (0.8, 0.03, 2.0), (0.8, 0.85, 0.9))
    m.add_box((-0.9, -0.05, -0.1), (0.9, 0.0, 2.1), (0.3, 0.2, 0.1))
    return m


def cup(rng):
    m = Mesh()
    m.add_cylinder((0, 0), 0.4, 0, 1.0, color=(0.9, 0.9, 1.0), top_radius=0.5)
    m.add_box((0.45, -0.05, 0.3), (0.7, 0.05, 0.7), (0.9, 0.9, 1.0))
    return m


def book(rng):
    m = Mesh()
    m.add_box((-1, -1.5, 0), (1, 1.5, 0.4), (0.7, 0.1, 0.1))
    return m


def vase(rng):
    m = Mesh()
    m.add_sphere((0, 0, 0.8), 0.8, color=(0.2, 0.4, 0.8), squash=1.0)
    m.add_cylinder((0, 0), 0.3, 1.5, 2.4, color=(0.2, 0.4, 0.8), top_radius=0.45)
    return m


def lamp(rng):
    m = Mesh()
    m.add_cylinder((0, 0), 0.6, 0, 0.1, color=(0.3, 0.3, 0.3))
    m.add_cylinder((0, 0), 0.08, 0.1, 1.6, segments=8, color=(0.3, 0.3, 0.3))
    m.add_cylinder((0, 0), 0.8, 1.4, 2.2, color=(1.0, 0.95, 0.7), top_radius=0.35)
    return m


def bottle(rng):
    m = Mesh()
    m.add_cylinder((0, 0), 0.5, 0, 1.6, color=(0.1, 0.5, 0.2))
    m.add_cylinder((0, 0), 0.5, 1.6, 2.0, color=(0.1, 0.5, 0.2), top_radius=0.15)
    m.add_cylinder((0, 0), 0.15, 2.0, 2.6, segments=8, color=(0.1, 0.5, 0.2))
    return m


def box(rng):
    m = Mesh()
    m.add_box((-1, -1, 0), (1, 1, 1), (0.8, 0.7, 0.5))
    m.add_box((-1.05, -1.05, 1), (1.05, 1.05, 1.15), (0.7, 0.6, 0.4))
    return m


def bowl(rng):
    m = Mesh()
    m.add_sphere((0, 0, 0.6), 1.0, color=(0.95, 0.9, 0.8), squash=0.6)
    return m


# class, group, builder, base target dims (w, d, h) in meters, count
SPECS = [
    ("table", "floor", table, (1.2, 0.8, 0.75), 4),
    ("chair", "floor", chair, (0.5, 0.5, 0.9), 3),
    ("sofa", "floor", sofa, (1.8, 0.9, 0.85), 3),
    ("bed", "floor", bed, (1.4, 2.0, 0.9), 2),
    ("cabinet", "floor", cabinet, (0.8, 0.5, 1.8), 3),
    ("desk", "floor", desk, (1.4, 0.7, 0.76), 2),
    ("plant", "floor", plant, (0.5, 0.5, 1.1), 3),
    ("picture", "wall", picture, (0.8, 0.04, 0.6), 3),
    ("shelf", "wall", shelf, (1.0, 0.3, 0.4), 3),
    ("clock", "wall", clock, (0.35, 0.06, 0.35), 2),
    ("mirror", "wall", mirror, (0.6, 0.05, 1.0), 2),
    ("cup", "obj", cup, (0.1, 0.08, 0.12), 3),
    ("book", "obj", book, (0.18, 0.25, 0.04), 3),
    ("vase", "obj", vase, (0.15, 0.15, 0.3), 3),
    ("lamp", "obj", lamp, (0.25, 0.25, 0.45), 3),
    ("bottle", "obj", bottle, (0.08, 0.08, 0.3), 3),
    ("box", "obj", box, (0.3, 0.3, 0.2), 3),
    ("bowl", "obj", bowl, (0.2, 0.2, 0.08), 2),
]

# rotation taking the canonical +y front onto each declared axis
FRONT_ROT = {
    "+y": lambda p: (p[0], p[1], p[2]),
    "-y": lambda p: (-p[0], -p[1], p[2]),
    "+x": lambda p: (p[1], -p[0], p[2]),
    "-x": lambda p: (-p[1], p[0], p[2]),
}


def main():
    rng = random.Random(7)
    os.makedirs(MESHES, exist_ok=True)
    records = []
    for cls, group, builder, dims, count in SPECS:
        for i in range(count):
            asset_id = "%s_%02d" % (cls, i + 1)
            mesh = builder(rng)
            front = rng.choice(["+y", "+y", "-y", "+x", "-x"])
            scale = rng.choice([1.0, 10.0, 37.5])
            off = (rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5))
            rot = FRONT_ROT[front]
            raw = mesh.transformed(
                lambda p: tuple(scale * c + o for c, o in zip(rot(p), off)))
            raw.write(os.path.join(MESHES, asset_id + ".obj"), with_colors=(i % 2 == 0))
            jitter = 0.85 + 0.3 * rng.random()
            target = [round(d * jitter, 3) for d in dims]
            records.append({
                "asset_id": asset_id,
                "class_name": cls,
                "group": group,
                "mesh_path": "meshes/%s.obj" % asset_id,
                "target_dims": target,
                "front_axis": front,
            })
    with open(os.path.join(OUT, "manifest.json"), "w") as fh:
        json.dump(records, fh, indent=2)
        fh.write("\n")
    pairs = {}
    by_group = {}
    for cls, group, *_ in SPECS:
        by_group.setdefault(group, []).append(cls)
    for group, classes in sorted(by_group.items()):
        for k, cls in enumerate(classes):
            pairs[cls] = classes[(k + 1) % len(classes)]
    with open(os.path.join(OUT, "pair_map.json"), "w") as fh:
        json.dump(pairs, fh, indent=2, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    main()
