"""Writes the reader fixtures with an independent implementation.

points3D.txt / points3D.bin: the same COLMAP points in both encodings.
gs_degree3.ply: a 3DGS-style checkpoint (float32, normals, channel-major
f_rest) written with plyfile, plus gs_degree3.json with the expected values.
"""
import json
import struct

import numpy as np
from plyfile import PlyData, PlyElement

rng = np.random.default_rng(7)

points = []
for i in range(12):
    pid = int(rng.integers(1, 10_000))
    xyz = rng.normal(size=3) * 3.0
    rgb = rng.integers(0, 256, size=3)
    err = float(rng.uniform(0.0, 2.0))
    track = [(int(rng.integers(1, 50)), int(rng.integers(0, 4000))) for _ in range(int(rng.integers(0, 5)))]
    points.append((pid, xyz, rgb, err, track))
# an exactly representable point and an empty track
points.append((424242, np.array([0.5, -1.25, 3.0]), np.array([0, 128, 255]), 0.0, []))

with open("points3D.txt", "w") as f:
    f.write("# 3D point list with one line of data per point:\n")
    f.write("#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n")
    f.write(f"# Number of points: {len(points)}, mean track length: 0\n")
    for pid, xyz, rgb, err, track in points:
        fields = [str(pid)] + [repr(float(v)) for v in xyz] + [str(int(c)) for c in rgb] + [repr(err)]
        for im, p2 in track:
            fields += [str(im), str(p2)]
        f.write(" ".join(fields) + "\n")

with open("points3D.bin", "wb") as f:
    f.write(struct.pack("<Q", len(points)))
    for pid, xyz, rgb, err, track in points:
        f.write(struct.pack("<Q3d3Bd", pid, *map(float, xyz), *map(int, rgb), err))
        f.write(struct.pack("<Q", len(track)))
        for im, p2 in track:
            f.write(struct.pack("<ii", im, p2))

# 3DGS save_ply layout
n, rest = 5, 15
xyz = rng.normal(size=(n, 3)).astype(np.float32)
normals = np.zeros_like(xyz)
f_dc = rng.normal(size=(n, 3)).astype(np.float32)
f_rest = (rng.normal(size=(n, 3, rest)) * 0.1).astype(np.float32)  # (n, channel, coeff)
opacity = rng.normal(size=(n, 1)).astype(np.float32)
scale = rng.uniform(-5, -2, size=(n, 3)).astype(np.float32)
rot = rng.normal(size=(n, 4)).astype(np.float32)

names = ["x", "y", "z", "nx", "ny", "nz"] + [f"f_dc_{i}" for i in range(3)]
names += [f"f_rest_{i}" for i in range(3 * rest)] + ["opacity"]
names += [f"scale_{i}" for i in range(3)] + [f"rot_{i}" for i in range(4)]
attrs = np.concatenate([xyz, normals, f_dc, f_rest.reshape(n, -1), opacity, scale, rot], axis=1)
elements = np.empty(n, dtype=[(a, "f4") for a in names])
elements[:] = list(map(tuple, attrs))
PlyData([PlyElement.describe(elements, "vertex")]).write("gs_degree3.ply")

expected = []
for i in range(n):
    sh = [[float(v) for v in f_dc[i]]] + [[float(f_rest[i, c, k]) for c in range(3)] for k in range(rest)]
    expected.append({
        "position": [float(v) for v in xyz[i]],
        "rotation": [float(v) for v in rot[i]],
        "log_scale": [float(v) for v in scale[i]],
        "opacity_raw": float(opacity[i, 0]),
        "sh": sh,
    })
with open("gs_degree3.json", "w") as f:
    json.dump(expected, f, indent=1)
