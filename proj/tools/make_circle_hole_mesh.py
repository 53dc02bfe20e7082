"""Generate tests/data/circle_hole.mesh: [-1,1]^2 minus a disc, 851 nodes.

Run once; the output is committed so tests do not depend on scipy.
"""
import sys

import numpy as np
from scipy.spatial import Delaunay

TARGET = 851
R = 0.4
rng = np.random.default_rng(7)

k = 24  # outer segments per side
t = np.linspace(-1.0, 1.0, k + 1)[:-1]
outer = np.concatenate([
    np.stack([t, -np.ones(k)], 1),
    np.stack([np.ones(k), t], 1),
    np.stack([-t, np.ones(k)], 1),
    np.stack([-np.ones(k), -t], 1),
])
m = 48
th = 2 * np.pi * np.arange(m) / m
hole = R * np.stack([np.cos(th), np.sin(th)], 1)

need = TARGET - len(outer) - len(hole)
g = np.linspace(-1, 1, 40)[1:-1]
X, Y = np.meshgrid(g, g)
cand = np.stack([X.ravel(), Y.ravel()], 1)
cand += rng.uniform(-0.012, 0.012, cand.shape)
r = np.hypot(cand[:, 0], cand[:, 1])
cand = cand[(r > R + 0.04) & (np.abs(cand).max(1) < 0.97)]
if len(cand) < need:
    sys.exit("not enough candidate points")
keep = np.sort(rng.choice(len(cand), need, replace=False))
inner = cand[keep]

pts = np.concatenate([outer, hole, inner])
tri = Delaunay(pts).simplices
c = pts[tri].mean(1)
tri = tri[np.hypot(c[:, 0], c[:, 1]) > R]
used = np.unique(tri)
assert len(used) == TARGET, len(used)


def area(t):
    a, b, c = pts[t]
    return (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])


tri = np.array([t if area(t) > 0 else t[[0, 2, 1]] for t in tri])
assert all(area(t) > 1e-8 for t in tri)
bnd = list(range(len(outer) + len(hole)))

out = sys.argv[1] if len(sys.argv) > 1 else "tests/data/circle_hole.mesh"
with open(out, "w") as f:
    f.write("# [-1,1]^2 with a hole of radius %.2f, Delaunay triangulation\n" % R)
    f.write("mesh 2 %d %d %d\n" % (len(pts), len(tri), len(bnd)))
    for p in pts:
        f.write("%.17g %.17g\n" % (p[0], p[1]))
    for t in tri:
        f.write("%d %d %d\n" % tuple(t))
    for b in bnd:
        f.write("%d\n" % b)
print(out, len(pts), "nodes", len(tri), "triangles", len(pts) - len(bnd), "interior")
