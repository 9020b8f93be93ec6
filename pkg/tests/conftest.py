"""Shared fixtures: small meshes, single-rank subdomains, BC dictionaries."""

import numpy as np
import pytest

from trifvm.mesh import build_diamonds, node_weights, structured_triangulation
from trifvm.partition import single_subdomain

ALL_NEUMANN = {lab: ("neumann",) for lab in ("left", "right", "top", "bottom")}


def dirichlet_bc(g):
    """Same boundary datum on all four sides (constant or g(x, y))."""
    return {lab: ("dirichlet", g) for lab in ("left", "right", "top", "bottom")}


# Verbatim strong-scaling table from the measurement campaign writeup:
# eleven core counts, phase durations as printed there.
TIMING_ROWS = [
    (1,    "49 h 54 min 48 s", "02 h 51 min 04 s", "13 h 06 min 00 s", "33 h 57 min 44 s"),
    (2,    "25 h 06 min 27 s", "01 h 22 min 57 s", "06 h 41 min 02 s", "17 h 02 min 27 s"),
    (4,    "12 h 34 min 35 s", "00 h 42 min 07 s", "03 h 22 min 04 s", "08 h 30 min 24 s"),
    (8,    "06 h 27 min 18 s", "00 h 22 min 13 s", "01 h 46 min 26 s", "04 h 18 min 38 s"),
    (16,   "03 h 39 min 45 s", "00 h 12 min 37 s", "01 h 01 min 40 s", "02 h 25 min 26 s"),
    (32,   "01 h 50 min 50 s", "00 h 08 min 03 s", "00 h 29 min 17 s", "01 h 13 min 29 s"),
    (64,   "01 h 01 min 41 s", "00 h 03 min 59 s", "00 h 17 min 05 s", "00 h 40 min 36 s"),
    (128,  "00 h 32 min 44 s", "00 h 01 min 52 s", "00 h 08 min 22 s", "00 h 22 min 29 s"),
    (256,  "00 h 18 min 16 s", "00 h 01 min 02 s", "00 h 04 min 34 s", "00 h 12 min 39 s"),
    (512,  "00 h 10 min 07 s", "00 h 00 min 33 s", "00 h 02 min 52 s", "00 h 06 min 42 s"),
    (1024, "00 h 05 min 14 s", "00 h 00 min 18 s", "00 h 01 min 33 s", "00 h 03 min 23 s"),
]


def write_timing_table(path):
    with open(path, "w") as fh:
        fh.write("cores,total,convection,diffusion,linear_solver\n")
        for cores, tot, conv, diff, sol in TIMING_ROWS:
            fh.write(f"{cores},{tot},{conv},{diff},{sol}\n")
    return path


@pytest.fixture(scope="session")
def mesh8():
    return structured_triangulation(8)


@pytest.fixture(scope="session")
def mesh16():
    return structured_triangulation(16)


@pytest.fixture(scope="session")
def sub8(mesh8):
    return single_subdomain(mesh8)


@pytest.fixture(scope="session")
def sub16(mesh16):
    return single_subdomain(mesh16)


@pytest.fixture(scope="session")
def geom8(sub8):
    lm = sub8.local_mesh
    return build_diamonds(lm), node_weights(lm, cell_order=sub8.cells_l2g)


@pytest.fixture(scope="session")
def geom16(sub16):
    lm = sub16.local_mesh
    return build_diamonds(lm), node_weights(lm, cell_order=sub16.cells_l2g)


def random_spd_like(rng, n, extra_per_row=3):
    """Random sparse symmetric-pattern, strictly diagonally dominant system."""
    rows, cols, vals = [], [], []
    for i in range(n):
        picks = rng.choice(n, size=min(extra_per_row, n), replace=False)
        for j in picks:
            if i == j:
                continue
            v = rng.uniform(-1.0, 1.0)
            rows += [i, j]
            cols += [j, i]
            vals += [v, v]
    off = np.zeros(n)
    np.add.at(off, np.asarray(rows), np.abs(np.asarray(vals)))
    for i in range(n):
        rows.append(i)
        cols.append(i)
        vals.append(off[i] + rng.uniform(1.0, 2.0))
    return np.asarray(rows), np.asarray(cols), np.asarray(vals)
