"""Shared builders for the test suite.

Most tests need one of three spaces: the unit interval, a pair of crossing
segments, or the disk-with-spine complex. Builders live here so oracle
values frozen in the tests always refer to the same meshes.
"""

import numpy as np
import pytest

from gluedheat.dirichlet import assemble
from gluedheat.geometry import build_disk_piece, build_segment_piece, glue
from gluedheat.measure import WeightSpec, attach_weight


def interval_complex(n_cells, length=1.0):
    gc = glue([build_segment_piece(length, n_cells, name="seg")])
    return gc, attach_weight(gc, WeightSpec(piece="seg"))


def interval_system(n_cells, length=1.0):
    gc, wc = interval_complex(n_cells, length)
    return gc, assemble(wc)


def cross_complex(m):
    # two length-2 segments crossing at the origin, interior in both
    a = build_segment_piece(2.0, 2 * m, origin=[-1.0, 0.0],
                            direction=[1.0, 0.0], name="horiz")
    b = build_segment_piece(2.0, 2 * m, origin=[0.0, -1.0],
                            direction=[0.0, 1.0], name="vert")
    return glue([a, b])


def spine_complex(m, alpha):
    """Unit disk in the z=0 plane with a segment through its center."""
    disk = build_disk_piece(1.0, m, name="disk", origin=[0, 0, 0],
                            axis=[0, 0, 1])
    seg = build_segment_piece(2.0, 2 * m, origin=[0, 0, -1.0],
                              direction=[0, 0, 1.0], name="spine")
    gc = glue([disk, seg])
    wc = attach_weight(gc, WeightSpec(piece="spine"))
    spec = (WeightSpec(piece="disk") if alpha == 0.0 else
            WeightSpec(piece="disk", kind="power", exponent=alpha,
                       anchor="J0"))
    return attach_weight(wc, spec)


def spine_system(m, alpha):
    return assemble(spine_complex(m, alpha))


def disk_system(m, alpha=0.0, radius=1.0):
    disk = build_disk_piece(radius, m, name="disk")
    gc = glue([disk])
    if alpha == 0.0:
        wc = attach_weight(gc, WeightSpec(piece="disk"))
    else:
        wc = attach_weight(gc, WeightSpec(piece="disk", kind="power",
                                          exponent=alpha, anchor=[0.0, 0.0]))
    return gc, wc, assemble(wc)


@pytest.fixture(scope="session")
def interval256():
    return interval_system(256)


@pytest.fixture(scope="session")
def interval512():
    gc, wc = interval_complex(512)
    return gc, wc, assemble(wc)


@pytest.fixture(scope="session")
def disjoint_pair():
    a = build_segment_piece(1.0, 40, origin=[0.0, 0.0],
                            direction=[1.0, 0.0], name="a")
    b = build_segment_piece(1.0, 40, origin=[0.0, 1.0],
                            direction=[1.0, 0.0], name="b")
    gc = glue([a, b])
    wc = attach_weight(attach_weight(gc, WeightSpec(piece="a")),
                       WeightSpec(piece="b"))
    return gc, assemble(wc)


def rng_of(test_name, salt=0):
    # independent deterministic stream per test (hash() is salted per process)
    import zlib

    return np.random.default_rng(zlib.crc32(f"{test_name}:{salt}".encode()))
