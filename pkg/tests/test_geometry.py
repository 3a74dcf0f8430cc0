"""Mesh builders, gluing, and the plain-text mesh format."""

import numpy as np
import pytest

from gluedheat.errors import (
    BoundaryIntersectionError,
    ConfigError,
    HypothesisViolationError,
)
from gluedheat.geometry import (
    PieceMesh,
    build_disk_piece,
    build_rect_piece,
    build_segment_piece,
    distances_from,
    glue,
)
from gluedheat.geometry.meshes import load_mesh_piece, mesh_to_text, parse_mesh_text

from conftest import cross_complex, spine_complex


def test_segment_builder_basics():
    seg = build_segment_piece(2.0, 8, origin=[1.0, 0.0], direction=[0.0, 1.0])
    assert seg.dim == 1 and seg.ambient_dim == 2
    assert seg.vertices.shape == (9, 2)
    assert seg.cells.shape == (8, 2)
    lengths = np.linalg.norm(
        seg.vertices[seg.cells[:, 1]] - seg.vertices[seg.cells[:, 0]], axis=1)
    assert np.allclose(lengths, 0.25)
    assert np.allclose(seg.vertices[0], [1.0, 0.0])
    assert np.allclose(seg.vertices[-1], [1.0, 2.0])
    # exactly the two endpoints are boundary
    assert sorted(np.nonzero(seg.boundary_vertices)[0]) == [0, 8]


def test_disk_builder_area_and_placement():
    disk = build_disk_piece(1.0, 16, origin=[0, 0, 5.0], axis=[0, 0, 1])
    assert disk.dim == 2 and disk.ambient_dim == 3
    assert np.allclose(disk.vertices[:, 2], 5.0)
    r = np.linalg.norm(disk.vertices[:, :2], axis=1)
    assert r.max() <= 1.0 + 1e-12
    area = disk.cell_volumes.sum()
    assert abs(area / np.pi - 1) < 0.01
    # rim is boundary, center is not
    assert disk.boundary_vertices[np.argmin(r)] == False  # noqa: E712
    assert disk.boundary_vertices[np.argmax(r)] == True  # noqa: E712


def test_rect_builder_grid():
    xs = np.linspace(0.0, 4.0, 9)
    ys = np.linspace(0.0, 1.0, 3)
    rect = build_rect_piece(xs, ys)
    assert rect.vertices.shape[0] == 27
    assert rect.cells.shape[1] == 3
    assert abs(rect.cell_volumes.sum() - 4.0) < 1e-12


def test_cross_gluing_counts():
    gc = cross_complex(8)
    assert len(gc.glue_maps) == 1
    gm = gc.glue_maps[0]
    assert gm.intersection_id == "J0"
    assert gm.k == 0 and len(gm.dofs) == 1
    # shared vertex merged once
    assert gc.n_dofs == 17 + 17 - 1
    assert gc.n_components == 1
    x = gc.dof_coords[gm.dofs[0]]
    assert np.allclose(x, [0.0, 0.0])


def test_glue_is_idempotent_in_structure():
    a = cross_complex(8)
    b = cross_complex(8)
    assert a.n_dofs == b.n_dofs
    assert [g.intersection_id for g in a.glue_maps] == ["J0"]
    assert np.array_equal(a.glue_maps[0].dofs, b.glue_maps[0].dofs)


def test_disjoint_pieces_two_components():
    a = build_segment_piece(1.0, 4, origin=[0.0, 0.0], direction=[1.0, 0.0],
                            name="a")
    b = build_segment_piece(1.0, 4, origin=[0.0, 2.0], direction=[1.0, 0.0],
                            name="b")
    gc = glue([a, b])
    assert len(gc.glue_maps) == 0
    assert gc.n_components == 2
    lab = gc.component_labels
    assert len(set(lab[gc.global_of[0]])) == 1
    assert len(set(lab[gc.global_of[1]])) == 1
    assert lab[gc.global_of[0][0]] != lab[gc.global_of[1][0]]


def test_endpoint_contact_rejected():
    # segments meeting at an endpoint: identified vertex is boundary in one
    a = build_segment_piece(1.0, 4, origin=[0.0, 0.0], direction=[1.0, 0.0],
                            name="a")
    b = build_segment_piece(1.0, 4, origin=[1.0, 0.0], direction=[0.0, 1.0],
                            name="b")
    with pytest.raises(BoundaryIntersectionError):
        glue([a, b])
    # the error is part of the hypothesis-violation family, exit code 3
    assert issubclass(BoundaryIntersectionError, HypothesisViolationError)
    assert BoundaryIntersectionError("x").exit_code == 3


def test_segment_line_intersection_k1():
    """Sheets crossing along a segment: inferred k = 1."""
    xs_a = np.linspace(-1.0, 1.0, 9)
    ys = np.linspace(-1.0, 1.0, 9)
    A = build_rect_piece(xs_a, ys, origin=[0, 0, 0], x_axis=[1, 0, 0],
                         y_axis=[0, 1, 0], name="sheet_a")
    # B's x-grid matches A only on |x| <= 0.5, staggered outside, so the
    # identified set is an interior segment of the x axis
    inner = [k / 4 for k in range(-2, 3)]
    outer = [k / 4 + 1 / 8 for k in range(-4, -2)] + \
            [k / 4 - 1 / 8 for k in range(3, 5)]
    B = build_rect_piece(np.array(sorted(inner + outer)), ys,
                         origin=[0, 0, 0], x_axis=[1, 0, 0],
                         y_axis=[0, 0, 1], name="sheet_b")
    gc = glue([A, B])
    assert len(gc.glue_maps) == 1
    gm = gc.glue_maps[0]
    assert gm.k == 1
    assert len(gm.dofs) == 5
    assert gc.n_components == 1
    pts = gc.dof_coords[gm.dofs]
    assert np.allclose(pts[:, 1:], 0.0)


def test_three_pairwise_crossings():
    segs = []
    # extended triangle sides, crossings at the corners are interior points
    dirs = [([1.0, 0.0], [-0.25, 0.0]),
            ([-0.5, np.sqrt(3) / 2], [1.125, -np.sqrt(3) / 8]),
            ([-0.5, -np.sqrt(3) / 2], [0.625, np.sqrt(3) / 2 + np.sqrt(3) / 8])]
    for i, (d, o) in enumerate(dirs):
        segs.append(build_segment_piece(1.5, 12, origin=o, direction=d,
                                        name=f"s{i}"))
    gc = glue(segs)
    assert len(gc.glue_maps) == 3
    assert all(g.k == 0 for g in gc.glue_maps)
    assert gc.n_components == 1


def test_nearest_dof_and_diameter():
    gc = cross_complex(8)
    assert np.allclose(gc.dof_coords[gc.nearest_dof([0.9, 0.05])], [0.875, 0.0])
    d = gc.diameter()
    # ambient extent of the crossing: diagonal of [-1,1]^2
    assert abs(d - 2 * np.sqrt(2)) < 1e-9


def test_distances_pseudometric_on_glued():
    gc = spine_complex(8, 0.0).complex
    src = np.array([gc.nearest_dof([0.0, 0.0, 1.0])])
    d = distances_from(gc, src)
    assert d.shape == (gc.n_dofs,)
    assert d[src[0]] == 0.0
    assert np.all(np.isfinite(d))
    # crossing the junction costs at least the spine leg
    far = gc.nearest_dof([0.0, 0.0, -1.0])
    assert abs(d[far] - 2.0) < 1e-9


def test_mesh_text_round_trip(tmp_path):
    disk = build_disk_piece(1.0, 4, name="disk")
    text = mesh_to_text(disk)
    back = parse_mesh_text(text, name="disk")
    assert back.dim == disk.dim and back.ambient_dim == disk.ambient_dim
    assert np.array_equal(back.cells, disk.cells)
    assert np.allclose(back.vertices, disk.vertices, atol=1e-16)
    assert np.array_equal(back.boundary_vertices, disk.boundary_vertices)

    p = tmp_path / "disk.mesh"
    p.write_text(text)
    again = load_mesh_piece(str(p), name="disk")
    assert np.array_equal(again.cells, disk.cells)


def test_mesh_text_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_mesh_text("dim 2\nvertices 1\n0 0\n", name="bad")
    with pytest.raises(ConfigError):
        parse_mesh_text("not a mesh at all", name="bad")


def test_piece_mesh_validation():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    cells = np.array([[0, 1, 3]])  # out of range
    with pytest.raises(ConfigError):
        PieceMesh("p", 2, verts, cells)
