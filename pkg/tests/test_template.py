import numpy as np
import pytest

from ocumesh.errors import ParameterError
from ocumesh.template import (
    EyeballTemplate,
    boundary_loops,
    build_template,
    region_indices,
    validate,
)


def test_default_counts(left_template):
    assert left_template.n_vertices == 481
    assert left_template.n_triangles == 928


def test_default_boundary_is_single_32_loop(left_template):
    loops = boundary_loops(left_template.triangles, left_template.n_vertices)
    assert len(loops) == 1
    assert len(loops[0]) == 32


def test_unit_radius(left_template):
    radii = np.linalg.norm(left_template.vertices, axis=1)
    assert np.max(np.abs(radii - 1.0)) < 1e-9


def test_right_is_index_level_mirror(left_template, right_template):
    mirrored = left_template.vertices.copy()
    mirrored[:, 0] *= -1.0
    assert np.array_equal(right_template.vertices, mirrored)
    assert np.array_equal(right_template.triangles, left_template.triangles[:, [0, 2, 1]])


def test_minimal_cap():
    t = build_template(3, 2, "left")
    assert t.n_vertices == 4
    assert t.n_triangles == 3
    loops = boundary_loops(t.triangles, t.n_vertices)
    assert len(loops) == 1 and len(loops[0]) == 3


@pytest.mark.parametrize("sectors,stacks", [(3, 2), (4, 3), (8, 5), (16, 9), (32, 16), (5, 4)])
def test_count_formulas_and_single_loop(sectors, stacks):
    t = build_template(sectors, stacks, "left")
    assert t.n_vertices == (stacks - 1) * sectors + 1
    assert t.n_triangles == sectors + 2 * sectors * (stacks - 2)
    loops = boundary_loops(t.triangles, t.n_vertices)
    assert len(loops) == 1
    assert len(loops[0]) == sectors
    # Euler characteristic of a disk.
    edges = set()
    for tri in t.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            edges.add((min(a, b), max(a, b)))
    assert t.n_vertices - len(edges) + t.n_triangles == 1


def test_determinism_bit_identical():
    a = build_template(32, 16, "left")
    b = build_template(32, 16, "left")
    assert a.vertices.tobytes() == b.vertices.tobytes()
    assert a.triangles.tobytes() == b.triangles.tobytes()


@pytest.mark.parametrize("side", ["left", "right"])
def test_consistent_winding(side):
    # Every interior edge appears exactly once in each direction.
    t = build_template(side=side)
    directed = {}
    for tri in t.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(a), int(b))
            assert key not in directed, "duplicated directed edge"
            directed[key] = True
    boundary = 0
    for a, b in directed:
        if (b, a) not in directed:
            boundary += 1
    assert boundary == 32


def test_outward_orientation(left_template):
    v = left_template.vertices
    tri = left_template.triangles
    n = np.cross(v[tri[:, 1]] - v[tri[:, 0]], v[tri[:, 2]] - v[tri[:, 0]])
    centroids = (v[tri[:, 0]] + v[tri[:, 1]] + v[tri[:, 2]]) / 3.0
    assert np.all(np.sum(n * centroids, axis=1) > 0.0)


def test_apex_region(left_template):
    assert list(region_indices(left_template, "apex")) == [0]
    assert left_template.vertices[0] @ left_template.optical_axis == pytest.approx(1.0)


def test_iris_border_is_second_ring(left_template):
    # Ring k occupies indices 1 + (k-1)*32 .. k*32; the border is ring 2.
    expected = list(range(1 + 32, 1 + 64))
    assert list(region_indices(left_template, "iris_border")) == expected
    ring = left_template.vertices[region_indices(left_template, "iris_border")]
    polar = np.degrees(np.arccos(-ring[:, 2]))
    assert np.allclose(polar, 22.5, atol=1e-9)


def test_region_relationships(left_template):
    iris = set(region_indices(left_template, "iris"))
    border = set(region_indices(left_template, "iris_border"))
    cornea = set(region_indices(left_template, "cornea"))
    sclera = set(region_indices(left_template, "sclera"))
    assert 0 in iris
    assert border <= iris and border <= cornea
    assert iris & sclera == set()
    assert cornea & sclera == set()
    # The only iris/cornea overlap is the shared border ring.
    assert iris & cornea == border


def test_unknown_region_rejected(left_template):
    with pytest.raises(ParameterError):
        region_indices(left_template, "pupil")


def test_invalid_parameters():
    with pytest.raises(ParameterError):
        build_template(2, 16, "left")
    with pytest.raises(ParameterError):
        build_template(32, 1, "left")
    with pytest.raises(ParameterError):
        build_template(32, 16, "center")


class TestValidate:
    def test_default_report(self, left_template):
        r = validate(left_template)
        assert r.vertex_count == 481
        assert r.triangle_count == 928
        assert [len(l) for l in r.boundary_loops] == [32]
        assert r.max_radius_deviation < 1e-9
        assert r.is_mirror_consistent

    def test_deleting_a_triangle_adds_a_loop(self, left_template):
        # Remove an interior triangle (one not touching the boundary ring).
        keep = np.ones(left_template.n_triangles, dtype=bool)
        keep[100] = False
        t = EyeballTemplate(
            side="left",
            vertices=left_template.vertices.copy(),
            triangles=left_template.triangles[keep].copy(),
            region_labels={k: v.copy() for k, v in left_template.region_labels.items()},
            optical_axis=left_template.optical_axis.copy(),
            sectors=32,
            stacks=16,
        )
        r = validate(t)
        assert len(r.boundary_loops) == 2

    def test_scaled_vertices_report_deviation(self, left_template):
        t = EyeballTemplate(
            side="left",
            vertices=2.0 * left_template.vertices,
            triangles=left_template.triangles.copy(),
            region_labels={k: v.copy() for k, v in left_template.region_labels.items()},
            optical_axis=left_template.optical_axis.copy(),
            sectors=32,
            stacks=16,
        )
        assert validate(t).max_radius_deviation == pytest.approx(1.0)
