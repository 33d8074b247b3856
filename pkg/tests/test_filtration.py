import numpy as np
from hypothesis import given, settings

from topoclass.filtration import build_filtration
from topoclass.imaging import GrayImage

from conftest import small_images


def test_single_pixel():
    f = build_filtration(GrayImage(np.array([[9]])))
    assert (f.n_faces, f.n_edges, f.n_vertices) == (1, 4, 4)
    assert np.all(f.values == 9)


def test_shared_edge_takes_min():
    f = build_filtration(GrayImage(np.array([[4, 11]])))
    # doubled grid (3, 5): the shared vertical edge sits at (1, 2)
    assert f.values[1, 2] == 4
    assert f.values[1, 4] == 11


def test_center_vertex_is_min_of_four():
    f = build_filtration(GrayImage(np.array([[1, 2], [3, 4]])))
    assert f.values[2, 2] == 1
    assert f.vertices[1, 1] == 1
    assert f.vertices[2, 2] == 4


@settings(max_examples=60, deadline=None)
@given(small_images())
def test_cell_counts_and_monotone(img):
    f = build_filtration(img)
    r, s = img.height, img.width
    assert f.n_vertices == (r + 1) * (s + 1)
    assert f.n_edges == r * (s + 1) + s * (r + 1)
    assert f.n_faces == r * s
    assert np.array_equal(f.faces, img.pixels)
    H, W = f.values.shape
    for i in range(H):
        for j in range(W):
            for a, b in f.cell_faces(i, j):
                assert f.values[a, b] <= f.values[i, j]


@settings(max_examples=40, deadline=None)
@given(small_images())
def test_lower_star_is_min_of_cofaces(img):
    f = build_filtration(img)
    px = img.pixels.astype(int)
    r, s = px.shape
    for i in range(r + 1):
        for j in range(s + 1):
            co = [px[a, b] for a in (i - 1, i) for b in (j - 1, j) if 0 <= a < r and 0 <= b < s]
            assert f.vertices[i, j] == min(co)


@settings(max_examples=40, deadline=None)
@given(small_images())
def test_sublevel_closed_under_faces(img):
    f = build_filtration(img)
    for t in np.unique(img.pixels):
        present = f.sublevel(int(t))
        for i, j in zip(*np.nonzero(present)):
            for a, b in f.cell_faces(i, j):
                assert present[a, b]


@settings(max_examples=40, deadline=None)
@given(small_images())
def test_commutes_with_grid_symmetries(img):
    f = build_filtration(img).values
    for op in (np.rot90, np.fliplr, np.flipud, lambda a: np.rot90(a, 3)):
        g = build_filtration(GrayImage(op(img.pixels))).values
        assert np.array_equal(g, op(f))
