import numpy as np
import pytest

from hotspotlab.geometry import (BOUNDARY, ConvexPolygon, Disk, DomainError,
                                 EXTERIOR, INTERIOR, Rectangle,
                                 VertexNormalError, domain_from_config)

TWO_PI = 2 * np.pi


def test_containment_examples():
    d = Disk((0, 0), 2.0)
    assert d.contains((1, 0)) == INTERIOR
    assert d.contains((2, 0)) == BOUNDARY
    r = Rectangle((0, 0), (TWO_PI, TWO_PI))
    assert r.contains((7, 7)) == EXTERIOR


def test_signed_distance_examples():
    d = Disk((0, 0), 2.0)
    assert d.signed_distance((3, 0)) == pytest.approx(1.0, abs=1e-15)
    assert d.signed_distance((0, 0)) == pytest.approx(-2.0, abs=1e-15)
    r = Rectangle((0, 0), (1, 1))
    assert r.signed_distance((0.5, 0.5)) == pytest.approx(-0.5, abs=1e-15)


def test_outward_normals():
    d = Disk((0, 0), 2.0)
    assert np.allclose(d.outward_normal((2, 0)), (1, 0))
    assert np.allclose(d.outward_normal((0, -2)), (0, -1))
    r = Rectangle((0, 0), (1, 1))
    assert np.allclose(r.outward_normal((0.5, 1)), (0, 1))


def test_rectangle_corner_normal_ambiguous():
    r = Rectangle((0, 0), (1, 1))
    with pytest.raises(VertexNormalError):
        r.outward_normal((1, 1))


def test_polygon_vertex_normal_error():
    tri = ConvexPolygon(((0, 0), (2, 0), (1, 2)))
    with pytest.raises(VertexNormalError):
        tri.outward_normal((2, 0))
    n = tri.outward_normal((1, 0))
    assert np.allclose(n, (0, -1))


def test_is_convex():
    assert Disk((0, 0), 1.0).is_convex()
    assert Rectangle((0, 0), (TWO_PI, TWO_PI)).is_convex()
    assert ConvexPolygon(((0, 0), (1, 0), (1, 1), (0, 1))).is_convex()


def test_polygon_construction_rejects_bad_inputs():
    with pytest.raises(DomainError):
        ConvexPolygon(((0, 0), (1, 1), (1, 0)))           # clockwise
    with pytest.raises(DomainError):
        ConvexPolygon(((0, 0), (2, 0), (2, 2), (1, 0.5), (0, 2)))  # concave
    with pytest.raises(DomainError):
        Disk((0, 0), 0.0)
    with pytest.raises(DomainError):
        Rectangle((1, 1), (0, 2))


def test_disk_normal_identity_on_boundary():
    d = Disk((0.5, -0.25), 1.75)
    theta = np.linspace(0, TWO_PI, 10_000, endpoint=False)
    for t in theta[::97]:
        x = np.array(d.center) + d.radius * np.array([np.cos(t), np.sin(t)])
        n = d.outward_normal(x)
        expect = (x - np.array(d.center)) / d.radius
        assert np.allclose(n, expect, atol=1e-14)


@pytest.mark.parametrize("dom", [
    Disk((0.2, -0.1), 1.3),
    Rectangle((-1.0, 0.5), (2.0, 2.25)),
    ConvexPolygon(((0, 0), (2, 0), (3, 1.5), (1, 3), (-0.5, 1))),
])
def test_signed_distance_consistent_with_contains(dom):
    rng = np.random.default_rng(11)
    x0, y0, x1, y1 = dom.bbox()
    pts = rng.uniform([x0 - 0.5, y0 - 0.5], [x1 + 0.5, y1 + 0.5], size=(10_000, 2))
    sd = dom.signed_distance_many(pts)
    for p, d in zip(pts[::37], sd[::37]):
        cls = dom.contains(p)
        if d < -dom.boundary_tol():
            assert cls == INTERIOR
        elif d > dom.boundary_tol():
            assert cls == EXTERIOR


def test_signed_distance_gradient_is_unit():
    # |grad sd| = 1 where smooth, probed by central differences.
    rng = np.random.default_rng(3)
    for dom in (Disk((0, 0), 1.0), ConvexPolygon(((0, 0), (2, 0), (2, 2), (0, 2)))):
        pts = rng.uniform(-0.5, 1.5, size=(200, 2))
        eps = 1e-6
        for p in pts:
            if abs(dom.signed_distance(p)) < 10 * eps:
                continue
            gx = (dom.signed_distance(p + [eps, 0]) - dom.signed_distance(p - [eps, 0])) / (2 * eps)
            gy = (dom.signed_distance(p + [0, eps]) - dom.signed_distance(p - [0, eps])) / (2 * eps)
            assert np.hypot(gx, gy) == pytest.approx(1.0, abs=1e-5)


def test_polygon_signed_distance_matches_bruteforce():
    poly = ConvexPolygon(((0, 0), (2, 0), (3, 1.5), (1, 3), (-0.5, 1)))
    dense = poly.boundary_polyline(4096)
    rng = np.random.default_rng(7)
    pts = rng.uniform([-1, -1], [4, 4], size=(300, 2))
    for p in pts:
        brute = np.min(np.hypot(dense[:, 0] - p[0], dense[:, 1] - p[1]))
        assert abs(abs(poly.signed_distance(p)) - brute) < 5e-3


def test_area_and_boundary_length():
    d = Disk((0, 0), 2.0)
    assert d.area() == pytest.approx(4 * np.pi, rel=1e-12)
    poly = d.boundary_polyline(4096)
    length = np.sum(np.hypot(*np.diff(poly, axis=0).T))
    assert length == pytest.approx(4 * np.pi, rel=1e-5)
    sq = ConvexPolygon(((0, 0), (2, 0), (2, 2), (0, 2)))
    assert sq.area() == pytest.approx(4.0, abs=1e-12)


def test_domain_config_round_trip():
    for dom in (Disk((0, 1), 2.0), Rectangle((0, 0), (1, 2)),
                ConvexPolygon(((0, 0), (1, 0), (1, 1)))):
        again = domain_from_config(dom.to_config())
        assert type(again) is type(dom)
        assert again.to_config() == dom.to_config()
    with pytest.raises(DomainError):
        domain_from_config({"type": "hexagon"})


def test_immutability():
    d = Disk((0, 0), 1.0)
    with pytest.raises(Exception):
        d.radius = 2.0
