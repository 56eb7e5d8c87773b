import numpy as np
import pytest

from hotspotlab import topology as T
from hotspotlab.fields import AnalyticField, catalog, catalog_domain
from hotspotlab.geometry import Disk, Rectangle
from hotspotlab.nonlinearity import Constant, Linear, recover_f_from_radial

CAT = catalog()
D1 = Disk((0, 0), 1.0)
D2 = Disk((0, 0), 2.0)
BOX = catalog_domain("coscos")
PI = np.pi

# Analytic classification ground truth for the catalog, at the origin unless
# stated: (field, domain, point, expected kind).
GROUND_TRUTH = [
    ("paraboloid", D1, (0, 0), T.LOCAL_MIN),
    ("neg_paraboloid", D1, (0, 0), T.LOCAL_MAX),
    ("xy_saddle", D1, (0, 0), T.SADDLE),
    ("cubic_saddle", D1, (0, 0), T.SADDLE),       # degenerate saddle
    ("coscos", BOX, (PI, PI), T.LOCAL_MAX),
    ("coscos", BOX, (PI / 2, PI / 2), T.SADDLE),
    ("coscos", BOX, (PI, 0.0), T.LOCAL_MIN),      # boundary critical point
    ("example1", D1, (0, 0), T.LOCAL_MIN),
]


class TestFindCandidates:
    def test_coscos_candidates(self):
        cands = T.find_critical_points(CAT["coscos"], BOX, n=128)
        pos = np.array([c.position for c in cands])
        h = T.working_h(CAT["coscos"], BOX, 128)
        for target in [(PI, PI), (PI / 2, PI / 2)]:
            d = np.min(np.hypot(pos[:, 0] - target[0], pos[:, 1] - target[1]))
            assert d < 2 * h
        assert len(cands) == 13  # 4 corners + 4 edge extrema + center + 4 saddles

    def test_paraboloid_single_candidate(self):
        cands = T.find_critical_points(CAT["paraboloid"], D1, n=128)
        assert len(cands) == 1
        assert np.hypot(*cands[0].position) < 1e-8

    def test_example1_circle_candidates_exist(self):
        cands = T.find_critical_points(CAT["example1"], D2, n=192)
        rr = np.array([np.hypot(*c.position) for c in cands])
        assert np.any(np.abs(rr) < 1e-6)          # origin
        assert np.any(np.abs(rr - 1.0) < 1e-6)    # on the critical circle


class TestRingClassification:
    @pytest.mark.parametrize("name,dom,p,expect", GROUND_TRUTH,
                             ids=[f"{g[0]}@{g[2]}" for g in GROUND_TRUTH])
    def test_catalog_ground_truth(self, name, dom, p, expect):
        kind, ev = T.classify_ring_test(CAT[name], dom, p)
        assert kind == expect
        # Classification agreed at every probed scale.
        kinds = [d["kind"] for d in ev["per_delta"] if d["kind"] != "empty"]
        assert all(k == expect for k in kinds)

    def test_epsilon_clause_recorded(self):
        _, ev = T.classify_ring_test(CAT["coscos"], BOX, (PI, PI))
        assert ev["min_grad_on_rings"] is not None
        assert ev["min_grad_on_rings"] > ev["tau_g"]

    def test_scale_inconsistency_reported_as_saddle(self):
        # u = -q + 200 q^2 with q = x^2 + y^2 looks like a maximum on small
        # rings (radial derivative flips sign at r = 1/20, between the probed
        # scales) and a minimum on large ones.
        def val(p):
            q = p[..., 0] ** 2 + p[..., 1] ** 2
            return -q + 200.0 * q * q

        def grad(p):
            q = p[..., 0] ** 2 + p[..., 1] ** 2
            s = 2.0 * (-1.0 + 400.0 * q)
            return np.stack([s * p[..., 0], s * p[..., 1]], axis=-1)

        def lap(p):
            q = p[..., 0] ** 2 + p[..., 1] ** 2
            return 3200.0 * q - 4.0

        f = AnalyticField("two_scale", val, grad, lap)
        kind, ev = T.classify_ring_test(f, D1, (0.0, 0.0))
        assert kind == T.SADDLE
        assert ev["note"] == "scale-inconsistent"


class TestNonIsolated:
    def test_critical_circle_detected(self):
        comps = T.detect_nonisolated(CAT["example1"], D2, 0.25, n=256)
        assert len(comps) == 1
        c = comps[0]
        assert c.closed
        rr = np.hypot(c.polyline[:, 0], c.polyline[:, 1])
        assert np.max(np.abs(rr - 1.0)) < 1e-6
        assert c.max_grad_norm < 1e-10

    def test_boundary_circle_is_critical_for_both_radii(self):
        for dom, level in [(D1, 0.25), (D2, 0.0)]:
            curves = T.detect_critical_curves(CAT["example1"], dom, n=192)
            boundary = [c for c in curves if c.touches_boundary]
            assert boundary, dom
            assert abs(boundary[0].level - level) < 1e-10

    def test_coscos_zero_level_not_critical(self):
        assert T.detect_nonisolated(CAT["coscos"], BOX, 0.0, n=128) == []

    def test_paraboloid_levels_not_critical(self):
        assert T.detect_nonisolated(CAT["paraboloid"], D1, 0.5, n=128) == []


class TestLevelSets:
    @pytest.mark.parametrize("r", [0.3, 0.6, 0.9])
    def test_circle_lengths(self, r):
        comps = T.extract_level_set(CAT["paraboloid"], D2, r * r, n=256)
        assert len(comps) == 1
        assert comps[0].closed
        assert comps[0].length() == pytest.approx(2 * PI * r, rel=0.02)

    def test_coscos_zero_set_structure(self):
        comps = T.extract_level_set(CAT["coscos"], BOX, 0.0, n=256)
        assert all(c.touches_boundary for c in comps)
        total = sum(c.length() for c in comps)
        assert total == pytest.approx(8 * PI, rel=0.02)  # four chords of length 2 pi

    def test_level_above_max_is_empty(self):
        assert T.extract_level_set(CAT["paraboloid"], D1, 5.0, n=64) == []

    def test_singleton_extremum(self):
        comps = T.extract_level_set(CAT["paraboloid"], D1, 0.0, n=128)
        assert len(comps) == 1
        assert comps[0].degenerate
        assert np.hypot(*comps[0].polyline[0]) < 1e-8

    def test_closed_flag_and_vertex_spacing(self):
        comps = T.extract_level_set(CAT["example1"], D1, 0.1, n=128)
        assert len(comps) == 1
        c = comps[0]
        assert c.closed
        h = T.working_h(CAT["example1"], D1, 128)
        steps = np.hypot(*np.diff(c.polyline, axis=0).T)
        assert np.max(steps) <= 2 * h


class TestDisjointness:
    def test_radial_monotone_levels_pass(self):
        h = T.working_h(CAT["paraboloid"], D2, 256)
        comps = T.extract_level_set(CAT["paraboloid"], D2, 0.36, n=256)
        assert T.check_level_disjoint(comps, h)["pass"]
        h1 = T.working_h(CAT["example1"], D1, 128)
        comps1 = T.extract_level_set(CAT["example1"], D1, 0.1, n=128)
        assert T.check_level_disjoint(comps1, h1)["pass"]

    def test_coscos_fails_exactly_at_the_four_crossings(self):
        h = T.working_h(CAT["coscos"], BOX, 256)
        comps = T.extract_level_set(CAT["coscos"], BOX, 0.0, n=256)
        verdict = T.check_level_disjoint(comps, h)
        assert not verdict["pass"]
        locs = np.array([f["location"] for f in verdict["pair_failures"]])
        saddles = np.array([[PI / 2, PI / 2], [PI / 2, 3 * PI / 2],
                            [3 * PI / 2, PI / 2], [3 * PI / 2, 3 * PI / 2]])
        d = np.hypot(locs[:, None, 0] - saddles[None, :, 0],
                     locs[:, None, 1] - saddles[None, :, 1])
        assert np.all(d.min(axis=1) < 3 * h)              # every failure at a crossing
        assert len(set(d.argmin(axis=1))) == 4            # all four crossings hit


class TestSignRegions:
    def test_example1_interface_radius(self):
        law, _ = recover_f_from_radial(CAT["example1"].radial, (0.0, 1.0))
        sr = T.sign_regions(CAT["example1"], law, D1, n=256)
        rstar = (9 - np.sqrt(17)) / 8
        assert len(sr.interface) == 1
        rr = np.hypot(sr.interface[0].polyline[:, 0], sr.interface[0].polyline[:, 1])
        assert np.max(np.abs(rr - rstar)) < 5e-3
        # Area fractions: inner disk (f < 0) and annulus (f > 0).
        assert sr.minus_fraction == pytest.approx(rstar**2, abs=0.01)
        assert sr.plus_fraction == pytest.approx(1 - rstar**2, abs=0.01)
        assert sr.m == pytest.approx(0.0, abs=1e-3)
        assert sr.M == pytest.approx(0.25, abs=1e-8)
        # The positive-region boundary max is the whole rim: a plateau.
        assert sr.p_plus.plateau

    def test_coscos_sign_regions(self):
        sr = T.sign_regions(CAT["coscos"], Linear(2.0), BOX, n=128)
        assert sr.plus_fraction == pytest.approx(0.5, abs=0.02)
        assert sr.minus_fraction == pytest.approx(0.5, abs=0.02)

    def test_constant_positive(self):
        sr = T.sign_regions(CAT["constant"], Constant(3.0), D1, n=64)
        assert sr.plus_fraction == pytest.approx(1.0, abs=1e-12)
        assert sr.minus_fraction == 0.0


class TestExtremumSign:
    def test_coscos_with_linear_law(self):
        points = T.classify_field(CAT["coscos"], BOX, n=128)
        verdicts = T.check_extremum_sign(CAT["coscos"], Linear(2.0), points)
        assert verdicts and all(v["pass"] for v in verdicts)
        maxima = [v for v in verdicts if v["kind"] == T.LOCAL_MAX]
        assert all(v["f_of_u"] >= 0 for v in maxima)

    def test_example1_origin(self):
        law, _ = recover_f_from_radial(CAT["example1"].radial, (0.0, 1.0))
        points = T.classify_field(CAT["example1"], D1, n=128)
        minima = [cp for cp in points if cp.kind == T.LOCAL_MIN]
        assert len(minima) == 1
        verdicts = T.check_extremum_sign(CAT["example1"], law, minima)
        assert verdicts[0]["pass"]
        assert verdicts[0]["f_of_u"] == pytest.approx(-4.0, abs=1e-6)

    def test_paraboloid_with_constant_law(self):
        points = T.classify_field(CAT["paraboloid"], D1, n=64)
        verdicts = T.check_extremum_sign(CAT["paraboloid"], Constant(-4.0), points)
        assert verdicts[0]["kind"] == T.LOCAL_MIN and verdicts[0]["pass"]


class TestInterfaceContact:
    def test_coscos_precondition_fails(self):
        rep = T.check_interface_contact(CAT["coscos"], Linear(2.0), BOX, n=128)
        assert rep["u0"] == pytest.approx(0.0, abs=1e-10)
        assert rep["n_components"] > 1
        assert rep["precondition_single_component"] is False
        assert rep["consistent"] is None

    def test_example1_violation_flagged(self):
        law, _ = recover_f_from_radial(CAT["example1"].radial, (0.0, 1.0))
        rep = T.check_interface_contact(CAT["example1"], law, D1, n=256)
        assert rep["precondition_single_component"] is True
        assert rep["touches_boundary"] is False
        assert rep["consistent"] is False
        assert "interface does not reach the boundary" in rep["violations"]
        assert rep["hypothesis_a"]["overall"] is False

    def test_no_sign_change_error_path(self):
        rep = T.check_interface_contact(CAT["bump"], Constant(4.0), D1, n=64)
        assert rep["u0"] is None
        assert "error" in rep


class TestCensus:
    def test_coscos_census(self):
        points = T.classify_field(CAT["coscos"], BOX, n=128)
        counts = {k: sum(1 for cp in points if cp.kind == k)
                  for k in (T.LOCAL_MAX, T.LOCAL_MIN, T.SADDLE, T.NON_ISOLATED)}
        assert counts == {T.LOCAL_MAX: 5, T.LOCAL_MIN: 4, T.SADDLE: 4, T.NON_ISOLATED: 0}

    def test_coscos_generic_subrectangle(self):
        sub = Rectangle((0.3, 0.3), (5.9, 5.9))
        points = T.classify_field(CAT["coscos"], sub, n=128)
        interior = [cp for cp in points if not cp.on_boundary]
        counts = {k: sum(1 for cp in interior if cp.kind == k)
                  for k in (T.LOCAL_MAX, T.LOCAL_MIN, T.SADDLE)}
        assert counts == {T.LOCAL_MAX: 1, T.LOCAL_MIN: 0, T.SADDLE: 4}

    def test_euler_count_for_single_extremum_fields(self):
        # With the gradient transverse to the boundary, alternating count
        # (#max + #min - #saddles) equals one.
        for name in ("paraboloid", "neg_paraboloid"):
            sub = Rectangle((-0.8, -0.7), (0.75, 0.85))
            points = T.classify_field(CAT[name], sub, n=96)
            interior = [cp for cp in points if not cp.on_boundary]
            euler = (sum(1 for cp in interior if cp.kind == T.LOCAL_MAX)
                     + sum(1 for cp in interior if cp.kind == T.LOCAL_MIN)
                     - sum(1 for cp in interior if cp.kind == T.SADDLE))
            assert euler == 1

    def test_example1_counterexample_structure(self):
        points = T.classify_field(CAT["example1"], D2, n=256)
        kinds = sorted(cp.kind for cp in points)
        assert kinds.count(T.LOCAL_MIN) == 1
        assert kinds.count(T.NON_ISOLATED) == 2   # circle r=1 and the rim r=2
        circle = [cp for cp in points if cp.kind == T.NON_ISOLATED
                  and not cp.on_boundary]
        assert len(circle) == 1
        assert circle[0].u_value == pytest.approx(0.25, abs=1e-10)


def test_component_cap():
    field = CAT["coscos"]
    old = T.MAX_COMPONENTS
    T.MAX_COMPONENTS = 1
    try:
        with pytest.raises(T.TopologyError):
            T.extract_level_set(field, BOX, 0.0, n=128)
    finally:
        T.MAX_COMPONENTS = old
