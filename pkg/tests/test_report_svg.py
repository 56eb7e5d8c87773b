import json

import numpy as np

from hotspotlab import topology as T
from hotspotlab.fields import catalog, catalog_domain, sample
from hotspotlab.geometry import Disk
from hotspotlab.report import canonical_json, config_hash, levels_csv, sanitize
from hotspotlab.svg import render_svg
from hotspotlab import figures

CAT = catalog()
D1 = Disk((0, 0), 1.0)


def test_sanitize_handles_numpy_and_nonfinite():
    doc = sanitize({"a": np.float64(1.5), "b": np.nan, "c": np.inf,
                    "d": np.array([1, 2]), "e": np.int32(3), "f": np.bool_(True)})
    assert doc == {"a": 1.5, "b": "nan", "c": "inf", "d": [1, 2], "e": 3, "f": True}


def test_canonical_json_is_sorted_and_parseable():
    text = canonical_json({"z": 1, "a": {"y": 2.0, "b": np.nan}}, config={"grid": {"n": 64}})
    doc = json.loads(text)
    assert doc["provenance"]["tool"] == "hotspotlab"
    assert "version" in doc["provenance"]
    assert len(doc["provenance"]["config_hash"]) == 16
    keys = list(doc)
    assert keys == sorted(keys)


def test_config_hash_ignores_run_local_sections():
    a = {"grid": {"n": 64}, "output": {"dir": "runA"}}
    b = {"grid": {"n": 64}, "output": {"dir": "runB"}}
    assert config_hash(a) == config_hash(b)
    c = {"grid": {"n": 128}, "output": {"dir": "runA"}}
    assert config_hash(a) != config_hash(c)


def test_levels_csv_round_trip_precision():
    comps = T.extract_level_set(CAT["paraboloid"], D1, 1.0 / 3.0, n=64)
    text = levels_csv(comps)
    lines = text.strip().splitlines()
    assert lines[0] == "t,component_id,vertex_index,x,y,closed,touches_boundary"
    first = lines[1].split(",")
    assert float(first[0]) == 1.0 / 3.0          # 17 digits round-trip
    assert first[5] in ("0", "1")


def test_svg_deterministic_and_formatted():
    field = CAT["example1"]
    dom = Disk((0, 0), 2.0)
    comps = T.extract_level_set(field, dom, 0.1, n=64)
    points = T.classify_field(field, dom, n=96)
    a = render_svg(field, dom, n=48, contours=comps, points=points)
    b = render_svg(field, dom, n=48, contours=comps, points=points)
    assert a == b
    assert a.startswith('<?xml version="1.0"')
    assert "level 0.100000" in a                  # legend level at 6 decimals
    assert "level component" in a                 # legend glyph label
    # Every coordinate is written with exactly six decimals.
    import re
    coords = re.findall(r'points="([^"]+)"', a)
    assert coords
    for tok in coords[0].split()[:4]:
        x, y = tok.split(",")
        assert len(x.split(".")[1]) == 6 and len(y.split(".")[1]) == 6


def test_svg_plain_heatmap_without_overlays():
    svg = render_svg(CAT["coscos"], catalog_domain("coscos"), n=32)
    assert "<rect" in svg and "<polygon" not in svg


def test_figures_write_deterministic_png(tmp_path):
    field = CAT["paraboloid"]
    p1 = tmp_path / "a.png"
    p2 = tmp_path / "b.png"
    figures.save_field_figure(str(p1), field, D1, n=48)
    figures.save_field_figure(str(p2), field, D1, n=48)
    b1, b2 = p1.read_bytes(), p2.read_bytes()
    assert b1 == b2
    assert b1[:8] == b"\x89PNG\r\n\x1a\n"


def test_grid_csv_is_deterministic():
    gf1 = sample(CAT["example1"], D1, 32)
    gf2 = sample(CAT["example1"], D1, 32)
    assert gf1.to_csv() == gf2.to_csv()
