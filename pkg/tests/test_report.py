import json
from pathlib import Path

import numpy as np
import pytest

import survfront as sf
from survfront.core import ScalarField, SpaceTimeField, SpaceTimeMask
from survfront.hj_solver import Trajectory
from survfront import report


def tiny_field():
    g = sf.build_grid(0.0, 1.0, 3, 0.1, 1)
    vals = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    return g, SpaceTimeField(g, vals, -50.0)


def test_fmt6():
    assert report.fmt6(0.2, -50.0) == "0.200000"
    assert report.fmt6(0.0232, -50.0) == "0.0232000"
    assert report.fmt6(-50.0, -50.0) == "EXTINCT"
    assert report.fmt6(-51.3, -50.0) == "EXTINCT"


def test_fmt12():
    assert report.fmt12(0.2) == "0.2"
    assert report.fmt12(1.0 / 3.0) == "0.333333333333"
    assert report.fmt12(0) == "0"


def test_write_field_csv_golden(tmp_path):
    g, f = tiny_field()
    p = str(tmp_path / "f.csv")
    report.write_field_csv(p, f)
    want = "x,t,u\n0,0,1\n0.5,0,2\n1,0,3\n0,0.1,4\n0.5,0.1,5\n1,0.1,6\n"
    assert Path(p).read_text() == want


def test_write_field_csv_snapshot_times(tmp_path):
    g, f = tiny_field()
    p = str(tmp_path / "f.csv")
    report.write_field_csv(p, f, times=[0.1], value_name="n")
    assert Path(p).read_text() == "x,t,n\n0,0.1,4\n0.5,0.1,5\n1,0.1,6\n"


def test_write_profile_csv(tmp_path):
    g, _ = tiny_field()
    p = str(tmp_path / "p.csv")
    report.write_profile_csv(p, ScalarField(g, np.array([0.25, -1.0, 50.0])))
    assert Path(p).read_text() == "x,u\n0,0.25\n0.5,-1\n1,50\n"


def test_write_trajectory_csv(tmp_path):
    traj = Trajectory(samples=[(0.4, 0.0), (2.0, 1.0)], value=0.2)
    p = str(tmp_path / "t.csv")
    report.write_trajectory_csv(p, traj)
    assert Path(p).read_text() == "t,x,running_value\n0,0.4,0.2\n1,2,0.2\n"


def test_write_trajectory_csv_with_field(tmp_path):
    g, f = tiny_field()
    traj = Trajectory(samples=[(0.0, 0.0), (0.5, 0.1)], value=5.0)
    p = str(tmp_path / "t.csv")
    report.write_trajectory_csv(p, traj, f)
    # running values read off the field at the samples: u(0,0)=1, u(0.5,0.1)=5
    assert Path(p).read_text() == "t,x,running_value\n0,0,1\n0.1,0.5,5\n"


def test_write_mask_csv(tmp_path):
    g, _ = tiny_field()
    flags = np.array([[True, False, True], [False, True, False]])
    p = str(tmp_path / "m.csv")
    report.write_mask_csv(p, SpaceTimeMask(g, flags))
    assert Path(p).read_text() == \
        "x,t,in_omega\n0,0,1\n0.5,0,0\n1,0,1\n0,0.1,0\n0.5,0.1,1\n1,0.1,0\n"


def test_write_json_deterministic(tmp_path):
    a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    report.write_json(a, {"zeta": 1, "alpha": {"y": 2, "x": 3}})
    report.write_json(b, {"alpha": {"x": 3, "y": 2}, "zeta": 1})
    assert Path(a).read_bytes() == Path(b).read_bytes()


def test_manifest_digests_and_shape(tmp_path):
    f1 = tmp_path / "one.csv"
    f1.write_text("x,u\n0,1\n")
    f2 = tmp_path / "two.csv"
    f2.write_text("x,u\n0,2\n")
    mp = report.write_manifest(str(tmp_path), {"grid": {"nx": 3}},
                               [str(f1), str(f2)],
                               extra={"command": "demo"},
                               timings={"run_s": 1.23})
    doc = json.loads(Path(mp).read_text())
    assert doc["outputs"]["one.csv"] == report.sha256_of(str(f1))
    assert doc["outputs"]["two.csv"] == report.sha256_of(str(f2))
    assert doc["command"] == "demo"
    assert doc["config"] == {"grid": {"nx": 3}}
    # timings live in their own key so determinism checks can drop them
    assert set(doc) == {"config", "outputs", "command", "timings"}


def test_render_smoke_and_svg_determinism(tmp_path):
    g, f = tiny_field()
    mask = SpaceTimeMask(g, f.values > 2.0)
    traj = Trajectory(samples=[(0.0, 0.0), (0.5, 0.1)], value=5.0)

    p1 = report.render_heatmap(str(tmp_path / "h1.svg"), f, level=2.5)
    p2 = report.render_heatmap(str(tmp_path / "h2.svg"), f, level=2.5)
    b1, b2 = Path(p1).read_bytes(), Path(p2).read_bytes()
    assert b1.startswith(b"<?xml")
    assert b1 == b2  # pinned hash salt + dropped date metadata

    for path in (
        report.render_mask(str(tmp_path / "m.svg"), mask),
        report.render_profiles(str(tmp_path / "p.svg"), g.nodes(),
                               {"a": f.values[0], "b": f.values[1]}, -50.0),
        report.render_convergence(str(tmp_path / "c.svg"), [0.2, 0.1], [0.3, 0.2]),
        report.render_trajectory(str(tmp_path / "t.svg"), f, traj),
    ):
        data = Path(path).read_bytes()
        assert data.startswith(b"<?xml") and len(data) > 1000


def test_render_heatmap_blanks_extinct(tmp_path):
    g = sf.build_grid(0.0, 1.0, 3, 0.1, 1)
    vals = np.array([[1.0, -50.0, 3.0], [4.0, 5.0, -50.0]])
    f = SpaceTimeField(g, vals, -50.0)
    path = report.render_heatmap(str(tmp_path / "h.png"), f)
    assert Path(path).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
