from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import survfront as sf
from survfront.core import (
    ConfigError,
    ValidationError,
    check_keys,
    load_config,
    validate_on_grid,
)


def test_grid_spacing_examples():
    g = sf.build_grid(-3.0, 3.0, 601, 2.0, 400)
    assert g.dx == pytest.approx(0.01, abs=1e-15)
    assert g.dt == pytest.approx(0.005, abs=1e-15)
    assert g.nodes()[0] == -3.0 and g.nodes()[-1] == pytest.approx(3.0)
    assert g.times()[0] == 0.0 and g.times()[-1] == pytest.approx(2.0)
    assert g.x_index(0.0) == 300
    assert g.t_index(1.0) == 200


def test_grid_tiny_but_legal():
    g = sf.build_grid(0.0, 1.0, 3, 1.0, 1)
    assert g.dx == 0.5 and g.dt == 1.0


@pytest.mark.parametrize(
    "args",
    [
        (1.0, 0.0, 11, 1.0, 10),   # inverted space interval
        (0.0, 1.0, 1, 1.0, 10),    # single node cannot carry dx
        (0.0, 1.0, 11, 0.0, 10),   # empty time horizon
        (0.0, 1.0, 11, 1.0, 0),    # no steps
    ],
)
def test_grid_rejects_degenerate(args):
    with pytest.raises(ValidationError):
        sf.build_grid(*args)


def test_stable_logsum_frozen_oracle():
    # independent high-precision evaluation of -0.3 + 0.1*ln(1 + e^-2)
    assert sf.stable_logsum(-0.3, -0.5, 0.1) == pytest.approx(
        -0.2873071988957027, abs=1e-15
    )


def test_stable_logsum_deep_negative_is_exact_max():
    assert sf.stable_logsum(0.0, -1000.0, 0.01) == 0.0
    assert sf.stable_logsum(-1000.0, 0.0, 0.01) == 0.0


def test_stable_logsum_symmetry_and_arrays():
    u = np.array([-50.0, -0.3, 0.2])
    v = np.array([-0.3, -50.0, 0.2])
    out = sf.stable_logsum(u, v, 0.1)
    rev = sf.stable_logsum(v, u, 0.1)
    np.testing.assert_allclose(out, rev, rtol=0, atol=0)
    assert out[2] == pytest.approx(0.2 + 0.1 * math.log(2.0))


def test_stable_logsum_requires_positive_eps():
    with pytest.raises(ValidationError):
        sf.stable_logsum(0.0, 0.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(
    u=st.floats(min_value=-1e6, max_value=1e6),
    v=st.floats(min_value=-1e6, max_value=1e6),
    eps=st.floats(min_value=1e-6, max_value=10.0),
)
def test_stable_logsum_bounds(u, v, eps):
    out = sf.stable_logsum(u, v, eps)
    hi = max(u, v)
    assert hi <= out <= hi + eps * math.log(2.0) + 1e-12


def test_hopf_cole_roundtrip():
    g = sf.build_grid(-1.0, 1.0, 21, 0.5, 5)
    rng = np.random.default_rng(7)
    n = np.exp(rng.uniform(-40.0, 2.0, size=(6, 21)))
    n[0, :3] = 0.0
    field = sf.SpaceTimeField(g, n, u_floor=0.0)
    u = sf.hopf_cole(field, 0.25)
    back = sf.hopf_cole_inverse(u, 0.25)
    live = n > 0
    np.testing.assert_allclose(back.values[live], n[live], rtol=1e-12)
    assert np.all(back.values[~live] == 0.0)
    assert np.all(u.values[~live] == u.u_floor)


def test_profile_kinds_evaluate():
    q = sf.ProfileSpec(kind="quadratic", scale=2.0, center=1.0)
    assert q(3.0) == pytest.approx(-8.0)
    s = sf.ProfileSpec(kind="sinusoidal", offset=1.0, amplitude=0.5, frequency=2.0)
    assert s(0.0) == pytest.approx(1.0)
    assert s(math.pi / 4.0) == pytest.approx(1.5)
    t = sf.ProfileSpec(kind="table", xs=(0.0, 1.0, 2.0), ys=(0.0, 2.0, 0.0))
    assert t(0.5) == pytest.approx(1.0)
    assert t(-5.0) == pytest.approx(0.0)  # clamped
    assert t(9.0) == pytest.approx(0.0)
    c = sf.ProfileSpec(kind="constant", value=-0.5)
    assert c.is_constant and c.constant_value == -0.5
    assert not t.is_constant


def test_profile_validation_errors():
    with pytest.raises(ValidationError):
        sf.ProfileSpec(kind="cubic")
    with pytest.raises(ValidationError):
        sf.ProfileSpec(kind="table", xs=(1.0, 0.0), ys=(0.0, 1.0))
    with pytest.raises(ValidationError):
        sf.ProfileSpec(kind="table", xs=(), ys=())
    with pytest.raises(ValidationError):
        sf.ProfileSpec(kind="table", xs=(0.0, 1.0), ys=(0.0,))


def test_problem_validation():
    rate = sf.ProfileSpec(kind="constant", value=1.0)
    u0 = sf.ProfileSpec(kind="quadratic")
    with pytest.raises(ValidationError):
        sf.ProblemSpec(rate=rate, u0=u0, u_m=0.0, epsilon=0.1)
    with pytest.raises(ValidationError):
        sf.ProblemSpec(rate=rate, u0=u0, u_m=-0.1, epsilon=0.0)
    with pytest.raises(ValidationError):
        sf.ProblemSpec(rate=rate, u0=u0, u_m=-0.1, epsilon=0.1, gamma=1.0)
    with pytest.raises(ValidationError):
        sf.ProblemSpec(rate=rate, u0=u0, u_m=-0.1, epsilon=0.1, u_floor=-5.0)


def test_declared_lipschitz_checked_on_grid():
    g = sf.build_grid(-2.0, 2.0, 41, 1.0, 10)
    ok = sf.ProblemSpec(
        rate=sf.ProfileSpec(kind="constant", value=1.0),
        u0=sf.ProfileSpec(kind="quadratic", scale=1.0, lipschitz_bound=4.0),
        u_m=-0.1,
        epsilon=0.1,
    )
    validate_on_grid(ok, g)
    bad = sf.ProblemSpec(
        rate=sf.ProfileSpec(kind="constant", value=1.0),
        u0=sf.ProfileSpec(kind="quadratic", scale=1.0, lipschitz_bound=1.0),
        u_m=-0.1,
        epsilon=0.1,
    )
    with pytest.raises(ValidationError, match="u0"):
        validate_on_grid(bad, g)


MINIMAL_DOC = {
    "grid": {"x_min": -1.0, "x_max": 1.0, "nx": 11, "t_final": 0.5, "nt": 5},
    "problem": {
        "rate": {"kind": "constant", "value": 1.0},
        "u0": {"kind": "quadratic", "scale": 1.0},
        "u_m": -0.04,
        "epsilon": 0.1,
    },
}


def test_load_config_minimal(tmp_path):
    import json

    p = tmp_path / "c.json"
    p.write_text(json.dumps(MINIMAL_DOC))
    doc = load_config(str(p))
    assert doc["_grid"].nx == 11
    assert doc["_problem"].u_m == -0.04


def test_load_config_missing_key_names_it(tmp_path):
    import copy
    import json

    doc = copy.deepcopy(MINIMAL_DOC)
    del doc["problem"]["u_m"]
    p = tmp_path / "c.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="u_m"):
        load_config(str(p))


def test_load_config_unknown_key_names_it(tmp_path):
    import copy
    import json

    doc = copy.deepcopy(MINIMAL_DOC)
    doc["problem"]["uu_m"] = 1
    p = tmp_path / "c.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="uu_m"):
        load_config(str(p))


def test_check_keys_reports_where():
    with pytest.raises(ConfigError, match="grid"):
        check_keys({"bogus": 1}, ("nx",), ("nx",), "grid")


def test_spacetime_mask_algebra():
    g = sf.build_grid(0.0, 1.0, 3, 1.0, 1)
    a = sf.SpaceTimeMask(g, np.array([[1, 0, 0], [1, 1, 0]], dtype=bool))
    b = sf.SpaceTimeMask(g, np.array([[1, 1, 0], [0, 1, 0]], dtype=bool))
    assert (a & b).count() == 2
    assert (a | b).count() == 4
    assert a == a and not (a == b)
    assert a.contains(0.0, 0.0) and not a.contains(1.0, 0.0)


def test_scalar_field_lipschitz_and_shift():
    g = sf.build_grid(0.0, 1.0, 11, 1.0, 2)
    f = sf.ScalarField(g, g.nodes() * 3.0)
    assert f.lipschitz() == pytest.approx(3.0)
    shifted = f.shifted(-0.5)
    assert shifted.values[0] == pytest.approx(-0.5)
    # the sentinel never shifts
    v = np.full(11, sf.DEFAULT_U_FLOOR)
    v[5] = 0.0
    f2 = sf.ScalarField(g, v)
    sh = f2.shifted(-1.0)
    assert sh.values[0] == sf.DEFAULT_U_FLOOR
    assert sh.values[5] == -1.0
