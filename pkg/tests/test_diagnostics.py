import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vpfm import diagnostics as dg
from vpfm.grid import GridDesc


def test_energy_closed_forms():
    desc = GridDesc((8, 8, 8), 0.125)
    assert dg.kinetic_energy(desc, desc.zeros_faces()) == 0.0
    u = [np.full(desc.shape("face", a), 1.0 if a == 0 else 0.0) for a in range(3)]
    assert dg.kinetic_energy(desc, u) == pytest.approx(0.5, abs=1e-14)


def test_taylor_green_energy_matches_integral():
    errs = []
    for n in (16, 32, 64):
        desc = GridDesc((n, n), 2 * np.pi / n)
        xu, xv = desc.positions("face", 0), desc.positions("face", 1)
        u = [np.sin(xu[..., 0]) * np.cos(xu[..., 1]), -np.cos(xv[..., 0]) * np.sin(xv[..., 1])]
        errs.append(abs(dg.kinetic_energy(desc, u) - np.pi ** 2))
    assert errs[-1] < 1e-2
    assert all(e1 <= e0 for e0, e1 in zip(errs, errs[1:]))


def test_moments_are_translation_invariant():
    desc = GridDesc((16, 16), 1.0 / 16)
    rng = np.random.default_rng(0)
    w = np.zeros(desc.shape("node"))
    w[3:8, 4:9] = rng.normal(size=(5, 5))
    shifted = np.roll(w, (5, 3), axis=(0, 1))
    for k in (2, 4):
        assert dg.vorticity_moment(desc, [w], k) == pytest.approx(dg.vorticity_moment(desc, [shifted], k), rel=1e-14)
    d3 = GridDesc((10, 10, 10), 0.1)
    w3 = [np.zeros(d3.shape(*s)) for s in d3.vort_specs()]
    for c in w3:
        c[2:5, 2:5, 2:5] = rng.normal(size=(3, 3, 3))
    s3 = [np.roll(c, (2, 1, 3), axis=(0, 1, 2)) for c in w3]
    assert dg.enstrophy(d3, w3) == pytest.approx(dg.enstrophy(d3, s3), rel=1e-14)


def test_failure_scan_examples():
    assert dg.failure_scan(np.ones(100)).reported is None
    e = np.ones(100)
    e[50:] = 0.93
    s = dg.failure_scan(e)
    assert s.dissipation_frame == 50 and s.reported == ("dissipation", 50)
    e = np.ones(100)
    e[20] = 1.05
    e[40:] = 0.93
    s = dg.failure_scan(e)
    assert s.reported == ("explosion", 20) and s.dissipation_frame == 40
    assert dg.failure_scan([1.0, 0.94]).dissipation_frame == 1
    assert dg.failure_scan([1.0, 1.04]).explosion_frame == 1
    assert dg.failure_scan([1.0, 0.9401, 1.0399]).reported is None
    assert dg.failure_scan([2.0, 1.0], normalize=True).dissipation_frame == 1
    assert dg.failure_scan([1.0, np.nan]).explosion_frame == 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.5, 1.5), min_size=1, max_size=60))
def test_failure_scan_is_idempotent_and_matches_tracker(series):
    a = dg.failure_scan(series)
    b = dg.failure_scan(list(series))
    assert a == b
    tr = dg.FailureTracker(e0=1.0)
    flags = [tr.update(i, e)[1:] for i, e in enumerate(series)]
    assert tr.dissipation_frame == a.dissipation_frame
    assert tr.explosion_frame == a.explosion_frame
    # flags latch once set
    for (d0, x0), (d1, x1) in zip(flags, flags[1:]):
        assert d1 >= d0 and x1 >= x0


def test_tracker_normalizes_by_first_frame():
    tr = dg.FailureTracker()
    ne, _, _ = tr.update(0, 3.0)
    assert ne == 1.0
    ne, diss, _ = tr.update(1, 2.7)
    assert ne == pytest.approx(0.9) and diss


def test_observed_order_of_synthetic_second_order_scheme():
    res = [16, 32, 64, 128]
    rng = np.random.default_rng(1)
    errs = [3.0 / n ** 2 * (1 + 0.01 * rng.uniform(-1, 1)) for n in res]
    for o in dg.observed_orders(res, errs):
        assert abs(o - 2.0) < 0.05
    table = dg.convergence_study(lambda n: (3.0 / n ** 2, 5.0 / n ** 2), res)
    assert table.order_between(32, 128) == pytest.approx(2.0)
    assert table.linf_orders == pytest.approx([2.0] * 3)
    assert "order" in table.format()
    assert dg.rms_difference(np.ones(5), np.ones(5)) == 0.0


def test_energy_rate_window():
    recs = [dg.DiagnosticsRecord(i, 0.1 * i, 0.1, 1.0 + 0.01 * i, 1, 0, 0, 0, 0) for i in range(30)]
    assert dg.energy_rate(recs[:5], 1.0) is None
    r = dg.energy_rate(recs, 1.0)
    assert r == pytest.approx(0.1 / (1.0 * recs[-1].kinetic_energy), rel=1e-9)


def test_ghia_tables():
    t = dg.load_ghia()
    assert sorted(t) == [100, 400, 1000]
    for d in t.values():
        assert len(d["u"]) == 17 and len(d["v"]) == 17
        assert d["u_y"][0] == 0.0 and d["u_y"][-1] == 1.0
        assert d["u"][-1] == 1.0 and d["u"][0] == 0.0
    assert t[100]["u"].min() == pytest.approx(-0.21090)
    assert t[1000]["v"].min() == pytest.approx(-0.51550)
    assert abs(dg.ghia_lid_vorticity(t[1000])) == pytest.approx(14.75, rel=0.01)


def test_cavity_probe_uses_solver_kernel():
    n = 32
    desc = GridDesc((n, n), 1.0 / n)
    xu, xv = desc.positions("face", 0), desc.positions("face", 1)
    # u = y, v = -x: linear fields are reproduced exactly by the quadratic kernel
    u = [xu[..., 1].copy(), -xv[..., 0].copy()]
    w = [np.full(desc.shape("node"), -2.0)]
    p = dg.cavity_probe(desc, u, w, 100)
    assert p.u_min_vertical == pytest.approx(0.0, abs=1e-12)
    assert p.v_max_horizontal == pytest.approx(0.0, abs=1e-12)
    assert p.v_min_horizontal == pytest.approx(-1.0, abs=1e-12)
    assert p.midpoint_top_vorticity == pytest.approx(-2.0)
    errs = p.relative_errors()
    assert set(errs) == {"midpoint_top_vorticity", "u_min_vertical", "v_max_horizontal", "v_min_horizontal"}
