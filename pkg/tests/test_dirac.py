import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsphere.dirac import (
    BUILTINS,
    EquivariantDirac,
    build_abs_torus,
    build_d_torus,
    commutator_bound_check,
    commutator_norms,
    counting_function,
    counting_sequence,
    dump_spectrum,
    from_expression,
    from_table,
    optimality_check,
    spectral_dimension_estimate,
)
from qsphere.errors import WindowError
from qsphere.lattice import Truncation, count_ball
from qsphere.qoperators import generators

import oracles


def test_torus_values_and_zero_policy():
    d = build_d_torus(1)
    assert d((3, 0)) == 3
    assert d((3, -2)) == -5
    assert d((0, 0)) == 0.5
    assert (-d)((0, 0)) == -0.5
    assert (-d).name == "neg_torus"
    assert (-(-d)).name == "torus"
    assert build_abs_torus(1)((0, -4)) == 4.5
    assert set(BUILTINS) == {"torus", "neg_torus", "abs_torus"}


@given(st.integers(1, 3), st.lists(st.integers(0, 5), min_size=4, max_size=4), st.integers(-5, 5))
def test_torus_matches_oracle(ell, head, m):
    p = tuple(head[:ell]) + (m,)
    assert build_d_torus(ell)(p) == oracles.torus_d(p)


def test_dirac_validation():
    with pytest.raises(ValueError):
        EquivariantDirac(lambda c: c[:, 0], 1, "x", zero_value=0)
    with pytest.raises(ValueError):
        build_d_torus(1).values(np.zeros((2, 3), dtype=int))
    assert build_d_torus(2).shifted(1.0)((0, 0, 1)) == 2.0


def test_expression():
    d = from_expression(1, "where(g2 >= 0, deg, -deg)")
    t = Truncation(1, 4, 4)
    assert np.array_equal(d.spectrum(t), build_d_torus(1).spectrum(t))
    for bad in ("__import__('os')", "g1.real", "g9 + 1", "[g1]"):
        with pytest.raises(ValueError):
            from_expression(1, bad)


def test_table_roundtrip(tmp_path):
    t = Truncation(1, 3, 3)
    buf = io.StringIO()
    dump_spectrum(build_d_torus(1), t, buf)
    path = tmp_path / "table.csv"
    path.write_text(buf.getvalue())
    d = from_table(1, path, fallback="where(g2 >= 0, deg, -deg)")
    big = Truncation(1, 6, 6)
    assert np.array_equal(d.spectrum(big), build_d_torus(1).spectrum(big))
    strict = from_table(1, path)
    with pytest.raises(ValueError):
        strict.spectrum(big)
    bad = tmp_path / "bad.csv"
    bad.write_text("g1,d\n0,1\n")
    with pytest.raises(ValueError):
        from_table(1, bad)


@pytest.mark.parametrize("ell", [1, 2, 3])
@pytest.mark.parametrize("q", [0.3, 0.5, 0.8])
def test_torus_bounded_and_matches_oracle(ell, q):
    d = build_d_torus(ell)
    rep = commutator_bound_check(d, q, Truncation(ell, 6, 6))
    assert rep.verdict == "bounded"
    for k in range(1, ell + 2):
        ref = oracles.commutator_sup(oracles.torus_d, q, ell, k, 5)
        assert rep.sups[k - 1] == pytest.approx(ref, abs=1e-12)


def test_frozen_sups():
    # k = 2 is attained at gamma = (0, -1), where d jumps from -1 to the policy value 1/2
    rep = commutator_bound_check(build_d_torus(1), 0.5, Truncation(1, 8, 8))
    assert rep.sups == [1.0, 1.5]
    assert rep.c == 1.5
    rep2 = commutator_bound_check(build_d_torus(2), 0.5, Truncation(2, 6, 6))
    assert rep2.sups == pytest.approx([1.0, 1.0, 1.5])


def test_commutator_norms_agree():
    t = Truncation(1, 8, 8)
    rows = commutator_norms(build_d_torus(1), generators(0.5, t))
    assert rows[1]["norm"] == pytest.approx(1.5, abs=1e-12)
    assert rows[0]["norm"] == pytest.approx(math.sqrt(1 - 0.25**8), abs=1e-10)


@pytest.mark.parametrize("expr", ["2**g1", "deg**2"])
def test_unbounded_examples(expr):
    d = from_expression(1, expr)
    t = Truncation(1, 8, 8)
    assert commutator_bound_check(d, 0.5, t).verdict == "diverging"
    assert optimality_check(d, t).verdict == "super-linear"


def test_optimality_frozen():
    t = Truncation(1, 8, 8)
    rep = optimality_check(build_d_torus(1), t)
    assert (rep.a, rep.b, rep.verdict) == (0.5, 1.0, "O(degree)")
    lin = optimality_check(from_expression(1, "2*deg+3"), t)
    assert (lin.a, lin.b) == (3.0, 2.0)
    with pytest.raises(WindowError):
        optimality_check(build_d_torus(1), Truncation(1, 2, 2))


@pytest.mark.parametrize("ell", [1, 2])
def test_counting_matches_ball(ell):
    d = build_d_torus(ell)
    for n in range(1, 9):
        assert counting_function(d, n) == count_ball(ell, n) == oracles.counting(oracles.torus_d, ell, n)
    # the origin carries the policy value 1/2, so it is not counted at n = 0
    assert counting_function(d, 0) == 0


def test_counting_window_guard():
    with pytest.raises(WindowError):
        counting_sequence(build_d_torus(1), [5], Truncation(1, 3, 3))


def test_spectral_dimension_frozen():
    assert spectral_dimension_estimate(build_d_torus(1), (10, 50)) == pytest.approx(1.9153, abs=1e-3)
    assert spectral_dimension_estimate(build_d_torus(2), (40, 80)) == pytest.approx(2.923, abs=1e-3)
    with pytest.raises(ValueError):
        spectral_dimension_estimate(build_d_torus(1), (5, 5))


def test_short_range_slope_is_biased():
    # the log-log slope creeps up to ell + 1 from below; for ell = 2 the
    # window [10, 30] is still too short
    assert spectral_dimension_estimate(build_d_torus(2), (10, 30)) < 2.8


def test_constant_spectrum():
    d = from_expression(2, "3 + 0 * deg")
    t = Truncation(2, 4, 4)
    rep = commutator_bound_check(d, 0.5, t)
    assert rep.sups == [0.0, 0.0, 0.0] and rep.verdict == "bounded"
    assert [r["norm"] for r in commutator_norms(d, generators(0.5, t))] == [0.0, 0.0, 0.0]
