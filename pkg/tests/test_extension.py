import itertools
import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from qsphere.errors import VerificationError
from qsphere.extension import (
    ModuleSpaceModel,
    Monomial,
    elementary_operator,
    ev1_pullback_check,
    lift_residual,
    lift_word,
    psi_rep,
    reconstruct_elementary,
    residual_series,
    sigma_hat,
    sigma_quotient,
    sigma_tilde,
    slice_projection,
    transport_u,
)
from qsphere.lattice import Truncation
from qsphere.qoperators import generators

import oracles


def words(ell, alphabet, max_len=3):
    top = ell + 1 if alphabet == "z" else ell + 2
    letter = st.tuples(st.integers(1, top), st.booleans()).map(
        lambda x: f"{alphabet}{x[0]}{'*' if x[1] else ''}"
    )
    return st.lists(letter, max_size=max_len).map(lambda xs: Monomial.parse(" ".join(xs), ell) if xs else Monomial(ell, alphabet))


def test_parse_and_print():
    m = Monomial.parse("z1 z2*", 1)
    assert str(m) == "z1 z2*"
    assert Monomial.parse("z1z2*", 1) == m
    assert str(m.adjoint()) == "z2 z1*"
    assert str(Monomial.parse("", 2)) == "1"
    for bad in ("z3", "x1", "z1 y2", "z1**"):
        with pytest.raises(ValueError):
            Monomial.parse(bad, 1)
    with pytest.raises(ValueError):
        Monomial.parse("z1", 1) * Monomial.parse("y1", 1)


def test_sigma_quotient_examples():
    assert str(sigma_quotient(Monomial.parse("y1 y2*", 1))) == "z1 z2*"
    assert sigma_quotient(Monomial.parse("y1 y3", 1)) is None
    assert sigma_quotient(Monomial(1, "y")) == Monomial(1, "z")
    with pytest.raises(ValueError):
        sigma_quotient(Monomial.parse("z1", 1))


@given(st.integers(1, 3), st.data())
def test_sigma_quotient_is_star_homomorphism(ell, data):
    a = data.draw(words(ell, "y"))
    b = data.draw(words(ell, "y"))
    sa, sb, sab = sigma_quotient(a), sigma_quotient(b), sigma_quotient(a * b)
    if sa is None or sb is None:
        assert sab is None
    else:
        assert sab == sa * sb
    assert sigma_quotient(a.adjoint()) == (None if sa is None else sa.adjoint())


@given(st.integers(1, 2), st.data())
def test_lift_inverts_quotient(ell, data):
    m = data.draw(words(ell, "z"))
    assert sigma_quotient(lift_word(m)) == m


def test_psi_examples():
    model = ModuleSpaceModel(1, 4, 2)
    y3 = psi_rep(Monomial.parse("y3", 1), 0.5, model)
    assert y3.apply((1, 2, -1)) == {(1, 2, 0): pytest.approx(0.125)}
    y1 = psi_rep(Monomial.parse("y1", 1), 0.5, model)
    assert y1.max_abs_diff(generators(0.5, model.trunc)[1]) == 0.0
    yy = psi_rep(Monomial.parse("y3 y3*", 1), 0.5, model)
    n = model.trunc.coords[:, :-1].sum(axis=1)
    assert yy.is_diagonal()
    assert np.allclose(yy.diagonal_values().real, 0.25**n, rtol=0, atol=1e-15)


def test_transport_is_unitary():
    model = ModuleSpaceModel(2, 3, 1)
    c0, c1 = transport_u(model)
    u = sp.vstack([c0, c1])
    # the bilateral window has one point fewer on the negative side, so
    # copy 1 misses its top layer and U is an isometry onto its range
    assert abs(u.T @ u - sp.identity(u.shape[1])).max() == 0
    proj = u @ u.T
    assert abs(proj @ proj - proj).max() == 0
    assert abs(c0 @ c0.T - sp.identity(c0.shape[0])).max() == 0


@pytest.mark.parametrize("ell", [1, 2])
def test_sigma_hat_agrees_on_first_letters(ell):
    model = ModuleSpaceModel(ell, 5, 1)
    for k in range(1, ell + 1):
        for w in (f"z{k}", f"z{k}*", f"z{k} z{k}*", f"z1 z{k}*"):
            m = Monomial.parse(w, ell)
            assert sigma_hat(m, 0.5, model).max_abs_diff(psi_rep(lift_word(m), 0.5, model)) == 0.0
    assert sigma_hat(Monomial(ell, "z"), 0.5, model).max_abs_diff(psi_rep(Monomial(ell, "y"), 0.5, model)) == 0.0


def test_sigma_hat_last_letter_difference():
    model = ModuleSpaceModel(1, 6, 1)
    m = Monomial.parse("z2", 1)
    diff = sigma_hat(m, 0.5, model) - psi_rep(lift_word(m), 0.5, model)
    for (row, col), v in diff.entries().items():
        n1, n2, f = col
        assert row == (n1, n2 + 1, f)
        assert v.real == pytest.approx(0.5**n1 * (1 - np.sqrt(1 - 0.25 ** (n2 + 1))), abs=1e-15)
        assert abs(v) <= 1


def test_sigma_tilde_is_tensor():
    model = ModuleSpaceModel(1, 3, 1)
    st_ = sigma_tilde(Monomial.parse("z2", 1), 0.5, model)
    inner = generators(0.5, model.h_trunc)[2].matrix
    assert abs(st_.matrix - sp.kron(inner, sp.identity(3))).max() == 0


@pytest.mark.parametrize("ell", [1, 2])
def test_lift_residual_decay(ell):
    model = ModuleSpaceModel(ell, 8, 1)
    s = residual_series(Monomial.parse(f"z{ell + 1}", ell), 0.5, model)
    assert s.monotone
    assert s.decay == pytest.approx(0.5, abs=1e-9)
    r = np.asarray(s.residuals)
    assert np.allclose(r[1:] / r[:-1], 0.5, atol=1e-9)
    assert json.loads(s.to_json())["word"] == f"z{ell + 1}"


def test_residual_closed_forms():
    model = ModuleSpaceModel(1, 8, 1)
    q = 0.5
    for R in range(0, 6):
        # largest tail weight sits at n = (R + 1, 0)
        assert lift_residual(Monomial.parse("z2", 1), q, model, R) == pytest.approx(
            q ** (R + 1) * (1 - np.sqrt(1 - q * q)), abs=1e-14
        )
        assert lift_residual(Monomial.parse("z2 z2*", 1), q, model, R) <= q ** (2 * R) + 1e-15
    with pytest.raises(ValueError):
        lift_residual(Monomial.parse("z2", 1), q, model, 8)


@given(st.integers(1, 2), st.data())
def test_first_letter_words_lift_exactly(ell, data):
    m = data.draw(words(ell, "z").filter(lambda w: w.uses_only(range(1, ell + 1))))
    model = ModuleSpaceModel(ell, 5, 1)
    assert residual_series(m, 0.5, model).exact_zero


@given(st.data())
def test_residuals_nonincreasing(data):
    m = data.draw(words(1, "z", max_len=3))
    s = residual_series(m, 0.5, ModuleSpaceModel(1, 7, 1))
    assert s.monotone


def test_multiplicative_on_first_letters():
    model = ModuleSpaceModel(2, 5, 1)
    a, b = Monomial.parse("z1 z2*", 2), Monomial.parse("z2 z1", 2)
    # intermediate images may leave the window, so compare away from the edge
    inner = model.trunc.coords[:, :-1].max(axis=1) <= model.n_max - 2
    lhs = sigma_hat(a * b, 0.5, model).compress(inner)
    rhs = (sigma_hat(a, 0.5, model) @ sigma_hat(b, 0.5, model)).compress(inner)
    assert lhs.max_abs_diff(rhs) <= 1e-15  # association order only
    c = Monomial.parse("z3", 2)
    lhs = sigma_hat(c * a, 0.5, model).compress(inner)
    rhs = (sigma_hat(c, 0.5, model) @ sigma_hat(a, 0.5, model)).compress(inner)
    assert lhs.max_abs_diff(rhs) <= 1e-15


def test_slice_projection():
    t = Truncation(2, 3, 2)
    p, word = slice_projection((1, 2), 0.5, t)
    mask = (t.coords[:, 0] == 1) & (t.coords[:, 1] == 2)
    assert np.array_equal(p.diagonal_values().real == 1, mask)
    assert len(word) == 2


def test_reconstruction_examples():
    t = Truncation(1, 4, 4)
    op, rep = reconstruct_elementary((0,), (0,), 0, 0.5, t)
    assert op.is_diagonal()
    assert np.array_equal(op.diagonal_values().real == 1, t.coords[:, 0] == 0)
    op, rep = reconstruct_elementary((1,), (0,), -1, 0.5, t)
    assert rep.max_abs_error <= 1e-10
    assert "z2^1" in rep.word and "z1^1" in rep.word
    assert np.abs(op.matrix.toarray() - oracles.dense_elementary((1,), (0,), -1, 1, 4, 4)).max() <= 1e-10
    op, _ = reconstruct_elementary((2,), (2,), 0, 0.3, t)
    assert op.max_abs_diff(op @ op) <= 1e-12
    assert op.max_abs_diff(op.H) <= 1e-12


@pytest.mark.parametrize("ell", [1, 2])
def test_reconstruction_grid(ell):
    t = Truncation(ell, 4, 4)
    for i in itertools.product(range(3), repeat=ell):
        for j in itertools.product(range(3), repeat=ell):
            for k in range(-2, 3):
                _, rep = reconstruct_elementary(i, j, k, 0.5, t)
                assert rep.passed
                ref = oracles.dense_elementary(i, j, k, ell, 4, 4)
                assert np.abs(elementary_operator(i, j, k, t).matrix.toarray() - ref).max() == 0


def test_reconstruction_guards():
    t = Truncation(1, 3, 3)
    with pytest.raises(ValueError):
        reconstruct_elementary((0, 1), (0,), 0, 0.5, t)
    with pytest.raises(ValueError):
        reconstruct_elementary((4,), (0,), 0, 0.5, t)
    with pytest.raises(ValueError):
        reconstruct_elementary((0,), (0,), 4, 0.5, t)


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_ev1(ell):
    rep = ev1_pullback_check(0.5, Truncation(ell, 4, 4))
    assert rep.passed
    assert rep.sign_mismatches == 0 and rep.mismatch_trace == 0.0
    assert rep.isometric_collapse and rep.generator_defect == 0.0
