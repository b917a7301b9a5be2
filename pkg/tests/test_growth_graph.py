import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsphere.dirac import build_abs_torus, build_d_torus, build_neg_torus, commutator_bound_check, from_expression
from qsphere.errors import SignPatternError, VerificationError
from qsphere.growth_graph import (
    SignForm,
    SignPattern,
    build_graph,
    classify_positive_set,
    classify_sign_pattern,
    dirac_from_pattern,
    graph_from_report,
    khomology_class,
    lemma_path,
    path_length_closed_form,
    random_lemma_pair,
    random_pattern,
    tail_set,
)
from qsphere.index_pairing import PositiveSet, fredholm_index, u_map
from qsphere.lattice import Truncation

import oracles


def torus_graph(ell, n=8):
    t = Truncation(ell, n, n)
    d = build_d_torus(ell)
    return graph_from_report(d, commutator_bound_check(d, 0.5, t), t)


def test_edges_by_hand():
    g = torus_graph(1)
    assert g.c == 1.5
    assert g.is_edge((0, 0), (0, -1))
    assert not g.is_edge((1, 0), (1, -1))
    assert set(g.neighbors((0, 0))) == {(1, 0), (0, 1), (0, -1)}
    assert g.directional_edges(2).sum() == 9 * 16 - 8
    with pytest.raises(ValueError):
        build_graph(build_d_torus(1), 0.0, Truncation(1, 2, 2))
    with pytest.raises(ValueError):
        t = Truncation(1, 6, 6)
        d = from_expression(1, "2**g1")
        graph_from_report(d, commutator_bound_check(d, 0.5, t), t)


def test_lemma_paths_by_hand():
    assert lemma_path((0, 3), (0, -1), 2) == [(0, 2), (0, 1), (0, 0), (0, -1)]
    assert lemma_path((2, 1, 4), (0, 0, 4), 3) == [(1, 1, 4), (0, 1, 4), (0, 0, 4)]
    assert lemma_path((0, 0, 4), (2, 1, 4), 3) == [(0, 1, 4), (1, 1, 4), (2, 1, 4)]
    assert lemma_path((3, 2), (0, 0), 3) == [(2, 2), (1, 2), (0, 2), (0, 1), (0, 0)]
    assert lemma_path((1, 1), (1, 1), 2) == []
    with pytest.raises(ValueError):
        lemma_path((1, 1), (2, 2), 1)
    with pytest.raises(ValueError):
        lemma_path((1, 1), (1, 2, 3), 1)
    with pytest.raises(ValueError):
        lemma_path((1, 1), (0, 1), 4)


@given(st.integers(1, 3), st.integers(0, 2**31))
def test_random_lemma_paths(ell, seed):
    rng = np.random.default_rng(seed)
    g = torus_graph(ell, 6)
    for _ in range(5):
        a, b, k = random_lemma_pair(rng, ell, 4)
        path = lemma_path(a, b, k)
        g.check_path(a, path)
        assert len(path) == path_length_closed_form(a, b, k)
        assert (path[-1] if path else a) == b
        # every step is a unit move
        for x, y in zip([a] + path, path):
            assert sum(abs(u - v) for u, v in zip(x, y)) == 1


def test_check_path_rejects():
    g = torus_graph(1)
    with pytest.raises(VerificationError):
        g.check_path((1, 0), [(1, -1)])


def test_tail_sets():
    assert tail_set((1, 1), 1) == [(-1,), (0,), (1,)]
    assert tail_set((2, 1, 0), 1) == [(0, 0), (1, 0)]
    assert tail_set((2, 1, 0), 2) == [(0,)]


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_torus_classification(ell):
    p = classify_sign_pattern(build_d_torus(ell), Truncation(ell, 5, 5))
    assert p.form is SignForm.A1_UNION_B
    assert p.M == (0,) * (ell + 1)
    assert p.exceptional == ((0,) * (ell + 1),)
    assert p.E == tuple((k, (0,) * (ell + 1 - k)) for k in range(1, ell + 1))
    assert khomology_class(p) == -1


def test_other_builtins():
    t = Truncation(2, 5, 5)
    assert classify_sign_pattern(build_neg_torus(2), t).form is SignForm.A2_UNION_B
    assert classify_sign_pattern(build_abs_torus(2), t).form is SignForm.A1_A2_UNION_B
    assert khomology_class(classify_sign_pattern(build_abs_torus(2), t)) == 0


def test_classify_failure():
    t = Truncation(1, 5, 5)
    d = from_expression(1, "where((g1 + g2) % 2 == 0, 1, -1)")
    with pytest.raises(SignPatternError) as info:
        classify_sign_pattern(d, t)
    assert info.value.search_bound >= 0


def test_pattern_json_roundtrip():
    p = classify_sign_pattern(build_d_torus(2), Truncation(2, 4, 4))
    assert SignPattern.from_dict(p.to_dict()) == p


@given(st.integers(1, 3), st.integers(0, 2**31))
def test_random_pattern_roundtrip(ell, seed):
    rng = np.random.default_rng(seed)
    pat = random_pattern(rng, ell, m_bound=2)
    t = Truncation(ell, 5, 5)
    positive = pat.contains(t.coords)
    back = classify_positive_set(positive, t)
    assert back.form == pat.form
    assert np.array_equal(back.contains(t.coords), positive)
    d = dirac_from_pattern(pat)
    idx = fredholm_index(PositiveSet(d), u_map(ell, 12)).index
    assert idx == khomology_class(back) == oracles.line_index(lambda p: d(p) > 0, ell)
