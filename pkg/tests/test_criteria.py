import itertools

import numpy as np
import pytest
from scipy.optimize import brentq

import oracles
from penergy.criteria import (
    BOUNDARY,
    EXISTS,
    INCONCLUSIVE,
    NOT_EXISTS,
    EquivRelation,
    candidate_relations,
    cross_ratio,
    cut_floor,
    delta_JJ,
    detect_degeneracy,
    enumerate_relations,
    is_g_relation,
    is_preserved,
    lift_relation,
    push_relation,
    quotient_form,
    quotient_renorm,
    relation_diagnostics,
    rho_values,
    sabot_test,
    sg_closed_forms,
)
from penergy.errors import DegenerateFormError, DomainError, GuardError
from penergy.forms import StandardForm, TraceForm, VertexSet, sum_forms
from penergy.fractal import build_level, preset, r_preserving_subgroup
from penergy.solver import ResistanceMatrix, evaluate, resistance_matrix

SG_LABELS = ["q1", "q2", "q3"]


def J_pair(a, b, base=SG_LABELS):
    return EquivRelation.from_pairs(base, [(a, b)])


def test_enumeration_counts():
    two = enumerate_relations(["a", "b"])
    assert len(two) == 2 and all(J.trivial for J in two)
    three = enumerate_relations(SG_LABELS)
    nontrivial = [J for J in three if not J.trivial]
    assert len(three) == 5 and len(nontrivial) == 3
    for A, B in itertools.permutations(nontrivial, 2):
        assert not A <= B
    assert len(enumerate_relations(list(range(5)))) == 52
    with pytest.raises(GuardError):
        enumerate_relations(list(range(9)))


def test_relation_basics():
    J = J_pair("q2", "q3")
    assert J.n_classes == 2 and J.related("q2", "q3") and not J.related("q1", "q2")
    assert str(J) == "{{q1}, {q2,q3}}"
    zero = EquivRelation.from_pairs(SG_LABELS)
    one = EquivRelation.from_labels(SG_LABELS, [SG_LABELS])
    assert zero.is_zero and one.is_one and zero < J < one
    with pytest.raises(DomainError):
        EquivRelation(VertexSet(SG_LABELS), [["q1"], ["q2"]])


def test_push_and_preserved():
    sg = preset("sg")
    J1 = J_pair("q2", "q3")
    assert push_relation(J1, sg) == J1 and is_preserved(J1, sg)
    lifted = lift_relation(J1, sg)
    lv = build_level(sg, 1)
    assert lifted.related("q2", "m23") and lifted.related("m12", "m13") and not lifted.related("q1", "m12")
    zero = EquivRelation.from_pairs(SG_LABELS)
    assert push_relation(zero, sg) == zero
    iv = preset("interval", 2.0)
    Ji = EquivRelation.from_pairs(["0", "1"], [("0", "1")])
    assert push_relation(Ji, iv) == Ji
    assert len(lv.vertices) == 6


def test_g_relations():
    sg = preset("sg")
    J1 = J_pair("q2", "q3")
    assert is_g_relation(J1, [])
    full = r_preserving_subgroup(sg)
    assert len(full) == 6
    assert not any(is_g_relation(J, full, sg.boundary) for J in (J1, J_pair("q1", "q3"), J_pair("q1", "q2")))
    fix_q1 = [g for g in full if g.sigma[0] == 0]
    assert len(fix_q1) == 2 and is_g_relation(J1, fix_q1, sg.boundary)
    skew = sg.with_r((10.0, 1.0, 1.0))
    assert candidate_relations(skew) == [J1]


def rm(values, labels=None):
    R = np.array(values, dtype=float)
    labels = labels or list(range(R.shape[0]))
    return ResistanceMatrix(VertexSet(labels), R)


def test_detect_degeneracy_examples():
    flat = rm([[0, 1, 1], [1, 0, 1], [1, 1, 0]])
    assert detect_degeneracy(flat, 1e-2).relations == ()
    close = rm([[0, 1, 1e6], [1, 0, 1e6], [1e6, 1e6, 0]])
    ch = detect_degeneracy(close, 1e-2)
    assert ch.relations == (EquivRelation.from_pairs([0, 1, 2], [(0, 1)]),)
    assert ch.deltas[0] == pytest.approx(1e-6)
    R5 = np.full((5, 5), 1e6)
    for (a, b), v in {(0, 1): 1.0, (0, 2): 1e3, (1, 2): 1e3}.items():
        R5[a, b] = R5[b, a] = v
    for a, b in itertools.combinations(range(3, 5), 2):
        R5[a, b] = R5[b, a] = 1e6 * 1.1
    np.fill_diagonal(R5, 0.0)
    ch = detect_degeneracy(rm(R5), 1e-2)
    assert [str(J) for J in ch.relations] == ["{{0,1}, {2}, {3}, {4}}", "{{0,1,2}, {3}, {4}}"]
    inf = rm([[0, 1, np.inf], [1, 0, np.inf], [np.inf, np.inf, 0]])
    with pytest.raises(DegenerateFormError):
        detect_degeneracy(inf, 1e-2)
    with pytest.raises(DomainError):
        detect_degeneracy(flat, 2.0)


def multiscale_form(rng, n, p):
    """Trace form whose conductances live at three planted scales."""
    outer = rng.integers(0, 2, size=n)
    inner = outer * n + rng.integers(0, 2, size=n)
    pairs = []
    vs = VertexSet(list(range(n + 1)))
    for x, y in itertools.combinations(range(n), 2):
        c = 1.0 if inner[x] == inner[y] else (1e-3 if outer[x] == outer[y] else 1e-6)
        pairs.append((x, y, c * float(np.exp(0.3 * rng.normal()))))
    pairs.append((0, n, 1.0))
    return TraceForm(StandardForm.from_pairs(vs, p, pairs), list(range(n)))


def test_cross_ratio_floor_on_real_forms():
    rng = np.random.default_rng(10)
    checked = 0
    for _ in range(20):
        n, p = 4, float(rng.uniform(1.3, 3.5))
        R = resistance_matrix(multiscale_form(rng, n, p))
        rels = enumerate_relations(R.vertices)
        dJ = {J: (delta_JJ(R, J) if not J.trivial else 0.0) for J in rels}
        for delta in (1e-1, 1e-2):
            for J, Jp in itertools.permutations(rels, 2):
                if not J < Jp or dJ[J] >= 1 or dJ[Jp] >= 1:
                    continue
                between = [K for K in rels if J < K < Jp and dJ[K] < delta]
                if between:
                    continue
                assert cross_ratio(R, J, Jp) >= cut_floor(n, delta, p)
                checked += 1
    assert checked > 50


def test_detect_on_real_forms_matches_brute_force():
    rng = np.random.default_rng(12)
    for _ in range(10):
        E = multiscale_form(rng, 5, 2.0)
        R = resistance_matrix(E)
        delta = 1e-4
        brute = oracles.brute_delta_relations(R.R, delta)
        ch = detect_degeneracy(R, delta)
        # Every relation with delta_J below the bound is comparable; the chain lists them.
        got = sorted(sorted(list(b) for b in J.classes) for J in ch.relations if delta_JJ(R, J) < delta)
        assert got == sorted(brute)


def test_relation_diagnostics():
    sg = preset("sg")
    R = resistance_matrix(StandardForm.from_pairs(sg.boundary, 2.0, [("q1", "q2", 1.0), ("q2", "q3", 100.0), ("q1", "q3", 1.0)]))
    J1 = J_pair("q2", "q3")
    d = relation_diagnostics(R, J1, sg)
    assert d.delta_J < 0.1 and d.preserved and not d.g_relation


def test_quotient_form():
    E = StandardForm.complete(SG_LABELS, 2.0)
    J = J_pair("q2", "q3")
    Q = quotient_form(E, J)
    labels = J.block_labels()
    assert Q.energy({labels[0]: 0.0, labels[1]: 1.0}) == pytest.approx(2.0)
    assert Q.energy({labels[0]: 3.0, labels[1]: 3.0}) == 0.0
    E2 = StandardForm.from_pairs(SG_LABELS, 2.0, [("q1", "q3", 2.0)])
    u = np.array([0.4, -1.0])
    assert quotient_form(sum_forms([E, E2]), J).energy(u) == pytest.approx(
        quotient_form(E, J).energy(u) + quotient_form(E2, J).energy(u))


def test_quotient_renorm_errors():
    iv = preset("interval", 2.0)
    one = EquivRelation.from_pairs(["0", "1"], [("0", "1")])
    with pytest.raises(DomainError):
        quotient_renorm(StandardForm.complete(["a", "b"], 2.0), iv, one)
    sg = preset("sg")
    with pytest.raises(DomainError):
        quotient_renorm(StandardForm.complete(["a", "b"], 2.0), sg, J_pair("q2", "q3"))


def test_quotient_renorm_p2_schur():
    r = np.array([0.8, 1.3, 0.6])
    sg = preset("sg", r=r)
    J = J_pair("q2", "q3")
    # The quotient of the triangle form is a single edge of weight 2.
    Eq = quotient_form(StandardForm.complete(SG_LABELS, 2.0), J)
    got = evaluate(quotient_renorm(Eq, sg, J), [[0.0, 1.0]])[0]
    # Oracle: level-1 triangles with conductances 1/r_i, classes of the lifted relation merged.
    lv = build_level(sg, 1)
    pairs = []
    for i, cell in enumerate(lv.cell_index):
        for a, b in itertools.combinations(cell, 2):
            pairs.append((int(a), int(b), 1.0 / r[i]))
    L = oracles.laplacian(6, pairs)
    lifted = lift_relation(J, sg)
    P = np.zeros((6, lifted.n_classes))
    for k, blk in enumerate(lifted.classes):
        P[list(blk), k] = 1.0
    Lq = P.T @ L @ P
    ids = lifted.class_ids()
    keep = [int(ids[lv.vertices.index("q1")]), int(ids[lv.vertices.index("q2")])]
    S = oracles.schur_trace(Lq, keep)
    assert got == pytest.approx(-S[0, 1], rel=1e-10)


def test_rho_values_match_closed_forms():
    rng = np.random.default_rng(13)
    sg = preset("sg")
    for _ in range(6):
        p = float(rng.uniform(1.2, 4.0))
        r = rng.uniform(0.2, 5.0, size=3)
        cf = sg_closed_forms(p, r)
        for i in range(3):
            j, k = [t for t in range(3) if t != i]
            rec = rho_values(J_pair(SG_LABELS[j], SG_LABELS[k]), sg.with_r(r), p)
            assert rec.exact
            assert rec.rho_bar_J == pytest.approx(cf["rho_bar"][i], rel=1e-9)
            assert rec.rho_under_J == pytest.approx(cf["rho_bar"][i], rel=1e-9)
            assert rec.rho_under_quotient == pytest.approx(cf["rho_quotient"][i], rel=1e-9)


def test_closed_form_examples():
    cf = sg_closed_forms(2.0, (1, 1, 1))
    assert np.allclose(cf["rho_bar"], 0.5) and np.allclose(cf["rho_quotient"], 2.0 / 3.0)
    assert cf["classification"] == EXISTS
    cf = sg_closed_forms(2.0, (10, 1, 1))
    assert cf["lhs"] == pytest.approx(2.0) and cf["rhs"] == pytest.approx(10.5)
    assert cf["classification"] == NOT_EXISTS
    for p in (1.5, 3.0):
        def gap(t):
            c = sg_closed_forms(p, (t, 1.0, 1.0))
            return c["lhs"] - c["rhs"]
        t = brentq(gap, 1.0, 50.0, xtol=1e-15, rtol=1e-15)
        assert sg_closed_forms(p, (t, 1.0, 1.0))["classification"] == BOUNDARY
    with pytest.raises(DomainError):
        sg_closed_forms(1.0, (1, 1, 1))


def test_sabot_examples():
    sg = preset("sg")
    rep = sabot_test(sg, 2.0)
    assert rep.verdict == EXISTS and rep.records == ()
    rep = sabot_test(sg.with_r((10.0, 1.0, 1.0)), 2.0)
    assert rep.verdict == NOT_EXISTS
    assert rep.records[0].rho_bar_J == pytest.approx(0.5) and rep.records[0].rho_under_quotient == pytest.approx(1 / 10.5)
    iv = preset("interval", 2.0)
    assert sabot_test(iv, 2.0).verdict == EXISTS
    # On the boundary of the inequality the rates tie.
    edge = sg.with_r((1.5, 1.0, 1.0))
    assert sabot_test(edge, 2.0).verdict == INCONCLUSIVE
    assert sabot_test(edge.with_group(()), 2.0).verdict == INCONCLUSIVE
    no_group = sabot_test(sg.with_group(()), 2.0)
    assert no_group.verdict == EXISTS and len(no_group.records) == 3
    assert set(rep.to_dict()) >= {"verdict", "records"}


def test_sabot_heuristic_path_on_path3():
    p3 = preset("path3", 2.0)
    rep = sabot_test(p3, 2.0)
    assert rep.verdict in (EXISTS, NOT_EXISTS, INCONCLUSIVE)
    assert all(rec.rho_bar_J >= rec.rho_under_J - 1e-12 for rec in rep.records)
