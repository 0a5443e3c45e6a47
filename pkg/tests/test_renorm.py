import json
import warnings

import numpy as np
import pytest

import oracles
from penergy.errors import DomainError, GuardError
from penergy.forms import StandardForm, probe_set
from penergy.fractal import preset
from penergy.renorm import (
    cell_oscillations,
    eigen_solve,
    fixed_word_weight_check,
    harmonic_on_level,
    iterate,
    kz_average,
    oscillation_decay,
    random_boundary_functions,
    renorm_step,
)
from penergy.criteria import theta
from penergy.solver import evaluate

# Eigenvalue of the gasket renormalization map for p = 3, r = (1, 1, 1),
# recorded from eigen_solve(n_max=7, tol=1e-6) and matched against M_7 / M_6.
SG_P3_LAMBDA = 0.289351734934


def test_interval_is_fixed():
    for p in (1.5, 3.0):
        st = preset("interval", p)
        E0 = st.default_form(p)
        F = probe_set(2, 8)
        assert np.allclose(evaluate(renorm_step(E0, st), F), evaluate(E0, F), rtol=1e-10)


def test_sg_p2_step_is_three_fifths():
    st = preset("sg")
    E0 = st.default_form(2.0)
    F = probe_set(3, 32)
    assert np.allclose(evaluate(renorm_step(E0, st), F), 0.6 * evaluate(E0, F), rtol=1e-12)


def test_steps_compose():
    st = preset("sg", r=(0.7, 1.2, 0.9))
    E = StandardForm.from_pairs(st.boundary, 2.5, [("q1", "q2", 1.0), ("q2", "q3", 0.3), ("q1", "q3", 2.0)])
    F = probe_set(3, 16)
    twice = renorm_step(renorm_step(E, st), st)
    assert np.allclose(evaluate(twice, F), evaluate(renorm_step(E, st, steps=2), F), rtol=1e-10)


def test_rejects_forms_off_v0():
    st = preset("sg")
    with pytest.raises(DomainError):
        renorm_step(StandardForm.complete(["a", "b", "c"], 2.0), st)


def test_iterate_interval():
    st = preset("interval", 2.5)
    for s in iterate(st.default_form(2.5), st, n_max=6):
        assert s.M_n == pytest.approx(1.0) and s.delta == pytest.approx(1.0)
        if s.n:
            assert s.lambda_est == pytest.approx(1.0)


def test_iterate_sg_matches_schur_oracle():
    st = preset("sg")
    states = iterate(st.default_form(2.0), st, n_max=5)
    for s in states:
        size, pairs = oracles.sg_level_pairs(s.n)
        L = oracles.laplacian(size, pairs)
        R = oracles.schur_resistance(oracles.schur_trace(L, [0, 1, 2]), 0, 1)
        assert s.resistance.get("q1", "q2") == pytest.approx(R, rel=1e-10)
        assert s.M_n == pytest.approx(0.6**s.n, rel=1e-10)
    assert states[-1].lambda_est == pytest.approx(0.6, rel=1e-10)
    rescaled = preset("sg", r=(0.6, 0.6, 0.6))
    for s in iterate(rescaled.default_form(2.0), rescaled, n_max=4):
        assert s.delta == pytest.approx(1.0) and s.M_n == pytest.approx(1.0)
    rec = json.loads(json.dumps(states[2].to_record()))
    assert rec["n"] == 2 and len(rec["resistances"]) == 3


def test_iterate_guard():
    st = preset("sg")
    with pytest.raises(GuardError):
        iterate(st.default_form(2.0), st, n_max=30)


def test_kz_average():
    st = preset("sg")
    E0 = StandardForm.from_pairs(st.boundary, 2.0, [("q1", "q2", 1.0), ("q2", "q3", 2.0), ("q1", "q3", 0.5)])
    F = probe_set(3, 32)
    assert np.allclose(evaluate(kz_average(E0, st, 0.6, 0), F), evaluate(E0, F))
    iv = preset("interval", 3.0)
    Ei = iv.default_form(3.0)
    assert np.allclose(evaluate(kz_average(Ei, iv, 1.0, 5), probe_set(2, 8)), evaluate(Ei, probe_set(2, 8)))
    q = evaluate(kz_average(E0, st, 0.6, 4), F) / evaluate(E0, F)
    assert 0.1 < q.min() <= q.max() < 10.0
    with pytest.raises(DomainError):
        kz_average(E0, st, 0.0, 2)


def test_eigen_interval():
    st = preset("interval", 1.7)
    rep = eigen_solve(st.default_form(1.7), st, n_max=5)
    assert rep.lam == pytest.approx(1.0, abs=1e-12)
    assert rep.residual < 1e-10 and rep.converged and rep.condition_A
    F = probe_set(2, 8)
    assert np.allclose(evaluate(rep.eigenform, F), evaluate(st.default_form(1.7), F), rtol=1e-10)
    json.dumps(rep.to_dict())


def test_eigen_sg_p3_regression():
    st = preset("sg")
    E0 = st.default_form(3.0)
    rep = eigen_solve(E0, st, n_max=7, tol=1e-6)
    assert rep.residual < 1e-6 and rep.converged
    assert 0.0 < rep.lam < 1.0
    assert rep.lam == pytest.approx(SG_P3_LAMBDA, abs=1e-9)
    # Independent estimate from the resistance scaling of the plain orbit.
    assert rep.lam == pytest.approx(rep.lambda_history[-1][1], abs=1e-4)
    F = probe_set(3, 64, seed=9)
    ratio = evaluate(renorm_step(rep.eigenform, st), F) / evaluate(rep.eigenform, F)
    assert np.max(np.abs(ratio - rep.lam)) / rep.lam < 1e-5


def test_eigen_reports_unconverged_horizon():
    st = preset("sg")
    rep = eigen_solve(st.default_form(3.0), st, n_max=2, tol=1e-14, fit_evals=0)
    assert not rep.converged and any("horizon" in n for n in rep.notes)


def test_harmonic_indicator_on_gasket():
    st = preset("sg")
    U = harmonic_on_level(st, st.default_form(2.0), 1, [1.0, 0.0, 0.0])[0]
    assert np.allclose(U[3:], [0.4, 0.4, 0.2])
    osc = cell_oscillations(st, U, 1)[0]
    assert np.allclose(sorted(osc), [0.4, 0.4, 0.6])


def test_oscillation_decay_cases():
    st = preset("sg")
    rep = oscillation_decay(st, st.default_form(2.0), 1, np.full((2, 3), 0.3))
    assert rep.eta == 0.0
    rep = oscillation_decay(st, st.default_form(2.0), 2, random_boundary_functions(3, 20, seed=2))
    assert rep.eta <= 0.36 + 1e-9
    p3 = preset("path3", 2.0)
    with pytest.raises(DomainError, match="increase m"):
        oscillation_decay(p3, p3.default_form(2.0), 1, [[0.0, 0.5, 1.0]])
    assert oscillation_decay(p3, p3.default_form(2.0), 2, [[0.0, 0.5, 1.0]]).eta < 1.0


def test_random_boundary_functions():
    F = random_boundary_functions(4, 50, seed=3)
    assert np.allclose(F.max(axis=1) - F.min(axis=1), 1.0) and np.allclose(F.min(axis=1), 0.0)


def test_fixed_word_weights():
    iv = preset("interval", 2.5)
    checks, notes = fixed_word_weight_check(iv)
    assert [c.ok for c in checks] == [True, True] and not notes
    assert checks[0].r_w == pytest.approx(2 ** (1 - 2.5))
    checks, _ = fixed_word_weight_check(preset("sg"), lam=0.6)
    assert all(c.ok and c.r_w == pytest.approx(0.6) for c in checks)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        checks, _ = fixed_word_weight_check(preset("sg", r=(1.2, 1.2, 1.2)))
    assert not any(c.ok for c in checks) and caught


def test_theta():
    st = preset("sg")
    assert theta(st.default_form(2.0), st)[0] == pytest.approx(1.0, abs=1e-9)
    iv = preset("interval", 3.0)
    assert theta(iv.default_form(3.0), iv)[0] == pytest.approx(1.0, abs=1e-9)
    E = StandardForm.from_pairs(st.boundary, 2.0, [("q1", "q2", 1.0), ("q2", "q3", 1.3), ("q1", "q3", 0.8)])
    t0, heuristic = theta(E, st)
    t1, _ = theta(renorm_step(E, st), st)
    assert heuristic and t0 > 1.0
    assert t1 <= t0 + 1e-6
