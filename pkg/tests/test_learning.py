import numpy as np
import pytest

from conftest import closure_units
from dnlrrl.deduction import Deducer, compile_index_plan, initial_store
from dnlrrl.learning import (Adam, SupervisedConfig, SupervisedLoss, TrainingDiverged, expand_literal,
                             lambda_schedule, supervised_loss, train_supervised)
from dnlrrl.program import Atom, parse_program
from dnlrrl.tape import check_gradients


def test_adam_first_step_moves_by_lr_against_gradient_sign():
    opt = Adam(3, lr=0.1)
    out = opt.step(np.zeros(3), np.array([2.0, -0.5, 0.0]))
    np.testing.assert_allclose(out, [-0.1, 0.1, 0.0], atol=1e-6)


def test_adam_matches_reference_recursion():
    rng = np.random.default_rng(0)
    grads = rng.normal(size=(5, 2))
    opt = Adam(2, lr=0.01)
    x = np.zeros(2)
    m = v = np.zeros(2)
    ref = np.zeros(2)
    for t, g in enumerate(grads, 1):
        x = opt.step(x, g)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(x, ref)


def test_lambda_schedule_shape():
    vals = [lambda_schedule(e, 100, 0.2) for e in range(100)]
    assert all(v == 0 for v in vals[:75])
    assert vals[-1] == pytest.approx(0.2)
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_expand_literal_binds_repeated_variables(cnt_program):
    atoms = expand_literal(cnt_program, Atom("edge", ("X", "X")))
    assert [a.args for a in atoms] == [(c, c) for c in "abcd"]
    assert len(expand_literal(cnt_program, Atom("edge", ("a", "Y")))) == 4


def test_crisp_closure_rules_has_near_zero_loss(cnt_program, cnt_plan):
    loss = supervised_loss(initial_store(cnt_plan), cnt_program, closure_units(cnt_plan), 0.0, cnt_plan, 4)
    assert loss <= 1e-5


def test_loss_gradient_matches_finite_differences(cnt_plan):
    lossg = SupervisedLoss(Deducer(cnt_plan, 2))
    g = lossg.engine.graph
    rng = np.random.default_rng(4)
    params = lossg.engine.flatten(lossg.engine.init_units(rng))
    store = initial_store(cnt_plan).values.copy()
    store[:16] = rng.uniform(0.1, 0.9, 16)  # fuzzy edges keep the max over Z away from ties
    rep = check_gradients(g, params, lossg.loss, feeds={lossg.engine.store_in: store, lossg.lam_in: 0.01})
    assert rep.max_rel_error < 1e-4
    assert len(rep.skipped) <= 0.01 * len(rep)


def test_training_reaches_full_accuracy(cnt_program):
    res = train_supervised(cnt_program, SupervisedConfig(epochs=400, seed=0))
    assert res.accuracy == 1.0
    assert res.first_perfect_epoch is not None and res.first_perfect_epoch < 400
    assert res.history[-1]["loss"] < res.history[0]["loss"]


def test_training_is_deterministic(cnt_program):
    a = train_supervised(cnt_program, SupervisedConfig(epochs=30, seed=3))
    b = train_supervised(cnt_program, SupervisedConfig(epochs=30, seed=3))
    assert a.history == b.history
    np.testing.assert_array_equal(a.units["cnt"].conj_w, b.units["cnt"].conj_w)


def test_contradictory_examples_do_not_crash(cnt_program):
    from dataclasses import replace
    p = replace(cnt_program, neg=cnt_program.neg + [cnt_program.pos[0]])
    res = train_supervised(p, SupervisedConfig(epochs=50))
    assert res.accuracy < 1.0


def test_constraint_penalty_is_trained():
    p = parse_program("""
type t { a b }
pred e/1 (t) extensional
fact e(a).
target g(X:t) rules(1)
constraint g(b) = 1.
pos { g(a) }
""")
    res = train_supervised(p, SupervisedConfig(epochs=300, t_max=1))
    plan = compile_index_plan(p)
    eng = Deducer(plan, 1)
    out = eng.result(eng.run(res.units, initial_store(plan)))
    assert out.of("g")[1] > 0.5


def test_config_validation_and_missing_examples(cnt_program):
    with pytest.raises(ValueError):
        SupervisedConfig(lr=0)
    from dataclasses import replace
    with pytest.raises(ValueError):
        train_supervised(replace(cnt_program, pos=[], neg=[]), SupervisedConfig(epochs=1))
    assert issubclass(TrainingDiverged, RuntimeError)
