import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from safegame.barrier import hji_residual, lyapunov_decrease_margin
from safegame.errors import ConfigurationError
from safegame.problems import bounded_problem
from safegame.trainer import (AugmentedObjective, CollocationSet, Multipliers, PointTerms,
                              TrainConfig, augmented_loss, constraint, hji_loss, inner_minimize,
                              penalty, sample_collocation, train, update_multipliers)
from safegame.valuenet import FixedValue, MLPConfig, load_checkpoint, make_surrogate

from gradcheck import fd_gradient, rel_err


@pytest.fixture(scope="module")
def small_net():
    return make_surrogate(MLPConfig(2, 1, 4, "tanh", 0), "box", "exp")


def test_collocation_respects_margin_and_seed(problem):
    cs = sample_collocation(problem.game.safe_set, 3000, 0.05, seed=2)
    assert len(cs) == 3000
    assert np.all(problem.game.safe_set.level(cs.points) >= 0.05)
    np.testing.assert_array_equal(cs.points, sample_collocation(problem.game.safe_set, 3000, 0.05, 2).points)
    lo, hi = problem.game.safe_set.box_low, problem.game.safe_set.box_high
    assert np.all(cs.points >= lo) and np.all(cs.points <= hi)


def test_collocation_rejects_bad_margin(bounded):
    with pytest.raises(ConfigurationError):
        sample_collocation(bounded.game.safe_set, 10, 0.0)


def test_hji_loss_zero_for_exact_value(problem):
    cs = sample_collocation(problem.game.safe_set, 2000, 0.01, 0)
    assert hji_loss(FixedValue(problem.exact), problem.game, cs) <= 1e-12


def test_hji_loss_single_point_is_squared_residual(bounded, small_net):
    w = small_net.init_params()
    cs = CollocationSet(np.array([[0.3, -0.6]]), 0.01)
    rho = hji_residual(bounded.game, small_net.bind(w), cs.points)
    np.testing.assert_allclose(hji_loss(small_net, bounded.game, cs, w), rho[0] ** 2, rtol=1e-12)


def test_point_terms_reproduce_residual_and_margin(problem, small_net):
    rng = np.random.default_rng(0)
    w = small_net.init_params() + 0.5 * rng.normal(size=small_net.n_params)
    sur = make_surrogate(MLPConfig(2, 1, 4), problem.barrier.name)
    X = sample_collocation(problem.game.safe_set, 300, 0.01, 1).points
    terms = PointTerms.from_game(problem.game, X)
    bound = sur.bind(w)
    V, G = bound.value_and_gradient(X)
    np.testing.assert_allclose(terms.residual(G)[0], hji_residual(problem.game, bound, X),
                               rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(terms.constraint(V, G, problem.ptp)[0],
                               lyapunov_decrease_margin(problem.game, bound, problem.ptp, X),
                               rtol=1e-9, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_hji_loss_nonnegative(seed):
    p = _BOUNDED
    sur = make_surrogate(MLPConfig(2, 1, 3), "box")
    w = sur.init_params(seed) + np.random.default_rng(seed).normal(size=sur.n_params)
    assert hji_loss(sur, p.game, _SMALL_SET, w) >= 0


def test_constraint_matches_decrease_margin_for_exact(problem):
    fv = FixedValue(problem.exact)
    X = sample_collocation(problem.game.safe_set, 2000, 0.01, 3).points
    l = constraint(fv, problem.game, problem.ptp, X)
    assert np.max(l) <= 0
    np.testing.assert_allclose(l, lyapunov_decrease_margin(problem.game, problem.exact, problem.ptp, X),
                               rtol=1e-9, atol=1e-12)
    assert constraint(fv, problem.game, problem.ptp, [0.0, 0.0]) == 0.0


def test_penalty_arithmetic():
    m = Multipliers(mu=1.0, lam=np.array([0.0]), growth=2.0)
    np.testing.assert_allclose(penalty([0.1], m), 0.01)
    m = Multipliers(mu=1.0, lam=np.array([0.2]), growth=2.0)
    np.testing.assert_allclose(penalty([-0.05], m), 0.0025 - 0.01)
    m = Multipliers(mu=1.0, lam=np.array([0.0]), growth=2.0)
    assert penalty([-0.3], m) == 0.0


def test_augmented_loss_reduces_to_hji_loss(problem):
    cs = sample_collocation(problem.game.safe_set, 500, 0.01, 4)
    fv = FixedValue(problem.exact)
    mult = Multipliers.initial(len(cs), 1e-4, 2.0)
    E = hji_loss(fv, problem.game, cs)
    assert augmented_loss(fv, problem.game, problem.ptp, cs, None, mult) == E
    assert abs(E) <= 1e-12


def test_multiplier_updates():
    m = Multipliers.initial(1, 1e-4, 2.0)
    np.testing.assert_array_equal(m.lam, 0)
    m1 = update_multipliers(m, [-1.0])
    assert m1.lam[0] == 0.0
    for _ in range(2):
        m1 = update_multipliers(m1, [0.0])
    np.testing.assert_allclose(m1.mu, 8e-4)
    m2 = update_multipliers(Multipliers(0.5, np.array([0.1]), 2.0), [0.2])
    np.testing.assert_allclose(m2.lam, [0.3])
    assert m2.mu == 1.0


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.floats(1e-6, 10),
       st.floats(1.01, 10))
def test_multiplier_update_keeps_lambda_nonnegative_and_mu_growing(l, mu, growth):
    m = Multipliers(mu, np.zeros(len(l)), growth)
    for _ in range(3):
        new = update_multipliers(m, l)
        assert np.all(new.lam >= 0)
        assert new.mu > m.mu
        np.testing.assert_allclose(new.mu, growth * m.mu)
        m = new


def test_augmented_objective_gradient_finite_differences(bounded):
    sur = make_surrogate(MLPConfig(2, 2, 3, "tanh"), "box")
    rng = np.random.default_rng(2)
    w = sur.init_params() + 0.3 * rng.normal(size=sur.n_params)
    cs = sample_collocation(bounded.game.safe_set, 8, 0.05, 5)
    mult = Multipliers(mu=0.7, lam=rng.uniform(0, 0.5, 8) * (rng.random(8) < 0.5), growth=2.0)
    obj = AugmentedObjective(sur, bounded.game, bounded.ptp, cs, mult)
    f, g = obj(w)
    np.testing.assert_allclose(f, augmented_loss(sur, bounded.game, bounded.ptp, cs, w, mult), rtol=1e-12)
    fd = fd_gradient(lambda ww: obj(ww)[0], w)
    assert rel_err(g, fd) <= 1e-5


def test_inner_minimize_quadratic_bowl():
    w0 = np.arange(1.0, 9.0)
    res = inner_minimize(lambda w: (np.sum((w - w0) ** 2), 2 * (w - w0)), np.zeros(8))
    np.testing.assert_allclose(res.w, w0, atol=1e-8)
    assert res.iterations <= 8 + 5
    assert res.converged and res.status == "converged"


def test_inner_minimize_rosenbrock():
    from scipy.optimize import rosen, rosen_der

    res = inner_minimize(lambda w: (rosen(w), rosen_der(w)), np.array([-1.2, 1.0]), gtol=1e-10)
    np.testing.assert_allclose(res.w, [1.0, 1.0], atol=1e-6)


def test_inner_minimize_zero_gradient_start():
    calls = []

    def f(w):
        calls.append(1)
        return float(np.sum(w ** 2)), 2 * w

    res = inner_minimize(f, np.zeros(3))
    assert res.iterations == 0 and res.converged
    assert len(calls) <= 3


def test_train_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(indicator="later")
    with pytest.raises(ConfigurationError):
        TrainConfig(growth=1.0)
    with pytest.raises(ConfigurationError):
        TrainConfig(margin=0)


def test_train_zero_outer_iterations(bounded, small_net, tmp_path):
    cfg = TrainConfig(outer_iterations=0, collocation_size=50)
    w0 = small_net.init_params()
    w, report, cs = train(bounded, small_net, cfg, checkpoint_dir=tmp_path)
    np.testing.assert_array_equal(w, w0)
    assert [r["outer_iter"] for r in report.rows] == [0]
    assert sorted(p.name for p in tmp_path.iterdir()) == ["checkpoint_000.txt"]


@pytest.mark.parametrize("indicator", ["current", "previous"])
def test_short_training_is_deterministic_and_improves(bounded, indicator, tmp_path):
    sur = make_surrogate(MLPConfig(2, 1, 6), "box")
    cfg = TrainConfig(outer_iterations=2, collocation_size=100, margin=0.1, max_inner_iters=40,
                      indicator=indicator)
    w1, r1, _ = train(bounded, sur, cfg, checkpoint_dir=tmp_path)
    w2, r2, _ = train(bounded, sur, cfg)
    assert r1.to_csv() == r2.to_csv()
    np.testing.assert_array_equal(w1, w2)
    assert r1.rows[-1]["E"] < r1.rows[0]["E"]
    assert [r["mu"] for r in r1.rows] == [1e-4, 2e-4, 4e-4]
    _, wk, header = load_checkpoint(tmp_path / "checkpoint_002.txt")
    np.testing.assert_array_equal(wk, w1)
    assert header["outer_iter"] == 2
    assert r1.to_csv().splitlines()[0] == "outer_iter,E,max_l,violated_fraction,inner_iters,inner_status,mu"


_BOUNDED = bounded_problem()
_SMALL_SET = sample_collocation(_BOUNDED.game.safe_set, 20, 0.05, 0)
