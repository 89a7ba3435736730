"""Dynamics, cost structure, and factory checks for the three benchmark
systems."""

import numpy as np
import pytest

import ompath.autodiff as ad
from ompath.dynsys import (
    DEFAULT_FEED_LACTOSE,
    LACTOSE_CONSTANTS,
    BlowupError,
    PathRecord,
    make_lactose_operon,
    make_linear_potential,
    make_maier_stein,
    om_action,
    running_cost,
    step,
    step_node,
    terminal_cost,
    terminal_cost_node,
)
from ompath.oracle import analytic_linear_path


def fd_jacobian_trace(spec, x, rel_h=1e-6):
    scale = np.abs(spec.x_start) + np.abs(spec.x_target)
    total = 0.0
    for j in range(spec.state_dim):
        h = rel_h * max(abs(x[j]), scale[j] if scale[j] > 0 else 1.0)
        plus, minus = x.copy(), x.copy()
        plus[j] += h
        minus[j] -= h
        total += (spec.drift(plus)[j] - spec.drift(minus)[j]) / (2.0 * h)
    return total


def in_domain_samples(spec, count, seed):
    """Random points on the segment between the endpoints, jittered."""
    rng = np.random.default_rng(seed)
    mix = rng.uniform(0.0, 1.0, size=(count, 1))
    base = spec.x_start + mix * (spec.x_target - spec.x_start)
    return base * (1.0 + 0.05 * rng.standard_normal(base.shape))


# ---------------------------------------------------------------------------
# step
# ---------------------------------------------------------------------------


def test_step_linear_decay():
    spec = make_linear_potential(0.0, 2.0, 2.0, 20)  # dt = 0.1
    out = step(spec, np.array([1.0]), np.array([0.0]))
    assert np.allclose(out, [0.9])


def test_step_fixed_point_of_discrete_map():
    spec = make_linear_potential(0.0, 2.0, 1.0, 20)
    s = np.array([0.7])
    # b(s) + sigma a = -0.7 + 0.7 = 0
    out = step(spec, s, np.array([0.7]))
    assert np.array_equal(out, s)


def test_step_maier_stein_metastable_points():
    spec = make_maier_stein(1.0, 0.15, 5.0, 50)
    for x in ([1.0, 0.0], [-1.0, 0.0], [0.0, 0.0]):
        out = step(spec, np.array(x), np.zeros(2))
        assert np.array_equal(out, x)


def test_step_applies_noise_intensity():
    spec = make_maier_stein(1.0, 0.15, 5.0, 50)
    out = step(spec, np.zeros(2), np.array([1.0, 0.0]))
    assert np.allclose(out, [0.15 * spec.dt, 0.0])


def test_step_node_matches_step_bitwise():
    specs = [
        make_linear_potential(0.0, 2.0, 1.0, 20),
        make_maier_stein(1.0, 0.15, 5.0, 50),
        make_lactose_operon(0.01, 3.0, 60),
    ]
    for spec in specs:
        rng = np.random.default_rng(4)
        for s in in_domain_samples(spec, 10, 21):
            a = rng.standard_normal(spec.control_dim) * 0.1
            plain = step(spec, s, a)
            t = ad.Tape()
            node = step_node(spec, t.var(s), t.var(a))
            assert np.array_equal(node.value, plain), spec.name


# ---------------------------------------------------------------------------
# costs
# ---------------------------------------------------------------------------


def test_running_cost_divergence_only():
    spec = make_linear_potential(0.0, 2.0, 1.0, 20)
    r = running_cost(spec, np.array([0.3]), np.array([0.0]))
    assert np.isclose(r, -0.5 * spec.dt)


def test_running_cost_zero_at_saddle_with_zero_action():
    spec = make_maier_stein(1.0, 0.15, 5.0, 50)
    assert running_cost(spec, np.zeros(2), np.zeros(2)) == 0.0


def test_running_cost_pure_control():
    spec = make_maier_stein(1.0, 0.15, 1.0, 20)  # dt = 0.05
    r = running_cost(spec, np.zeros(2), np.array([2.0, 0.0]))
    assert np.isclose(r, 0.1)


def test_terminal_cost_examples():
    spec = make_linear_potential(0.0, 6.0, 1.0, 20, lam=1.0)
    assert terminal_cost(spec, np.array([6.0])) == 0.0
    assert terminal_cost(spec, np.array([2.0])) == 4.0

    ms = make_maier_stein(1.0, 0.15, 5.0, 50, lam=10.0)
    assert np.isclose(terminal_cost(ms, np.array([4.0, 4.0])), 50.0)


def test_terminal_cost_node_matches_and_subgradient_at_target():
    spec = make_maier_stein(1.0, 0.15, 5.0, 50)
    t = ad.Tape()
    x = t.var(spec.x_target.copy())
    node = terminal_cost_node(spec, x)
    assert node.value == 0.0
    t.backward(node)
    assert np.array_equal(x.grad, np.zeros(2))

    t2 = ad.Tape()
    y = t2.var(np.array([4.0, 4.0]))
    node2 = terminal_cost_node(spec, y)
    assert float(node2.value) == terminal_cost(spec, np.array([4.0, 4.0]))
    t2.backward(node2)
    assert np.allclose(y.grad, 10.0 * np.array([0.6, 0.8]))


# ---------------------------------------------------------------------------
# om_action
# ---------------------------------------------------------------------------


def test_om_action_constant_integrand():
    spec = make_linear_potential(0.0, 2.0, 3.0, 30)
    states = np.zeros((31, 1))
    actions = np.zeros((30, 1))
    # resting at the origin: integrand is div b / 2 = -1/2 for T = 3
    assert np.isclose(om_action(spec, PathRecord(states, actions)), -1.5)


def _analytic_path_record(x0, x1, horizon, n):
    """Analytic samples with the controls the discrete step relation implies:
    u_k = (x_{k+1} - x_k) / dt - b(x_k),  with b(x) = -x and sigma = 1."""
    ap = analytic_linear_path(x0, x1, horizon)
    times = np.linspace(0.0, horizon, n + 1)
    states = ap.value(times)
    dt = horizon / n
    controls = (np.diff(states) / dt + states[:-1]).reshape(-1, 1)
    return PathRecord(states.reshape(-1, 1), controls)


def test_om_action_of_analytic_path():
    spec = make_linear_potential(0.0, 2.0, 1.0, 1000)
    action = om_action(spec, _analytic_path_record(0.0, 2.0, 1.0, 1000))
    # closed form (e^2 - 1) / sinh(1)^2 - 1/2
    exact = (np.e ** 2 - 1.0) / np.sinh(1.0) ** 2 - 0.5
    assert abs(action - exact) / exact <= 1e-3
    assert np.isclose(exact, 4.126070570998663)


def test_om_action_stable_under_refinement():
    coarse = make_linear_potential(0.0, 2.0, 1.0, 500)
    fine = make_linear_potential(0.0, 2.0, 1.0, 1000)
    a500 = om_action(coarse, _analytic_path_record(0.0, 2.0, 1.0, 500))
    a1000 = om_action(fine, _analytic_path_record(0.0, 2.0, 1.0, 1000))
    assert abs(a500 - a1000) / abs(a1000) <= 1e-3


def test_analytic_path_minimizes_the_action():
    n = 1000
    spec = make_linear_potential(0.0, 2.0, 1.0, n)
    ap = analytic_linear_path(0.0, 2.0, 1.0)
    times = np.linspace(0.0, 1.0, n + 1)
    base_states = ap.value(times)
    base_deriv = ap.derivative(times)
    base_action = om_action(spec, _analytic_path_record(0.0, 2.0, 1.0, n))

    rng = np.random.default_rng(2024)
    modes = np.arange(1, 6)[:, None]
    sines = np.sin(np.pi * modes * times)          # (5, n+1), zero at ends
    cosines = np.pi * modes * np.cos(np.pi * modes * times)
    for _ in range(1000):
        amp = rng.uniform(-0.2, 0.2, size=5)
        states = base_states + amp @ sines
        deriv = base_deriv + amp @ cosines
        controls = (deriv[:-1] + states[:-1]).reshape(-1, 1)
        perturbed = om_action(
            spec, PathRecord(states.reshape(-1, 1), controls))
        assert perturbed >= base_action - 1e-12


# ---------------------------------------------------------------------------
# factories
# ---------------------------------------------------------------------------


def test_linear_factory_fields():
    spec = make_linear_potential(0.0, 6.0, 1.5, 30)
    assert spec.state_dim == spec.control_dim == 1
    assert spec.noise_intensity == 1.0
    assert np.array_equal(spec.x_start, [0.0])
    assert np.array_equal(spec.x_target, [6.0])
    assert spec.dt == 0.05
    for x in (-3.0, 0.0, 1.7):
        assert spec.divergence(np.array([x])) == -1.0


def test_maier_stein_divergence_formula():
    spec = make_maier_stein(1.0, 0.15, 5.0, 50)
    assert spec.divergence(np.array([1.0, 1.0])) == -5.0
    # -4 x^2 - beta y^2 at a couple more points
    spec2 = make_maier_stein(10.0, 0.2, 10.0, 200)
    assert np.isclose(spec2.divergence(np.array([0.5, 2.0])), -1.0 - 40.0)


def test_divergence_consistent_with_jacobian_trace():
    specs = [
        make_linear_potential(0.0, 2.0, 1.0, 20),
        make_maier_stein(1.0, 0.15, 5.0, 50),
        make_lactose_operon(0.01, 3.0, 60),
    ]
    for spec in specs:
        worst = 0.0
        for x in in_domain_samples(spec, 100, seed=13):
            exact = spec.divergence(x)
            approx = fd_jacobian_trace(spec, x)
            worst = max(worst, abs(exact - approx) / max(abs(exact), 1.0))
        assert worst <= 1e-4, f"{spec.name}: rel err {worst:.3g}"


def test_invalid_factory_arguments_name_the_problem():
    with pytest.raises(ValueError, match="horizon"):
        make_linear_potential(0.0, 2.0, -1.0, 20)
    with pytest.raises(ValueError, match="steps"):
        make_maier_stein(1.0, 0.15, 5.0, 0)
    with pytest.raises(ValueError, match="noise"):
        make_lactose_operon(-0.01, 3.0, 60)


def test_lactose_domain_guard():
    spec = make_lactose_operon(0.01, 3.0, 60)
    bad = np.array([1e-5, 1e-5, -LACTOSE_CONSTANTS["k_a"] - 0.1])
    with pytest.raises(BlowupError, match="domain"):
        spec.drift(bad)
    with pytest.raises(BlowupError):
        spec.divergence(bad)
    t = ad.Tape()
    with pytest.raises(BlowupError):
        spec.drift_node(t.var(bad))


def test_lactose_stable_states_have_small_residual():
    spec = make_lactose_operon(0.01, 3.0, 60)
    generic = spec.x_start + 0.25 * (spec.x_target - spec.x_start)
    ref = float(np.linalg.norm(spec.drift(generic)))
    for x, frozen in ((spec.x_start, 1.8e-4), (spec.x_target, 1.4e-4)):
        ratio = float(np.linalg.norm(spec.drift(x))) / ref
        assert ratio <= 1e-2
        assert ratio <= frozen


def test_lactose_constant_overrides():
    spec = make_lactose_operon(0.01, 3.0, 60, alpha_m=500.0)
    assert spec.constants["alpha_m"] == 500.0
    assert spec.constants["feed_lactose"] == DEFAULT_FEED_LACTOSE
    default = make_lactose_operon(0.01, 3.0, 60)
    x = spec.x_start
    assert spec.drift(x)[0] != default.drift(x)[0]
    with pytest.raises(ValueError, match="unknown"):
        make_lactose_operon(0.01, 3.0, 60, not_a_constant=1.0)


def test_path_replay_is_bit_exact():
    spec = make_maier_stein(1.0, 0.15, 5.0, 50)
    rng = np.random.default_rng(3)
    states = np.empty((spec.steps + 1, 2))
    actions = rng.standard_normal((spec.steps, 2)) * 0.5
    states[0] = spec.x_start
    for k in range(spec.steps):
        states[k + 1] = step(spec, states[k], actions[k])
    replay = spec.x_start.copy()
    for k in range(spec.steps):
        replay = step(spec, replay, actions[k])
        assert np.array_equal(replay, states[k + 1])
