"""End-to-end acceptance gate.

One test per shipping criterion; each prints a single PASS/FAIL line
(visible under -rA) before asserting, so a full run reads as a checklist.
The two long trainings are marked slow.
"""

import importlib.resources

import numpy as np
import pytest

import ompath.autodiff as ad
from ompath.dynsys import (
    LACTOSE_HIGH_STATE,
    LACTOSE_LOW_STATE,
    make_lactose_operon,
    make_linear_potential,
    make_maier_stein,
    step,
    terminal_cost,
)
from ompath.expcli import load_config, terminal_loss_sweep
from ompath.nn import TapeActor, TapeCritic, init_actor, init_critic
from ompath.oracle import (
    action_of_analytic,
    analytic_linear_path,
    el_residual,
    fixed_point_residual,
)
from ompath.tpddpg import Hyperparams, terminal_predict, train


def preset(name):
    root = importlib.resources.files("ompath") / "presets"
    return load_config(str(root / name))


def report(num, ok, detail):
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'} ({detail})")
    return ok


@pytest.fixture(scope="module")
def linear_run():
    cfg = preset("linear_0to2.ini")
    spec = cfg.build_system()
    result = train(spec, cfg.hyper, avg_window=cfg.window)
    return cfg, spec, result


def test_criterion_1_linear_path_recovery(linear_run):
    cfg, spec, result = linear_run
    analytic = analytic_linear_path(0.0, 2.0, 1.0)
    reference = analytic.value(result.mean_path.times)
    deviation = float(np.max(np.abs(result.mean_path.states[:, 0] - reference)))
    ok = deviation <= 0.15
    assert report(1, ok, f"max path deviation {deviation:.4f} <= 0.15")


def test_criterion_2_running_cost_convergence(linear_run):
    cfg, spec, result = linear_run
    lo, hi = cfg.window
    window = [lg.running_cost_sum for lg in result.episodes[lo:hi + 1]
              if not lg.diverged]
    mean_cost = float(np.mean(window))
    oracle = action_of_analytic(0.0, 2.0, 1.0)
    rel = abs(mean_cost - oracle) / oracle
    ok = rel <= 0.15

    sums = np.array([lg.running_cost_sum for lg in result.episodes])
    ma_last = float(np.mean(sums[281:301]))
    ma_prev = float(np.mean(sums[261:281]))
    drift = abs(ma_last - ma_prev) / abs(ma_prev)
    ok = ok and drift <= 0.05
    assert report(
        2, ok,
        f"window cost {mean_cost:.4f} vs oracle {oracle:.4f} "
        f"(rel {rel:.3f} <= 0.15), moving-average drift {drift:.4f} <= 0.05")


def test_criterion_3_terminal_reachability(linear_run):
    cfg, spec, result = linear_run
    threshold = 0.05 * spec.lam * abs(2.0 - 0.0)

    def reaches(res):
        early = [lg.terminal_loss for lg in res.episodes[:50]
                 if not np.isnan(lg.terminal_loss)]
        return early and min(early) < threshold, min(early) if early else None

    ok, best = reaches(result)
    seed_used = cfg.seed
    for extra in (1, 2):
        if ok:
            break
        alt = cfg.replace(seed=cfg.seed + extra, episodes=60,
                          window_lo=30, window_hi=59)
        res = train(alt.build_system(), alt.hyper, avg_window=alt.window)
        ok, best = reaches(res)
        seed_used = alt.seed
    assert report(3, ok,
                  f"best early terminal loss {best:.4f} < {threshold} "
                  f"(seed {seed_used})")


def test_criterion_4_maier_stein_geometry():
    cfg = preset("maier_stein_b1.ini")
    ok = False
    detail = ""
    for extra in (0, 1, 2):
        run_cfg = cfg.replace(seed=cfg.seed + extra)
        spec = run_cfg.build_system()
        result = train(spec, run_cfg.hyper, avg_window=run_cfg.window)
        path = result.mean_path.states
        start_miss = float(np.linalg.norm(path[0] - np.array([-1.0, 0.0])))
        end_miss = float(np.linalg.norm(path[-1] - np.array([1.0, 0.0])))
        y_excursion = float(np.max(np.abs(path[:, 1])))
        ok = start_miss <= 0.05 and end_miss <= 0.05 and y_excursion <= 0.1
        detail = (f"seed {run_cfg.seed}: start {start_miss:.3f}, "
                  f"end {end_miss:.3f}, max |y| {y_excursion:.3f}")
        if ok:
            break
    assert report(4, ok, detail + " (bounds 0.05/0.05/0.1)")


@pytest.mark.slow
def test_criterion_5_step_count_trend():
    cfg = preset("maier_stein_sweep.ini")
    rows = terminal_loss_sweep(cfg, (20, 40, 80, 160), workers=4)
    means = [row["mean"] for row in rows]
    inversions = sum(means[i + 1] < means[i] for i in range(len(means) - 1))
    healthy = all(row["diverged_episodes"] * 2 <= cfg.hyper.episodes
                  for row in rows)
    ok = inversions <= 1 and healthy
    assert report(
        5, ok,
        "means " + ", ".join(f"{m:.4g}" for m in means)
        + f"; {inversions} adjacent inversion(s) <= 1")


def test_criterion_6_gradient_properties():
    def rel_err(a, b):
        denom = max(np.max(np.abs(a)), np.max(np.abs(b)), 1.0)
        return np.max(np.abs(a - b)) / denom

    def fd(build_loss, arrays, h=1e-6):
        grads = []
        for arr in arrays:
            g = np.zeros(arr.size)
            flat = arr.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = build_loss()
                flat[i] = orig - h
                fm = build_loss()
                flat[i] = orig
                g[i] = (fp - fm) / (2.0 * h)
            grads.append(g.reshape(arr.shape))
        return grads

    spec50 = make_linear_potential(0.0, 2.0, horizon=1.0, steps=50)
    worst_short, worst_long = 0.0, 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        critic = init_critic(2, 1, 5, seed)
        actor = init_actor(1, 1, 4, 5.0, seed)
        s2 = rng.standard_normal(2)
        a1 = rng.standard_normal(1)
        s1 = rng.standard_normal(1)

        # critic gradient w.r.t. parameters and the action input
        tape = ad.Tape()
        cv = TapeCritic(tape, critic)
        a_node = tape.var(a1.copy())
        q = cv.forward(tape.const(s2), a_node)
        tape.backward(q)
        got = cv.gradients() + [a_node.grad.copy()]
        want = fd(lambda: critic.forward(s2, a1), critic.parameters() + [a1])
        worst_short = max(worst_short,
                          max(rel_err(g, w) for g, w in zip(got, want)))

        # actor gradient w.r.t. parameters through a weighted output
        weights = rng.standard_normal(1)
        tape = ad.Tape()
        av = TapeActor(tape, actor)
        out = av.forward(tape.var(s1.copy()))
        tape.backward(ad.dot(out, tape.const(weights)))
        got = av.gradients()
        want = fd(lambda: float(np.dot(actor.forward(s1), weights)),
                  actor.parameters())
        worst_short = max(worst_short,
                          max(rel_err(g, w) for g, w in zip(got, want)))

        # terminal-prediction gradient through the 50-step rollout
        tape = ad.Tape()
        av = TapeActor(tape, actor)
        pred = terminal_predict(spec50, actor, s1, 0, tape, av)
        tape.backward(pred.loss_node)
        got = av.gradients()
        want = fd(lambda: terminal_predict(spec50, actor, s1, 0).loss,
                  actor.parameters(), h=1e-5)
        worst_long = max(worst_long,
                         max(rel_err(g, w) for g, w in zip(got, want)))

    ok = worst_short <= 1e-5 and worst_long <= 1e-4
    assert report(6, ok,
                  f"worst single-step rel err {worst_short:.2e} <= 1e-5, "
                  f"worst 50-step rel err {worst_long:.2e} <= 1e-4")


def test_criterion_7_oracle_equivalences():
    failures = []

    # noise-free rollouts agree with the environment bit for bit
    for spec in (make_linear_potential(0.0, 2.0, horizon=1.0, steps=20),
                 make_maier_stein(beta=1.0, noise=0.15, horizon=5.0,
                                  steps=25)):
        actor = init_actor(spec.state_dim, spec.control_dim, 15, 5.0, 3)
        rng = np.random.default_rng(1)
        for k in range(spec.steps + 1):
            s0 = spec.x_start + 0.2 * rng.standard_normal(spec.state_dim)
            pred = terminal_predict(spec, actor, s0, k)
            x = s0.copy()
            for _ in range(k, spec.steps):
                x = step(spec, x, actor.forward(x))
            if not (np.array_equal(pred.terminal_state, x)
                    and pred.loss == terminal_cost(spec, x)):
                failures.append(f"rollout mismatch {spec.name} k={k}")

    # per-episode cost decomposition holds exactly in a live run
    spec = make_linear_potential(0.0, 2.0, horizon=1.0, steps=10)
    hyper = Hyperparams(episodes=5, batch_size=8, warmup_trajectories=1,
                        exploration_std=0.3, hidden_width=8, seed=2)
    result = train(spec, hyper, avg_window=(2, 4))
    for lg in result.episodes:
        if lg.diverged:
            continue
        realized = terminal_cost(spec, lg.path.states[spec.steps])
        if lg.total_cost != lg.running_cost_sum + realized:
            failures.append(f"cost identity broke in episode {lg.episode}")

    # divergence terms match the finite-difference Jacobian trace
    systems = (make_linear_potential(0.0, 2.0, horizon=1.0, steps=10),
               make_maier_stein(beta=1.0, noise=0.15, horizon=5.0, steps=10),
               make_lactose_operon(noise=0.01, horizon=3.0, steps=10))
    for spec in systems:
        rng = np.random.default_rng(5)
        scale = np.abs(spec.x_start) + np.abs(spec.x_target)
        for _ in range(50):
            frac = rng.uniform(0.05, 0.95)
            x = spec.x_start + frac * (spec.x_target - spec.x_start)
            x = x * (1.0 + 0.05 * rng.standard_normal(spec.state_dim))
            trace = 0.0
            for j in range(spec.state_dim):
                h = 1e-6 * max(scale[j], 1e-3)
                e = np.zeros(spec.state_dim)
                e[j] = h
                trace += (spec.drift(x + e)[j] - spec.drift(x - e)[j]) / (2 * h)
            dv = spec.divergence(x)
            if abs(dv - trace) / max(1.0, abs(trace)) > 1e-4:
                failures.append(f"divergence mismatch {spec.name}")
                break

    # the closed-form benchmark path is stationary and minimal
    path = analytic_linear_path(0.0, 2.0, 1.0)
    resid = el_residual(path)
    if resid > 1e-6:
        failures.append(f"EL residual {resid:.2e}")
    base_action = action_of_analytic(0.0, 2.0, 1.0)
    times = np.linspace(0.0, 1.0, 1001)
    rng = np.random.default_rng(11)
    for _ in range(1000):
        amp = rng.uniform(-0.2, 0.2)
        mode = rng.integers(1, 6)
        bump = np.sin(np.pi * mode * times)
        dbump = np.pi * mode * np.cos(np.pi * mode * times)
        xs = path.value(times) + amp * bump
        us = path.derivative(times) + amp * dbump + xs
        perturbed = float(np.trapezoid(0.5 * (us * us - 1.0), times))
        if perturbed < base_action - 1e-12:
            failures.append(f"non-minimal against amp {amp:.3f} mode {mode}")
            break

    ok = not failures
    assert report(7, ok, "; ".join(failures) if failures else
                  "rollout equivalence, cost identity, divergence, "
                  "stationarity and minimality all hold")


@pytest.mark.slow
def test_criterion_8_lactose_reachability():
    cfg = preset("lactose_operon.ini")
    spec = cfg.build_system()
    threshold = 0.1 * spec.lam * float(
        np.linalg.norm(spec.x_target - spec.x_start))
    result = train(spec, cfg.hyper, avg_window=cfg.window)
    lo, hi = cfg.window
    window = [lg.terminal_loss for lg in result.episodes[lo:hi + 1]
              if not lg.diverged and not np.isnan(lg.terminal_loss)]
    mean_loss = float(np.mean(window))

    low_ratio = fixed_point_residual(spec, LACTOSE_LOW_STATE)
    high_ratio = fixed_point_residual(spec, LACTOSE_HIGH_STATE)
    reference = fixed_point_residual(
        spec, spec.x_start + 0.25 * (spec.x_target - spec.x_start))
    low_rel = low_ratio / reference
    high_rel = high_ratio / reference

    ok = (mean_loss < threshold and low_rel <= 1e-2 and high_rel <= 1e-2
          and not result.failed)
    assert report(
        8, ok,
        f"window terminal loss {mean_loss:.3f} < {threshold:.3f}, "
        f"fixed-point ratios {low_rel:.2e}/{high_rel:.2e} <= 1e-2, "
        f"{result.diverged_episodes}/{len(result.episodes)} diverged")
