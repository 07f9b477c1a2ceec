import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from archsearch import numerics as nx
from archsearch.controller import ControllerConfig, ControllerParams, replay_values, sample_architecture
from archsearch.trainers import (
    AdamState, Baseline, PPOMemory, RLConfig, adam_step, advantage, clip_grad_norm, clipped_surrogate,
    clipped_surrogate_var, objective_and_grads, ppo_objective, ppo_update, reinforce_objective, reinforce_update,
)
from conftest import FD_TOL, fd_max_rel_error


def fresh(seed=0, scale=1.0, hidden=20):
    p = ControllerParams.init(ControllerConfig(hidden=hidden), nx.make_rng(seed))
    for arr in p.arrays.values():
        arr *= scale
    return p


def batch(params, n=3, num_layers=4, seed=1):
    rng = nx.make_rng(seed)
    return [sample_architecture(params, num_layers, rng)[1] for _ in range(n)]


# ------------------------------------------------------------------ baseline

def test_advantage_examples():
    assert advantage(0.7, Baseline(5, [0.7, 0.7, 0.7])) == pytest.approx(0.0)
    assert advantage(0.9, Baseline(5, [0.5, 0.7])) == pytest.approx(0.3)
    assert advantage(0.9, Baseline()) == 0.0


def test_baseline_push_evicts_oldest():
    b = Baseline()
    for v in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6):
        b.push(v)
    assert list(b.window) == [0.2, 0.3, 0.4, 0.5, 0.6]
    assert b.value == pytest.approx(0.4)
    assert b.capacity == 5


def test_baseline_single_value():
    assert Baseline().push(0.37).value == 0.37
    assert Baseline().value is None


@settings(max_examples=50)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=12))
def test_baseline_is_mean_of_last_five(values):
    b = Baseline()
    for v in values:
        b.push(v)
    assert b.value == pytest.approx(np.mean(values[-5:]))
    assert b.value == pytest.approx(Baseline(5, reversed(values[-5:])).value)


# ---------------------------------------------------------------------- Adam

def test_adam_zero_gradient_is_noop():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState())
    assert np.array_equal(p["w"], [1.0, -2.0])


def test_adam_scalar_first_step():
    p_up, p_down = {"w": np.zeros(1)}, {"w": np.zeros(1)}
    adam_step(p_up, {"w": np.ones(1)}, AdamState(), maximize=True)
    adam_step(p_down, {"w": np.ones(1)}, AdamState(), maximize=False)
    assert p_up["w"][0] == pytest.approx(0.006 / (1 + 1e-3), rel=1e-12)
    assert p_down["w"][0] == pytest.approx(-0.006 / (1 + 1e-3), rel=1e-12)


def test_adam_beta1_zero_uses_current_gradient():
    state = AdamState()
    p = {"w": np.zeros(2)}
    adam_step(p, {"w": np.array([1.0, 1.0])}, state)
    before = p["w"].copy()
    g = np.array([3.0, -0.5])
    adam_step(p, {"w": g}, state)
    v_hat = (0.999 * 0.001 * 1.0 + 0.001 * g * g) / (1 - 0.999**2)
    assert np.allclose(p["w"] - before, 0.006 * g / (np.sqrt(v_hat) + 1e-3), rtol=1e-12)
    assert np.array_equal(state.m["w"], g)


def test_adam_matches_torch():
    torch = pytest.importorskip("torch")
    r = np.random.default_rng(0)
    w0 = r.normal(size=5)
    grads = [r.normal(size=5) for _ in range(6)]
    ours, state = {"w": w0.copy()}, AdamState()
    tw = torch.tensor(w0.copy(), requires_grad=True)
    opt = torch.optim.Adam([tw], lr=0.006, betas=(0.0, 0.999), eps=1e-3, maximize=True)
    for g in grads:
        adam_step(ours, {"w": g.copy()}, state)
        opt.zero_grad()
        tw.grad = torch.tensor(g)
        opt.step()
    assert np.allclose(ours["w"], tw.detach().numpy(), rtol=1e-10, atol=1e-12)


def test_clip_grad_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_grad_norm(g, 1.0) == pytest.approx(5.0)
    assert math.hypot(g["a"][0], g["b"][0]) == pytest.approx(1.0)
    h = {"a": np.array([0.3])}
    clip_grad_norm(h, 5.0)
    assert h["a"][0] == 0.3


# ----------------------------------------------------------------- REINFORCE

def test_zero_advantage_update_is_entropy_gradient():
    params = fresh()
    trajs = batch(params)
    cfg = RLConfig()
    _, g_full = objective_and_grads(params, lambda pv: reinforce_objective(pv, trajs, [0.0] * 3, cfg, params.cfg))
    ent_only = RLConfig(entropy_weight=1.0)
    _, g_ent = objective_and_grads(params, lambda pv: reinforce_objective(pv, trajs, [0.0] * 3, ent_only, params.cfg))
    for k in g_full:
        assert np.allclose(g_full[k], 0.01 * g_ent[k], rtol=1e-12, atol=1e-18)


def test_reinforce_objective_value():
    params = fresh()
    trajs = batch(params)
    advs = [0.2, -0.1, 0.4]
    with nx.no_grad():
        value = reinforce_objective(params.as_vars(False), trajs, advs, RLConfig(), params.cfg).item()
    expected = sum(a * t.total_logprob() + 0.01 * t.entropies().sum() for a, t in zip(advs, trajs))
    assert value == pytest.approx(expected, rel=1e-12)


def test_reinforce_learns_single_layer_bandit():
    params = fresh(seed=3)
    adam, cfg = AdamState(), RLConfig()
    rng = nx.make_rng(0)
    for _ in range(200):
        samples = [sample_architecture(params, 1, rng) for _ in range(cfg.children_per_epoch)]
        rewards = [1.0 if a.blocks[0] == 0 else 0.0 for a, _ in samples]
        reinforce_update(params, [t for _, t in samples], rewards, Baseline(), cfg, adam, advantages=rewards)
    _, traj = sample_architecture(params, 1, nx.make_rng(1))
    with nx.no_grad():
        from archsearch.controller import _stack_step
        p = params.as_vars(False)
        state = [(nx.Var(np.zeros(20)), nx.Var(np.zeros(20))) for _ in range(2)]
        top, _ = _stack_step(p["embedding"][6], state, p)
        _, _, probs = nx.categorical_stats(p["head.W"] @ top + p["head.b"], 0, 5.0, 2.5)
    assert probs[0] > 0.9


@pytest.mark.parametrize("recompute", [False, True])
def test_reinforce_objective_fd(recompute):
    params = fresh(scale=5.0, hidden=8)
    trajs = batch(params, num_layers=3)
    cfg = RLConfig(recompute_states=recompute)
    arrays = {k: v.copy() for k, v in params.arrays.items()}
    fn = lambda pv: reinforce_objective(pv, trajs, [0.3, -0.2, 0.5], cfg, params.cfg)  # noqa: E731
    assert fd_max_rel_error(fn, arrays, coords=5, seed=3) < FD_TOL


def test_reinforce_rejects_empty():
    with pytest.raises(ValueError):
        reinforce_update(fresh(), [], [], Baseline(), RLConfig(), AdamState())


def test_baseline_shift_leaves_expected_gradient_unchanged():
    """Score-function identity: E[grad log pi] = 0, so a constant baseline shift adds zero mean."""
    params = fresh(seed=2, scale=10.0)
    rng = nx.make_rng(5)
    coords = [("head.b", i) for i in range(6)] + [("embedding", (6, j)) for j in range(4)]
    rows = []
    for _ in range(10_000):
        _, traj = sample_architecture(params, 1, rng)
        _, g = objective_and_grads(params, lambda pv: reinforce_objective(pv, [traj], [1.0], RLConfig(entropy_weight=0.0),
                                                                          params.cfg))
        rows.append([g[k][i] for k, i in coords])
    rows = np.array(rows)  # gradient difference between baselines b and b + 1
    se = rows.std(axis=0, ddof=1) / math.sqrt(len(rows))
    assert np.all(np.abs(rows.mean(axis=0)) < 3 * se)


# ----------------------------------------------------------------------- PPO

def test_clipped_surrogate_forced_cases():
    assert clipped_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert clipped_surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    for adv in (-2.0, 0.0, 0.7):
        assert clipped_surrogate(1.0, adv, 0.2) == adv


@settings(max_examples=200)
@given(st.floats(0.01, 5), st.floats(-3, 3), st.floats(0.01, 0.5))
def test_surrogate_never_exceeds_unclipped(ratio, adv, eps):
    assert clipped_surrogate(ratio, adv, eps) <= ratio * adv + 1e-12
    v = clipped_surrogate_var(nx.Var(np.array(ratio)), adv, eps).item()
    assert v == pytest.approx(clipped_surrogate(ratio, adv, eps), abs=1e-12)


def test_clip_branch_has_zero_gradient():
    lp_old = -1.3
    lp_new = nx.Var(np.array(lp_old + math.log(2)), requires_grad=True)
    adv = 0.8
    out = clipped_surrogate_var(nx.exp(lp_new - lp_old), adv, 0.2)
    nx.backward(out)
    assert out.item() == pytest.approx(1.2 * adv)
    assert lp_new.grad == 0.0


def test_unclipped_branch_gradient():
    lp_new = nx.Var(np.array(0.05), requires_grad=True)
    out = clipped_surrogate_var(nx.exp(lp_new - 0.0), 0.5, 0.2)
    nx.backward(out)
    assert lp_new.grad == pytest.approx(0.5 * math.exp(0.05))


def test_memory_logprobs_read_only():
    params = fresh()
    mem = PPOMemory()
    e = mem.add(batch(params, 1)[0], 0.5, 0.1)
    with pytest.raises(ValueError):
        e.old_logprobs[0] = 0.0
    assert len(mem) == 1
    mem.clear()
    assert len(mem) == 0


def test_memory_replay_reproduces_old_logprobs():
    params = fresh()
    mem = PPOMemory()
    for t in batch(params):
        mem.add(t, 0.5, 0.1)
    for e in mem:
        assert np.max(np.abs(replay_values(params, e.trajectory)[0] - e.old_logprobs)) < 1e-12


@pytest.mark.parametrize("recompute", [False, True])
def test_ppo_gradient_equals_reinforce_at_ratio_one(recompute):
    params = fresh(seed=4)
    old = params.copy()
    trajs = batch(params, seed=7)
    advs = [0.25, -0.4, 0.1]
    cfg = RLConfig(recompute_states=recompute)
    mem = PPOMemory()
    for t, a in zip(trajs, advs):
        mem.add(t, 0.0, a)
    old_lps = [replay_values(old, e.trajectory, recompute)[0] for e in mem]
    _, g_ppo = objective_and_grads(params, lambda pv: ppo_objective(pv, list(mem), old_lps, cfg, params.cfg))
    _, g_rf = objective_and_grads(params, lambda pv: reinforce_objective(pv, trajs, advs, cfg, params.cfg))
    r = np.random.default_rng(0)
    names = list(g_ppo)
    for _ in range(5):
        k = names[r.integers(len(names))]
        i = np.unravel_index(r.integers(g_ppo[k].size), g_ppo[k].shape)
        a, b = g_ppo[k][i], g_rf[k][i]
        assert abs(a - b) <= 1e-6 * max(abs(a), abs(b), 1e-12)
    for k in names:
        assert np.allclose(g_ppo[k], g_rf[k], rtol=1e-9, atol=1e-15)


def test_ppo_update_copies_new_into_old():
    new = fresh(seed=1)
    old = new.copy()
    mem = PPOMemory()
    for t in batch(new):
        mem.add(t, 0.6, 0.2)
    adam = AdamState()
    first = ppo_update(old, new, mem, RLConfig(k_epochs=3), adam)
    assert adam.step == 3
    assert old.checksum() == new.checksum()
    assert math.isfinite(first)


def test_ppo_update_rejects_empty():
    p = fresh()
    with pytest.raises(ValueError):
        ppo_update(p.copy(), p, PPOMemory(), RLConfig(), AdamState())


def test_rl_config_validation():
    with pytest.raises(ValueError):
        RLConfig(eps_clip=0.0)
    with pytest.raises(ValueError):
        RLConfig(k_epochs=0)
    with pytest.raises(ValueError):
        RLConfig(gamma=0.9)
