"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test records a PASS/FAIL line (shown under "acceptance criteria" in the
terminal summary) before asserting, so a red criterion still reports its numbers.
"""
import math
import statistics
import time

import numpy as np
import pytest
from scipy.stats import chisquare

from archsearch import numerics as nx
from archsearch.controller import (
    ControllerConfig, ControllerParams, lstm_cell_step, replay_values, sample_architecture,
)
from archsearch.evaluators import SharedParamStore, cosine_lr, sgd_momentum_step
from archsearch.evaluators.shared import child_forward, used_keys
from archsearch.harness import RunConfig, load_checkpoint, run_search
from archsearch.harness.report import median_epochs
from archsearch.harness.search import SearchState
from archsearch.evaluators.data import make_toy_dataset
from archsearch.search_space import build_child_graph, parse, search_space_size
from archsearch.trainers import (
    PPOMemory, RLConfig, clipped_surrogate, clipped_surrogate_var, objective_and_grads, ppo_objective,
    reinforce_objective,
)
from conftest import FD_TOL, fd_max_rel_error
from test_numerics import ELEMENTWISE

# Smallest stem width that keeps the 15-run shared probe inside its time budget.
PROBE_FILTERS = 4


# ------------------------------------------------------------------ 1

def _gradient_checks(rng):
    """(label, max relative error) for every differentiable op, an LSTM step and a whole L=3 child."""
    results = []
    for name, fn in sorted(ELEMENTWISE.items()):
        arrays = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(3, 4))}
        if name == "clip":
            arrays["a"] = np.where(np.abs(np.abs(arrays["a"]) - 0.5) < 1e-3, 0.0, arrays["a"])
        results.append((name, fd_max_rel_error(fn, arrays, coords=10)))

    def weighted(op, out_shape):
        w = rng.normal(size=out_shape)
        return lambda v: nx.vsum(op(v) * w)

    for stride, pad, k in [(1, 1, 3), (2, 1, 3), (1, 2, 5), (1, 0, 1)]:
        o = nx.out_size(6, k, stride, pad)
        arrays = {"x": rng.normal(size=(2, 3, 6, 6)), "k": rng.normal(size=(4, 3, k, k))}
        fn = weighted(lambda v, s=stride, p=pad: nx.conv2d(v["x"], v["k"], s, p), (2, 4, o, o))
        results.append((f"conv2d k{k} s{stride}", fd_max_rel_error(fn, arrays, coords=10)))
    arrays = {"x": rng.normal(size=(2, 3, 6, 6)), "d": rng.normal(size=(3, 3, 3))}
    fn = weighted(lambda v: nx.depthwise_conv2d(v["x"], v["d"], 1, 1), (2, 3, 6, 6))
    results.append(("depthwise_conv2d", fd_max_rel_error(fn, arrays, coords=10)))
    arrays = {"x": rng.normal(size=(2, 3, 6, 6)), "d": rng.normal(size=(3, 5, 5)), "p": rng.normal(size=(4, 3, 1, 1))}
    fn = weighted(lambda v: nx.depthwise_separable_conv(v["x"], v["d"], v["p"], 1, 2), (2, 4, 6, 6))
    results.append(("separable_conv", fd_max_rel_error(fn, arrays, coords=10)))
    for kind in ("max", "avg"):
        for stride in (1, 2):
            o = nx.out_size(6, 3, stride, 1)
            fn = weighted(lambda v, kd=kind, s=stride: nx.pool(v["x"], kd, 3, s, 1), (2, 2, o, o))
            results.append((f"{kind}pool s{stride}", fd_max_rel_error(fn, {"x": rng.normal(size=(2, 2, 6, 6))})))
    bn_arrays = {"x": rng.normal(size=(4, 3, 3, 3)), "g": rng.normal(size=3), "b": rng.normal(size=3)}
    fn = weighted(lambda v: nx.batchnorm(v["x"], v["g"], v["b"]), (4, 3, 3, 3))
    results.append(("batchnorm", fd_max_rel_error(fn, bn_arrays, coords=10)))
    labels = np.array([0, 2, 1, 2])
    arrays = {"x": rng.normal(size=(4, 3, 3, 3)), "W": rng.normal(size=(3, 3)), "b": rng.normal(size=3)}
    results.append(("gap+dense+cross_entropy", fd_max_rel_error(
        lambda v: nx.cross_entropy(nx.dense(nx.global_avg_pool(v["x"]), v["W"], v["b"]), labels), arrays)))

    def sampling(v):
        lp, ent, _ = nx.categorical_stats(v["l"], 2, 5.0, 2.5)
        blp, bent, _ = nx.bernoulli_stats(v["s"][0], 1)
        return lp + ent * 0.3 + blp + bent
    results.append(("categorical+bernoulli", fd_max_rel_error(sampling, {"l": rng.normal(size=6) * 3,
                                                                            "s": rng.normal(size=1)})))

    lstm = {}
    for gate in ("forget", "input", "output", "cell"):
        lstm[f"lstm0.U_{gate}"] = rng.normal(size=(4, 3)) * 0.5
        lstm[f"lstm0.W_{gate}"] = rng.normal(size=(4, 4)) * 0.5
        lstm[f"lstm0.b_{gate}"] = rng.normal(size=4) * 0.5
    lstm.update(x=rng.normal(size=3), h=rng.normal(size=4), c=rng.normal(size=4))

    def lstm_fn(v):
        h, c = lstm_cell_step(v["x"], v["h"], v["c"], v)
        return nx.vsum(h) + nx.vsum(c) * 0.5
    results.append(("lstm_cell_step", fd_max_rel_error(lstm_fn, lstm)))

    data = make_toy_dataset(seed=0, train_size=10, valid_size=10, test_size=10, size=8)
    for text in ("b0;b2<0;b4<0", "b1;b3;b5<0,1"):
        store = SharedParamStore(3, 3).init(nx.make_rng(2))
        spec = build_child_graph(parse(text), 3)
        keys = used_keys(store, spec)
        for k in keys:
            store.params[k] += 0.1 * rng.normal(size=store.params[k].shape)
        arrays = {k: store.params[k].copy() for k in keys}
        x, y = data.train.images[:6], data.train.labels[:6]

        def child_loss(pv, store=store, spec=spec):
            return nx.cross_entropy(child_forward(store, spec, x, pv, train=True, update_stats=False), y)
        results.append((f"child {text}", fd_max_rel_error(child_loss, arrays, coords=5)))
    return results


def test_criterion_1_gradient_integrity(verdict):
    start = time.perf_counter()
    results = _gradient_checks(np.random.default_rng(2024))
    elapsed = time.perf_counter() - start
    worst_name, worst = max(results, key=lambda r: r[1])
    ok = worst < FD_TOL and elapsed < 60
    verdict(1, "gradient integrity", ok,
            f"{len(results)} checks, worst rel err {worst:.2e} ({worst_name}) < 1e-4, {elapsed:.1f}s < 60s")
    assert ok


# ------------------------------------------------------------------ 2

def test_criterion_2_policy_gradient_consistency(verdict):
    params = ControllerParams.init(ControllerConfig(), nx.make_rng(11))
    old = params.copy()  # the old <- new copy
    rng = nx.make_rng(12)
    trajs = [sample_architecture(old, 5, rng)[1] for _ in range(3)]
    advs = [0.31, -0.12, 0.07]
    cfg = RLConfig()
    memory = PPOMemory()
    for t, a in zip(trajs, advs):
        memory.add(t, 0.0, a)
    old_lps = [replay_values(old, e.trajectory)[0] for e in memory]
    _, g_ppo = objective_and_grads(params, lambda pv: ppo_objective(pv, list(memory), old_lps, cfg, params.cfg))
    _, g_rf = objective_and_grads(params, lambda pv: reinforce_objective(pv, trajs, advs, cfg, params.cfg))
    pick = np.random.default_rng(3)
    names = sorted(g_ppo)
    errors = []
    while len(errors) < 5:
        k = names[pick.integers(len(names))]
        i = np.unravel_index(pick.integers(g_ppo[k].size), g_ppo[k].shape)
        a, b = g_ppo[k][i], g_rf[k][i]
        if max(abs(a), abs(b)) == 0.0:
            continue  # an unused coordinate says nothing about the identity
        errors.append(abs(a - b) / max(abs(a), abs(b)))
    ok = max(errors) < 1e-6
    verdict(2, "policy-gradient consistency", ok, f"max rel err {max(errors):.1e} over 5 coordinates < 1e-6")
    assert ok


# ------------------------------------------------------------------ 3

def test_criterion_3_clip_semantics(verdict):
    forced = [clipped_surrogate(1.5, 1.0, 0.2), clipped_surrogate(0.5, -1.0, 0.2), clipped_surrogate(1.0, 0.37, 0.2)]
    values_ok = forced[0] == pytest.approx(1.2, abs=1e-15) and forced[1] == pytest.approx(-0.8, abs=1e-15) \
        and forced[2] == 0.37
    grads = []
    for delta, adv in ((math.log(2), 0.8), (math.log(0.5), -0.8), (0.3, 1.0), (-0.4, -2.0)):
        lp_new = nx.Var(np.array(-1.0 + delta), requires_grad=True)
        nx.backward(clipped_surrogate_var(nx.exp(lp_new - (-1.0)), adv, 0.2))
        grads.append(float(lp_new.grad))
    ok = values_ok and all(g == 0.0 for g in grads)
    verdict(3, "clip semantics", ok, f"forced cases {forced}, {len(grads)} clip-branch gradients all zero: "
                                      f"{all(g == 0.0 for g in grads)}")
    assert ok


# ------------------------------------------------------------------ 4

def test_criterion_4_search_space_accounting(verdict):
    n = search_space_size(10)
    ok = n == 6**10 * 2**45 and f"{n:.1e}" == "2.1e+21"
    verdict(4, "search-space accounting", ok, f"{n} = 6^10 * 2^45, rounds to {n:.1e}")
    assert ok


# ------------------------------------------------------------------ 5

def test_criterion_5_untrained_uniformity(verdict):
    params = ControllerParams.init(ControllerConfig(), nx.make_rng(0))
    params.zero_heads()
    rng = nx.make_rng(5)
    n = 60_000
    blocks = np.array([sample_architecture(params, 1, rng)[0].blocks[0] for _ in range(n)])
    counts = np.bincount(blocks, minlength=6)
    sigma = math.sqrt(n * (1 / 6) * (5 / 6))
    worst_z = float(np.max(np.abs(counts - n / 6)) / sigma)
    p = float(chisquare(counts).pvalue)
    ok = worst_z < 3 and p > 0.01
    verdict(5, "untrained-controller uniformity", ok, f"counts {counts.tolist()}, max |z| {worst_z:.2f} < 3, "
                                                      f"chi-square p {p:.3f} > 0.01")
    assert ok


# ------------------------------------------------------------------ 6

def _epochs_to(mode, seed, tau=0.9):
    state = SearchState(RunConfig(mode=mode, num_layers=4, controller_epochs=150, seed=seed, record_wallclock=False))
    reached, means = None, []
    for _ in range(150):
        rec = state.run_epoch()
        means.append(rec.mean_reward)
        if reached is None and rec.mean_reward >= tau:
            reached = rec.epoch
    return reached, means[-1]


@pytest.mark.slow
def test_criterion_6_sample_efficiency_ordering(verdict):
    start = time.perf_counter()
    runs = {m: [_epochs_to(m, s) for s in range(10)] for m in ("random", "reinforce", "ppo")}
    elapsed = time.perf_counter() - start
    med = {m: median_epochs([r[0] for r in runs[m]]) for m in ("reinforce", "ppo")}
    random_final = statistics.median(r[1] for r in runs["random"])
    reached = {m: sum(r[0] is not None for r in runs[m]) for m in ("reinforce", "ppo")}
    both = med["reinforce"] is not None and med["ppo"] is not None
    ok = both and med["ppo"] < med["reinforce"] and random_final < 0.75 and elapsed < 600
    fmt = {m: "not reached" if v is None else f"{v:g}" for m, v in med.items()}
    verdict(6, "sample-efficiency ordering", ok,
            f"median epochs to 0.9: ppo {fmt['ppo']} ({reached['ppo']}/10 reached), reinforce {fmt['reinforce']} "
            f"({reached['reinforce']}/10 reached); random median final mean {random_final:.3f} < 0.75; "
            f"{elapsed:.0f}s < 600s")
    assert ok


# ------------------------------------------------------------------ 7

@pytest.mark.slow
def test_criterion_7_shared_parameter_probe(verdict, tmp_path):
    start = time.perf_counter()
    best = {}
    for mode in ("random", "reinforce", "ppo"):
        best[mode] = []
        for seed in range(5):
            cfg = RunConfig(mode=mode, evaluator="shared", num_layers=6, controller_epochs=40, seed=seed,
                            stem_filters=PROBE_FILTERS, record_wallclock=False)
            best[mode].append(run_search(cfg, out_dir=tmp_path / f"{mode}{seed}").state.best_reward)
    elapsed = time.perf_counter() - start
    med = {m: statistics.median(v) for m, v in best.items()}
    margins = {m: med[m] - med["random"] for m in ("reinforce", "ppo")}
    ok = min(margins.values()) >= 0.02 and elapsed < 1800
    verdict(7, "shared-parameter probe", ok,
            f"median best valid acc random {med['random']:.4f}, reinforce {med['reinforce']:.4f} "
            f"(+{margins['reinforce']:.4f}), ppo {med['ppo']:.4f} (+{margins['ppo']:.4f}), margin >= 0.02; "
            f"{elapsed:.0f}s < 1800s")
    assert ok


# ------------------------------------------------------------------ 8

def test_criterion_8_determinism_and_resume(verdict, tmp_path):
    ok_bytes, ok_resume = True, True
    for mode in ("random", "reinforce", "ppo"):
        cfg = RunConfig(mode=mode, num_layers=4, controller_epochs=20, record_wallclock=False)
        a = run_search(cfg, out_dir=tmp_path / f"{mode}a")
        b = run_search(cfg, out_dir=tmp_path / f"{mode}b")
        ok_bytes &= a.log_path.read_bytes() == b.log_path.read_bytes()
        split = tmp_path / f"{mode}split"
        run_search(cfg, out_dir=split, stop_after=10)
        rest = run_search(None, resume=split / "checkpoint.ckpt", out_dir=split)
        ok_resume &= (split / "search_log.jsonl").read_bytes() == a.log_path.read_bytes()
        ok_resume &= load_checkpoint(rest.checkpoint_path) == load_checkpoint(a.checkpoint_path)
    ok = ok_bytes and ok_resume
    verdict(8, "determinism and persistence", ok,
            f"byte-identical logs {ok_bytes}, 20-epoch resume split at 10 identical {ok_resume} (all three modes)")
    assert ok


# ------------------------------------------------------------------ 9

def test_criterion_9_schedule_and_optimizer(verdict):
    lrs = (cosine_lr(0), cosine_lr(5), cosine_lr(10))
    p, vel = {"w": np.array([1.0])}, {}
    for _ in range(2):
        sgd_momentum_step(p, {"w": np.array([1.0])}, vel, lr=0.1, momentum=0.5, weight_decay=0.0)
    theta = float(p["w"][0])
    ok = (lrs[0] == 0.05 and abs(lrs[1] - 0.0255) < 1e-15 and lrs[2] == 0.05 and abs(theta - 0.75) < 1e-15)
    verdict(9, "schedule and optimizer oracles", ok,
            f"cosine_lr t=0 {lrs[0]}, midpoint {lrs[1]:.4f}, restart t=10 {lrs[2]}; two momentum steps -> {theta}")
    assert ok
