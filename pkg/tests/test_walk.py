import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dwere import constructions as C
from dwere import env as E
from dwere import walk as W
from dwere._rng import as_seed, trial_seed
from dwere.errors import OutOfWindowError
from dwere.estimate import kernel as K


def state_hash_loop(env, max_steps):
    """Ground truth: first time the full state (position, saturated counts) repeats.

    Returns ``(first, second)`` with equal states at both times, or None.
    """
    M = env.M
    counts = {}
    x = 0
    seen = {}
    for t in range(max_steps + 1):
        key = (x, tuple(sorted((z, min(c, M - 1)) for z, c in counts.items() if min(c, M - 1))))
        if key in seen:
            return seen[key], t
        seen[key] = t
        k = counts.get(x, 0)
        counts[x] = k + 1
        x += env.cookie(k, x)
    return None


def small_env(seed, L=2, M=2, half=60):
    return E.sample_environment(E.uniform(L), M, seed, (-half, half))


def test_example_steps():
    env = C.example_environment()
    s = W.WalkState.initial(env.M)
    s1 = W.step(s, env)
    assert s1.position == -3 and s.position == 0
    out = W.run(env, 10)
    assert tuple(out.trajectory) == C.EXAMPLE_TRAJECTORY
    st_ = W.WalkState.initial(2)
    for _ in range(4):
        st_.advance(env)
    assert st_.position == 0 and st_.count(0) == 2
    assert st_.advance(env).position == 2


def test_example_cookies_are_forced_by_trajectory():
    known = W.infer_cookies(C.EXAMPLE_TRAJECTORY, 2)
    assert known[(0, -3)] == 3
    assert known[(0, 3)] == -3 and known[(1, 3)] == 2
    assert known[(0, 0)] == -3 and known[(1, 0)] == 2
    assert known[(0, 2)] == -2 and known[(1, 2)] == 1
    assert (1, -3) not in known
    for (j, z), v in known.items():
        assert C.EXAMPLE_PATCH.layer(z, j) == v


def test_zero_stack_fixed_point():
    env = E.from_cookies(E.uniform(2), -2, np.zeros((5, 2), dtype=int))
    out = W.run(env, 100)
    assert out.stop_reason == W.LOOPED and out.steps == 2
    assert out.loop.period == 1 and out.loop.cycle == (0,)
    assert out.D0 == math.inf


def test_ping_pong_period_two():
    cookies = np.array([[1], [-1]])
    env = E.from_cookies(E.uniform(1), 0, cookies)
    out = W.run(env, 100)
    assert out.stop_reason == W.LOOPED
    assert out.loop.period == 2 and set(out.loop.cycle) == {0, 1}


def test_trap_config_loops():
    dist = E.uniform(2)
    env = C.build_trap(0, 2).apply(E.sample_environment(dist, 2, 1, (-10, 10)))
    out = W.run(env, 1000)
    assert out.stop_reason == W.LOOPED and out.loop.period >= 2
    assert set(out.trajectory) == {0, 1}


def test_out_of_window_raises_with_time():
    env = E.from_cookies(E.uniform(2), -2, np.full((5, 2), 2))
    with pytest.raises(OutOfWindowError) as exc:
        W.run(env, 10)
    assert exc.value.t == 2


def test_step_bound_and_counts():
    env = small_env(4, M=3)
    out = W.run(env, 500)
    tr = out.trajectory
    assert all(abs(b - a) <= 2 for a, b in zip(tr, tr[1:]))
    st_ = out.final_state
    assert sum(st_.visit_counts.values()) == st_.t
    assert st_.distinct_visited == len(set(tr))


def test_replay_matches_run():
    for seed in range(50):
        env = small_env(seed, M=3)
        out = W.run(env, 300)
        assert out.trajectory == W.replay_positions(env, out.steps)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), M=st.integers(1, 4), L=st.integers(1, 3))
def test_loop_detector_against_state_hashing(seed, M, L):
    env = E.sample_environment(E.uniform(L), M, seed, (-400, 400))
    out = W.run(env, 5000)
    assert out.stop_reason == W.LOOPED
    cert = out.loop
    truth = state_hash_loop(env, out.steps)
    assert truth is not None
    first, second = truth
    assert second - first == cert.period or (second - first) % cert.period == 0
    # the certificate's cycle is periodic in the plain simulation
    tr = W.replay_positions(env, cert.time + 3 * cert.period + 50)
    for t in range(cert.entry_time, len(tr)):
        assert tr[t] == cert.position_at(t)
    # entry time is minimal: one step earlier the walk is off the periodic orbit
    if cert.entry_time > 0:
        t0 = cert.entry_time - 1
        assert tr[t0] != tr[t0 + cert.period] or out.final_state.last_fresh_time >= t0


def test_loop_fires_within_bound():
    for seed in range(200):
        env = small_env(seed, M=2)
        out = W.run(env, 10**5)
        st_ = out.final_state
        assert st_.t - st_.last_fresh_time == st_.distinct_visited + 1


def test_hitting_queries_consistency():
    env = small_env(17, M=3)
    qs = [W.HittingQuery.visit(0, 1), W.HittingQuery.hit_set([0]), W.HittingQuery.visit(0, 2),
          W.HittingQuery.threshold(2), W.HittingQuery.below(0)]
    for seed in range(100):
        env = small_env(seed, M=3)
        out = W.run(env, 10**4, queries=qs)
        v1, t0, v2, thr, neg = (out.hit(q) for q in qs)
        assert v1 == t0 == 0
        assert v2 > v1
        tr = W.replay_positions(env, out.steps + 50)
        if thr != math.inf:
            assert tr[int(thr)] >= 2 and all(x < 2 for x in tr[: int(thr)])
        else:
            assert max(tr) < 2
        if v2 != math.inf:
            assert tr[int(v2)] == 0 and tr[: int(v2)].count(0) == 1
        if neg == math.inf:
            assert min(tr) >= 0


def test_visit_times_resolved_on_cycle():
    cookies = np.array([[1, 1], [-1, -1]])
    env = E.from_cookies(E.uniform(1), 0, cookies)
    q = W.HittingQuery.visit(0, 5)
    out = W.run(env, 100, queries=[q])
    tr = W.replay_positions(env, 20)
    assert out.hit(q) == [t for t, x in enumerate(tr) if x == 0][4]


def test_max_steps_is_indeterminate():
    env = C.build_ballistic(30, 2).apply(small_env(3, M=2, half=100))
    q = W.HittingQuery.threshold(1000)
    out = W.run(env, 10, queries=[q])
    assert out.stop_reason == W.MAX_STEPS and out.hit(q) is None


def test_d0_new_cookie_between_returns():
    for seed in range(100):
        env = small_env(seed, M=2)
        out = W.run(env, 10**5)
        if out.D0 == math.inf:
            continue
        z = out.zero_times
        tr = W.replay_positions(env, out.steps)
        for a, b in zip(z, z[1:]):
            fresh = any(tr[: s].count(tr[s]) < env.M for s in range(a + 1, b + 1))
            assert fresh


def test_outcome_record_and_dump():
    env = C.example_environment()
    q = W.HittingQuery.threshold(5)
    out = W.run(env, 10, queries=[q])
    rec = json.loads(W.outcome_json(out))
    assert set(rec) == {"seed", "stop_reason", "steps", "D0", "min_pos", "max_pos", "hits"}
    assert rec["hits"] == {"T[5,inf)": 10}
    lines = W.dump_trajectory(out).splitlines()
    assert lines[0] == "0 0" and lines[-1] == "10 5"


def test_thinned_trajectory():
    env = small_env(5, M=3)
    full = W.run(env, 200)
    thin = W.run(env, 200, thin=3)
    assert thin.trajectory == full.trajectory[::3][: len(thin.trajectory)]


@pytest.mark.parametrize("M", [1, 2, 3])
def test_kernel_matches_python(M):
    dist = E.uniform(2)
    master = 77
    trials = 200
    horizon = 400
    res = K.simulate_trials(dist, M, master, trials, horizon, threshold=6)
    for i in range(trials):
        seed = trial_seed(master, i)
        env = E.sample_environment(dist, M, seed, (-2 * horizon, 2 * horizon))
        qs = [W.HittingQuery.threshold(6), W.HittingQuery.below(0)]
        out = W.run(env, horizon, queries=qs)
        row = res[i]
        looped = out.stop_reason == W.LOOPED
        assert (row[K.REASON] == K.R_LOOPED) == looped
        assert row[K.STEPS] == out.steps
        assert row[K.MIN_POS] == out.min_position and row[K.MAX_POS] == out.max_position
        if looped:
            assert row[K.PERIOD] == out.loop.period
            assert row[K.ZEROS] == (-1 if out.D0 == math.inf else out.D0)
            assert row[K.X_HORIZON] == out.position_at(horizon)
        else:
            assert row[K.X_HORIZON] == out.final_state.position
        th = out.hit(qs[0])
        assert row[K.T_HIT] == (K.NEVER if th == math.inf else K.UNDECIDED if th is None else th)
        pos = K.plain_positions(as_seed(seed), dist.cdf, 2, M, 0, np.full(0, -1, dtype=np.int64),
                                np.zeros((0, M), dtype=np.int64), 100)
        assert pos.tolist() == W.replay_positions(env, 100)


def test_kernel_patches_match_environment():
    dist = E.uniform(3)
    res = K.simulate_trials(dist, 2, 0, 1, 10, patches=C.EXAMPLE_PATCH.entries)
    env = C.EXAMPLE_PATCH.apply(E.sample_environment(dist, 2, trial_seed(0, 0), (-40, 40)))
    assert W.run(env, 10).trajectory[-1] == res[0, K.X_HORIZON] == 5


def test_kernel_independent_of_workers():
    dist = E.uniform(2)
    a = K.simulate_trials(dist, 3, 5, 10_000, 64, threshold=16)
    b = K.simulate_trials(dist, 3, 5, 10_000, 64, threshold=16, workers=3)
    assert np.array_equal(a, b)
