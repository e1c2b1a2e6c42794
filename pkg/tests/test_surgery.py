import json
import math
import random

import numpy as np
import pytest

from dwere import constructions as C
from dwere import env as E
from dwere import surgery as S
from dwere import walk as W
from dwere.errors import NotInDomainError, PreconditionError


def test_restrict_sequence():
    assert S.restrict_sequence((0, -3, 0, 2, 0, 2, 3), S.Interval(0)) == [0, 0, 2, 0, 2, 3]
    assert S.restrict_sequence((0, 1, 2), {7, 8}) == []
    assert S.restrict_sequence(C.EXAMPLE_TRAJECTORY, S.Interval(2, 5)) == [2, 2, 3, 2, 3, 5]
    assert S.restrict_sequence((1, -1, 2), lambda x: x > 0) == [1, 2]


def test_subenv_params():
    S.SubenvParams(10, 0)
    with pytest.raises(PreconditionError):
        S.SubenvParams(5, 5)
    with pytest.raises(PreconditionError):
        S.SubenvParams(5, -1)


def shallow_backtrack_env(L=2, M=3, n=20):
    d = E.uniform(L)
    base = E.sample_environment(d, M, 1, (-2 * n, 2 * n + 4))
    patches = {0: (1, 1, 1), 1: (-2, 2, 2), -1: (2, 2, 2)}
    for z in range(3, 2 * n + 1, 2):
        patches[z] = (2, 2, 2)
    return base.with_patches(patches)


def test_subenvironment_reflexive_and_violation():
    w = shallow_backtrack_env()
    p = S.SubenvParams(20, 4)
    assert S.is_subenvironment(w, w, p)
    w2 = w.with_patches({7: (1, 2, 2)})
    assert not S.subenvironment_conditions(w2, w, p)["cookies_right_of_m"]
    assert not S.is_subenvironment(w2, w, p)


def test_subenvironment_needs_domain():
    d = E.uniform(2)
    env = C.build_blocker(0).apply(E.sample_environment(d, 2, 0, (-10, 10)))
    with pytest.raises(NotInDomainError):
        S.is_subenvironment(env, env, S.SubenvParams(5, 1))


def test_raise_stack_example_condition_b():
    env = C.example_environment()
    with pytest.raises(PreconditionError):
        S.raise_stack(env, 0, 2, 2, 4)  # X_4 = 0, not 2
    res = S.raise_stack(env, 0, 2, 2, 5)
    assert all(res.checks.values())
    orig = W.replay_positions(env, 40)
    new = W.replay_positions(res.after, 38)
    assert new[:3] == orig[:3]
    assert new[3:] == orig[5:]
    assert res.t_saved == 2


def test_raise_stack_empty_excision():
    env = C.example_environment()
    res = S.raise_stack(env, 0, 2, 2, 3)
    assert res.t_saved == 0
    assert W.replay_positions(res.after, 30) == W.replay_positions(env, 30)


def test_raise_stack_rejects():
    env = C.example_environment()
    with pytest.raises(PreconditionError):
        S.raise_stack(env, 0, 5, 0, 10)  # |a - b| = 5 > L
    with pytest.raises(PreconditionError):
        S.raise_stack(env, 0, 2, 4, 2)
    with pytest.raises(PreconditionError):
        S.raise_stack(env, 2, 2, 2, 5)  # X_2 = 0
    # t_a = 4: third visit to 0 (clamped) and X_5 = 2 != 3
    with pytest.raises(PreconditionError):
        S.raise_stack(env, 0, 3, 4, 6)


def random_raise_instance(rng, env, horizon=300):
    """A random admissible (a, b, t_a, t_b) for ``env``."""
    traj = W.replay_positions(env, horizon)
    M = env.M
    for _ in range(10_000):
        ta = rng.randrange(0, horizon // 2)
        tb = rng.randrange(ta + 1, min(ta + 60, horizon))
        a, b = traj[ta], traj[tb]
        if abs(a - b) > env.L:
            continue
        if traj[:ta].count(a) < M - 1 or traj[ta + 1] == b:
            return a, b, ta, tb
    raise AssertionError("no instance")


def test_raise_stack_randomized():
    rng = random.Random(5)
    d = E.uniform(2)
    for seed in range(100):
        env = E.sample_environment(d, 3, seed, (-700, 700))
        a, b, ta, tb = random_raise_instance(rng, env)
        res = S.raise_stack(env, a, b, ta, tb)
        assert res.success
        orig = W.replay_positions(env, tb + 200)
        new = W.replay_positions(res.after, ta + 1 + 200)
        assert new[: ta + 1] == orig[: ta + 1]
        assert new[ta + 1:] == orig[tb:]
        touched = set(orig[ta: tb + 1])
        assert set(res.modified_sites) <= touched
        assert set(env.diff_sites(res.after)) == set(res.modified_sites)


def test_raise_stack_rewire_value():
    env = shallow_backtrack_env()
    res = S.raise_stack(env, 1, 1, 1, 3)
    assert res.after.cookie(0, 1) == 0
    assert res.after.cookie(1, 1) == 2


def test_subenvironment_after_raise_left_of_m():
    rng = random.Random(9)
    lam, n = 1, 400
    d = E.uniform(2)
    for seed in range(5):
        w = S.favorable_instance(d, 3, lam, n, seed)
        m = 2 * 2 * math.sqrt(n)
        traj = S.stopped_trajectory(w, lam * n)
        for _ in range(200):
            ta = rng.randrange(0, len(traj) - 2)
            tb = rng.randrange(ta + 2, len(traj))
            a, b = traj[ta], traj[tb]
            cand = ("generic", -1, a, b, ta, tb)
            if S._admissible(w, traj, cand, m, 3):
                res = S.raise_stack(w, a, b, ta, tb)
                assert S.is_subenvironment(res.after, w, S.SubenvParams(lam * n, m))
                break


def test_subenvironment_transitive_chain():
    d = E.uniform(2)
    lam, n = 1, 400
    m = 4 * math.sqrt(n)
    p = S.SubenvParams(lam * n, m)
    checked = 0
    for seed in range(30):
        w = S.favorable_instance(d, 3, lam, n, seed)
        res = S.eliminate_backtracking(w, lam, n)
        if not res.success or res.iterations < 2:
            continue
        chain = [w]
        for h in res.history:
            chain.append(S.raise_stack(chain[-1], h["a"], h["b"], h["t_a"], h["t_b"]).after)
        for i in range(len(chain)):
            for j in range(i, len(chain)):
                assert S.is_subenvironment(chain[j], chain[i], p)
        checked += 1
    assert checked >= 3


def test_compose_environment():
    d = E.uniform(2)
    w = E.sample_environment(d, 2, 1, (-10, 10))
    wh = E.sample_environment(d, 2, 2, (-10, 10))
    assert S.compose_environment(w, wh, (-10, 10)) == wh
    assert S.compose_environment(w, wh, (3, 2)) == w
    mid = S.compose_environment(w, wh, (0, 4))
    for z in range(-10, 11):
        assert mid.stack(z) == (wh.stack(z) if 0 <= z <= 4 else w.stack(z))
    with pytest.raises(PreconditionError):
        S.compose_environment(w, E.sample_environment(d, 3, 2, (-10, 10)), (0, 1))


def test_eliminate_fixed_point():
    d = E.uniform(2)
    w = C.build_ballistic(200, 2).apply(E.sample_environment(d, 3, 0, (-500, 500)))
    res = S.eliminate_backtracking(w, 1, 100)
    assert res.success and res.iterations == 0 and res.after is w


def test_eliminate_shallow_backtrack():
    w = shallow_backtrack_env()
    assert min(S.stopped_trajectory(w, 20)) == -1
    res = S.eliminate_backtracking(w, 1, 20)
    assert res.success and res.iterations == 1
    tr = S.stopped_trajectory(res.after, 20)
    assert min(tr) >= 0
    assert res.checks == {"subenv": True, "nonbacktracking": True, "traj_splice": True}


def test_eliminate_preconditions():
    w = shallow_backtrack_env()
    with pytest.raises(PreconditionError):
        S.eliminate_backtracking(w, 1, 16)
    with pytest.raises(PreconditionError):
        S.eliminate_backtracking(w, 3, 100)


def test_eliminate_randomized_and_compose():
    d = E.uniform(2)
    lam, n = 1, 400
    m = 4 * math.sqrt(n)
    for seed in range(20):
        w = S.favorable_instance(d, 3, lam, n, seed)
        res = S.eliminate_backtracking(w, lam, n)
        if not res.success:
            assert res.obstruction["site"] < 0
            continue
        assert S.is_subenvironment(res.after, w, S.SubenvParams(lam * n, m))
        tr = S.stopped_trajectory(res.after, lam * n)
        assert min(tr) >= 0 and len(tr) - 1 <= n
        composed = S.compose_environment(w, res.after, (0, m))
        out = W.run(composed, n, stop_on=W.HittingQuery.threshold(lam * n))
        assert out.stop_reason == W.HIT_TARGET and out.min_position >= 0


def test_surgery_record_is_json():
    res = S.eliminate_backtracking(shallow_backtrack_env(), 1, 20)
    rec = json.loads(json.dumps(res.record()))
    assert set(rec) == {"modified_sites", "t_saved", "iterations", "checks"}
    assert set(rec["checks"]) == {"subenv", "nonbacktracking", "traj_splice"}


def test_favorable_instance_in_event():
    d = E.uniform(2)
    w = S.favorable_instance(d, 3, 1, 400, 3)
    tr = S.stopped_trajectory(w, 400)
    assert len(tr) - 1 <= 400 and min(tr) < 0
