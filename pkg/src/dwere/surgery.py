"""Environment surgery: the subenvironment order, stack raising, composition,
and greedy elimination of backtracking below the origin.

Stack raising cuts the excursion ``X_{t_a+1} .. X_{t_b-1}`` out of a walk.
Every site ``x`` touched in ``[t_a, t_b)`` loses the ``C_x`` cookies eaten
there, and the cookie used at ``a`` at time ``t_a`` is rewired to jump to
``b``.  At ``a`` itself the rewired cookie stands in for one of the ``C_a``
consumed ones, so the layers above it shift by ``C_a - 1``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from dwere import walk as W
from dwere.env import Environment, from_cookies, sample_environment
from dwere.errors import NotInDomainError, PreconditionError


class SurgeryCheckError(AssertionError):
    """A surgery postcondition failed re-simulation."""


def restrict_sequence(a: Sequence[int], B) -> list:
    """Terms of ``a`` lying in ``B`` (a container or a predicate), order intact."""
    test = B if callable(B) else B.__contains__
    return [x for x in a if test(x)]


@dataclass(frozen=True)
class Interval:
    lo: float = -math.inf
    hi: float = math.inf

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi


def is_subsequence(short: Sequence[int], long: Sequence[int]) -> bool:
    it = iter(long)
    return all(any(x == y for y in it) for x in short)


@dataclass(frozen=True)
class SubenvParams:
    ell: object
    m: float

    def __post_init__(self):
        if not 0 <= self.m < self.ell:
            raise PreconditionError(f"need 0 <= m < ell, got m={self.m}, ell={self.ell}")

    @property
    def target(self) -> int:
        return math.ceil(self.ell)


def stopped_trajectory(env: Environment, ell, budget: int = 10**6) -> list:
    """``X_{[0, T_ell]}``; raises :class:`NotInDomainError` unless ``T_ell`` is certified finite."""
    q = W.HittingQuery.threshold(math.ceil(ell))
    out = W.run(env, budget, stop_on=q)
    if out.stop_reason != W.HIT_TARGET:
        raise NotInDomainError(f"walk does not reach {ell} ({out.stop_reason} after {out.steps} steps)")
    return out.trajectory


def subenvironment_conditions(w_prime: Environment, w: Environment, p: SubenvParams,
                              budget: int = 10**6) -> dict:
    if w_prime.window != w.window or w_prime.M != w.M or w_prime.L != w.L:
        raise PreconditionError("environments must share L, M and window")
    tp = stopped_trajectory(w_prime, p.ell, budget)
    t = stopped_trajectory(w, p.ell, budget)
    right = np.arange(w.lo, w.hi + 1) > p.m
    box = Interval(p.m, p.ell)
    return {
        "cookies_right_of_m": bool(np.array_equal(w_prime.cookies[right], w.cookies[right])),
        "restriction": restrict_sequence(tp, box) == restrict_sequence(t, box),
        "subsequence": is_subsequence(tp, t),
    }


def is_subenvironment(w_prime: Environment, w: Environment, p: SubenvParams, budget: int = 10**6) -> bool:
    return all(subenvironment_conditions(w_prime, w, p, budget).values())


@dataclass
class SurgeryResult:
    before: Environment
    after: Environment
    modified_sites: list
    t_saved: int
    checks: Dict[str, bool]
    iterations: int = 1
    history: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return all(self.checks.values())

    def record(self) -> dict:
        return {
            "modified_sites": list(self.modified_sites),
            "t_saved": self.t_saved,
            "iterations": self.iterations,
            "checks": dict(self.checks),
        }


def _counts_before(traj: Sequence[int], t: int) -> Counter:
    return Counter(traj[:t])


def raised_stacks(w: Environment, traj: Sequence[int], a: int, b: int, t_a: int, t_b: int) -> dict:
    """New stacks for the sites of ``X_{[t_a, t_b]}``; other sites are untouched."""
    M = w.M
    before = _counts_before(traj, t_a)
    within = Counter(traj[t_a:t_b])
    out = {}
    for x in set(traj[t_a:t_b + 1]):
        la = before[x]
        cx = within[x]
        stack = []
        for j in range(M):
            if j < la:
                stack.append(w.cookie(j, x))
            elif x != a:
                stack.append(w.cookie(j + cx, x))
            elif j == la:
                stack.append(b - a)
            else:
                stack.append(w.cookie(j + cx - 1, x))
        out[x] = tuple(stack)
    return out


def _splice_state_equal(w: Environment, w2: Environment, traj, traj2, t_b, t_a) -> bool:
    """Remaining cookies seen from ``(w, t_b)`` and ``(w2, t_a + 1)`` coincide."""
    c1 = _counts_before(traj, t_b)
    c2 = _counts_before(traj2, t_a + 1)
    if traj[t_b] != traj2[t_a + 1]:
        return False
    sites = set(c1) | set(c2) | set(w.diff_sites(w2))
    for z in sites:
        for i in range(w.M):
            if w.cookie(c1[z] + i, z) != w2.cookie(c2[z] + i, z):
                return False
    return True


def raise_stack(w: Environment, a: int, b: int, t_a: int, t_b: int, verify: bool = True,
                horizon: Optional[int] = None) -> SurgeryResult:
    """Cut ``X_{t_a+1} .. X_{t_b-1}`` out of the walk on ``w``.

    Needs ``|a - b| <= L``, ``X_{t_a} = a``, ``X_{t_b} = b`` and either a
    non-clamped cookie at ``a`` at time ``t_a`` or ``X_{t_a+1} = b``.
    With ``verify`` the three conclusions are re-checked by simulation over
    ``min(first loop certificate, 10 t_b)`` further steps; a failure raises
    :class:`SurgeryCheckError`.
    """
    if abs(a - b) > w.L:
        raise PreconditionError(f"|a - b| = {abs(a - b)} exceeds L = {w.L}")
    if not 0 <= t_a < t_b:
        raise PreconditionError(f"need 0 <= t_a < t_b, got {t_a}, {t_b}")
    traj = W.replay_positions(w, t_b)
    if traj[t_a] != a or traj[t_b] != b:
        raise PreconditionError(f"walk is at {traj[t_a]} at t_a and {traj[t_b]} at t_b, not {a}, {b}")
    cond_a = traj[:t_a].count(a) < w.M - 1
    cond_b = traj[t_a + 1] == b
    if not (cond_a or cond_b):
        raise PreconditionError(
            f"neither a fresh cookie at {a} (visits so far {traj[:t_a].count(a)}, M={w.M}) "
            f"nor X_(t_a+1) = b holds"
        )
    stacks = raised_stacks(w, traj, a, b, t_a, t_b)
    changed = {z: s for z, s in stacks.items() if s != w.stack(z)}
    w2 = w.with_patches(changed)
    modified = w.diff_sites(w2)
    checks = {}
    if verify:
        checks = verify_raise(w, w2, traj, a, b, t_a, t_b, horizon)
        if not all(checks.values()):
            raise SurgeryCheckError(f"raise_stack({a}, {b}, {t_a}, {t_b}) failed checks {checks}")
    return SurgeryResult(w, w2, modified, t_b - t_a - 1, checks)


def verify_raise(w, w2, traj, a, b, t_a, t_b, horizon=None) -> dict:
    if horizon is None:
        out = W.run(w, 10 * t_b, record_trajectory=False)
        horizon = out.steps if out.stop_reason == W.LOOPED else 10 * t_b
        horizon = max(horizon, t_b)
    long1 = _safe_replay(w, t_b + horizon)
    long2 = _safe_replay(w2, t_a + 1 + horizon)
    n = min(len(long1) - t_b, len(long2) - t_a - 1)
    touched = set(traj[t_a:t_b + 1])
    return {
        "prefix": long2[: t_a + 1] == traj[: t_a + 1],
        "suffix": n > 0 and long2[t_a + 1 : t_a + 1 + n] == long1[t_b : t_b + n],
        "locality": set(w.diff_sites(w2)) <= touched,
        "splice_state": _splice_state_equal(w, w2, long1, long2, t_b, t_a),
    }


def _safe_replay(env, steps):
    """Replay as far as the window allows."""
    try:
        return W.replay_positions(env, steps)
    except Exception:
        out = [0]
        counts = {}
        x = 0
        for _ in range(steps):
            k = counts.get(x, 0)
            y = x + env.cookie(k, x)
            if not env.contains(y):
                break
            counts[x] = k + 1
            x = y
            out.append(x)
        return out


def compose_environment(w: Environment, w_hat: Environment, boundary) -> Environment:
    """``w_hat``'s cookies on ``[lo, hi]`` and ``w``'s everywhere else."""
    if (w.L, w.M, w.window) != (w_hat.L, w_hat.M, w_hat.window):
        raise PreconditionError("composed environments must share L, M and window")
    if boundary is None:
        return w
    lo, hi = max(math.ceil(boundary[0]), w.lo), min(math.floor(boundary[1]), w.hi)
    if lo > hi:
        return w
    arr = np.array(w.cookies)
    arr[lo - w.lo : hi - w.lo + 1] = w_hat.cookies[lo - w.lo : hi - w.lo + 1]
    return from_cookies(w.distribution, w.lo, arr, w.master_seed)


# -- eliminating backtracking -----------------------------------------------------------

@dataclass
class EliminationFailure:
    before: Environment
    current: Environment
    iterations: int
    reason: str
    obstruction: dict
    history: list = field(default_factory=list)

    success = False

    def record(self) -> dict:
        return {"success": False, "iterations": self.iterations, "reason": self.reason,
                "obstruction": self.obstruction}


def _visit_times(traj, x, upto):
    return [t for t in range(upto + 1) if traj[t] == x]


def _proof_candidates(traj, M, m, L, sqrt_n):
    """Surgeries in the order the existence argument tries them.

    First the excursion below the earliest negative site ``x`` (entry and
    exit ``(alpha_1, a_1)``, ``(beta_1, b_1)``), then the loops between
    consecutive visits to ``a_1`` spliced with condition (b), then the same
    two moves one level up at ``a_2, a_3, ...``.
    """
    T = len(traj) - 1
    tau = next(t for t, y in enumerate(traj) if y < 0)
    x = traj[tau]
    below = x
    v_first = tau
    level = 0
    while True:
        alpha = max((k for k in range(v_first) if traj[k] > below), default=None)
        beta = next((k for k in range(v_first + 1, T + 1) if traj[k] > below), None)
        if alpha is None or beta is None:
            return
        a_i, b_i = traj[alpha], traj[beta]
        yield ("excursion", level, a_i, b_i, alpha, beta)
        visits = _visit_times(traj, a_i, T)
        for s in range(min(M - 1, len(visits) - 1)):
            vs, vs1 = visits[s], visits[s + 1]
            if vs >= 1:
                yield ("splice", level, traj[vs - 1], a_i, vs - 1, vs1)
        if len(visits) < 2 or a_i >= L * sqrt_n:
            return
        below = a_i
        v_first = visits[1]
        level += 1


def _generic_candidates(traj, M, m, L):
    """All single surgeries that shorten the walk, longest cuts first."""
    T = len(traj) - 1
    before = Counter()
    fresh = []
    for t in range(T + 1):
        fresh.append(before[traj[t]] < M - 1)
        before[traj[t]] += 1
    tau = next((t for t, y in enumerate(traj) if y < 0), None)
    out = []
    for ta in range(T - 1):
        a = traj[ta]
        run_max = -math.inf
        for tb in range(ta + 2, T + 1):
            run_max = max(run_max, traj[tb - 1])
            if run_max >= m:
                break
            b = traj[tb]
            if abs(a - b) > L:
                continue
            if fresh[ta] or traj[ta + 1] == b:
                covers = tau is not None and ta < tau < tb
                out.append((not covers, -(tb - ta), ta, tb))
    out.sort()
    for _, _, ta, tb in out:
        yield ("generic", -1, traj[ta], traj[tb], ta, tb)


def _admissible(w, traj, cand, m, M):
    """Cheap filter: preconditions, strict progress, and no change right of ``m``."""
    _, _, a, b, ta, tb = cand
    if tb <= ta + 1 or abs(a - b) > w.L:
        return False
    if not (traj[:ta].count(a) < M - 1 or traj[ta + 1] == b):
        return False
    if any(y >= m for y in traj[ta + 1 : tb]):
        return False
    stacks = raised_stacks(w, traj, a, b, ta, tb)
    return all(z <= m or s == w.stack(z) for z, s in stacks.items())


def eliminate_backtracking(w: Environment, lam, n: int, budget: Optional[int] = None,
                           verify: bool = True, generic: bool = True):
    """Greedy search for ``w' ⊑_{lam n, 2L sqrt n} w`` whose walk stays in ``[0, inf)`` until ``T_{lam n}``.

    Each round applies one stack raising that strictly shortens ``T_{lam n}``
    while keeping the subenvironment relation with the original ``w``;
    candidates come first from the existence argument's construction, then
    (with ``generic``) from a scan over all admissible cuts.  Returns a
    :class:`SurgeryResult` on success and an :class:`EliminationFailure`
    carrying the obstruction otherwise.
    """
    from dwere.estimate.events import as_fraction

    lam = as_fraction(lam)
    L, M = w.L, w.M
    if lam <= 0 or lam > L:
        raise PreconditionError(f"lambda must lie in (0, L], got {lam}")
    if n <= (2 * L / lam) ** 2:
        raise PreconditionError(f"need n > (2L/lambda)^2 = {float((2 * L / lam) ** 2)}")
    ell = lam * n
    sqrt_n = math.sqrt(n)
    m = 2 * L * sqrt_n
    params = SubenvParams(ell, m)
    traj0 = stopped_trajectory(w, ell, budget=n)
    if len(traj0) - 1 > n:
        raise NotInDomainError(f"T_(lam n) = {len(traj0) - 1} exceeds n = {n}")
    budget = n if budget is None else budget
    sigma = w
    traj = traj0
    history = []
    it = 0
    while min(traj) < 0:
        if it >= budget:
            return EliminationFailure(w, sigma, it, "budget exhausted", _obstruction(traj, M), history)
        chosen = None
        sources = [_proof_candidates(traj, M, m, L, sqrt_n)]
        if generic:
            sources.append(_generic_candidates(traj, M, m, L))
        for source in sources:
            for cand in source:
                if _admissible(sigma, traj, cand, m, M):
                    chosen = cand
                    break
            if chosen:
                break
        if chosen is None:
            return EliminationFailure(w, sigma, it, "no admissible surgery", _obstruction(traj, M), history)
        rule, level, a, b, ta, tb = chosen
        res = raise_stack(sigma, a, b, ta, tb, verify=verify)
        history.append({"rule": rule, "level": level, "a": a, "b": b, "t_a": ta, "t_b": tb,
                        "t_saved": res.t_saved})
        sigma = res.after
        new_traj = stopped_trajectory(sigma, ell, budget=n)
        if len(new_traj) >= len(traj):
            raise SurgeryCheckError("surgery did not shorten the walk")
        traj = new_traj
        it += 1
    checks = {
        "subenv": is_subenvironment(sigma, w, params, budget=n) if sigma is not w else True,
        "nonbacktracking": min(traj) >= 0,
        "traj_splice": True,
    }
    result = SurgeryResult(w, sigma, w.diff_sites(sigma), len(traj0) - len(traj), checks, it, history)
    if not result.success:
        raise SurgeryCheckError(f"eliminated environment failed checks {checks}")
    return result


def _obstruction(traj, M) -> dict:
    tau = next(t for t, y in enumerate(traj) if y < 0)
    x = traj[tau]
    alpha = max((k for k in range(tau) if traj[k] > x), default=None)
    beta = next((k for k in range(tau + 1, len(traj)) if traj[k] > x), None)
    a1 = traj[alpha] if alpha is not None else None
    return {
        "site": x,
        "first_negative_time": tau,
        "alpha": alpha,
        "beta": beta,
        "a": a1,
        "b": traj[beta] if beta is not None else None,
        "visits_before_alpha": traj[:alpha].count(a1) if alpha is not None else None,
        "visit_times_a": _visit_times(traj, a1, len(traj) - 1) if a1 is not None else [],
        "T": len(traj) - 1,
        "M": M,
    }


# -- instances for experiments ----------------------------------------------------------

def favorable_instance(dist, M: int, lam, n: int, seed: int, tilt: float = 2.0,
                       flat_zone: int = 6, require_backtrack: bool = True,
                       max_tries: int = 100_000) -> Environment:
    """A random environment in ``{T_{lam n} <= n}``, drawn by rejection.

    Cookies at sites ``>= flat_zone`` come from ``mu`` tilted by
    ``exp(tilt * jump)`` so the walk can cover ``lam n`` in ``n`` steps;
    sites left of ``flat_zone`` keep ``mu`` so the walk can wander below
    the origin first.  With ``require_backtrack`` only walks that visit a
    negative site before ``T_{lam n}`` are kept.
    """
    from dwere.estimate.events import as_fraction

    L = dist.max_jump
    ell = as_fraction(lam) * n
    w = np.array(dist.weights) * np.exp(tilt * np.arange(-L, L + 1))
    w /= w.sum()
    rng = np.random.default_rng(seed)
    lo, hi = -L * n - L, L * n + L
    sites = np.arange(lo, hi + 1)
    for _ in range(max_tries):
        flat = rng.choice(2 * L + 1, size=(len(sites), M), p=np.array(dist.weights)) - L
        tilted = rng.choice(2 * L + 1, size=(len(sites), M), p=w) - L
        arr = np.where((sites >= flat_zone)[:, None], tilted, flat)
        env = from_cookies(dist, lo, arr, master_seed=seed)
        out = W.run(env, n, stop_on=W.HittingQuery.threshold(math.ceil(ell)))
        if out.stop_reason != W.HIT_TARGET:
            continue
        if require_backtrack and out.min_position >= 0:
            continue
        return env
    raise RuntimeError(f"no favorable instance in {max_tries} tries")
