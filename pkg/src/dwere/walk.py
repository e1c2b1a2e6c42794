"""Exact engine for the deterministic walk ``X_{t+1} = X_t + ω(L_t(X_t), X_t)``.

Loop certification
------------------
Call a time ``s`` *fresh* when the walker stands on a site it has visited
fewer than ``M-1`` times, so the cookie it consumes is not the clamped top
of the stack.  After the last fresh time ``s`` every jump is ``F(x) =
ω(M-1, x)``, a fixed function of position.  The positions ``X_{s+1} ..
X_t`` all lie in the set of sites seen so far (for ``M = 1`` take ``s =
-1``), so once ``t - s`` exceeds the number of distinct sites seen, two of
them coincide and the walk is periodic from the first of the two on:
visit counts only grow, so every later visit is non-fresh as well and the
same map ``F`` keeps applying.  The detector therefore keeps O(1) extra
state and is sound by construction; the period is read off by iterating
``F`` from the current position, which is already on the cycle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

from dwere.env import Environment
from dwere.errors import OutOfWindowError, PreconditionError

MAX_STEPS = "max_steps"
LOOPED = "looped"
HIT_TARGET = "hit_target"


@dataclass
class WalkState:
    t: int = 0
    position: int = 0
    visit_counts: Dict[int, int] = field(default_factory=dict)
    last_fresh_time: int = -1
    distinct_visited: int = 1
    post_fresh_position: Optional[int] = None

    @classmethod
    def initial(cls, M: int) -> "WalkState":
        fresh = M >= 2
        return cls(last_fresh_time=0 if fresh else -1, post_fresh_position=None if fresh else 0)

    def copy(self) -> "WalkState":
        return WalkState(
            self.t,
            self.position,
            dict(self.visit_counts),
            self.last_fresh_time,
            self.distinct_visited,
            self.post_fresh_position,
        )

    def count(self, z: int) -> int:
        return self.visit_counts.get(z, 0)

    def advance(self, env: Environment) -> "WalkState":
        """Take one step in place and return ``self``."""
        x = self.position
        k = self.visit_counts.get(x, 0)
        jump = env.cookie(k, x)
        y = x + jump
        if not env.contains(y):
            raise OutOfWindowError(y, env.window, t=self.t + 1)
        self.visit_counts[x] = k + 1
        self.t += 1
        self.position = y
        ky = self.visit_counts.get(y, 0)
        if ky == 0 and y != x:
            self.distinct_visited += 1
        if ky < env.M - 1:
            self.last_fresh_time = self.t
            self.post_fresh_position = None
        elif self.post_fresh_position is None:
            self.post_fresh_position = y
        return self


def step(state: WalkState, env: Environment) -> WalkState:
    if not env.contains(state.position):
        raise OutOfWindowError(state.position, env.window, t=state.t)
    return state.copy().advance(env)


@dataclass(frozen=True)
class LoopCertificate:
    time: int
    period: int
    cycle: tuple
    entry_time: int

    @property
    def contains_origin(self) -> bool:
        return 0 in self.cycle

    def position_at(self, n: int) -> int:
        if n < self.entry_time:
            raise ValueError(f"time {n} precedes the loop entry {self.entry_time}")
        return self.cycle[(n - self.entry_time) % self.period]


@dataclass(frozen=True)
class LoopVerdict:
    looped: bool
    certificate: Optional[LoopCertificate] = None

    def __bool__(self):
        return self.looped


def _clamped_jump(env, x):
    return env.cookie(env.M - 1, x)


def detect_loop(state: WalkState, env: Optional[Environment] = None) -> LoopVerdict:
    """Fire when no fresh cookie was used for more steps than sites seen.

    With ``env`` given, the verdict carries a certificate: the period, the
    cycle starting at the entry time, and the entry time itself (the first
    time after the last fresh cookie at which the walker is on the cycle).
    """
    if state.t - state.last_fresh_time <= state.distinct_visited:
        return LoopVerdict(False)
    if env is None:
        return LoopVerdict(True)
    start = state.position
    cyc = [start]
    y = start + _clamped_jump(env, start)
    while y != start:
        cyc.append(y)
        y += _clamped_jump(env, y)
        if len(cyc) > state.distinct_visited:
            raise AssertionError("clamped map failed to close a cycle; detector invariant broken")
    on_cycle = set(cyc)
    # Walk the clamped map from the first post-fresh position onto the cycle.
    entry = state.last_fresh_time + 1
    y = state.post_fresh_position
    while y not in on_cycle:
        y += _clamped_jump(env, y)
        entry += 1
    shift = cyc.index(y)
    cycle = tuple(cyc[shift:] + cyc[:shift])
    return LoopVerdict(True, LoopCertificate(state.t, len(cycle), cycle, entry))


@dataclass(frozen=True)
class HittingQuery:
    """One hitting time to record.

    ``threshold`` is ``T_[x, inf)``, ``set`` is ``T_A`` for a finite set,
    ``visit`` is ``V_x^k`` (the time of the k-th visit to ``x``) and
    ``below`` is ``T_(-inf, x)``.
    """

    kind: str
    x: Optional[int] = None
    sites: Optional[frozenset] = None
    k: int = 1

    def __post_init__(self):
        if self.kind not in ("threshold", "set", "visit", "below"):
            raise PreconditionError(f"unknown query kind {self.kind!r}")
        if self.kind == "set" and not self.sites:
            raise PreconditionError("hitting set must be nonempty")
        if self.k < 1:
            raise PreconditionError("visit index k must be at least 1")

    @classmethod
    def threshold(cls, x: int) -> "HittingQuery":
        return cls("threshold", x=int(x))

    @classmethod
    def hit_set(cls, sites: Iterable[int]) -> "HittingQuery":
        return cls("set", sites=frozenset(int(s) for s in sites))

    @classmethod
    def visit(cls, x: int, k: int = 1) -> "HittingQuery":
        return cls("visit", x=int(x), k=int(k))

    @classmethod
    def below(cls, x: int = 0) -> "HittingQuery":
        return cls("below", x=int(x))

    def matches(self, y: int) -> bool:
        if self.kind == "threshold":
            return y >= self.x
        if self.kind == "below":
            return y < self.x
        if self.kind == "set":
            return y in self.sites
        return y == self.x

    @property
    def label(self) -> str:
        if self.kind == "threshold":
            return f"T[{self.x},inf)"
        if self.kind == "below":
            return f"T(-inf,{self.x})"
        if self.kind == "visit":
            return f"V({self.x},{self.k})"
        return "T{" + ",".join(str(s) for s in sorted(self.sites)) + "}"


@dataclass
class WalkOutcome:
    trajectory: List[int]
    stop_reason: str
    steps: int
    hits: Dict[HittingQuery, Optional[float]]
    returns_to_origin: float
    zero_times: List[int]
    min_position: int
    max_position: int
    final_state: WalkState
    loop: Optional[LoopCertificate] = None
    thin: int = 1
    seed: Optional[int] = None

    @property
    def loop_entry_time(self) -> Optional[int]:
        return None if self.loop is None else self.loop.entry_time

    @property
    def D0(self) -> float:
        return self.returns_to_origin

    def hit(self, query: HittingQuery) -> Optional[float]:
        """Realized hitting time, ``math.inf`` if never hit, ``None`` if undecided."""
        return self.hits[query]

    def position_at(self, n: int) -> int:
        if n <= self.steps and self.thin == 1 and self.trajectory:
            return self.trajectory[n]
        if self.loop is not None and n >= self.loop.entry_time:
            return self.loop.position_at(n)
        if n == self.steps:
            return self.final_state.position
        raise ValueError(f"position at time {n} was not recorded")

    def record(self) -> dict:
        d0 = self.returns_to_origin
        return {
            "seed": self.seed,
            "stop_reason": self.stop_reason,
            "steps": self.steps,
            "D0": "inf" if d0 == math.inf else int(d0),
            "min_pos": self.min_position,
            "max_pos": self.max_position,
            "hits": {q.label: _time_json(v) for q, v in self.hits.items()},
        }


def _time_json(v):
    if v is None:
        return None
    if v == math.inf:
        return "inf"
    return int(v)


def _resolve_after_loop(q, cert, visits_so_far):
    """Hitting time of ``q`` given the walk is on ``cert``'s cycle forever."""
    if q.kind != "visit":
        # Every cycle site has already been visited, so an unhit set stays unhit.
        return math.inf
    offsets = [i for i, y in enumerate(cert.cycle) if y == q.x]
    if not offsets:
        return math.inf
    # Visits counted up to and including cert.time; later ones follow the cycle.
    need = q.k - visits_so_far
    base = cert.time + 1
    phase = (base - cert.entry_time) % cert.period
    times = sorted((o - phase) % cert.period for o in offsets)
    rounds, idx = divmod(need - 1, len(times))
    return base + rounds * cert.period + times[idx]


def run(
    env: Environment,
    max_steps: int,
    queries: Sequence[HittingQuery] = (),
    stop_on: Optional[HittingQuery] = None,
    record_trajectory: bool = True,
    thin: int = 1,
) -> WalkOutcome:
    """Simulate until ``max_steps``, a certified loop, or ``stop_on`` fires."""
    if max_steps < 0:
        raise PreconditionError("max_steps must be nonnegative")
    if not env.contains(0):
        raise OutOfWindowError(0, env.window, t=0)
    queries = list(queries)
    if stop_on is not None and stop_on not in queries:
        queries.append(stop_on)
    state = WalkState.initial(env.M)
    hits: Dict[HittingQuery, Optional[float]] = {q: None for q in queries}
    visits = {q: 0 for q in queries if q.kind == "visit"}
    traj = [0] if record_trajectory else []
    zero_times = []
    lo = hi = 0
    reason = None
    cert = None
    while True:
        x = state.position
        t = state.t
        if x == 0:
            zero_times.append(t)
        for q in queries:
            if hits[q] is None and q.matches(x):
                if q.kind == "visit":
                    visits[q] += 1
                    if visits[q] == q.k:
                        hits[q] = t
                else:
                    hits[q] = t
        if stop_on is not None and hits[stop_on] is not None:
            reason = HIT_TARGET
            break
        verdict = detect_loop(state, env)
        if verdict:
            cert = verdict.certificate
            reason = LOOPED
            break
        if t >= max_steps:
            reason = MAX_STEPS
            break
        state.advance(env)
        y = state.position
        lo = min(lo, y)
        hi = max(hi, y)
        if record_trajectory and state.t % thin == 0:
            traj.append(y)
    d0 = float(len(zero_times))
    if cert is not None:
        if cert.contains_origin:
            d0 = math.inf
        for q in queries:
            if hits[q] is None:
                hits[q] = _resolve_after_loop(q, cert, visits.get(q, 0))
    return WalkOutcome(
        trajectory=traj,
        stop_reason=reason,
        steps=state.t,
        hits=hits,
        returns_to_origin=d0 if d0 == math.inf else int(d0),
        zero_times=zero_times,
        min_position=lo,
        max_position=hi,
        final_state=state,
        loop=cert,
        thin=thin,
        seed=env.master_seed,
    )


def replay_positions(env: Environment, steps: int) -> List[int]:
    """Plain simulation with no loop detection, used as an oracle."""
    counts: Dict[int, int] = {}
    x = 0
    out = [0]
    for t in range(steps):
        k = counts.get(x, 0)
        counts[x] = k + 1
        x += env.cookie(k, x)
        if not env.contains(x):
            raise OutOfWindowError(x, env.window, t=t + 1)
        out.append(x)
    return out


def infer_cookies(trajectory: Sequence[int], M: int) -> Dict[tuple, int]:
    """Recover the cookies a trajectory must have consumed.

    Returns ``{(j, z): jump}`` for stack index ``j <= M-1``; raises if the
    trajectory asks two different jumps of the same cookie.
    """
    if not trajectory or trajectory[0] != 0:
        raise PreconditionError("trajectories start at 0")
    counts: Dict[int, int] = {}
    known: Dict[tuple, int] = {}
    for t in range(len(trajectory) - 1):
        x = trajectory[t]
        j = min(counts.get(x, 0), M - 1)
        counts[x] = counts.get(x, 0) + 1
        jump = trajectory[t + 1] - x
        prev = known.setdefault((j, x), jump)
        if prev != jump:
            raise PreconditionError(f"cookie ({j}, {x}) would need both {prev} and {jump} at t={t}")
    return known


def dump_trajectory(outcome: WalkOutcome) -> str:
    step_ = outcome.thin
    return "".join(f"{i * step_} {x}\n" for i, x in enumerate(outcome.trajectory))


def outcome_json(outcome: WalkOutcome) -> str:
    return json.dumps(outcome.record(), sort_keys=True)
