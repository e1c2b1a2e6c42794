"""Event specifications and the single-event Monte Carlo estimator."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from dwere import _rng
from dwere.errors import PreconditionError
from dwere.estimate import kernel as K
from dwere.estimate.stats import wilson

log = logging.getLogger(__name__)

POSITION = "position"      # X_n >= lam * xi(n)
HIT = "hit"                # T_{lam xi(n)} <= n
REACH = "reach"            # A_n: hit before any visit to a negative site
RETURNS = "returns"        # D_0 = k
ANNULUS = "annulus"        # T_{A_k} < inf
KINDS = (POSITION, HIT, REACH, RETURNS, ANNULUS)

INDETERMINATE_FLAG = 0.01


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class Scaling:
    """``xi(n) = n`` or ``xi(n) = n ** theta`` with ``0 < theta < 1``."""

    theta: Optional[float] = None

    def __post_init__(self):
        if self.theta is not None and not 0 < self.theta < 1:
            raise PreconditionError(f"power scaling needs theta in (0, 1), got {self.theta}")
        if self.theta is not None:
            check_scaling(self)

    def __call__(self, n):
        return n if self.theta is None else n ** self.theta

    @property
    def name(self) -> str:
        return "identity" if self.theta is None else f"power:{self.theta:g}"


IDENTITY = Scaling()


def check_scaling(xi: Scaling, grid: int = 64) -> None:
    """Assert ``xi(n) + xi(m) >= xi(n + m)`` on ``1..grid``."""
    for n in range(1, grid + 1):
        for m in range(1, grid + 1):
            if xi(n) + xi(m) < xi(n + m) - 1e-12:
                raise PreconditionError(f"scaling fails xi(n)+xi(m) >= xi(n+m) at n={n}, m={m}")


@dataclass(frozen=True)
class EventSpec:
    kind: str
    n: int = 0
    lam: Fraction = Fraction(0)
    k: int = 0
    scaling: Scaling = IDENTITY

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PreconditionError(f"unknown event kind {self.kind!r}")
        object.__setattr__(self, "lam", as_fraction(self.lam))
        if self.lam < 0:
            raise PreconditionError("lambda must be nonnegative")
        if self.kind in (POSITION, HIT, REACH) and self.n < 0:
            raise PreconditionError("n must be nonnegative")
        if self.kind == RETURNS and self.k < 1:
            raise PreconditionError("D_0 = k needs k >= 1")
        if self.kind == ANNULUS and self.k < 0:
            raise PreconditionError("annulus index must be nonnegative")

    @property
    def threshold(self) -> int:
        """Smallest integer site ``>= lam * xi(n)``."""
        if self.scaling.theta is None:
            return math.ceil(self.lam * self.n)
        return math.ceil(float(self.lam) * self.scaling(self.n) - 1e-9)

    def certainly_impossible(self, L: int) -> bool:
        """Beyond ``L n`` no walk can reach: the step bound makes the event empty."""
        return self.kind in (POSITION, HIT, REACH) and self.threshold > L * self.n

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "lambda": str(self.lam),
            "k": self.k,
            "scaling": self.scaling.name,
        }


@dataclass
class EstimateReport:
    event: EventSpec
    trials: int
    successes: int
    indeterminate: int
    master_seed: int
    wall_time: float
    certified_zero: bool = False
    outcomes: Optional[np.ndarray] = field(default=None, repr=False)
    decided: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def failures(self) -> int:
        return self.trials - self.successes - self.indeterminate

    @property
    def determinate(self) -> int:
        return self.trials - self.indeterminate

    @property
    def p_hat(self) -> float:
        return self.successes / self.determinate if self.determinate else math.nan

    @property
    def ci95(self) -> tuple:
        if self.certified_zero:
            return (0.0, 0.0)
        return wilson(self.successes, self.determinate)

    @property
    def se(self) -> float:
        if self.determinate == 0:
            return math.inf
        p = self.p_hat
        return math.sqrt(p * (1 - p) / self.determinate)

    @property
    def indeterminate_fraction(self) -> float:
        return self.indeterminate / self.trials if self.trials else 0.0

    @property
    def flagged(self) -> bool:
        return self.indeterminate_fraction > INDETERMINATE_FLAG

    @property
    def rate(self) -> float:
        n = self.event.n
        if n <= 0 or self.successes == 0:
            return -math.inf
        return math.log(self.p_hat) / n

    def row(self) -> dict:
        lo, hi = self.ci95
        return {
            "event_kind": self.event.kind,
            "lambda": str(self.event.lam),
            "n": self.event.n,
            "k": self.event.k,
            "trials": self.trials,
            "successes": self.successes,
            "indeterminate": self.indeterminate,
            "p_hat": self.p_hat,
            "ci_lo": lo,
            "ci_hi": hi,
            "rate": self.rate,
        }


def cell_seed(master_seed: int, *index: int) -> int:
    """Independent master seed for a sub-experiment of ``master_seed``."""
    s = int(master_seed)
    for i in index:
        s = _rng.trial_seed(s, int(i) + 1_000_003)
    return s


def classify(res: np.ndarray, spec: EventSpec, L: int):
    """Per-trial ``(success, decided)`` boolean arrays from kernel output."""
    reason = res[:, K.REASON]
    if np.any(reason == K.R_OUT_OF_WINDOW):
        raise PreconditionError("a walk left the simulation window; enlarge it")
    if spec.kind == POSITION:
        x = res[:, K.X_HORIZON]
        decided = x != K.NO_POSITION
        return decided & (x >= spec.threshold), decided
    if spec.kind in (HIT, REACH):
        th = res[:, K.T_HIT]
        hit = (th >= 0) & (th <= spec.n)
        if spec.kind == REACH:
            tn = res[:, K.T_NEG]
            hit &= (tn < 0) | (tn > th)
        return hit, np.ones(len(res), dtype=bool)
    looped = reason == K.R_LOOPED
    if spec.kind == RETURNS:
        z = res[:, K.ZEROS]
        return looped & (z == spec.k), looped
    # annulus: first exit from [-kL, kL] lands in A_k because steps are at most L
    reach = np.maximum(-res[:, K.MIN_POS], res[:, K.MAX_POS])
    if spec.k == 0:
        ones = np.ones(len(res), dtype=bool)
        return ones, ones
    hit = reach > spec.k * L
    return hit, hit | looped


def run_for(spec: EventSpec, dist, M, trials, master_seed, max_steps=None, patches=None,
            window=None, workers=1):
    """Kernel results for ``spec``: the walk runs far enough to decide it."""
    if spec.kind in (POSITION, HIT, REACH):
        horizon = spec.n
        thr = spec.threshold
    else:
        if max_steps is None:
            raise PreconditionError(f"{spec.kind} events need max_steps for loop certification")
        horizon = max_steps
        thr = None
    return K.simulate_trials(dist, M, master_seed, trials, horizon, threshold=thr,
                             patches=patches, window=window, workers=workers)


def estimate_event(dist, M, spec: EventSpec, trials: int, master_seed: int, max_steps=None,
                   patches=None, window=None, workers=1, keep_outcomes=False) -> EstimateReport:
    """Plain Monte Carlo estimate of ``P(spec)``.

    Trial ``i`` uses the environment hashed from ``derive(master_seed, i)``,
    so two calls with the same ``master_seed`` see the same environments.
    """
    if trials < 1:
        raise PreconditionError("trials must be at least 1")
    started = time.perf_counter()
    if spec.certainly_impossible(dist.max_jump) and not patches:
        rep = EstimateReport(spec, trials, 0, 0, master_seed, 0.0, certified_zero=True)
        if keep_outcomes:
            rep.outcomes = np.zeros(trials, dtype=bool)
            rep.decided = np.ones(trials, dtype=bool)
        return rep
    res = run_for(spec, dist, M, trials, master_seed, max_steps, patches, window, workers)
    ok, decided = classify(res, spec, dist.max_jump)
    rep = EstimateReport(
        spec,
        trials,
        int(np.count_nonzero(ok & decided)),
        int(np.count_nonzero(~decided)),
        master_seed,
        time.perf_counter() - started,
    )
    if rep.flagged:
        log.warning("%s: %.2f%% of trials undecided within max_steps=%s",
                    spec.kind, 100 * rep.indeterminate_fraction, max_steps)
    if keep_outcomes:
        rep.outcomes = ok & decided
        rep.decided = decided
    return rep
