"""Estimator suites: each one turns a probabilistic statement into a report."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats as sps

from dwere.constructions import build_blockers
from dwere.errors import PreconditionError
from dwere.estimate import kernel as K
from dwere.estimate.events import (
    ANNULUS,
    HIT,
    IDENTITY,
    POSITION,
    REACH,
    RETURNS,
    EstimateReport,
    EventSpec,
    Scaling,
    as_fraction,
    cell_seed,
    classify,
    estimate_event,
)
from dwere.estimate.stats import clopper_upper, std_error, wilson

PASS = "PASS"
FAIL = "FAIL"
INCONCLUSIVE = "INCONCLUSIVE"


# -- D_0 -------------------------------------------------------------------------

def returns_upper_bound(dist, M, k):
    L = dist.max_jump
    return 2.0 * (1.0 - dist.mu_min ** (2 * M + L - 2)) ** (k / (2 * L * M))


def returns_lower_bound(dist, M, k):
    return dist.mu_min ** (4 * M * k)


@dataclass
class ReturnTable:
    k_max: int
    trials: int
    counts: Dict[int, int]
    beyond: int
    infinite: int
    indeterminate: int
    lower: Dict[int, float]
    upper: Dict[int, float]
    master_seed: int

    @property
    def determinate(self) -> int:
        return self.trials - self.indeterminate

    def p_hat(self, k) -> float:
        return self.counts[k] / self.determinate

    def se(self, k) -> float:
        return std_error(self.counts[k], self.determinate)

    def masses(self) -> dict:
        d = self.determinate
        out = {k: c / d for k, c in self.counts.items()}
        out[f">{self.k_max}"] = self.beyond / d
        out["inf"] = self.infinite / d
        return out

    def rows(self) -> list:
        rows = []
        for k in sorted(self.counts):
            lo, hi = wilson(self.counts[k], self.determinate)
            rows.append({
                "k": k,
                "count": self.counts[k],
                "p_hat": self.p_hat(k),
                "se": self.se(k),
                "ci_lo": lo,
                "ci_hi": hi,
                "lower_bound": self.lower[k],
                "upper_bound": self.upper[k],
            })
        return rows


def estimate_return_distribution(dist, M, k_max, trials, master_seed, max_steps=10**6, workers=1):
    """Histogram of ``D_0`` with the two analytic bounds tabulated per ``k``."""
    if dist.max_jump < 2 or M < 2:
        raise PreconditionError("the D_0 bounds assume L >= 2 and M >= 2")
    res = K.simulate_trials(dist, M, master_seed, trials, max_steps, workers=workers)
    looped = res[:, K.REASON] == K.R_LOOPED
    z = res[looped, K.ZEROS]
    counts = {k: int(np.count_nonzero(z == k)) for k in range(1, k_max + 1)}
    return ReturnTable(
        k_max=k_max,
        trials=trials,
        counts=counts,
        beyond=int(np.count_nonzero(z > k_max)),
        infinite=int(np.count_nonzero(z < 0)),
        indeterminate=int(np.count_nonzero(~looped)),
        lower={k: returns_lower_bound(dist, M, k) for k in counts},
        upper={k: returns_upper_bound(dist, M, k) for k in counts},
        master_seed=master_seed,
    )


# -- annulus decay -----------------------------------------------------------------

@dataclass
class LogLinearFit:
    ks: list
    slope: float
    intercept: float
    slope_se: float
    slope_ci95: tuple
    residuals: list

    @property
    def c_hat(self) -> float:
        return math.exp(self.slope)

    @property
    def c_ci95(self) -> tuple:
        return (math.exp(self.slope_ci95[0]), math.exp(self.slope_ci95[1]))


def log_linear_fit(ks, successes, determinate) -> LogLinearFit:
    """Weighted least squares of ``log p_hat_k`` on ``k``.

    Weights are inverse delta-method variances ``n p / (1 - p)``; cells with
    no successes are dropped.
    """
    ks = np.asarray(ks, dtype=float)
    s = np.asarray(successes, dtype=float)
    d = np.asarray(determinate, dtype=float)
    keep = s > 0
    ks, s, d = ks[keep], s[keep], d[keep]
    if len(ks) < 3:
        raise PreconditionError("need at least three nonzero cells for a log-linear fit")
    p = s / d
    y = np.log(p)
    w = d * p / np.maximum(1 - p, 1e-300)
    X = np.column_stack([np.ones_like(ks), ks])
    W = np.diag(w)
    cov = np.linalg.inv(X.T @ W @ X)
    beta = cov @ X.T @ W @ y
    resid = y - X @ beta
    dof = len(ks) - 2
    # scale by the observed dispersion when it exceeds the binomial model
    disp = max(1.0, float(resid @ W @ resid) / dof) if dof > 0 else 1.0
    se = math.sqrt(cov[1, 1] * disp)
    tq = sps.t.ppf(0.975, dof) if dof > 0 else math.inf
    return LogLinearFit(
        ks=[int(k) for k in ks],
        slope=float(beta[1]),
        intercept=float(beta[0]),
        slope_se=se,
        slope_ci95=(float(beta[1] - tq * se), float(beta[1] + tq * se)),
        residuals=[float(r) for r in resid],
    )


@dataclass
class AnnulusReport:
    L: int
    trials: int
    successes: Dict[int, int]
    determinate: Dict[int, int]
    hits: np.ndarray = field(repr=False)
    decided: np.ndarray = field(repr=False)
    fit: Optional[LogLinearFit] = None
    master_seed: int = 0

    def p_hat(self, k) -> float:
        return self.successes[k] / self.determinate[k]

    def indeterminate_fraction(self, k) -> float:
        return 1 - self.determinate[k] / self.trials

    @property
    def flagged(self) -> list:
        return [k for k in self.successes if self.indeterminate_fraction(k) > 0.01]

    def monotone_trialwise(self) -> bool:
        """Every trial that reaches ``A_{k+1}`` also reached ``A_k``."""
        h = self.hits
        return bool(np.all(h[:, 1:] <= h[:, :-1]))

    def rows(self) -> list:
        out = []
        for k in sorted(self.successes):
            lo, hi = wilson(self.successes[k], self.determinate[k])
            out.append({"k": k, "successes": self.successes[k], "determinate": self.determinate[k],
                        "p_hat": self.p_hat(k), "ci_lo": lo, "ci_hi": hi})
        return out


def estimate_annulus_decay(dist, M, k_max, trials, master_seed, max_steps=10**6,
                           fit_range=(5, 15), workers=1) -> AnnulusReport:
    """``P(T_{A_k} < inf)`` for ``k = 0..k_max`` from one coupled run per trial."""
    res = K.simulate_trials(dist, M, master_seed, trials, max_steps, workers=workers)
    hits = np.empty((trials, k_max + 1), dtype=bool)
    decided = np.empty((trials, k_max + 1), dtype=bool)
    for k in range(k_max + 1):
        h, d = classify(res, EventSpec(ANNULUS, k=k), dist.max_jump)
        hits[:, k] = h & d
        decided[:, k] = d
    succ = {k: int(hits[:, k].sum()) for k in range(k_max + 1)}
    det = {k: int(decided[:, k].sum()) for k in range(k_max + 1)}
    rep = AnnulusReport(dist.max_jump, trials, succ, det, hits, decided, master_seed=master_seed)
    lo, hi = fit_range
    ks = [k for k in range(lo, min(hi, k_max) + 1)]
    if len([k for k in ks if succ[k] > 0]) >= 3:
        rep.fit = log_linear_fit(ks, [succ[k] for k in ks], [det[k] for k in ks])
    return rep


# -- rate function ---------------------------------------------------------------------

@dataclass
class RateCell:
    lam: object
    n: int
    report: EstimateReport

    @property
    def p_hat(self) -> float:
        return self.report.p_hat

    @property
    def certified_zero(self) -> bool:
        return self.report.certified_zero

    @property
    def rate(self) -> float:
        """``log(p_hat) / n``; ``-inf`` when nothing was observed."""
        return self.report.rate

    @property
    def rate_upper(self) -> float:
        """One-sided 95% upper bound on the rate for zero-success cells."""
        if self.certified_zero:
            return -math.inf
        r = self.report
        if r.successes > 0:
            return r.rate
        return math.log(clopper_upper(0, r.determinate)) / self.n

    @property
    def rate_se(self) -> float:
        r = self.report
        if r.successes == 0:
            return math.inf
        return r.se / (r.p_hat * self.n)

    @property
    def finite(self) -> bool:
        return self.report.successes > 0


@dataclass
class RateTable:
    dist_L: int
    mu_min: float
    M: int
    cells: Dict[tuple, RateCell]
    lambdas: list
    ns: list
    scaling: Scaling = IDENTITY
    master_seed: int = 0

    def cell(self, lam, n) -> RateCell:
        return self.cells[(as_fraction(lam), n)]

    def trend(self, lam) -> list:
        return [(n, self.cell(lam, n).rate) for n in self.ns]

    def extrapolate(self, lam):
        """Fit ``rate_n = phi + c / n`` over finite cells; returns ``phi`` or ``None``."""
        pts = [(n, c.rate, c.rate_se) for n in self.ns for c in [self.cell(lam, n)] if c.finite]
        if len(pts) < 2:
            return None
        x = np.array([1.0 / n for n, _, _ in pts])
        y = np.array([r for _, r, _ in pts])
        w = np.array([1.0 / max(se, 1e-12) ** 2 for _, _, se in pts])
        A = np.column_stack([np.ones_like(x), x])
        beta = np.linalg.lstsq(A * np.sqrt(w)[:, None], y * np.sqrt(w), rcond=None)[0]
        return float(beta[0])

    def rows(self) -> list:
        out = []
        for lam in self.lambdas:
            for n in self.ns:
                c = self.cell(lam, n)
                row = c.report.row()
                row["rate"] = c.rate if c.finite else c.rate_upper
                row["rate_is_bound"] = not c.finite
                out.append(row)
        return out


def estimate_rate_function(dist, M, lambda_grid, n_grid, trials, master_seed=0,
                           scaling: Scaling = IDENTITY, workers=1, progress=None) -> RateTable:
    """``(1/n) log P(X_n >= lam xi(n))`` on a grid, one independent stream per cell.

    ``progress``, if given, is called with each finished :class:`RateCell`.
    """
    lams = [as_fraction(l) for l in lambda_grid]
    if any(l < 0 for l in lams):
        raise PreconditionError("lambda grid must be nonnegative")
    cells = {}
    for i, lam in enumerate(lams):
        for j, n in enumerate(n_grid):
            spec = EventSpec(POSITION, n=int(n), lam=lam, scaling=scaling)
            rep = estimate_event(dist, M, spec, trials, cell_seed(master_seed, i, j), workers=workers)
            cells[(lam, int(n))] = RateCell(lam, int(n), rep)
            if progress is not None:
                progress(cells[(lam, int(n))])
    return RateTable(dist.max_jump, dist.mu_min, M, cells, lams, [int(n) for n in n_grid],
                     scaling, master_seed)


# -- subadditivity ------------------------------------------------------------------------

@dataclass
class SubadditivityReport:
    lam: object
    n: int
    m: int
    p_sum: float
    p_n: float
    p_m: float
    se_independent: float
    se_coupled: Optional[float]
    verdict: str
    margin: float
    reports: tuple = field(repr=False, default=())

    @property
    def product(self) -> float:
        return self.p_n * self.p_m


def check_subadditivity(dist, M, lam, n, m, trials, master_seed=0, coupled=False,
                        workers=1, k_se=3.0) -> SubadditivityReport:
    """Compare ``P(A_{n+m})`` with ``P(A_n) P(A_m)``.

    Independent mode draws the three estimates from disjoint streams. Coupled
    mode evaluates all three on the same environments and also reports an
    influence-function standard error for the coupled statistic.
    """
    seeds = (master_seed,) * 3 if coupled else tuple(cell_seed(master_seed, i) for i in range(3))
    specs = [EventSpec(REACH, n=n + m, lam=lam), EventSpec(REACH, n=n, lam=lam),
             EventSpec(REACH, n=m, lam=lam)]
    reps = [estimate_event(dist, M, s, trials, sd, workers=workers, keep_outcomes=coupled)
            for s, sd in zip(specs, seeds)]
    r_sum, r_n, r_m = reps
    p_sum, p_n, p_m = r_sum.p_hat, r_n.p_hat, r_m.p_hat
    se_ind = math.sqrt(r_sum.se ** 2 + (p_m * r_n.se) ** 2 + (p_n * r_m.se) ** 2)
    se_cpl = None
    if coupled:
        psi = (r_sum.outcomes.astype(float) - p_m * r_n.outcomes - p_n * r_m.outcomes)
        se_cpl = float(psi.std(ddof=1) / math.sqrt(trials))
    se = se_cpl if coupled else se_ind
    margin = p_sum - p_n * p_m
    certified = r_sum.certified_zero and (r_n.certified_zero or r_m.certified_zero)
    if certified:
        verdict = PASS
    elif min(r.successes for r in reps) == 0:
        verdict = INCONCLUSIVE
    else:
        verdict = PASS if margin >= -k_se * se else FAIL
    return SubadditivityReport(lam, n, m, p_sum, p_n, p_m, se_ind, se_cpl, verdict, margin, tuple(reps))


# -- concavity ------------------------------------------------------------------------------

@dataclass
class ConcavityViolation:
    n: int
    lams: tuple
    amount: float
    se: float

    @property
    def significant(self) -> bool:
        return self.amount > 3 * self.se


@dataclass
class ConcavityReport:
    per_n: Dict[int, List[ConcavityViolation]]
    excluded: list
    max_violation: Dict[int, float]

    @property
    def significant(self) -> list:
        return [v for vs in self.per_n.values() for v in vs if v.significant]

    @property
    def shrinking(self) -> bool:
        seq = [self.max_violation[n] for n in sorted(self.max_violation)]
        return all(b <= a + 1e-12 for a, b in zip(seq, seq[1:]))


def check_concavity(rate: RateTable) -> ConcavityReport:
    """Chord test of ``phi_hat`` at every interior grid point, for every ``n``.

    Cells outside ``[0, L]`` and cells with no successes have no finite
    rate estimate and are excluded.
    """
    per_n = {}
    excluded = []
    max_v = {}
    for n in rate.ns:
        pts = []
        for lam in rate.lambdas:
            c = rate.cell(lam, n)
            if lam > rate.dist_L or not c.finite:
                excluded.append((lam, n))
                continue
            pts.append((float(lam), c.rate, c.rate_se))
        if len(pts) < 3:
            continue
        vs = []
        for (x0, y0, s0), (x1, y1, s1), (x2, y2, s2) in zip(pts, pts[1:], pts[2:]):
            w = (x1 - x0) / (x2 - x0)
            chord = (1 - w) * y0 + w * y2
            se = math.sqrt(((1 - w) * s0) ** 2 + s1 ** 2 + (w * s2) ** 2)
            vs.append(ConcavityViolation(n, (x0, x1, x2), chord - y1, se))
        per_n[n] = vs
        max_v[n] = max(0.0, max(v.amount for v in vs))
    return ConcavityReport(per_n, excluded, max_v)


# -- main bound -------------------------------------------------------------------------------

@dataclass
class MainBoundCell:
    n: int
    p_hit: float
    p_reach: float
    hit: int
    reach: int
    trials: int
    inclusion_holds: bool

    @property
    def conclusive(self) -> bool:
        return self.reach > 0

    @property
    def ratio(self) -> float:
        return self.p_hit / self.p_reach if self.reach else math.inf

    @property
    def ratio_se(self) -> float:
        if not self.reach:
            return math.inf
        return self.ratio * self.log_ratio_se

    @property
    def log_ratio_se(self) -> float:
        """Delta-method SE of ``log(p_hit / p_reach)`` for nested events on shared trials."""
        if not self.reach:
            return math.inf
        v = (1.0 / self.p_reach - 1.0 / self.p_hit) / self.trials
        return math.sqrt(max(v, 0.0))

    @property
    def scaled(self) -> float:
        return math.log(self.ratio) / math.sqrt(self.n) if self.reach else math.inf

    @property
    def scaled_se(self) -> float:
        return self.log_ratio_se / math.sqrt(self.n)


@dataclass
class MainBoundReport:
    lam: object
    cells: List[MainBoundCell]
    log_C: float

    @property
    def conclusive(self) -> bool:
        return all(c.conclusive for c in self.cells)

    @property
    def finite(self) -> bool:
        return self.conclusive and all(math.isfinite(c.scaled) for c in self.cells)

    @property
    def nonincreasing(self) -> bool:
        cs = self.cells
        return all(
            b.scaled <= a.scaled + 3 * math.hypot(a.scaled_se, b.scaled_se)
            for a, b in zip(cs, cs[1:])
        )

    @property
    def verdict(self) -> str:
        if not self.conclusive:
            return INCONCLUSIVE
        return PASS if self.finite and self.nonincreasing else FAIL


def main_bound_constant(dist, M) -> float:
    """``log C`` for ``C = (C1 C2)^{2L}``, ``C1 = (mu_max/mu_min)^M``, ``C2 = (2L+1)^M``."""
    L = dist.max_jump
    c1 = M * math.log(dist.mu_max / dist.mu_min)
    c2 = M * math.log(2 * L + 1)
    return 2 * L * (c1 + c2)


def check_main_bound(dist, M, lam, n_grid, trials, master_seed=0, workers=1,
                     progress=None) -> MainBoundReport:
    """Ratio ``P(T_{lam n} <= n) / P(A_n)`` on shared trials, scaled by ``sqrt(n)``."""
    cells = []
    for j, n in enumerate(n_grid):
        spec_hit = EventSpec(HIT, n=int(n), lam=lam)
        if spec_hit.certainly_impossible(dist.max_jump):
            cells.append(MainBoundCell(int(n), 0.0, 0.0, 0, 0, trials, True))
            continue
        res = K.simulate_trials(dist, M, cell_seed(master_seed, j), trials, int(n),
                                threshold=spec_hit.threshold, workers=workers)
        hit, _ = classify(res, spec_hit, dist.max_jump)
        reach, _ = classify(res, EventSpec(REACH, n=int(n), lam=lam), dist.max_jump)
        cells.append(MainBoundCell(
            int(n), hit.mean(), reach.mean(), int(hit.sum()), int(reach.sum()), trials,
            bool(np.all(hit[reach])),
        ))
        if progress is not None:
            progress(cells[-1])
    return MainBoundReport(as_fraction(lam), cells, main_bound_constant(dist, M))


# -- trial-wise couplings ---------------------------------------------------------------------

@dataclass
class CouplingReport:
    trials: int
    violations: int
    antecedent: int

    @property
    def holds(self) -> bool:
        return self.violations == 0


def check_inclusions(dist, M, lam, n, trials, master_seed=0, workers=1) -> dict:
    """``A_n => T <= n`` and ``X_n >= lam n => T <= n`` on every shared trial."""
    spec_hit = EventSpec(HIT, n=n, lam=lam)
    res = K.simulate_trials(dist, M, master_seed, trials, n, threshold=spec_hit.threshold,
                            workers=workers)
    hit, _ = classify(res, spec_hit, dist.max_jump)
    reach, _ = classify(res, EventSpec(REACH, n=n, lam=lam), dist.max_jump)
    pos, _ = classify(res, EventSpec(POSITION, n=n, lam=lam), dist.max_jump)
    return {
        "reach_implies_hit": CouplingReport(trials, int(np.count_nonzero(reach & ~hit)), int(reach.sum())),
        "position_implies_hit": CouplingReport(trials, int(np.count_nonzero(pos & ~hit)), int(pos.sum())),
    }


def check_blocked_position(dist, M, lam, n, trials, master_seed=0, workers=1) -> CouplingReport:
    """With zero stacks on ``[lam n, lam n + L]``, ``T_{lam n} <= n`` forces ``X_n >= lam n``."""
    spec = EventSpec(HIT, n=n, lam=lam)
    thr = spec.threshold
    blockers = build_blockers(thr, thr + dist.max_jump).entries
    res = K.simulate_trials(dist, M, master_seed, trials, n, threshold=thr, patches=blockers,
                            workers=workers)
    hit, _ = classify(res, spec, dist.max_jump)
    pos, _ = classify(res, EventSpec(POSITION, n=n, lam=lam), dist.max_jump)
    return CouplingReport(trials, int(np.count_nonzero(hit & ~pos)), int(hit.sum()))


def moment_profile(dist, M, n_grid, trials, master_seed=0, f=math.log, workers=1) -> list:
    """Mean of ``|X_n| / f(n)`` per ``n`` on shared environments."""
    out = []
    for n in n_grid:
        res = K.simulate_trials(dist, M, master_seed, trials, int(n), workers=workers)
        x = np.abs(res[:, K.X_HORIZON]).astype(float)
        out.append((int(n), float(x.mean() / f(n)), float(x.std(ddof=1) / f(n) / math.sqrt(trials))))
    return out
