"""Exact probabilities by enumeration, for small ``n``.

Two independent routes: :func:`exact_probability` branches only on the
cookies the walk actually reads (at most ``(2L+1)^n`` leaves), and
:func:`brute_force_probability` enumerates every assignment of every cookie
in the window.  Both return :class:`fractions.Fraction` values when the
weights are given as fractions.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Sequence

from dwere.errors import PreconditionError
from dwere.estimate.events import HIT, POSITION, REACH, EventSpec


def exact_weights(dist) -> list:
    """Cookie weights as fractions (exact for rational weights such as ``1/(2L+1)``)."""
    return [Fraction(w).limit_denominator(10**9) for w in dist.weights]


def _event_holds(path: Sequence[int], spec: EventSpec) -> bool:
    thr = spec.threshold
    if spec.kind == POSITION:
        return path[spec.n] >= thr
    t_hit = next((t for t, x in enumerate(path) if x >= thr), None)
    if t_hit is None or t_hit > spec.n:
        return False
    if spec.kind == HIT:
        return True
    return all(x >= 0 for x in path[: t_hit + 1])


def _check(spec, window, L):
    if spec.kind not in (POSITION, HIT, REACH):
        raise PreconditionError("enumeration supports position, hit and reach events")
    # only X_0 .. X_{n-1} read a cookie
    reach = L * max(spec.n - 1, 0)
    lo, hi = window
    if lo > -reach or hi < reach:
        raise PreconditionError(f"window {lo}:{hi} does not contain every site read in {spec.n} steps")


def exact_probability(dist, M: int, spec: EventSpec, window=(-6, 6), weights=None) -> Fraction:
    L = dist.max_jump
    _check(spec, window, L)
    w = exact_weights(dist) if weights is None else list(weights)
    jumps = list(range(-L, L + 1))
    total = Fraction(0)

    def dfs(t, x, counts, revealed, path, prob):
        nonlocal total
        if t == spec.n:
            if _event_holds(path, spec):
                total += prob
            return
        k = counts.get(x, 0)
        key = (min(k, M - 1), x)
        counts[x] = k + 1
        if key in revealed:
            y = x + revealed[key]
            path.append(y)
            dfs(t + 1, y, counts, revealed, path, prob)
            path.pop()
        else:
            for jump, pj in zip(jumps, w):
                revealed[key] = jump
                path.append(x + jump)
                dfs(t + 1, x + jump, counts, revealed, path, prob * pj)
                path.pop()
            del revealed[key]
        counts[x] = k

    dfs(0, 0, {}, {}, [0], Fraction(1))
    return total


def brute_force_probability(dist, M: int, spec: EventSpec, window, weights=None, limit=2_000_000) -> Fraction:
    """Sum over all ``(2L+1)^(M * |window|)`` cookie assignments."""
    L = dist.max_jump
    _check(spec, window, L)
    w = exact_weights(dist) if weights is None else list(weights)
    lo, hi = window
    sites = list(range(lo, hi + 1))
    ncookies = M * len(sites)
    if (2 * L + 1) ** ncookies > limit:
        raise PreconditionError(f"{(2 * L + 1) ** ncookies} assignments exceeds the limit {limit}")
    total = Fraction(0)
    for combo in itertools.product(range(2 * L + 1), repeat=ncookies):
        prob = Fraction(1)
        for c in combo:
            prob *= w[c]
        counts = {}
        x = 0
        path = [0]
        for _ in range(spec.n):
            k = counts.get(x, 0)
            counts[x] = k + 1
            idx = (x - lo) * M + min(k, M - 1)
            x += combo[idx] - L
            path.append(x)
        if _event_holds(path, spec):
            total += prob
    return total
