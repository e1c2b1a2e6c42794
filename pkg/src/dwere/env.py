"""Cookie distributions and finite windows of cookie environments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional, Sequence

import numpy as np

from dwere import _rng
from dwere.errors import OutOfWindowError, PreconditionError, WindowTooLarge

SUM_TOL = 1e-12
MAX_COOKIES = 50_000_000


@dataclass(frozen=True)
class CookieDistribution:
    """Law of a single cookie on the jumps ``-L..L``.

    ``weights[i]`` is the probability of the jump ``i - L``.
    """

    max_jump: int
    weights: tuple

    def __post_init__(self):
        L = self.max_jump
        if not isinstance(L, (int, np.integer)) or L < 1:
            raise PreconditionError(f"max_jump must be a positive integer, got {L!r}")
        w = tuple(float(x) for x in self.weights)
        if len(w) != 2 * L + 1:
            raise PreconditionError(f"expected {2 * L + 1} weights for L={L}, got {len(w)}")
        if any(not (x > 0) for x in w):
            raise PreconditionError("every jump in [-L, L] needs strictly positive weight")
        if abs(math.fsum(w) - 1.0) > SUM_TOL:
            raise PreconditionError(f"weights sum to {math.fsum(w)!r}, not 1")
        object.__setattr__(self, "max_jump", int(L))
        object.__setattr__(self, "weights", w)

    @property
    def L(self) -> int:
        return self.max_jump

    @property
    def support(self) -> range:
        return range(-self.max_jump, self.max_jump + 1)

    @property
    def mu_min(self) -> float:
        return min(self.weights)

    @property
    def mu_max(self) -> float:
        return max(self.weights)

    def prob(self, k: int) -> float:
        if not -self.max_jump <= k <= self.max_jump:
            return 0.0
        return self.weights[k + self.max_jump]

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(np.asarray(self.weights, dtype=np.float64))
        c[-1] = 1.0
        return c

    def is_uniform(self) -> bool:
        return all(w == self.weights[0] for w in self.weights)


def make_distribution(L: int, weights: Sequence[float]) -> CookieDistribution:
    return CookieDistribution(L, tuple(weights))


def uniform(L: int) -> CookieDistribution:
    return CookieDistribution(L, (1.0 / (2 * L + 1),) * (2 * L + 1))


def _check_window(window):
    lo, hi = (int(window[0]), int(window[1]))
    if hi < lo:
        raise PreconditionError(f"empty window {lo}:{hi}")
    return lo, hi


@dataclass(frozen=True, eq=False)
class Environment:
    """Cookie stacks ``ω(j, z)`` for ``z`` in ``[lo, hi]`` and ``j`` in ``[0, M-1]``.

    Sampled cookies live in ``base``; explicit overrides live in ``patches``
    and win at read time. Instances are immutable: every mutator returns a
    new environment and leaves the original untouched.
    """

    distribution: CookieDistribution
    M: int
    lo: int
    hi: int
    master_seed: int
    base: np.ndarray = field(repr=False)
    patches: Mapping[int, tuple] = field(default_factory=dict)
    sampled: bool = True

    def __post_init__(self):
        base = np.array(self.base, dtype=np.int64, copy=True)
        if base.shape != (self.hi - self.lo + 1, self.M):
            raise PreconditionError(f"cookie array shape {base.shape} does not match window and M")
        L = self.distribution.max_jump
        if base.size and (base.min() < -L or base.max() > L):
            raise PreconditionError("cookie values must lie in [-L, L]")
        base.setflags(write=False)
        object.__setattr__(self, "base", base)
        patches = {int(z): tuple(int(c) for c in s) for z, s in self.patches.items()}
        for z, s in patches.items():
            self._validate_stack(z, s)
        object.__setattr__(self, "patches", MappingProxyType(patches))
        eff = base.copy()
        for z, s in patches.items():
            eff[z - self.lo] = s
        eff.setflags(write=False)
        object.__setattr__(self, "_cookies", eff)

    def _validate_stack(self, z, stack):
        L = self.distribution.max_jump
        if not self.lo <= z <= self.hi:
            raise OutOfWindowError(z, self.window)
        if len(stack) != self.M:
            raise PreconditionError(f"stack at {z} has {len(stack)} cookies, expected M={self.M}")
        for c in stack:
            if not -L <= c <= L:
                raise PreconditionError(f"cookie {c} at site {z} outside [-{L}, {L}]")

    @property
    def L(self) -> int:
        return self.distribution.max_jump

    @property
    def window(self) -> tuple:
        return (self.lo, self.hi)

    @property
    def cookies(self) -> np.ndarray:
        """Effective ``(hi-lo+1, M)`` cookie array with patches applied (read-only)."""
        return self._cookies

    def contains(self, z: int) -> bool:
        return self.lo <= z <= self.hi

    def cookie(self, j: int, z: int) -> int:
        if not self.lo <= z <= self.hi:
            raise OutOfWindowError(z, self.window)
        if j < 0:
            raise PreconditionError(f"negative stack index {j}")
        return int(self._cookies[z - self.lo, min(j, self.M - 1)])

    def stack(self, z: int) -> tuple:
        if not self.lo <= z <= self.hi:
            raise OutOfWindowError(z, self.window)
        return tuple(int(c) for c in self._cookies[z - self.lo])

    def apply_patch(self, site: int, stack: Sequence[int]) -> "Environment":
        stack = tuple(int(c) for c in stack)
        self._validate_stack(int(site), stack)
        patches = dict(self.patches)
        patches[int(site)] = stack
        return self._replace(patches=patches)

    def with_patches(self, patches: Mapping[int, Sequence[int]]) -> "Environment":
        merged = dict(self.patches)
        for z, s in patches.items():
            s = tuple(int(c) for c in s)
            self._validate_stack(int(z), s)
            merged[int(z)] = s
        return self._replace(patches=merged)

    def _replace(self, **changes) -> "Environment":
        kw = dict(
            distribution=self.distribution,
            M=self.M,
            lo=self.lo,
            hi=self.hi,
            master_seed=self.master_seed,
            base=self.base,
            patches=self.patches,
            sampled=self.sampled,
        )
        kw.update(changes)
        return Environment(**kw)

    def same_cookies(self, other: "Environment") -> bool:
        return (
            self.L == other.L
            and self.M == other.M
            and self.window == other.window
            and np.array_equal(self._cookies, other._cookies)
        )

    def diff_sites(self, other: "Environment") -> list:
        """Sites whose stacks differ between two environments on the same window."""
        if self.window != other.window or self.M != other.M:
            raise PreconditionError("environments have different windows or stack heights")
        rows = np.nonzero(np.any(self._cookies != other._cookies, axis=1))[0]
        return [int(r) + self.lo for r in rows]

    def __eq__(self, other):
        if not isinstance(other, Environment):
            return NotImplemented
        return self.same_cookies(other)

    __hash__ = None


def _materialize(dist, M, seed, lo, hi):
    n = (hi - lo + 1) * M
    if n > MAX_COOKIES:
        raise WindowTooLarge(n, MAX_COOKIES)
    out = np.empty((hi - lo + 1, M), dtype=np.int64)
    _rng.fill_cookies(_rng.as_seed(seed), lo, hi, M, dist.cdf, dist.max_jump, out)
    return out


def sample_environment(
    dist: CookieDistribution,
    M: int,
    master_seed: int,
    window: tuple,
    patches: Optional[Mapping[int, Sequence[int]]] = None,
) -> Environment:
    """Draw i.i.d. cookies on ``window``.

    The cookie at ``(j, z)`` depends only on ``(master_seed, j, z)``, so a
    larger window with the same seed agrees with a smaller one on the overlap.
    """
    if M < 1:
        raise PreconditionError(f"M must be at least 1, got {M}")
    lo, hi = _check_window(window)
    base = _materialize(dist, M, master_seed, lo, hi)
    return Environment(dist, int(M), lo, hi, int(master_seed), base, dict(patches or {}))


def from_cookies(
    dist: CookieDistribution,
    lo: int,
    cookies,
    master_seed: int = 0,
) -> Environment:
    """Wrap an explicit ``(sites, M)`` array as an environment starting at ``lo``."""
    arr = np.asarray(cookies, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise PreconditionError("cookie array must have shape (sites, M)")
    return Environment(dist, arr.shape[1], int(lo), int(lo) + arr.shape[0] - 1, int(master_seed), arr, {}, False)


def cookie(env: Environment, j: int, z: int) -> int:
    return env.cookie(j, z)


def apply_patch(env: Environment, site: int, stack: Sequence[int]) -> Environment:
    return env.apply_patch(site, stack)


def resample(env: Environment, window: tuple) -> Environment:
    """Re-draw ``env`` on a new window, keeping seed and in-window patches."""
    if not env.sampled:
        raise PreconditionError("only sampled environments can be re-drawn on a new window")
    lo, hi = _check_window(window)
    patches = {z: s for z, s in env.patches.items() if lo <= z <= hi}
    return sample_environment(env.distribution, env.M, env.master_seed, (lo, hi), patches)


# -- text format ---------------------------------------------------------------

def header_line(L, M, seed, lo, hi) -> str:
    return f"DWERE L={L} M={M} seed={seed} window={lo}:{hi}"


def dumps(env: Environment) -> str:
    lines = [header_line(env.L, env.M, env.master_seed, env.lo, env.hi)]
    if not env.distribution.is_uniform():
        lines.append("# weights=" + ",".join(repr(w) for w in env.distribution.weights))
    for z in range(env.lo, env.hi + 1):
        lines.append(" ".join([str(z)] + [str(int(c)) for c in env.cookies[z - env.lo]]))
    return "\n".join(lines) + "\n"


def parse_header(line: str) -> dict:
    parts = line.split()
    if not parts or parts[0] != "DWERE":
        raise PreconditionError(f"not a DWERE header: {line!r}")
    fields = dict(p.split("=", 1) for p in parts[1:])
    try:
        lo, hi = fields["window"].split(":")
        return dict(L=int(fields["L"]), M=int(fields["M"]), seed=int(fields["seed"]), lo=int(lo), hi=int(hi))
    except (KeyError, ValueError) as exc:
        raise PreconditionError(f"malformed DWERE header: {line!r}") from exc


def loads(text: str, dist: Optional[CookieDistribution] = None) -> Environment:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise PreconditionError("empty environment file")
    head = parse_header(lines[0])
    rows = {}
    weights = None
    for ln in lines[1:]:
        if ln.startswith("#"):
            body = ln[1:].strip()
            if body.startswith("weights="):
                weights = [float(x) for x in body[len("weights="):].split(",")]
            continue
        vals = [int(x) for x in ln.split()]
        if len(vals) != head["M"] + 1:
            raise PreconditionError(f"expected {head['M'] + 1} integers per line, got {ln!r}")
        rows[vals[0]] = vals[1:]
    if dist is None:
        dist = make_distribution(head["L"], weights) if weights else uniform(head["L"])
    elif dist.max_jump != head["L"]:
        raise PreconditionError("distribution L does not match file header")
    lo, hi = head["lo"], head["hi"]
    missing = [z for z in range(lo, hi + 1) if z not in rows]
    if missing:
        raise PreconditionError(f"environment file is missing sites, first is {missing[0]}")
    arr = np.array([rows[z] for z in range(lo, hi + 1)], dtype=np.int64)
    env = from_cookies(dist, lo, arr, head["seed"])
    return env


def save(env: Environment, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(env))


def load(path, dist: Optional[CookieDistribution] = None) -> Environment:
    with open(path) as fh:
        return loads(fh.read(), dist)
