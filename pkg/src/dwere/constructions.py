"""Explicit environments realizing the configurations used in the proofs.

A :class:`PatchSet` pins cookies at a handful of sites.  Each entry is a
short stack spec ``(c_0, c_1, ..., c_r)`` read with the same clamping rule
as environments: layer ``j`` takes ``c_{min(j, r)}``.  ``None`` leaves that
layer to whatever the underlying environment holds, so ``(L, None)`` pins
only the top cookie and ``(0,)`` pins the whole stack to zero for any M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

from dwere.env import CookieDistribution, Environment, sample_environment, uniform
from dwere.errors import PreconditionError


@dataclass(frozen=True)
class PatchSet:
    entries: Mapping[int, tuple]
    provenance: str = ""

    def __post_init__(self):
        clean = {}
        for z, spec in self.entries.items():
            spec = tuple(None if c is None else int(c) for c in spec)
            if not spec:
                raise PreconditionError(f"empty stack spec at site {z}")
            clean[int(z)] = spec
        object.__setattr__(self, "entries", clean)

    @property
    def sites(self) -> list:
        return sorted(self.entries)

    def layer(self, z: int, j: int) -> Optional[int]:
        spec = self.entries[z]
        return spec[min(j, len(spec) - 1)]

    def constrained(self, M: int):
        """Yield ``(j, z, value)`` for every pinned cookie with ``j < M``."""
        for z in self.sites:
            for j in range(M):
                v = self.layer(z, j)
                if v is not None:
                    yield j, z, v

    def n_constrained(self, M: int) -> int:
        return sum(1 for _ in self.constrained(M))

    def probability(self, dist: CookieDistribution, M: int) -> float:
        """Probability under i.i.d. cookies that every pinned cookie takes its value."""
        return math.prod(dist.prob(v) for _, _, v in self.constrained(M))

    def probability_bound(self, dist: CookieDistribution, M: int) -> float:
        return dist.mu_min ** self.n_constrained(M)

    def max_abs_jump(self) -> int:
        vals = [abs(c) for s in self.entries.values() for c in s if c is not None]
        return max(vals, default=0)

    def stacks_for(self, env: Environment) -> Dict[int, tuple]:
        out = {}
        for z in self.sites:
            out[z] = tuple(
                env.cookie(j, z) if self.layer(z, j) is None else self.layer(z, j)
                for j in range(env.M)
            )
        return out

    def apply(self, env: Environment) -> Environment:
        if self.max_abs_jump() > env.L:
            raise PreconditionError(f"{self.provenance or 'patch'} needs jumps up to {self.max_abs_jump()}, L={env.L}")
        return env.with_patches(self.stacks_for(env))

    def merge(self, other: "PatchSet") -> "PatchSet":
        clash = set(self.entries) & set(other.entries)
        if clash:
            raise PreconditionError(f"patch sets overlap at sites {sorted(clash)}")
        return PatchSet({**self.entries, **other.entries}, f"{self.provenance}+{other.provenance}")

    def to_text(self, M: int) -> str:
        lines = [f"# {self.provenance}"]
        for z in self.sites:
            vals = ["*" if self.layer(z, j) is None else str(self.layer(z, j)) for j in range(M)]
            lines.append(" ".join([str(z)] + vals))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PatchSet":
        label = ""
        entries = {}
        for ln in text.splitlines():
            ln = ln.strip()
            if not ln:
                continue
            if ln.startswith("#"):
                label = label or ln[1:].strip()
                continue
            z, *vals = ln.split()
            entries[int(z)] = tuple(None if v == "*" else int(v) for v in vals)
        return cls(entries, label)


def k_returns_maps(k: int) -> Tuple[Dict[int, int], Dict[int, int]]:
    """The pair ``(f, g)`` on ``[-2k, 2k-1]``: ``g`` on first visits, ``f`` after.

    For ``k = 1`` the general table sends 0 to 1 and 1 straight back to 0,
    which loops through the origin; we use ``g(0) = -2`` and
    ``f(1) = g(1) = -2`` instead, which visits ``{-2, -1, 0, 1}`` and loops
    on ``{-1, 1}``.
    """
    if k < 1:
        raise PreconditionError(f"k must be at least 1, got {k}")
    f: Dict[int, int] = {}
    g: Dict[int, int] = {}
    for z in range(-2 * k, 0):
        if z % 2:
            f[z] = g[z] = 2
        else:
            f[z], g[z] = -2, 1
    for i in range(0, 2 * k - 2):
        g[i] = -2 if i % 2 == 0 else -1
        f[i] = -2 if i % 2 == 0 else 2
    f[2 * k - 1] = g[2 * k - 1] = -1
    f[2 * k - 2] = g[2 * k - 2] = 1
    if k == 1:
        f[0] = g[0] = -2
        f[1] = g[1] = -2
    return f, g


def k_returns_sequence(k: int, steps: int) -> list:
    """The deterministic sequence driven by ``(f, g)``, computed without environments."""
    f, g = k_returns_maps(k)
    seen = set()
    x = 0
    out = [0]
    for _ in range(steps):
        jump = f[x] if x in seen else g[x]
        seen.add(x)
        x += jump
        out.append(x)
    return out


def build_k_returns(k: int):
    """Return ``(f, g, patch)`` where the patch forces exactly ``k`` visits to 0.

    The patch pins layer 0 to ``g`` and every higher layer to ``f`` on
    ``[-2k, 2k-1]``, so it works for any ``M >= 2`` and needs ``L >= 2``.
    """
    f, g = k_returns_maps(k)
    patch = PatchSet({z: (g[z], f[z]) for z in f}, f"k-returns k={k}")
    return f, g, patch


def build_trap(interval_start: int, L: int) -> PatchSet:
    """Trapping configuration on ``[s, s+L-1]``: any walker entering it loops forever."""
    if L < 2:
        raise PreconditionError("the trapping configuration needs L >= 2")
    s = int(interval_start)
    entries = {s: (1,), s + 1: (-1,)}
    for x in range(2, L):
        entries[s + x] = (-x, None)
    return PatchSet(entries, f"trap start={s} L={L}")


def trap_probability_bound(dist: CookieDistribution, M: int) -> float:
    return dist.mu_min ** (2 * M + dist.max_jump - 2)


def build_blocker(x: int) -> PatchSet:
    """All-zero stack at ``x``: an absorbing site."""
    return PatchSet({int(x): (0,)}, f"blocker x={x}")


def build_blockers(lo: int, hi: int) -> PatchSet:
    return PatchSet({z: (0,) for z in range(int(lo), int(hi) + 1)}, f"blockers {lo}:{hi}")


def build_ballistic(n: int, L: int) -> PatchSet:
    """Top cookie ``L`` at ``0, L, ..., nL``; the walk is at ``(n+1)L`` at time ``n+1``."""
    if n < 0:
        raise PreconditionError("n must be nonnegative")
    return PatchSet({i * L: (L, None) for i in range(n + 1)}, f"ballistic n={n} L={L}")


EXAMPLE_TRAJECTORY = (0, -3, 0, 2, 0, 2, 3, 0, 2, 3, 5)

# Cookies at sites -3 and 3 are the ones forced by EXAMPLE_TRAJECTORY; the
# second cookie at -3 is never read and stays random.
EXAMPLE_PATCH = PatchSet(
    {0: (-3, 2), -3: (3, None), 2: (-2, 1), 3: (-3, 2)},
    "example L=3 M=2",
)


def example_environment(seed: int = 0, window=(-20, 20)) -> Environment:
    base = sample_environment(uniform(3), 2, seed, window)
    return EXAMPLE_PATCH.apply(base)
