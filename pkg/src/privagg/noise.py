"""Privacy noise processes.

The main scheme is decaying zero-sum noise: each node draws a residual
delta_k inside a geometrically shrinking interval and broadcasts the
difference theta_k = delta_k - delta_{k-1}, so every truncated sum of
theta telescopes to the current residual. The residual retained after a
step is the float round-trip value fl(delta_{k-1} + theta_k); that makes
the telescoping identity hold bit-for-bit when the recorded theta values
are summed sequentially, not just in exact arithmetic.

Draw intervals are shrunk by DRAW_MARGIN so the float residual (and the
reconstruction error of the full-neighborhood attack) stays strictly
inside the analytic envelope (alpha/2)*rho**(k+1).

With h >= 2 the rounds are split round-robin into h independent chains;
each chain runs its own telescoping residual with the envelope indexed by
its inner counter, so the zero-sum and decay conditions hold per chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DRAW_MARGIN = 1.0 - 2.0**-20

SCHEMES = ("zero_sum", "independent_decaying", "gaussian_constant", "zero")
DISTRIBUTIONS = ("uniform", "truncated_gaussian")

# Truncation point (in standard deviations) of the truncated-gaussian draw;
# a draw is the conditioned z rescaled so the support matches the uniform one.
TRUNC_SIGMAS = 2.0

_CHUNK = 512


@dataclass(frozen=True)
class NoiseParams:
    """Parameters of a noise process.

    alpha scales the magnitude, rho in [0,1) the geometric decay, h >= 1 the
    number of round-robin sub-chains (1 = plain scheme). variance is used
    only by the gaussian_constant baseline.
    """

    alpha: float = 1.0
    rho: float = 0.9
    h: int = 1
    distribution: str = "uniform"
    seed: int = 0
    variance: float = 1.0

    def __post_init__(self) -> None:
        if not self.alpha > 0.0:
            raise ValueError("alpha must be > 0")
        if not (0.0 <= self.rho < 1.0):
            raise ValueError("rho must be in [0,1)")
        if self.h < 1:
            raise ValueError("h must be >= 1")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if not self.variance > 0.0:
            raise ValueError("variance must be > 0")


def node_stream(seed: int, node: int) -> np.random.Generator:
    """Independent per-node stream derived from (master seed, node id)."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(node,)))
    )


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic child seed for (seed, key); keeps all entropy explicit."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


class RawStream:
    """Buffered raw draws from one generator.

    Scalar consumers pop chunked buffers; block consumers read whole arrays.
    Both orderings yield the same value sequence because numpy fills uniform
    and normal arrays element-sequentially from the bit stream (covered by a
    regression test).
    """

    def __init__(self, gen: np.random.Generator):
        self._gen = gen
        self._uni: list[float] = []
        self._norm: list[float] = []

    def next_uniform(self) -> float:
        if not self._uni:
            self._uni = self._gen.uniform(-1.0, 1.0, _CHUNK).tolist()[::-1]
        return self._uni.pop()

    def uniform_block(self, count: int) -> np.ndarray:
        if self._uni:
            raise RuntimeError("mixing block and scalar uniform reads")
        return self._gen.uniform(-1.0, 1.0, count)

    def normal_block(self, count: int) -> np.ndarray:
        if self._norm:
            raise RuntimeError("mixing block and scalar normal reads")
        return self._gen.standard_normal(count)

    def next_normal(self) -> float:
        if not self._norm:
            self._norm = self._gen.standard_normal(_CHUNK).tolist()[::-1]
        return self._norm.pop()

    def next_unit(self, distribution: str) -> float:
        """One raw draw on [-1, 1] per the configured distribution."""
        if distribution == "uniform":
            return self.next_uniform()
        z = self.next_normal()
        while abs(z) > TRUNC_SIGMAS:
            z = self.next_normal()
        return z / TRUNC_SIGMAS


def _envelope(params: NoiseParams, inner: int) -> float:
    """Residual envelope (alpha/2)*rho**(inner+1) for a chain's inner index."""
    return 0.5 * params.alpha * params.rho ** (inner + 1)


class ZeroSumNoise:
    """Telescoping zero-sum noise for one node (h >= 1 chains, round-robin).

    sample(k) must be called with consecutive k starting at 0. The running
    per-chain sum of returned values equals the chain residual bit-for-bit.
    """

    def __init__(self, params: NoiseParams, node: int, stream: RawStream | None = None):
        self.params = params
        self.node = node
        self._stream = stream or RawStream(node_stream(params.seed, node))
        self._delta = [0.0] * params.h
        self._cum = [0.0] * params.h
        self._next_k = 0

    @property
    def next_k(self) -> int:
        return self._next_k

    @property
    def chain_residuals(self) -> tuple[float, ...]:
        return tuple(self._delta)

    @property
    def chain_cumulative(self) -> tuple[float, ...]:
        return tuple(self._cum)

    def sample(self, k: int) -> float:
        if k != self._next_k:
            raise ValueError(f"out-of-order sample: expected k={self._next_k}, got {k}")
        self._next_k += 1
        p = self.params
        chain, inner = k % p.h, k // p.h
        scale = _envelope(p, inner) * DRAW_MARGIN
        draw = self._stream.next_unit(p.distribution) * scale
        if inner == 0:
            theta = draw
            self._delta[chain] = draw
        else:
            theta = draw - self._delta[chain]
            new = self._delta[chain] + theta
            if abs(new) > _envelope(p, inner):  # float guard; margin makes this unreachable
                theta = -self._delta[chain]
                new = self._delta[chain] + theta
            self._delta[chain] = new
        self._cum[chain] = self._cum[chain] + theta
        return theta


class IndependentDecayingNoise:
    """Baseline: independent uniform draws on [-(alpha/2)rho^k, +(alpha/2)rho^k].

    Decays like the zero-sum scheme but almost surely violates the zero-sum
    condition, biasing the consensus limit by the total injected noise / n.
    """

    def __init__(self, params: NoiseParams, node: int, stream: RawStream | None = None):
        self.params = params
        self._stream = stream or RawStream(node_stream(params.seed, node))
        self._next_k = 0

    def sample(self, k: int) -> float:
        if k != self._next_k:
            raise ValueError(f"out-of-order sample: expected k={self._next_k}, got {k}")
        self._next_k += 1
        scale = 0.5 * self.params.alpha * self.params.rho**k * DRAW_MARGIN
        return self._stream.next_uniform() * scale


class ConstantGaussianNoise:
    """Baseline: i.i.d. normal noise with fixed variance (no decay)."""

    def __init__(self, params: NoiseParams, node: int, stream: RawStream | None = None):
        self._std = math.sqrt(params.variance)
        self._stream = stream or RawStream(node_stream(params.seed, node))
        self._next_k = 0

    def sample(self, k: int) -> float:
        if k != self._next_k:
            raise ValueError(f"out-of-order sample: expected k={self._next_k}, got {k}")
        self._next_k += 1
        return self._std * self._stream.next_normal()


class ZeroNoise:
    """Baseline: no noise; classical exact consensus."""

    def __init__(self, params: NoiseParams, node: int, stream: RawStream | None = None):
        self._next_k = 0

    def sample(self, k: int) -> float:
        if k != self._next_k:
            raise ValueError(f"out-of-order sample: expected k={self._next_k}, got {k}")
        self._next_k += 1
        return 0.0


_SCHEME_CLASSES = {
    "zero_sum": ZeroSumNoise,
    "independent_decaying": IndependentDecayingNoise,
    "gaussian_constant": ConstantGaussianNoise,
    "zero": ZeroNoise,
}


def make_noise(scheme: str, params: NoiseParams, node: int, stream: RawStream | None = None):
    """Scalar noise process for one node; a shared stream may be injected
    (attack trials draw all of a trial's randomness from one stream)."""
    try:
        cls = _SCHEME_CLASSES[scheme]
    except KeyError:
        raise ValueError(f"unknown noise scheme {scheme!r}") from None
    return cls(params, node, stream)


class NoiseBank:
    """All nodes' noise for one run, advanced one round at a time.

    Produces, lane by lane, the same value sequence as the scalar processes
    for the same (seed, node) pairs. The uniform distribution pre-draws each
    node's raw stream as one block; the truncated gaussian needs per-draw
    rejection and is gathered scalar-wise.
    """

    def __init__(self, scheme: str, params: NoiseParams, n: int, max_rounds: int):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown noise scheme {scheme!r}")
        self.scheme = scheme
        self.params = params
        self.n = n
        self._next_k = 0
        self._raw: np.ndarray | None = None
        self._streams: list[RawStream] = []
        if scheme == "zero":
            return
        self._streams = [RawStream(node_stream(params.seed, i)) for i in range(n)]
        if scheme == "zero_sum":
            self._delta = np.zeros((params.h, n))
        # independent_decaying is uniform by definition; zero_sum with the
        # truncated gaussian needs per-draw rejection, so no block there.
        if scheme == "gaussian_constant":
            self._raw = np.column_stack([s.normal_block(max_rounds) for s in self._streams])
        elif scheme == "independent_decaying" or params.distribution == "uniform":
            self._raw = np.column_stack([s.uniform_block(max_rounds) for s in self._streams])

    def _raw_row(self, k: int) -> np.ndarray:
        if self._raw is not None:
            return self._raw[k]
        return np.array(
            [s.next_unit(self.params.distribution) for s in self._streams]
        )

    def round_values(self, k: int) -> np.ndarray:
        """theta for every node at round k (full width; callers slice survivors)."""
        if k != self._next_k:
            raise ValueError(f"out-of-order round: expected k={self._next_k}, got {k}")
        self._next_k += 1
        p = self.params
        if self.scheme == "zero":
            return np.zeros(self.n)
        if self.scheme == "gaussian_constant":
            return math.sqrt(p.variance) * self._raw_row(k)
        if self.scheme == "independent_decaying":
            scale = 0.5 * p.alpha * p.rho**k * DRAW_MARGIN
            return self._raw_row(k) * scale
        chain, inner = k % p.h, k // p.h
        draw = self._raw_row(k) * (_envelope(p, inner) * DRAW_MARGIN)
        if inner == 0:
            self._delta[chain] = draw
            return draw
        delta = self._delta[chain]
        theta = draw - delta
        new = delta + theta
        bad = np.abs(new) > _envelope(p, inner)
        if bad.any():  # float guard; margin makes this unreachable
            theta = np.where(bad, -delta, theta)
            new = delta + theta
        self._delta[chain] = new
        return theta


def initial_draw_block(params: NoiseParams, rng: np.random.Generator, count: int) -> np.ndarray:
    """count i.i.d. draws with the law of the round-0 noise (attack trials)."""
    scale = _envelope(params, 0) * DRAW_MARGIN
    if params.distribution == "uniform":
        return rng.uniform(-1.0, 1.0, count) * scale
    out = rng.standard_normal(count)
    bad = np.abs(out) > TRUNC_SIGMAS
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > TRUNC_SIGMAS
    return out / TRUNC_SIGMAS * scale
