"""Two-sided stationary mark sequences with index-addressable randomness.

Every customer n (any integer, negative allowed) carries a triple
(xi, sigma, dpat): interarrival time to the next customer, requested service
duration, and initial patience.  A MarkSource produces these triples as a
pure function of (seed, stream, index) via the counter-based Philox
generator: index n consumes exactly one 4x64-bit Philox block, so backward
constructions can address arbitrarily remote past indices without stored
history, and shifting the whole sequence is just an index offset.

Block layout per index: word 0 drives the modulating chain (markov kind),
words 1..3 drive xi, sigma, dpat through inverse CDFs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

_MASK64 = (1 << 64) - 1
_COUNTER_MOD = 1 << 256
_U53 = 2.0 ** -53
# Probability of no chain regeneration over this many steps is (1-delta)^n;
# hitting the guard means the transition matrix is effectively degenerate.
_MAX_CHAIN_LOOKBACK = 1 << 20


class ConfigError(ValueError):
    """Invalid source or distribution parameters."""


@dataclass(frozen=True)
class Deterministic:
    """Point mass at a fixed nonnegative value."""

    value: float

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0.0):
            raise ConfigError(f"deterministic value must be finite and >= 0, got {self.value}")

    @property
    def mean(self) -> float:
        return self.value

    @property
    def upper_bound(self) -> float:
        return self.value

    def quantile(self, u: np.ndarray) -> np.ndarray:
        return np.full_like(u, self.value)


@dataclass(frozen=True)
class Uniform:
    """Uniform on [low, high]."""

    low: float
    high: float

    def __post_init__(self):
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise ConfigError("uniform bounds must be finite")
        if not (0.0 <= self.low <= self.high):
            raise ConfigError(f"uniform requires 0 <= low <= high, got [{self.low}, {self.high}]")

    @property
    def mean(self) -> float:
        return 0.5 * (self.low + self.high)

    @property
    def upper_bound(self) -> float:
        return self.high

    def quantile(self, u: np.ndarray) -> np.ndarray:
        return self.low + (self.high - self.low) * u


@dataclass(frozen=True)
class Exponential:
    """Exponential with the given rate; unbounded support."""

    rate: float

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0.0):
            raise ConfigError(f"exponential rate must be finite and > 0, got {self.rate}")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def upper_bound(self) -> None:
        return None

    def quantile(self, u: np.ndarray) -> np.ndarray:
        return -np.log1p(-u) / self.rate


@dataclass(frozen=True)
class TruncatedExponential:
    """Exponential(rate) conditioned on being <= cap; support [0, cap]."""

    rate: float
    cap: float

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0.0):
            raise ConfigError(f"truncated-exponential rate must be > 0, got {self.rate}")
        if not (math.isfinite(self.cap) and self.cap > 0.0):
            raise ConfigError(f"truncated-exponential cap must be > 0, got {self.cap}")

    @property
    def mean(self) -> float:
        # E[X | X <= cap] for X ~ Exp(rate)
        rc = self.rate * self.cap
        return 1.0 / self.rate - self.cap * math.exp(-rc) / (-math.expm1(-rc))

    @property
    def upper_bound(self) -> float:
        return self.cap

    def quantile(self, u: np.ndarray) -> np.ndarray:
        total = -math.expm1(-self.rate * self.cap)
        return -np.log1p(-u * total) / self.rate


@dataclass(frozen=True)
class Discrete:
    """Finite support distribution given by atoms and probabilities."""

    atoms: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.atoms) == 0 or len(self.atoms) != len(self.probs):
            raise ConfigError("discrete needs matching nonempty atoms and probs")
        if any(not math.isfinite(a) or a < 0.0 for a in self.atoms):
            raise ConfigError("discrete atoms must be finite and >= 0")
        if any(p < 0.0 for p in self.probs):
            raise ConfigError("discrete probs must be >= 0")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise ConfigError(f"discrete probs must sum to 1, got {sum(self.probs)}")

    @property
    def mean(self) -> float:
        return math.fsum(a * p for a, p in zip(self.atoms, self.probs))

    @property
    def upper_bound(self) -> float:
        return max(a for a, p in zip(self.atoms, self.probs) if p > 0.0)

    def quantile(self, u: np.ndarray) -> np.ndarray:
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, u, side="right")
        return np.asarray(self.atoms, dtype=float)[idx]


Marginal = Union[Deterministic, Uniform, Exponential, TruncatedExponential, Discrete]


def marginal_from_config(cfg: dict) -> Marginal:
    """Build a marginal from its JSON description ({"dist": ..., params})."""
    if not isinstance(cfg, dict) or "dist" not in cfg:
        raise ConfigError(f"marginal config must be a dict with a 'dist' key, got {cfg!r}")
    kind = cfg["dist"]
    try:
        if kind == "deterministic":
            return Deterministic(float(cfg["value"]))
        if kind == "uniform":
            return Uniform(float(cfg["low"]), float(cfg["high"]))
        if kind == "exponential":
            return Exponential(float(cfg["rate"]))
        if kind == "truncated-exponential":
            return TruncatedExponential(float(cfg["rate"]), float(cfg["cap"]))
        if kind == "discrete":
            return Discrete(tuple(float(a) for a in cfg["atoms"]),
                            tuple(float(p) for p in cfg["probs"]))
    except KeyError as exc:
        raise ConfigError(f"marginal '{kind}' is missing parameter {exc}") from exc
    raise ConfigError(f"unknown marginal dist {kind!r}")


@dataclass(frozen=True)
class MarkTriple:
    """One customer's marks: interarrival xi, service sigma, patience dpat."""

    xi: float
    sigma: float
    dpat: float

    def __post_init__(self):
        for name in ("xi", "sigma", "dpat"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ConfigError(f"mark {name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class StateMarginals:
    """Per-state marginals of the three marks."""

    xi: Marginal
    sigma: Marginal
    dpat: Marginal


def _bound_sum(a: float | None, b: float | None) -> float | None:
    if a is None or b is None:
        return None
    return a + b


def _bound_min(a: float | None, b: float | None) -> float | None:
    # min(X, Y) is a.s. bounded as soon as either factor is
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def _bound_max(bounds: list[float | None]) -> float | None:
    out = 0.0
    for b in bounds:
        if b is None:
            return None
        out = max(out, b)
    return out


@dataclass(frozen=True)
class MarkSource:
    """Two-sided stationary ergodic sequence of mark triples.

    kind "deterministic" and "iid" use states[0]; kind "markov" modulates the
    per-state marginals by a finite ergodic chain.  The chain state at index
    n is resolved by scanning backwards to the most recent regeneration of a
    Doeblin split of the transition matrix, which makes the realized sequence
    exactly stationary and keeps mark_at a pure function of (seed, stream, n)
    regardless of the order indices are requested in.

    Instances are immutable; the chain-state cache only memoizes pure values
    and is safe to share across threads.
    """

    kind: str
    states: tuple[StateMarginals, ...]
    transition: tuple[tuple[float, ...], ...] | None
    seed: int
    stream: int = 0
    origin: int = 0
    alpha_bound: float | None = None
    _chain_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("deterministic", "iid", "markov"):
            raise ConfigError(f"unknown source kind {self.kind!r}")
        if not self.states:
            raise ConfigError("source needs at least one state")
        if self.kind in ("deterministic", "iid"):
            if len(self.states) != 1 or self.transition is not None:
                raise ConfigError(f"{self.kind} source takes exactly one state and no transition matrix")
            if self.kind == "deterministic":
                for m in (self.states[0].xi, self.states[0].sigma, self.states[0].dpat):
                    if not isinstance(m, Deterministic):
                        raise ConfigError("deterministic source requires deterministic marginals")
        else:
            self._validate_transition()
        if not self.mean_xi > 0.0:
            raise ConfigError("source must have E[xi] > 0")
        if self.alpha_bound is not None:
            derived = self.alpha_bound_for("sigma_plus_d")
            if derived is None:
                raise ConfigError(
                    "alpha_bound declared but sigma+dpat has unbounded support; "
                    "use bounded marginals (uniform, truncated-exponential, discrete, deterministic)")
            if self.alpha_bound < derived - 1e-12:
                raise ConfigError(
                    f"declared alpha_bound {self.alpha_bound} is below the support bound {derived}")

    def _validate_transition(self):
        p = self.transition
        k = len(self.states)
        if p is None or len(p) != k or any(len(row) != k for row in p):
            raise ConfigError(f"transition matrix must be {k}x{k}")
        for row in p:
            if any(q < 0.0 for q in row):
                raise ConfigError("transition probabilities must be >= 0")
            if abs(sum(row) - 1.0) > 1e-9:
                raise ConfigError("transition rows must sum to 1")
        if self._doeblin_delta <= 0.0:
            raise ConfigError(
                "markov source needs a one-step minorization: some state must be "
                "reachable from every state in one step (a strictly positive column)")

    # -- chain machinery (markov kind) ------------------------------------

    @cached_property
    def _doeblin_delta(self) -> float:
        p = np.asarray(self.transition, dtype=float)
        return float(np.min(p, axis=0).sum())

    @cached_property
    def _doeblin_parts(self):
        """(delta, cum nu, cum residual rows) of the split P = delta*nu + (1-delta)*Q."""
        p = np.asarray(self.transition, dtype=float)
        col_min = np.min(p, axis=0)
        delta = float(col_min.sum())
        nu = col_min / delta
        if delta < 1.0:
            q = (p - col_min[None, :]) / (1.0 - delta)
        else:
            q = np.full_like(p, 1.0 / p.shape[0])
        nu_cum = np.cumsum(nu)
        nu_cum[-1] = 1.0
        q_cum = np.cumsum(q, axis=1)
        q_cum[:, -1] = 1.0
        return delta, nu_cum, q_cum

    @cached_property
    def stationary_state_probs(self) -> np.ndarray:
        """Stationary law of the modulating chain (single state for iid)."""
        if self.kind != "markov":
            return np.ones(1)
        p = np.asarray(self.transition, dtype=float)
        k = p.shape[0]
        a = np.vstack([p.T - np.eye(k), np.ones((1, k))])
        b = np.zeros(k + 1)
        b[-1] = 1.0
        pi, *_ = np.linalg.lstsq(a, b, rcond=None)
        pi = np.clip(pi, 0.0, None)
        return pi / pi.sum()

    def _chain_u(self, g: int) -> float:
        return float((self._blocks(g, 1)[0, 0] >> np.uint64(11)) * _U53)

    def _state_at(self, g: int) -> int:
        """Chain state at global index g (pure in (seed, stream, g))."""
        cache = self._chain_cache
        s = cache.get(g)
        if s is not None:
            return s
        delta, nu_cum, q_cum = self._doeblin_parts
        pending: list[tuple[int, float]] = []
        j = g
        while True:
            s = cache.get(j)
            if s is not None:
                break
            u = self._chain_u(j)
            if u < delta:
                s = int(np.searchsorted(nu_cum, u / delta, side="right"))
                cache[j] = s
                break
            pending.append((j, u))
            j -= 1
            if g - j > _MAX_CHAIN_LOOKBACK:
                raise RuntimeError("no chain regeneration found; transition matrix is near-degenerate")
        for idx, u in reversed(pending):
            s = int(np.searchsorted(q_cum[s], (u - delta) / (1.0 - delta), side="right"))
            cache[idx] = s
        return s

    def _states_for(self, g0: int, u0: np.ndarray) -> np.ndarray:
        delta, nu_cum, q_cum = self._doeblin_parts
        cache = self._chain_cache
        prev = self._state_at(g0 - 1)
        out = np.empty(len(u0), dtype=np.intp)
        for k, u in enumerate(u0.tolist()):
            if u < delta:
                s = int(np.searchsorted(nu_cum, u / delta, side="right"))
            else:
                s = int(np.searchsorted(q_cum[prev], (u - delta) / (1.0 - delta), side="right"))
            cache[g0 + k] = s
            out[k] = s
            prev = s
        return out

    # -- raw generation ----------------------------------------------------

    def _blocks(self, g0: int, count: int) -> np.ndarray:
        key = ((self.seed & _MASK64) << 64) | (self.stream & _MASK64)
        bg = np.random.Philox(key=key, counter=g0 % _COUNTER_MOD)
        gen = np.random.Generator(bg)
        return gen.integers(0, 1 << 64, size=4 * count, dtype=np.uint64).reshape(count, 4)

    def window_arrays(self, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Arrays (xi, sigma, dpat) for indices lo..hi inclusive."""
        if lo > hi:
            raise ValueError(f"window requires lo <= hi, got [{lo}, {hi}]")
        g0 = self.origin + lo
        count = hi - lo + 1
        u = (self._blocks(g0, count) >> np.uint64(11)) * _U53
        if self.kind == "markov":
            state = self._states_for(g0, u[:, 0])
        else:
            state = np.zeros(count, dtype=np.intp)
        xi = np.empty(count)
        sigma = np.empty(count)
        dpat = np.empty(count)
        for s in np.unique(state):
            m = state == s
            sm = self.states[int(s)]
            xi[m] = sm.xi.quantile(u[m, 1])
            sigma[m] = sm.sigma.quantile(u[m, 2])
            dpat[m] = sm.dpat.quantile(u[m, 3])
        return xi, sigma, dpat

    # -- public mark access --------------------------------------------------

    def mark_at(self, n: int) -> MarkTriple:
        """Mark triple of customer n; pure in (seed, stream, n)."""
        xi, sigma, dpat = self.window_arrays(n, n)
        return MarkTriple(float(xi[0]), float(sigma[0]), float(dpat[0]))

    def window(self, lo: int, hi: int) -> list[MarkTriple]:
        """Mark triples for indices lo..hi inclusive."""
        xi, sigma, dpat = self.window_arrays(lo, hi)
        return [MarkTriple(float(x), float(s), float(d)) for x, s, d in zip(xi, sigma, dpat)]

    def shift(self, k: int) -> "MarkSource":
        """Source advanced by k customers: mark_at(shifted, n) == mark_at(self, n+k)."""
        new = MarkSource(kind=self.kind, states=self.states, transition=self.transition,
                         seed=self.seed, stream=self.stream, origin=self.origin + k,
                         alpha_bound=self.alpha_bound)
        # same (seed, stream) means the same chain realization; share the memo
        object.__setattr__(new, "_chain_cache", self._chain_cache)
        return new

    def substream(self, r: int) -> "MarkSource":
        """Independent replica source on stream+r (fresh chain realization)."""
        return MarkSource(kind=self.kind, states=self.states, transition=self.transition,
                          seed=self.seed, stream=(self.stream + r) & _MASK64,
                          origin=self.origin, alpha_bound=self.alpha_bound)

    # -- derived scalar facts -------------------------------------------------

    @property
    def is_iid(self) -> bool:
        return self.kind in ("deterministic", "iid")

    @cached_property
    def mean_xi(self) -> float:
        pi = self.stationary_state_probs
        return float(sum(p * st.xi.mean for p, st in zip(pi, self.states)))

    def alpha_bound_for(self, alpha_kind: str) -> float | None:
        """A.s. upper bound on the chosen alpha mark, or None if unbounded."""
        per_state: list[float | None] = []
        for st in self.states:
            sb, db = st.sigma.upper_bound, st.dpat.upper_bound
            if alpha_kind == "sigma_plus_d":
                per_state.append(_bound_sum(sb, db))
            elif alpha_kind == "sigma_min_d":
                per_state.append(_bound_min(sb, db))
            elif alpha_kind == "d_only":
                per_state.append(db)
            else:
                raise ValueError(f"no derived bound for alpha kind {alpha_kind!r}")
        return _bound_max(per_state)


def deterministic_source(xi: float, sigma: float, dpat: float,
                         seed: int = 0, stream: int = 0) -> MarkSource:
    """All customers share the constant triple (xi, sigma, dpat)."""
    st = StateMarginals(Deterministic(xi), Deterministic(sigma), Deterministic(dpat))
    return MarkSource(kind="deterministic", states=(st,), transition=None,
                      seed=seed, stream=stream)


def iid_source(xi: Marginal, sigma: Marginal, dpat: Marginal,
               seed: int, stream: int = 0, alpha_bound: float | None = None) -> MarkSource:
    """Independent marks drawn from the three marginals at every index."""
    return MarkSource(kind="iid", states=(StateMarginals(xi, sigma, dpat),), transition=None,
                      seed=seed, stream=stream, alpha_bound=alpha_bound)


def markov_source(transition, states: tuple[StateMarginals, ...],
                  seed: int, stream: int = 0, alpha_bound: float | None = None) -> MarkSource:
    """Marks modulated by a finite ergodic chain in its stationary regime."""
    trans = tuple(tuple(float(q) for q in row) for row in transition)
    return MarkSource(kind="markov", states=tuple(states), transition=trans,
                      seed=seed, stream=stream, alpha_bound=alpha_bound)


def source_from_config(cfg: dict) -> MarkSource:
    """Build a MarkSource from its JSON description."""
    if not isinstance(cfg, dict):
        raise ConfigError("source config must be a dict")
    kind = cfg.get("kind")
    seed = int(cfg.get("seed", 0))
    stream = int(cfg.get("stream", 0))
    alpha_bound = cfg.get("alpha_bound")
    alpha_bound = None if alpha_bound is None else float(alpha_bound)
    if kind in ("deterministic", "iid"):
        missing = [k for k in ("xi", "sigma", "dpat") if k not in cfg]
        if missing:
            raise ConfigError(f"source config missing marginals: {missing}")
        xi = marginal_from_config(cfg["xi"])
        sigma = marginal_from_config(cfg["sigma"])
        dpat = marginal_from_config(cfg["dpat"])
        return MarkSource(kind=kind, states=(StateMarginals(xi, sigma, dpat),),
                          transition=None, seed=seed, stream=stream, alpha_bound=alpha_bound)
    if kind == "markov":
        if "transition" not in cfg or "states" not in cfg:
            raise ConfigError("markov source config needs 'transition' and 'states'")
        states = tuple(
            StateMarginals(marginal_from_config(s["xi"]),
                           marginal_from_config(s["sigma"]),
                           marginal_from_config(s["dpat"]))
            for s in cfg["states"])
        return markov_source(cfg["transition"], states, seed=seed, stream=stream,
                             alpha_bound=alpha_bound)
    raise ConfigError(f"unknown source kind {kind!r}")
