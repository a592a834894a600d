"""The generic monotone recursion y -> [max(y, alpha) - beta]+.

alpha is a nonnegative functional of one customer's marks (sigma+dpat,
sigma^dpat, dpat alone, or a custom extractor) and beta is the interarrival
xi.  The stationary solution is the clipped backward supremum

    Y = [ sup_{j>=1} ( alpha_{-j} - sum_{i=1..j} beta_{-i} ) ]+

evaluated here either exactly, by cutting the tail once the cumulative beta
reaches an a.s. bound on alpha (which yields a finite zero certificate when
the value is 0), or approximately by truncating at a fixed depth.  Forward
iterates started from different states coalesce at the atom 0; coupling_time
detects that and checks absorption.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .estimation import Estimate, mc_aggregate
from .marks import MarkSource, MarkTriple

_CHUNK = 512


class CapabilityError(RuntimeError):
    """Exact mode requested without the capability it needs (an a.s. alpha bound)."""


class DepthExhaustedError(RuntimeError):
    """Exact evaluation did not terminate within max_depth."""


class RenovationNotFoundError(RuntimeError):
    """No certified zero epoch within the scanned range."""


@dataclass(frozen=True)
class RecursionSpec:
    """Choice of the dominating recursion: which mark functional plays alpha.

    beta is always the interarrival xi.  A custom extractor maps a MarkTriple
    to a nonnegative real; exact evaluation then needs custom_bound, an a.s.
    upper bound on its output.
    """

    alpha_kind: str  # "sigma_plus_d" | "sigma_min_d" | "d_only" | "custom"
    custom: Callable[[MarkTriple], float] | None = None
    custom_bound: float | None = None

    def __post_init__(self):
        if self.alpha_kind not in ("sigma_plus_d", "sigma_min_d", "d_only", "custom"):
            raise ValueError(f"unknown alpha kind {self.alpha_kind!r}")
        if (self.alpha_kind == "custom") != (self.custom is not None):
            raise ValueError("custom extractor is required exactly when alpha_kind='custom'")

    def alpha_of(self, mark: MarkTriple) -> float:
        if self.alpha_kind == "sigma_plus_d":
            return mark.sigma + mark.dpat
        if self.alpha_kind == "sigma_min_d":
            return min(mark.sigma, mark.dpat)
        if self.alpha_kind == "d_only":
            return mark.dpat
        v = float(self.custom(mark))
        if not (np.isfinite(v) and v >= 0.0):
            raise ValueError(f"custom alpha extractor returned {v}, must be finite and >= 0")
        return v

    def alpha_array(self, xi: np.ndarray, sigma: np.ndarray, dpat: np.ndarray) -> np.ndarray:
        if self.alpha_kind == "sigma_plus_d":
            return sigma + dpat
        if self.alpha_kind == "sigma_min_d":
            return np.minimum(sigma, dpat)
        if self.alpha_kind == "d_only":
            return dpat
        out = np.array([self.alpha_of(MarkTriple(x, s, d))
                        for x, s, d in zip(xi.tolist(), sigma.tolist(), dpat.tolist())])
        return out

    def bound_for(self, src: MarkSource) -> float | None:
        """A.s. upper bound on alpha under src, or None if unavailable."""
        if self.alpha_kind == "custom":
            return self.custom_bound
        return src.alpha_bound_for(self.alpha_kind)


SIGMA_PLUS_D = RecursionSpec("sigma_plus_d")
SIGMA_MIN_D = RecursionSpec("sigma_min_d")
D_ONLY = RecursionSpec("d_only")


@dataclass(frozen=True)
class ZeroCertificate:
    """Finite witness that the backward supremum at `epoch` is <= 0.

    Every checked term alpha_{epoch-j} - sum_{i<=j} beta_{epoch-i}, j <= depth,
    is <= 0, and the cumulative beta over the window reached the a.s. bound on
    alpha, so every unchecked tail term is <= residual_bound <= 0.
    """

    epoch: int
    depth: int
    residual_bound: float

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("certificate depth must be >= 1")
        if self.residual_bound > 0.0:
            raise ValueError("residual bound must be <= 0")


@dataclass(frozen=True)
class RecursionValue:
    """Value of the stationary recursion at one epoch."""

    value: float
    exact: bool
    truncation_depth: int | None = None
    certificate: ZeroCertificate | None = None

    def __post_init__(self):
        if not (np.isfinite(self.value) and self.value >= 0.0):
            raise ValueError(f"recursion value must be finite and >= 0, got {self.value}")


class MarkWindowCache:
    """Contiguous cache of mark arrays over a source, grown on demand.

    Renovation scans revisit overlapping backward windows; caching makes each
    additional lag amortized O(1) instead of regenerating marks per epoch.
    """

    def __init__(self, src: MarkSource):
        self.src = src
        self._lo = 0
        self._xi = np.empty(0)
        self._sigma = np.empty(0)
        self._dpat = np.empty(0)

    def range(self, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(xi, sigma, dpat) for indices lo..hi inclusive."""
        if self._xi.size == 0:
            span = max(hi - lo + 1, _CHUNK)
            self._lo = hi - span + 1
            self._xi, self._sigma, self._dpat = self.src.window_arrays(self._lo, hi)
        if lo < self._lo:
            new_lo = min(lo, self._lo - _CHUNK)
            xi, sg, dp = self.src.window_arrays(new_lo, self._lo - 1)
            self._xi = np.concatenate([xi, self._xi])
            self._sigma = np.concatenate([sg, self._sigma])
            self._dpat = np.concatenate([dp, self._dpat])
            self._lo = new_lo
        hi_cached = self._lo + self._xi.size - 1
        if hi > hi_cached:
            xi, sg, dp = self.src.window_arrays(hi_cached + 1, max(hi, hi_cached + _CHUNK))
            self._xi = np.concatenate([self._xi, xi])
            self._sigma = np.concatenate([self._sigma, sg])
            self._dpat = np.concatenate([self._dpat, dp])
        a = lo - self._lo
        b = hi - self._lo + 1
        return self._xi[a:b], self._sigma[a:b], self._dpat[a:b]


def step(y: float, mark: MarkTriple, spec: RecursionSpec) -> float:
    """One forward step [max(y, alpha) - beta]+; nondecreasing, 1-Lipschitz in y."""
    if y < 0.0:
        raise ValueError(f"state must be >= 0, got {y}")
    v = max(y, spec.alpha_of(mark)) - mark.xi
    return v if v > 0.0 else 0.0


def _lag_terms(spec: RecursionSpec, src: MarkSource, epoch: int, depth: int,
               cache: MarkWindowCache | None = None):
    """Terms alpha_{epoch-j} - cumsum beta for lags j=1..depth, oldest mark first."""
    if cache is not None:
        xi, sigma, dpat = cache.range(epoch - depth, epoch - 1)
    else:
        xi, sigma, dpat = src.window_arrays(epoch - depth, epoch - 1)
    alpha = spec.alpha_array(xi, sigma, dpat)
    # lag j corresponds to array position depth - j
    rev_xi = xi[::-1]
    rev_alpha = alpha[::-1]
    cum_beta = np.cumsum(rev_xi)
    return rev_alpha - cum_beta, cum_beta


def loynes_backward(spec: RecursionSpec, src: MarkSource, epoch: int, depth: int,
                    cache: MarkWindowCache | None = None) -> list[float]:
    """Backward scheme: the k-th entry (k = 1..depth) is the value at `epoch`
    of the recursion started from 0 at epoch-k.

    Equals the clipped running maximum of the lag terms, so the list is
    nondecreasing and its last element is a lower bound on the stationary
    value at `epoch`.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    terms, _ = _lag_terms(spec, src, epoch, depth, cache)
    running = np.maximum.accumulate(terms)
    return [v if v > 0.0 else 0.0 for v in running.tolist()]


def backward_supremum(spec: RecursionSpec, src: MarkSource, epoch: int, max_depth: int,
                      exact: bool = True,
                      cache: MarkWindowCache | None = None) -> RecursionValue:
    """Stationary recursion value at `epoch` via the backward supremum.

    Exact mode cuts the tail at the first depth J where the cumulative beta
    reaches the a.s. alpha bound (every deeper term is then <= bound - cum <= 0)
    and attaches a ZeroCertificate when the value is 0.  Approximate mode
    truncates at max_depth; the bias is one-sided (the value is underestimated,
    so zero events are overestimated).
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if not exact:
        terms, _ = _lag_terms(spec, src, epoch, max_depth, cache)
        v = float(terms.max())
        return RecursionValue(v if v > 0.0 else 0.0, exact=False, truncation_depth=max_depth)
    bound = spec.bound_for(src)
    if bound is None:
        raise CapabilityError(
            f"exact evaluation needs an a.s. bound on alpha ({spec.alpha_kind}); "
            "the source marginals are unbounded and no bound is declared")
    best = -np.inf
    s = 0.0  # sequential cumsum of beta, bit-identical to the one-pass form
    depth = 0
    while depth < max_depth:
        take = min(_CHUNK, max_depth - depth)
        lo, hi = epoch - depth - take, epoch - depth - 1
        xi, sigma, dpat = cache.range(lo, hi) if cache is not None else src.window_arrays(lo, hi)
        alpha = spec.alpha_array(xi, sigma, dpat)
        for al, be in zip(alpha[::-1].tolist(), xi[::-1].tolist()):
            depth += 1
            s = s + be
            t = al - s
            if t > best:
                best = t
            if s >= bound:
                value = best if best > 0.0 else 0.0
                cert = None
                if value == 0.0:
                    cert = ZeroCertificate(epoch=epoch, depth=depth, residual_bound=bound - s)
                return RecursionValue(value, exact=True, certificate=cert)
    raise DepthExhaustedError(
        f"cumulative beta reached {s:.6g} < alpha bound {bound:.6g} within {max_depth} lags")


def certified_zero(spec: RecursionSpec, src: MarkSource, epoch: int, max_depth: int,
                   cache: MarkWindowCache | None = None) -> ZeroCertificate | None:
    """Certificate that the stationary value at `epoch` is 0, or None if it is
    positive (a positive lag term classifies the epoch exactly as
    backward_supremum would, with the same arithmetic, but stops early).
    """
    bound = spec.bound_for(src)
    if bound is None:
        raise CapabilityError(
            f"zero certificates need an a.s. bound on alpha ({spec.alpha_kind})")
    s = 0.0
    depth = 0
    while depth < max_depth:
        take = min(_CHUNK, max_depth - depth)
        lo, hi = epoch - depth - take, epoch - depth - 1
        xi, sigma, dpat = cache.range(lo, hi) if cache is not None else src.window_arrays(lo, hi)
        alpha = spec.alpha_array(xi, sigma, dpat)
        for al, be in zip(alpha[::-1].tolist(), xi[::-1].tolist()):
            depth += 1
            s = s + be
            if al - s > 0.0:
                return None
            if s >= bound:
                return ZeroCertificate(epoch=epoch, depth=depth, residual_bound=bound - s)
    raise DepthExhaustedError(
        f"cumulative beta reached {s:.6g} < alpha bound {bound:.6g} within {max_depth} lags")


@dataclass(frozen=True)
class ProbZero:
    """Estimated probability that the stationary recursion value is 0."""

    estimate: Estimate
    exact: bool
    replicas: int


def prob_zero_estimate(spec: RecursionSpec, src: MarkSource, replicas: int, max_depth: int,
                       exact: bool | None = None) -> ProbZero:
    """Fraction of well-separated epochs whose value is 0, with a Wilson 95% CI.

    iid sources use one independent stream per replica; other sources use
    epochs spaced 2*max_depth apart to damp dependence.  exact=None picks
    exact mode when an alpha bound is available.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if exact is None:
        exact = spec.bound_for(src) is not None
    hits = []
    if src.is_iid:
        for r in range(replicas):
            rv = backward_supremum(spec, src.substream(r), 0, max_depth, exact=exact)
            hits.append(1.0 if rv.value == 0.0 else 0.0)
    else:
        # spaced epochs keep the draws weakly dependent; uncached window
        # fetches keep memory flat across the wide span they cover
        spacing = 2 * max_depth
        for r in range(replicas):
            rv = backward_supremum(spec, src, r * spacing, max_depth, exact=exact)
            hits.append(1.0 if rv.value == 0.0 else 0.0)
    return ProbZero(mc_aggregate(hits, kind="binary"), exact=exact, replicas=replicas)


def coupling_time(spec: RecursionSpec, src: MarkSource, z1: float, z2: float,
                  horizon: int) -> int | None:
    """Smallest n <= horizon at which forward iterates from z1 and z2 coincide.

    Both iterates consume the same marks (indices 0, 1, ...).  Once equal the
    iterates are verified to stay equal up to the horizon; None means the
    iterates did not couple within the horizon.  Equality is exact floating
    equality: coalescence happens at the atom 0 and the iterates then traverse
    identical arithmetic.
    """
    if z1 < 0.0 or z2 < 0.0:
        raise ValueError("initial states must be >= 0")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    a, b = z1, z2
    met: int | None = 0 if a == b else None
    n = 0
    chunk = 4096
    while n < horizon:
        take = min(chunk, horizon - n)
        xi, sigma, dpat = src.window_arrays(n, n + take - 1)
        alpha = spec.alpha_array(xi, sigma, dpat)
        for al, be in zip(alpha.tolist(), xi.tolist()):
            va = max(a, al) - be
            a = va if va > 0.0 else 0.0
            vb = max(b, al) - be
            b = vb if vb > 0.0 else 0.0
            n += 1
            if met is None:
                if a == b:
                    met = n
            elif a != b:
                raise RuntimeError(f"iterates separated at step {n} after coupling at {met}")
    return met
