"""Empirical stand-ins for the averaged (weakly stationary) workload law.

When no renovation structure is available the workload started from 0 still
admits a stationary law in the averaged sense: the uniform mixture of the
first n step laws converges along subsequences, being tight under the
dominating recursion.  This module estimates that mixture as the occupation
measure of a trajectory, measures how close a measure is to one-step
invariance, reports tightness via quantiles against the dominating sequence,
and tracks the mass the trajectory puts just above the patience mark, which
is the quantity whose vanishing drives the continuity argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .marks import MarkSource

_PUSH_STREAM = 0x70757368  # dedicated substream for pushforward marks


def _step_begin(w: float, x: float, s: float, d: float) -> float:
    inner = w + s if w <= d else w
    v = inner - x
    return v if v > 0.0 else 0.0


def _step_end(w: float, x: float, s: float, d: float) -> float:
    if w > d:
        inner = w
    else:
        t = w + s
        inner = t if t < d else d
    v = inner - x
    return v if v > 0.0 else 0.0


def _stepper(model: str):
    if model == "begin":
        return _step_begin
    if model == "end":
        return _step_end
    raise ValueError(f"unknown model {model!r}")


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted sample points summing to unit mass."""

    values: np.ndarray
    weights: np.ndarray
    n_steps: int
    model: str

    def __post_init__(self):
        if self.values.size == 0 or self.values.size != self.weights.size:
            raise ValueError("values and weights must be nonempty and matched")
        if np.any(self.weights < 0.0) or np.any(self.values < 0.0):
            raise ValueError("values and weights must be >= 0")
        if abs(math.fsum(self.weights.tolist()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")

    def grouped(self) -> tuple[np.ndarray, np.ndarray]:
        """(unique sorted values, per-value masses), masses fsum-exact."""
        order = np.argsort(self.values, kind="mergesort")
        v = self.values[order]
        w = self.weights[order]
        uniq, starts = np.unique(v, return_index=True)
        bounds = list(starts) + [v.size]
        masses = np.array([math.fsum(w[bounds[i]:bounds[i + 1]].tolist())
                           for i in range(uniq.size)])
        return uniq, masses


def kolmogorov_distance(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """sup_x |F_a(x) - F_b(x)| for weighted atomic measures."""
    va, ma = a.grouped()
    vb, mb = b.grouped()
    ca, cb = np.cumsum(ma), np.cumsum(mb)
    pooled = np.union1d(va, vb)
    fa = np.where(np.searchsorted(va, pooled, side="right") > 0,
                  ca[np.searchsorted(va, pooled, side="right") - 1], 0.0)
    fb = np.where(np.searchsorted(vb, pooled, side="right") > 0,
                  cb[np.searchsorted(vb, pooled, side="right") - 1], 0.0)
    return float(np.abs(fa - fb).max())


def _trajectory(src: MarkSource, n: int, model: str) -> np.ndarray:
    """States w_1..w_n of the workload started from 0 at index 0."""
    step = _stepper(model)
    xi, sigma, dpat = src.window_arrays(0, n - 1)
    out = np.empty(n)
    w = 0.0
    for i, (x, s, d) in enumerate(zip(xi.tolist(), sigma.tolist(), dpat.tolist())):
        w = step(w, x, s, d)
        out[i] = w
    return out


def cesaro_distribution(src: MarkSource, n: int, model: str,
                        mode: str = "trajectory") -> EmpiricalMeasure:
    """Uniform mixture of the laws of the first n workload states from 0.

    The default realizes it as the occupation measure of a single trajectory
    (ergodic surrogate).  mode="replica" matches the mixture literally with
    n independent trajectories, trajectory i contributing its step-i state;
    that costs O(n^2) steps and is meant for cross-checks at small n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode == "trajectory":
        values = _trajectory(src, n, model)
    elif mode == "replica":
        values = np.array([_trajectory(src.substream(i), i, model)[-1]
                           for i in range(1, n + 1)])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return EmpiricalMeasure(values=values, weights=np.full(n, 1.0 / n),
                            n_steps=n, model=model)


def invariance_distance(mu: EmpiricalMeasure, src: MarkSource, model: str) -> float:
    """Distance of mu from one-step invariance under the model's random map.

    Each sample point is pushed one step with a fresh independent mark, and
    the result is the Kolmogorov distance between mu and the equal mixture of
    mu with its pushforward (so an exactly invariant measure scores 0).  A
    diagnostic, not a contract, except in deterministic periodic cases where
    it must vanish.
    """
    step = _stepper(model)
    fresh = src.substream(_PUSH_STREAM)
    n = mu.values.size
    xi, sigma, dpat = fresh.window_arrays(0, n - 1)
    pushed = np.array([step(w, x, s, d) for w, x, s, d
                       in zip(mu.values.tolist(), xi.tolist(), sigma.tolist(), dpat.tolist())])
    half = EmpiricalMeasure(values=np.concatenate([mu.values, pushed]),
                            weights=np.concatenate([mu.weights, mu.weights]) * 0.5,
                            n_steps=mu.n_steps, model=mu.model)
    return kolmogorov_distance(mu, half)


@dataclass(frozen=True)
class TightnessReport:
    """Quantiles of the workload trajectory against the dominating sequence."""

    levels: tuple[float, ...]
    w_quantiles: tuple[float, ...]
    l_quantiles: tuple[float, ...]
    ordered_ok: bool


def tightness_report(src: MarkSource, n: int, levels=(0.5, 0.9, 0.99, 0.999)) -> TightnessReport:
    """Per-level quantiles of W (begin model, from 0) and of the dominating
    recursion L (alpha = sigma+dpat, same marks, from 0).

    W <= L pathwise, so every quantile row must be ordered; uniform control
    of the L quantiles is what makes the averaged law tight.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    xi, sigma, dpat = src.window_arrays(0, n - 1)
    w_traj = np.empty(n)
    l_traj = np.empty(n)
    w = lv = 0.0
    for i, (x, s, d) in enumerate(zip(xi.tolist(), sigma.tolist(), dpat.tolist())):
        inner = w + s if w <= d else w
        v = inner - x
        w = v if v > 0.0 else 0.0
        a = s + d
        v = (lv if lv > a else a) - x
        lv = v if v > 0.0 else 0.0
        w_traj[i] = w
        l_traj[i] = lv
    wq = tuple(float(q) for q in np.quantile(w_traj, levels))
    lq = tuple(float(q) for q in np.quantile(l_traj, levels))
    ordered = all(a <= b for a, b in zip(wq, lq))
    return TightnessReport(levels=tuple(levels), w_quantiles=wq, l_quantiles=lq,
                           ordered_ok=ordered)


def boundary_mass(src: MarkSource, n: int, p: int, model: str) -> float:
    """Fraction of the first n steps with the workload strictly inside
    (D_i, D_i + 2^-p), D_i the patience of the observing customer.

    The trend in p (nonincreasing at fixed large n) is the empirical shadow
    of the vanishing boundary mass that the averaged construction needs; it
    is reported, not asserted pointwise.
    """
    if n < 1 or p < 1:
        raise ValueError("n and p must be >= 1")
    step = _stepper(model)
    xi, sigma, dpat = src.window_arrays(0, n)
    eps = 2.0 ** (-p)
    hits = 0
    w = 0.0
    dp = dpat.tolist()
    for i, (x, s, d) in enumerate(zip(xi.tolist()[:n], sigma.tolist()[:n], dp[:n])):
        w = step(w, x, s, d)
        di = dp[i + 1]
        if di < w < di + eps:
            hits += 1
    return hits / n
