"""Monte Carlo integration and firing-time distributions.

Two estimators over an axis-aligned box: a plain one and a VEGAS-style one
with separable per-axis importance grids.  Both report the naive error
estimate sigma^2 = V^2/N^2 * sum (f_i - <f>)^2 per iteration and combine
iterations by inverse variance.  Streams are counter-based (numpy Philox
keyed through SeedSequence), so task k of seed s always sees the same
numbers no matter how many workers run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .model import DistributionSpec

_SQRT2PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# distributions

def pdf(dist: DistributionSpec, x: np.ndarray) -> np.ndarray:
    """Density of a firing-time distribution; zero for x < 0 by support."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x >= 0
    if dist.family == "uniform":
        a, b = dist.params
        out[pos & (x >= a) & (x <= b)] = 1.0 / (b - a)
    elif dist.family == "normal":
        # Truncated at 0 and renormalized so the support really is [0, inf).
        mu, sg = dist.params
        z = (x[pos] - mu) / sg
        norm = 1.0 - ndtr(-mu / sg)
        out[pos] = np.exp(-0.5 * z * z) / (sg * _SQRT2PI) / norm
    elif dist.family == "foldedNormal":
        mu, sg = dist.params
        a = (x[pos] - mu) / sg
        b = (x[pos] + mu) / sg
        out[pos] = (np.exp(-0.5 * a * a) + np.exp(-0.5 * b * b)) / (sg * _SQRT2PI)
    elif dist.family == "exponential":
        lam = dist.params[0]
        out[pos] = lam * np.exp(-lam * x[pos])
    else:  # pragma: no cover - DistributionSpec already validates
        raise ValueError(dist.family)
    return out


def cdf(dist: DistributionSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x >= 0
    xp = x[pos]
    if dist.family == "uniform":
        a, b = dist.params
        out[pos] = np.clip((xp - a) / (b - a), 0.0, 1.0)
    elif dist.family == "normal":
        mu, sg = dist.params
        base = ndtr(-mu / sg)
        out[pos] = (ndtr((xp - mu) / sg) - base) / (1.0 - base)
    elif dist.family == "foldedNormal":
        mu, sg = dist.params
        out[pos] = ndtr((xp - mu) / sg) - ndtr((-xp - mu) / sg)
    elif dist.family == "exponential":
        lam = dist.params[0]
        out[pos] = 1.0 - np.exp(-lam * xp)
    else:  # pragma: no cover
        raise ValueError(dist.family)
    return out


def sample(dist: DistributionSpec, rng: np.random.Generator, size=None) -> np.ndarray | float:
    if dist.family == "uniform":
        a, b = dist.params
        return rng.uniform(a, b, size)
    if dist.family == "normal":
        # Inverse-CDF through the truncation so no rejection loop is needed.
        mu, sg = dist.params
        base = ndtr(-mu / sg)
        u = rng.uniform(0.0, 1.0, size)
        return mu + sg * ndtri(base + u * (1.0 - base))
    if dist.family == "foldedNormal":
        mu, sg = dist.params
        return np.abs(rng.normal(mu, sg, size))
    lam = dist.params[0]
    return rng.exponential(1.0 / lam, size)


# ---------------------------------------------------------------------------
# configuration and streams

@dataclass(frozen=True)
class McConfig:
    samples: int = 100_000
    iterations: int = 5
    grid_bins: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.samples < 2 or self.iterations < 1 or self.grid_bins < 2:
            raise ValueError("McConfig out of range")


def stream(seed: int, task: int = 0) -> np.random.Generator:
    """Reproducible counter-based generator for (seed, task)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, task))))


@dataclass
class McResult:
    value: float
    sigma: float
    samples_used: int
    samples_skipped: int = 0


def _combine(values: list[float], sigmas: list[float]) -> tuple[float, float]:
    """Inverse-variance combination; degenerate sigmas fall back to a mean."""
    tiny = [s for s in sigmas if s <= 0.0]
    if tiny:
        exact = [v for v, s in zip(values, sigmas) if s <= 0.0]
        return float(np.mean(exact)), 0.0
    w = np.array([1.0 / s**2 for s in sigmas])
    return float(np.dot(w, values) / w.sum()), float(1.0 / math.sqrt(w.sum()))


# ---------------------------------------------------------------------------
# plain Monte Carlo

def mc_integrate(
    f: Callable[[np.ndarray], np.ndarray],
    box: Sequence[tuple[float, float]],
    cfg: McConfig,
    rng: Optional[np.random.Generator] = None,
) -> McResult:
    """Estimate the integral of f over an axis-aligned box.

    f maps an (N, n) sample matrix to N values; non-finite values are
    dropped and counted as skipped.
    """
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    vol = float(np.prod(hi - lo)) if len(box) else 1.0
    if vol <= 0.0:
        return McResult(0.0, 0.0, 0)
    rng = rng if rng is not None else stream(cfg.seed)

    vals, sigmas, used, skipped = [], [], 0, 0
    for _ in range(cfg.iterations):
        x = rng.uniform(size=(cfg.samples, len(box))) * (hi - lo) + lo
        fx = np.asarray(f(x), dtype=float)
        ok = np.isfinite(fx)
        skipped += int((~ok).sum())
        fx = fx[ok]
        n = fx.size
        used += n
        if n == 0:
            continue
        mean = fx.mean()
        est = vol * mean
        var = (vol * vol / (n * n)) * float(((fx - mean) ** 2).sum())
        vals.append(est)
        sigmas.append(math.sqrt(var))
    if not vals:
        return McResult(0.0, 0.0, used, skipped)
    value, sigma = _combine(vals, sigmas)
    return McResult(value, sigma, used, skipped)


# ---------------------------------------------------------------------------
# VEGAS

class _Grid:
    """Per-axis adaptive grid mapping [0,1) onto the box via bin edges."""

    def __init__(self, dim: int, bins: int):
        self.bins = bins
        self.edges = np.tile(np.linspace(0.0, 1.0, bins + 1), (dim, 1))

    def transform(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Map uniform u in [0,1) to grid points; return (x01, jac, bin index)."""
        n, dim = u.shape
        idx = np.minimum((u * self.bins).astype(int), self.bins - 1)
        frac = u * self.bins - idx
        x = np.empty_like(u)
        jac = np.ones(n)
        for d in range(dim):
            left = self.edges[d, idx[:, d]]
            width = self.edges[d, idx[:, d] + 1] - left
            x[:, d] = left + frac[:, d] * width
            jac *= width * self.bins
        return x, jac, idx

    def refine(self, weight: np.ndarray, damping: float = 0.75) -> None:
        """Move edges so accumulated |f| mass spreads evenly across bins."""
        for d in range(weight.shape[0]):
            w = weight[d].copy()
            if w.sum() <= 0:
                continue
            # Smooth, then damp, the per-bin importance before re-slicing.
            sm = np.empty_like(w)
            sm[0] = (7 * w[0] + w[1]) / 8
            sm[-1] = (w[-2] + 7 * w[-1]) / 8
            if len(w) > 2:
                sm[1:-1] = (w[:-2] + 6 * w[1:-1] + w[2:]) / 8
            sm /= sm.sum()
            nz = sm > 0
            d_imp = np.zeros_like(sm)
            d_imp[nz] = sm[nz] ** damping
            d_imp /= d_imp.sum()
            cum = np.concatenate(([0.0], np.cumsum(d_imp)))
            targets = np.linspace(0.0, 1.0, self.bins + 1)
            old = self.edges[d]
            new = np.interp(targets, cum, old)
            new[0], new[-1] = 0.0, 1.0
            self.edges[d] = new


def vegas_integrate(
    f: Callable[[np.ndarray], np.ndarray],
    box: Sequence[tuple[float, float]],
    cfg: McConfig,
    rng: Optional[np.random.Generator] = None,
) -> McResult:
    """VEGAS-style importance sampling over the box.

    Separable per-axis grids are refined after each iteration toward equal
    |f| mass per bin; estimates from all iterations combine by inverse
    variance, which keeps early badly-adapted iterations from dominating.
    """
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    span = hi - lo
    vol = float(np.prod(span)) if len(box) else 1.0
    if vol <= 0.0:
        return McResult(0.0, 0.0, 0)
    rng = rng if rng is not None else stream(cfg.seed)
    dim = len(box)
    grid = _Grid(dim, cfg.grid_bins)

    vals, sigmas, used, skipped = [], [], 0, 0
    for _ in range(cfg.iterations):
        u = rng.uniform(size=(cfg.samples, dim))
        x01, jac, idx = grid.transform(u)
        x = lo + x01 * span
        fx = np.asarray(f(x), dtype=float)
        ok = np.isfinite(fx)
        skipped += int((~ok).sum())
        fx = np.where(ok, fx, 0.0)
        n = int(ok.sum())
        used += n
        contrib = fx * jac  # importance-weighted integrand on [0,1)^dim
        mean = contrib.mean()
        est = vol * mean
        var = (vol * vol / (cfg.samples * cfg.samples)) * float(((contrib - mean) ** 2).sum())
        vals.append(est)
        sigmas.append(math.sqrt(var))
        # Accumulate |f|*jac per bin and axis for refinement.
        w = np.abs(contrib)
        imp = np.zeros((dim, cfg.grid_bins))
        for d in range(dim):
            np.add.at(imp[d], idx[:, d], w)
        grid.refine(imp)
    value, sigma = _combine(vals, sigmas)
    return McResult(value, sigma, used, skipped)
