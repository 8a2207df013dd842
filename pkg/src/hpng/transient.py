"""Transient probabilities of state properties over the location tree.

A location can hold probability mass at time t' when its entry time can lie
before t' and, where deterministic exits exist, at least one of them can
lie after t'.  The mass is an integral of the joint density of the expired
random firings over the restricted domain, times survival factors for
firings that are still pending.  Three routes compute that integral:

``intervals``
    Triangular bound tables decomposed so every variable has one active
    lower and upper form, then a sequential change of variables onto the
    unit cube with an adaptive grid.
``simplex``
    A half-space region per location, vertex enumeration, triangulation,
    and per-simplex sampling of the density.
``direct``
    The same region sampled through its bounding box.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import (
    EPS_GEOM,
    make_polytope,
    probability_over_region_direct,
    probability_over_simplex,
    triangulate,
    vertex_enumeration,
)
from .model import DistributionSpec, HPnGModel
from .montecarlo import McConfig, McResult, cdf, stream, vegas_integrate
from .montecarlo import pdf as dist_pdf
from .props import Atom
from .semantics import UnsupportedModelError
from .symbolic import EPS, LinearForm, SymInterval, const, extremal_value
from .tree import ParametricLocation, PLTree, pending_rvs

METHODS = ("intervals", "simplex", "direct")


@dataclass(frozen=True)
class PendingVar:
    rv_label: str
    dist: DistributionSpec
    lower: LinearForm      # value below which the firing would already have happened
    enabled: bool


@dataclass(frozen=True)
class Piece:
    """One triangular cell of a restricted domain."""

    intervals: tuple[SymInterval, ...]
    dists: tuple[DistributionSpec, ...]
    factors: tuple[tuple[DistributionSpec, LinearForm], ...]


@dataclass
class TransientResult:
    t_prime: float
    method: str
    total: float
    sigma: float
    per_location: dict[int, tuple[float, float]]


# ---------------------------------------------------------------------------
# candidates and pending variables

def candidate_locations(tree: PLTree, t_prime: float) -> list[ParametricLocation]:
    """Locations that can be occupied at t_prime."""
    out = []
    for loc in tree.locations:
        if extremal_value(loc.entry, loc.domain, "min") > t_prime + EPS:
            continue
        if loc.det_exits:
            alive = any(
                extremal_value(loc.entry + ex.delta, list(ex.cuts), "max") >= t_prime - EPS
                for ex in loc.det_exits
            )
            if not alive:
                continue
        out.append(loc)
    return out


def pending_vars(model: HPnGModel, loc: ParametricLocation, t_prime: float) -> list[PendingVar]:
    out = []
    for rv, dist, g_form, is_enabled in pending_rvs(model, loc):
        if is_enabled:
            lower = g_form + (const(t_prime) - loc.entry)
        else:
            lower = g_form
        out.append(PendingVar(rv.label(), dist, lower, is_enabled))
    return out


# ---------------------------------------------------------------------------
# triangular decomposition (intervals route)

def _without_top(form: LinearForm, k: int) -> LinearForm:
    cs = list(form.coeffs)
    cs[k] = 0.0
    return LinearForm(form.const, tuple(cs))


def _fold(constraint: LinearForm, table: list[tuple[list, list]]) -> bool:
    """Add ``constraint <= 0`` as a bound on its top variable.

    Returns False when the constraint is a violated constant.
    """
    k = constraint.top_index()
    if k is None:
        return constraint.const <= EPS
    ck = constraint.coeff(k)
    bound = _without_top(constraint, k).scaled(-1.0 / ck)
    if ck > 0:
        table[k][1].append(bound)
    else:
        table[k][0].append(bound)
    return True


def _dedupe(forms: list[LinearForm]) -> list[LinearForm]:
    out: list[LinearForm] = []
    for f in forms:
        if not any(f.approx_eq(g) for g in out):
            out.append(f)
    return out


def _decompose(table: list[tuple[list, list]], k: int) -> list[list[SymInterval]]:
    """Cells where each variable has a single active lower and upper bound.

    Works down from the highest variable: for every choice of active bounds
    the dominance conditions and the lower<=upper feasibility condition are
    folded onto lower variables.  Identical bound forms are merged first,
    otherwise the same cell would be counted once per copy.
    """
    if k < 0:
        return [[]]
    lowers = _dedupe(table[k][0])
    uppers = _dedupe(table[k][1])
    cells: list[list[SymInterval]] = []
    for lstar in lowers:
        for ustar in (uppers or [None]):
            sub = [(list(lo), list(up)) for lo, up in table[:k]]
            ok = True
            for other in lowers:
                if other is not lstar:
                    ok = ok and _fold(other - lstar, sub)
            if ustar is not None:
                for other in uppers:
                    if other is not ustar:
                        ok = ok and _fold(ustar - other, sub)
                ok = ok and _fold(lstar - ustar, sub)
            if not ok:
                continue
            for cell in _decompose(sub, k - 1):
                cells.append(cell + [SymInterval(lstar, ustar)])
    return cells


def location_pieces(
    model: HPnGModel,
    tree: PLTree,
    loc: ParametricLocation,
    t_prime: float,
    extra_rows: tuple[LinearForm, ...] = (),
) -> list[Piece]:
    """Triangular cells of the restricted domain of one location at t_prime."""
    dists = tuple(model.transition(rv.transition).distribution for rv in loc.rvs)
    pend = pending_vars(model, loc, t_prime)
    factors = tuple((p.dist, p.lower) for p in pend)
    contexts: list[tuple[list[SymInterval], list[LinearForm]]] = []
    if loc.det_exits:
        for ex in loc.det_exits:
            contexts.append(
                (list(ex.cuts), [const(t_prime) - loc.entry - ex.delta])
            )
    else:
        contexts.append((list(loc.domain), []))

    pieces: list[Piece] = []
    for cuts, residence in contexts:
        table: list[tuple[list, list]] = [
            ([iv.lower], [] if iv.upper is None else [iv.upper]) for iv in cuts
        ]
        ok = True
        for con in [loc.entry - const(t_prime)] + residence + list(extra_rows):
            ok = ok and _fold(con, table)
        if not ok:
            continue
        for cell in _decompose(table, len(cuts) - 1):
            pieces.append(Piece(tuple(cell), dists, factors))
    return pieces


def integrate_piece(piece: Piece, cfg: McConfig, rng: np.random.Generator) -> McResult:
    """Integral of the joint density over one triangular cell."""
    nv = len(piece.intervals)
    bounded = [i for i, iv in enumerate(piece.intervals) if iv.upper is not None]
    free = [i for i, iv in enumerate(piece.intervals) if iv.upper is None]
    for i in free:
        for j in range(i + 1, nv):
            iv = piece.intervals[j]
            if abs(iv.lower.coeff(i)) > EPS or (iv.upper is not None and abs(iv.upper.coeff(i)) > EPS):
                raise UnsupportedModelError(
                    "unbounded variable referenced by later bounds"
                )
        for _, lf in piece.factors:
            if abs(lf.coeff(i)) > EPS:
                raise UnsupportedModelError("unbounded variable referenced by survival factor")

    if not bounded:
        value = 1.0
        for i in free:
            value *= float(1.0 - cdf(piece.dists[i], np.array([piece.intervals[i].lower.const]))[0])
        for dist, lf in piece.factors:
            value *= float(1.0 - cdf(dist, np.array([lf.const]))[0])
        return McResult(value, 0.0, 0, 0)

    def f(u: np.ndarray) -> np.ndarray:
        n = len(u)
        vals = np.zeros((n, nv))
        w = np.ones(n)
        col = 0
        for i, iv in enumerate(piece.intervals):
            lo = iv.lower.evaluate_batch(vals) if iv.lower.coeffs else np.full(n, iv.lower.const)
            if iv.upper is None:
                w = w * (1.0 - cdf(piece.dists[i], lo))
                vals[:, i] = lo
                continue
            hi = iv.upper.evaluate_batch(vals) if iv.upper.coeffs else np.full(n, iv.upper.const)
            width = np.maximum(hi - lo, 0.0)
            x = lo + u[:, col] * width
            vals[:, i] = x
            w = w * width * dist_pdf(piece.dists[i], x)
            col += 1
        for dist, lf in piece.factors:
            low = lf.evaluate_batch(vals) if lf.coeffs else np.full(n, lf.const)
            w = w * (1.0 - cdf(dist, low))
        return w

    box = [(0.0, 1.0)] * len(bounded)
    return vegas_integrate(f, box, cfg, rng)


# ---------------------------------------------------------------------------
# half-space regions (simplex and direct routes)

def _vec(form: LinearForm, dim: int) -> np.ndarray:
    v = np.zeros(dim)
    for i, c in enumerate(form.coeffs):
        v[i] = c
    return v


def location_region_terms(
    model: HPnGModel,
    tree: PLTree,
    loc: ParametricLocation,
    t_prime: float,
    extra_rows: tuple[LinearForm, ...] = (),
):
    """Region terms (weight, polytope-or-None, densities) for one location.

    Dimensions are the expired variables followed by the pending ones; each
    pending variable is clipped at the tree horizon and its tail beyond it
    re-enters as a constant survival factor with the variable substituted
    out, one term per subset of tails.
    """
    tau = tree.tau_max
    n_exp = len(loc.domain)
    pend = pending_vars(model, loc, t_prime)
    n_pend = len(pend)
    exp_dists = [model.transition(rv.transition).distribution for rv in loc.rvs]

    base_rows: list[tuple[np.ndarray, float]] = []

    def add(form: LinearForm, pending_col: Optional[int] = None, pcoef: float = 0.0):
        # constraint: form + pcoef * p_col <= 0
        v = np.zeros(n_exp + n_pend)
        v[:n_exp] = _vec(form, n_exp)
        if pending_col is not None:
            v[n_exp + pending_col] = pcoef
        base_rows.append((v, -form.const))

    for i, iv in enumerate(loc.domain):
        lo_row = LinearForm(iv.lower.const, tuple(
            [iv.lower.coeff(j) for j in range(i)] + [-1.0]
        ))
        add(lo_row)
        if iv.upper is not None:
            hi_row = LinearForm(-iv.upper.const, tuple(
                [-iv.upper.coeff(j) for j in range(i)] + [1.0]
            ))
            add(hi_row)
        add(LinearForm(0.0, tuple([0.0] * i + [-1.0])))          # s_i >= 0
        add(LinearForm(-tau, tuple([0.0] * i + [1.0])))          # s_i <= tau

    add(loc.entry - const(t_prime))                               # entry <= t'
    for ex in loc.det_exits:
        add(const(t_prime) - loc.entry - ex.delta)                # t' <= exit
    for row in extra_rows:
        add(row)
    for j, p in enumerate(pend):
        add(p.lower, pending_col=j, pcoef=-1.0)                   # p_j >= lower
        add(const(-tau), pending_col=j, pcoef=1.0)                # p_j <= tau

    terms = []
    for mask in range(1 << n_pend):
        weight = 1.0
        for j in range(n_pend):
            if mask >> j & 1:
                weight *= float(1.0 - cdf(pend[j].dist, np.array([tau]))[0])
        if weight <= 0.0:
            continue
        kept = [j for j in range(n_pend) if not mask >> j & 1]
        cols = list(range(n_exp)) + [n_exp + j for j in kept]
        rows = []
        feasible = True
        for v, rhs in base_rows:
            sub = rhs - sum(v[n_exp + j] * tau for j in range(n_pend) if mask >> j & 1)
            vv = v[cols]
            if np.all(np.abs(vv) <= EPS):
                if sub < -EPS_GEOM:
                    feasible = False
                    break
                continue
            rows.append((vv, sub))
        if not feasible:
            continue
        dists = exp_dists + [pend[j].dist for j in kept]
        dim = len(cols)
        poly = make_polytope(rows, dim) if dim else None
        terms.append((weight, poly, dists))
    return terms


def _density(dists):
    def f(pts: np.ndarray) -> np.ndarray:
        out = np.ones(len(pts))
        for i, dist in enumerate(dists):
            out *= dist_pdf(dist, pts[:, i])
        return out
    return f


def _region_probability(
    terms, method: str, cfg: McConfig, rng: np.random.Generator,
    simplex_mode: str = "sorted",
) -> tuple[float, float]:
    total = 0.0
    var = 0.0
    for weight, poly, dists in terms:
        if poly is None:
            total += weight
            continue
        density = _density(dists)
        if method == "simplex":
            verts = vertex_enumeration(poly)
            for simplex in triangulate(verts):
                r = probability_over_simplex(simplex, density, cfg, rng, simplex_mode)
                total += weight * r.value
                var += (weight * r.sigma) ** 2
        else:
            r = probability_over_region_direct(poly, density, cfg, rng)
            total += weight * r.value
            var += (weight * r.sigma) ** 2
    return total, float(np.sqrt(var))


# ---------------------------------------------------------------------------
# orchestration

def _fluid_rows(
    model: HPnGModel, loc: ParametricLocation, t_prime: float, atoms: list[Atom]
) -> Optional[tuple[LinearForm, ...]]:
    """Constraint forms (<= 0) for the fluid atoms, or None when the marking
    part already fails."""
    rows: list[LinearForm] = []
    for a in atoms:
        if a.kind == "m":
            tokens = loc.state.m[model.dp_index[a.place]]
            from .props import compare
            if not compare(a.op, float(tokens), a.value):
                return None
            continue
        pi = model.cp_index[a.place]
        level = loc.state.x[pi] + (const(t_prime) - loc.entry).scaled(loc.state.d[pi])
        if a.op in ("<", "<="):
            rows.append(level - const(a.value))
        elif a.op in (">", ">="):
            rows.append(const(a.value) - level)
        else:
            rows.append(level - const(a.value))
            rows.append(const(a.value) - level)
    return tuple(rows)


def transient_probability(
    tree: PLTree,
    t_prime: float,
    atoms: Optional[list[Atom]] = None,
    method: str = "intervals",
    cfg: Optional[McConfig] = None,
    threads: Optional[int] = None,
    simplex_mode: str = "sorted",
) -> TransientResult:
    """Probability that the property holds at time t_prime.

    With ``atoms=None`` this sums the occupation probabilities of every
    candidate location, which must come to one.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if t_prime < -EPS or t_prime > tree.tau_max + EPS:
        raise ValueError(f"t'={t_prime} outside the tree horizon {tree.tau_max}")
    cfg = cfg or McConfig()
    model = tree.model
    atoms = atoms or []

    work = []
    for loc in candidate_locations(tree, t_prime):
        rows = _fluid_rows(model, loc, t_prime, atoms)
        if rows is None:
            continue
        work.append((loc, rows))

    def compute(item) -> tuple[int, float, float]:
        loc, rows = item
        rng = stream(cfg.seed, loc.id)
        acc = tree.accumulated_p(loc.id)
        if method == "intervals":
            value = 0.0
            var = 0.0
            for piece in location_pieces(model, tree, loc, t_prime, rows):
                r = integrate_piece(piece, cfg, rng)
                value += r.value
                var += r.sigma ** 2
            return loc.id, acc * value, acc * float(np.sqrt(var))
        terms = location_region_terms(model, tree, loc, t_prime, rows)
        value, sigma = _region_probability(terms, method, cfg, rng, simplex_mode)
        return loc.id, acc * value, acc * sigma

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(compute, work))
    else:
        results = [compute(item) for item in work]

    per_location = {lid: (v, s) for lid, v, s in results}
    total = sum(v for _, v, _ in results)
    sigma = float(np.sqrt(sum(s ** 2 for _, _, s in results)))
    return TransientResult(t_prime, method, total, sigma, per_location)
