"""Parametric location tree: symbolic unfolding of a net up to a time bound.

Each location bundles a symbolic state with the entry time (an affine form
over the random-variable values expired so far) and a triangular domain
table for those variables.  Children arise from deterministic-kind events
(firings, boundary hits, guard crossings) and from random firings, whose
value becomes a fresh variable bounded below by the accumulated enabling
time and above by the delay of the deterministic event they preempt.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .model import HPnGModel
from .semantics import (
    Event,
    EventKind,
    SymState,
    evolve,
    finalize_state,
    fire,
    flat_index,
    initial_state,
    min_det_events,
    next_events,
    resolve_conflict,
)
from .symbolic import (
    EPS,
    ComparisonKind,
    LinearForm,
    RvId,
    SymInterval,
    ZERO,
    compare_remaining_times,
    extremal_value,
    var,
)


@dataclass(frozen=True)
class DetExit:
    """One deterministic way out of a location.

    ``delta`` is the remaining time until the exit, ``cuts`` the parent
    domain restricted to where this exit happens first.  Kept even when the
    child lies beyond the time bound, because residence in the parent is
    still limited by it.
    """

    delta: LinearForm
    cuts: tuple[SymInterval, ...]


@dataclass
class ParametricLocation:
    id: int
    parent: Optional[int]
    source: Optional[str]
    source_kind: Optional[EventKind]
    p: float
    entry: LinearForm
    state: SymState
    domain: list[SymInterval]
    rvs: list[RvId]
    children: list[int] = field(default_factory=list)
    det_exits: list[DetExit] = field(default_factory=list)

    def var_names(self) -> list[str]:
        return [rv.label() for rv in self.rvs]


@dataclass
class PLTree:
    model: HPnGModel
    tau_max: float
    locations: list[ParametricLocation]

    @property
    def root(self) -> ParametricLocation:
        return self.locations[0]

    def location(self, lid: int) -> ParametricLocation:
        return self.locations[lid]

    def path(self, lid: int) -> list[int]:
        out = []
        cur: Optional[int] = lid
        while cur is not None:
            out.append(cur)
            cur = self.locations[cur].parent
        return list(reversed(out))

    def accumulated_p(self, lid: int) -> float:
        p = 1.0
        for node in self.path(lid):
            p *= self.locations[node].p
        return p


def pending_rvs(model: HPnGModel, loc: ParametricLocation):
    """Unfired next firings that carry probability mass in this location.

    Yields (rv, distribution, enabling-time form, enabled) per general
    transition, skipping ones that never started accumulating.
    """
    for gi, t in enumerate(model.general):
        count = sum(1 for rv in loc.rvs if rv.transition == t.id)
        g_form = loc.state.g[gi]
        is_enabled = loc.state.e[flat_index(model, t.id)]
        if not is_enabled and g_form.is_constant() and abs(g_form.const) <= EPS:
            continue
        yield RvId(t.id, count), t.distribution, g_form, is_enabled


# ---------------------------------------------------------------------------
# construction

def _apply_bound(
    piece: list[SymInterval], k: int, form: LinearForm, upper: bool
) -> list[list[SymInterval]]:
    """Intersect a triangular cell with {var_k <= form} (or >= when not upper).

    The result is a list of disjoint triangular cells covering exactly the
    intersection.  When the new bound crosses the cell's existing bound for
    var_k, the cell is split along the crossing hyperplane, which is itself a
    bound on a lower-indexed variable, so the recursion terminates.
    """
    iv = piece[k]
    if upper and iv.upper is None:
        out = list(piece)
        out[k] = SymInterval(iv.lower, form)
        return [out]
    cur = iv.upper if upper else iv.lower
    diff = form - cur
    lo = extremal_value(diff, piece, "min")
    hi = extremal_value(diff, piece, "max")
    # diff >= 0 means the new bound sits above the current one.
    slack = lo >= -EPS if upper else hi <= EPS
    tight = hi <= EPS if upper else lo >= -EPS
    if slack:
        return [list(piece)]
    if tight:
        out = list(piece)
        out[k] = SymInterval(iv.lower, form) if upper else SymInterval(form, iv.upper)
        return [out]
    # Bounds cross inside the cell; split on the sign of diff.
    j = diff.top_index()
    cj = diff.coeff(j)
    root = (diff - var(j, cj)).scaled(-1.0 / cj)
    above = _apply_bound(piece, j, root, upper=False)   # region with var_j >= root
    below = _apply_bound(piece, j, root, upper=True)
    positive, negative = (above, below) if cj > 0 else (below, above)
    out = []
    for sub in (positive if upper else negative):       # new bound is slack here
        out.append(sub)
    for sub in (negative if upper else positive):       # new bound binds here
        cell = list(sub)
        cell[k] = SymInterval(cell[k].lower, form) if upper \
            else SymInterval(form, cell[k].upper)
        out.append(cell)
    return out


def _nonempty(cuts: list[SymInterval], domain: list[SymInterval]) -> bool:
    for iv in cuts:
        if iv.upper is None:
            continue
        if extremal_value(iv.upper - iv.lower, domain, "max") < -EPS:
            return False
    return True


def _group_coincident(events: list[Event]) -> list[list[Event]]:
    groups: list[list[Event]] = []
    for ev in events:
        for grp in groups:
            if compare_remaining_times(ev.delta, grp[0].delta).kind is ComparisonKind.EQUAL:
                grp.append(ev)
                break
        else:
            groups.append([ev])
    return groups


def _group_cuts(
    groups: list[list[Event]], gi: int, domain: list[SymInterval]
) -> list[list[SymInterval]]:
    """Cells of the domain where group gi finishes first; may be empty."""
    pieces = [list(domain)]
    rep = groups[gi][0]
    for gj, other in enumerate(groups):
        if gj == gi or not pieces:
            continue
        cmp = compare_remaining_times(rep.delta, other[0].delta)
        if cmp.kind is ComparisonKind.ALWAYS_BEFORE:
            continue
        if cmp.kind is ComparisonKind.NEVER_BEFORE:
            return []
        refined: list[list[SymInterval]] = []
        for piece in pieces:
            refined.extend(_apply_bound(piece, cmp.index, cmp.bound,
                                        cmp.kind is ComparisonKind.UPPER_BOUND))
        pieces = refined
    return [p for p in pieces if _nonempty(p, domain)]


def _child_state(model: HPnGModel, st: SymState, ev: Event, delta: LinearForm) -> SymState:
    moved = evolve(model, st, delta)
    m, c, g = moved.m, list(moved.c), list(moved.g)
    if ev.kind in (EventKind.IMMEDIATE, EventKind.DETERMINISTIC, EventKind.GENERAL):
        m, c, g = fire(model, moved, ev.target)
    gs_cont = [
        (moved.gs[i] if model.guard_arcs[i].place in model.cp_index else None)
        for i in range(len(model.guard_arcs))
    ]
    if ev.kind is EventKind.GUARD_ARC:
        gs_cont[ev.arc_index] = ev.new_truth
    return finalize_state(model, m, moved.x, tuple(c), tuple(g), gs_cont)


def build_plt(model: HPnGModel, tau_max: float, max_locations: int = 1_000_000) -> PLTree:
    """Breadth-first unfolding of the symbolic state space up to tau_max."""
    root = ParametricLocation(
        id=0, parent=None, source=None, source_kind=None, p=1.0,
        entry=ZERO, state=initial_state(model), domain=[], rvs=[],
    )
    locs = [root]
    queue: deque[int] = deque([0])

    while queue:
        lid = queue.popleft()
        loc = locs[lid]
        events = next_events(model, loc.state, loc.domain)
        gens = [ev for ev in events if ev.kind is EventKind.GENERAL]
        det = min_det_events(
            model, [ev for ev in events if ev.kind is not EventKind.GENERAL], loc.domain
        )
        groups = _group_coincident(det)

        contexts: list[tuple[Optional[LinearForm], list[SymInterval]]] = []
        for gi, grp in enumerate(groups):
            delta = grp[0].delta
            for cuts in _group_cuts(groups, gi, loc.domain):
                contexts.append((delta, cuts))
                loc.det_exits.append(DetExit(delta, tuple(cuts)))
                for ev, pw in resolve_conflict(model, grp):
                    _spawn(model, locs, queue, loc, ev, ev.delta, list(cuts),
                           pw, None, tau_max, max_locations)
        if not groups:
            contexts.append((None, list(loc.domain)))

        for gev in gens:
            gi_idx = model.t_ref[gev.target][1]
            g_form = loc.state.g[gi_idx]
            count = sum(1 for rv in loc.rvs if rv.transition == gev.target)
            for delta_ctx, cuts in contexts:
                n = len(loc.domain)
                if delta_ctx is None:
                    interval = SymInterval(g_form, None)
                else:
                    if extremal_value(delta_ctx, loc.domain, "max") <= EPS:
                        continue  # no room to preempt a zero-delay event
                    interval = SymInterval(g_form, g_form + delta_ctx)
                fire_delta = var(n) - g_form
                _spawn(model, locs, queue, loc, gev, fire_delta,
                       list(cuts) + [interval], 1.0,
                       RvId(gev.target, count), tau_max, max_locations)

    return PLTree(model, tau_max, locs)


def _spawn(
    model: HPnGModel,
    locs: list[ParametricLocation],
    queue: deque,
    parent: ParametricLocation,
    ev: Event,
    delta: LinearForm,
    domain: list[SymInterval],
    p: float,
    new_rv: Optional[RvId],
    tau_max: float,
    max_locations: int,
) -> None:
    entry = parent.entry + delta
    if extremal_value(entry, domain, "min") > tau_max + EPS:
        return
    if len(locs) >= max_locations:
        raise RuntimeError(f"location tree exceeds {max_locations} nodes")
    state = _child_state(model, parent.state, ev, delta)
    child = ParametricLocation(
        id=len(locs), parent=parent.id, source=ev.describe(),
        source_kind=ev.kind, p=p, entry=entry, state=state,
        domain=domain, rvs=parent.rvs + [new_rv] if new_rv else list(parent.rvs),
    )
    locs.append(child)
    parent.children.append(child.id)
    queue.append(child.id)


# ---------------------------------------------------------------------------
# export

def tree_to_json(tree: PLTree) -> dict:
    model = tree.model
    out = {"tauMax": tree.tau_max, "locations": []}
    for loc in tree.locations:
        names = loc.var_names()
        out["locations"].append({
            "id": loc.id,
            "parent": loc.parent,
            "source": loc.source,
            "sourceKind": loc.source_kind.value if loc.source_kind else None,
            "p": loc.p,
            "entry": loc.entry.text(names),
            "domain": [
                {"rv": rv.label(), "interval": iv.text(names)}
                for rv, iv in zip(loc.rvs, loc.domain)
            ],
            "marking": {
                pl.id: tok for pl, tok in zip(model.discrete_places, loc.state.m)
            },
            "levels": {
                pl.id: form.text(names)
                for pl, form in zip(model.continuous_places, loc.state.x)
            },
            "drift": {
                pl.id: d for pl, d in zip(model.continuous_places, loc.state.d)
            },
            "children": list(loc.children),
        })
    return out


def tree_to_dot(tree: PLTree) -> str:
    lines = ["digraph plt {", "  node [shape=box, fontname=\"monospace\"];"]
    for loc in tree.locations:
        names = loc.var_names()
        label = [f"L{loc.id}  t={loc.entry.text(names)}"]
        if loc.source:
            label.append(loc.source)
        if loc.p != 1.0:
            label.append(f"p={loc.p:g}")
        levels = ", ".join(
            f"{pl.id}={form.text(names)}"
            for pl, form in zip(tree.model.continuous_places, loc.state.x)
        )
        if levels:
            label.append(levels)
        text = "\\n".join(label).replace('"', "'")
        lines.append(f'  n{loc.id} [label="{text}"];')
        if loc.parent is not None:
            lines.append(f"  n{loc.parent} -> n{loc.id};")
    lines.append("}")
    return "\n".join(lines)


def dump_json(tree: PLTree) -> str:
    return json.dumps(tree_to_json(tree), indent=2)
