"""Mark processes on finite trees and the pruned trees they induce.

A marked tree carries two independent mark families over a time window
[t, t_max]: skeleton marks, Poisson on each edge with rate alpha per
unit length and times distributed like beta, and one first-mark time
per many-child node, drawn by inverting its survival factor.  Pruning
at a time q keeps exactly the points with no mark of time <= q strictly
below them on the root path, so the root always survives, a marked node
stays (childless) while everything above it goes, and a marked edge is
cut at its lowest mark.

Binary nodes never receive node marks: their mass is 2/n under the
discretization and the mark probability vanishes in the limit, so only
nodes of three or more children participate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mechanism import DomainError
from .tree import INFINITE, LEAF, FiniteTree


@dataclass(frozen=True)
class PrunePath:
    """Cache of pruning statistics along a nondecreasing q grid."""

    q_grid: np.ndarray
    sigma: np.ndarray
    height: np.ndarray

    def exit_time(self, h):
        """Largest grid time at which the pruned tree still exceeds h."""
        above = np.flatnonzero(self.height > h)
        if len(above) == 0:
            return None
        return float(self.q_grid[above[-1]])


@dataclass(frozen=True)
class MarkedTree:
    base: FiniteTree
    window: tuple
    edge_ids: np.ndarray
    offsets: np.ndarray
    times: np.ndarray
    node_ids: np.ndarray
    node_times: np.ndarray

    def __len__(self):
        return len(self.edge_ids)

    def pruned_at(self, q):
        t, t_max = self.window
        if not t <= q <= t_max:
            raise DomainError(f"q = {q} outside the mark window [{t}, {t_max}]")
        base = self.base
        n = len(base)
        par = base.parent

        live = self.times <= q
        edge_first = np.full(n, np.inf)
        if live.any():
            np.minimum.at(edge_first, self.edge_ids[live], self.offsets[live])
        kill = edge_first < np.inf
        marked = np.zeros(n, dtype=bool)
        marked[self.node_ids[self.node_times <= q]] = True

        if not kill.any() and not marked.any():
            return base
        cut = np.zeros(n, dtype=bool)
        for i in range(1, n):
            p = par[i]
            cut[i] = cut[p] or marked[p] or kill[i]
        if not cut.any():
            return base

        keep = ~cut
        remap = np.cumsum(keep) - 1
        kept = np.flatnonzero(keep)
        stub = np.zeros(n, dtype=bool)
        stub[1:] = kill[1:] & keep[par[1:]] & ~marked[par[1:]]
        stubs = np.flatnonzero(stub)

        parent_out = np.where(kept == 0, -1, remap[np.maximum(par[kept], 0)])
        parent_out = np.concatenate([parent_out, remap[par[stubs]]])
        length_out = np.concatenate([base.length[kept], edge_first[stubs]])
        kind_out = np.concatenate(
            [base.kind[kept], np.full(len(stubs), LEAF, dtype=np.int8)])
        delta_out = np.concatenate([base.delta[kept], np.zeros(len(stubs))])
        mu_out = np.concatenate([base.mu[kept], np.zeros(len(stubs))])
        return FiniteTree(parent_out, length_out, kind_out, delta_out,
                          mu_out, base.scale)

    def sigma_path(self, q_grid):
        qs = np.asarray(q_grid, dtype=float)
        if len(qs) == 0 or np.any(np.diff(qs) < 0):
            raise DomainError("q grid must be nonempty and nondecreasing")
        sig = np.empty(len(qs))
        hgt = np.empty(len(qs))
        for j, q in enumerate(qs):
            tree = self.pruned_at(q)
            sig[j] = tree.total_mass()
            hgt[j] = tree.height()
        return PrunePath(qs, sig, hgt)


def generate_marks(tree, fam, window, rng):
    """Draw the skeleton and node mark families over the window."""
    t, t_max = float(window[0]), float(window[1])
    if not t <= t_max:
        raise DomainError(f"mark window is reversed: [{t}, {t_max}]")
    lo, hi = fam.window
    if not (lo <= t and t_max <= hi):
        raise DomainError(
            f"window [{t}, {t_max}] outside the family domain [{lo}, {hi}]")

    alpha = fam.alpha(t, t_max)
    if alpha > 0.0:
        counts = rng.poisson(alpha * tree.length[1:])
        total = int(counts.sum())
        edge_ids = np.repeat(np.arange(1, len(tree)), counts)
        # (0, len]: a zero offset would make a zero-length stub
        offsets = (1.0 - rng.random(total)) * tree.length[edge_ids]
        times = fam.mark_times(t, t_max, rng, total)
    else:
        edge_ids = np.zeros(0, dtype=np.int64)
        offsets = np.zeros(0)
        times = np.zeros(0)

    inf_nodes = np.flatnonzero(tree.kind == INFINITE)
    node_ids, node_times = [], []
    for i in inf_nodes:
        tm = fam.node_mark_time(t, float(tree.delta[i]), float(rng.random()))
        if tm <= t_max:
            node_ids.append(i)
            node_times.append(tm)
    return MarkedTree(tree, (t, t_max), edge_ids, offsets, times,
                      np.array(node_ids, dtype=np.int64),
                      np.array(node_times, dtype=float))


@dataclass(frozen=True)
class TwoStepReport:
    """Two-sample comparison of one-pass against two-pass pruning."""

    n: int
    stats: dict

    @property
    def max_abs_z(self):
        return max(abs(z) for _, _, _, z in self.stats.values())

    def passed(self, limit=3.0):
        return self.max_abs_z < limit

    def summary(self):
        lines = [
            f"{name}: one-pass {a:.6g}, two-pass {b:.6g}, z = {z:+.2f}"
            for name, (a, b, _, z) in self.stats.items()
        ]
        lines.append(f"replicates per arm: {self.n}")
        return "\n".join(lines)


def two_step_consistency(tree, fam, t, theta, q, rng, n_rep):
    """Markov check: prune t->q in one pass vs t->theta then theta->q.

    Both arms start from the same base tree; the second arm re-marks the
    theta-pruned tree with fresh randomness.  Reports z-scores for the
    mass, height, and node count of the final tree.
    """
    if not t <= theta <= q:
        raise DomainError(f"need t <= theta <= q, got {t}, {theta}, {q}")
    one = np.empty((n_rep, 3))
    two = np.empty((n_rep, 3))
    for k in range(n_rep):
        direct = generate_marks(tree, fam, (t, q), rng).pruned_at(q)
        one[k] = direct.total_mass(), direct.height(), len(direct)
        mid = generate_marks(tree, fam, (t, theta), rng).pruned_at(theta)
        final = generate_marks(mid, fam, (theta, q), rng).pruned_at(q)
        two[k] = final.total_mass(), final.height(), len(final)
    stats = {}
    for j, name in enumerate(("sigma", "height", "nodes")):
        a, b = one[:, j], two[:, j]
        se = math.sqrt(a.var() / n_rep + b.var() / n_rep)
        if se > 0:
            z = (a.mean() - b.mean()) / se
        else:
            z = 0.0 if a.mean() == b.mean() else math.inf
        stats[name] = (float(a.mean()), float(b.mean()), float(se), float(z))
    return TwoStepReport(n_rep, stats)
