"""Structural tests for finite measured trees.

Round-trip style oracles: the surgery operations are checked against each
other (restrict + decompose + graft must reproduce the original tree's
statistics exactly) and against tiny hand-built trees whose heights,
masses and crossing counts are computed by eye.
"""

import json
import math

import numpy as np
import pytest

from levytree.mechanism import DomainError
from levytree.tree import BINARY, INFINITE, LEAF, ROOT, FiniteTree, single_root


def build(parents, lengths, kinds, deltas=None, mus=None, scale=1.0):
    n = len(parents)
    return FiniteTree(
        np.array(parents, dtype=np.int64),
        np.array(lengths, dtype=float),
        np.array(kinds, dtype=np.int8),
        np.zeros(n) if deltas is None else np.array(deltas, dtype=float),
        np.zeros(n) if mus is None else np.array(mus, dtype=float),
        scale,
    )


def single_edge(length=2.0, mu=0.0, scale=1.0):
    return build([-1, 0], [0.0, length], [ROOT, LEAF], mus=[0.0, mu], scale=scale)


def cherry():
    # root -1- binary -1- leaf(mu=.5) / -2- leaf(mu=.25)
    return build(
        [-1, 0, 1, 1],
        [0.0, 1.0, 1.0, 2.0],
        [ROOT, BINARY, LEAF, LEAF],
        mus=[0.0, 0.0, 0.5, 0.25],
    )


def random_tree(rng, n_nodes=40, scale=0.5):
    """Random topology with kinds consistent with child counts."""
    parents = [-1]
    for i in range(1, n_nodes):
        parents.append(int(rng.integers(0, i)))
    counts = np.zeros(n_nodes, dtype=int)
    for p in parents[1:]:
        counts[p] += 1
    kinds, deltas, mus = [ROOT], [0.0], [0.0]
    for i in range(1, n_nodes):
        if counts[i] == 0:
            kinds.append(LEAF)
            deltas.append(0.0)
            mus.append(float(rng.random() < 0.8) * float(rng.exponential(0.3)))
        elif counts[i] == 2:
            kinds.append(BINARY)
            deltas.append(0.0)
            mus.append(0.0)
        else:
            kinds.append(INFINITE)
            deltas.append(float(rng.exponential(1.0)) + 0.05)
            mus.append(0.0)
    lengths = [0.0] + list(rng.exponential(0.7, n_nodes - 1) + 1e-3)
    return build(parents, lengths, kinds, deltas, mus, scale)


# -- basic statistics ------------------------------------------------------


def test_height_and_mass_of_cherry():
    t = cherry()
    assert t.height() == 3.0
    assert t.total_mass() == 0.75
    assert len(t) == 4


def test_level_mass_single_edge():
    t = single_edge(length=2.0, scale=0.3)
    assert t.level_mass(1.0) == pytest.approx(0.3)
    assert t.level_mass(2.0) == pytest.approx(0.3)
    assert t.level_mass(2.0000001) == 0.0
    assert t.level_mass(0.0) == 0.0


def test_level_mass_root_only():
    t = single_root()
    assert t.level_mass(0.5) == 0.0
    assert t.height() == 0.0
    assert t.total_mass() == 0.0


def test_level_mass_counts_crossings():
    t = cherry()
    assert t.level_mass(0.5) == 1.0
    assert t.level_mass(1.5) == 2.0
    assert t.level_mass(2.5) == 1.0


def test_integral_of_level_mass_is_edge_length_mass():
    # leaves carry scale * (chain length) so total mass equals the integral
    t = build(
        [-1, 0, 1, 1],
        [0.0, 1.0, 1.0, 2.0],
        [ROOT, BINARY, LEAF, LEAF],
        mus=[0.0, 0.0, 2.0 * 0.5, 2.0 * 0.5],
        scale=0.5,
    )
    delta = 1e-3
    grid = np.arange(delta, t.height() + delta, delta)
    approx = sum(t.level_mass(a) for a in grid) * delta
    crossings_bound = 2.0
    assert abs(approx - t.total_mass()) <= 2.0 * delta * crossings_bound


def test_negative_level_rejected():
    with pytest.raises(DomainError):
        cherry().level_mass(-0.1)


# -- restriction --------------------------------------------------------------


def test_restrict_above_height_is_identity():
    t = cherry()
    assert t.restrict_below(10.0) is t


def test_restrict_to_zero_keeps_root_only():
    t = cherry().restrict_below(0.0)
    assert len(t) == 1
    assert t.height() == 0.0


def test_restrict_truncates_single_edge():
    t = single_edge(length=2.0).restrict_below(1.0)
    assert len(t) == 2
    assert t.height() == 1.0
    assert t.kind[1] == LEAF
    assert t.mu[1] == 0.0
    assert t.total_mass() == 0.0


def test_restrict_height_clips():
    rng = np.random.default_rng(3)
    for _ in range(20):
        t = random_tree(rng)
        a = float(rng.uniform(0.0, t.height() * 1.2))
        assert t.restrict_below(a).height() == pytest.approx(min(a, t.height()), abs=1e-12)


def test_restrict_keeps_node_exactly_at_level():
    t = cherry().restrict_below(2.0)
    # leaf at depth 2 survives with its atom; the deeper leaf becomes a stub
    assert t.total_mass() == 0.5
    assert t.height() == 2.0
    kinds = sorted(int(k) for k in t.kind)
    assert kinds.count(LEAF) == 2


# -- grafting -----------------------------------------------------------------


def test_graft_nothing_is_identity():
    t = cherry()
    out = t.graft([])
    assert len(out) == len(t)
    assert out.height() == t.height()
    assert out.total_mass() == t.total_mass()
    np.testing.assert_allclose(sorted(out.depth), sorted(t.depth))


def test_graft_masses_add():
    spine = single_edge(length=3.0, mu=0.0)
    subs = [single_edge(length=1.0, mu=m) for m in (1.0, 2.0, 3.0)]
    out = spine.graft([((1, 0.5), subs[0]), ((1, 1.5), subs[1]), (1, subs[2])])
    assert out.total_mass() == 6.0


def test_graft_height_from_offset():
    spine = single_edge(length=3.0)
    sub = single_edge(length=5.0, mu=1.0)
    out = spine.graft([((1, 2.0), sub)])
    assert out.height() == pytest.approx(7.0)
    out = spine.graft([((1, 1.0), single_edge(length=0.5, mu=1.0))])
    assert out.height() == pytest.approx(3.0)


def test_graft_at_node_and_at_offset_agree_on_mass():
    t = cherry()
    sub = single_edge(length=1.0, mu=4.0)
    by_node = t.graft([(1, sub)])
    by_edge = t.graft([((2, 0.5), sub)])
    assert by_node.total_mass() == by_edge.total_mass() == 4.75


def test_graft_rejects_bad_points():
    t = cherry()
    sub = single_edge(1.0)
    with pytest.raises(DomainError):
        t.graft([(17, sub)])
    with pytest.raises(DomainError):
        t.graft([((2, 5.0), sub)])  # offset past edge length
    with pytest.raises(DomainError):
        t.graft([((0, 0.5), sub)])  # no edge into the root


def test_graft_onto_massive_leaf_rejected():
    t = cherry()
    with pytest.raises(DomainError):
        t.graft([(2, single_edge(1.0))])


def test_graft_empty_sub_is_noop():
    t = cherry()
    out = t.graft([((3, 1.0), single_root())])
    assert len(out) == len(t)
    assert out.height() == t.height()


# -- decomposition ----------------------------------------------------------------


def test_subtrees_above_height_is_empty():
    dec = cherry().subtrees_above(5.0)
    assert len(dec) == 0


def test_subtrees_above_zero_splits_at_root():
    dec = cherry().subtrees_above(0.0)
    assert len(dec) == 1
    comp = dec.entries[0].component
    assert comp.height() == cherry().height()
    assert comp.total_mass() == cherry().total_mass()


def test_subtrees_above_cherry_midlevel():
    t = cherry()
    dec = t.subtrees_above(1.5)
    assert len(dec) == 2
    masses = sorted(e.component.total_mass() for e in dec.entries)
    assert masses == [0.25, 0.5]
    heights = sorted(e.component.height() for e in dec.entries)
    assert heights == [0.5, 1.5]
    assert all(e.height == 1.5 for e in dec.entries)


def test_components_attach_at_node_sitting_on_level():
    t = cherry()
    dec = t.subtrees_above(1.0)  # binary node is exactly at level 1
    assert len(dec) == 2
    below = t.restrict_below(1.0)
    assert {e.attach for e in dec.entries} == {1}
    assert below.kind[1] == BINARY


def _stats(t, levels):
    return (
        len(t),
        t.total_mass(),
        t.height(),
        [t.level_mass(b) for b in levels],
    )


def test_roundtrip_cherry():
    t = cherry()
    for a in (0.5, 1.0, 1.5, 2.0, 2.5):
        back = t.restrict_below(a).graft(t.subtrees_above(a).graft_list())
        levels = np.linspace(0.1, 3.1, 13)
        n0, m0, h0, z0 = _stats(t, levels)
        n1, m1, h1, z1 = _stats(back, levels)
        assert n1 == n0
        assert m1 == pytest.approx(m0, rel=1e-14)
        assert h1 == pytest.approx(h0, rel=1e-14)
        assert z1 == z0


def test_roundtrip_random_trees():
    rng = np.random.default_rng(12)
    for _ in range(100):
        t = random_tree(rng, n_nodes=int(rng.integers(2, 60)))
        a = float(rng.uniform(0.0, t.height() * 1.05))
        dec = t.subtrees_above(a)
        back = t.restrict_below(a).graft(dec.graft_list())
        levels = rng.uniform(0.0, t.height() * 1.1, 15)
        n0, m0, h0, z0 = _stats(t, levels)
        n1, m1, h1, z1 = _stats(back, levels)
        assert n1 == n0
        assert m1 == pytest.approx(m0, rel=1e-12, abs=1e-15)
        assert abs(h1 - h0) < 1e-12 * max(1.0, h0)
        assert z1 == z0


def test_decomposition_components_account_for_upper_mass():
    rng = np.random.default_rng(5)
    for _ in range(25):
        t = random_tree(rng)
        a = float(rng.uniform(0.1, t.height()))
        dec = t.subtrees_above(a)
        upper = sum(e.component.total_mass() for e in dec.entries)
        lower = t.restrict_below(a).total_mass()
        assert upper + lower == pytest.approx(t.total_mass(), rel=1e-12)


# -- validation ----------------------------------------------------------------------


def test_constructor_rejects_bad_shapes():
    with pytest.raises(DomainError):
        build([-1, 0], [0.0, 0.0], [ROOT, LEAF])  # zero edge length
    with pytest.raises(DomainError):
        build([-1, 1], [0.0, 1.0], [ROOT, LEAF])  # parent not below child
    with pytest.raises(DomainError):
        build([-1, 0], [0.0, 1.0], [ROOT, ROOT])  # two roots
    with pytest.raises(DomainError):
        build([-1, 0], [0.0, 1.0], [ROOT, BINARY], mus=[0.0, 1.0])  # mass off-leaf
    with pytest.raises(DomainError):
        build([-1, 0], [0.0, 1.0], [ROOT, INFINITE])  # infinite node needs delta
    with pytest.raises(DomainError):
        build([-1, 0], [0.0, 1.0], [ROOT, LEAF], scale=0.0)


def test_delta_only_on_infinite_nodes():
    with pytest.raises(DomainError):
        build([-1, 0], [0.0, 1.0], [ROOT, LEAF], deltas=[0.0, 1.0])
    t = build([-1, 0, 1], [0.0, 1.0, 1.0], [ROOT, INFINITE, LEAF], deltas=[0.0, 2.5, 0.0])
    assert t.delta[1] == 2.5


# -- serialization ----------------------------------------------------------------------


def test_json_roundtrip():
    rng = np.random.default_rng(9)
    t = random_tree(rng, n_nodes=30, scale=0.25)
    back = FiniteTree.from_json(t.to_json())
    assert len(back) == len(t)
    assert back.scale == t.scale
    np.testing.assert_array_equal(back.parent, t.parent)
    np.testing.assert_allclose(back.depth, t.depth)
    np.testing.assert_array_equal(back.kind, t.kind)
    np.testing.assert_allclose(back.mu, t.mu)
    np.testing.assert_allclose(back.delta, t.delta)


def test_json_fields():
    blob = json.loads(cherry().to_json())
    assert blob["scale"] == 1.0
    kinds = [node["kind"] for node in blob["nodes"]]
    assert kinds == ["root", "binary", "leaf", "leaf"]
    assert "mu" in blob["nodes"][2]
    assert "delta" not in blob["nodes"][1]
