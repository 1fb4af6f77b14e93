"""Enumeration of small scripted behavior trees and an engine driver for them."""

import itertools

from scenariogen.behavior import FAILED, SUCCEEDED, ConcurrentRun, ScriptedRun, SequentialRun, TickContext

KINDS = ("seq", "all", "any")
LEAVES = tuple(("leaf", d, o) for d in (1, 2, 3) for o in (SUCCEEDED, FAILED))
HORIZON = 12


def _shapes(depth, leaves):
    if leaves == 1:
        yield "L"
    if depth == 0:
        return
    for k in range(1, 4):
        for parts in itertools.product(range(1, leaves + 1), repeat=k):
            if sum(parts) != leaves:
                continue
            for chs in itertools.product(*[list(_shapes(depth - 1, p)) for p in parts]):
                yield ("C", chs)


def _fill(shape, kinds, leaves):
    if shape == "L":
        return next(leaves)
    return (next(kinds), tuple(_fill(c, kinds, leaves) for c in shape[1]))


def _count(shape, what):
    if shape == "L":
        return int(what == "L")
    return int(what == "C") + sum(_count(c, what) for c in shape[1])


def all_trees(max_leaves=3, depth=2):
    """Every composite tree of depth <= ``depth`` with at most ``max_leaves`` scripted leaves."""
    for n in range(1, max_leaves + 1):
        for shape in _shapes(depth, n):
            if shape == "L":
                continue
            for kinds in itertools.product(KINDS, repeat=_count(shape, "C")):
                for leaves in itertools.product(LEAVES, repeat=_count(shape, "L")):
                    yield _fill(shape, iter(kinds), iter(leaves))


def build(tree):
    if tree[0] == "leaf":
        return ScriptedRun(tree[1], tree[2])
    children = [build(c) for c in tree[1]]
    if tree[0] == "seq":
        return SequentialRun(children)
    return ConcurrentRun(children, "all-succeed" if tree[0] == "all" else "any-succeeds")


def engine_timeline(tree, horizon=HORIZON):
    root = build(tree)
    nodes = list(root.walk())
    rows = {i: [] for i in range(len(nodes))}
    for t in range(horizon):
        root.tick(TickContext(None, t, 0.05))
        for i, n in enumerate(nodes):
            rows[i].append(n.status)
    return rows
