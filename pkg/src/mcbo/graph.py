"""Causal DAG with attached action variables.

Nodes are indexed ``0..m`` in a stored topological order; node ``m`` is the
reward ``Y``.  Action variables are extra root nodes that feed one or more
observed nodes.  In the common layout each node owns one action block, but
function-network tasks share actions between nodes (Ackley, Rosenbrock), so
actions are stored as their own entities with a list of children.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence


class GraphError(ValueError):
    pass


class CycleDetected(GraphError):
    pass


class ParentIndexOutOfRange(GraphError):
    pass


class BadTopoOrder(GraphError):
    pass


@dataclass(frozen=True)
class Dag:
    """Known causal skeleton.

    Attributes:
        parents: ``parents[i]`` lists the observed parents of node ``i``.
        obs_dims: output dimension of every node.
        action_dims: dimension of every action variable.
        action_children: ``action_children[j]`` lists the nodes action ``j`` feeds.
    """

    parents: tuple[tuple[int, ...], ...]
    obs_dims: tuple[int, ...]
    action_dims: tuple[int, ...] = ()
    action_children: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(tuple(int(p) for p in ps) for ps in self.parents))
        object.__setattr__(self, "obs_dims", tuple(int(d) for d in self.obs_dims))
        object.__setattr__(self, "action_dims", tuple(int(d) for d in self.action_dims))
        object.__setattr__(
            self, "action_children", tuple(tuple(int(c) for c in cs) for cs in self.action_children)
        )
        if len(self.parents) != len(self.obs_dims):
            raise GraphError("parents and obs_dims must have one entry per node")
        if len(self.action_dims) != len(self.action_children):
            raise GraphError("action_dims and action_children must have equal length")

    @classmethod
    def from_nodes(
        cls,
        parents: Sequence[Sequence[int]],
        obs_dims: Sequence[int] | None = None,
        action_dims: Sequence[int] | None = None,
    ) -> "Dag":
        """Build a DAG where each node with ``action_dims[i] > 0`` owns one action."""
        n = len(parents)
        obs_dims = [1] * n if obs_dims is None else list(obs_dims)
        action_dims = [0] * n if action_dims is None else list(action_dims)
        adims, achildren = [], []
        for i, q in enumerate(action_dims):
            if q > 0:
                adims.append(q)
                achildren.append((i,))
        return cls(tuple(map(tuple, parents)), tuple(obs_dims), tuple(adims), tuple(achildren))

    @classmethod
    def chain(cls, n: int, actions: bool | Iterable[int] = False) -> "Dag":
        """``X0 -> X1 -> ... -> X_{n-1}``; ``actions`` is True (every node) or a set of nodes."""
        parents = [()] + [(i - 1,) for i in range(1, n)]
        if actions is True:
            act = [1] * n
        elif actions is False:
            act = [0] * n
        else:
            chosen = set(actions)
            act = [1 if i in chosen else 0 for i in range(n)]
        return cls.from_nodes(parents, action_dims=act)

    # -- derived structure --------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return len(self.parents)

    @property
    def reward_node(self) -> int:
        return self.num_nodes - 1

    @property
    def num_actions(self) -> int:
        return len(self.action_dims)

    @property
    def total_action_dim(self) -> int:
        return sum(self.action_dims)

    @cached_property
    def action_slices(self) -> tuple[slice, ...]:
        out, start = [], 0
        for q in self.action_dims:
            out.append(slice(start, start + q))
            start += q
        return tuple(out)

    @cached_property
    def node_actions(self) -> tuple[tuple[int, ...], ...]:
        """Action variables feeding each node, in ascending action order."""
        per = [[] for _ in range(self.num_nodes)]
        for j, children in enumerate(self.action_children):
            for c in children:
                per[c].append(j)
        return tuple(tuple(p) for p in per)

    @cached_property
    def node_action_index(self) -> tuple[tuple[int, ...], ...]:
        """Positions in the flat action vector read by each node."""
        out = []
        for acts in self.node_actions:
            idx: list[int] = []
            for j in acts:
                s = self.action_slices[j]
                idx.extend(range(s.start, s.stop))
            out.append(tuple(idx))
        return tuple(out)

    def parent_dim(self, i: int) -> int:
        return sum(self.obs_dims[p] for p in self.parents[i])

    def action_dim(self, i: int) -> int:
        return len(self.node_action_index[i])

    def input_dim(self, i: int) -> int:
        return self.parent_dim(i) + self.action_dim(i)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        ch = [[] for _ in range(self.num_nodes)]
        for i, ps in enumerate(self.parents):
            for p in ps:
                ch[p].append(i)
        return tuple(tuple(c) for c in ch)

    def edges(self) -> list[tuple[int, int]]:
        return [(p, i) for i, ps in enumerate(self.parents) for p in ps]

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        owned = self._owned_actions()
        nodes = []
        for i in range(self.num_nodes):
            q = 0 if owned is None else sum(self.action_dims[j] for j in owned.get(i, ()))
            nodes.append({"obs_dim": self.obs_dims[i], "action_dim": q, "parents": list(self.parents[i])})
        out: dict = {"nodes": nodes}
        if owned is None:
            out["actions"] = [
                {"dim": q, "children": list(c)} for q, c in zip(self.action_dims, self.action_children)
            ]
        return out

    def _owned_actions(self) -> dict[int, list[int]] | None:
        """Map node -> its single owned action, or None for shared/multiple actions."""
        owned: dict[int, list[int]] = {}
        for j, cs in enumerate(self.action_children):
            if len(cs) != 1 or cs[0] in owned:
                return None
            owned[cs[0]] = [j]
        return owned

    @classmethod
    def from_json(cls, obj: dict | str | Path) -> "Dag":
        """Parse ``{"nodes": [{"obs_dim", "action_dim", "parents"}, ...]}``.

        An optional top-level ``"actions": [{"dim": q, "children": [...]}]`` list
        declares shared actions; these are appended after the per-node ones.
        """
        if isinstance(obj, (str, Path)):
            obj = json.loads(Path(obj).read_text())
        nodes = obj["nodes"]
        parents = [n.get("parents", []) for n in nodes]
        obs_dims = [n.get("obs_dim", 1) for n in nodes]
        base = cls.from_nodes(parents, obs_dims, [n.get("action_dim", 0) for n in nodes])
        adims = list(base.action_dims)
        achildren = list(base.action_children)
        for a in obj.get("actions", []):
            adims.append(a.get("dim", 1))
            achildren.append(tuple(a["children"]))
        dag = cls(base.parents, base.obs_dims, tuple(adims), tuple(achildren))
        validate_dag(dag)
        return dag


def validate_dag(dag: Dag) -> None:
    """Raise a :class:`GraphError` subclass unless ``dag`` is well formed."""
    n = dag.num_nodes
    if n == 0:
        raise GraphError("dag has no nodes")
    for i, ps in enumerate(dag.parents):
        for p in ps:
            if not 0 <= p < n:
                raise ParentIndexOutOfRange(f"node {i} has parent {p} outside [0, {n - 1}]")
    for j, cs in enumerate(dag.action_children):
        for c in cs:
            if not 0 <= c < n:
                raise ParentIndexOutOfRange(f"action {j} feeds node {c} outside [0, {n - 1}]")

    # Kahn's algorithm for cycle detection, independent of the stored order.
    indeg = [len(set(ps)) for ps in dag.parents]
    children = [[] for _ in range(n)]
    for i, ps in enumerate(dag.parents):
        for p in set(ps):
            children[p].append(i)
    queue = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while queue:
        u = queue.pop()
        seen += 1
        for c in children[u]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    if seen != n:
        raise CycleDetected("graph contains a directed cycle")

    for i, ps in enumerate(dag.parents):
        for p in ps:
            if p >= i:
                raise BadTopoOrder(f"edge {p}->{i} points backwards in the stored order")
    if dag.obs_dims[-1] != 1:
        raise GraphError("reward node must be scalar")


def max_depth(dag: Dag) -> int:
    """Longest path, in edges, from any root of the action-augmented graph to ``Y``.

    Action variables count as root nodes, so a chain with an action on its
    first node is one edge deeper than the bare chain.
    """
    m = dag.reward_node
    # dist[i] = longest path from node i to Y, -1 if Y unreachable
    dist = [-1] * dag.num_nodes
    dist[m] = 0
    for i in range(m - 1, -1, -1):
        best = -1
        for c in dag.children[i]:
            if dist[c] >= 0:
                best = max(best, dist[c] + 1)
        dist[i] = best
    depth = max(dist)
    for cs in dag.action_children:
        reach = [dist[c] + 1 for c in cs if dist[c] >= 0]
        if reach:
            depth = max(depth, max(reach))
    return depth


def max_parents(dag: Dag) -> int:
    """Largest number of observed parents of any node (actions excluded)."""
    return max(len(set(ps)) for ps in dag.parents)


def _redundant(dag: Dag, node: int, others: frozenset[int]) -> bool:
    """True when every directed path ``node -> ... -> Y`` hits ``others``."""
    m = dag.reward_node
    stack = [node]
    visited = {node}
    while stack:
        u = stack.pop()
        for c in dag.children[u]:
            if c in others or c in visited:
                continue
            if c == m:
                return False
            visited.add(c)
            stack.append(c)
    return True


def minimal_intervention_sets(
    dag: Dag, candidate_targets: Iterable[Iterable[int]]
) -> list[frozenset[int]]:
    """Drop candidate target sets containing a screened-off member.

    A member ``i`` of ``I`` is redundant when all of its directed paths to the
    reward pass through ``I \\ {i}``: clamping those nodes makes ``do(X_i)``
    irrelevant to ``Y``.  Output is de-duplicated and sorted by size, then
    lexicographically.
    """
    m = dag.reward_node
    kept: set[frozenset[int]] = set()
    for cand in candidate_targets:
        s = frozenset(int(i) for i in cand)
        if m in s:
            raise GraphError("the reward node cannot be an intervention target")
        if any(not 0 <= i < m for i in s):
            raise ParentIndexOutOfRange(f"target set {sorted(s)} has nodes outside [0, {m - 1}]")
        if all(not _redundant(dag, i, s - {i}) for i in s):
            kept.add(s)
    return sorted(kept, key=lambda t: (len(t), sorted(t)))


def powerset(nodes: Iterable[int], max_size: int | None = None) -> list[frozenset[int]]:
    nodes = sorted(set(nodes))
    top = len(nodes) if max_size is None else min(max_size, len(nodes))
    return [frozenset(c) for r in range(top + 1) for c in itertools.combinations(nodes, r)]
