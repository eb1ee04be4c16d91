"""
Height-balanced tree overlay of agents.

Positions follow a heap layout: position 0 is the root and the children of
position p are positions arity*p + 1 ... arity*p + arity. Filling positions
in order keeps every level full except possibly the last, so the tree is
height-balanced for its arity.
"""
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True, eq=False)
class TreeOverlay:
    positions: Tuple[int, ...]   # positions[p] = agent id placed at position p
    arity: int = 2
    parent: Tuple[int, ...] = field(init=False)             # by agent id, -1 for the root
    children: Tuple[Tuple[int, ...], ...] = field(init=False)  # by agent id
    pre_order: Tuple[int, ...] = field(init=False)
    post_order: Tuple[int, ...] = field(init=False)

    def __post_init__(self):
        n = len(self.positions)
        if n == 0:
            raise ConfigurationError("a tree overlay needs at least one agent")
        if self.arity < 1:
            raise ConfigurationError(f"tree arity must be >= 1, got {self.arity}", key="numChildren")
        if sorted(self.positions) != list(range(n)):
            raise ConfigurationError("tree positions must be a permutation of the agent ids")

        parent = [-1] * n
        children: List[List[int]] = [[] for _ in range(n)]
        for position in range(1, n):
            agent = self.positions[position]
            parent_agent = self.positions[(position - 1) // self.arity]
            parent[agent] = parent_agent
            children[parent_agent].append(agent)

        pre_order: List[int] = []
        stack = [self.positions[0]]
        while stack:
            agent = stack.pop()
            pre_order.append(agent)
            stack.extend(reversed(children[agent]))

        # Reversed pre-order visits every child before its parent.
        post_order = list(reversed(pre_order))

        object.__setattr__(self, "positions", tuple(int(a) for a in self.positions))
        object.__setattr__(self, "parent", tuple(parent))
        object.__setattr__(self, "children", tuple(tuple(c) for c in children))
        object.__setattr__(self, "pre_order", tuple(pre_order))
        object.__setattr__(self, "post_order", tuple(post_order))

    @classmethod
    def from_positions(cls, positions: Sequence[int], arity: int = 2) -> "TreeOverlay":
        return cls(tuple(positions), arity)

    @property
    def num_agents(self) -> int:
        return len(self.positions)

    @property
    def root(self) -> int:
        return self.positions[0]

    @property
    def height(self) -> int:
        height, position = 0, self.num_agents - 1
        while position > 0:
            position = (position - 1) // self.arity
            height += 1
        return height

    def depth(self, agent: int) -> int:
        depth = 0
        while self.parent[agent] != -1:
            agent = self.parent[agent]
            depth += 1
        return depth

    def subtree(self, agent: int) -> List[int]:
        """All agents in the subtree rooted at agent, agent first."""
        members, stack = [], [agent]
        while stack:
            current = stack.pop()
            members.append(current)
            stack.extend(self.children[current])
        return members


def build_tree(num_agents: int, seed: int, arity: int = 2) -> TreeOverlay:
    """Places the agents at seeded random positions of a balanced tree."""
    if num_agents < 1:
        raise ConfigurationError("a tree overlay needs at least one agent", key="numAgents")
    permutation = np.random.default_rng(seed).permutation(num_agents)
    return TreeOverlay(tuple(int(a) for a in permutation), arity)
