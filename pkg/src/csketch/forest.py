"""Disjoint-set forest clustering trace results into infection zones.

Every user starts as a free singleton. Pathway edges from tracing are folded
in one by one: each edge is kept in the forest's edge list, and when its two
endpoints live in different trees they are merged (union by rank with path
compression); an edge that would close a cycle is stored but not merged.
Statuses mark users as infected or suspected, and a cluster is a non-free
connected group - one outbreak zone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

FREE = "free"
INFECTED = "infected"
SUSPECTED = "suspected"


class ForestError(ValueError):
    pass


@dataclass(frozen=True)
class StoredEdge:
    source: int
    target: int
    accepted: bool


@dataclass
class Cluster:
    root: int
    members: list[int]
    infected: list[int]
    suspected: list[int]
    edges: list[tuple[int, int]] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.members)


class InfectionForest:
    def __init__(self, population: int):
        if population < 1:
            raise ForestError("population must be >= 1")
        self.population = population
        self.parent = list(range(population))
        self.rank = [0] * population
        self.status = [FREE] * population
        self.edge_list: list[StoredEdge] = []

    def _check_user(self, user: int) -> None:
        if not 0 <= user < self.population:
            raise ForestError(f"unknown user {user}")

    def find(self, user: int) -> int:
        self._check_user(user)
        root = user
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[user] != root:
            self.parent[user], user = root, self.parent[user]
        return root

    def _union(self, root_a: int, root_b: int) -> None:
        # Equal ranks break toward the first root.
        if self.rank[root_a] < self.rank[root_b]:
            root_a, root_b = root_b, root_a
        self.parent[root_b] = root_a
        if self.rank[root_a] == self.rank[root_b]:
            self.rank[root_a] += 1

    def build(
        self,
        edges: list[tuple[int, int]],
        infected: list[int] = (),
        suspected: list[int] = (),
    ) -> None:
        """Fold pathway edges and status updates into the forest."""
        for source, target in edges:
            a = self.find(source)
            b = self.find(target)
            accepted = a != b
            self.edge_list.append(StoredEdge(source, target, accepted))
            if accepted:
                self._union(a, b)
        for user in suspected:
            self._check_user(user)
            if self.status[user] != INFECTED:
                self.status[user] = SUSPECTED
        for user in infected:
            self._check_user(user)
            self.status[user] = INFECTED

    def clusters(self) -> list[Cluster]:
        """Non-free users grouped by tree root; free singletons are omitted."""
        groups: dict[int, Cluster] = {}
        for user in range(self.population):
            if self.status[user] == FREE:
                continue
            root = self.find(user)
            cluster = groups.get(root)
            if cluster is None:
                cluster = groups[root] = Cluster(root=root, members=[], infected=[], suspected=[])
            cluster.members.append(user)
            (cluster.infected if self.status[user] == INFECTED else cluster.suspected).append(user)
        for edge in self.edge_list:
            if edge.accepted:
                cluster = groups.get(self.find(edge.source))
                if cluster is not None:
                    cluster.edges.append((edge.source, edge.target))
        return sorted(groups.values(), key=lambda c: c.root)

    def infection_tree(self, root: int) -> list[tuple[int, list[tuple[int, int]]]]:
        """Accepted edges of one cluster arranged per infection source.

        Returns (source, edges) pairs, edges in submission order. A source is
        a cluster member with no accepted inbound edge - normally the
        infected user that seeded the zone; a merged zone yields one tree per
        source.
        """
        self._check_user(root)
        if self.find(root) != root:
            raise ForestError(f"user {root} is not a cluster representative")
        edges = [e for e in self.edge_list if e.accepted and self.find(e.source) == root]
        parent_of: dict[int, int] = {}
        for e in edges:
            parent_of.setdefault(e.target, e.source)

        def source_of(user: int) -> int:
            while user in parent_of:
                user = parent_of[user]
            return user

        trees: dict[int, list[tuple[int, int]]] = {}
        for e in edges:
            trees.setdefault(source_of(e.source), []).append((e.source, e.target))
        if not trees and self.status[root] != FREE:
            return [(root, [])]
        return sorted(trees.items())

    def max_chain_length(self) -> int:
        """Longest parent chain over all users, measured without compressing."""
        longest = 0
        for user in range(self.population):
            length = 0
            while self.parent[user] != user:
                user = self.parent[user]
                length += 1
            longest = max(longest, length)
        return longest

    def to_dict(self) -> dict:
        return {
            "parent": list(self.parent),
            "rank": list(self.rank),
            "status": list(self.status),
            "edges": [[e.source, e.target, e.accepted] for e in self.edge_list],
        }

    @classmethod
    def from_dict(cls, data: dict, population: int) -> "InfectionForest":
        forest = cls(population)
        parent = data.get("parent")
        if parent:
            if len(parent) != population:
                raise ForestError("forest state does not match population size")
            forest.parent = list(parent)
            forest.rank = list(data["rank"])
            forest.status = list(data["status"])
            forest.edge_list = [StoredEdge(s, t, bool(a)) for s, t, a in data.get("edges", [])]
        return forest
