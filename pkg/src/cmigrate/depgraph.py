"""Module grouping, SCC condensation and the two-stage translation schedule.

Edges everywhere point from dependent to dependency (caller to callee,
includer to included), and a topological order lists dependencies first.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import posixpath
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable

from .errors import CycleDetected
from .scanner import C_SOURCE, HEADER, ScanConfig, SourceModel, is_test_path


@dataclass(frozen=True)
class ModuleGroup:
    group_id: str
    members: tuple[str, ...]
    is_test_group: bool = False


@dataclass
class Digraph:
    """Directed graph; an edge (a, b) means a depends on b."""

    nodes: set = field(default_factory=set)
    edges: set = field(default_factory=set)
    diagnostics: list[str] = field(default_factory=list)

    def successors(self) -> dict:
        succ = {n: set() for n in self.nodes}
        for a, b in self.edges:
            succ[a].add(b)
        return succ


# Both layers share one representation.
CallGraph = Digraph
ModuleGraph = Digraph


@dataclass
class Condensation:
    components: list[tuple]
    edges: set[tuple[int, int]]
    unit_map: dict

    def as_digraph(self) -> Digraph:
        return Digraph(set(range(len(self.components))), set(self.edges))


@dataclass(frozen=True)
class TranslationUnit:
    unit_id: int
    members: tuple[tuple[str, str], ...]
    group_id: str


@dataclass
class TranslationSchedule:
    units: list[TranslationUnit]
    group_order: list[str]

    def to_dict(self) -> dict:
        return {
            "group_order": list(self.group_order),
            "units": [
                {
                    "unit_id": u.unit_id,
                    "group_id": u.group_id,
                    "members": [{"path": p, "name": n} for p, n in u.members],
                }
                for u in self.units
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "TranslationSchedule":
        units = [
            TranslationUnit(u["unit_id"], tuple((m["path"], m["name"]) for m in u["members"]), u["group_id"])
            for u in d["units"]
        ]
        return cls(units=units, group_order=list(d["group_order"]))

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def functions(self) -> list[tuple[str, str]]:
        return [m for u in self.units for m in u.members]


def _stem(path: str) -> str:
    return posixpath.splitext(path)[0]


def group_modules(model: SourceModel, config: ScanConfig | None = None) -> list[ModuleGroup]:
    """Partition the files into stem-paired module groups.

    An unpaired header joins the group of the only ``.c`` file including
    it; otherwise it stands alone.
    """
    config = config or ScanConfig()
    by_stem: dict[str, list[str]] = defaultdict(list)
    for f in model.files:
        by_stem[_stem(f.path)].append(f.path)
    kinds = {f.path: f.kind for f in model.files}
    includers: dict[str, set[str]] = defaultdict(set)
    for e in model.includes:
        if kinds[e.from_path] == C_SOURCE:
            includers[e.to_path].add(e.from_path)

    assignment: dict[str, str] = {}
    for stem, paths in by_stem.items():
        has_c = any(kinds[p] == C_SOURCE for p in paths)
        for p in paths:
            if has_c or kinds[p] != HEADER:
                assignment[p] = stem
    for stem, paths in by_stem.items():
        for p in paths:
            if p in assignment:
                continue
            inc = includers.get(p, set())
            if len(inc) == 1:
                assignment[p] = _stem(next(iter(inc)))
            else:
                assignment[p] = stem

    members: dict[str, list[str]] = defaultdict(list)
    for p, g in assignment.items():
        members[g].append(p)
    groups = []
    for gid in sorted(members):
        paths = tuple(sorted(members[gid]))
        groups.append(ModuleGroup(gid, paths, all(is_test_path(p, config) for p in paths)))
    return groups


class _Resolver:
    """Resolve a called name: same file, then same group, then a unique group."""

    def __init__(self, model: SourceModel, groups: list[ModuleGroup]):
        self.group_of = {p: g.group_id for g in groups for p in g.members}
        self.defs: dict[str, list[tuple[str, str]]] = defaultdict(list)
        for fn in model.functions:
            self.defs[fn.name].append(fn.qualified_id)

    def resolve(self, caller: tuple[str, str], name: str):
        """Return (qid or None, diagnostic or None)."""
        cands = self.defs.get(name)
        if not cands:
            return None, None
        path = caller[0]
        if (path, name) in cands:
            return (path, name), None
        gid = self.group_of[path]
        local = [q for q in cands if self.group_of[q[0]] == gid]
        if len(local) == 1:
            return local[0], None
        if len(local) > 1:
            return None, f"ambiguous callee {name} from {path}:{caller[1]} within group {gid}"
        other_groups = sorted({self.group_of[q[0]] for q in cands})
        if len(other_groups) == 1 and len(cands) == 1:
            return cands[0], None
        return None, f"AmbiguousCallee: {name} called from {path}:{caller[1]} is defined in " + ", ".join(
            f"{q[0]}" for q in sorted(cands)
        )


def build_intra_graph(group: ModuleGroup, model: SourceModel, groups: list[ModuleGroup] | None = None) -> CallGraph:
    groups = groups or group_modules(model)
    resolver = _Resolver(model, groups)
    members = set(group.members)
    graph = Digraph()
    fns = [fn for fn in model.functions if fn.path in members]
    graph.nodes = {fn.qualified_id for fn in fns}
    for fn in fns:
        for name in sorted(fn.call_sites):
            callee, _diag = resolver.resolve(fn.qualified_id, name)
            if callee is not None and callee in graph.nodes:
                graph.edges.add((fn.qualified_id, callee))
    return graph


def build_inter_graph(groups: list[ModuleGroup], model: SourceModel) -> ModuleGraph:
    resolver = _Resolver(model, groups)
    group_of = resolver.group_of
    graph = Digraph(nodes={g.group_id for g in groups})
    for e in model.includes:
        a, b = group_of[e.from_path], group_of[e.to_path]
        if a != b:
            graph.edges.add((a, b))
    for fn in model.functions:
        here = group_of[fn.path]
        for name in sorted(fn.call_sites):
            callee, diag = resolver.resolve(fn.qualified_id, name)
            if diag:
                graph.diagnostics.append(diag)
            if callee is None:
                continue
            there = group_of[callee[0]]
            if there != here:
                graph.edges.add((here, there))
    return graph


def strongly_connected_components(graph: Digraph, key: Callable = None) -> list[list]:
    """Iterative Tarjan; nodes visited in ``key`` order for determinism."""
    key = key or (lambda n: n)
    succ = {n: sorted(s, key=key) for n, s in graph.successors().items()}
    index: dict = {}
    low: dict = {}
    on_stack: set = set()
    stack: list = []
    comps: list[list] = []
    counter = 0
    for root in sorted(graph.nodes, key=key):
        if root in index:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ[w])))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp, key=key))
    return comps


def collapse_cycles(graph: Digraph, key: Callable = None) -> Condensation:
    """Condense each SCC to one node; component ids follow member order."""
    key = key or (lambda n: n)
    comps = strongly_connected_components(graph, key)
    comps.sort(key=lambda c: key(c[0]))
    unit_map = {n: i for i, comp in enumerate(comps) for n in comp}
    edges = {(unit_map[a], unit_map[b]) for a, b in graph.edges if unit_map[a] != unit_map[b]}
    return Condensation([tuple(c) for c in comps], edges, unit_map)


def kahn_sort(dag: Digraph, tiebreak: Callable[[Hashable], object] = None) -> list:
    """Dependencies-first topological order; ready nodes leave in tiebreak order."""
    tiebreak = tiebreak or (lambda n: n)
    remaining = {n: 0 for n in dag.nodes}
    dependents: dict = defaultdict(list)
    for a, b in dag.edges:
        if a == b:
            raise CycleDetected(f"self-loop on {a!r}")
        remaining[a] += 1
        dependents[b].append(a)
    heap = [(tiebreak(n), i, n) for i, n in enumerate(sorted((n for n, d in remaining.items() if d == 0), key=tiebreak))]
    heapq.heapify(heap)
    seq = len(heap)
    order = []
    while heap:
        _, _, n = heapq.heappop(heap)
        order.append(n)
        for d in dependents[n]:
            remaining[d] -= 1
            if remaining[d] == 0:
                heapq.heappush(heap, (tiebreak(d), seq, d))
                seq += 1
    if len(order) != len(dag.nodes):
        raise CycleDetected("graph has a cycle")
    return order


def _condensed_order(graph: Digraph) -> list[tuple]:
    cond = collapse_cycles(graph)
    order = kahn_sort(cond.as_digraph(), tiebreak=lambda i: cond.components[i])
    return [cond.components[i] for i in order]


def build_schedule(model: SourceModel, config: ScanConfig | None = None,
                   groups: Iterable[ModuleGroup] | None = None) -> TranslationSchedule:
    groups = list(groups) if groups is not None else group_modules(model, config)
    inter = build_inter_graph(groups, model)
    group_order = [g for comp in _condensed_order(inter) for g in comp]
    by_id = {g.group_id: g for g in groups}
    tests = {tuple(q) for q in model.test_functions}
    units: list[TranslationUnit] = []
    for gid in group_order:
        intra = build_intra_graph(by_id[gid], model, groups)
        intra.nodes = {n for n in intra.nodes if n not in tests}
        intra.edges = {(a, b) for a, b in intra.edges if a in intra.nodes and b in intra.nodes}
        for comp in _condensed_order(intra):
            units.append(TranslationUnit(len(units), tuple(comp), gid))
    return TranslationSchedule(units=units, group_order=group_order)
