"""Random inputs and brute-force oracles shared by property and acceptance tests."""

from __future__ import annotations

import itertools
import random

from cmigrate.depgraph import Digraph, group_modules
from cmigrate.scanner import SourceModel, scan_sources


def random_digraph(rng: random.Random, max_nodes: int = 20, density: float | None = None) -> Digraph:
    n = rng.randint(0, max_nodes)
    p = density if density is not None else rng.choice([0.05, 0.1, 0.2, 0.35])
    nodes = {f"n{i:02d}" for i in range(n)}
    edges = {(a, b) for a in nodes for b in nodes if a != b and rng.random() < p}
    if nodes and rng.random() < 0.3:
        a = rng.choice(sorted(nodes))
        edges.add((a, a))
    return Digraph(nodes, edges)


def reachability(graph: Digraph) -> dict:
    """Reflexive transitive closure by repeated DFS."""
    succ = graph.successors()
    reach = {}
    for src in graph.nodes:
        seen = {src}
        todo = [src]
        while todo:
            v = todo.pop()
            for w in succ[v]:
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        reach[src] = seen
    return reach


def brute_force_sccs(graph: Digraph) -> set[frozenset]:
    reach = reachability(graph)
    return {frozenset(y for y in graph.nodes if y in reach[x] and x in reach[y]) for x in graph.nodes}


def all_topological_orders(nodes: list, edges: set) -> list[tuple]:
    """Every permutation where each dependency (edge target) precedes its dependent."""
    out = []
    for perm in itertools.permutations(sorted(nodes)):
        pos = {n: i for i, n in enumerate(perm)}
        if all(pos[b] < pos[a] for a, b in edges):
            out.append(perm)
    return out


def random_c_repo(rng: random.Random, max_functions: int = 50, max_groups: int = 8) -> dict[str, str]:
    """A small C repository: one .c file per group, optional paired header."""
    n_groups = rng.randint(1, max_groups)
    n_funcs = rng.randint(1, max_functions)
    names = [f"fn_{i:02d}" for i in range(n_funcs)]
    owner = {name: rng.randrange(n_groups) for name in names}
    p_call = rng.choice([0.03, 0.06, 0.12])
    sources: dict[str, str] = {}
    for g in range(n_groups):
        mine = [n for n in names if owner[n] == g]
        headers = sorted({owner[c] for c in names if owner[c] != g and rng.random() < 0.05})
        lines = [f'#include "g{h}.h"' for h in headers]
        for name in mine:
            callees = [c for c in names if rng.random() < p_call]
            body = "".join(f"    {c}(x);\n" for c in callees)
            if rng.random() < 0.2:
                body += f'    /* {rng.choice(names)}(x) */\n    log_msg("{rng.choice(names)}()");\n'
            lines.append(f"int {name}(int x)\n{{\n{body}    return x;\n}}\n")
        sources[f"g{g}.c"] = "\n".join(lines) + "\n"
        if rng.random() < 0.5 or any(f'"g{g}.h"' in s for s in sources.values()):
            sources[f"g{g}.h"] = "".join(f"int {n}(int x);\n" for n in mine)
    # headers referenced by includes must exist
    for g in range(n_groups):
        sources.setdefault(f"g{g}.h", "")
    return sources


def random_model(rng: random.Random, **kw) -> SourceModel:
    return scan_sources(random_c_repo(rng, **kw))


def schedule_violations(model: SourceModel, schedule) -> list[str]:
    """Brute-force edge scan of a schedule, independent of the graph builders.

    Callee resolution mirrors the scheduling contract (same file, then same
    group, then a unique definition elsewhere), recomputed from raw call sites.
    """
    problems = []
    unit_of = {}
    for u in schedule.units:
        for m in u.members:
            if m in unit_of:
                problems.append(f"{m} scheduled twice")
            unit_of[m] = u.unit_id
    tests = {tuple(t) for t in model.test_functions}
    expected = {fn.qualified_id for fn in model.functions} - tests
    if set(unit_of) != expected:
        problems.append("units do not partition the non-test functions")
    # contiguity of group blocks in group_order
    seen_groups = []
    for u in schedule.units:
        if not seen_groups or seen_groups[-1] != u.group_id:
            seen_groups.append(u.group_id)
    if len(seen_groups) != len(set(seen_groups)):
        problems.append("group blocks are not contiguous")
    if [g for g in schedule.group_order if g in seen_groups] != seen_groups:
        problems.append("group blocks do not follow group_order")

    defs: dict[str, list] = {}
    for fn in model.functions:
        defs.setdefault(fn.name, []).append(fn.qualified_id)
    unit_group = {u.unit_id: u.group_id for u in schedule.units}

    def resolve(caller, name):
        cands = defs.get(name, [])
        if (caller[0], name) in cands:
            return (caller[0], name)
        if len(cands) == 1:
            return cands[0]
        return None

    call_edges = set()
    for fn in model.functions:
        if fn.qualified_id not in unit_of:
            continue
        for name in fn.call_sites:
            callee = resolve(fn.qualified_id, name)
            if callee is not None and callee in unit_of and callee != fn.qualified_id:
                call_edges.add((fn.qualified_id, callee))
    # the file partition itself is verified by the grouping tests
    file_group = {p: g.group_id for g in group_modules(model) for p in g.members}
    grp_edges = {(unit_group[unit_of[a]], unit_group[unit_of[b]]) for a, b in call_edges}
    for e in model.includes:
        if e.from_path in file_group and e.to_path in file_group:
            grp_edges.add((file_group[e.from_path], file_group[e.to_path]))
    grp_edges = {(a, b) for a, b in grp_edges if a != b}
    grp_reach = reachability(Digraph(set(file_group.values()), grp_edges))
    local_reach = {}
    for g in set(unit_group.values()):
        inside = {n for n in unit_of if unit_group[unit_of[n]] == g}
        local_reach.update(reachability(Digraph(inside, {(x, y) for x, y in call_edges
                                                         if x in inside and y in inside})))
    for a, b in sorted(call_edges):
        ua, ub = unit_of[a], unit_of[b]
        ga, gb = unit_group[ua], unit_group[ub]
        if ga == gb:
            if b in local_reach[a] and a in local_reach[b]:
                if ua != ub:
                    problems.append(f"cycle {a}<->{b} split across units")
            elif ub >= ua:
                problems.append(f"callee {b} (unit {ub}) does not precede caller {a} (unit {ua})")
        elif not (ga in grp_reach[gb] and gb in grp_reach[ga]) and ub >= ua:
            problems.append(f"cross-group callee {b} (unit {ub}) does not precede caller {a} (unit {ua})")
    return problems
