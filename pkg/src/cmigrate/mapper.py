"""Map scheduled C functions to Rust declarations.

Tier 1 is a static search over ``fn`` declarations, exact name first and
then a normalized name (lowercase, ``_`` and ``-`` removed).  Nothing
looser is tried.  Only when tier 1 has no unique hit is the agent asked,
and its answer is committed only after the files and the declaration are
confirmed to exist.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .agent import BACKEND_ERROR, AgentBackend, AgentRequest, PromptLibrary
from .depgraph import TranslationSchedule
from .rustscan import RustIndex
from .scanner import SourceModel

log = logging.getLogger(__name__)

STATIC_EXACT = "static_exact"
STATIC_NORMALIZED = "static_normalized"
AGENT = "agent"
NONE = "none"


@dataclass
class FunctionMapping:
    c_module: str
    c_function: str
    rust_module: str | None
    rust_function: str | None
    tier: str
    validated: bool = False
    unit_id: int | None = None

    @property
    def is_null(self) -> bool:
        return self.rust_module is None

    @property
    def target(self) -> tuple[str, str] | None:
        return None if self.is_null else (self.rust_module, self.rust_function)


@dataclass
class Unresolved:
    c_module: str
    c_function: str
    reason: str
    unit_id: int | None = None


@dataclass
class MappingTable:
    entries: list[FunctionMapping] = field(default_factory=list)
    unresolved: list[Unresolved] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"entries": [asdict(e) for e in self.entries], "unresolved": [asdict(u) for u in self.unresolved]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "MappingTable":
        return cls([FunctionMapping(**e) for e in d.get("entries", [])],
                   [Unresolved(**u) for u in d.get("unresolved", [])])

    @classmethod
    def load(cls, path) -> "MappingTable":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def lookup(self, c_module: str, c_function: str) -> FunctionMapping | Unresolved | None:
        for e in self.entries:
            if e.c_module == c_module and e.c_function == c_function:
                return e
        for u in self.unresolved:
            if u.c_module == c_module and u.c_function == c_function:
                return u
        return None

    def for_unit(self, unit_id: int) -> list[FunctionMapping | Unresolved]:
        return [e for e in self.entries if e.unit_id == unit_id] + [u for u in self.unresolved if u.unit_id == unit_id]


def normalize_name(name: str) -> str:
    return name.lower().replace("_", "").replace("-", "")


def _index(workspace) -> RustIndex:
    return workspace if isinstance(workspace, RustIndex) else RustIndex(workspace)


def static_search(c_function: str, workspace, include_tests: bool = False):
    """Return ``((rust_module, rust_function, tier) | None, reason | None)``."""
    index = _index(workspace)
    decls = list(index.declarations(include_tests=include_tests))
    exact = sorted({(path, fn.name) for path, fn in decls if fn.name == c_function})
    if len(exact) == 1:
        return (exact[0][0], exact[0][1], STATIC_EXACT), None
    if len(exact) > 1:
        return None, "ambiguous"
    key = normalize_name(c_function)
    norm = sorted({(path, fn.name) for path, fn in decls if normalize_name(fn.name) == key})
    if len(norm) == 1:
        return (norm[0][0], norm[0][1], STATIC_NORMALIZED), None
    if len(norm) > 1:
        return None, "ambiguous"
    return None, "not_found"


def static_match(c_function: str, workspace):
    """Unique tier-1 hit as ``(rust_module, rust_function, tier)``, else None."""
    return static_search(c_function, workspace)[0]


def split_qualified(name: str) -> str:
    """``Nfa::len`` -> ``len``; bare names pass through."""
    return name.rsplit("::", 1)[-1].strip()


def validation_error(mapping: FunctionMapping, c_root, target_root, index: RustIndex | None = None) -> str | None:
    """None when the mapping is valid, else the reason it is not."""
    if not mapping.c_module or not (Path(c_root) / mapping.c_module).is_file():
        return f"c_module {mapping.c_module!r} does not exist"
    if (mapping.rust_module is None) != (mapping.rust_function is None):
        return "rust_module and rust_function must both be set or both be null"
    if mapping.is_null:
        return None
    root = Path(target_root).resolve()
    rust_path = (root / mapping.rust_module).resolve()
    if root not in rust_path.parents:
        return f"rust_module {mapping.rust_module!r} lies outside the Rust project"
    if not rust_path.is_file():
        return f"rust_module {mapping.rust_module!r} does not exist"
    index = index or RustIndex(target_root)
    rf = index.files.get(mapping.rust_module)
    if rf is None or not rf.find(mapping.rust_function):
        return f"fn {mapping.rust_function} is not declared in {mapping.rust_module}"
    return None


def validate_mapping(mapping: FunctionMapping, c_root, target_root, index: RustIndex | None = None) -> bool:
    return validation_error(mapping, c_root, target_root, index) is None


@dataclass
class MapperConfig:
    max_attempts: int = 3
    timeout: float = 900.0


def agent_match(c_signature: str, c_module: str, c_function: str, c_root, target_root,
                agent: AgentBackend, prompts: PromptLibrary, cfg: MapperConfig,
                unit_id: int | None = None) -> FunctionMapping | Unresolved:
    feedback = ""
    for attempt in range(cfg.max_attempts):
        prompt = prompts.render(
            "map_function.txt", c_module=c_module, c_function=c_function, c_signature=c_signature,
            c_root=c_root, target_root=target_root, feedback=feedback,
        )
        result = agent.invoke(AgentRequest("map", prompt, [str(c_root), str(target_root)], cfg.timeout, attempt))
        if result.status == BACKEND_ERROR:
            return Unresolved(c_module, c_function, "backend_error", unit_id)
        payload = result.structured_payload
        if not isinstance(payload, dict) or "rust_module" not in payload or "rust_function" not in payload:
            feedback = "\nYour previous answer did not contain the required JSON object.\n"
            continue
        rmod, rfn = payload["rust_module"], payload["rust_function"]
        if isinstance(rfn, str):
            rfn = split_qualified(rfn)
        if not (rmod is None or isinstance(rmod, str)) or not (rfn is None or isinstance(rfn, str)):
            feedback = "\nrust_module and rust_function must be strings or null.\n"
            continue
        mapping = FunctionMapping(c_module, c_function, rmod, rfn, AGENT, False, unit_id)
        err = validation_error(mapping, c_root, target_root, RustIndex(target_root))
        if err is None:
            mapping.validated = True
            return mapping
        log.info("rejected mapping for %s: %s", c_function, err)
        feedback = f"\nYour previous answer was rejected: {err}.\n"
    return Unresolved(c_module, c_function, "exhausted", unit_id)


def map_all(schedule: TranslationSchedule, c_model: SourceModel, c_root, target_root,
            agent: AgentBackend | None, prompts: PromptLibrary | None = None,
            cfg: MapperConfig | None = None, use_agent: bool = True) -> MappingTable:
    """Resolve every scheduled function, in schedule order."""
    cfg = cfg or MapperConfig()
    prompts = prompts or PromptLibrary()
    index = RustIndex(target_root)
    table = MappingTable()
    owner: dict[tuple[str, str], int] = {}
    for unit in schedule.units:
        for path, name in unit.members:
            hit, reason = static_search(name, index)
            if hit is not None:
                result = FunctionMapping(path, name, hit[0], hit[1], hit[2], False, unit.unit_id)
                result.validated = validate_mapping(result, c_root, target_root, index)
            elif use_agent and agent is not None:
                fn = c_model.function((path, name))
                result = agent_match(fn.signature_text, path, name, c_root, target_root, agent, prompts, cfg, unit.unit_id)
            else:
                result = Unresolved(path, name, reason or "not_found", unit.unit_id)
            if isinstance(result, FunctionMapping) and result.target is not None:
                prev = owner.get(result.target)
                if prev is not None and prev != unit.unit_id:
                    result = Unresolved(path, name, "duplicate_target", unit.unit_id)
                else:
                    owner[result.target] = unit.unit_id
            if isinstance(result, FunctionMapping) and result.validated:
                table.entries.append(result)
            elif isinstance(result, FunctionMapping):
                table.unresolved.append(Unresolved(path, name, "invalid", unit.unit_id))
            else:
                table.unresolved.append(result)
    return table
