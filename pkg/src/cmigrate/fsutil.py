"""Workspace hashing, snapshots and atomic writes."""

from __future__ import annotations

import hashlib
import os
import shutil
import tempfile
from pathlib import Path

SKIP_DIRS = frozenset({"target", ".git"})


def iter_files(root, suffixes=None):
    root = Path(root)
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if d not in SKIP_DIRS)
        for name in sorted(filenames):
            if suffixes is None or name.endswith(tuple(suffixes)):
                yield Path(dirpath) / name


def tree_hash(root) -> str:
    """Content hash of every file under ``root`` except build output."""
    h = hashlib.sha256()
    root = Path(root)
    for path in iter_files(root):
        h.update(path.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(path.read_bytes())
        h.update(b"\0")
    return h.hexdigest()


def snapshot(root) -> dict[str, bytes]:
    root = Path(root)
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in iter_files(root)}


def restore(root, snap: dict[str, bytes]) -> None:
    """Make the tree under ``root`` match ``snap`` exactly (build output kept)."""
    root = Path(root)
    for path in list(iter_files(root)):
        rel = path.relative_to(root).as_posix()
        if rel not in snap:
            path.unlink()
    for rel, data in snap.items():
        dest = root / rel
        if dest.is_file() and dest.read_bytes() == data:
            continue
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_bytes(data)


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def copy_tree(src, dst) -> None:
    shutil.copytree(src, dst, ignore=shutil.ignore_patterns(*SKIP_DIRS))
