"""Sandbox interlock: destructive work only happens under a marked root."""
from __future__ import annotations

import os
from pathlib import Path, PurePosixPath

from .. import SANDBOX_MARKER, ValidationError


class SandboxError(ValidationError):
    pass


def require_marker(root) -> Path:
    """Resolve `root` and insist on the sandbox marker file being present."""
    root = Path(root).resolve()
    if not root.is_dir():
        raise SandboxError(f"sandbox root {root} is not a directory")
    if root == Path(root.anchor) or root == Path.home().resolve():
        raise SandboxError(f"refusing to treat {root} as a sandbox")
    if not (root / SANDBOX_MARKER).is_file():
        raise SandboxError(f"{root} has no {SANDBOX_MARKER} marker; refusing to touch it")
    return root


def check_relative(rel: str) -> str:
    """Normalize a corpus-relative path, rejecting anything that escapes the root."""
    p = PurePosixPath(rel)
    if p.is_absolute() or any(part == ".." for part in p.parts) or not p.parts:
        raise SandboxError(f"path {rel!r} escapes the sandbox")
    norm = p.as_posix()
    if norm == SANDBOX_MARKER:
        raise SandboxError("the sandbox marker is not a corpus file")
    return norm


def contained(root: Path, rel: str) -> Path:
    """Absolute path for `rel` under `root`, following symlinks to be sure."""
    rel = check_relative(rel)
    full = root / rel
    real = Path(os.path.realpath(full))
    if real != root and root not in real.parents:
        raise SandboxError(f"{rel!r} resolves outside the sandbox ({real})")
    return full
