"""
Run manifests: everything needed to reproduce a CLI run
"""
import hashlib
import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

# tolerate a missing git binary
os.environ.setdefault("GIT_PYTHON_REFRESH", "quiet")

import git  # noqa: E402
from pydantic import BaseModel, Field

from distance_forward import __version__

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class CodeRevision(BaseModel):
    commit: str
    dirty: bool


class RunManifest(BaseModel):
    command: str
    argv: List[str] = Field(default_factory=list)
    seed: int
    threads: int = 1
    config: Dict[str, Any] = Field(..., description="Resolved flat config")
    artifacts: Dict[str, str] = Field(default_factory=dict, description="Output file name -> git blob sha1")
    inputs: Dict[str, str] = Field(default_factory=dict, description="Input file role -> git blob sha1")
    code_revision: Optional[CodeRevision] = None
    package_version: str = __version__
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())


def blob_hash(data: bytes) -> str:
    """Git-style content hash: sha1 of b'blob <size>\\0' + data"""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def file_blob_hash(path: Union[str, Path]) -> str:
    return blob_hash(Path(path).read_bytes())


def code_revision(start: Optional[Union[str, Path]] = None) -> Optional[CodeRevision]:
    """HEAD commit of the checkout containing `start` (default: this package), if any"""
    start = Path(start) if start is not None else Path(__file__).parent
    try:
        repo = git.Repo(start, search_parent_directories=True)
        return CodeRevision(commit=repo.head.commit.hexsha, dirty=repo.is_dirty(untracked_files=False))
    except (git.InvalidGitRepositoryError, git.NoSuchPathError, git.GitCommandNotFound, ValueError) as e:
        logger.debug(f"No code revision available: {e}")
        return None


def write_manifest(out_dir: Union[str, Path], manifest: RunManifest) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in list(manifest.artifacts):
        artifact = out_dir / name
        if artifact.exists():
            manifest.artifacts[name] = file_blob_hash(artifact)
    path = out_dir / MANIFEST_NAME
    path.write_text(manifest.model_dump_json(indent=2))
    logger.info(f"Wrote manifest to {path}")
    return path


def read_manifest(path: Union[str, Path]) -> RunManifest:
    return RunManifest.model_validate_json(Path(path).read_text())
