"""
Executable property checks over the whole library
"""
from typing import List, Optional

from distance_forward.verification.base import BaseCheck, CheckCategory, CheckMetadata, CheckResult
from distance_forward.verification.registry import CheckRegistry, get_registry, register_check


def run_all(seed: int = 0, names: Optional[List[str]] = None) -> List[CheckResult]:
    """Run the registered checks; the first violated property raises VerificationError"""
    return get_registry().run_all(seed=seed, names=names)


__all__ = [
    "BaseCheck",
    "CheckCategory",
    "CheckMetadata",
    "CheckResult",
    "CheckRegistry",
    "get_registry",
    "register_check",
    "run_all",
]
