"""
Verification check registry
"""
import logging
import time
import zlib
from typing import Dict, List, Optional

import numpy as np

from distance_forward.exceptions import VerificationError
from distance_forward.verification.base import BaseCheck, CheckCategory, CheckMetadata, CheckResult

logger = logging.getLogger(__name__)


class CheckRegistry:
    """
    Central registry for verification checks.

    Checks run in registration order.
    """

    def __init__(self):
        self._checks: Dict[str, BaseCheck] = {}
        self._metadata_cache: Dict[str, CheckMetadata] = {}

    def register(self, check: BaseCheck) -> None:
        metadata = check.get_metadata()
        if metadata.name in self._checks:
            logger.warning(f"Check '{metadata.name}' already registered, overwriting")
        self._checks[metadata.name] = check
        self._metadata_cache[metadata.name] = metadata
        logger.debug(f"Registered check: {metadata.name} ({metadata.category.value})")

    def get_check(self, name: str) -> Optional[BaseCheck]:
        return self._checks.get(name)

    def list_checks(self, category: Optional[CheckCategory] = None) -> List[CheckMetadata]:
        if category:
            return [m for m in self._metadata_cache.values() if m.category == category]
        return list(self._metadata_cache.values())

    def check_exists(self, name: str) -> bool:
        return name in self._checks

    def run_one(self, name: str, seed: int = 0) -> CheckResult:
        """Run one check; a violated property raises VerificationError"""
        check = self._checks[name]
        meta = self._metadata_cache[name]
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        start = time.perf_counter()
        detail = check.run(rng)
        return CheckResult(name=name, module=meta.module, op=meta.op, passed=True, detail=detail,
                           seconds=time.perf_counter() - start)

    def run_all(self, seed: int = 0, names: Optional[List[str]] = None) -> List[CheckResult]:
        """
        Run checks in order and stop at the first violation.

        Raises:
            VerificationError: naming the module and op of the failed check
        """
        results = []
        for name in names or list(self._checks):
            meta = self._metadata_cache[name]
            try:
                result = self.run_one(name, seed)
            except VerificationError:
                logger.error(f"FAIL {name} [{meta.module}/{meta.op}]")
                raise
            except Exception as e:
                logger.error(f"ERROR {name} [{meta.module}/{meta.op}]: {e}", exc_info=True)
                raise VerificationError(meta.module, meta.op, f"check '{name}' raised {type(e).__name__}: {e}") from e
            logger.info(f"PASS {name} [{meta.module}/{meta.op}] {result.detail} ({result.seconds:.2f}s)")
            results.append(result)
        return results


_global_registry: Optional[CheckRegistry] = None


def get_registry() -> CheckRegistry:
    """Get the global check registry, populated with the built-in checks"""
    global _global_registry
    if _global_registry is None:
        _global_registry = CheckRegistry()
        from distance_forward.verification.checks import builtin_checks

        for check in builtin_checks():
            _global_registry.register(check)
    return _global_registry


def register_check(check: BaseCheck) -> None:
    """Register a check in the global registry"""
    get_registry().register(check)
