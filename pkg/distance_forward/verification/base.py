"""
Base classes for verification checks
"""
from abc import ABC, abstractmethod
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from distance_forward.exceptions import VerificationError


class CheckCategory(str, Enum):
    """Verification check categories"""
    GRADIENT = "gradient"
    LOSS = "loss"
    LOCALITY = "locality"
    EVALUATION = "evaluation"
    PROFILING = "profiling"
    IO = "io"


class CheckMetadata(BaseModel):
    """Metadata for a verification check"""
    name: str = Field(..., description="Unique check identifier")
    module: str = Field(..., description="Library module the property belongs to")
    op: str = Field(..., description="Operation under test")
    description: str = Field(..., description="Property being asserted")
    category: CheckCategory = Field(..., description="Check category")


class CheckResult(BaseModel):
    """Result of one check"""
    name: str
    module: str
    op: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0
    error: Optional[str] = None


class BaseCheck(ABC):
    """
    Abstract base class for verification checks.

    Each check must implement:
    - get_metadata(): Return check metadata
    - run(): Assert the property, raising VerificationError via fail()
    """

    @abstractmethod
    def get_metadata(self) -> CheckMetadata:
        """Return metadata describing this check"""
        pass

    @abstractmethod
    def run(self, rng: np.random.Generator) -> str:
        """
        Assert the property.

        Args:
            rng: Generator seeded for this check

        Returns:
            Short human-readable detail of what was measured
        """
        pass

    def fail(self, message: str) -> None:
        meta = self.get_metadata()
        raise VerificationError(meta.module, meta.op, message)

    def require(self, condition: bool, message: str) -> None:
        if not condition:
            self.fail(message)
