"""
CSV metric sinks
"""
import logging
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence, Union

import pandas as pd
from pydantic import BaseModel

logger = logging.getLogger(__name__)

Row = Union[Mapping, BaseModel]


def _as_dict(row: Row) -> dict:
    return row.model_dump() if isinstance(row, BaseModel) else dict(row)


def write_metrics(path: Union[str, Path], rows: Iterable[Row], columns: Optional[Sequence[str]] = None) -> Path:
    """
    Write rows as CSV with a header.

    Column order is `columns` when given, otherwise first-seen key order
    across rows, so repeated runs produce identical headers.
    """
    records: List[dict] = [_as_dict(r) for r in rows]
    if columns is None:
        ordered: List[str] = []
        for record in records:
            ordered.extend(k for k in record if k not in ordered)
        columns = ordered
    frame = pd.DataFrame.from_records(records, columns=list(columns))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def read_metrics(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path)
