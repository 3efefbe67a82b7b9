import logging
from typing import Any, Dict, Iterable, List

import marshmallow as ma
import numpy as np
import pandas as pd
from marshmallow import Schema, fields

logger = logging.getLogger(__name__)

__all__ = (
    "BaseSchema",
    "Real",
    "Regime",
)


class BaseSchema(Schema):

    class Meta:
        ordered = True
        unknown = ma.EXCLUDE

    @classmethod
    def serialize_many(cls, data: Iterable[Any], **kwargs) -> List[Dict[str, Any]]:
        return cls(many=True, **kwargs).dump(list(data))

    @classmethod
    def serialize_one(cls, data: Any, **kwargs) -> Dict[str, Any]:
        return cls(**kwargs).dump(data)

    @classmethod
    def frame(cls, data: Iterable[Any], **kwargs) -> pd.DataFrame:
        """Rows as a DataFrame whose columns follow the field declaration order."""
        return pd.DataFrame(cls.serialize_many(data, **kwargs), columns=list(cls._declared_fields))


class Real(fields.Float):
    """Float that dumps numpy scalars and keeps NaN/inf as floats."""

    def _serialize(self, value, attr, obj, **kwargs):
        if value is None:
            return None
        return float(np.float64(value))


class Regime(fields.Integer):
    """0-based regime index dumped 1-based."""

    def _serialize(self, value, attr, obj, **kwargs):
        if value is None:
            return None
        return int(value) + 1
