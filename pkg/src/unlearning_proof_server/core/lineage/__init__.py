"""Authenticated lineage: key list, record logs and the checked store."""

from .auth import MODEL_HEADER_SIZE, LineageStore, Placement, model_mac, model_record_placement
from .key_list import ENTRY_SIZE, NULL_LINK, KeyEntry, KeyList
from .record_log import RecordLog

__all__ = [
    "ENTRY_SIZE",
    "MODEL_HEADER_SIZE",
    "NULL_LINK",
    "KeyEntry",
    "KeyList",
    "LineageStore",
    "Placement",
    "RecordLog",
    "model_mac",
    "model_record_placement",
]
