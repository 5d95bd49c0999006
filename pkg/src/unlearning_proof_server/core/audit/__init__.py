"""Auditing enclave that monitors prediction calls."""

from .auditor import (
    PROG_AUDIT,
    AlertReport,
    AuditLogEntry,
    Auditor,
    AuditReport,
    alerts_by_class,
    check_call,
    recheck_entry,
    verify_alert,
    verify_report,
)

__all__ = [
    "PROG_AUDIT",
    "AlertReport",
    "AuditLogEntry",
    "AuditReport",
    "Auditor",
    "alerts_by_class",
    "check_call",
    "recheck_entry",
    "verify_alert",
    "verify_report",
]
