"""Enclave-resident cuckoo filter."""

from .cuckoo import CuckooFilter, FilterConfig, fingerprint

__all__ = ["CuckooFilter", "FilterConfig", "fingerprint"]
