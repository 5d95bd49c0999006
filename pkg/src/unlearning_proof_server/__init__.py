"""unlearning-proof-server.

Proof-of-unlearning for a SISA-trained model: a sharded/sliced incremental
trainer, an authenticated lineage layer held by a simulated enclave, signed
receipts and proofs for data owners, and an auditing monitor.
"""

from __future__ import annotations

__all__ = ["__version__"]
__version__ = "0.1.0"
