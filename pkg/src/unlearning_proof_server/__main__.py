"""Module entrypoint.

Allows:
    python -m unlearning_proof_server
"""

from __future__ import annotations

from unlearning_proof_server.cli import main

if __name__ == "__main__":
    main()
