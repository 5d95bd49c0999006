"""Pure protocol logic: training, commitments, the simulated enclave and verification."""
