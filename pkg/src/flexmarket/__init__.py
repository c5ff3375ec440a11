"""Two-settlement market simulator for dual-trigger flexibility options
and imbalance reserves: day-ahead co-optimization, per-scenario
real-time dispatch, settlements, and verification suites."""

__version__ = "0.1.0"
