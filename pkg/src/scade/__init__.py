"""Command-line anomaly detection over process-creation telemetry.

Global rarity scoring (BM25 and Log Entropy over 1-gram/2-gram payload
tokens) with dynamic standard-deviation thresholds, followed by a local
Isolation Forest check of each flagged command against its asset/user
baseline.
"""

__version__ = "0.1.0"
