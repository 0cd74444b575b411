"""Two-layer sharded proof-of-authority ledger for regulated hemp supply chains."""

__version__ = "0.1.0"
