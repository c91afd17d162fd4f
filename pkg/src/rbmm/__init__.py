"""A mini strongly-typed, moded logic language with region-based memory management.

The pipeline: parse -> normalize -> mode/determinism analysis -> type-based
region graphs -> region points-to analysis -> region liveness -> region
instruction insertion -> execution under a backtracking-aware region runtime.
"""

__version__ = "0.1.0"
