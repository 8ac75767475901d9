"""upflab: a desk-scale lab for per-packet GTP-U decapsulation latency.

Builds synthetic PDU-session traffic, pushes it through a deterministic
single-core UPF data-path simulation, measures per-packet decapsulation
latency with a two-hook probe, and runs the full nonparametric analysis
pipeline (robust summaries, group tests, quantile regression, LOWESS).
"""

from upflab._backend import BACKEND, HAVE_NUMBA, using_numba

__version__ = "0.1.0"

__all__ = ["BACKEND", "HAVE_NUMBA", "using_numba", "__version__"]
