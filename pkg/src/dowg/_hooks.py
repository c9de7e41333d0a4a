"""Fault-injection switches for the self-test harness.

Production code paths read these module-level flags; they exist so the
self-test can verify that deliberately broken variants of sign and
tie-break conventions are actually caught by the invariant checks.
Never enable outside tests.
"""

from contextlib import contextmanager

# inflow boundary term assembled with +<s.n u, v> instead of -<s.n u, v>
flip_inflow_sign = False

# edges with s.n == 0 classified as inflow instead of outflow
tie_break_inflow = False


@contextmanager
def inject(name):
    """Temporarily enable one fault flag."""
    g = globals()
    if name not in g or not isinstance(g[name], bool):
        raise ValueError(f"unknown fault hook {name!r}")
    g[name] = True
    try:
        yield
    finally:
        g[name] = False
