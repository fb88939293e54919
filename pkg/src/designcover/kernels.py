"""Backend selection for the covering kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``DESIGNCOVER_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the numpy fallback is used. Both backends return identical
results, including tie-breaking.
"""

import logging
import os
from contextlib import contextmanager

from . import _pykernels

log = logging.getLogger(__name__)

# Membership slack relative to |center| + half-width. Absorbs the rounding
# of endpoint-anchored centers (c -/+ s/2) so a point on the boundary of a
# combinatorial candidate is still inside it.
MEMBERSHIP_REL_SLACK = 1e-12

# Exact searches pack point sets into uint64 masks.
MAX_MASK_POINTS = 64


def _load_compiled():
    if os.environ.get("DESIGNCOVER_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        log.debug("compiled kernels unavailable, using numpy fallback")
        return None
    return _ckernels


_compiled = _load_compiled()
_impl = _compiled if _compiled is not None else _pykernels

BACKEND = "compiled" if _compiled is not None else "python"


def backends():
    """Mapping of available backend names to kernel modules."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["compiled"] = _ckernels
    return out


@contextmanager
def use_backend(name):
    """Temporarily route the kernel wrappers to backend ``name``."""
    global _impl
    available = backends()
    if name not in available:
        raise KeyError(f"backend {name!r} not available (have {sorted(available)})")
    prev, _impl = _impl, available[name]
    try:
        yield available[name]
    finally:
        _impl = prev


def box_incidence(points, centers, half, rel_slack=MEMBERSHIP_REL_SLACK):
    return _impl.box_incidence(points, centers, half, rel_slack)


def greedy_select(incidence, max_boxes):
    return _impl.greedy_select(incidence, int(max_boxes))


def min_cover_search(masks, full, max_size):
    return _impl.min_cover_search(masks, full, int(max_size))


def max_coverage_search(masks, full, k):
    return _impl.max_coverage_search(masks, full, int(k))
