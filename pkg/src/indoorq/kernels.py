"""Kernel backend selection.

The compiled extension is used when importable; setting
``INDOORQ_PURE_PYTHON=1`` forces the pure-Python implementation.
"""

import os

from . import _pykernels

if os.environ.get("INDOORQ_PURE_PYTHON"):
    impl = _pykernels
else:
    try:
        from . import _ckernels as impl
    except ImportError:  # extension not built
        impl = _pykernels

BACKEND = "cython" if impl is not _pykernels else "python"

KernelGraph = impl.KernelGraph
init_particles = impl.init_particles
motion_step = impl.motion_step
update_weights = impl.update_weights
count_in_range = impl.count_in_range
systematic_resample = impl.systematic_resample
snap_to_anchors = impl.snap_to_anchors
pf_run = impl.pf_run
uniform = impl.uniform
normal = impl.normal


def get(name: str):
    """Return the kernel module by name (``"cython"`` or ``"python"``)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
