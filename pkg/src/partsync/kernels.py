"""Backend selection for the integration kernels.

The compiled SO(3) kernels are used when the extension is importable and the
environment variable ``PARTSYNC_PURE_PYTHON`` is unset; other dimensions and
the fallback always go through ``_pykernels``.
"""
import os

from . import _pykernels
from ._pykernels import CF4, EULER, exp_skew_batch  # noqa: F401

_compiled = None
if not os.environ.get("PARTSYNC_PURE_PYTHON"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def _pick(Q, backend=None):
    if backend == "python" or _compiled is None or Q.shape[-1] != 3:
        return _pykernels
    return _compiled


def rhs(Q, ei, ej, P, backend=None):
    return _pick(Q, backend).rhs(Q, ei, ej, P)


def advance_fixed(Q, ei, ej, P, h, nsteps, method=CF4, backend=None):
    return _pick(Q, backend).advance_fixed(Q, ei, ej, P, h, nsteps, method)


def advance_anchors(Q, ei, ej, centers, amp, freq, phase, by_edge, t0, h, nsteps, gain,
                    method=CF4, backend=None):
    return _pick(Q, backend).advance_anchors(Q, ei, ej, centers, amp, freq, phase, by_edge,
                                             t0, h, nsteps, gain, method)


def anchor_couplings(centers, amp, freq, phase, by_edge, ei, ej, t, backend=None):
    if backend == "python" or _compiled is None or centers.shape[-1] != 3:
        return _pykernels.anchor_couplings(centers, amp, freq, phase, by_edge, ei, ej, t)
    return _compiled.anchor_couplings(centers, amp, freq, phase, by_edge, ei, ej, t)
