"""Kernel backend selection.

The compiled extension (``hgnet.kernels._native``) is preferred when it
imported cleanly; otherwise the numpy fallback (``hgnet.kernels.pure``)
is used. Set ``HGNET_KERNELS=pure`` or ``HGNET_KERNELS=native`` to force
a backend; forcing ``native`` raises if the extension is unavailable.

Both backends expose the same six functions with identical semantics:
im2col, col2im, maxpool2x2_forward, maxpool2x2_backward,
upsample2x_forward, upsample2x_backward.
"""

import os

from . import pure

_requested = os.environ.get("HGNET_KERNELS", "auto").lower()

if _requested == "pure":
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _native as _impl
        BACKEND = "native"
    except ImportError:
        if _requested == "native":
            raise ImportError(
                "HGNET_KERNELS=native but the compiled extension is not "
                "available; reinstall with a C compiler present"
            )
        _impl = pure
        BACKEND = "pure"

im2col = _impl.im2col
col2im = _impl.col2im
maxpool2x2_forward = _impl.maxpool2x2_forward
maxpool2x2_backward = _impl.maxpool2x2_backward
upsample2x_forward = _impl.upsample2x_forward
upsample2x_backward = _impl.upsample2x_backward


def backend_modules():
    """Return {name: module} for every importable backend (for benchmarks)."""
    mods = {"pure": pure}
    try:
        from . import _native
        mods["native"] = _native
    except ImportError:
        pass
    return mods
