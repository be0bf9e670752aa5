"""Backend selection for the hot LSTM recurrences.

The compiled extension is used when it imports; set ``MFARE_PURE_PYTHON=1``
to force the NumPy fallback. ``BACKEND`` names the active one.
"""

import os

from . import _lstm_py

if os.environ.get("MFARE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _lstm_py
    BACKEND = "python"
else:
    try:
        from . import _lstm_kernel as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _lstm_py
        BACKEND = "python"

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
sigmoid = _impl.sigmoid

__all__ = ["BACKEND", "lstm_forward", "lstm_backward", "sigmoid"]
