"""Backend selection for the fitting kernels.

The compiled extension is preferred; the numpy fallback is used when the
extension is unavailable or when HURDLEDAG_PURE_PYTHON=1 is set.  Both
backends implement identical algorithms with identical stopping rules.
"""

from __future__ import annotations

import os

if os.environ.get("HURDLEDAG_PURE_PYTHON") == "1":
    from . import _fitkern_py as _impl
else:
    try:
        from . import _fitkern as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _fitkern_py as _impl

BACKEND: str = _impl.BACKEND
logistic_irls = _impl.logistic_irls
canonical_nll = _impl.canonical_nll
canonical_objective = _impl.canonical_objective
