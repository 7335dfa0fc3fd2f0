"""Training kernels with a compiled fast path and a pure fallback.

The compiled extension is optional: builds without a C toolchain, or
installs with FORETUNE_NO_EXT=1, simply fall back to the numpy reference
implementation.  Setting FORETUNE_PURE=1 forces the fallback at import time,
which is how the benchmark and the cross-backend tests pin each side.

Both backends implement the same two entry points with identical operation
ordering, so a given seed reproduces the same training trajectory to within
floating-point accumulation differences:

  train_epoch(W, X, chosen, rejected, ref_margin, order, batch_size,
              grad_accumulation, beta, lr0, step_start, total_steps)
      -> (summed example loss, optimizer steps taken)

  mean_pair_loss(W, X, chosen, rejected, ref_margin, indices, beta)
      -> mean loss over the indexed examples
"""

from __future__ import annotations

import os

if os.environ.get("FORETUNE_PURE", "") == "1":
    from . import _reference as _backend

    BACKEND = "pure"
else:
    try:
        from . import _speedups as _backend  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _reference as _backend

        BACKEND = "pure"

train_epoch = _backend.train_epoch
mean_pair_loss = _backend.mean_pair_loss

__all__ = ["BACKEND", "train_epoch", "mean_pair_loss"]
