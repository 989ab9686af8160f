"""Pure numpy fallback for the chain-product kernel."""

import numpy as np


def chain_scaled_partials(mats, want, init, init_log):
    """Running products ``mats[j-1] @ ... @ mats[0] @ init`` in scaled form.

    After each left-multiplication the running matrix is renormalized to unit
    Frobenius norm and the log of the discarded factor is accumulated, so the
    true product after j factors is ``exp(log_j) * partial_j``.  Snapshots are
    taken at the factor counts listed in ``want`` (sorted, 1-based).

    Returns ``(partials, logs)`` with shapes ``(len(want), d, d)`` and
    ``(len(want),)``.
    """
    n, d = mats.shape[0], mats.shape[1]
    m = want.shape[0]
    partials = np.empty((m, d, d))
    logs = np.empty(m)
    cur = np.array(init, dtype=np.float64, copy=True)
    logscale = float(init_log)
    next_slot = 0
    for j in range(n):
        cur = mats[j] @ cur
        fro = np.sqrt((cur * cur).sum())
        logscale += np.log(fro)
        cur /= fro
        while next_slot < m and want[next_slot] == j + 1:
            partials[next_slot] = cur
            logs[next_slot] = logscale
            next_slot += 1
    return partials, logs
