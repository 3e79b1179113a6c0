"""Pure-Python kernels; the reference behaviour for ``_ckernels``."""

import math


def pair_counts(x, y):
    """Count pair relations between two score vectors.

    Returns ``(concordant, discordant, tied_x_only, tied_y_only, tied_both)``.
    """
    n = len(x)
    if len(y) != n:
        raise ValueError("x and y must have the same length")
    conc = disc = tx = ty = txy = 0
    for i in range(n):
        xi = x[i]
        yi = y[i]
        for j in range(i + 1, n):
            dx = xi - x[j]
            dy = yi - y[j]
            if dx == 0 and dy == 0:
                txy += 1
            elif dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif (dx > 0) == (dy > 0):
                conc += 1
            else:
                disc += 1
    return conc, disc, tx, ty, txy


def dcg(grades, k):
    total = 0.0
    for i, g in enumerate(grades[:k]):
        total += (2.0 ** g - 1.0) / math.log2(i + 2.0)
    return total
