"""Dense reference implementations of graded (fermionic) tensor algebra.

These work on plain numpy arrays plus one 0/1 parity vector per leg and
never look at block structure, so they serve as an independent check of
:mod:`fermitn.fermi`.
"""

from __future__ import annotations

import numpy as np


def graded_sign(parities, perm) -> np.ndarray:
    """Array of ``+-1`` (broadcast over all legs) for reordering the legs
    into ``perm``: each pair of legs whose relative order flips contributes
    ``(-1)**(p_i p_j)``."""
    n = len(parities)
    sign = np.ones([len(p) for p in parities], dtype=np.int8)
    where = {p: k for k, p in enumerate(perm)}
    for i in range(n):
        for j in range(i + 1, n):
            if where[i] > where[j]:
                shape_i = [1] * n
                shape_j = [1] * n
                shape_i[i] = len(parities[i])
                shape_j[j] = len(parities[j])
                pi = np.asarray(parities[i]).reshape(shape_i)
                pj = np.asarray(parities[j]).reshape(shape_j)
                sign = sign * (1 - 2 * (pi * pj % 2)).astype(np.int8)
    return sign


def dense_ftranspose(arr, parities, perm):
    arr = np.asarray(arr)
    perm = list(perm)
    out = np.transpose(arr * graded_sign(parities, perm), perm)
    return out, [parities[p] for p in perm]


def dense_fcontract(a, pa, b, pb, axes):
    """Graded contraction of dense ``a`` (left) and ``b`` (right).

    Mirrors the nesting convention: contracted legs of ``a`` go to its tail
    in the order given, those of ``b`` to its head in reverse order.
    """
    ax_a = [i for i, _ in axes]
    ax_b = [j for _, j in axes]
    free_a = [i for i in range(a.ndim) if i not in ax_a]
    free_b = [j for j in range(b.ndim) if j not in ax_b]
    a2, _ = dense_ftranspose(a, pa, free_a + ax_a)
    b2, _ = dense_ftranspose(b, pb, ax_b[::-1] + free_b)
    k = len(axes)
    # a2 tail: ax_a[0..k-1], b2 head: ax_b[k-1..0]
    out = np.tensordot(a2, b2, axes=(list(range(len(free_a), len(free_a) + k)), list(range(k - 1, -1, -1))))
    return out, [pa[i] for i in free_a] + [pb[j] for j in free_b]


def dense_parity_diag(arr, parities, axis):
    """Multiply leg ``axis`` by ``(-1)**p``."""
    shape = [1] * arr.ndim
    shape[axis] = arr.shape[axis]
    return arr * (1 - 2 * (np.asarray(parities[axis]) % 2)).reshape(shape)
