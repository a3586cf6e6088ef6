"""Independent dense Hubbard Hamiltonian from Kronecker-product
Jordan-Wigner operators (test oracle)."""
from __future__ import annotations

from functools import reduce

import numpy as np

SIGMA_PLUS = np.array([[0.0, 0.0], [1.0, 0.0]])  # |1><0| in basis (|0>, |1>)
Z = np.diag([1.0, -1.0])
I2 = np.eye(2)


def creators(nmodes):
    """c+_m = Z x .. x Z x s+ x 1 x .. (mode 0 is the leftmost factor)."""
    out = []
    for m in range(nmodes):
        out.append(reduce(np.kron, [Z] * m + [SIGMA_PLUS] + [I2] * (nmodes - m - 1)))
    return out


def hubbard_full(n, edges, t, U):
    """Full Fock-space Hamiltonian, modes ordered (0 up, 0 dn, 1 up, ...)."""
    cd = creators(2 * n)
    c = [x.T for x in cd]
    H = np.zeros((4**n, 4**n))
    for i, j in edges:
        for s in (0, 1):
            hop = cd[2 * i + s] @ c[2 * j + s]
            H -= t * (hop + hop.T)
    for i in range(n):
        H += U * (cd[2 * i] @ c[2 * i]) @ (cd[2 * i + 1] @ c[2 * i + 1])
    return H


def full_index(up, dn, n):
    """Index of the basis vector prod_i (c+_iu)^a (c+_id)^b |0> (site-major,
    increasing order) in the Kronecker basis; the sign is +1 for this order."""
    x = 0
    for i in range(n):
        for s, mask in ((0, up), (1, dn)):
            bit = (mask >> i) & 1
            x |= bit << (2 * n - 1 - (2 * i + s))
    return x


def sector_block(H, basis):
    idx = [full_index(u, d, basis.n) for u, d in basis.states]
    return H[np.ix_(idx, idx)]
