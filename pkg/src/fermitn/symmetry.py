"""Abelian symmetry groups, charges and tensor indices.

Charges are plain python values: ``int`` for ``Z2`` and ``U1``, a pair
``(n_up, n_down)`` of ints for ``U1xU1``.  Every index carries a signature
``sign`` in ``{+1, -1}``: a charge on that index enters the selection rule
multiplied by the sign.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence, Union

Charge = Union[int, tuple]

KINDS = ("Z2", "U1", "U1xU1")


@dataclass(frozen=True)
class SymmetryGroup:
    """An abelian group with integer irrep labels.

    Parameters
    ----------
    kind : {"Z2", "U1", "U1xU1"}
        ``Z2`` has order 2 and is added modulo 2, ``U1`` is the integers and
        ``U1xU1`` is pairs of integers added componentwise (interpreted as
        ``(N_up, N_down)``).
    """

    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"Unknown symmetry kind {self.kind!r}, expected one of {KINDS}.")

    @property
    def identity(self) -> Charge:
        return (0, 0) if self.kind == "U1xU1" else 0

    @property
    def odd_unit(self) -> Charge:
        """The smallest odd-parity charge, used for dummy legs."""
        return (1, 0) if self.kind == "U1xU1" else 1

    def validate(self, c) -> Charge:
        """Return ``c`` in canonical form or raise ``ValueError``."""
        if self.kind == "U1xU1":
            if not (isinstance(c, (tuple, list)) and len(c) == 2):
                raise ValueError(f"U1xU1 charge must be a pair of ints, got {c!r}.")
            a, b = c
            if not (_is_int(a) and _is_int(b)):
                raise ValueError(f"U1xU1 charge must be a pair of ints, got {c!r}.")
            return (int(a), int(b))
        if not _is_int(c):
            raise ValueError(f"{self.kind} charge must be an int, got {c!r}.")
        c = int(c)
        if self.kind == "Z2" and c not in (0, 1):
            raise ValueError(f"Z2 charge must be 0 or 1, got {c}.")
        return c

    def add(self, a: Charge, b: Charge) -> Charge:
        if self.kind == "U1xU1":
            return (a[0] + b[0], a[1] + b[1])
        if self.kind == "Z2":
            return (a + b) % 2
        return a + b

    def neg(self, a: Charge) -> Charge:
        if self.kind == "U1xU1":
            return (-a[0], -a[1])
        if self.kind == "Z2":
            return a  # self-inverse
        return -a

    def sub(self, a: Charge, b: Charge) -> Charge:
        return self.add(a, self.neg(b))

    def signed(self, c: Charge, sign: int) -> Charge:
        return c if sign > 0 else self.neg(c)

    def fuse(self, charges: Sequence[Charge], signs: Sequence[int]) -> Charge:
        """Signed sum of ``charges`` without validation (hot path)."""
        if self.kind == "U1":
            return sum(c if s > 0 else -c for c, s in zip(charges, signs))
        if self.kind == "Z2":
            return sum(charges) % 2
        a = b = 0
        for c, s in zip(charges, signs):
            if s > 0:
                a += c[0]
                b += c[1]
            else:
                a -= c[0]
                b -= c[1]
        return (a, b)

    def parity(self, c: Charge) -> int:
        if self.kind == "U1xU1":
            return (c[0] + c[1]) % 2
        return c % 2


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) or (
        hasattr(x, "dtype") and getattr(x.dtype, "kind", "") in "iu"
    )


@functools.lru_cache(maxsize=None)
def get_group(kind: str) -> SymmetryGroup:
    return SymmetryGroup(kind)


def _sign(s) -> int:
    if s in (1, "+"):
        return 1
    if s in (-1, "-"):
        return -1
    raise ValueError(f"Signature entries must be +1/-1 or '+'/'-', got {s!r}.")


def fuse_charges(group: SymmetryGroup, charges: Sequence, signs: Sequence) -> Charge:
    """Signed sum of ``charges`` under the group law.

    Examples
    --------
    >>> fuse_charges(get_group("U1"), [2, 3], ["+", "-"])
    -1
    """
    if len(charges) != len(signs):
        raise ValueError(f"Got {len(charges)} charges but {len(signs)} signs.")
    if len(charges) == 0:
        raise ValueError("Need at least one charge to fuse.")
    charges = [group.validate(c) for c in charges]
    signs = [_sign(s) for s in signs]
    return group.fuse(charges, signs)


def parity_of(group: SymmetryGroup, c) -> int:
    return group.parity(group.validate(c))


@dataclass(frozen=True)
class Index:
    """One leg of a symmetric tensor.

    Parameters
    ----------
    sectors : sequence of (charge, dim)
        Distinct charges with positive block sizes; stored sorted by charge.
    sign : {+1, -1}
        Signature entry of this leg.
    id : hashable, optional
        Bond identifier, used by networks to match legs.
    """

    sectors: tuple
    sign: int = 1
    id: Hashable = None
    _dims: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        sectors = tuple(sorted((c, int(d)) for c, d in _as_items(self.sectors)))
        charges = [c for c, _ in sectors]
        if len(set(charges)) != len(charges):
            raise ValueError(f"Repeated charge in sectors {sectors}.")
        for c, d in sectors:
            if d < 1:
                raise ValueError(f"Sector {c!r} has dimension {d} < 1.")
        object.__setattr__(self, "sectors", sectors)
        object.__setattr__(self, "sign", _sign(self.sign))
        object.__setattr__(self, "_dims", dict(sectors))

    @property
    def charges(self) -> tuple:
        return tuple(c for c, _ in self.sectors)

    @property
    def size(self) -> int:
        return sum(d for _, d in self.sectors)

    def dim(self, charge) -> int:
        return self._dims[charge]

    def has(self, charge) -> bool:
        return charge in self._dims

    def offsets(self) -> dict:
        """Start of each sector in the dense (charge-sorted) layout."""
        out, o = {}, 0
        for c, d in self.sectors:
            out[c] = o
            o += d
        return out

    def dual(self) -> "Index":
        return Index(self.sectors, -self.sign, self.id)

    def with_id(self, id) -> "Index":
        return Index(self.sectors, self.sign, id)

    def same_space(self, other: "Index") -> bool:
        return self.sectors == other.sectors

    def validate(self, group: SymmetryGroup) -> "Index":
        for c, _ in self.sectors:
            group.validate(c)
        return self


def _as_items(sectors) -> Iterable:
    if isinstance(sectors, dict):
        return sectors.items()
    return sectors


def fused_sectors(group: SymmetryGroup, indices: Sequence[Index], sign: int = 1) -> dict:
    """Enumerate the sectors of the index obtained by fusing ``indices``.

    Returns a mapping from fused charge to the list of constituent charge
    combinations (sorted lexicographically) with their dims.  The fused
    charge is the signed sum of constituents, multiplied by ``sign``.
    """
    out: dict = {}
    signs = [ix.sign for ix in indices]
    for combo in itertools.product(*(ix.sectors for ix in indices)):
        charges = tuple(c for c, _ in combo)
        q = group.signed(group.fuse(charges, signs), sign)
        d = 1
        for _, di in combo:
            d *= di
        out.setdefault(q, []).append((charges, d))
    for q in out:
        out[q].sort()
    return dict(sorted(out.items()))
