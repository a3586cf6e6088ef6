"""Symmetric block-sparse and fermionic tensor networks on arbitrary graphs."""

from .symmetry import Index, SymmetryGroup, fuse_charges, get_group
from .blocksparse import BlockSparseTensor
from .fermi import FermionTensor, fcontract, ftranspose
from .network import TensorNetwork, contract_all, contract_approx, conjugate, to_dag

__version__ = "0.1.0"
