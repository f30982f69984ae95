"""Compute a conforming reference eigenfunction in a standalone process.

Factorizing the level-1024 stiffness matrices of both concave domains in one
process exceeds the memory of small containers (the allocator keeps the first
factorization's arenas resident), so the acceptance fixtures shell out to
this script once per domain and reload the saved dof values.

Usage: python _ref_worker.py <domain> <level> <eig_index> <out.npz>
"""

import sys

import numpy as np

from steklovfem import DomainSpec, compute_reference


def main(argv):
    kind, level, eig_index, out = argv
    ref = compute_reference(DomainSpec(kind), int(level), int(eig_index))
    np.savez(out, values=ref.fn.values, lambda_h=ref.lambda_h)
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
