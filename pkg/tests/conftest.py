"""Shared fixtures and brute-force oracles, kept independent of the package
internals they check."""

import numpy as np
import pytest

from oqsim.qmath import DensityMatrix, Wire


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_density(rng, n=2):
    """Ginibre-sampled density matrix."""
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_density_state(rng, n=2, label="q"):
    return DensityMatrix(random_density(rng, n), (Wire(label, n),))


def random_channel_ops(rng, n=2, l=3):
    """Random Kraus set from the first block column of a Haar-ish unitary."""
    big = n * l
    g = rng.normal(size=(big, big)) + 1j * rng.normal(size=(big, big))
    q, _ = np.linalg.qr(g)
    return [q[i * n:(i + 1) * n, :n] for i in range(l)]


def kraus_apply(ops, rho):
    """Direct sum_i K rho K^dag, the reference channel action."""
    out = np.zeros_like(np.asarray(rho, dtype=complex))
    for op in ops:
        out = out + op @ rho @ op.conj().T
    return out


def brute_partial_trace(mat, dims, axis):
    """Partial trace by an explicit basis sum, no reshape tricks."""
    mat = np.asarray(mat, dtype=complex)
    m = len(dims)
    keep = [i for i in range(m) if i != axis]
    out_dim = int(np.prod([dims[i] for i in keep])) if keep else 1
    out = np.zeros((out_dim, out_dim), dtype=complex)

    def digits(x):
        ds = []
        for d in reversed(dims):
            ds.append(x % d)
            x //= d
        return list(reversed(ds))

    def flat(ds, which):
        acc = 0
        for i in which:
            acc = acc * dims[i] + ds[i]
        return acc

    total = int(np.prod(dims))
    for row in range(total):
        dr = digits(row)
        for col in range(total):
            dc = digits(col)
            if dr[axis] != dc[axis]:
                continue
            out[flat(dr, keep), flat(dc, keep)] += mat[row, col]
    return out


def vec_colstack(m):
    """Column-stacking vectorization, written independently."""
    m = np.asarray(m, dtype=complex)
    return np.concatenate([m[:, j] for j in range(m.shape[1])])


KET0 = np.array([1.0, 0.0], dtype=complex)
KET1 = np.array([0.0, 1.0], dtype=complex)
KETP = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)


def proj(v):
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def qstate(matrix, label="q"):
    return DensityMatrix(matrix, (Wire(label),))
