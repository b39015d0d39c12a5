"""Independent reference implementations used only by the tests."""
import itertools
from math import factorial

import numpy as np
from scipy.optimize import linprog


def w_lp(x, a, y, b, p=1.0):
    """Optimal transport cost by linear programming over couplings."""
    x, a, y, b = map(np.asarray, (x, a, y, b))
    n, m = x.size, y.size
    cost = (np.abs(x[:, None] - y[None, :]) ** p).ravel()
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A[n + j, j::m] = 1.0
    res = linprog(cost, A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun


def random_measure(rng, k_max=12, integer_atoms=False):
    k = int(rng.integers(1, k_max + 1))
    x = rng.integers(-5, 6, size=k).astype(float) if integer_atoms else rng.normal(size=k) * 3
    w = rng.random(k) + 1e-3
    return x, w / w.sum()


def occupation_states(d, N):
    """All occupation vectors of d modes with total N, lexicographic."""
    out = [s for s in itertools.product(range(N + 1), repeat=d) if sum(s) == N]
    return np.array(sorted(out), dtype=np.int64).reshape(-1, d)


def symmetric_isometry(d, N, states=None):
    """Columns: normalized symmetric tensors in (C^d)^N for each occupation vector."""
    states = occupation_states(d, N) if states is None else states
    S = np.zeros((d ** N, len(states)))
    for c, occ in enumerate(states):
        word = [k for k, n in enumerate(occ) for _ in range(n)]
        perms = set(itertools.permutations(word))
        norm = np.sqrt(len(perms))
        for w in perms:
            S[np.ravel_multi_index(w, (d,) * N), c] = 1.0 / norm
    return S


def tensor_one_body(A, N):
    """sum_i A acting on factor i of (C^d)^N."""
    d = A.shape[0]
    out = np.zeros((d ** N, d ** N), dtype=complex)
    eye = np.eye(d)
    for i in range(N):
        term = np.array([[1.0]])
        for j in range(N):
            term = np.kron(term, A if j == i else eye)
        out += term
    return out


def tensor_two_body(W, N):
    """sum_{i<j} W acting on factors (i, j); W is a d^2 x d^2 matrix."""
    d = int(round(np.sqrt(W.shape[0])))
    D = d ** N
    W4 = W.reshape(d, d, d, d)
    out = np.zeros((D, D), dtype=complex)
    for col in range(D):
        idx = np.unravel_index(col, (d,) * N)
        for i in range(N):
            for j in range(i + 1, N):
                for a in range(d):
                    for b in range(d):
                        val = W4[a, b, idx[i], idx[j]]
                        if val == 0:
                            continue
                        new = list(idx)
                        new[i], new[j] = a, b
                        out[np.ravel_multi_index(new, (d,) * N), col] += val
    return out


def multiset_law_first_quantized(psi_tensor, W, N):
    """Law of the sorted outcome index tuple for a state psi in (C^d)^N.

    ``W`` holds the measurement eigenvectors as columns.
    """
    d = W.shape[0]
    T = psi_tensor.reshape((d,) * N)
    for axis in range(N):
        T = np.moveaxis(np.tensordot(W.conj().T, T, axes=([1], [axis])), 0, axis)
    probs = {}
    for idx in itertools.product(range(d), repeat=N):
        key = tuple(sorted(idx))
        probs[key] = probs.get(key, 0.0) + abs(T[idx]) ** 2
    return probs


def multinomial_pmf(counts, weights):
    n = sum(counts)
    coef = factorial(n)
    for c in counts:
        coef //= factorial(c)
    return coef * float(np.prod(np.asarray(weights) ** np.asarray(counts)))
