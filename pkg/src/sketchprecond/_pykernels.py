"""Pure-numpy versions of the compiled kernels in ``_ckernels.pyx``.

Same signatures, same arithmetic, same accumulation order. Used when the
extension is not built or when ``SKETCHPRECOND_PURE=1``.
"""

import numpy as np

# rows of the expanded (entry, column) product processed per np.add.at call
_CHUNK_ENTRIES = 1 << 14


def csc_dense_accumulate(indptr, indices, data, A, out):
    m = A.shape[0]
    cols = np.repeat(np.arange(m, dtype=np.int64), np.diff(indptr))
    nnz = len(indices)
    for start in range(0, nnz, _CHUNK_ENTRIES):
        stop = min(start + _CHUNK_ENTRIES, nnz)
        contrib = data[start:stop, None] * A[cols[start:stop], :]
        np.add.at(out, indices[start:stop], contrib)


def csc_csr_accumulate(s_indptr, s_indices, s_data, a_indptr, a_indices, a_data, out):
    m = len(s_indptr) - 1
    s_cols = np.repeat(np.arange(m, dtype=np.int64), np.diff(s_indptr))
    row_len = np.diff(a_indptr)[s_cols]
    if row_len.sum() == 0:
        return
    # entry k of S pairs with every stored entry of row s_cols[k] of A
    rep_k = np.repeat(np.arange(len(s_indices)), row_len)
    first = np.repeat(a_indptr[s_cols], row_len)
    offs = np.arange(len(rep_k)) - np.repeat(np.cumsum(row_len) - row_len, row_len)
    q = first + offs
    vals = s_data[rep_k] * a_data[q]
    np.add.at(out, (s_indices[rep_k], a_indices[q]), vals)


def sort_rows_find_duplicates(C, rows):
    sub = C[rows]
    sub.sort(axis=1)
    C[rows] = sub
    bi, bj = np.nonzero(sub[:, 1:] == sub[:, :-1])
    return rows[bi].astype(np.int64), bj.astype(np.int64)


def fwht_columns(X):
    L = X.shape[0]
    XT = X.T
    h = 1
    while h < L:
        Y = XT.reshape(XT.shape[0], L // (2 * h), 2, h)
        a = Y[:, :, 0, :].copy()
        b = Y[:, :, 1, :].copy()
        Y[:, :, 0, :] = a + b
        Y[:, :, 1, :] = a - b
        h *= 2


def jacobi_eigenvalues(G, tol, max_sweeps):
    n = G.shape[0]
    sweep = 0
    while sweep < max_sweeps:
        diag = np.diag(G)
        off = 2.0 * np.sum(np.triu(G, 1) ** 2)
        total = float(diag @ diag) + off
        if off <= tol * tol * total:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = G[p, q]
                if apq == 0.0:
                    continue
                theta = (G[q, q] - G[p, p]) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                gp = G[:, p].copy()
                gq = G[:, q].copy()
                G[:, p] = c * gp - s * gq
                G[:, q] = s * gp + c * gq
                gp = G[p, :].copy()
                gq = G[q, :].copy()
                G[p, :] = c * gp - s * gq
                G[q, :] = s * gp + c * gq
        sweep += 1
    return np.diag(G).copy(), sweep
