"""Pure-Python consensus-round kernels.

Fallback for environments without the compiled extension. Same strict
ascending-index summation order and plain multiply-then-add as the
compiled kernels, so results are bit-identical (the extension is built
with FP contraction off).
"""


def dense_step(w, v, out):
    vl = v.tolist()
    res = []
    for row in w.tolist():
        acc = 0.0
        for wij, vj in zip(row, vl):
            acc = acc + wij * vj
        res.append(acc)
    out[:] = res


def neighbor_step(w, indptr, indices, v, out):
    vl = v.tolist()
    wl = w.tolist()
    il = indices.tolist()
    pl = indptr.tolist()
    res = []
    for i, row in enumerate(wl):
        acc = 0.0
        for t in range(pl[i], pl[i + 1]):
            j = il[t]
            acc = acc + row[j] * vl[j]
        res.append(acc)
    out[:] = res
