"""Compiled inner loops: neighbour counting and one projected-SGD phase."""

import math

import numba
import numpy as np

# Above this k/n ratio a BLAS Gram block plus a scalar gather beats computing
# each sampled pair distance from coordinates.
_GRAM_RATIO = 0.125
_GRAM_BLOCK_ELEMS = 1 << 22
# row block for the streamed dense path; small enough to stay cache resident
_STREAM_ROWS = 32


@numba.njit(cache=True)
def _count_all(points, r2):
    n, d = points.shape
    out = np.zeros(n, np.int64)
    for i in range(n):
        c = 0
        for j in range(n):
            s = 0.0
            for l in range(d):
                t = points[i, l] - points[j, l]
                s += t * t
            if s <= r2:
                c += 1
        out[i] = c
    return out


def count_subsample_hits(points: np.ndarray, idx: np.ndarray, radius: float) -> np.ndarray:
    """For each row ``i``, how many sampled ``idx[i, :]`` lie within ``radius`` of ``points[i]``."""
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    rows = max(1, _GRAM_BLOCK_ELEMS // max(idx.shape[1], points.shape[0], 1))
    out = np.empty(idx.shape[0], np.int64)
    for start in range(0, idx.shape[0], rows):
        stop = min(start + rows, idx.shape[0])
        out[start:stop] = _count_rows(points, start, idx[start:stop], radius)
    return out


def count_neighbors(points: np.ndarray, radius: float) -> np.ndarray:
    """Exact count of points (self included) within ``radius`` of each point."""
    return _count_all(points, float(radius) * float(radius))


@numba.njit(cache=True)
def sgd_phase(points, idx, z0, center, radius, eta, record):
    """Projected SGD on the average-distance objective over ``B(center, radius)``.

    Returns the average of ``z_0 .. z_{T-1}``, the final iterate ``z_T`` and,
    when ``record`` is set, every iterate ``z_0 .. z_{T-1}``.
    """
    steps = idx.shape[0]
    d = points.shape[1]
    z = z0.copy()
    total = np.zeros(d)
    diff = np.empty(d)
    traj = np.empty((steps if record else 0, d))
    r2 = radius * radius
    for t in range(steps):
        for l in range(d):
            total[l] += z[l]
        if record:
            for l in range(d):
                traj[t, l] = z[l]
        i = idx[t]
        big = 0.0
        for l in range(d):
            diff[l] = z[l] - points[i, l]
            a = abs(diff[l])
            if a > big:
                big = a
        if big > 0.0:
            s = 0.0
            for l in range(d):
                u = diff[l] / big
                s += u * u
            step = eta / (big * math.sqrt(s))
            for l in range(d):
                z[l] -= step * diff[l]
        s = 0.0
        for l in range(d):
            u = z[l] - center[l]
            s += u * u
        if s > r2:
            scale = radius / math.sqrt(s)
            for l in range(d):
                z[l] = center[l] + scale * (z[l] - center[l])
    for l in range(d):
        total[l] /= steps
    return total, z, traj


@numba.njit(inline="always")
def _splitmix_next(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> np.uint64(31))


@numba.njit(inline="always")
def _uniform_index(state, n, threshold):
    # Lemire's multiply-shift on the top 32 bits with rejection: exactly uniform on [0, n)
    mask = np.uint64(0xFFFFFFFF)
    while True:
        state, w = _splitmix_next(state)
        m = (w >> np.uint64(32)) * n
        if (m & mask) >= threshold:
            return state, np.int64(m >> np.uint64(32))


@numba.njit(cache=True)
def draw_indices(n, rows, k, state):
    """Uniform indices in ``[0, n)`` from a splitmix64 stream; returns ``(idx, next_state)``."""
    nn = np.uint64(n)
    threshold = (np.uint64(1 << 32) - nn) % nn
    idx = np.empty((rows, k), np.int64)
    for a in range(rows):
        for b in range(k):
            state, idx[a, b] = _uniform_index(state, nn, threshold)
    return idx, state


@numba.njit(cache=True)
def _count_sampled(points, start, rows, k, r2, state):
    n, d = points.shape
    nn = np.uint64(n)
    threshold = (np.uint64(1 << 32) - nn) % nn
    out = np.zeros(rows, np.int64)
    for a in range(rows):
        i = start + a
        c = 0
        for b in range(k):
            state, j = _uniform_index(state, nn, threshold)
            s = 0.0
            for l in range(d):
                t = points[i, l] - points[j, l]
                s += t * t
            if s <= r2:
                c += 1
        out[a] = c
    return out, state


@numba.njit(cache=True)
def _gather_sampled(sq, k, r2, state, out, start):
    rows, n = sq.shape
    nn = np.uint64(n)
    threshold = (np.uint64(1 << 32) - nn) % nn
    for a in range(rows):
        c = 0
        for b in range(k):
            state, j = _uniform_index(state, nn, threshold)
            if sq[a, j] <= r2:
                c += 1
        out[start + a] = c
    return state


def stream_subsample_hits(points: np.ndarray, radius: float, k: int, seed: int) -> np.ndarray:
    """Like :func:`count_subsample_hits` with indices drawn from the stream ``seed``.

    The indices are exactly ``draw_indices(n, n, k, seed)[0]`` but are never
    materialized. Large ``k`` switches to squared distances from a BLAS
    product over small row blocks, so each sampled pair costs one lookup.
    """
    n = points.shape[0]
    state = np.uint64(seed)
    r2 = float(radius) * float(radius)
    if k < _GRAM_RATIO * n:
        return _count_sampled(points, 0, n, k, r2, state)[0]
    out = np.empty(n, np.int64)
    norms = np.einsum("ij,ij->i", points, points)
    for start in range(0, n, _STREAM_ROWS):
        stop = min(start + _STREAM_ROWS, n)
        sq = points[start:stop] @ points.T
        sq *= -2.0
        sq += norms[start:stop, None]
        sq += norms[None, :]
        state = _gather_sampled(sq, k, r2, np.uint64(state), out, start)
    return out


def _count_rows(points, start, idx, radius):
    r2 = float(radius) * float(radius)
    if idx.shape[1] >= _GRAM_RATIO * points.shape[0]:
        block = points[start:start + idx.shape[0]]
        sq = (np.einsum("ij,ij->i", block, block)[:, None]
              + np.einsum("ij,ij->i", points, points)[None, :]
              - 2.0 * (block @ points.T))
        return (np.take_along_axis(sq, idx, axis=1) <= r2).sum(axis=1)
    return _count_block_direct(points, start, idx, r2)


@numba.njit(cache=True)
def _count_block_direct(points, start, idx, r2):
    rows, k = idx.shape
    d = points.shape[1]
    out = np.zeros(rows, np.int64)
    for a in range(rows):
        i = start + a
        c = 0
        for b in range(k):
            j = idx[a, b]
            s = 0.0
            for l in range(d):
                t = points[i, l] - points[j, l]
                s += t * t
            if s <= r2:
                c += 1
        out[a] = c
    return out
