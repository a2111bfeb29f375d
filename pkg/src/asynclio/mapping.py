"""Uncertainty-gated incremental point map.

A flat-array kd-tree (numba kernels for the hot paths) holds world-frame
points with their 3x3 positional covariances. Insertion is trace-gated at
tau and voxel-downsampled: each voxel keeps at most `capacity` points, and a
full voxel only trades points inside the per-axis eligibility box around the
voxel center, preferring low-trace candidates. Deletions are lazy (dead
nodes stay structural until a rebuild); subtree rebuilds follow a
scapegoat-style balance criterion so query depth stays logarithmic.

Node indices are assigned in insertion order and survive rebuilds, which
also makes them the k-NN tie-breaker.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from .lie import Pose3

_PATH_CAP = 8192
_STACK_CAP = 4096


@njit(cache=True)
def _descend_insert(pts, left, right, axis_arr, count, root, idx, path_buf):
    """Attach node idx below root; returns (new_root, path_len)."""
    if root == -1:
        axis_arr[idx] = 0
        count[idx] = 1
        return idx, 0
    node = root
    plen = 0
    while True:
        path_buf[plen] = node
        plen += 1
        count[node] += 1
        ax = axis_arr[node]
        if pts[idx, ax] < pts[node, ax]:
            if left[node] == -1:
                left[node] = idx
                axis_arr[idx] = (ax + 1) % 3
                count[idx] = 1
                return root, plen
            node = left[node]
        else:
            if right[node] == -1:
                right[node] = idx
                axis_arr[idx] = (ax + 1) % 3
                count[idx] = 1
                return root, plen
            node = right[node]


@njit(cache=True)
def _collect_alive(left, right, alive, node, out):
    """Alive node indices in the subtree; returns how many were written."""
    if node == -1:
        return 0
    stack = np.empty(_STACK_CAP, dtype=np.int64)
    stack[0] = node
    top = 1
    n = 0
    while top > 0:
        top -= 1
        cur = stack[top]
        if alive[cur]:
            out[n] = cur
            n += 1
        if left[cur] != -1:
            stack[top] = left[cur]
            top += 1
        if right[cur] != -1:
            stack[top] = right[cur]
            top += 1
    return n


@njit(cache=True)
def _build_balanced(pts, left, right, axis_arr, count, items, lo, hi, depth):
    """Median-balanced subtree from items[lo:hi]; returns its root."""
    if lo >= hi:
        return -1
    ax = depth % 3
    seg = items[lo:hi]
    order = np.argsort(pts[seg, ax], kind="mergesort")
    items[lo:hi] = seg[order]
    mid = (lo + hi) // 2
    root = items[mid]
    axis_arr[root] = ax
    left[root] = _build_balanced(pts, left, right, axis_arr, count, items, lo, mid, depth + 1)
    right[root] = _build_balanced(
        pts, left, right, axis_arr, count, items, mid + 1, hi, depth + 1
    )
    count[root] = hi - lo
    return root


@njit(cache=True, parallel=True)
def _knn_batch(pts, left, right, axis_arr, alive, root, queries, k, out_idx, out_d2):
    """Exact k nearest alive nodes per query; ties break on lower node index."""
    m = queries.shape[0]
    for qi in prange(m):
        q = queries[qi]
        heap_d = out_d2[qi]
        heap_i = out_idx[qi]
        for j in range(k):
            heap_d[j] = np.inf
            heap_i[j] = -1
        if root == -1:
            continue
        stack_node = np.empty(_STACK_CAP, dtype=np.int64)
        stack_dist = np.empty(_STACK_CAP, dtype=np.float64)
        stack_node[0] = root
        stack_dist[0] = 0.0
        top = 1
        while top > 0:
            top -= 1
            node = stack_node[top]
            if stack_dist[top] > heap_d[k - 1]:
                continue
            while node != -1:
                if alive[node]:
                    dx = q[0] - pts[node, 0]
                    dy = q[1] - pts[node, 1]
                    dz = q[2] - pts[node, 2]
                    d2 = dx * dx + dy * dy + dz * dz
                    worst = heap_d[k - 1]
                    if d2 < worst or (d2 == worst and node < heap_i[k - 1]):
                        pos = k - 1
                        while pos > 0 and (
                            d2 < heap_d[pos - 1]
                            or (d2 == heap_d[pos - 1] and node < heap_i[pos - 1])
                        ):
                            heap_d[pos] = heap_d[pos - 1]
                            heap_i[pos] = heap_i[pos - 1]
                            pos -= 1
                        heap_d[pos] = d2
                        heap_i[pos] = node
                ax = axis_arr[node]
                diff = q[ax] - pts[node, ax]
                if diff < 0.0:
                    near = left[node]
                    far = right[node]
                else:
                    near = right[node]
                    far = left[node]
                if far != -1:
                    fd = diff * diff
                    if fd <= heap_d[k - 1] and top < _STACK_CAP:
                        stack_node[top] = far
                        stack_dist[top] = fd
                        top += 1
                node = near


class KdMap:
    """Incremental kd-tree of MapPoints with tau-gating and voxel contest."""

    def __init__(
        self,
        voxel_size: float = 0.4,
        tau: float = 1.0,
        capacity: int = 1,
        box_half_widths=(0.05, 0.05, 0.05),
        alpha: float = 0.7,
    ):
        self.voxel_size = float(voxel_size)
        self.tau = float(tau)
        self.capacity = int(capacity)
        self.box_half_widths = np.asarray(box_half_widths, dtype=float)
        self.alpha = float(alpha)

        cap = 1024
        self.pts = np.zeros((cap, 3))
        self.covs = np.zeros((cap, 3, 3))
        self.traces = np.zeros(cap)
        self.frames = np.zeros(cap, dtype=np.int64)
        self.left = np.full(cap, -1, dtype=np.int64)
        self.right = np.full(cap, -1, dtype=np.int64)
        self.axis = np.zeros(cap, dtype=np.int64)
        self.count = np.zeros(cap, dtype=np.int64)
        self.alive = np.zeros(cap, dtype=np.bool_)
        self.root = -1
        self.n_nodes = 0
        self.n_alive = 0
        self.n_dead = 0
        self._path = np.empty(_PATH_CAP, dtype=np.int64)
        self._voxels: dict[tuple[int, int, int], list[int]] = {}

    def __len__(self) -> int:
        return self.n_alive

    def _grow(self) -> None:
        cap = len(self.pts) * 2
        for name in ("pts", "covs", "traces", "frames", "left", "right", "axis", "count", "alive"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: len(old)] = old
            if name in ("left", "right"):
                new[len(old):] = -1
            setattr(self, name, new)

    def _voxel_key(self, xyz) -> tuple[int, int, int]:
        v = np.floor(np.asarray(xyz) / self.voxel_size).astype(int)
        return int(v[0]), int(v[1]), int(v[2])

    def _in_center_box(self, xyz, key) -> bool:
        center = (np.array(key, dtype=float) + 0.5) * self.voxel_size
        return bool(np.all(np.abs(np.asarray(xyz) - center) <= self.box_half_widths))

    def _attach(self, idx: int) -> None:
        self.root, plen = _descend_insert(
            self.pts, self.left, self.right, self.axis, self.count, self.root, idx, self._path
        )
        # Scapegoat check along the insertion path, deepest-first parent of
        # the highest unbalanced node rebuilt once.
        scapegoat = -1
        for d in range(plen):
            node = self._path[d]
            c = self.count[node]
            lc = self.count[self.left[node]] if self.left[node] != -1 else 0
            rc = self.count[self.right[node]] if self.right[node] != -1 else 0
            if max(lc, rc) > self.alpha * c and c > 8:
                scapegoat = node
                break
        if scapegoat != -1:
            self._rebuild_subtree(scapegoat, self._path[:d], d)

    def _rebuild_subtree(self, node: int, path, depth_in_path: int) -> None:
        parent = path[depth_in_path - 1] if depth_in_path > 0 else -1
        items = np.empty(self.count[node] + 1, dtype=np.int64)
        n = _collect_alive(self.left, self.right, self.alive, node, items)
        depth = depth_in_path
        new_root = _build_balanced(
            self.pts, self.left, self.right, self.axis, self.count, items[:n], 0, n, depth
        )
        if parent == -1:
            self.root = new_root
        elif self.left[parent] == node:
            self.left[parent] = new_root
        else:
            self.right[parent] = new_root
        # Parent counts were maintained with dead nodes included; refresh them.
        removed = self.count[node] - n
        if removed:
            for d in range(depth_in_path):
                self.count[path[d]] -= removed
            self.n_dead -= removed

    def _new_node(self, xyz, cov, frame) -> int:
        if self.n_nodes == len(self.pts):
            self._grow()
        idx = self.n_nodes
        self.n_nodes += 1
        self.pts[idx] = xyz
        self.covs[idx] = cov
        self.traces[idx] = np.trace(cov)
        self.frames[idx] = frame
        self.left[idx] = -1
        self.right[idx] = -1
        self.alive[idx] = True
        self.n_alive += 1
        return idx

    def _kill(self, idx: int) -> None:
        self.alive[idx] = False
        self.n_alive -= 1
        self.n_dead += 1

    def insert(self, xyz, cov, frame: int = 0) -> str:
        """Gate, run the voxel contest, and attach if the point survives.

        Returns one of "gated", "accepted", "displaced", "rejected".
        """
        xyz = np.asarray(xyz, dtype=float)
        cov = np.asarray(cov, dtype=float)
        trace = float(np.trace(cov))
        if trace > self.tau:
            return "gated"
        key = self._voxel_key(xyz)
        occupants = self._voxels.setdefault(key, [])
        if len(occupants) < self.capacity:
            idx = self._new_node(xyz, cov, frame)
            occupants.append(idx)
            self._attach(idx)
            return "accepted"
        if not self._in_center_box(xyz, key):
            return "rejected"
        # Full voxel: the incoming point is center-eligible; evict the worst
        # occupant if the incoming one beats it (out-of-box occupants lose
        # first, then higher trace, then later insertion).
        def rank(i):
            return (not self._in_center_box(self.pts[i], key), self.traces[i], i)

        worst = max(occupants, key=rank)
        incoming_rank = (False, trace, self.n_nodes)
        if incoming_rank < rank(worst):
            self._kill(worst)
            occupants.remove(worst)
            idx = self._new_node(xyz, cov, frame)
            occupants.append(idx)
            self._attach(idx)
            return "displaced"
        return "rejected"

    def insert_batch(self, points: np.ndarray, covs: np.ndarray, frame: int = 0) -> dict:
        outcomes = {"gated": 0, "accepted": 0, "displaced": 0, "rejected": 0}
        for p, c in zip(points, covs):
            outcomes[self.insert(p, c, frame)] += 1
        return outcomes

    def knn_batch(self, queries: np.ndarray, k: int = 5) -> tuple[np.ndarray, np.ndarray]:
        """Indices and squared distances of the k nearest points per query.

        Missing neighbors (tree smaller than k) are index -1 with inf
        distance.
        """
        queries = np.ascontiguousarray(np.atleast_2d(queries), dtype=float)
        m = len(queries)
        out_idx = np.empty((m, k), dtype=np.int64)
        out_d2 = np.empty((m, k))
        _knn_batch(
            self.pts, self.left, self.right, self.axis, self.alive, self.root,
            queries, k, out_idx, out_d2,
        )
        return out_idx, out_d2

    def knn(self, query, k: int = 5):
        """Nearest neighbors of one query: (points, covs, indices)."""
        idx, _ = self.knn_batch(np.asarray(query, dtype=float)[None, :], k)
        found = idx[0][idx[0] >= 0]
        return self.pts[found], self.covs[found], found

    def maybe_rebalance(self) -> None:
        """Audit the whole tree: rebuild any alpha-unbalanced subtree and
        purge lazily deleted nodes when they dominate."""
        if self.root == -1:
            return
        if self.n_dead > 0.25 * (self.n_alive + self.n_dead):
            items = np.empty(self.n_alive + 1, dtype=np.int64)
            n = _collect_alive(self.left, self.right, self.alive, self.root, items)
            self.root = _build_balanced(
                self.pts, self.left, self.right, self.axis, self.count, items[:n], 0, n, 0
            )
            self.n_dead = 0
            return
        # Top-down scan for the highest unbalanced subtrees.
        removed_total = 0
        stack = [(self.root, -1, 0)]
        while stack:
            node, parent, depth = stack.pop()
            lc = self.count[self.left[node]] if self.left[node] != -1 else 0
            rc = self.count[self.right[node]] if self.right[node] != -1 else 0
            if max(lc, rc) > self.alpha * self.count[node] and self.count[node] > 8:
                old = self.count[node]
                items = np.empty(self.count[node] + 1, dtype=np.int64)
                n = _collect_alive(self.left, self.right, self.alive, node, items)
                new_root = _build_balanced(
                    self.pts, self.left, self.right, self.axis, self.count,
                    items[:n], 0, n, depth,
                )
                if parent == -1:
                    self.root = new_root
                elif self.left[parent] == node:
                    self.left[parent] = new_root
                else:
                    self.right[parent] = new_root
                removed_total += old - n
                continue
            for child in (self.left[node], self.right[node]):
                if child != -1:
                    stack.append((child, node, depth + 1))
        if removed_total:
            self.n_dead -= removed_total
            self._refresh_counts()

    def _refresh_counts(self) -> None:
        """Recompute structural subtree counts after rebuilds dropped nodes."""
        if self.root == -1:
            return
        order = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            order.append(node)
            for child in (self.left[node], self.right[node]):
                if child != -1:
                    stack.append(child)
        for node in reversed(order):
            c = 1
            if self.left[node] != -1:
                c += self.count[self.left[node]]
            if self.right[node] != -1:
                c += self.count[self.right[node]]
            self.count[node] = c

    def depth(self) -> int:
        if self.root == -1:
            return 0
        best = 0
        stack = [(self.root, 1)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            for child in (self.left[node], self.right[node]):
                if child != -1:
                    stack.append((child, d + 1))
        return best

    def alive_points(self) -> tuple[np.ndarray, np.ndarray]:
        mask = self.alive[: self.n_nodes]
        return self.pts[: self.n_nodes][mask], self.covs[: self.n_nodes][mask]

    def export_ply(self, path) -> None:
        """ASCII PLY with per-point trace for inspection."""
        pts, covs = self.alive_points()
        traces = np.trace(covs, axis1=1, axis2=2)
        with open(path, "w") as f:
            f.write("ply\nformat ascii 1.0\n")
            f.write(f"element vertex {len(pts)}\n")
            f.write("property float x\nproperty float y\nproperty float z\n")
            f.write("property float trace\nend_header\n")
            for p, tr in zip(pts, traces):
                f.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {tr:.8f}\n")


def to_world(
    state, temporal: Pose3, extrinsic: Pose3, points: np.ndarray
) -> np.ndarray:
    """World-frame coordinates of undistorted source-frame points."""
    chain = state.pose @ temporal @ extrinsic
    return chain.apply(points)
