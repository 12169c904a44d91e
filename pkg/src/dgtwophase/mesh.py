"""Nonconforming quadrilateral mesh: a quadtree forest over a macro grid.

Leaves are identified by ``(level, ix, iy)`` where ``ix, iy`` index the
uniform grid of that level.  The one-level rule (face neighbours differ by
at most one level) is maintained by :meth:`QuadMesh.execute_marks`.
"""
from dataclasses import dataclass, field

import numpy as np

WEST, EAST, SOUTH, NORTH = 0, 1, 2, 3
SIDE_NAMES = ("west", "east", "south", "north")
_DIRS = ((-1, 0), (1, 0), (0, -1), (0, 1))

KEEP, REFINE, COARSEN = 0, 1, -1


class MeshError(ValueError):
    pass


@dataclass
class AdaptReport:
    """What :meth:`QuadMesh.execute_marks` did.

    ``kind[k]`` for new leaf ``k``: 0 unchanged (``src[k, 0]`` is the old
    leaf), 1 child of refined old leaf ``src[k, 0]`` at ``child_pos[k]``,
    2 parent of the four old leaves ``src[k, :]`` in child-position order.
    """
    kind: np.ndarray
    src: np.ndarray
    child_pos: np.ndarray
    refined: list = field(default_factory=list)
    coarsened: list = field(default_factory=list)
    clamped: list = field(default_factory=list)

    @property
    def changed(self):
        return bool(self.refined or self.coarsened)


class QuadMesh:
    """Leaf set of an adaptive quadtree over an ``nx`` x ``ny`` macro grid."""

    def __init__(self, nx, ny, extent, max_level=3, leaves=None):
        if nx <= 0 or ny <= 0:
            raise MeshError("macro grid needs positive element counts")
        if extent[0] <= 0 or extent[1] <= 0:
            raise MeshError("domain extent must be positive")
        if max_level < 0:
            raise MeshError("max_level must be >= 0")
        self.nx, self.ny = int(nx), int(ny)
        self.extent = (float(extent[0]), float(extent[1]))
        self.max_level = int(max_level)
        if leaves is None:
            iy, ix = np.divmod(np.arange(self.nx * self.ny), self.nx)
            leaves = np.column_stack([np.zeros_like(ix), ix, iy])
        self.leaves = np.asarray(leaves, dtype=np.int64).reshape(-1, 3)
        self._index = {tuple(k): n for n, k in enumerate(self.leaves.tolist())}
        self._geometry()
        self._build_faces()

    # ------------------------------------------------------------------ geometry
    def _geometry(self):
        lev = self.leaves[:, 0]
        self.level = lev
        self.dx = self.extent[0] / (self.nx * 2.0 ** lev)
        self.dy = self.extent[1] / (self.ny * 2.0 ** lev)
        self.center = np.column_stack([(self.leaves[:, 1] + 0.5) * self.dx,
                                       (self.leaves[:, 2] + 0.5) * self.dy])
        self.area = self.dx * self.dy

    @property
    def n_elements(self):
        return len(self.leaves)

    @property
    def n_faces(self):
        return len(self.face_minus)

    def diameter(self):
        """Longest edge of each element (used as h_E)."""
        return np.maximum(self.dx, self.dy)

    def _cells(self, level):
        return self.nx << level, self.ny << level

    def _build_faces(self):
        minus, plus, normal, side, length, mid = [], [], [], [], [], []
        index = self._index
        for e, (l, i, j) in enumerate(self.leaves.tolist()):
            ncx, ncy = self._cells(l)
            hx, hy = self.dx[e], self.dy[e]
            cx, cy = self.center[e]
            for d, (di, dj) in enumerate(_DIRS):
                ni, nj = i + di, j + dj
                ln = hy if di else hx
                m = (cx + 0.5 * di * hx, cy + 0.5 * dj * hy)
                if not (0 <= ni < ncx and 0 <= nj < ncy):
                    nb, tag = -1, d
                elif (l, ni, nj) in index:
                    if d in (WEST, SOUTH):
                        continue
                    nb, tag = index[(l, ni, nj)], -1
                elif l > 0 and (l - 1, ni >> 1, nj >> 1) in index:
                    nb, tag = index[(l - 1, ni >> 1, nj >> 1)], -1
                else:
                    continue  # finer neighbours own this face
                minus.append(e)
                plus.append(nb)
                normal.append((di, dj))
                side.append(tag)
                length.append(ln)
                mid.append(m)
        self.face_minus = np.array(minus, dtype=np.int64)
        self.face_plus = np.array(plus, dtype=np.int64)
        self.face_normal = np.array(normal, dtype=float).reshape(-1, 2)
        self.face_side = np.array(side, dtype=np.int64)
        self.face_length = np.array(length, dtype=float)
        self.face_mid = np.array(mid, dtype=float).reshape(-1, 2)

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.face_plus < 0)

    @property
    def interior_faces(self):
        return np.flatnonzero(self.face_plus >= 0)

    def face_geometry(self, faces=None):
        """Normals, measures |e| and h_e = avg(|E+-|)/|e| (|E-|/|e| on boundary)."""
        f = np.arange(self.n_faces) if faces is None else np.asarray(faces)
        am = self.area[self.face_minus[f]]
        ap = np.where(self.face_plus[f] >= 0, self.area[np.maximum(self.face_plus[f], 0)], am)
        he = 0.5 * (am + ap) / self.face_length[f]
        return self.face_normal[f], self.face_length[f], he

    def locate(self, points):
        """Leaf index containing each point (points on shared edges go up/right)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        W, H = self.extent
        tol = 1e-12 * max(W, H)
        if np.any((pts[:, 0] < -tol) | (pts[:, 0] > W + tol) |
                  (pts[:, 1] < -tol) | (pts[:, 1] > H + tol)):
            raise MeshError("point outside the domain")
        out = np.full(len(pts), -1, dtype=np.int64)
        for l in range(self.max_level + 1):
            ncx, ncy = self._cells(l)
            ii = np.clip(np.floor(pts[:, 0] / W * ncx).astype(np.int64), 0, ncx - 1)
            jj = np.clip(np.floor(pts[:, 1] / H * ncy).astype(np.int64), 0, ncy - 1)
            for k in np.flatnonzero(out < 0):
                n = self._index.get((l, int(ii[k]), int(jj[k])))
                if n is not None:
                    out[k] = n
        return out

    def to_reference(self, elements, points):
        """Map physical points into the reference square of their element."""
        e = np.asarray(elements)
        pts = np.asarray(points, dtype=float)
        xi = 2.0 * (pts[..., 0] - self.center[e, 0]) / self.dx[e]
        eta = 2.0 * (pts[..., 1] - self.center[e, 1]) / self.dy[e]
        return xi, eta

    def corners(self):
        """(N, 4, 2) corner coordinates, counter-clockwise from lower-left."""
        c, hx, hy = self.center, 0.5 * self.dx, 0.5 * self.dy
        sx = np.array([-1, 1, 1, -1])
        sy = np.array([-1, -1, 1, 1])
        return np.stack([c[:, None, 0] + sx * hx[:, None],
                         c[:, None, 1] + sy * hy[:, None]], axis=-1)

    # -------------------------------------------------------------- adaptation
    def execute_marks(self, marks):
        """Refine/coarsen leaves and return ``(new_mesh, AdaptReport)``.

        Refinement is capped at ``max_level``; a quartet is coarsened only when
        all four siblings are leaves marked for coarsening.  Neighbours are
        promoted to refinement where needed to keep the one-level rule.
        """
        marks = np.asarray(marks)
        if marks.shape != (self.n_elements,):
            raise MeshError("need one mark per leaf")
        lv = self.level
        clamped = np.flatnonzero((marks == REFINE) & (lv >= self.max_level)).tolist()
        clamped += np.flatnonzero((marks == COARSEN) & (lv == 0)).tolist()
        refine = set(np.flatnonzero((marks == REFINE) & (lv < self.max_level)).tolist())

        # refinement closure
        index = self._index
        stack = list(refine)
        while stack:
            e = stack.pop()
            l, i, j = self.leaves[e]
            if l == 0:
                continue
            ncx, ncy = self._cells(l)
            for di, dj in _DIRS:
                ni, nj = i + di, j + dj
                if not (0 <= ni < ncx and 0 <= nj < ncy) or (l, ni, nj) in index:
                    continue
                nb = index.get((l - 1, ni >> 1, nj >> 1))
                if nb is not None and nb not in refine:
                    refine.add(nb)
                    stack.append(nb)

        # coarsening candidates: complete quartets, all marked coarsen
        groups = {}
        for e in np.flatnonzero((marks == COARSEN) & (lv > 0)).tolist():
            if e in refine:
                continue
            l, i, j = self.leaves[e]
            groups.setdefault((l - 1, i >> 1, j >> 1), []).append(e)
        cand = {}
        for pkey, kids in groups.items():
            if len(kids) != 4:
                continue
            l, i, j = pkey
            order = [index[(l + 1, 2 * i + (c % 2), 2 * j + (c // 2))] for c in range(4)]
            cand[pkey] = order

        refined_keys = {tuple(self.leaves[e]) for e in refine}

        def subdivided(key):
            # is the cell `key` split into finer leaves after this adaptation?
            if key in refined_keys:
                return True
            if key in index or key in cand:
                return False
            l, i, j = key
            return any((l + 1, 2 * i + a, 2 * j + b) in index for a in (0, 1) for b in (0, 1))

        changed = True
        while changed:
            changed = False
            for pkey in list(cand):
                l, i, j = pkey
                lc = l + 1
                ncx, ncy = self._cells(lc)
                bad = False
                for c in range(4):
                    ci, cj = 2 * i + (c % 2), 2 * j + (c // 2)
                    for di, dj in _DIRS:
                        ni, nj = ci + di, cj + dj
                        if (ni >> 1, nj >> 1) == (i, j):
                            continue
                        if not (0 <= ni < ncx and 0 <= nj < ncy):
                            continue
                        if subdivided((lc, ni, nj)):
                            bad = True
                            break
                    if bad:
                        break
                if bad:
                    del cand[pkey]
                    changed = True
        coarse_of = {}
        for pkey, kids in cand.items():
            for k in kids:
                coarse_of[k] = pkey

        new_leaves, kind, src, pos = [], [], [], []
        done = set()
        for e, (l, i, j) in enumerate(self.leaves.tolist()):
            if e in refine:
                for c in range(4):
                    new_leaves.append((l + 1, 2 * i + (c % 2), 2 * j + (c // 2)))
                    kind.append(1)
                    src.append((e, -1, -1, -1))
                    pos.append(c)
            elif e in coarse_of:
                pkey = coarse_of[e]
                if pkey in done:
                    continue
                done.add(pkey)
                new_leaves.append(pkey)
                kind.append(2)
                src.append(tuple(cand[pkey]))
                pos.append(-1)
            else:
                new_leaves.append((l, i, j))
                kind.append(0)
                src.append((e, -1, -1, -1))
                pos.append(-1)
        new = QuadMesh(self.nx, self.ny, self.extent, self.max_level, np.array(new_leaves))
        report = AdaptReport(np.array(kind, dtype=np.int64), np.array(src, dtype=np.int64),
                             np.array(pos, dtype=np.int64), sorted(refine),
                             sorted(tuple(v) for v in cand.values()), sorted(clamped))
        return new, report

    def check(self):
        """Assert the structural invariants (tiling and one-level rule)."""
        total = self.extent[0] * self.extent[1]
        assert abs(self.area.sum() - total) <= 1e-12 * total
        f = self.interior_faces
        diff = np.abs(self.level[self.face_minus[f]] - self.level[self.face_plus[f]])
        assert np.all(diff <= 1)
        assert np.all(self.level <= self.max_level)


def build_macro(nx, ny, extent, max_level=3):
    """Uniform level-0 mesh of ``nx`` x ``ny`` rectangles."""
    return QuadMesh(nx, ny, extent, max_level)
