"""Variable-order modal DG space over a :class:`~dgtwophase.mesh.QuadMesh`.

Each element carries an orthonormal Legendre tensor basis of its own order
``r_E`` on the reference square.  Coefficients are stored element by element,
one contiguous block per field (``p`` block, then ``s`` block).  With the
reference-orthonormal basis the element mass matrix is ``|E|/4 * I`` and the
element mean is ``c_0 / 2``.
"""
from functools import cached_property

import numpy as np

from .basis import child_prolongation, gauss_square, n_modes, tabulate

P, S = 0, 1


class DgSpace:
    def __init__(self, mesh, orders, max_order=None, n_fields=2):
        orders = np.broadcast_to(np.asarray(orders, dtype=np.int64), (mesh.n_elements,)).copy()
        if orders.min() < 0:
            raise ValueError("polynomial orders must be >= 0")
        self.mesh = mesh
        self.orders = orders
        self.max_order = int(orders.max() if max_order is None else max(max_order, orders.max()))
        self.n_fields = n_fields
        self.block = n_modes(orders)
        sizes = n_fields * self.block
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.n_dofs = int(self.offsets[-1])

    @property
    def n_elements(self):
        return self.mesh.n_elements

    @cached_property
    def groups(self):
        """order -> element indices, ascending order."""
        return {int(r): np.flatnonzero(self.orders == r) for r in np.unique(self.orders)}

    def dof_index(self, elements, order, field):
        """(len(elements), n_modes(order)) global indices of one field block."""
        m = n_modes(order)
        start = self.offsets[elements] + field * m
        return start[:, None] + np.arange(m)

    @cached_property
    def field_slices(self):
        """Global index arrays selecting all coefficients of each field."""
        out = []
        for f in range(self.n_fields):
            idx = [np.arange(self.offsets[e] + f * self.block[e],
                             self.offsets[e] + (f + 1) * self.block[e])
                   for e in range(self.n_elements)]
            out.append(np.concatenate(idx) if idx else np.zeros(0, dtype=np.int64))
        return out

    def zeros(self):
        return DgFunction(self, np.zeros(self.n_dofs))

    def with_orders(self, orders):
        return DgSpace(self.mesh, orders, self.max_order, self.n_fields)

    def same_layout(self, other):
        return (self.mesh is other.mesh and self.n_fields == other.n_fields
                and np.array_equal(self.orders, other.orders))


class DgFunction:
    """Coefficient vector on a :class:`DgSpace`."""

    def __init__(self, space, coeffs=None):
        self.space = space
        self.coeffs = np.zeros(space.n_dofs) if coeffs is None else np.asarray(coeffs, dtype=float)
        if self.coeffs.shape != (space.n_dofs,):
            raise ValueError("coefficient count does not match the space")

    def copy(self):
        return DgFunction(self.space, self.coeffs.copy())

    # per-field access -------------------------------------------------------
    def field_blocks(self, field):
        """Yield ``(order, elements, coefficient array (nE, m))`` per order group."""
        for r, els in self.space.groups.items():
            yield r, els, self.coeffs[self.space.dof_index(els, r, field)]

    def set_field_blocks(self, field, r, els, values):
        self.coeffs[self.space.dof_index(els, r, field)] = values

    def field_vector(self, field):
        return self.coeffs[self.space.field_slices[field]]

    def means(self, field):
        sp = self.space
        return 0.5 * self.coeffs[sp.offsets[:-1] + field * sp.block]

    def integral(self, field):
        return float(np.sum(self.means(field) * self.space.mesh.area))

    def l2_norm(self, field):
        sp = self.space
        out = 0.0
        for r, els, c in self.field_blocks(field):
            out += np.sum(0.25 * sp.mesh.area[els] * np.sum(c * c, axis=1))
        return float(np.sqrt(out))

    def evaluate(self, field, elements, xi, eta):
        """Values at reference points; ``xi, eta`` are (n,) or (n, q)."""
        elements = np.asarray(elements)
        xi = np.asarray(xi, float)
        eta = np.asarray(eta, float)
        out = np.zeros(xi.shape)
        orders = self.space.orders[elements]
        for r in np.unique(orders):
            sel = np.flatnonzero(orders == r)
            (B,) = tabulate(int(r), xi[sel], eta[sel], deriv=0)
            c = self.coeffs[self.space.dof_index(elements[sel], int(r), field)]
            if xi.ndim == 1:
                out[sel] = np.einsum("nm,nm->n", B, c)
            else:
                out[sel] = np.einsum("nqm,nm->nq", B, c)
        return out

    def evaluate_at(self, field, points):
        pts = np.atleast_2d(points)
        els = self.space.mesh.locate(pts)
        xi, eta = self.space.mesh.to_reference(els, pts)
        return self.evaluate(field, els, xi, eta)


def l2_project_analytic(space, f, field=None, out=None, n_points=None):
    """L2 projection of a pointwise field ``f(x, y)`` onto the space.

    Fills ``field`` of ``out`` (new function if None) and returns it; with
    ``field=None`` the space must be single-field.
    """
    out = space.zeros() if out is None else out
    field = 0 if field is None else field
    mesh = space.mesh
    for r, els in space.groups.items():
        nq = n_points or (space.max_order + 2)
        pts, wts = gauss_square(nq)
        (B,) = tabulate(r, pts[:, 0], pts[:, 1], deriv=0)
        x = mesh.center[els, 0][:, None] + 0.5 * mesh.dx[els][:, None] * pts[:, 0]
        y = mesh.center[els, 1][:, None] + 0.5 * mesh.dy[els][:, None] * pts[:, 1]
        vals = np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape)
        out.set_field_blocks(field, r, els, (vals * wts) @ B)
    return out


def change_orders(u, orders):
    """Re-express ``u`` with new per-element orders (pad with zeros or truncate)."""
    old = u.space
    new = old.with_orders(orders)
    v = new.zeros()
    keep = n_modes(np.minimum(old.orders, new.orders))
    for e in range(old.n_elements):
        for f in range(old.n_fields):
            a = old.offsets[e] + f * old.block[e]
            b = new.offsets[e] + f * new.block[e]
            v.coeffs[b:b + keep[e]] = u.coeffs[a:a + keep[e]]
    return v


def project_to_lower_order(u, floor=0):
    """L2 projection onto the space with every order reduced by one.

    With the hierarchical orthonormal basis this is coefficient truncation.
    """
    return change_orders(u, np.maximum(u.space.orders - 1, floor))


def transfer_on_adapt(u, new_mesh, report):
    """Move ``u`` onto ``new_mesh`` after :meth:`QuadMesh.execute_marks`.

    Children receive the exact restriction of the parent polynomial; a
    coarsened parent receives the L2 projection of its four children at the
    highest of their orders.
    """
    old = u.space
    kind, src, pos = report.kind, report.src, report.child_pos
    orders = old.orders[src[:, 0]].copy()
    par = kind == 2
    if par.any():
        orders[par] = old.orders[src[par]].max(axis=1)
    new = DgSpace(new_mesh, orders, old.max_order, old.n_fields)
    v = new.zeros()
    for k in range(new.n_elements):
        r = int(orders[k])
        m = n_modes(r)
        for f in range(old.n_fields):
            b = new.offsets[k] + f * m
            if kind[k] == 0:
                e = src[k, 0]
                a = old.offsets[e] + f * m
                v.coeffs[b:b + m] = u.coeffs[a:a + m]
            elif kind[k] == 1:
                e = src[k, 0]
                a = old.offsets[e] + f * m
                v.coeffs[b:b + m] = child_prolongation(r)[pos[k]] @ u.coeffs[a:a + m]
            else:
                acc = np.zeros(m)
                Pm = child_prolongation(r)
                for c in range(4):
                    e = src[k, c]
                    mc = old.block[e]
                    a = old.offsets[e] + f * mc
                    cc = np.zeros(m)
                    cc[:mc] = u.coeffs[a:a + mc]
                    acc += 0.25 * Pm[c].T @ cc
                v.coeffs[b:b + m] = acc
    return v
