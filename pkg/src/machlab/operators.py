"""Masked staggered-grid calculus shared by the solvers and spectral tools.

The discrete gradient G maps cell scalars to interior faces (zero on
boundary and dead faces, which encodes the homogeneous Neumann condition),
and the divergence is exactly -G^T, so the five-point Neumann Laplacian is
the Gram matrix G^T G. Helmholtz projections and pressure projections built
from these operators are therefore exact discrete orthogonal splittings.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DisconnectedDomain, PoissonFailure


class DiscreteOperators:
    """Per-grid cache of masks, sparse operators, and factorizations."""

    def __init__(self, grid):
        self.grid = grid
        self.h = grid.h
        act = grid.active
        self.active_index = -np.ones(act.shape, dtype=np.int64)
        self.active_index[act] = np.arange(grid.n_active)
        self._check_connected()
        self._assemble()
        self._lu = None

    # -- assembly ----------------------------------------------------------

    def _check_connected(self):
        g = self.grid
        n = g.n_active
        rows, cols = [], []
        idx = self.active_index
        act = g.active
        both = act[:-1, :] & act[1:, :]
        rows.append(idx[:-1, :][both])
        cols.append(idx[1:, :][both])
        both = act[:, :-1] & act[:, 1:]
        rows.append(idx[:, :-1][both])
        cols.append(idx[:, 1:][both])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        adj = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
        ncomp = sp.csgraph.connected_components(adj, directed=False, return_labels=False)
        if ncomp != 1:
            raise DisconnectedDomain(f"fluid region has {ncomp} components")

    def _assemble(self):
        g = self.grid
        h = self.h
        idx = self.active_index
        # gradient incidence: one row per interior face, entries +-1/h
        rows, cols, vals = [], [], []
        nface = 0
        iu, ju = np.nonzero(g.uface_interior)
        self.uface_rows = np.full(g.uface_interior.shape, -1, dtype=np.int64)
        self.uface_rows[iu, ju] = np.arange(len(iu))
        for s, sgn in ((0, -1.0), (1, 1.0)):
            rows.append(np.arange(len(iu)))
            cols.append(idx[iu - 1 + s, ju])
            vals.append(np.full(len(iu), sgn / h))
        nface = len(iu)
        iv, jv = np.nonzero(g.vface_interior)
        self.vface_rows = np.full(g.vface_interior.shape, -1, dtype=np.int64)
        self.vface_rows[iv, jv] = nface + np.arange(len(iv))
        for s, sgn in ((0, -1.0), (1, 1.0)):
            rows.append(nface + np.arange(len(iv)))
            cols.append(idx[iv, jv - 1 + s])
            vals.append(np.full(len(iv), sgn / h))
        nface += len(iv)
        self.n_faces = nface
        self.gradient_matrix = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nface, g.n_active),
        )
        self.laplacian_matrix = (
            (self.gradient_matrix.T @ self.gradient_matrix).tocsr()
        )

    # -- field <-> vector packing ------------------------------------------

    def pack(self, cell_field):
        return np.asarray(cell_field)[self.grid.active]

    def unpack(self, vec, fill=0.0):
        out = np.full((self.grid.nx, self.grid.ny), fill, dtype=float)
        out[self.grid.active] = vec
        return out

    # -- differential operators on fields ------------------------------------

    def grad(self, cell_field):
        """Masked gradient to faces; zero on boundary and dead faces."""
        g = self.grid
        h = self.h
        u = np.zeros((g.nx + 1, g.ny))
        v = np.zeros((g.nx, g.ny + 1))
        u[1:-1, :] = (cell_field[1:, :] - cell_field[:-1, :]) / h
        v[:, 1:-1] = (cell_field[:, 1:] - cell_field[:, :-1]) / h
        u[~g.uface_interior] = 0.0
        v[~g.vface_interior] = 0.0
        return u, v

    def div(self, u, v, include_boundary_faces=False):
        """Face-flux divergence on active cells.

        With include_boundary_faces the prescribed values on boundary faces
        contribute; otherwise only interior faces are seen (the adjoint of
        grad, as used by the Neumann Laplacian and Helmholtz machinery).
        """
        g = self.grid
        if include_boundary_faces:
            um = np.where(g.uface_interior | g.uface_boundary, u, 0.0)
            vm = np.where(g.vface_interior | g.vface_boundary, v, 0.0)
        else:
            um = np.where(g.uface_interior, u, 0.0)
            vm = np.where(g.vface_interior, v, 0.0)
        out = (um[1:, :] - um[:-1, :] + vm[:, 1:] - vm[:, :-1]) / self.h
        out[~g.active] = 0.0
        return out

    def face_dot(self, au, av, bu, bv):
        """l2 inner product over interior faces."""
        g = self.grid
        s = float(np.sum(au[g.uface_interior] * bu[g.uface_interior]))
        s += float(np.sum(av[g.vface_interior] * bv[g.vface_interior]))
        return s

    def face_l2norm(self, u, v):
        """Grid L2 norm of a face vector field over interior faces."""
        return self.h * np.sqrt(self.face_dot(u, v, u, v))

    # -- Neumann Poisson solves ---------------------------------------------

    def _factorization(self):
        if self._lu is None:
            a = self.laplacian_matrix.tolil(copy=True)
            # ground one unknown; exact for compatible (mean-zero) data
            gdof = 0
            a[gdof, :] = 0.0
            a[:, gdof] = 0.0
            a[gdof, gdof] = 1.0
            self._lu = spla.splu(a.tocsc())
        return self._lu

    def poisson_solve(self, rhs_vec, tol=1e-9):
        """Solve laplacian * x = rhs for mean-zero rhs; returns mean-zero x.

        Raises PoissonFailure when the residual check fails, which guards
        against incompatible right-hand sides.
        """
        rhs = np.asarray(rhs_vec, dtype=float)
        lu = self._factorization()
        b = rhs.copy()
        b[0] = 0.0
        x = lu.solve(b)
        x -= x.mean()
        resid = self.laplacian_matrix @ x - rhs
        scale = np.linalg.norm(rhs) + np.linalg.norm(x) + 1.0
        if not np.all(np.isfinite(x)) or np.linalg.norm(resid) > tol * scale:
            raise PoissonFailure(
                f"Neumann solve residual {np.linalg.norm(resid):.3e} "
                f"exceeds {tol:.1e} * {scale:.3e}"
            )
        return x

    def helmholtz(self, u, v):
        """Split a face field into solenoidal-tangent and gradient parts.

        Returns (hu, hv, theta) with (hu, hv) = (u, v) - grad(theta) on
        interior faces, exactly divergence-free and l2-orthogonal to every
        discrete gradient. Boundary-face components are treated as zero
        (fields fed to the projection satisfy the impermeability condition).
        """
        g = self.grid
        um = np.where(g.uface_interior, u, 0.0)
        vm = np.where(g.vface_interior, v, 0.0)
        rhs = -self.pack(self.div(um, vm))
        theta_vec = self.poisson_solve(rhs)
        theta = self.unpack(theta_vec)
        gu, gv = self.grad(theta)
        # sign: laplacian = G^T G and div = -G^T, so A theta = -div gives
        # theta with grad(theta) carrying the full divergence of (u, v)
        return um - gu, vm - gv, theta
