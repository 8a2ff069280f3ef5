"""Discrete function space over a mesh: P1 fields, energies, norms, constraints.

Fields are continuous piecewise-linear (one value per node).  Gradients are
constant per cell, so gradient energies int |grad u|^p are evaluated exactly
from the per-cell gradient operators.  Value integrals (L^q norms, the zero
(q-1)-mean constraint, load pairings) use the mesh's degree-2 quadrature,
which makes the q = 2 forms agree exactly with the assembled mass matrix.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Mesh


@dataclass(eq=False)
class ScalarField:
    """Nodal coefficient vector over a mesh."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.mesh.num_nodes,):
            raise ValueError(
                f"expected {self.mesh.num_nodes} nodal values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.mesh, values)


class EnergyAssembly:
    """Per-mesh P1 operators: cell gradients, quadrature tables, p=2 forms."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        n = mesh.n
        corners = mesh.nodes[mesh.cells]                 # (C, n+1, n)
        edges = corners[:, 1:, :] - corners[:, :1, :]    # (C, n, n), rows are edges
        self.inv_edges = np.linalg.inv(edges)
        diff = np.hstack([-np.ones((n, 1)), np.eye(n)])  # local value differences
        # grads[c] maps local nodal values to the constant cell gradient:
        # for affine u = w.x the edge differences are (edges @ w).
        self.grads = np.einsum("cij,jk->cik", self.inv_edges, diff)  # (C, n, n+1)
        self.volumes = mesh.volumes
        self.cells = mesh.cells
        self.bary = mesh.quad_barycentric                # (K, n+1)
        self.quad_w = mesh.quad_weights                  # (C, K)
        self.num_nodes = mesh.num_nodes
        self.volume = mesh.volume

    def gradients(self, values: np.ndarray) -> np.ndarray:
        """(C, n) cell gradients of a nodal vector.

        Differences are taken before applying the edge inverse so constants
        have an exactly zero gradient on every cell.
        """
        corner_vals = values[self.cells]
        diffs = corner_vals[:, 1:] - corner_vals[:, :1]
        return np.einsum("cij,cj->ci", self.inv_edges, diffs)

    def quad_values(self, values: np.ndarray) -> np.ndarray:
        """(C, K) field values at the quadrature points."""
        return values[self.cells] @ self.bary.T

    def integrate_pointwise(self, point_values: np.ndarray) -> float:
        """Quadrature sum of values given at the quadrature points."""
        return float(np.sum(self.quad_w * point_values))

    def scatter_quad(self, point_values: np.ndarray) -> np.ndarray:
        """Nodal vector with entries int f phi_j for quadrature-point data f."""
        contrib = (self.quad_w * point_values) @ self.bary  # (C, n+1)
        out = np.zeros(self.num_nodes)
        np.add.at(out, self.cells, contrib)
        return out

    def scatter_flux(self, cell_flux: np.ndarray) -> np.ndarray:
        """Nodal vector with entries sum_c vol_c * flux_c . grad(phi_j)."""
        contrib = np.einsum(
            "ci,cik->ck", self.volumes[:, None] * cell_flux, self.grads
        )
        out = np.zeros(self.num_nodes)
        np.add.at(out, self.cells, contrib)
        return out

    @cached_property
    def grad_gram(self) -> np.ndarray:
        """(C, n+1, n+1) per-cell Gram matrices of the gradient operators."""
        return np.einsum("cik,cil->ckl", self.grads, self.grads)

    def _assemble(self, local: np.ndarray) -> sp.csr_matrix:
        nloc = self.cells.shape[1]
        rows = np.repeat(self.cells, nloc, axis=1).ravel()
        cols = np.tile(self.cells, (1, nloc)).ravel()
        mat = sp.coo_matrix(
            (local.ravel(), (rows, cols)), shape=(self.num_nodes, self.num_nodes)
        )
        return mat.tocsr()

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        local = self.volumes[:, None, None] * self.grad_gram
        return self._assemble(local)

    @cached_property
    def mass(self) -> sp.csr_matrix:
        # Degree-2 rule integrates phi_i phi_j exactly.
        rule_local = np.einsum("k,ki,kj->ij", self.quad_w[0] / self.volumes[0], self.bary, self.bary)
        local = self.volumes[:, None, None] * rule_local[None, :, :]
        return self._assemble(local)

    @cached_property
    def mass_vector(self) -> np.ndarray:
        """Entries int phi_j; sums to the mesh volume."""
        return np.asarray(self.mass.sum(axis=1)).ravel()

    def weighted_stiffness(
        self,
        weights: np.ndarray,
        rank_weights: np.ndarray | None = None,
        rank_vectors: np.ndarray | None = None,
    ) -> sp.csr_matrix:
        """sum_c vol_c (w_c G^T G + r_c d_c d_c^T) for per-cell rows d_c."""
        local = (self.volumes * weights)[:, None, None] * self.grad_gram
        if rank_vectors is not None:
            local = local + (self.volumes * rank_weights)[:, None, None] * (
                rank_vectors[:, :, None] * rank_vectors[:, None, :]
            )
        return self._assemble(local)

    def zero_mean(self, values: np.ndarray) -> np.ndarray:
        return values - (self.mass_vector @ values) / self.volume

    @cached_property
    def _neumann_lu(self):
        return self.bordered_factorization(self.stiffness)

    def bordered_factorization(self, matrix: sp.spmatrix):
        """LU of [[A, m], [m^T, 0]]; solves pure-Neumann systems on zero-mean."""
        m = self.mass_vector[:, None]
        bordered = sp.bmat([[matrix, m], [m.T, None]], format="csc")
        return spla.splu(bordered)

    def bordered_solve(self, lu, rhs: np.ndarray) -> np.ndarray:
        ext = np.concatenate([rhs, [0.0]])
        return lu.solve(ext)[:-1]

    def solve_neumann(self, rhs: np.ndarray) -> np.ndarray:
        """Zero-mean solution of the p=2 stiffness system with load rhs."""
        return self.bordered_solve(self._neumann_lu, rhs)

    def dual_norm(self, residual: np.ndarray) -> float:
        """Norm of a load functional on the zero-mean space, via K^{-1}."""
        v = self.solve_neumann(residual)
        return float(np.sqrt(max(residual @ v, 0.0)))


_ASSEMBLY_CACHE: "weakref.WeakKeyDictionary[Mesh, EnergyAssembly]" = weakref.WeakKeyDictionary()


def assembly(mesh: Mesh) -> EnergyAssembly:
    """Cached :class:`EnergyAssembly` for a mesh."""
    asm = _ASSEMBLY_CACHE.get(mesh)
    if asm is None:
        asm = EnergyAssembly(mesh)
        _ASSEMBLY_CACHE[mesh] = asm
    return asm


def grad_norm_p(u: ScalarField, p: float) -> float:
    """Gradient energy int |grad u|^p; zero iff u is constant."""
    if not p > 1.0:
        raise ValueError(f"requires p > 1, got p={p}")
    asm = assembly(u.mesh)
    g = asm.gradients(u.values)
    mag = np.linalg.norm(g, axis=1)
    return float(np.sum(asm.volumes * mag**p))


def lq_norm(u: ScalarField, q: float) -> float:
    """Quadrature approximation of (int |u|^q)^(1/q)."""
    if not q >= 1.0:
        raise ValueError(f"requires q >= 1, got q={q}")
    asm = assembly(u.mesh)
    vals = asm.quad_values(u.values)
    return float(asm.integrate_pointwise(np.abs(vals) ** q) ** (1.0 / q))


def constraint_value(u: ScalarField, q: float) -> float:
    """Quadrature value of int |u|^(q-2) u; the zero-(q-1)-mean functional."""
    if not q > 1.0:
        raise ValueError(f"requires q > 1, got q={q}")
    asm = assembly(u.mesh)
    vals = asm.quad_values(u.values)
    return asm.integrate_pointwise(np.sign(vals) * np.abs(vals) ** (q - 1.0))


def _constraint_of_shift(vals: np.ndarray, quad_w: np.ndarray, q: float, c: float) -> float:
    shifted = vals - c
    return float(np.sum(quad_w * np.sign(shifted) * np.abs(shifted) ** (q - 1.0)))


def project_zero_mean(u: ScalarField, q: float = 2.0, max_iter: int = 200) -> ScalarField:
    """Shift u by the unique constant making int |u-c|^(q-2)(u-c) vanish.

    The shift functional is continuous and strictly decreasing in c, so the
    root is unique and bracketed by [min u, max u]; bisection is
    unconditionally safe.  For q = 2 the root is the volume-weighted mean.
    """
    if not q > 1.0:
        raise ValueError(f"requires q > 1, got q={q}")
    asm = assembly(u.mesh)
    lo, hi = float(np.min(u.values)), float(np.max(u.values))
    if hi - lo == 0.0:
        raise ValueError("cannot project a constant field to zero (q-1)-mean")
    if q == 2.0:
        return u.with_values(asm.zero_mean(u.values))
    vals = asm.quad_values(u.values)
    tol = 1e-12 * (hi - lo)
    flo = _constraint_of_shift(vals, asm.quad_w, q, lo)
    fhi = _constraint_of_shift(vals, asm.quad_w, q, hi)
    if flo < 0.0 or fhi > 0.0:  # strict monotonicity makes this unreachable
        raise ValueError("constraint function failed to bracket a root")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = _constraint_of_shift(vals, asm.quad_w, q, mid)
        if fmid > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    c = 0.5 * (lo + hi)
    return u.with_values(u.values - c)


def rayleigh_quotient(u: ScalarField, p: float, q: float) -> float:
    """int |grad u|^p divided by (int |u|^q)^(p/q); 0-homogeneous in u."""
    denom = lq_norm(u, q)
    if denom == 0.0:
        raise ValueError("Rayleigh quotient undefined for a zero field")
    return grad_norm_p(u, p) / denom**p


def p_form_apply(u: ScalarField, p: float, eps: float = 0.0) -> np.ndarray:
    """Nodal vector of <|grad u|^(p-2) grad u, grad phi_j>.

    With eps > 0 the degenerate weight is smoothed to
    (|grad u|^2 + eps^2)^((p-2)/2), matching the regularized energy.
    """
    asm = assembly(u.mesh)
    g = asm.gradients(u.values)
    sq = np.einsum("ci,ci->c", g, g) + eps * eps
    if eps == 0.0:
        mag = np.sqrt(sq)
        w = np.zeros_like(mag)
        nz = mag > 0.0
        w[nz] = mag[nz] ** (p - 2.0)
    else:
        w = sq ** ((p - 2.0) / 2.0)
    return asm.scatter_flux(w[:, None] * g)


def q_form_apply(u: ScalarField, q: float) -> np.ndarray:
    """Nodal vector of int |u|^(q-2) u phi_j."""
    asm = assembly(u.mesh)
    vals = asm.quad_values(u.values)
    return asm.scatter_quad(np.sign(vals) * np.abs(vals) ** (q - 1.0))


def write_field_text(u: ScalarField, path) -> None:
    """Plain-text export: node count, then one "index value" line per node."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{u.mesh.num_nodes}\n")
        for i, v in enumerate(u.values):
            fh.write(f"{i} {float(v)!r}\n")


def read_field_text(mesh: Mesh, path) -> ScalarField:
    lines = Path(path).read_text().splitlines()
    count = int(lines[0])
    values = np.zeros(count)
    for line in lines[1 : count + 1]:
        idx, val = line.split()
        values[int(idx)] = float(val)
    return ScalarField(mesh, values)
