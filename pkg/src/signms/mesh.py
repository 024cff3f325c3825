"""Nested two-scale quadrilateral meshes on the unit square and oversampled patches.

Numbering conventions (used everywhere in the package):
  fine nodes    : id = iy * (n_fine + 1) + ix, coordinates (ix * h, iy * h)
  fine cells    : id = cy * n_fine + cx, center ((cx + 0.5) h, (cy + 0.5) h)
  coarse elems  : id = ey * n_coarse + ex
Row-major throughout, so golden tests on indices are reproducible.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class TwoScaleMesh:
    """Nested coarse/fine structured quadrilateral grid on (0,1)^2.

    n_coarse divides n_fine; every fine cell belongs to exactly one coarse
    element. Immutable after construction.
    """

    n_fine: int
    n_coarse: int
    cells_per_coarse: int = field(init=False)

    def __post_init__(self):
        if self.n_coarse < 1 or self.n_fine < self.n_coarse:
            raise ConfigurationError(
                f"need n_fine >= n_coarse >= 1, got n_fine={self.n_fine}, "
                f"n_coarse={self.n_coarse}"
            )
        if self.n_fine % self.n_coarse != 0:
            raise ConfigurationError(
                f"n_coarse={self.n_coarse} does not divide n_fine={self.n_fine}"
            )
        object.__setattr__(self, "cells_per_coarse", self.n_fine // self.n_coarse)

    @property
    def h(self):
        return 1.0 / self.n_fine

    @property
    def H(self):
        return 1.0 / self.n_coarse

    @property
    def num_nodes(self):
        return (self.n_fine + 1) ** 2

    @property
    def num_cells(self):
        return self.n_fine**2

    @property
    def num_coarse(self):
        """Number of coarse elements N."""
        return self.n_coarse**2

    def node_coords(self):
        """(num_nodes, 2) array of node coordinates."""
        g = np.arange(self.n_fine + 1) * self.h
        X, Y = np.meshgrid(g, g)  # rows = iy
        return np.column_stack([X.ravel(), Y.ravel()])

    def cell_centers(self):
        """(num_cells, 2) array of fine-cell centers."""
        g = (np.arange(self.n_fine) + 0.5) * self.h
        X, Y = np.meshgrid(g, g)
        return np.column_stack([X.ravel(), Y.ravel()])

    def cell_nodes(self):
        """(num_cells, 4) corner node ids per cell, counterclockwise from SW."""
        nf = self.n_fine
        cx, cy = np.meshgrid(np.arange(nf), np.arange(nf))
        cx = cx.ravel()
        cy = cy.ravel()
        sw = cy * (nf + 1) + cx
        return np.column_stack([sw, sw + 1, sw + nf + 2, sw + nf + 1])

    def cell_to_coarse(self):
        """(num_cells,) map from fine cell id to its coarse element id."""
        nf, cpc = self.n_fine, self.cells_per_coarse
        cx, cy = np.meshgrid(np.arange(nf), np.arange(nf))
        return ((cy.ravel() // cpc) * self.n_coarse + cx.ravel() // cpc).astype(np.int64)

    def element_cells(self, i):
        """Fine cell ids belonging to coarse element i."""
        ex, ey = i % self.n_coarse, i // self.n_coarse
        cpc, nf = self.cells_per_coarse, self.n_fine
        cx = np.arange(ex * cpc, (ex + 1) * cpc)
        cy = np.arange(ey * cpc, (ey + 1) * cpc)
        CX, CY = np.meshgrid(cx, cy)
        return (CY.ravel() * nf + CX.ravel()).astype(np.int64)

    def element_nodes(self, i):
        """Fine node ids of the closed coarse element i (row-major, sorted)."""
        ex, ey = i % self.n_coarse, i // self.n_coarse
        cpc, nf = self.cells_per_coarse, self.n_fine
        return _node_window(nf, ex * cpc, (ex + 1) * cpc, ey * cpc, (ey + 1) * cpc)

    @property
    def dirichlet_dofs(self):
        """Fine node ids on the boundary of the unit square (sorted)."""
        nf = self.n_fine
        ix, iy = np.meshgrid(np.arange(nf + 1), np.arange(nf + 1))
        on_bdy = (ix == 0) | (ix == nf) | (iy == 0) | (iy == nf)
        return np.flatnonzero(on_bdy.ravel())

    @property
    def free_dofs(self):
        """Fine node ids not constrained by the Dirichlet boundary (sorted)."""
        mask = np.ones(self.num_nodes, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True)
class Patch:
    """Oversampled domain around one coarse element, clipped to the unit square.

    element_set grows by Chebyshev (layer) distance on the coarse grid, so a
    patch is always a rectangle of coarse elements. interior_dofs carry zero
    trace on the patch boundary and on the global Dirichlet boundary.
    """

    center_element: int
    layers: int
    element_set: np.ndarray
    all_dofs: np.ndarray
    interior_dofs: np.ndarray
    # inclusive coarse-element index window (ex_lo, ex_hi, ey_lo, ey_hi)
    element_window: tuple


def oversample_patch(mesh: TwoScaleMesh, i: int, m: int) -> Patch:
    """Build K_i^m: m layers of coarse elements around element i.

    m=0 gives the single element; large m saturates to the whole domain.
    """
    nc = mesh.n_coarse
    if not 0 <= i < mesh.num_coarse:
        raise IndexError(f"coarse element index {i} out of range [0, {mesh.num_coarse})")
    if m < 0:
        raise ConfigurationError(f"oversampling layers must be >= 0, got {m}")
    ex, ey = i % nc, i // nc
    ex_lo, ex_hi = max(0, ex - m), min(nc - 1, ex + m)
    ey_lo, ey_hi = max(0, ey - m), min(nc - 1, ey + m)

    EX, EY = np.meshgrid(np.arange(ex_lo, ex_hi + 1), np.arange(ey_lo, ey_hi + 1))
    element_set = (EY.ravel() * nc + EX.ravel()).astype(np.int64)

    cpc, nf = mesh.cells_per_coarse, mesh.n_fine
    jx_lo, jx_hi = ex_lo * cpc, (ex_hi + 1) * cpc  # inclusive node index window
    jy_lo, jy_hi = ey_lo * cpc, (ey_hi + 1) * cpc
    all_dofs = _node_window(nf, jx_lo, jx_hi, jy_lo, jy_hi)

    ix = all_dofs % (nf + 1)
    iy = all_dofs // (nf + 1)
    on_patch_bdy = (ix == jx_lo) | (ix == jx_hi) | (iy == jy_lo) | (iy == jy_hi)
    on_global_bdy = (ix == 0) | (ix == nf) | (iy == 0) | (iy == nf)
    interior = all_dofs[~(on_patch_bdy | on_global_bdy)]

    return Patch(
        center_element=i,
        layers=m,
        element_set=element_set,
        all_dofs=all_dofs,
        interior_dofs=interior,
        element_window=(ex_lo, ex_hi, ey_lo, ey_hi),
    )


def build_mesh(n_fine: int, n_coarse: int) -> TwoScaleMesh:
    """Construct the nested two-scale mesh; n_coarse must divide n_fine."""
    return TwoScaleMesh(n_fine=n_fine, n_coarse=n_coarse)


def patch_cells(mesh: TwoScaleMesh, patch: Patch):
    """Fine cell ids covered by the patch (sorted)."""
    ex_lo, ex_hi, ey_lo, ey_hi = patch.element_window
    cpc, nf = mesh.cells_per_coarse, mesh.n_fine
    cx = np.arange(ex_lo * cpc, (ex_hi + 1) * cpc)
    cy = np.arange(ey_lo * cpc, (ey_hi + 1) * cpc)
    CX, CY = np.meshgrid(cx, cy)
    return (CY.ravel() * nf + CX.ravel()).astype(np.int64)


def _node_window(n_fine, ix_lo, ix_hi, iy_lo, iy_hi):
    """Node ids in an inclusive index window, row-major (hence sorted)."""
    ix = np.arange(ix_lo, ix_hi + 1)
    iy = np.arange(iy_lo, iy_hi + 1)
    IX, IY = np.meshgrid(ix, iy)
    return (IY.ravel() * (n_fine + 1) + IX.ravel()).astype(np.int64)
