"""Admissible orthogonal meshes and the discrete calculus built on them.

A mesh is a flat, array-backed description of a finite-volume grid: cell
centers/volumes, interior faces (pairs of cells), and boundary faces tagged
either ``water_injection`` (Dirichlet side) or ``impervious`` (no-flux side).
Admissibility means the segment joining the two cell centers of every interior
face is orthogonal to that face; all transmissibilities below rely on it.

Each interior face sigma between cells K (left) and L (right) carries

* ``area``      |sigma|,
* ``dist``      d(x_K, x_L),
* ``normal``    unit vector from K to L,
* a diamond (dual volume) of measure |sigma| * dist / dim,
* transmissibility tau = |sigma| / dist.

Boundary faces carry the one-sided distance d(x_K, sigma) instead.

Diamond fields (face-based vector fields, e.g. discrete gradients) are plain
arrays with one row per interior face, followed by one row per Dirichlet
boundary face, in mesh order.  Every face appears exactly once in any sum over
diamonds.

Plain-text mesh file format (whitespace separated, ``#`` starts a comment)::

    dim 2
    cell  <id> <cx> <cy> [<cz>] <volume>
    iface <left_cell> <right_cell> <area> <distance> <nx> <ny> [<nz>]
    bface <cell> <area> <distance> <nx> <ny> [<nz>] <tag>

Cell ids must be 0..n-1 (any record order); ``tag`` is ``water_injection`` or
``impervious``; boundary normals point outward.  Cell diameters are not part
of the format and are estimated from incident face distances on load, so the
regularity number reported for a loaded mesh is an estimate (exact for meshes
built by :func:`build_rect_mesh`, which knows the cell shape).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Boundary tags.  Stored per boundary face as small ints.
IMPERVIOUS = "impervious"
WATER_INJECTION = "water_injection"
_TAG_CODES = {IMPERVIOUS: 0, WATER_INJECTION: 1}
_TAG_NAMES = {v: k for k, v in _TAG_CODES.items()}

# Canonical side names per axis, plus common aliases accepted on input.
_SIDE_ORDER = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")
_SIDE_ALIASES = {
    "left": "xmin", "right": "xmax",
    "bottom": "ymin", "top": "ymax",
    "back": "zmin", "front": "zmax",
}


class MeshFormatError(ValueError):
    """Raised for malformed mesh files or inconsistent mesh data."""


@dataclass
class RectInfo:
    """Lattice structure of a mesh built by :func:`build_rect_mesh`.

    Kept so that translate diagnostics and nested refinement can shift and
    coarsen by whole cells; loaded meshes have no structure info.
    """

    shape: tuple            # (nx, ny) or (nx, ny, nz)
    lows: np.ndarray        # lower corner, shape (dim,)
    spacing: np.ndarray     # cell edge lengths, shape (dim,)

    def cell_index(self, multi):
        """Flat cell id of lattice index (i, j[, k]); x varies fastest."""
        idx = np.asarray(multi)
        strides = np.cumprod((1,) + self.shape[:-1])
        return int(np.dot(idx, strides))


@dataclass
class Cell:
    """One control volume, as a view into the mesh arrays."""

    index: int
    center: np.ndarray
    volume: float
    diameter: float
    faces: np.ndarray       # indices into the interior face arrays


@dataclass
class InteriorFace:
    """Face between two cells; normal points from ``left`` to ``right``."""

    index: int
    left: int
    right: int
    area: float
    dist: float             # d(x_K, x_L)
    normal: np.ndarray

    @property
    def transmissibility(self) -> float:
        return self.area / self.dist

    @property
    def diamond_measure(self) -> float:
        # |T_{K,L}| = |sigma| d / dim; the diamonds partition the domain.
        return self.area * self.dist / len(self.normal)


@dataclass
class BoundaryFace:
    """Face on the domain boundary; normal points outward."""

    index: int
    cell: int
    area: float
    dist: float             # d(x_K, sigma)
    normal: np.ndarray
    tag: str

    @property
    def transmissibility(self) -> float:
        return self.area / self.dist


@dataclass
class Mesh:
    """Array-backed admissible orthogonal mesh.

    All per-face data is stored once per face.  ``face_cells[:, 0]`` is the
    left cell K, ``face_cells[:, 1]`` the right cell L, and ``face_normals``
    point K -> L.  Boundary normals point outward.
    """

    dim: int
    cell_centers: np.ndarray      # (n_cells, dim)
    cell_volumes: np.ndarray      # (n_cells,)
    cell_diameters: np.ndarray    # (n_cells,)
    face_cells: np.ndarray        # (n_faces, 2) int
    face_areas: np.ndarray        # (n_faces,)
    face_dists: np.ndarray        # (n_faces,)
    face_normals: np.ndarray      # (n_faces, dim)
    bface_cells: np.ndarray       # (n_bfaces,) int
    bface_areas: np.ndarray
    bface_dists: np.ndarray
    bface_normals: np.ndarray     # (n_bfaces, dim)
    bface_tags: np.ndarray        # (n_bfaces,) int, see _TAG_CODES
    structure: RectInfo | None = None
    _cell_faces: list | None = field(default=None, repr=False)

    # -- sizes ---------------------------------------------------------------

    @property
    def n_cells(self) -> int:
        return len(self.cell_volumes)

    @property
    def n_faces(self) -> int:
        return len(self.face_areas)

    @property
    def n_bfaces(self) -> int:
        return len(self.bface_areas)

    # -- derived face quantities ----------------------------------------------

    @property
    def transmissibilities(self) -> np.ndarray:
        return self.face_areas / self.face_dists

    @property
    def bface_transmissibilities(self) -> np.ndarray:
        return self.bface_areas / self.bface_dists

    @property
    def diamond_measures(self) -> np.ndarray:
        return self.face_areas * self.face_dists / self.dim

    @property
    def bface_diamond_measures(self) -> np.ndarray:
        return self.bface_areas * self.bface_dists / self.dim

    @property
    def dirichlet_faces(self) -> np.ndarray:
        """Indices of boundary faces tagged ``water_injection``."""
        return np.flatnonzero(self.bface_tags == _TAG_CODES[WATER_INJECTION])

    @property
    def h(self) -> float:
        """Mesh size: the largest cell diameter."""
        return float(self.cell_diameters.max())

    @property
    def domain_volume(self) -> float:
        return float(self.cell_volumes.sum())

    # -- adjacency and typed views ---------------------------------------------

    def cell_faces(self, i: int) -> np.ndarray:
        """Interior face indices incident to cell ``i``."""
        if self._cell_faces is None:
            lists: list = [[] for _ in range(self.n_cells)]
            for f, (kl, kr) in enumerate(self.face_cells):
                lists[kl].append(f)
                lists[kr].append(f)
            self._cell_faces = [np.array(v, dtype=int) for v in lists]
        return self._cell_faces[i]

    def cell(self, i: int) -> Cell:
        return Cell(i, self.cell_centers[i], float(self.cell_volumes[i]),
                    float(self.cell_diameters[i]), self.cell_faces(i))

    def interior_face(self, f: int) -> InteriorFace:
        k, l = self.face_cells[f]
        return InteriorFace(f, int(k), int(l), float(self.face_areas[f]),
                            float(self.face_dists[f]), self.face_normals[f])

    def boundary_face(self, b: int) -> BoundaryFace:
        return BoundaryFace(b, int(self.bface_cells[b]),
                            float(self.bface_areas[b]),
                            float(self.bface_dists[b]),
                            self.bface_normals[b],
                            _TAG_NAMES[int(self.bface_tags[b])])

    def boundary_tag_names(self) -> list:
        return [_TAG_NAMES[int(t)] for t in self.bface_tags]

    # -- structural validation --------------------------------------------------

    def validate(self) -> None:
        """Raise :class:`MeshFormatError` on structurally invalid data."""
        n = self.n_cells
        if n == 0:
            raise MeshFormatError("mesh has no cells")
        if not np.all(np.isfinite(self.cell_centers)):
            raise MeshFormatError("non-finite cell center")
        if np.any(self.cell_volumes <= 0):
            k = int(np.argmin(self.cell_volumes))
            raise MeshFormatError(f"cell {k} has non-positive volume")
        for name, arr in (("face", self.face_cells), ("boundary face",
                                                      self.bface_cells)):
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise MeshFormatError(f"{name} references a cell out of range")
        if self.n_faces:
            if np.any(self.face_cells[:, 0] == self.face_cells[:, 1]):
                raise MeshFormatError("interior face joins a cell to itself")
            if np.any(self.face_areas <= 0) or np.any(self.face_dists <= 0):
                raise MeshFormatError("face with non-positive area or distance")
            norms = np.linalg.norm(self.face_normals, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-12):
                raise MeshFormatError("interior face normal is not unit length")
        if self.n_bfaces:
            if np.any(self.bface_areas <= 0) or np.any(self.bface_dists <= 0):
                raise MeshFormatError(
                    "boundary face with non-positive area or distance")
            norms = np.linalg.norm(self.bface_normals, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-12):
                raise MeshFormatError("boundary face normal is not unit length")


@dataclass
class AdmissibilityReport:
    """Result of :func:`check_admissibility`."""

    orthogonality_defect: float   # max angle (radians) center line vs normal
    regularity: float             # min over faces of dist / cell diameter
    passed: bool

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"admissibility: {status}  "
                f"orthogonality_defect={self.orthogonality_defect:.3e}  "
                f"regularity={self.regularity:.6g}")


def _resolve_tags(dim: int, boundary_tags: dict | None) -> dict:
    """Normalize side -> tag mapping; unknown sides or tags are errors."""
    sides = _SIDE_ORDER[:2 * dim]
    tags = {s: IMPERVIOUS for s in sides}
    for key, val in (boundary_tags or {}).items():
        side = _SIDE_ALIASES.get(key, key)
        if side not in sides:
            raise MeshFormatError(f"unknown boundary side {key!r}")
        if val not in _TAG_CODES:
            raise MeshFormatError(f"unknown boundary tag {val!r}")
        tags[side] = val
    return tags


def build_rect_mesh(shape, extent=None, boundary_tags=None) -> Mesh:
    """Build a uniform rectangular mesh on a box.

    Parameters
    ----------
    shape : tuple of int
        Cells per axis, ``(nx, ny)`` or ``(nx, ny, nz)``.
    extent : sequence of float, optional
        Box bounds, flat: ``(x0, x1, y0, y1[, z0, z1])``.  Defaults to the
        unit box.
    boundary_tags : dict, optional
        Maps side names (``xmin``/``left``, ...) to ``water_injection`` or
        ``impervious``.  Untagged sides default to impervious.

    The cell at lattice index (i, j[, k]) has flat id i + nx*j (+ nx*ny*k).
    Cell centers sit at the box centers, so center-to-center segments are
    axis-aligned and exactly orthogonal to the faces: the mesh is admissible
    by construction.
    """
    shape = tuple(int(m) for m in shape)
    dim = len(shape)
    if dim not in (2, 3):
        raise MeshFormatError("shape must have 2 or 3 axes")
    if any(m < 1 for m in shape):
        raise MeshFormatError("each axis needs at least one cell")
    if extent is None:
        extent = [(0.0, 1.0)] * dim
    extent = np.asarray(extent, dtype=float).reshape(dim, 2)
    lows, highs = extent[:, 0], extent[:, 1]
    if np.any(highs <= lows):
        raise MeshFormatError("extent must have positive length on every axis")
    spacing = (highs - lows) / np.array(shape, dtype=float)
    tags = _resolve_tags(dim, boundary_tags)

    axes = [lows[a] + spacing[a] * (np.arange(shape[a]) + 0.5)
            for a in range(dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    # Flat id = i + nx*j (+ nx*ny*k): x fastest, i.e. Fortran order in (i,j,k).
    centers = np.stack([g.ravel(order="F") for g in grids], axis=1)
    n_cells = centers.shape[0]
    cell_vol = float(np.prod(spacing))
    volumes = np.full(n_cells, cell_vol)
    diameters = np.full(n_cells, float(np.linalg.norm(spacing)))

    strides = np.cumprod((1,) + shape[:-1])

    def flat(idx):
        return idx @ strides

    # Interior faces, axis by axis, ordered by left-cell id within each axis.
    f_cells, f_areas, f_dists, f_normals = [], [], [], []
    for a in range(dim):
        counts = list(shape)
        counts[a] -= 1
        if counts[a] == 0:
            continue
        ranges = [np.arange(c) for c in counts]
        mg = np.meshgrid(*ranges, indexing="ij")
        left_idx = np.stack([g.ravel(order="F") for g in mg], axis=1)
        right_idx = left_idx.copy()
        right_idx[:, a] += 1
        left = flat(left_idx)
        right = flat(right_idx)
        area = cell_vol / spacing[a]
        normal = np.zeros(dim)
        normal[a] = 1.0
        f_cells.append(np.stack([left, right], axis=1))
        f_areas.append(np.full(len(left), area))
        f_dists.append(np.full(len(left), spacing[a]))
        f_normals.append(np.tile(normal, (len(left), 1)))

    face_cells = (np.concatenate(f_cells) if f_cells
                  else np.zeros((0, 2), dtype=int))
    face_areas = np.concatenate(f_areas) if f_areas else np.zeros(0)
    face_dists = np.concatenate(f_dists) if f_dists else np.zeros(0)
    face_normals = (np.concatenate(f_normals) if f_normals
                    else np.zeros((0, dim)))

    # Boundary faces, in canonical side order, ordered by cell id within side.
    b_cells, b_areas, b_dists, b_normals, b_tags = [], [], [], [], []
    for a in range(dim):
        for side_low in (True, False):
            side = _SIDE_ORDER[2 * a + (0 if side_low else 1)]
            counts = list(shape)
            counts[a] = 1
            ranges = [np.arange(c) for c in counts]
            mg = np.meshgrid(*ranges, indexing="ij")
            idx = np.stack([g.ravel(order="F") for g in mg], axis=1)
            if not side_low:
                idx[:, a] = shape[a] - 1
            cells = flat(idx)
            order = np.argsort(cells, kind="stable")
            cells = cells[order]
            area = cell_vol / spacing[a]
            normal = np.zeros(dim)
            normal[a] = -1.0 if side_low else 1.0
            b_cells.append(cells)
            b_areas.append(np.full(len(cells), area))
            b_dists.append(np.full(len(cells), spacing[a] / 2.0))
            b_normals.append(np.tile(normal, (len(cells), 1)))
            b_tags.append(np.full(len(cells), _TAG_CODES[tags[side]],
                                  dtype=np.int8))

    mesh = Mesh(
        dim=dim,
        cell_centers=centers,
        cell_volumes=volumes,
        cell_diameters=diameters,
        face_cells=face_cells.astype(int),
        face_areas=face_areas,
        face_dists=face_dists,
        face_normals=face_normals,
        bface_cells=np.concatenate(b_cells).astype(int),
        bface_areas=np.concatenate(b_areas),
        bface_dists=np.concatenate(b_dists),
        bface_normals=np.concatenate(b_normals),
        bface_tags=np.concatenate(b_tags),
        structure=RectInfo(shape=shape, lows=lows, spacing=spacing),
    )
    mesh.validate()
    vol_err = abs(mesh.domain_volume - float(np.prod(highs - lows)))
    if vol_err > 1e-12 * float(np.prod(highs - lows)):
        raise MeshFormatError("cell volumes do not sum to the box volume")
    return mesh


def check_admissibility(mesh: Mesh) -> AdmissibilityReport:
    """Measure orthogonality and regularity of a mesh.

    The orthogonality defect is the largest angle (radians) between the
    center-to-center segment of an interior face and the face normal; an
    admissible orthogonal mesh has defect 0.  Regularity is
    ``min dist / diam`` over both cells of every interior face; it only has
    to stay positive.  A mesh with no interior faces passes vacuously.
    """
    if mesh.n_faces == 0:
        return AdmissibilityReport(0.0, float("inf"), True)
    k, l = mesh.face_cells[:, 0], mesh.face_cells[:, 1]
    seg = mesh.cell_centers[l] - mesh.cell_centers[k]
    seg_len = np.linalg.norm(seg, axis=1)
    cosang = np.einsum("ij,ij->i", seg, mesh.face_normals) / seg_len
    defect = float(np.max(np.arccos(np.clip(cosang, -1.0, 1.0))))
    # Distances must also agree with the center geometry.
    dist_err = float(np.max(np.abs(seg_len - mesh.face_dists)))
    reg = float(np.min(mesh.face_dists /
                       np.maximum(mesh.cell_diameters[k],
                                  mesh.cell_diameters[l])))
    passed = defect < 1e-10 and reg > 0 and dist_err < 1e-10 * mesh.h
    return AdmissibilityReport(defect, reg, passed)


# -- discrete calculus ---------------------------------------------------------

def discrete_gradient(mesh: Mesh, u, dirichlet_value=0.0) -> np.ndarray:
    """Diamond-wise gradient of a cell field.

    Returns an array of shape ``(n_faces + n_dirichlet, dim)``: one row
    ``dim * (u_L - u_K) / dist * normal`` per interior face, then one row
    ``dim * (u_sigma - u_K) / dist * outward_normal`` per Dirichlet boundary
    face (``u_sigma`` = ``dirichlet_value``).  Impervious faces carry no
    diamond.
    """
    u = np.asarray(u, dtype=float)
    k, l = mesh.face_cells[:, 0], mesh.face_cells[:, 1]
    slope = mesh.dim * (u[l] - u[k]) / mesh.face_dists
    grad_int = slope[:, None] * mesh.face_normals
    dfaces = mesh.dirichlet_faces
    if len(dfaces) == 0:
        return grad_int
    cells = mesh.bface_cells[dfaces]
    ub = np.broadcast_to(np.asarray(dirichlet_value, dtype=float),
                         cells.shape)
    slope_b = mesh.dim * (ub - u[cells]) / mesh.bface_dists[dfaces]
    grad_b = slope_b[:, None] * mesh.bface_normals[dfaces]
    return np.concatenate([grad_int, grad_b], axis=0)


def discrete_divergence(mesh: Mesh, flux, boundary_flux=None) -> np.ndarray:
    """Cell-wise divergence of a face vector field.

    ``flux`` has one row per interior face.  Each face contributes
    ``area * flux . normal`` with sign +1 to its left cell and -1 to its right
    cell; the result is divided by the cell volume.  Boundary faces contribute
    nothing unless ``boundary_flux`` (normal flux per boundary face) is given.
    """
    flux = np.asarray(flux, dtype=float)
    out = np.zeros(mesh.n_cells)
    normal_flux = mesh.face_areas * np.einsum("ij,ij->i", flux,
                                              mesh.face_normals)
    np.add.at(out, mesh.face_cells[:, 0], normal_flux)
    np.add.at(out, mesh.face_cells[:, 1], -normal_flux)
    if boundary_flux is not None:
        bf = np.broadcast_to(np.asarray(boundary_flux, dtype=float),
                             (mesh.n_bfaces,))
        np.add.at(out, mesh.bface_cells, mesh.bface_areas * bf)
    return out / mesh.cell_volumes


def duality_defect(mesh: Mesh, w, flux) -> float:
    """|sum_K |K| w_K div_K(F) + sum_faces |T| grad(w) . F| for interior F.

    The discrete divergence and gradient are adjoint up to sign, so this
    vanishes identically; the function computes both sides independently and
    returns the absolute mismatch.
    """
    w = np.asarray(w, dtype=float)
    flux = np.asarray(flux, dtype=float)
    div = discrete_divergence(mesh, flux)
    lhs = float(np.sum(mesh.cell_volumes * w * div))
    k, l = mesh.face_cells[:, 0], mesh.face_cells[:, 1]
    slope = mesh.dim * (w[l] - w[k]) / mesh.face_dists
    grad = slope[:, None] * mesh.face_normals
    rhs = float(np.sum(mesh.diamond_measures *
                       np.einsum("ij,ij->i", grad, flux)))
    return abs(lhs + rhs)


def h_norm(mesh: Mesh, u, dirichlet_value=0.0) -> float:
    """Discrete H1-type norm of a cell field.

    ``sqrt(dim * (sum_faces tau (u_L - u_K)^2
                  + sum_dirichlet tau_b (u_sigma - u_K)^2))``
    with one term per face.  Equals the L2 norm of
    :func:`discrete_gradient` exactly.
    """
    u = np.asarray(u, dtype=float)
    k, l = mesh.face_cells[:, 0], mesh.face_cells[:, 1]
    total = float(np.sum(mesh.transmissibilities * (u[l] - u[k]) ** 2))
    dfaces = mesh.dirichlet_faces
    if len(dfaces):
        cells = mesh.bface_cells[dfaces]
        ub = np.broadcast_to(np.asarray(dirichlet_value, dtype=float),
                             cells.shape)
        total += float(np.sum(mesh.bface_transmissibilities[dfaces] *
                              (ub - u[cells]) ** 2))
    return float(np.sqrt(mesh.dim * total))


def diamond_l2_norm(mesh: Mesh, values) -> float:
    """L2 norm of a diamond field: sqrt(sum |T| |v|^2) over all diamonds.

    ``values`` must follow the diamond layout of :func:`discrete_gradient`
    (interior faces first, then Dirichlet boundary faces).
    """
    values = np.asarray(values, dtype=float)
    measures = mesh.diamond_measures
    dfaces = mesh.dirichlet_faces
    if len(dfaces):
        measures = np.concatenate([measures,
                                   mesh.bface_diamond_measures[dfaces]])
    if values.shape[0] != len(measures):
        raise ValueError("diamond field has wrong number of rows")
    sq = np.einsum("ij,ij->i", values, values)
    return float(np.sqrt(np.sum(measures * sq)))


def l2_norm(mesh: Mesh, u) -> float:
    """Volume-weighted L2 norm of a cell field."""
    u = np.asarray(u, dtype=float)
    return float(np.sqrt(np.sum(mesh.cell_volumes * u * u)))


# -- plain-text I/O -------------------------------------------------------------

def save_mesh(mesh: Mesh, path) -> None:
    """Write a mesh in the plain-text format described in the module docstring."""
    lines = [f"dim {mesh.dim}"]
    for i in range(mesh.n_cells):
        coords = " ".join(repr(float(c)) for c in mesh.cell_centers[i])
        lines.append(f"cell {i} {coords} {float(mesh.cell_volumes[i])!r}")
    for f in range(mesh.n_faces):
        k, l = mesh.face_cells[f]
        nrm = " ".join(repr(float(c)) for c in mesh.face_normals[f])
        lines.append(f"iface {k} {l} {float(mesh.face_areas[f])!r} "
                     f"{float(mesh.face_dists[f])!r} {nrm}")
    for b in range(mesh.n_bfaces):
        nrm = " ".join(repr(float(c)) for c in mesh.bface_normals[b])
        tag = _TAG_NAMES[int(mesh.bface_tags[b])]
        lines.append(f"bface {int(mesh.bface_cells[b])} "
                     f"{float(mesh.bface_areas[b])!r} "
                     f"{float(mesh.bface_dists[b])!r} {nrm} {tag}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    """Read a mesh from the plain-text format; validates structure on load."""
    dim = None
    cells: dict = {}
    ifaces, bfaces = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            kind = parts[0]
            try:
                if kind == "dim":
                    dim = int(parts[1])
                    if dim not in (2, 3):
                        raise MeshFormatError(f"line {lineno}: dim must be 2 or 3")
                elif kind == "cell":
                    if dim is None:
                        raise MeshFormatError("cell record before dim")
                    want = 2 + dim + 1
                    if len(parts) != want:
                        raise MeshFormatError(
                            f"line {lineno}: cell record needs {want} fields")
                    cid = int(parts[1])
                    vals = [float(x) for x in parts[2:]]
                    if cid in cells:
                        raise MeshFormatError(f"line {lineno}: duplicate cell {cid}")
                    cells[cid] = (vals[:dim], vals[dim])
                elif kind == "iface":
                    if dim is None:
                        raise MeshFormatError("iface record before dim")
                    want = 3 + 2 + dim
                    if len(parts) != want:
                        raise MeshFormatError(
                            f"line {lineno}: iface record needs {want} fields")
                    ifaces.append((int(parts[1]), int(parts[2]),
                                   float(parts[3]), float(parts[4]),
                                   [float(x) for x in parts[5:5 + dim]]))
                elif kind == "bface":
                    if dim is None:
                        raise MeshFormatError("bface record before dim")
                    want = 2 + 2 + dim + 1
                    if len(parts) != want:
                        raise MeshFormatError(
                            f"line {lineno}: bface record needs {want} fields")
                    tag = parts[-1]
                    if tag not in _TAG_CODES:
                        raise MeshFormatError(
                            f"line {lineno}: unknown boundary tag {tag!r}")
                    bfaces.append((int(parts[1]), float(parts[2]),
                                   float(parts[3]),
                                   [float(x) for x in parts[4:4 + dim]], tag))
                else:
                    raise MeshFormatError(
                        f"line {lineno}: unknown record {kind!r}")
            except (ValueError, IndexError) as exc:
                if isinstance(exc, MeshFormatError):
                    raise
                raise MeshFormatError(f"line {lineno}: {exc}") from exc
    if dim is None:
        raise MeshFormatError("missing dim record")
    n = len(cells)
    if n == 0:
        raise MeshFormatError("mesh file has no cells")
    if sorted(cells) != list(range(n)):
        raise MeshFormatError("cell ids must be contiguous 0..n-1")
    centers = np.array([cells[i][0] for i in range(n)])
    volumes = np.array([cells[i][1] for i in range(n)])

    face_cells = np.array([[k, l] for k, l, *_ in ifaces],
                          dtype=int).reshape(-1, 2)
    face_areas = np.array([a for _, _, a, _, _ in ifaces])
    face_dists = np.array([d for _, _, _, d, _ in ifaces])
    face_normals = np.array([nrm for *_, nrm in ifaces]).reshape(-1, dim)
    bface_cells = np.array([c for c, *_ in bfaces], dtype=int)
    bface_areas = np.array([a for _, a, _, _, _ in bfaces])
    bface_dists = np.array([d for _, _, d, _, _ in bfaces])
    bface_normals = np.array([nrm for _, _, _, nrm, _ in bfaces]
                             ).reshape(-1, dim)
    bface_tags = np.array([_TAG_CODES[t] for *_, t in bfaces], dtype=np.int8)

    for name, arr in (("iface", face_cells.ravel()), ("bface", bface_cells)):
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise MeshFormatError(f"{name} record references a cell out of range")

    # Cell diameter estimate from incident face distances: exact diameters are
    # not in the format, and only the regularity report uses them.
    diameters = np.zeros(n)
    if len(face_cells):
        np.maximum.at(diameters, face_cells[:, 0], face_dists)
        np.maximum.at(diameters, face_cells[:, 1], face_dists)
    if len(bface_cells):
        np.maximum.at(diameters, bface_cells, 2.0 * bface_dists)
    if np.any(diameters == 0):
        # Isolated single cell: fall back to a volume-based length scale.
        diameters[diameters == 0] = volumes[diameters == 0] ** (1.0 / dim)

    mesh = Mesh(dim=dim, cell_centers=centers, cell_volumes=volumes,
                cell_diameters=diameters, face_cells=face_cells,
                face_areas=face_areas, face_dists=face_dists,
                face_normals=face_normals, bface_cells=bface_cells,
                bface_areas=bface_areas, bface_dists=bface_dists,
                bface_normals=bface_normals, bface_tags=bface_tags)
    mesh.validate()
    return mesh
