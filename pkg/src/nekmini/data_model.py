"""Structured-grid mesh and field data model.

This is the in-memory contract shared by the solver, the bridge, the
staging transport, and the sinks.  A :class:`Snapshot` is one timestamped
collection of :class:`Block` values; each block is an axis-aligned
structured-points grid carrying named point or cell arrays.

Array layout convention (used everywhere, including the wire codec and
the checkpoint files): values are flat float64 sequences ordered with the
component index fastest, then x, then y, then z, i.e.

    flat = c + components * (i + ni * (j + nj * k))

which matches legacy-VTK structured-points ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

POINT = "point"
CELL = "cell"


@dataclass(frozen=True)
class FieldArray:
    """A named array attached to a block.

    values is always a flat, C-contiguous float64 array of length
    components * entity_count, where the entity count (points or cells)
    is implied by the owning block's extents.
    """

    name: str
    association: str  # POINT or CELL
    components: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True).ravel()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __eq__(self, other):
        if not isinstance(other, FieldArray):
            return NotImplemented
        return (
            self.name == other.name
            and self.association == other.association
            and self.components == other.components
            and self.values.shape == other.values.shape
            and bool(np.all(self.values == other.values))
        )


@dataclass(frozen=True)
class Block:
    """One structured-points block: origin + spacing + inclusive extents."""

    origin: tuple[float, float, float]
    spacing: tuple[float, float, float]
    extents: tuple[int, int, int, int, int, int]  # i_min,i_max,j_min,j_max,k_min,k_max
    fields: tuple[FieldArray, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        object.__setattr__(self, "spacing", tuple(float(x) for x in self.spacing))
        object.__setattr__(self, "extents", tuple(int(x) for x in self.extents))
        object.__setattr__(self, "fields", tuple(self.fields))

    @property
    def dims(self) -> tuple[int, int, int]:
        e = self.extents
        return (e[1] - e[0] + 1, e[3] - e[2] + 1, e[5] - e[4] + 1)

    @property
    def point_count(self) -> int:
        ni, nj, nk = self.dims
        return ni * nj * nk

    @property
    def cell_count(self) -> int:
        # an axis with a single point plane is treated as flat (factor 1)
        return int(np.prod([max(n - 1, 1) if n > 0 else 0 for n in self.dims]))

    def entity_count(self, association: str) -> int:
        return self.point_count if association == POINT else self.cell_count

    def field_named(self, name: str) -> FieldArray:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(f"no field named {name!r}")


@dataclass(frozen=True)
class Snapshot:
    """The unit of data flowing from the solver to the sinks."""

    time: float
    step: int
    producer_id: int
    blocks: tuple[Block, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))


@dataclass(frozen=True)
class MeshMetadata:
    mesh_name: str
    global_extents: tuple[int, int, int, int, int, int]
    field_descriptors: tuple[tuple[str, str, int], ...]  # (name, association, components)
    block_count: int


def metadata_of(s: Snapshot, mesh_name: str = "mesh") -> MeshMetadata:
    """Describe a snapshot: union extents plus the shared field schema."""
    ext = np.array([b.extents for b in s.blocks])
    global_extents = (
        int(ext[:, 0].min()), int(ext[:, 1].max()),
        int(ext[:, 2].min()), int(ext[:, 3].max()),
        int(ext[:, 4].min()), int(ext[:, 5].max()),
    )
    descriptors = tuple((f.name, f.association, f.components) for f in s.blocks[0].fields)
    return MeshMetadata(mesh_name, global_extents, descriptors, len(s.blocks))


def validate_snapshot(s: Snapshot) -> list[str]:
    """Check every type invariant; returns [] when the snapshot is valid.

    Violations are strings naming the offending block/field; never raises.
    """
    violations: list[str] = []
    if len(s.blocks) == 0:
        return ["snapshot has no blocks"]
    if s.step < 0:
        violations.append("negative step")

    schema = None
    for bi, b in enumerate(s.blocks):
        e = b.extents
        if e[1] < e[0] or e[3] < e[2] or e[5] < e[4]:
            violations.append(f"block {bi}: inverted extents {e}")
            continue
        for ax, sp in enumerate(b.spacing):
            if not sp > 0:
                violations.append(f"block {bi}: non-positive spacing on axis {ax}")
        seen: set[str] = set()
        for f in b.fields:
            if not f.name:
                violations.append(f"block {bi}: empty field name")
            if f.name in seen:
                violations.append(f"block {bi}: duplicate field name {f.name!r}")
            seen.add(f.name)
            if f.association not in (POINT, CELL):
                violations.append(f"block {bi}, field {f.name!r}: bad association")
                continue
            if f.components < 1:
                violations.append(f"block {bi}, field {f.name!r}: components < 1")
                continue
            expected = f.components * b.entity_count(f.association)
            if f.values.size != expected:
                violations.append(
                    f"block {bi}, field {f.name!r}: field length mismatch "
                    f"(got {f.values.size}, expected {expected})"
                )
        sig = tuple((f.name, f.association, f.components) for f in b.fields)
        if schema is None:
            schema = sig
        elif set(sig) != set(schema):
            violations.append(f"block {bi}: field schema differs from block 0")
    return violations


class SchemaMismatch(ValueError):
    pass


def _grid(f: FieldArray, dims: tuple[int, int, int]) -> np.ndarray:
    """View a flat field array as (nk, nj, ni, components)."""
    ni, nj, nk = dims
    return f.values.reshape(nk, nj, ni, f.components)


def assemble_global(blocks: list[Block], layout: str = "tile_x") -> Block:
    """Tile blocks along x into one global block.

    Blocks must abut (no ghost overlap), share spacing, y/z extents, and
    field schema, and arrive ordered by producer (ascending i_min).
    Origin is taken from the first block.
    """
    if layout != "tile_x":
        raise ValueError(f"unknown layout {layout!r}")
    if not blocks:
        raise ValueError("no blocks to assemble")
    if len(blocks) == 1:
        return blocks[0]

    first = blocks[0]
    schema = tuple((f.name, f.association, f.components) for f in first.fields)
    for b in blocks[1:]:
        if b.spacing != first.spacing:
            raise SchemaMismatch("spacing differs across blocks")
        if tuple((f.name, f.association, f.components) for f in b.fields) != schema:
            raise SchemaMismatch("field schema differs across blocks")
        if b.extents[2:] != first.extents[2:]:
            raise SchemaMismatch("y/z extents differ across blocks")

    ni_total = sum(b.dims[0] for b in blocks)
    _, nj, nk = first.dims
    e = first.extents
    global_extents = (e[0], e[0] + ni_total - 1, e[2], e[3], e[4], e[5])

    out_fields = []
    for fi, (name, assoc, comps) in enumerate(schema):
        if assoc == CELL:
            raise SchemaMismatch("cell-centered tiling across blocks is unsupported")
        parts = [_grid(b.fields[fi], b.dims) for b in blocks]
        merged = np.concatenate(parts, axis=2)  # x is the fastest grid axis
        out_fields.append(FieldArray(name, assoc, comps, merged.ravel()))

    return Block(first.origin, first.spacing, global_extents, tuple(out_fields))
