"""Grid archive: descriptor-binned elites with strict replace-if-better rules.

Descriptor space is discretized into an equally spaced grid; each cell holds
at most one elite. Insertions only ever improve a cell (ties keep the
incumbent, which makes duplicate insertions idempotent and keeps per-source
addition counts meaningful). Cells are addressed by a mixed-radix composite
index over the per-axis bins.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import nets
from .errors import EmptyArchiveError, NumericFault, ShapeError

SOURCES = ("init", "ga", "pg", "actor")


@dataclass(frozen=True)
class GridSpec:
    dims: tuple[int, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.dims) == len(self.lower) == len(self.upper)):
            raise ShapeError("dims, lower, upper must have equal lengths")
        if any(d < 1 for d in self.dims):
            raise ShapeError("every axis needs at least one cell")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ShapeError("lower bounds must be strictly below upper bounds")

    @cached_property
    def total_cells(self) -> int:
        return math.prod(self.dims)


def grid_index(spec: GridSpec, descriptor) -> int:
    """Composite cell index of a descriptor (clamped to the grid bounds)."""
    d = np.asarray(descriptor, dtype=np.float64)
    if d.shape != (len(spec.dims),):
        raise ShapeError(f"descriptor has shape {d.shape}, grid expects "
                         f"({len(spec.dims)},)")
    if not np.isfinite(d).all():
        idx = int(np.argmin(np.isfinite(d)))
        raise NumericFault(f"non-finite descriptor component {idx}", idx)
    cell = 0
    for axis, (n, lo, hi) in enumerate(zip(spec.dims, spec.lower, spec.upper)):
        x = min(max(float(d[axis]), lo), hi)
        i = min(int((x - lo) / (hi - lo) * n), n - 1)
        cell = cell * n + i
    return cell


def axis_indices(spec: GridSpec, cell: int) -> tuple[int, ...]:
    """Inverse of the mixed-radix composition (for dumps and heatmaps)."""
    out = []
    for n in reversed(spec.dims):
        out.append(cell % n)
        cell //= n
    return tuple(reversed(out))


@dataclass
class Elite:
    genotype: np.ndarray
    fitness: float
    descriptor: np.ndarray
    source: str
    generation_added: int


@dataclass(frozen=True)
class InsertOutcome:
    """kind is one of new_cell / improved / rejected; fitness_delta is the
    candidate-minus-incumbent margin (+inf for an empty cell)."""

    kind: str
    cell: int
    fitness_delta: float


@dataclass
class ArchiveMetrics:
    qd_score: float
    coverage: float
    max_fitness: float | None


class Archive:
    """Single-writer elite store over a GridSpec."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.cells: dict[int, Elite] = {}

    def __len__(self) -> int:
        return len(self.cells)

    def try_insert(self, genotype, fitness: float, descriptor, source: str,
                   generation: int) -> InsertOutcome:
        """Offer a candidate to its cell; store copies, never aliases."""
        fitness = float(fitness)
        if not np.isfinite(fitness):
            raise NumericFault("non-finite fitness")
        cell = grid_index(self.spec, descriptor)
        incumbent = self.cells.get(cell)
        if incumbent is not None and fitness <= incumbent.fitness:
            return InsertOutcome("rejected", cell, fitness - incumbent.fitness)
        elite = Elite(np.array(genotype, dtype=np.float64, copy=True), fitness,
                      np.array(descriptor, dtype=np.float64, copy=True),
                      source, generation)
        self.cells[cell] = elite
        if incumbent is None:
            return InsertOutcome("new_cell", cell, math.inf)
        return InsertOutcome("improved", cell, fitness - incumbent.fitness)

    def select_uniform(self, rng: np.random.Generator, k: int) -> list[Elite]:
        """k independent uniform draws (with replacement) over occupied cells."""
        if not self.cells:
            raise EmptyArchiveError("cannot select from an empty archive; "
                                    "seed it with random genotypes first")
        occupied = list(self.cells.keys())
        picks = rng.integers(0, len(occupied), size=k)
        return [self.cells[occupied[i]] for i in picks]

    def metrics(self, fitness_floor: float = 0.0) -> ArchiveMetrics:
        if not self.cells:
            return ArchiveMetrics(0.0, 0.0, None)
        # sorted cell order keeps the sum independent of insertion history
        fits = [self.cells[c].fitness for c in sorted(self.cells)]
        qd = float(sum(f - fitness_floor for f in fits))
        return ArchiveMetrics(qd, len(fits) / self.spec.total_cells,
                              max(fits))


def archive_fingerprint(archive: Archive) -> str:
    """SHA-256 over (cell, fitness, genotype bytes) in cell order."""
    import hashlib

    h = hashlib.sha256()
    for cell in sorted(archive.cells):
        e = archive.cells[cell]
        h.update(struct.pack("<I", cell))
        h.update(np.float64(e.fitness).tobytes())
        h.update(e.genotype.tobytes())
    return h.hexdigest()


def dump_archive(archive: Archive, csv_path, bin_path, header_lines=()) -> None:
    """Write the archive as a CSV plus a genotype sidecar keyed by cell index.

    Rows are sorted by cell index so dumps are byte-reproducible. The CSV
    header records the grid so a dump is self-describing.
    """
    spec = archive.spec
    desc_cols = ",".join(f"descriptor_{i}" for i in range(len(spec.dims)))
    with open(csv_path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"# grid_dims={','.join(str(d) for d in spec.dims)}\n")
        fh.write(f"# grid_lower={','.join(repr(v) for v in spec.lower)}\n")
        fh.write(f"# grid_upper={','.join(repr(v) for v in spec.upper)}\n")
        fh.write(f"cell_index,{desc_cols},fitness,source,generation_added\n")
        with open(bin_path, "wb") as bh:
            for cell in sorted(archive.cells):
                e = archive.cells[cell]
                desc = ",".join(repr(float(v)) for v in e.descriptor)
                fh.write(f"{cell},{desc},{e.fitness!r},{e.source},"
                         f"{e.generation_added}\n")
                bh.write(struct.pack("<I", cell))
                bh.write(nets.pack_params(e.genotype))


def load_archive(csv_path, bin_path) -> Archive:
    """Rebuild an archive from a dump; genotypes round-trip bit-exactly."""
    grid = {}
    rows = []
    with open(csv_path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# grid_"):
                key, val = line[2:].split("=", 1)
                grid[key] = val
            elif line.startswith("#") or line.startswith("cell_index") or not line:
                continue
            else:
                rows.append(line.split(","))
    spec = GridSpec(tuple(int(v) for v in grid["grid_dims"].split(",")),
                    tuple(float(v) for v in grid["grid_lower"].split(",")),
                    tuple(float(v) for v in grid["grid_upper"].split(",")))
    genotypes = {}
    with open(bin_path, "rb") as bh:
        buf = bh.read()
    off = 0
    while off < len(buf):
        (cell,) = struct.unpack_from("<I", buf, off)
        vec, off = nets.unpack_params(buf, off + 4)
        genotypes[cell] = vec
    archive = Archive(spec)
    n_axes = len(spec.dims)
    for parts in rows:
        cell = int(parts[0])
        desc = np.array([float(v) for v in parts[1:1 + n_axes]])
        fitness = float(parts[1 + n_axes])
        source = parts[2 + n_axes]
        generation = int(parts[3 + n_axes])
        if grid_index(spec, desc) != cell:
            raise ShapeError(f"corrupt dump: descriptor of cell {cell} "
                             "does not map back to it")
        archive.cells[cell] = Elite(genotypes[cell], fitness, desc, source,
                                    generation)
    return archive
