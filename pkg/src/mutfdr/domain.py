"""Core data types, dataset ingestion/validation, and serialization.

Two-stage mutation count data are organized as:

* a :class:`MutationTypeTable` with per-type passenger rates for the
  discovery and validation stages,
* per-gene :class:`GeneRecord` rows holding coverages and mutation counts
  for every type in both stages,
* a :class:`Dataset` bundling the two plus study metadata, and
* a :class:`Scenario` assigning one multiplicative effect per gene
  (effect 1 = passenger, effect > 1 = driver).

All types are immutable after construction and safe to share across
threads.  File formats are comma-separated text; floats are written with
17 significant digits so that save/load round-trips are lossless.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "InputError",
    "MutationTypeTable",
    "GeneRecord",
    "DatasetMeta",
    "Dataset",
    "DatasetArrays",
    "ScenarioOrigin",
    "Scenario",
    "StageSummary",
    "load_rates",
    "save_rates",
    "reference_rates_path",
    "load_dataset",
    "save_dataset",
    "load_scenario",
    "save_scenario",
    "summary_counts",
    "fmt_float",
]


class InputError(ValueError):
    """Malformed or inconsistent input: files, counts, or configuration."""


def fmt_float(x: float) -> str:
    """Serialize a float with 17 significant digits (lossless round-trip)."""
    return format(float(x), ".17g")


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MutationTypeTable:
    """Per-type passenger mutation rates for both stages.

    ``gamma1[m]`` (``gamma2[m]``) is the rate, per successfully sequenced
    nucleotide, of passenger mutations of type ``m`` in the discovery
    (validation) stage.  Rates are collapsed over tumors, i.e. they already
    absorb tumor-level factors.
    """

    labels: tuple[str, ...]
    gamma1: np.ndarray
    gamma2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        object.__setattr__(self, "gamma1", _frozen_array(self.gamma1, np.float64))
        object.__setattr__(self, "gamma2", _frozen_array(self.gamma2, np.float64))
        m = len(self.labels)
        if m < 1:
            raise InputError("mutation type table must have at least one type")
        if self.gamma1.shape != (m,) or self.gamma2.shape != (m,):
            raise InputError("rate vectors must match the number of type labels")
        for name, rates in (("gamma1", self.gamma1), ("gamma2", self.gamma2)):
            if not np.all((rates > 0.0) & (rates < 1.0)):
                bad = rates[~((rates > 0.0) & (rates < 1.0))][0]
                raise InputError(f"{name} must lie in (0, 1); got {bad!r}")
        if len(set(self.labels)) != m:
            raise InputError("mutation type labels must be unique")

    @property
    def n_types(self) -> int:
        return len(self.labels)

    def __eq__(self, other):
        if not isinstance(other, MutationTypeTable):
            return NotImplemented
        return (
            self.labels == other.labels
            and np.array_equal(self.gamma1, other.gamma1)
            and np.array_equal(self.gamma2, other.gamma2)
        )


@dataclass(frozen=True, eq=False)
class GeneRecord:
    """Coverages and mutation counts for one gene, by type and stage.

    The two-stage screening invariant is enforced at construction: a gene
    with no discovery mutations cannot carry validation mutations.
    """

    gene_id: str
    cov1: np.ndarray
    cov2: np.ndarray
    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        for name in ("cov1", "cov2", "x1", "x2"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), np.int64))
        m = self.cov1.shape[0]
        if any(getattr(self, name).shape != (m,) for name in ("cov2", "x1", "x2")):
            raise InputError(f"gene {self.gene_id!r}: vectors must share one length")
        for name in ("cov1", "cov2", "x1", "x2"):
            if np.any(getattr(self, name) < 0):
                raise InputError(f"gene {self.gene_id!r}: {name} has negative entries")
        if np.any(self.x1 > self.cov1) or np.any(self.x2 > self.cov2):
            raise InputError(f"gene {self.gene_id!r}: mutation count exceeds coverage")
        if self.x1.sum() == 0 and self.x2.sum() != 0:
            raise InputError(
                f"gene {self.gene_id!r}: screening violation "
                "(no discovery mutations but nonzero validation counts)"
            )

    @property
    def n_types(self) -> int:
        return self.cov1.shape[0]

    @property
    def screened_in(self) -> bool:
        """True when the gene proceeds to the validation stage."""
        return int(self.x1.sum()) > 0

    def __eq__(self, other):
        if not isinstance(other, GeneRecord):
            return NotImplemented
        return self.gene_id == other.gene_id and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("cov1", "cov2", "x1", "x2")
        )


@dataclass(frozen=True)
class DatasetMeta:
    n_tumors_stage1: int = 0
    n_tumors_stage2: int = 0
    description: str = ""


class DatasetArrays(NamedTuple):
    """Stacked (G, M) views of a dataset, for vectorized computation."""

    gene_ids: tuple[str, ...]
    cov1: np.ndarray
    cov2: np.ndarray
    x1: np.ndarray
    x2: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    """A full two-stage study: rates, gene records, and metadata."""

    rates: MutationTypeTable
    genes: tuple[GeneRecord, ...]
    meta: DatasetMeta = field(default_factory=DatasetMeta)

    def __post_init__(self):
        object.__setattr__(self, "genes", tuple(self.genes))
        m = self.rates.n_types
        seen = set()
        for g in self.genes:
            if g.n_types != m:
                raise InputError(
                    f"gene {g.gene_id!r} has {g.n_types} types, table has {m}"
                )
            if g.gene_id in seen:
                raise InputError(f"duplicate gene id {g.gene_id!r}")
            seen.add(g.gene_id)

    @property
    def n_genes(self) -> int:
        return len(self.genes)

    def gene_ids(self) -> tuple[str, ...]:
        return tuple(g.gene_id for g in self.genes)

    def to_arrays(self) -> DatasetArrays:
        """Stack per-gene vectors into (G, M) matrices (computed per call)."""
        if not self.genes:
            m = self.rates.n_types
            empty = np.zeros((0, m), dtype=np.int64)
            return DatasetArrays((), empty, empty.copy(), empty.copy(), empty.copy())
        return DatasetArrays(
            self.gene_ids(),
            np.stack([g.cov1 for g in self.genes]),
            np.stack([g.cov2 for g in self.genes]),
            np.stack([g.x1 for g in self.genes]),
            np.stack([g.x2 for g in self.genes]),
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.rates == other.rates
            and self.meta == other.meta
            and len(self.genes) == len(other.genes)
            and all(a == b for a, b in zip(self.genes, other.genes))
        )


@dataclass(frozen=True)
class ScenarioOrigin:
    mcmc_iteration: int
    seed: int


@dataclass(frozen=True, eq=False)
class Scenario:
    """A genome-wide vector of gene effects used as simulation ground truth.

    ``theta[g] == 1`` marks a passenger; any ``theta[g] > 1`` marks a
    driver.  Passengers are the exact atom at 1, not a neighborhood.
    """

    theta: np.ndarray
    origin: ScenarioOrigin

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen_array(self.theta, np.float64))
        if self.theta.ndim != 1:
            raise InputError("scenario effects must form a one-dimensional vector")
        if np.any(self.theta < 1.0):
            raise InputError("scenario effects must be >= 1")

    @property
    def driver_mask(self) -> np.ndarray:
        return self.theta > 1.0

    @property
    def n_genes(self) -> int:
        return self.theta.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return self.origin == other.origin and np.array_equal(self.theta, other.theta)


@dataclass(frozen=True)
class StageSummary:
    """Counts of genes harboring 0, 1, or >1 mutations, per stage.

    The validation triple counts only genes that entered the validation
    stage (at least one discovery mutation).
    """

    discovery: tuple[int, int, int]
    validation: tuple[int, int, int]


def summary_counts(ds: Dataset) -> StageSummary:
    """Six study-level counts: (0, 1, >1) discovery and validation mutations."""
    if ds.n_genes == 0:
        return StageSummary((0, 0, 0), (0, 0, 0))
    n1 = np.array([int(g.x1.sum()) for g in ds.genes])
    n2 = np.array([int(g.x2.sum()) for g in ds.genes])
    screened = n1 > 0
    discovery = (int((n1 == 0).sum()), int((n1 == 1).sum()), int((n1 > 1).sum()))
    validation = (
        int((screened & (n2 == 0)).sum()),
        int((screened & (n2 == 1)).sum()),
        int((screened & (n2 > 1)).sum()),
    )
    return StageSummary(discovery, validation)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

_RATES_HEADER = "label,gamma1,gamma2"


def _read_lines(path) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    return path.read_text().splitlines()


def _parse_float(token: str, where: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise InputError(f"{where}: cannot parse {token!r} as a number") from None


def _parse_int(token: str, where: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise InputError(f"{where}: cannot parse {token!r} as an integer") from None


def load_rates(path) -> MutationTypeTable:
    """Load a mutation-type rate table.

    Format: one ``label,gamma1,gamma2`` row per type.  A leading
    ``label,gamma1,gamma2`` header row is accepted and skipped.
    """
    lines = [ln for ln in _read_lines(path) if ln.strip() and not ln.startswith("#")]
    if lines and lines[0].strip() == _RATES_HEADER:
        lines = lines[1:]
    labels, g1, g2 = [], [], []
    for i, ln in enumerate(lines, start=1):
        fields = ln.split(",")
        if len(fields) != 3:
            raise InputError(f"rates row {i}: expected 3 fields, got {len(fields)}")
        labels.append(fields[0].strip())
        g1.append(_parse_float(fields[1], f"rates row {i}"))
        g2.append(_parse_float(fields[2], f"rates row {i}"))
    return MutationTypeTable(tuple(labels), np.array(g1), np.array(g2))


def save_rates(table: MutationTypeTable, path) -> None:
    rows = [_RATES_HEADER]
    for label, a, b in zip(table.labels, table.gamma1, table.gamma2):
        rows.append(f"{label},{fmt_float(a)},{fmt_float(b)}")
    Path(path).write_text("\n".join(rows) + "\n")


def reference_rates_path() -> Path:
    """Path to the bundled 25-type reference rate configuration."""
    return Path(__file__).parent / "data" / "reference_rates_25.csv"


def _dataset_header(rates: MutationTypeTable) -> str:
    cols = ["gene_id"]
    for label in rates.labels:
        cols += [f"cov1_{label}", f"cov2_{label}", f"x1_{label}", f"x2_{label}"]
    return ",".join(cols)


def _meta_line(meta: DatasetMeta) -> str:
    return (
        f"# meta: n_tumors_stage1={meta.n_tumors_stage1} "
        f"n_tumors_stage2={meta.n_tumors_stage2} "
        f"description={meta.description}"
    )


def _parse_meta_line(line: str) -> DatasetMeta:
    body = line[len("# meta:"):].strip()
    s1, rest = body.split(" ", 1)
    s2, rest = rest.split(" ", 1)
    desc = rest.split("=", 1)[1]
    return DatasetMeta(
        n_tumors_stage1=_parse_int(s1.split("=", 1)[1], "meta line"),
        n_tumors_stage2=_parse_int(s2.split("=", 1)[1], "meta line"),
        description=desc,
    )


def load_dataset(rates: MutationTypeTable, path) -> Dataset:
    """Load gene records against a previously loaded rate table.

    Format: an optional ``# meta: ...`` comment, a header row naming the
    per-type columns in table order, then one row per gene holding
    ``gene_id`` followed by ``cov1,cov2,x1,x2`` for each type.
    """
    lines = _read_lines(path)
    meta = DatasetMeta()
    body = []
    for ln in lines:
        if ln.startswith("# meta:"):
            meta = _parse_meta_line(ln)
        elif ln.strip() and not ln.startswith("#"):
            body.append(ln)
    if not body:
        raise InputError("dataset file has no header row")
    header, rows = body[0], body[1:]
    expected = _dataset_header(rates)
    if header != expected:
        raise InputError(
            "dataset header does not match the rate table "
            f"(expected {expected.split(',')[1:5]}..., got {header.split(',')[1:5]}...)"
        )
    m = rates.n_types
    genes = []
    for i, ln in enumerate(rows, start=1):
        fields = ln.split(",")
        if len(fields) != 1 + 4 * m:
            raise InputError(
                f"dataset row {i}: expected {1 + 4 * m} fields, got {len(fields)}"
            )
        vals = np.array(
            [_parse_int(tok, f"dataset row {i}") for tok in fields[1:]], dtype=np.int64
        ).reshape(m, 4)
        genes.append(
            GeneRecord(
                gene_id=fields[0],
                cov1=vals[:, 0],
                cov2=vals[:, 1],
                x1=vals[:, 2],
                x2=vals[:, 3],
            )
        )
    return Dataset(rates=rates, genes=tuple(genes), meta=meta)


def save_dataset(ds: Dataset, path) -> None:
    rows = [_meta_line(ds.meta), _dataset_header(ds.rates)]
    for g in ds.genes:
        cells = [g.gene_id]
        for m in range(g.n_types):
            cells += [str(g.cov1[m]), str(g.cov2[m]), str(g.x1[m]), str(g.x2[m])]
        rows.append(",".join(cells))
    Path(path).write_text("\n".join(rows) + "\n")


def save_scenario(scenario: Scenario, gene_ids: Sequence[str], path) -> None:
    if len(gene_ids) != scenario.n_genes:
        raise InputError("scenario length does not match the gene id list")
    rows = [
        f"# origin: mcmc_iteration={scenario.origin.mcmc_iteration} "
        f"seed={scenario.origin.seed}",
        "gene_id,theta",
    ]
    for gid, th in zip(gene_ids, scenario.theta):
        rows.append(f"{gid},{fmt_float(th)}")
    Path(path).write_text("\n".join(rows) + "\n")


def load_scenario(path, expected_gene_ids: Sequence[str] | None = None) -> Scenario:
    """Load a scenario file; optionally verify gene ids match a dataset."""
    lines = _read_lines(path)
    origin = ScenarioOrigin(0, 0)
    body = []
    for ln in lines:
        if ln.startswith("# origin:"):
            parts = dict(tok.split("=", 1) for tok in ln[len("# origin:"):].split())
            origin = ScenarioOrigin(
                mcmc_iteration=_parse_int(parts["mcmc_iteration"], "origin line"),
                seed=_parse_int(parts["seed"], "origin line"),
            )
        elif ln.strip() and not ln.startswith("#"):
            body.append(ln)
    if not body or body[0] != "gene_id,theta":
        raise InputError("scenario file must start with a 'gene_id,theta' header")
    ids, thetas = [], []
    for i, ln in enumerate(body[1:], start=1):
        fields = ln.split(",")
        if len(fields) != 2:
            raise InputError(f"scenario row {i}: expected 2 fields")
        ids.append(fields[0])
        thetas.append(_parse_float(fields[1], f"scenario row {i}"))
    if expected_gene_ids is not None and tuple(ids) != tuple(expected_gene_ids):
        raise InputError("scenario gene ids do not match the dataset")
    return Scenario(theta=np.array(thetas), origin=origin)
