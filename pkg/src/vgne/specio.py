"""On-disk formats: game specs, graphs, experiment manifests, trace CSVs.

All documents are key-value trees serialized as YAML.  Floats are written
with 17 significant digits, which round-trips IEEE doubles exactly, so a
spec written and re-read is bit-for-bit the same game.  Matrices are
nested lists in row-major order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import DimensionError, GraphError, SpecFormatError, SpecVersionError
from .game import (
    BoxSet,
    CouplingConstraint,
    GameSpec,
    Monotonicity,
    OracleCost,
    QuadraticCost,
)
from .network import CommGraph

__all__ = [
    "SPEC_VERSION",
    "load_spec",
    "write_spec",
    "load_graph",
    "write_graph",
    "ExperimentEntry",
    "ExperimentManifest",
    "load_manifest",
    "write_trace_csv",
    "TRACE_COLUMNS",
    "specs_identical",
]

SPEC_VERSION = 1
TRACE_COLUMNS = (
    "iter",
    "fp_residual_phi",
    "kkt_residual",
    "max_constraint_violation",
    "wall_ns",
)


# -- canonical YAML -------------------------------------------------------------


class _Dumper(yaml.SafeDumper):
    pass


def _float_representer(dumper, value):
    if math.isnan(value):
        text = ".nan"
    elif math.isinf(value):
        text = ".inf" if value > 0 else "-.inf"
    else:
        text = format(value, ".17g")
        if "." not in text and "e" not in text and "E" not in text:
            text += ".0"
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_Dumper.add_representer(float, _float_representer)


def _dump(doc: dict, path) -> None:
    Path(path).write_text(
        yaml.dump(doc, Dumper=_Dumper, default_flow_style=None, sort_keys=False)
    )


def _parse(path) -> dict:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise SpecFormatError(f"{path}: not a well-formed document: {exc}") from exc
    if not isinstance(doc, dict):
        raise SpecFormatError(f"{path}: expected a key-value tree at the top level")
    return doc


def _need(doc: dict, key: str, path) -> object:
    if key not in doc:
        raise SpecFormatError(f"{path}: missing required field {key!r}")
    return doc[key]


def _floats(value, name: str, path) -> np.ndarray:
    try:
        return np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SpecFormatError(f"{path}: field {name!r} is not numeric: {exc}") from exc


# -- game specs -----------------------------------------------------------------


def write_spec(spec: GameSpec, path) -> None:
    """Serialize a game; oracle costs are declared external (no callables)."""
    if isinstance(spec.cost, QuadraticCost):
        cost_doc = {
            "kind": "quadratic",
            "q": [float(v) for v in spec.cost.q],
            "c": [[float(v) for v in row] for row in spec.cost.c],
            "d": [[float(v) for v in row] for row in spec.cost.d],
        }
    else:
        cost_doc = {"kind": "external"}
    doc = {
        "spec_version": SPEC_VERSION,
        "num_agents": spec.num_agents,
        "decision_dim": spec.decision_dim,
        "local_sets": [
            {
                "lower": [float(v) for v in box.lower],
                "upper": [float(v) for v in box.upper],
            }
            for box in spec.local_sets
        ],
        "cost": cost_doc,
    }
    if spec.num_coupling_rows > 0:
        doc["coupling"] = {
            "a_blocks": [
                [[float(v) for v in row] for row in blk] for blk in spec.coupling.a_blocks
            ],
            "b": [float(v) for v in spec.coupling.b],
        }
    if spec.monotonicity is not None:
        doc["monotonicity"] = {
            "eta": float(spec.monotonicity.eta),
            "lip_f": float(spec.monotonicity.lip_f),
        }
    _dump(doc, path)


def load_spec(path) -> GameSpec:
    """Read a game; external costs load as unbound :class:`OracleCost`."""
    doc = _parse(path)
    version = _need(doc, "spec_version", path)
    if version != SPEC_VERSION:
        raise SpecVersionError(
            f"{path}: spec_version {version!r} is not supported; this build reads "
            f"version {SPEC_VERSION}"
        )
    N = _need(doc, "num_agents", path)
    n = _need(doc, "decision_dim", path)
    if not (isinstance(N, int) and isinstance(n, int)):
        raise SpecFormatError(f"{path}: num_agents and decision_dim must be integers")

    sets_doc = _need(doc, "local_sets", path)
    if not isinstance(sets_doc, list):
        raise SpecFormatError(f"{path}: local_sets must be a list of bound pairs")
    boxes = []
    for i, entry in enumerate(sets_doc):
        if not isinstance(entry, dict) or "lower" not in entry or "upper" not in entry:
            raise SpecFormatError(
                f"{path}: local_sets[{i}] needs 'lower' and 'upper' arrays"
            )
        boxes.append(
            BoxSet(
                _floats(entry["lower"], f"local_sets[{i}].lower", path),
                _floats(entry["upper"], f"local_sets[{i}].upper", path),
            )
        )

    cost_doc = _need(doc, "cost", path)
    kind = _need(cost_doc, "kind", path) if isinstance(cost_doc, dict) else None
    if kind == "quadratic":
        cost = QuadraticCost(
            q=_floats(_need(cost_doc, "q", path), "cost.q", path),
            c=_floats(_need(cost_doc, "c", path), "cost.c", path),
            d=_floats(_need(cost_doc, "d", path), "cost.d", path),
        )
    elif kind == "external":
        cost = OracleCost(grads=None)
    else:
        raise SpecFormatError(
            f"{path}: cost.kind must be 'quadratic' or 'external', received {kind!r}"
        )

    coupling_doc = doc.get("coupling")
    if coupling_doc is None:
        coupling = CouplingConstraint.none(N, n)
    else:
        if not isinstance(coupling_doc, dict):
            raise SpecFormatError(f"{path}: coupling must be a mapping or omitted")
        blocks_doc = _need(coupling_doc, "a_blocks", path)
        blocks = tuple(
            _floats(blk, f"coupling.a_blocks[{i}]", path)
            for i, blk in enumerate(blocks_doc)
        )
        try:
            coupling = CouplingConstraint(blocks, _floats(_need(coupling_doc, "b", path), "coupling.b", path))
        except DimensionError as exc:
            raise DimensionError(f"{path}: {exc}") from exc

    mono_doc = doc.get("monotonicity")
    mono = None
    if mono_doc is not None:
        if not isinstance(mono_doc, dict) or "eta" not in mono_doc or "lip_f" not in mono_doc:
            raise SpecFormatError(f"{path}: monotonicity needs 'eta' and 'lip_f'")
        mono = Monotonicity(eta=float(mono_doc["eta"]), lip_f=float(mono_doc["lip_f"]))

    try:
        return GameSpec(
            num_agents=N,
            decision_dim=n,
            local_sets=tuple(boxes),
            cost=cost,
            coupling=coupling,
            monotonicity=mono,
        )
    except DimensionError as exc:
        raise DimensionError(f"{path}: {exc}") from exc


def specs_identical(a: GameSpec, b: GameSpec) -> bool:
    """Field-for-field equality with exact array comparison."""
    if (a.num_agents, a.decision_dim) != (b.num_agents, b.decision_dim):
        return False
    for ba, bb in zip(a.local_sets, b.local_sets):
        if not (np.array_equal(ba.lower, bb.lower) and np.array_equal(ba.upper, bb.upper)):
            return False
    if type(a.cost) is not type(b.cost):
        return False
    if isinstance(a.cost, QuadraticCost):
        if not (
            np.array_equal(a.cost.q, b.cost.q)
            and np.array_equal(a.cost.c, b.cost.c)
            and np.array_equal(a.cost.d, b.cost.d)
        ):
            return False
    if not np.array_equal(a.coupling.b, b.coupling.b):
        return False
    for blk_a, blk_b in zip(a.coupling.a_blocks, b.coupling.a_blocks):
        if not np.array_equal(blk_a, blk_b):
            return False
    if (a.monotonicity is None) != (b.monotonicity is None):
        return False
    if a.monotonicity is not None:
        if (a.monotonicity.eta, a.monotonicity.lip_f) != (
            b.monotonicity.eta,
            b.monotonicity.lip_f,
        ):
            return False
    return True


# -- graphs ---------------------------------------------------------------------


def write_graph(graph: CommGraph, path) -> None:
    _dump(
        {
            "num_nodes": graph.num_nodes,
            "edges": [[int(i), int(j)] for i, j in graph.edges],
        },
        path,
    )


def load_graph(path) -> CommGraph:
    doc = _parse(path)
    N = _need(doc, "num_nodes", path)
    edges_doc = _need(doc, "edges", path)
    if not isinstance(N, int):
        raise SpecFormatError(f"{path}: num_nodes must be an integer")
    if not isinstance(edges_doc, list):
        raise SpecFormatError(f"{path}: edges must be a list of [i, j] pairs")
    try:
        return CommGraph(num_nodes=N, edges=tuple(tuple(e) for e in edges_doc))
    except GraphError as exc:
        raise GraphError(f"{path}: {exc}") from exc


# -- experiment manifests --------------------------------------------------------


@dataclass(frozen=True)
class ExperimentEntry:
    """One solver run: game, algorithm, step policy, and output location.

    ``policy`` is ``theorem`` (safety-scaled admissible steps), ``equal``
    (shared step from the equal-step bound), or ``explicit`` (steps given
    verbatim and run without admissibility validation, so divergence
    becomes reportable instead of being rejected upfront).  ``seed``
    draws a random feasible start; omit it for the deterministic default
    start.  ``graph``/``graph_kind`` apply to the consensus algorithm.
    """

    name: str
    spec: str
    trace: str
    algorithm: str = "pfb"
    policy: str = "theorem"
    alpha: tuple | None = None
    gamma: float | None = None
    tau: float | None = None
    seed: int | None = None
    graph: str | None = None
    graph_kind: str | None = None
    graph_degree: int | None = None
    graph_seed: int | None = None
    tol: float | None = None
    max_iters: int | None = None
    trace_every: int | None = None

    def __post_init__(self):
        if self.algorithm not in ("pfb", "apa", "kns"):
            raise SpecFormatError(
                f"entry {self.name!r}: algorithm must be pfb, apa, or kns"
            )
        if self.policy not in ("theorem", "equal", "explicit"):
            raise SpecFormatError(
                f"entry {self.name!r}: policy must be theorem, equal, or explicit"
            )
        if self.alpha is not None:
            object.__setattr__(
                self, "alpha", tuple(float(a) for a in np.atleast_1d(self.alpha))
            )


@dataclass(frozen=True)
class ExperimentManifest:
    """Validated collection of runs; names and trace paths must be unique."""

    entries: tuple
    base_dir: str = "."

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise SpecFormatError("manifest: entry names must be unique")
        traces = [e.trace for e in self.entries]
        if len(set(traces)) != len(traces):
            raise SpecFormatError("manifest: trace output paths must be unique")
        object.__setattr__(self, "entries", tuple(self.entries))


_ENTRY_KEYS = {
    "name",
    "spec",
    "trace",
    "algorithm",
    "policy",
    "alpha",
    "gamma",
    "tau",
    "seed",
    "graph",
    "graph_kind",
    "graph_degree",
    "graph_seed",
    "tol",
    "max_iters",
    "trace_every",
}


def load_manifest(path) -> ExperimentManifest:
    doc = _parse(path)
    version = _need(doc, "manifest_version", path)
    if version != 1:
        raise SpecVersionError(
            f"{path}: manifest_version {version!r} is not supported; this build reads version 1"
        )
    entries_doc = _need(doc, "entries", path)
    if entries_doc is None:
        entries_doc = []
    if not isinstance(entries_doc, list):
        raise SpecFormatError(f"{path}: entries must be a list")
    entries = []
    for i, e in enumerate(entries_doc):
        if not isinstance(e, dict):
            raise SpecFormatError(f"{path}: entries[{i}] must be a mapping")
        unknown = set(e) - _ENTRY_KEYS
        if unknown:
            raise SpecFormatError(
                f"{path}: entries[{i}] has unknown fields {sorted(unknown)}"
            )
        for key in ("name", "spec", "trace"):
            if key not in e:
                raise SpecFormatError(f"{path}: entries[{i}] missing field {key!r}")
        entries.append(ExperimentEntry(**e))
    return ExperimentManifest(entries=tuple(entries), base_dir=str(Path(path).parent))


# -- trace CSVs ------------------------------------------------------------------


def write_trace_csv(path, trace) -> None:
    """Write trace rows with canonical float formatting.

    Every column except ``wall_ns`` is bitwise reproducible across runs of
    the same build on the same backend.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in trace:
            writer.writerow(
                [
                    row.iteration,
                    format(row.fp_residual_phi, ".17g"),
                    format(row.kkt_residual, ".17g"),
                    format(row.max_constraint_violation, ".17g"),
                    row.wall_ns,
                ]
            )
