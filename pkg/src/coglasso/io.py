"""Reading data tables and writing fits, networks, configs and reports."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core import CoglassoFit, Hyperparameters, LayerPartition, empirical_covariance
from .exceptions import DataError, ParameterError

FORMATS = ("edgelist", "graphml", "json")
CONVENTIONS = ("paper", "standard")
FIT_FORMAT = "coglasso-fit/1"
NETWORK_FORMAT = "coglasso-network/1"


# --------------------------------------------------------------------------- data tables

@dataclass(frozen=True)
class DatasetSpec:
    """Where the data lives and how to split it into layers.

    Either two paths (X then Z) or a single path plus ``p_x``, the number of
    leading columns that form layer X. ``delimiter=None`` picks tab when the
    first line contains one and comma otherwise.
    """

    paths: tuple
    p_x: Optional[int] = None
    delimiter: Optional[str] = None
    header: bool = True
    standardize: bool = True

    def __post_init__(self):
        paths = (self.paths,) if isinstance(self.paths, (str, Path)) else tuple(self.paths)
        object.__setattr__(self, "paths", tuple(str(p) for p in paths))
        if len(self.paths) not in (1, 2):
            raise ParameterError("give one data file with p_x, or two files (X and Z)")
        if len(self.paths) == 1 and self.p_x is None:
            raise ParameterError("a single data file needs p_x, the number of X columns")
        if len(self.paths) == 2 and self.p_x is not None:
            raise ParameterError("p_x is implied by the X file when two files are given")


def _sniff(path: Path) -> str:
    with open(path, newline="") as fh:
        first = fh.readline()
    return "\t" if "\t" in first else ","


def read_table(path, delimiter: Optional[str] = None, header: bool = True):
    """Parse a delimited numeric table.

    Returns
    -------
    labels : list of str
    values : ndarray, shape (n, p)
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    delim = delimiter or _sniff(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delim) if any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: file is empty")
    if header:
        labels, body, first = [c.strip() for c in rows[0]], rows[1:], 2
    else:
        labels, body, first = [f"V{j + 1}" for j in range(len(rows[0]))], rows, 1
    width = len(labels)
    if not body:
        raise DataError(f"{path}: no data rows")
    out = np.empty((len(body), width))
    for r, row in enumerate(body):
        if len(row) != width:
            raise DataError(f"{path}: row {r + first} has {len(row)} fields, expected {width}")
        for c, cell in enumerate(row):
            try:
                out[r, c] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {r + first}, column {c + 1} ({labels[c]!r}): "
                    f"non-numeric value {cell.strip()!r}") from None
            if not math.isfinite(out[r, c]):
                raise DataError(f"{path}: row {r + first}, column {c + 1} ({labels[c]!r}): "
                                f"non-finite value {cell.strip()!r}")
    return labels, out


def load_dataset(spec: DatasetSpec):
    """Read the data of ``spec``.

    Returns
    -------
    data : ndarray, shape (n, p)
        X columns first. Standardization is not applied here; it happens
        when the covariance is formed (``spec.standardize``).
    partition : LayerPartition
    labels : list of str
    """
    if len(spec.paths) == 2:
        lx, X = read_table(spec.paths[0], spec.delimiter, spec.header)
        lz, Z = read_table(spec.paths[1], spec.delimiter, spec.header)
        if X.shape[0] != Z.shape[0]:
            raise DataError(f"layer files disagree on the sample count: "
                            f"{X.shape[0]} rows in {spec.paths[0]}, {Z.shape[0]} rows in {spec.paths[1]}")
        return np.hstack([X, Z]), LayerPartition(X.shape[1], Z.shape[1]), lx + lz
    labels, data = read_table(spec.paths[0], spec.delimiter, spec.header)
    p = data.shape[1]
    if not 1 <= spec.p_x < p:
        raise DataError(f"split index p_x={spec.p_x} leaves an empty layer for a table with {p} columns")
    return data, LayerPartition(spec.p_x, p - spec.p_x), labels


def covariance_for(data, spec: DatasetSpec):
    return empirical_covariance(data, standardize=spec.standardize)


def write_table(path, data, labels: Sequence[str], delimiter: str = ","):
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(labels):
        raise ParameterError("labels do not match the number of columns")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(labels)
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def default_labels(partition: LayerPartition) -> list:
    return [f"X{j + 1}" for j in range(partition.p_x)] + [f"Z{j + 1}" for j in range(partition.p_z)]


# --------------------------------------------------------------------------- config and provenance

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config: dict) -> str:
    """First 16 hex digits of the SHA-256 of the canonical JSON form."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def load_config(path) -> dict:
    """Read a YAML (or JSON) mapping of option names to values."""
    import yaml

    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such config file")
    try:
        cfg = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise DataError(f"{path}: cannot parse config: {exc}") from None
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise DataError(f"{path}: config must be a key-value mapping")
    return {str(k).replace("-", "_"): v for k, v in cfg.items()}


def provenance(seed=None, config: Optional[dict] = None) -> dict:
    return {"seed": seed, "version": __version__,
            "config_hash": config_hash(config or {})}


def reproducibility_line(seed, config: dict) -> str:
    return f"coglasso {__version__} seed={seed} config_hash={config_hash(config)}"


# --------------------------------------------------------------------------- fits

def _matrix(a):
    return None if a is None else np.asarray(a, dtype=float).tolist()


def fit_to_dict(fit: CoglassoFit, labels: Optional[Sequence[str]] = None,
                prov: Optional[dict] = None) -> dict:
    p = fit.p
    iu = np.triu_indices(p, 1)
    pairs = [[int(a), int(b)] for a, b in zip(*iu) if fit.adjacency[a, b]]
    part = fit.partition
    return {
        "format": FIT_FORMAT,
        "method": fit.method,
        "hyperparameters": fit.hyper.as_dict(),
        "partition": None if part is None else {"p_x": part.p_x, "p_z": part.p_z},
        "labels": list(labels) if labels is not None else None,
        "p": p,
        "edges": pairs,
        "convergence": {"iterations": fit.iterations, "converged": fit.converged,
                        "inner_nonconverged": fit.inner_nonconverged,
                        "inverse_residual": fit.inverse_residual},
        "theta": _matrix(fit.Theta_hat),
        "W": _matrix(fit.W),
        "B_hat": _matrix(fit.B_hat),
        "W_rows": _matrix(fit.W_rows),
        "provenance": prov or provenance(),
    }


def fit_from_dict(d: dict):
    """Rebuild a fit; returns ``(fit, labels, provenance)``."""
    if d.get("format") != FIT_FORMAT:
        raise DataError(f"not a fit file (format {d.get('format')!r})")
    try:
        return _fit_from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed fit record ({exc!r})") from None


def _fit_from_dict(d):
    p = int(d["p"])
    A = np.zeros((p, p), dtype=np.int8)
    for a, b in d["edges"]:
        A[a, b] = A[b, a] = 1
    part = d["partition"]
    conv = d["convergence"]
    fit = CoglassoFit(
        W=np.array(d["W"], dtype=float), B_hat=np.array(d["B_hat"], dtype=float),
        Theta_hat=np.array(d["theta"], dtype=float), adjacency=A,
        hyper=Hyperparameters(**d["hyperparameters"]), iterations=int(conv["iterations"]),
        converged=bool(conv["converged"]),
        partition=None if part is None else LayerPartition(part["p_x"], part["p_z"]),
        method=d["method"], inverse_residual=float(conv["inverse_residual"]),
        inner_nonconverged=int(conv["inner_nonconverged"]),
        W_rows=None if d.get("W_rows") is None else np.array(d["W_rows"], dtype=float))
    return fit, d.get("labels"), d.get("provenance", {})


def save_fit(fit: CoglassoFit, path, labels=None, prov: Optional[dict] = None):
    Path(path).write_text(json.dumps(fit_to_dict(fit, labels, prov), indent=1) + "\n")


def load_fit(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such fit file")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None
    try:
        return fit_from_dict(d)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


# --------------------------------------------------------------------------- networks

def partial_correlations(theta, convention: str = "paper") -> np.ndarray:
    """``theta_ij / sqrt(theta_ii theta_jj)``; the ``standard`` convention negates it.

    The diagonal is set to 1 under both conventions.
    """
    if convention not in CONVENTIONS:
        raise ParameterError(f"unknown sign convention {convention!r}; use one of {CONVENTIONS}")
    theta = np.asarray(theta, dtype=float)
    d = np.diag(theta)
    P = theta / np.sqrt(np.outer(d, d))
    if convention == "standard":
        P = -P
    np.fill_diagonal(P, 1.0)
    return P


def quartile_ranks(weights) -> np.ndarray:
    """Rank 1 (weakest) to 4 (strongest) by the quartiles of ``|weights|``."""
    w = np.abs(np.asarray(weights, dtype=float))
    if w.size == 0:
        return np.zeros(0, dtype=np.int64)
    cuts = np.quantile(w, [0.25, 0.5, 0.75])
    return np.searchsorted(cuts, w, side="left").astype(np.int64) + 1


@dataclass
class NetworkExport:
    nodes: list
    layers: list
    edges: list
    hyperparameters: dict
    sign_convention: str = "paper"
    provenance: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"format": NETWORK_FORMAT, "nodes": [{"label": n, "layer": l} for n, l in
                                                    zip(self.nodes, self.layers)],
                "edges": [{"a": a, "b": b, "weight": w, "sign": s, "quartile": q}
                          for a, b, w, s, q in self.edges],
                "hyperparameters": self.hyperparameters,
                "sign_convention": self.sign_convention, "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkExport":
        if d.get("format") != NETWORK_FORMAT:
            raise DataError(f"not a network file (format {d.get('format')!r})")
        return cls([n["label"] for n in d["nodes"]], [n["layer"] for n in d["nodes"]],
                   [(e["a"], e["b"], e["weight"], e["sign"], e["quartile"]) for e in d["edges"]],
                   d["hyperparameters"], d["sign_convention"], d["provenance"])

    def adjacency(self) -> np.ndarray:
        index = {n: k for k, n in enumerate(self.nodes)}
        A = np.zeros((len(self.nodes),) * 2, dtype=np.int8)
        for a, b, *_ in self.edges:
            A[index[a], index[b]] = A[index[b], index[a]] = 1
        return A

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=1) + "\n"

    def to_edgelist(self) -> str:
        lay = dict(zip(self.nodes, self.layers))
        lines = ["node_a\tnode_b\tlayer_a\tlayer_b\tweight\tquartile"]
        lines += [f"{a}\t{b}\t{lay[a]}\t{lay[b]}\t{w!r}\t{q}" for a, b, w, _, q in self.edges]
        return "\n".join(lines) + "\n"

    def to_graph(self):
        import networkx as nx

        g = nx.Graph(sign_convention=self.sign_convention,
                     **{k: str(v) for k, v in self.hyperparameters.items()})
        for n, l in zip(self.nodes, self.layers):
            g.add_node(n, layer=l)
        for a, b, w, s, q in self.edges:
            g.add_edge(a, b, weight=w, sign=s, quartile=q)
        return g

    def to_graphml(self) -> str:
        import networkx as nx

        return "\n".join(nx.generate_graphml(self.to_graph())) + "\n"


def network_from_fit(fit: CoglassoFit, labels: Optional[Sequence[str]] = None,
                     sign_convention: str = "paper", prov: Optional[dict] = None) -> NetworkExport:
    """Edges of ``fit.adjacency`` weighted by partial correlation."""
    p = fit.p
    part = fit.partition
    if labels is None:
        labels = default_labels(part) if part else [f"V{j + 1}" for j in range(p)]
    if len(labels) != p:
        raise ParameterError(f"{len(labels)} labels for {p} variables")
    # glasso fits carry no partition and are exported as a single layer
    layers = ["X" if part is None or k < part.p_x else "Z" for k in range(p)]
    P = partial_correlations(fit.Theta_hat, sign_convention)
    iu = np.triu_indices(p, 1)
    pairs = [(a, b) for a, b in zip(*iu) if fit.adjacency[a, b]]
    w = np.array([P[a, b] for a, b in pairs])
    q = quartile_ranks(w)
    edges = [(labels[a], labels[b], float(P[a, b]), int(np.sign(P[a, b])), int(qk))
             for (a, b), qk in zip(pairs, q)]
    return NetworkExport(list(labels), layers, edges, fit.hyper.as_dict(), sign_convention,
                         prov or provenance())


def export_network(fit: CoglassoFit, labels=None, format: str = "json",
                   sign_convention: str = "paper", path=None, prov: Optional[dict] = None) -> str:
    """Serialize the network of ``fit``; writes ``path`` when given and returns the text."""
    if format not in FORMATS:
        raise ParameterError(f"unknown export format {format!r}; use one of {FORMATS}")
    net = network_from_fit(fit, labels, sign_convention, prov)
    text = {"json": net.to_json, "edgelist": net.to_edgelist, "graphml": net.to_graphml}[format]()
    if path is not None:
        Path(path).write_text(text)
    return text


def load_network(path) -> NetworkExport:
    path = Path(path)
    try:
        return NetworkExport.from_dict(json.loads(path.read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"{path}: cannot read network ({exc})") from None


# --------------------------------------------------------------------------- reports

def write_report(report, outdir) -> dict:
    """Write ``summary.json``, ``table.csv`` and ``runtime.json`` into ``outdir``.

    The first two are deterministic given the seed; timings live only in
    the third.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"summary": out / "summary.json", "table": out / "table.csv", "runtime": out / "runtime.json"}
    paths["summary"].write_text(report.summary_json())
    paths["table"].write_text(report.to_csv())
    paths["runtime"].write_text(json.dumps(report.runtime, indent=1) + "\n")
    return paths
