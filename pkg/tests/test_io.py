import json

import networkx as nx
import numpy as np
import pytest

from coglasso.core import CoglassoFit, Hyperparameters, LayerPartition
from coglasso.exceptions import DataError, ParameterError
from coglasso.io import (DatasetSpec, config_hash, export_network, fit_from_dict, fit_to_dict,
                         load_config, load_dataset, load_fit, load_network, network_from_fit,
                         partial_correlations, quartile_ranks, read_table, save_fit, write_table)
from coglasso.solver import fit


def _write(path, X, labels, delim=","):
    write_table(path, X, labels, delim)
    return str(path)


@pytest.fixture
def fitted():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((40, 6)) @ (np.eye(6) + 0.4 * np.diag(np.ones(5), 1))
    S = np.corrcoef(X, rowvar=False)
    return fit(S, Hyperparameters(0.1, 0.05, 0.5), LayerPartition(4, 2))


def test_two_files(tmp_path):
    rng = np.random.default_rng(0)
    X, Z = rng.standard_normal((50, 40)), rng.standard_normal((50, 20))
    fx = _write(tmp_path / "x.csv", X, [f"g{j}" for j in range(40)])
    fz = _write(tmp_path / "z.csv", Z, [f"m{j}" for j in range(20)])
    data, part, labels = load_dataset(DatasetSpec((fx, fz)))
    assert data.shape == (50, 60) and part == LayerPartition(40, 20)
    assert labels[0] == "g0" and labels[40] == "m0"
    assert np.array_equal(data, np.hstack([X, Z]))


def test_row_count_mismatch(tmp_path):
    fx = _write(tmp_path / "x.csv", np.zeros((5, 2)), ["a", "b"])
    fz = _write(tmp_path / "z.csv", np.zeros((4, 2)), ["c", "d"])
    with pytest.raises(DataError, match="5 rows.*4 rows"):
        load_dataset(DatasetSpec((fx, fz)))


def test_single_file_split(tmp_path):
    X = np.random.default_rng(2).standard_normal((30, 238))
    f = _write(tmp_path / "all.tsv", X, [f"v{j}" for j in range(238)], "\t")
    data, part, labels = load_dataset(DatasetSpec(f, p_x=162))
    assert (part.p_x, part.p_z) == (162, 76) and data.shape == (30, 238)
    with pytest.raises(DataError):
        load_dataset(DatasetSpec(f, p_x=238))


def test_spec_validation():
    with pytest.raises(ParameterError):
        DatasetSpec("a.csv")
    with pytest.raises(ParameterError):
        DatasetSpec(("a.csv", "b.csv"), p_x=3)


def test_parse_errors_have_locators(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("a,b,c\n1,2,3\n4,5\n")
    with pytest.raises(DataError, match="row 3 has 2 fields"):
        read_table(f)
    f.write_text("a\tb\n1\t2\n3\tfoo\n")
    with pytest.raises(DataError, match=r"row 3, column 2 \('b'\).*'foo'"):
        read_table(f)
    f.write_text("a,b\n")
    with pytest.raises(DataError, match="no data rows"):
        read_table(f)
    with pytest.raises(DataError, match="no such file"):
        read_table(tmp_path / "missing.csv")


def test_headerless_table(tmp_path):
    f = tmp_path / "h.csv"
    f.write_text("1,2\n3,4\n")
    labels, X = read_table(f, header=False)
    assert labels == ["V1", "V2"] and X.tolist() == [[1, 2], [3, 4]]


def test_partial_correlation_conventions():
    theta = np.array([[2.0, -1.0], [-1.0, 2.0]])
    assert partial_correlations(theta, "paper")[0, 1] == -0.5
    assert partial_correlations(theta, "standard")[0, 1] == 0.5
    with pytest.raises(ParameterError):
        partial_correlations(theta, "other")


def test_quartile_ranks():
    q = quartile_ranks([0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, 0.8])
    assert q.tolist() == [1, 1, 2, 2, 3, 3, 4, 4]
    assert quartile_ranks([]).size == 0


def test_empty_graph_edgelist():
    f = fit(np.eye(3), Hyperparameters(0.2, 0.2, 0.0), LayerPartition(2, 1))
    text = export_network(f, format="edgelist")
    assert text == "node_a\tnode_b\tlayer_a\tlayer_b\tweight\tquartile\n"


def test_network_json_round_trip(tmp_path, fitted):
    path = tmp_path / "net.json"
    export_network(fitted, format="json", path=path)
    net = load_network(path)
    orig = network_from_fit(fitted)
    assert np.array_equal(net.adjacency(), fitted.adjacency)
    assert net.edges == orig.edges
    assert net.as_dict() == orig.as_dict()


def test_network_graphml(fitted):
    g = nx.parse_graphml(export_network(fitted, format="graphml"))
    assert g.number_of_edges() == fitted.edge_count()
    assert g.nodes["X1"]["layer"] == "X" and g.nodes["Z1"]["layer"] == "Z"
    a, b, d = next(iter(g.edges(data=True)))
    assert set(d) >= {"weight", "quartile", "sign"}


def test_network_weights_follow_convention(fitted):
    paper = network_from_fit(fitted, sign_convention="paper")
    std = network_from_fit(fitted, sign_convention="standard")
    assert [e[2] for e in paper.edges] == [-e[2] for e in std.edges]
    assert all(1 <= e[4] <= 4 for e in paper.edges)


def test_unknown_format(fitted):
    with pytest.raises(ParameterError):
        export_network(fitted, format="dot")


def test_fit_round_trip_exact(tmp_path, fitted):
    path = tmp_path / "fit.json"
    save_fit(fitted, path, labels=list("abcdef"), prov={"seed": 3, "version": "x", "config_hash": "h"})
    back, labels, prov = load_fit(path)
    for name in ("W", "B_hat", "Theta_hat", "adjacency", "W_rows"):
        assert np.array_equal(getattr(back, name), getattr(fitted, name))
    assert back.hyper == fitted.hyper and back.partition == fitted.partition
    assert (back.iterations, back.converged, back.method) == (fitted.iterations, fitted.converged, "coglasso")
    assert labels == list("abcdef") and prov["seed"] == 3


def test_fit_file_errors(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(DataError):
        load_fit(p)
    p.write_text(json.dumps({"format": "other"}))
    with pytest.raises(DataError):
        load_fit(p)
    with pytest.raises(DataError):
        fit_from_dict({"format": "coglasso-fit/1"})


def test_glasso_fit_serializes():
    from coglasso.solver import fit_glasso

    f = fit_glasso(np.array([[1.0, 0.5], [0.5, 1.0]]), 0.1)
    back = fit_from_dict(json.loads(json.dumps(fit_to_dict(f))))[0]
    assert back.partition is None and back.method == "glasso"
    assert network_from_fit(back).layers == ["X", "X"]


def test_config(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("lambda-w: 0.3\nseed: 4\n")
    assert load_config(p) == {"lambda_w": 0.3, "seed": 4}
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    p.write_text("- 1\n- 2\n")
    with pytest.raises(DataError):
        load_config(p)
