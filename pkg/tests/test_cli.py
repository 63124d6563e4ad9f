import json

import pytest

from flatforms.cli import main
from flatforms.instances import instance_to_json
from flatforms.mixed import FiberModel
from flatforms.smoothing import partition_linear

from test_mixed import worked_edge, worked_edge_fiber


# a two-leaf edge written out by hand, the smallest interesting file
EDGE2 = {
    "version": 1,
    "complex": [[0, 1]],
    "leaves": [["p", 0, 1], ["q", 1, 1]],
    "epsilon": "1",
    "heights": {"p": {"0": "0", "1": "0"}, "q": {"0": "3", "1": "3"}},
    "coefficients": {"0": {"q<-p": [["1"]]},
                     "1": {"q<-p": [["1"]]},
                     "0,1": {}},
}


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip().startswith("{") else None


def edge_file(tmp_path, with_fiber=True, partition=None):
    A = worked_edge()
    data = instance_to_json(A.S, A.L, A)
    data["version"] = 1
    if with_fiber:
        data["fiber_model"] = worked_edge_fiber().to_json()
    if partition is not None:
        data["partition"] = partition(A.S).to_json()
    path = tmp_path / "edge.json"
    path.write_text(json.dumps(data))
    return path


def test_flow_interior_start_reaches_top_vertex(capsys):
    code, rep = run(capsys, "flow", "--k", "2", "--start", "1/3,1/3,1/3")
    assert code == 0
    t = rep["checks"]["trajectory"]
    assert t["limit_vertex"] == 2
    assert t["height_monotone"] is True
    assert len(t["points"]) == len(t["times"])


def test_flow_backward_reaches_bottom_vertex(capsys):
    code, rep = run(capsys, "flow", "--k", "2", "--start", "1/3,1/3,1/3",
                    "--backward")
    assert code == 0
    assert rep["checks"]["trajectory"]["limit_vertex"] == 0


def test_flow_rejects_non_barycentric_start(capsys):
    assert main(["flow", "--k", "2", "--start", "1/2,1/2,1/2"]) == 2


def test_flow_sweep_is_deterministic(capsys):
    code, rep1 = run(capsys, "flow", "--k", "3", "--sweep", "4", "--seed", "9")
    assert code == 0
    code, rep2 = run(capsys, "flow", "--k", "3", "--sweep", "4", "--seed", "9")
    assert code == 0
    assert rep1["checks"] == rep2["checks"]
    assert all(r["limit_vertex"] == 3 for r in rep1["checks"]["runs"])


def test_validate_two_leaf_edge(capsys, tmp_path):
    path = tmp_path / "two.json"
    path.write_text(json.dumps(EDGE2))
    code, rep = run(capsys, "validate", "--instance", str(path))
    assert code == 0
    assert rep["status"] == "pass"


def test_validate_names_forbidden_block(capsys, tmp_path):
    bad = json.loads(json.dumps(EDGE2))
    bad["coefficients"]["0"]["p<-q"] = [["1"]]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    code, rep = run(capsys, "validate", "--instance", str(path))
    assert code == 1
    assert any("forbidden block p<-q" in c for c in rep["certificates"])


def test_version_field_required(capsys, tmp_path):
    nover = {k: v for k, v in EDGE2.items() if k != "version"}
    path = tmp_path / "nover.json"
    path.write_text(json.dumps(nover))
    assert main(["validate", "--instance", str(path)]) == 2


def test_missing_file_is_input_error(capsys, tmp_path):
    assert main(["validate", "--instance", str(tmp_path / "nope.json")]) == 2


def test_extend_writes_back_completed_file(capsys, tmp_path):
    A = worked_edge()
    data = instance_to_json(A.S, A.L, A)
    data["version"] = 1
    original_edge = data["coefficients"]["0,1"]
    del data["coefficients"]["0,1"]
    path = tmp_path / "partial.json"
    path.write_text(json.dumps(data))

    code, rep = run(capsys, "validate", "--instance", str(path))
    assert code == 1  # incomplete

    code, rep = run(capsys, "extend", "--instance", str(path))
    assert code == 0
    assert rep["checks"]["filled"] == ["0,1"]
    assert rep["checks"]["written"] is True

    completed = json.loads(path.read_text())
    assert completed["coefficients"]["0,1"] == original_edge
    assert main(["validate", "--instance", str(path)]) == 0


def test_extend_requires_a_file(capsys):
    assert main(["extend", "--seed", "3"]) == 2


def test_pipeline_on_generated_instance(capsys):
    for cmd in ("validate", "build-aprime", "build-iprime",
                "igusa", "holonomy", "homology"):
        code, rep = run(capsys, cmd, "--seed", "5")
        assert code == 0, (cmd, rep["certificates"])


def test_smooth_default_partition(capsys, tmp_path):
    path = edge_file(tmp_path)
    code, rep = run(capsys, "smooth", "--instance", str(path))
    assert code == 0
    assert rep["checks"]["partition"] == "default"
    assert rep["checks"]["flat"] == "ok"
    assert rep["checks"]["chain"] == "ok"


def test_smooth_reports_linear_partition_failure(capsys, tmp_path):
    path = edge_file(tmp_path, partition=partition_linear)
    code, rep = run(capsys, "smooth", "--instance", str(path))
    assert code == 1
    assert rep["status"] == "fail"
    assert rep["checks"]["partition"] == "from file"
    assert rep["checks"]["first_order"] != "ok"


def test_homology_with_fiber_model(capsys, tmp_path):
    path = edge_file(tmp_path)
    code, rep = run(capsys, "homology", "--instance", str(path))
    assert code == 0
    assert rep["checks"]["quasi_iso"] == "ok"
    assert rep["checks"]["omega_betti"] == {"0": 1, "1": 0}


def test_report_file_matches_stdout(capsys, tmp_path):
    out = tmp_path / "report.json"
    code, rep = run(capsys, "igusa", "--seed", "2", "--report", str(out))
    assert code == 0
    assert json.loads(out.read_text()) == rep


def test_fiber_model_json_round_trip():
    FM = worked_edge_fiber()
    FM2 = FiberModel.from_json(FM.to_json())
    assert FM2.omega_basis == FM.omega_basis
    assert FM2.omega_degree == FM.omega_degree
    assert FM2.D == FM.D
    assert FM2.I == FM.I
    assert FM2.eta == FM.eta
