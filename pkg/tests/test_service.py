import numpy as np
import pytest
from fastapi.testclient import TestClient

from rankhier import service
from rankhier.conic import PSD, ProgramBuilder


@pytest.fixture(scope="module")
def client():
    return TestClient(service.build_app())


def eig_program_dict():
    b = ProgramBuilder("max")
    h = b.add_block(PSD, 2)
    b.add_objective_sym(h, np.diag([1.0, -1.0]))
    r = b.new_row(1.0)
    b.row_add_sym(r, h, np.eye(2))
    return b.build().to_json_dict()


class TestHandlers:
    def test_maxcut_report_shape(self):
        req = service.MaxcutRequest(graph=service.GraphIn(graph6="Bw"))
        rep = service.maxcut_handler(req)
        assert rep["instance"] == "maxcut:Bw"
        assert rep["oracles"]["bruteforce"] == 2
        assert rep["levels"]["2"]["value"] == pytest.approx(2.0, abs=1e-5)
        assert rep["levels"]["1"]["value"] == pytest.approx(2.25, abs=1e-5)
        assert "wall_time" in rep["levels"]["2"]

    def test_maxcut_edge_list_input(self):
        req = service.MaxcutRequest(
            graph=service.GraphIn(n_vertices=2, edges=[(0, 1)]),
            brute=False)
        rep = service.maxcut_handler(req)
        assert rep["levels"]["2"]["value"] == pytest.approx(1.0, abs=1e-5)
        assert rep["oracles"] == {}

    def test_boolean_least_squares(self):
        req = service.BooleanRequest(
            q=[[0.0]], c=[0.0], least_squares=True,
            a=[[1.0, 0.0], [0.0, 1.0]], b=[0.0, 0.0],
            run=service.LevelIn(levels=["2"]))
        rep = service.boolean_handler(req)
        assert rep["levels"]["2"]["value"] == pytest.approx(2.0, abs=1e-5)

    def test_boolean_quadratic_with_oracle(self):
        req = service.BooleanRequest(
            q=[[0.0, 0.5], [0.5, 0.0]], c=[0.0, 0.0],
            run=service.LevelIn(levels=["2"]))
        rep = service.boolean_handler(req)
        assert rep["oracles"]["enumeration"] == pytest.approx(1.0)
        assert rep["levels"]["2"]["value"] >= 1.0 - 1e-6

    def test_theta_handler(self):
        rep = service.theta_handler(
            service.ThetaRequest(graph=service.GraphIn(graph6="Bw")))
        assert rep["levels"]["1"]["value"] == pytest.approx(1.0, abs=1e-6)

    def test_orthrep_both_fields(self):
        req = service.OrthrepRequest(
            graph=service.GraphIn(n_vertices=3, edges=[]), k=2)
        rep = service.orthrep_handler(req)
        assert rep["verdicts"]["real"]["verdict"] == "ExcludedAtLevel2"
        assert rep["verdicts"]["complex"]["verdict"] == "ExcludedAtLevel2"

    def test_unfaithful_reference_l1(self):
        req = service.UnfaithfulRequest(
            reference=True, sample_starts=0,
            run=service.LevelIn(levels=["1"]))
        rep = service.unfaithful_handler(req)
        assert rep["levels"]["1"]["xi2t"] == pytest.approx(0.25063, abs=5e-4)

    def test_unfaithful_needs_state(self):
        with pytest.raises(ValueError):
            service.unfaithful_handler(service.UnfaithfulRequest())

    def test_mixed_unitary(self):
        n = 2
        choi = np.zeros((4, 4))
        choi[0, 0] = choi[0, 3] = choi[3, 0] = choi[3, 3] = 0.5
        rep = service.mixed_unitary_handler(service.MixedUnitaryRequest(
            choi=service.ComplexMatrix.from_array(choi)))
        assert rep["verdicts"]["mixed_unitary"]["verdict"] == "Inconclusive"

    def test_purestate_with_oracle(self):
        req = service.PureStateRequest(
            x=service.ComplexMatrix(re=[[1.0, 0.0], [0.0, -1.0]]),
            run=service.LevelIn(levels=["2"]))
        rep = service.purestate_handler(req)
        assert rep["levels"]["2"]["value"] == pytest.approx(1.0, abs=1e-5)
        assert rep["oracles"]["ascent"]["value"] == pytest.approx(1.0,
                                                                  abs=1e-6)

    def test_solve_round_trip(self):
        rep = service.solve_handler(
            service.SolveRequest(program=eig_program_dict()))
        assert rep["status"] == "Optimal"
        assert rep["primal_value"] == pytest.approx(1.0, abs=1e-6)

    def test_sweep_handler(self):
        from rankhier.linalg import REAL, fmat
        from rankhier.problem import RankSdp
        rng = np.random.default_rng(0)
        c = rng.standard_normal((3, 3))
        p = RankSdp(REAL, 3, fmat((c + c.T) / 2, field=REAL))
        rep = service.sweep_handler(service.SweepRequest(
            problem=p.to_json_dict(), ks=[1.0, 2.0]))
        vals = [v for _k, v in rep["values"]]
        assert vals[1] >= vals[0] - 1e-7


class TestComplexMatrix:
    def test_round_trip(self):
        rng = np.random.default_rng(1)
        m = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        cm = service.ComplexMatrix.from_array(m)
        np.testing.assert_allclose(cm.to_array(), m, atol=0)

    def test_real_only(self):
        cm = service.ComplexMatrix(re=[[1.0, 2.0], [3.0, 4.0]])
        assert cm.to_array().dtype == complex
        np.testing.assert_allclose(cm.to_array().imag, 0.0, atol=0)


class TestHttp:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        assert r.json()["status"] == "ok"

    def test_maxcut_endpoint(self, client):
        r = client.post("/maxcut", json={"graph": {"graph6": "A_"}})
        assert r.status_code == 200
        assert r.json()["levels"]["2"]["value"] == pytest.approx(1.0,
                                                                 abs=1e-5)

    def test_bad_graph6_maps_to_422(self, client):
        r = client.post("/theta", json={"graph": {"graph6": "\x01bad"}})
        assert r.status_code == 422

    def test_missing_graph_maps_to_422(self, client):
        r = client.post("/maxcut", json={"graph": {}})
        assert r.status_code == 422

    def test_malformed_body_rejected(self, client):
        r = client.post("/orthrep", json={"graph": {"graph6": "A_"}})
        assert r.status_code == 422  # missing required k
