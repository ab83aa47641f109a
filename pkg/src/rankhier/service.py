"""HTTP facade over the application layer.

Every handler is a plain function taking and returning JSON-compatible
dicts, so the command-line client can call them in-process or POST the
same payloads to a running server.  Start one with::

    uvicorn rankhier.service:app
"""

from __future__ import annotations

import time

import numpy as np
from pydantic import BaseModel, Field

from . import __version__, apps
from .conic import ConicProgram
from .graphs import Graph, encode_graph6, parse_graph6
from .hierarchy import LevelSpec, build, rank_parameter_sweep
from .linalg import COMPLEX, REAL, fmat
from .oracles import sample_pure_states
from .problem import EQ, LinearFunctional, RankSdp
from .solver import SolverConfig, backend_from_env, solve


class GraphIn(BaseModel):
    graph6: str | None = None
    n_vertices: int | None = None
    edges: list[tuple[int, int]] | None = None


class LevelIn(BaseModel):
    levels: list[str] = Field(default_factory=lambda: ["1", "2"])
    ppt: bool = True
    tol: float | None = None
    field: str | None = None


class MaxcutRequest(BaseModel):
    graph: GraphIn
    run: LevelIn = Field(default_factory=LevelIn)
    brute: bool = True


class BooleanRequest(BaseModel):
    q: list[list[float]]
    c: list[float]
    sense: str = "max"
    least_squares: bool = False
    a: list[list[float]] | None = None
    b: list[float] | None = None
    run: LevelIn = Field(default_factory=LevelIn)


class ThetaRequest(BaseModel):
    graph: GraphIn


class OrthrepRequest(BaseModel):
    graph: GraphIn
    k: int
    field: str = "both"  # real | complex | both
    contextuality: bool = False


class ComplexMatrix(BaseModel):
    re: list[list[float]]
    im: list[list[float]] | None = None

    def to_array(self) -> np.ndarray:
        m = np.asarray(self.re, dtype=float).astype(complex)
        if self.im is not None:
            m = m + 1j * np.asarray(self.im, dtype=float)
        return m

    @staticmethod
    def from_array(m: np.ndarray) -> "ComplexMatrix":
        m = np.asarray(m)
        return ComplexMatrix(re=np.real(m).tolist(),
                             im=np.imag(m).tolist())


class UnfaithfulRequest(BaseModel):
    rho: ComplexMatrix | None = None
    reference: bool = False
    run: LevelIn = Field(default_factory=LevelIn)
    sample_starts: int = 32
    seed: int = 7


class MixedUnitaryRequest(BaseModel):
    choi: ComplexMatrix


class Measurement(BaseModel):
    m: ComplexMatrix
    t: float


class PureStateRequest(BaseModel):
    x: ComplexMatrix
    measurements: list[Measurement] = Field(default_factory=list)
    field: str = "complex"
    run: LevelIn = Field(default_factory=LevelIn)
    seed: int = 0


class SolveRequest(BaseModel):
    program: dict  # serialized ConicProgram
    tol: float | None = None


class SweepRequest(BaseModel):
    problem: dict  # serialized RankSdp
    ks: list[float]
    tol: float | None = None


def _graph_of(gi: GraphIn) -> Graph:
    if gi.graph6 is not None:
        return parse_graph6(gi.graph6)
    if gi.n_vertices is None or gi.edges is None:
        raise ValueError("provide either graph6 or n_vertices plus edges")
    return Graph.from_edges(gi.n_vertices, gi.edges)


def _cfg(tol: float | None) -> SolverConfig:
    cfg = SolverConfig()
    if tol is not None:
        cfg = SolverConfig(feas_tol=tol, gap_tol=tol)
    return backend_from_env(cfg)


def _level_spec(name: str, run: LevelIn) -> LevelSpec:
    fld = {None: None, "real": REAL, "complex": COMPLEX}[run.field]
    if name in ("1", "L1"):
        return LevelSpec("L1", ppt=run.ppt, field_override=fld)
    if name in ("2", "L2", "L2Reduced"):
        return LevelSpec("L2Reduced", ppt=run.ppt, field_override=fld)
    if name.isdigit():
        return LevelSpec("LN", n_parties=int(name), ppt=run.ppt,
                         field_override=fld)
    raise ValueError(f"unknown level {name!r}")


def _report(instance_id: str, config: dict) -> dict:
    return {"instance": instance_id, "levels": {}, "oracles": {},
            "verdicts": {}, "config": config, "version": __version__}


def _record(report: dict, name: str, bound: apps.Bound, dt: float):
    entry = bound.to_json_dict()
    entry["wall_time"] = dt
    report["levels"][name] = entry


def maxcut_handler(req: MaxcutRequest) -> dict:
    g = _graph_of(req.graph)
    cfg = _cfg(req.run.tol)
    rep = _report(f"maxcut:{encode_graph6(g)}",
                  req.model_dump(exclude={"graph"}))
    for name in req.run.levels:
        t0 = time.monotonic()
        b = apps.maxcut_bound(g, _level_spec(name, req.run), cfg)
        _record(rep, name, b, time.monotonic() - t0)
    if req.brute and g.n_vertices <= 24:
        rep["oracles"]["bruteforce"] = apps.maxcut_bruteforce(g)
    return rep


def boolean_handler(req: BooleanRequest) -> dict:
    cfg = _cfg(req.run.tol)
    if req.least_squares:
        if req.a is None or req.b is None:
            raise ValueError("least_squares mode needs matrices a and b")
        a = np.asarray(req.a, dtype=float)
        b_vec = np.asarray(req.b, dtype=float)
        rep = _report("bls", req.model_dump(exclude={"a", "b"}))
        for name in req.run.levels:
            t0 = time.monotonic()
            bd = apps.boolean_least_squares(a, b_vec,
                                            _level_spec(name, req.run), cfg)
            _record(rep, name, bd, time.monotonic() - t0)
        return rep
    q = np.asarray(req.q, dtype=float)
    c = np.asarray(req.c, dtype=float)
    rep = _report("boolean", req.model_dump(exclude={"q", "c"}))
    for name in req.run.levels:
        t0 = time.monotonic()
        bd = apps.pseudo_boolean_bound(q, c, _level_spec(name, req.run),
                                       req.sense, cfg)
        _record(rep, name, bd, time.monotonic() - t0)
    if q.shape[0] <= 20:
        from .oracles import enumerate_boolean
        res = enumerate_boolean((q, c, 0.0), q.shape[0], sense=req.sense)
        rep["oracles"]["enumeration"] = res.value
    return rep


def theta_handler(req: ThetaRequest) -> dict:
    g = _graph_of(req.graph)
    rep = _report(f"theta:{encode_graph6(g)}", {})
    t0 = time.monotonic()
    rep["levels"]["1"] = {"value": apps.lovasz_theta(g, _cfg(None)),
                          "wall_time": time.monotonic() - t0}
    return rep


def orthrep_handler(req: OrthrepRequest) -> dict:
    g = _graph_of(req.graph)
    cfg = _cfg(None)
    fields = {"real": [REAL], "complex": [COMPLEX],
              "both": [REAL, COMPLEX]}[req.field]
    rep = _report(f"orthrep:{encode_graph6(g)}:k={req.k}",
                  req.model_dump(exclude={"graph"}))
    for fld in fields:
        t0 = time.monotonic()
        r = apps.orthonormal_rep_check(g, req.k, fld, cfg,
                                       contextuality=req.contextuality)
        d = r.to_json_dict()
        d["wall_time"] = time.monotonic() - t0
        rep["verdicts"][fld] = d
    return rep


def unfaithful_handler(req: UnfaithfulRequest) -> dict:
    if req.reference:
        rho = apps.reference_unfaithful_state().data
    elif req.rho is not None:
        rho = req.rho.to_array()
    else:
        raise ValueError("provide rho or set reference=true")
    cfg = _cfg(req.run.tol)
    rep = _report("unfaithful", req.model_dump(exclude={"rho"}))
    for name in req.run.levels:
        t0 = time.monotonic()
        v = apps.unfaithfulness_check(
            rho, _level_spec(name, req.run), cfg,
            sample_starts=req.sample_starts, seed=req.seed)
        d = v.to_json_dict()
        d["wall_time"] = time.monotonic() - t0
        rep["levels"][name] = d
        rep["verdicts"][name] = v.verdict
        if v.lower_bound is not None:
            rep["oracles"]["gradient_search"] = v.lower_bound
    return rep


def mixed_unitary_handler(req: MixedUnitaryRequest) -> dict:
    rep = _report("mixed-unitary", {})
    t0 = time.monotonic()
    r = apps.mixed_unitary_check(req.choi.to_array(), _cfg(None))
    d = r.to_json_dict()
    d["wall_time"] = time.monotonic() - t0
    rep["verdicts"]["mixed_unitary"] = d
    return rep


def purestate_handler(req: PureStateRequest) -> dict:
    fld = COMPLEX if req.field == "complex" else REAL
    x = req.x.to_array()
    if fld == REAL:
        x = np.real(x)
    meas = [(fmat(np.real(m.m.to_array()) if fld == REAL
                  else m.m.to_array(), field=fld), m.t)
            for m in req.measurements]
    cfg = _cfg(req.run.tol)
    rep = _report("purestate", req.model_dump(exclude={"x", "measurements"}))
    for name in req.run.levels:
        t0 = time.monotonic()
        b = apps.pure_state_opt(x, meas, _level_spec(name, req.run), cfg,
                                fld=fld)
        _record(rep, name, b, time.monotonic() - t0)
    n = x.shape[0]
    p = RankSdp(fld, n, fmat(x, field=fld),
                constraints=tuple(LinearFunctional(m, t, EQ)
                                  for m, t in meas),
                rank_bound_k=1.0)
    res = sample_pure_states(p, seed=req.seed)
    rep["oracles"]["ascent"] = {"value": res.value, "feasible": res.feasible}
    return rep


def solve_handler(req: SolveRequest) -> dict:
    cp = ConicProgram.from_json_dict(req.program)
    sol = solve(cp, _cfg(req.tol))
    return sol.to_json_dict()


def sweep_handler(req: SweepRequest) -> dict:
    p = RankSdp.from_json_dict(req.problem)
    pairs = rank_parameter_sweep(p, req.ks, cfg=_cfg(req.tol))
    return {"instance": "sweep-k", "values": [[k, v] for k, v in pairs],
            "version": __version__}


def build_app():
    from fastapi import FastAPI, HTTPException

    app = FastAPI(title="rankhier", version=__version__)

    def wrap(fn, req):
        try:
            return fn(req)
        except (ValueError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/maxcut")
    def maxcut(req: MaxcutRequest):
        return wrap(maxcut_handler, req)

    @app.post("/boolean")
    def boolean(req: BooleanRequest):
        return wrap(boolean_handler, req)

    @app.post("/theta")
    def theta(req: ThetaRequest):
        return wrap(theta_handler, req)

    @app.post("/orthrep")
    def orthrep(req: OrthrepRequest):
        return wrap(orthrep_handler, req)

    @app.post("/unfaithful")
    def unfaithful(req: UnfaithfulRequest):
        return wrap(unfaithful_handler, req)

    @app.post("/mixed-unitary")
    def mixed_unitary(req: MixedUnitaryRequest):
        return wrap(mixed_unitary_handler, req)

    @app.post("/purestate")
    def purestate(req: PureStateRequest):
        return wrap(purestate_handler, req)

    @app.post("/solve")
    def solve_ep(req: SolveRequest):
        return wrap(solve_handler, req)

    @app.post("/sweep-k")
    def sweep(req: SweepRequest):
        return wrap(sweep_handler, req)

    return app


app = build_app()
