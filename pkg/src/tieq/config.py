"""Scenario files (TOML) and their dataclass form."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, asdict

import tomli

from .model import CobbDouglas, Linear, OgEconomy, OgMixture


class ScenarioError(ValueError):
    pass


@dataclass
class EconomyCfg:
    delta: float = 0.06
    rho: float = 0.02
    pi: float = 0.04


@dataclass
class TechnologyCfg:
    kind: str = "cobb_douglas"       # cobb_douglas | linear
    A: float = 1.0
    alpha: float = 0.3


@dataclass
class SolverCfg:
    eps: float = 0.0                 # 0 -> 1e-4 (1 + kbar)
    rtol: float = 1e-11
    atol: float = 1e-13
    n_grid: int = 600
    omega_lo: float = 0.75           # requested Omega as fractions of kbar
    omega_hi: float = 1.25
    n_out: int = 101                 # rows of policy.csv


@dataclass
class RunCfg:
    kbar: list = field(default_factory=list)           # explicit steady states
    fractions: list = field(default_factory=lambda: [0.25, 0.5, 0.75])
    select: str = "list"             # list | fractions | lrp
    k0_frac: float = 0.8
    horizon: float = 400.0
    n_time: int = 801


@dataclass
class VerifyCfg:
    ie_tol: float = 1e-5
    de_tol: float = 1e-5
    envelope_tol: float = 1e-4
    semigroup_tol: float = 1e-8
    argmax_cells: float = 1.0
    n_check: int = 9
    n_c: int = 1000


@dataclass
class FiscalCfg:
    variant: str = "optimal"
    taus: list = field(default_factory=lambda: [-40.0, -20.0, -10.0, 0.0, 10.0, 20.0])
    assets: list = field(default_factory=list)          # a(tau, 0) for tau < 0
    age_max: float = 100.0
    age_step: float = 0.5


@dataclass
class SweepCfg:
    n_kbar: int = 40
    fd_step: float = 0.02
    outside: float = 0.1             # relative margin of extra rows outside I


@dataclass
class OracleCfg:
    A: float = 1.0
    delta0: float = 0.10
    delta1: float = 0.05
    tau: float = 1.0


@dataclass
class Scenario:
    economy: EconomyCfg = field(default_factory=EconomyCfg)
    technology: TechnologyCfg = field(default_factory=TechnologyCfg)
    solver: SolverCfg = field(default_factory=SolverCfg)
    run: RunCfg = field(default_factory=RunCfg)
    verify: VerifyCfg = field(default_factory=VerifyCfg)
    fiscal: FiscalCfg = field(default_factory=FiscalCfg)
    sweep: SweepCfg = field(default_factory=SweepCfg)
    oracle: OracleCfg = field(default_factory=OracleCfg)
    name: str = "scenario"
    digest: str = ""

    def economy_obj(self) -> OgEconomy:
        e, t = self.economy, self.technology
        tech = CobbDouglas(t.A, t.alpha) if t.kind == "cobb_douglas" else Linear(t.A)
        return OgEconomy(OgMixture(e.delta, e.rho, e.pi), tech)

    def as_dict(self):
        return asdict(self)


_CLASSES = {"economy": EconomyCfg, "technology": TechnologyCfg, "solver": SolverCfg,
            "run": RunCfg, "verify": VerifyCfg, "fiscal": FiscalCfg, "sweep": SweepCfg,
            "oracle": OracleCfg}


def _fill(cls, table, where):
    known = {f.name: f for f in fields(cls)}
    kw = {}
    for key, val in table.items():
        if key not in known:
            raise ScenarioError(f"[{where}] unknown key {key!r}")
        default = getattr(cls(), key)
        if isinstance(default, float) and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if isinstance(default, list) and not isinstance(val, list):
            raise ScenarioError(f"[{where}] {key} must be a list")
        if not isinstance(default, list) and type(val) is not type(default):
            raise ScenarioError(f"[{where}] {key} must be {type(default).__name__}, got {val!r}")
        kw[key] = val
    return cls(**kw)


def _validate(sc: Scenario):
    for tname in ("solver", "verify"):
        for f in fields(_CLASSES[tname]):
            if f.name.endswith("tol") and not getattr(getattr(sc, tname), f.name) > 0:
                raise ScenarioError(f"[{tname}] {f.name} must be positive")
    if sc.solver.rtol <= 0 or sc.solver.atol <= 0 or sc.solver.eps < 0:
        raise ScenarioError("[solver] tolerances must be positive")
    if sc.technology.kind not in ("cobb_douglas", "linear"):
        raise ScenarioError(f"[technology] unknown kind {sc.technology.kind!r}")
    if sc.run.select not in ("list", "fractions", "lrp"):
        raise ScenarioError(f"[run] unknown select {sc.run.select!r}")
    if sc.fiscal.variant not in ("optimal", "egalitarian"):
        raise ScenarioError(f"[fiscal] unknown variant {sc.fiscal.variant!r}")
    if not 0 < sc.solver.omega_lo < 1 < sc.solver.omega_hi:
        raise ScenarioError("[solver] need omega_lo < 1 < omega_hi")
    try:
        sc.economy_obj()
    except ValueError as exc:
        raise ScenarioError(f"invalid economy: {exc}") from exc


def load_scenario(path) -> Scenario:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        data = tomli.loads(raw.decode("utf-8"))
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return scenario_from_dict(data, name=str(data.get("name", path)),
                              digest=hashlib.sha256(raw).hexdigest())


def scenario_from_dict(data: dict, name="scenario", digest="") -> Scenario:
    kw = {}
    for key, val in data.items():
        if key == "name":
            continue
        if key not in _CLASSES:
            raise ScenarioError(f"unknown table [{key}]")
        if not isinstance(val, dict):
            raise ScenarioError(f"[{key}] must be a table")
        kw[key] = _fill(_CLASSES[key], val, key)
    sc = Scenario(**kw, name=name, digest=digest)
    _validate(sc)
    return sc
