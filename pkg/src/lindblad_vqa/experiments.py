"""Configuration-driven experiment runner for the TFI benchmarks."""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np

from .ansatz import AnsatzProgram, apply, build_closed, build_open, grow_layers
from .liouvillian import CompiledLiouvillian, compile_liouvillian
from .linsolve import RegularizationConfig
from .models import build_open_tfi, build_tfi
from .oracle import (MAX_SPINS, SizeCapError, Trajectory, autocorrelation, exact_trajectory,
                     magnetization, superstate_fidelity, uhlmann_superstates)
from .superstate import SuperState, normalize_observable, purity, trace_of, vectorize
from .tdva import EstimatorConfig, tdva_step
from .vtc import VtcProblem, v_expand, vtc_step


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    n_spins: int = 3
    J: float = 1.0
    h: float = 1.0
    gamma: float = 0.0
    jump: str = "sigma_minus"
    boundary: str = "periodic"


@dataclass
class AnsatzConfig:
    family: str = "closed_1"          # closed_1 | closed_2 | open
    m: int = 2
    switch_to_m: int | None = None    # closed_1 only: grow to this many layers ...
    switch_time: float | None = None  # ... at this time
    compress: bool = True             # re-fit the grown ansatz to the current state
    free_factor: bool | None = None   # open only; None keeps the builder default


@dataclass
class EvolverConfig:
    kind: str = "tdva"                # tdva | vtc
    dt: float = 0.01
    t_max: float = 1.0
    integrator: str = "euler"
    regularization: RegularizationConfig = field(default_factory=RegularizationConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    n_expansion: int = 2
    a_method: str = "trace"           # open VTC runs; closed runs keep a fixed
    maxiter: int = 200
    record_every: int = 1
    seed: int = 0


@dataclass
class OutputConfig:
    metrics: list[str] = field(default_factory=lambda: ["default"])
    directory: str | None = None
    label: str = "run"


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    ansatz: AnsatzConfig = field(default_factory=AnsatzConfig)
    evolver: EvolverConfig = field(default_factory=EvolverConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    observable_site: int = 1          # O(0) = sigma^y on this site (closed runs)
    magnetization_site: int = 0       # site of M_z (open runs)
    figure: str | None = None

    def validate(self):
        m, a, e = self.model, self.ansatz, self.evolver
        if m.n_spins < 1:
            raise ConfigError("n_spins must be >= 1")
        if m.n_spins > MAX_SPINS:
            raise SizeCapError(f"n_spins={m.n_spins} exceeds the cap of {MAX_SPINS}")
        if m.boundary not in ("open", "periodic"):
            raise ConfigError(f"unknown boundary {m.boundary!r}")
        if m.jump != "sigma_minus":
            raise ConfigError(f"unknown jump kind {m.jump!r}")
        if m.gamma < 0:
            raise ConfigError("gamma must be non-negative")
        if a.family not in ("closed_1", "closed_2", "open"):
            raise ConfigError(f"unknown ansatz family {a.family!r}")
        if a.m < 1:
            raise ConfigError("m must be >= 1")
        if a.family != "open" and m.gamma > 0:
            raise ConfigError("closed ansatz families need gamma = 0")
        if a.family == "open" and m.gamma == 0:
            raise ConfigError("the open ansatz needs gamma > 0")
        if a.switch_to_m is not None:
            if a.family != "closed_1":
                raise ConfigError("layer switching is supported for closed_1 only")
            if a.switch_time is None or a.switch_to_m < a.m:
                raise ConfigError("switch needs switch_time and switch_to_m >= m")
        if e.kind not in ("tdva", "vtc"):
            raise ConfigError(f"unknown evolver {e.kind!r}")
        if not e.t_max > 0:
            raise ConfigError("t_max must be positive")
        if not e.dt > 0:
            raise ConfigError("dt must be positive")
        if e.integrator not in ("euler", "rk4"):
            raise ConfigError(f"unknown integrator {e.integrator!r}")
        if e.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if not self.outputs.metrics:
            raise ConfigError("metrics must be non-empty")
        if not 0 <= self.observable_site < m.n_spins or not 0 <= self.magnetization_site < m.n_spins:
            raise ConfigError("observable or magnetization site out of range")
        unknown = set(self.outputs.metrics) - set(ALL_METRICS) - {"default"}
        if unknown:
            raise ConfigError(f"unknown metrics {sorted(unknown)}")
        return self


CLOSED_METRICS = ("C_re", "C_im", "C_exact", "C_abs_err", "infidelity")
OPEN_METRICS = ("Mz", "Mz_exact", "state_infidelity", "purity", "purity_exact", "trace")
ALL_METRICS = CLOSED_METRICS + OPEN_METRICS


# ------------------------------------------------------------ (de)serialization

def _from_dict(cls, data):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{cls.__name__} expects an object")
    names = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        sub = _NESTED.get((cls, k))
        kwargs[k] = _from_dict(sub, v) if sub is not None else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


_NESTED = {
    (ExperimentConfig, "model"): ModelConfig,
    (ExperimentConfig, "ansatz"): AnsatzConfig,
    (ExperimentConfig, "evolver"): EvolverConfig,
    (ExperimentConfig, "outputs"): OutputConfig,
    (EvolverConfig, "regularization"): RegularizationConfig,
    (EvolverConfig, "estimator"): EstimatorConfig,
}


def config_from_dict(data: dict) -> ExperimentConfig:
    return _from_dict(ExperimentConfig, data).validate()


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(cfg) -> dict:
    return asdict(cfg) if is_dataclass(cfg) else dict(cfg)


def with_override(data: dict, key: str, value) -> dict:
    """Copy of a config dict with a dotted key replaced."""
    out = json.loads(json.dumps(data))
    node = out
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out


# ------------------------------------------------------------ setup

@dataclass
class Setup:
    config: ExperimentConfig
    liouv: CompiledLiouvillian
    program: AnsatzProgram
    initial: SuperState
    picture: str


def build_model(cfg: ModelConfig, closed: bool):
    if closed:
        return build_tfi(cfg.n_spins, cfg.J, cfg.h, cfg.boundary)
    return build_open_tfi(cfg.n_spins, cfg.J, cfg.h, cfg.gamma, cfg.boundary)


def initial_observable(n: int, site: int) -> SuperState:
    """Unit-norm superstate of sigma^y on ``site``."""
    sy = np.array([[0, -1j], [1j, 0]])
    op = np.ones((1, 1))
    for j in reversed(range(n)):  # site 0 is the least significant tensor factor
        op = np.kron(op, sy if j == site else np.eye(2))
    return normalize_observable(op)[0]


def initial_density(n: int) -> SuperState:
    rho = np.zeros((2 ** n, 2 ** n))
    rho[0, 0] = 1.0
    return vectorize(rho)


def make_setup(cfg: ExperimentConfig) -> Setup:
    closed = cfg.ansatz.family != "open"
    model = build_model(cfg.model, closed)
    picture = "heisenberg" if closed else "schroedinger"
    liouv = compile_liouvillian(model, picture)
    if closed:
        init = initial_observable(cfg.model.n_spins, cfg.observable_site)
        prog = build_closed(liouv, cfg.ansatz.m, cfg.ansatz.family == "closed_2", init)
    else:
        init = initial_density(cfg.model.n_spins)
        prog = build_open(liouv, cfg.ansatz.m, init, cfg.ansatz.free_factor)
    return Setup(cfg, liouv, prog, init, picture)


def resolve_metrics(cfg: ExperimentConfig) -> list[str]:
    closed = cfg.ansatz.family != "open"
    if cfg.outputs.metrics == ["default"]:
        return list(CLOSED_METRICS if closed else OPEN_METRICS)
    allowed = CLOSED_METRICS if closed else OPEN_METRICS
    bad = [m for m in cfg.outputs.metrics if m not in allowed]
    if bad:
        raise ConfigError(f"metrics {bad} do not apply to the {cfg.ansatz.family} family")
    return list(cfg.outputs.metrics)


def compute_metrics(setup: Setup, trial: SuperState, exact: SuperState, names) -> dict[str, float]:
    out = {}
    cfg = setup.config
    if setup.picture == "heisenberg":
        c = autocorrelation(setup.initial, trial)
        ce = autocorrelation(setup.initial, exact)
        vals = {"C_re": c.real, "C_im": c.imag, "C_exact": ce.real, "C_abs_err": abs(c - ce),
                "infidelity": 1.0 - superstate_fidelity(exact, trial)}
    else:
        vals = {}
        site = cfg.magnetization_site
        if "Mz" in names:
            vals["Mz"] = magnetization(trial, site)
        if "Mz_exact" in names:
            vals["Mz_exact"] = magnetization(exact, site)
        if "state_infidelity" in names:
            vals["state_infidelity"] = 1.0 - uhlmann_superstates(exact, trial)
        vals["purity"] = purity(trial)
        vals["purity_exact"] = purity(exact)
        vals["trace"] = trace_of(trial).real
    for k in names:
        out[k] = float(vals[k])
    return out


def model_hash(setup: Setup) -> str:
    return hashlib.sha256(setup.liouv.to_text().encode()).hexdigest()[:16]


# ------------------------------------------------------------ run

def _compress(prog: AnsatzProgram, theta: np.ndarray, target: np.ndarray, maxiter: int) -> np.ndarray:
    """Maximize |<u(theta)|target>|^2 starting from theta (SLSQP)."""
    import scipy.optimize

    def cost(x):
        return 1.0 - abs(np.vdot(apply(prog, x).amplitudes, target)) ** 2

    res = scipy.optimize.minimize(cost, theta, method="SLSQP", options={"maxiter": maxiter, "ftol": 1e-14})
    return res.x if res.fun <= cost(theta) else theta


def run(cfg: ExperimentConfig, write: bool = True) -> Trajectory:
    cfg.validate()
    setup = make_setup(cfg)
    names = resolve_metrics(cfg)
    ev = cfg.evolver
    prog = setup.program
    n_steps = int(round(ev.t_max / ev.dt))
    if n_steps < 1:
        raise ConfigError("t_max is shorter than one step")
    record_steps = sorted(set(range(0, n_steps + 1, ev.record_every)) | {n_steps})
    times = np.array([k * ev.dt for k in record_steps])
    exact = dict(zip(record_steps, exact_trajectory(setup.liouv, setup.initial, times)))

    traj = Trajectory(metadata={
        "config": config_to_dict(cfg),
        "model_hash": model_hash(setup),
        "ansatz": json.loads(prog.describe()),
        "picture": setup.picture,
        "seed": ev.seed,
        "step_log": [],
    })
    theta = prog.zero_params()
    a = prog.initial.a
    V = None
    vtc_problem = None
    if ev.kind == "vtc":
        a_method = ev.a_method if setup.picture == "schroedinger" else "none"
        vtc_problem = VtcProblem(dt=ev.dt, n_expansion=ev.n_expansion, a_method=a_method, maxiter=ev.maxiter)
        V = v_expand(setup.liouv.total, ev.dt, ev.n_expansion)
    est = ev.estimator
    switched = False

    def state_of(th, t, a_vtc):
        s = apply(prog, th, t)
        return SuperState(s.amplitudes, a_vtc) if ev.kind == "vtc" else s

    def record(k, th, a_vtc):
        t = k * ev.dt
        s = state_of(th, t, a_vtc)
        traj.append(t, th, s.a, compute_metrics(setup, s, exact[k], names))

    record(0, theta, a)
    for k in range(n_steps):
        t = k * ev.dt
        sw = cfg.ansatz
        if sw.switch_to_m is not None and not switched and t >= sw.switch_time - 1e-12:
            current = state_of(theta, t, a)
            prog, theta = grow_layers(prog, theta, setup.liouv, sw.switch_to_m)
            if sw.compress:
                theta = _compress(prog, theta, current.amplitudes, ev.maxiter)
            setup.program = prog
            switched = True
            traj.metadata["switch"] = {"t": t, "m": sw.switch_to_m}
        if ev.kind == "tdva":
            theta, rec = tdva_step(prog, theta, setup.liouv.h_sq, ev.dt, t, ev.regularization, est, ev.integrator)
            traj.metadata["step_log"].append(asdict(rec))
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                theta, a, rec = vtc_step(prog, theta, a, setup.liouv, vtc_problem, t, V)
            log = asdict(rec)
            log["a"] = [rec.a.real, rec.a.imag]
            traj.metadata["step_log"].append(log)
        if k + 1 in exact:
            record(k + 1, theta, a)
    if write and cfg.outputs.directory:
        write_outputs(traj, cfg)
    return traj


def recompute_metrics(traj: Trajectory) -> list[dict[str, float]]:
    """Metrics rebuilt from the persisted (t, theta, a) records and the stored config."""
    cfg = config_from_dict(traj.metadata["config"])
    setup = make_setup(cfg)
    names = resolve_metrics(cfg)
    sw = traj.metadata.get("switch")
    times = [r.t for r in traj.records]
    exact = exact_trajectory(setup.liouv, setup.initial, times)
    big = None
    if sw is not None:
        big = build_closed(setup.liouv, sw["m"], False, setup.initial)
    out = []
    for r, e in zip(traj.records, exact):
        prog = big if (big is not None and r.theta.size == big.n_total) else setup.program
        s = SuperState(apply(prog, r.theta, r.t).amplitudes, r.a)
        out.append(compute_metrics(setup, s, e, names))
    return out


def write_outputs(traj: Trajectory, cfg: ExperimentConfig) -> Path:
    d = Path(cfg.outputs.directory)
    d.mkdir(parents=True, exist_ok=True)
    label = cfg.outputs.label
    traj.write_csv(d / f"{label}.csv")
    traj.write_json(d / f"{label}.json")
    return d


def run_oracle(cfg: ExperimentConfig) -> Trajectory:
    """Exact dynamics only, on the same grid and metrics as ``run``."""
    cfg.validate()
    setup = make_setup(cfg)
    ev = cfg.evolver
    n_steps = int(round(ev.t_max / ev.dt))
    steps = sorted(set(range(0, n_steps + 1, ev.record_every)) | {n_steps})
    times = [k * ev.dt for k in steps]
    traj = Trajectory(metadata={"config": config_to_dict(cfg), "model_hash": model_hash(setup),
                                "picture": setup.picture, "oracle": True})
    for t, s in zip(times, exact_trajectory(setup.liouv, setup.initial, times)):
        if setup.picture == "heisenberg":
            c = autocorrelation(setup.initial, s)
            m = {"C_exact": c.real, "C_exact_im": c.imag}
        else:
            m = {"Mz_exact": magnetization(s, cfg.magnetization_site), "purity_exact": purity(s),
                 "trace": trace_of(s).real}
        traj.append(t, [], s.a, m)
    if cfg.outputs.directory:
        d = Path(cfg.outputs.directory)
        d.mkdir(parents=True, exist_ok=True)
        traj.write_csv(d / f"{cfg.outputs.label}_oracle.csv")
        traj.write_json(d / f"{cfg.outputs.label}_oracle.json")
    return traj


def plot_data(directory) -> dict:
    """Collect every trajectory JSON below ``directory`` into per-figure series."""
    d = Path(directory)
    panels: dict[str, dict] = {}
    for path in sorted(d.rglob("*.json")):
        if path.name == "plot_data.json":
            continue
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError:
            continue
        if "records" not in doc or "metadata" not in doc:
            continue
        tr = Trajectory.from_json(doc)
        cfg = tr.metadata.get("config", {})
        fig = cfg.get("figure") or "misc"
        label = cfg.get("outputs", {}).get("label", path.stem)
        if tr.metadata.get("oracle"):
            label = f"{label}:exact"
        for metric in (tr.records[0].metrics if tr.records else {}):
            panel = panels.setdefault(f"{fig}/{metric}", {})
            panel[label] = {"t": tr.times.tolist(), "value": tr.metric(metric).tolist()}
    (d / "plot_data.json").write_text(json.dumps(panels, indent=1))
    return panels
