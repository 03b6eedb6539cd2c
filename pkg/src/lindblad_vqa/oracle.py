"""Exact reference dynamics and the metrics reported for variational runs."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .liouvillian import CompiledLiouvillian
from .superstate import SuperState, devectorize, overlap, pauli_expectation, trace_of

MAX_SPINS = 6
DENSE_EXPM_MAX_SPINS = 3


class SizeCapError(ValueError):
    pass


def _check_size(n_qubits: int):
    if n_qubits > 2 * MAX_SPINS:
        raise SizeCapError(f"exact propagation is capped at {MAX_SPINS} spins ({2 * MAX_SPINS} qubits)")


def exact_trajectory(liouv: CompiledLiouvillian, s0: SuperState, times, method: str = "auto",
                     rk4_step: float = 1e-3) -> list[SuperState]:
    """Solutions of d|s>/dt = L|s> at the requested (non-decreasing) times.

    ``liouv`` already encodes the picture: its total is L (Schroedinger) or
    L^dag (Heisenberg).  Dense expm is used for small systems and RK4 with
    Pauli-sum application otherwise.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("times must be non-negative and sorted")
    nq = liouv.n_qubits
    _check_size(nq)
    if method == "auto":
        method = "expm" if nq <= 2 * DENSE_EXPM_MAX_SPINS else "rk4"
    v = s0.vector()
    out = []
    t_cur = 0.0
    if method == "expm":
        Ld = liouv.total.to_dense()
        cache: dict[float, np.ndarray] = {}
        for t in times:
            dt = float(t - t_cur)
            if dt > 0:
                key = round(dt, 14)
                if key not in cache:
                    cache[key] = scipy.linalg.expm(Ld * dt)
                v = cache[key] @ v
            t_cur = t
            out.append(SuperState(v.copy()))
        return out
    if method != "rk4":
        raise ValueError(f"unknown propagation method {method!r}")
    L = liouv.total
    for t in times:
        span = float(t - t_cur)
        if span > 0:
            n = max(1, int(np.ceil(span / rk4_step - 1e-9)))
            h = span / n
            for _ in range(n):
                k1 = L.apply(v)
                k2 = L.apply(v + 0.5 * h * k1)
                k3 = L.apply(v + 0.5 * h * k2)
                k4 = L.apply(v + h * k3)
                v = v + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t_cur = t
        out.append(SuperState(v.copy()))
    return out


def exact_propagate(liouv: CompiledLiouvillian, s0: SuperState, t: float, method: str = "auto",
                    rk4_step: float = 1e-3) -> SuperState:
    return exact_trajectory(liouv, s0, [t], method, rk4_step)[0]


# ------------------------------------------------------------ metrics

def autocorrelation(o0: SuperState, ot: SuperState) -> complex:
    """<<O(0)|O(t)>> with O(0) scaled to unit norm."""
    n0 = o0.norm()
    if n0 == 0:
        raise ValueError("zero initial observable")
    return overlap(o0, ot) / n0


def superstate_fidelity(exact: SuperState, trial: SuperState) -> float:
    return float(abs(overlap(exact, trial)) ** 2)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.conj().T


def state_fidelity_uhlmann(rho: np.ndarray, sigma: np.ndarray) -> float:
    """(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 with sigma hermitized and clipped to PSD."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape != sigma.shape:
        raise ValueError("density matrices must be square and of equal shape")
    sr = _psd_sqrt(rho)
    inner = sr @ (0.5 * (sigma + sigma.conj().T)) @ sr
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(np.sum(np.sqrt(np.clip(w, 0, None))) ** 2)


def magnetization(s: SuperState, site: int) -> float:
    """Tr(rho sigma^z_site) / Tr(rho)."""
    n = s.n_spins
    if not 0 <= site < n:
        raise ValueError(f"site {site} out of range for {n} spins")
    tr = trace_of(s).real
    if abs(tr) < 1e-14:
        raise ValueError("state has zero trace")
    labels = [0] * n
    labels[site] = 3
    return float(pauli_expectation(s, labels).real / tr)


def uhlmann_superstates(exact: SuperState, trial: SuperState) -> float:
    return state_fidelity_uhlmann(devectorize(exact), devectorize(trial))


# ------------------------------------------------------------ trajectory

@dataclass
class TrajectoryRecord:
    t: float
    theta: np.ndarray
    a: complex
    metrics: dict[str, float]


@dataclass
class Trajectory:
    records: list[TrajectoryRecord] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, t: float, theta, a: complex, metrics: dict[str, float]):
        if self.records:
            if t <= self.records[-1].t:
                raise ValueError("trajectory times must increase strictly")
            if set(metrics) != set(self.records[-1].metrics):
                raise ValueError("metric keys differ from earlier records")
        self.records.append(TrajectoryRecord(float(t), np.asarray(theta, dtype=float).copy(),
                                             complex(a), dict(metrics)))

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def metric(self, name: str) -> np.ndarray:
        return np.array([r.metrics[name] for r in self.records])

    def write_csv(self, path, metrics=None):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "metric", "value"])
            for r in self.records:
                for k, v in r.metrics.items():
                    if metrics is None or k in metrics:
                        w.writerow([repr(r.t), k, repr(float(v))])

    def to_json(self) -> dict:
        return {
            "metadata": self.metadata,
            "records": [
                {"t": r.t, "theta": r.theta.tolist(), "a": [r.a.real, r.a.imag], "metrics": r.metrics}
                for r in self.records
            ],
        }

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def from_json(cls, doc) -> "Trajectory":
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        tr = cls(metadata=doc.get("metadata", {}))
        for r in doc["records"]:
            tr.records.append(TrajectoryRecord(r["t"], np.array(r["theta"], dtype=float),
                                               complex(*r["a"]), dict(r["metrics"])))
        return tr


def read_csv(path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """metric -> (t, value) arrays from a long-format trajectory CSV."""
    data: dict[str, list] = {}
    with Path(path).open() as fh:
        for row in csv.DictReader(fh):
            data.setdefault(row["metric"], []).append((float(row["t"]), float(row["value"])))
    return {k: (np.array([p[0] for p in v]), np.array([p[1] for p in v])) for k, v in data.items()}
