"""Backward-forward sweep power flow and quasi-dynamic time series.

Per-unit system with S_base = 1 MVA and V_base = nominal voltage of each
bus. Transformers are an ideal ratio t (LV = t * HV, from the tap position)
followed by the short-circuit impedance on the LV side. Shunt elements
(cable capacitance, transformer magnetising branch) are neglected.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np
from scipy import sparse

from .loads import PROFILE_ENERGY_KWH, LoadProfile
from .model import GridModel, ModelError
from .solar import ClearSky, pv_power_from_poa, plane_of_array, sun_angles

logger = logging.getLogger(__name__)

S_BASE_MVA = 1.0
TOLERANCE = 1e-10
MAX_ITER = 100
SCENARIOS = ("present", "full-pv")


class NonRadialError(ModelError):
    pass


def normalise_scenario(name: str) -> str:
    key = name.strip().lower().replace("_", "-")
    if key == "full":
        key = "full-pv"
    if key not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose one of {', '.join(SCENARIOS)}")
    return key


class Network:
    """Radial branch structure of a GridModel prepared for repeated sweeps.

    Buses are ordered breadth-first from the slack. With J the vector of
    branch currents (child side) and I the bus current draws,
    J = K I and V = a V_slack - M J, where a holds the products of tap ratios
    along each path. K and M are sparse path matrices built once.
    """

    def __init__(self, model: GridModel):
        model.validate()
        self.model = model
        adj: dict[str, list[tuple[str, int, str]]] = {b.id: [] for b in model.buses}
        branches = []  # (id, kind, a, b, z_pu, ratio, rated)
        vn = {b.id: b.vn_kv for b in model.buses}
        for ln in model.lines:
            if not math.isclose(vn[ln.from_bus], vn[ln.to_bus]):
                raise ModelError(f"line {ln.id} joins buses of different nominal voltage")
            z_ohm = complex(ln.r_ohm_per_km, ln.x_ohm_per_km) * ln.length_m / 1000.0 / ln.parallel
            z_base = vn[ln.from_bus] ** 2 / S_BASE_MVA
            branches.append((ln.id, "line", ln.from_bus, ln.to_bus, z_ohm / z_base, 1.0,
                             ln.parallel * ln.rated_current_ka))
        for t in model.transformers:
            zk = t.uk_percent / 100.0 * S_BASE_MVA / t.sn_mva
            rk = t.copper_loss_kw / (t.sn_mva * 1000.0) * S_BASE_MVA / t.sn_mva
            branches.append((t.id, "trafo", t.hv_bus, t.lv_bus, complex(rk, math.sqrt(zk * zk - rk * rk)),
                             t.ratio, t.sn_mva))
        for k, (bid, kind, a, b, *_rest) in enumerate(branches):
            adj[a].append((b, k, "fwd"))
            adj[b].append((a, k, "rev"))
        # BFS from the slack
        order, parent_branch, seen = [model.slack_bus], {}, {model.slack_bus}
        queue = deque([model.slack_bus])
        while queue:
            v = queue.popleft()
            for w, k, direction in adj[v]:
                if parent_branch.get(v) == k:
                    continue
                if w in seen:
                    raise NonRadialError(f"branch {branches[k][0]} closes a loop")
                if branches[k][1] == "trafo" and direction == "rev":
                    raise ModelError(f"transformer {branches[k][0]} is fed from its LV side")
                seen.add(w)
                parent_branch[w] = k
                order.append(w)
                queue.append(w)
        if len(order) != len(model.buses):
            missing = sorted(set(adj) - seen)[:5]
            raise NonRadialError(f"buses not connected to the slack: {missing}")
        if len(branches) != len(order) - 1:
            raise NonRadialError("network is not a tree")
        self.bus_ids = order
        self.pos = {b: i for i, b in enumerate(order)}
        n = len(order)
        self.n = n
        self.branch_ids = [b[0] for b in branches]
        self.branch_kind = [b[1] for b in branches]
        nb = len(branches)
        child = np.empty(nb, dtype=int)
        par = np.empty(nb, dtype=int)
        z = np.empty(nb, dtype=complex)
        ratio = np.ones(nb)
        rated = np.empty(nb)
        for w, k in parent_branch.items():
            _, _, a, b, zk, rk, rt = branches[k]
            child[k] = self.pos[w]
            par[k] = self.pos[a if w == b else b]
            z[k], ratio[k], rated[k] = zk, rk, rt
        self.child, self.parent, self.z, self.ratio, self.rated = child, par, z, ratio, rated
        vn_arr = np.array([vn[b] for b in order])
        self.vn_kv = vn_arr
        # current base (kA) on each branch's child side
        self.i_base_ka = S_BASE_MVA / (math.sqrt(3.0) * vn_arr[child])
        self.v_hv_base = vn_arr[par]
        # path matrices
        branch_of_bus = np.full(n, -1)
        branch_of_bus[child] = np.arange(nb)
        rows_k, cols_k, vals_k = [], [], []
        rows_m, cols_m, vals_m = [], [], []
        a_vec = np.ones(n)
        for i in range(1, n):
            k = branch_of_bus[i]
            a_vec[i] = a_vec[par[k]] * ratio[k]
        # K[b, i]: contribution of bus i's draw to branch b current = product of
        # ratios on the path strictly below b down to i
        for i in range(1, n):
            gain = 1.0
            v = i
            while v != 0:
                k = branch_of_bus[v]
                rows_k.append(k)
                cols_k.append(i)
                vals_k.append(gain)
                gain *= ratio[k]
                v = par[k]
        # M[i, b]: voltage drop at bus i due to branch b current, scaled by the
        # ratios between b's child and i
        for i in range(1, n):
            gain = 1.0
            v = i
            while v != 0:
                k = branch_of_bus[v]
                rows_m.append(i)
                cols_m.append(k)
                vals_m.append(gain * z[k])
                gain *= ratio[k]
                v = par[k]
        self.K = sparse.csr_matrix((vals_k, (rows_k, cols_k)), shape=(nb, n))
        self.M = sparse.csr_matrix((np.array(vals_m, dtype=complex), (rows_m, cols_m)), shape=(n, nb))
        self.a = a_vec
        self.slack_v = model.slack_voltage_pu

    def injection_vector(self, injections: dict[str, tuple[float, float]]) -> np.ndarray:
        """Bus injections in W/var (generation positive) to a p.u. vector."""
        s = np.zeros(self.n, dtype=complex)
        for bus, (p, q) in injections.items():
            if bus not in self.pos:
                raise ModelError(f"injection at unknown bus {bus!r}")
            s[self.pos[bus]] += complex(p, q) / (S_BASE_MVA * 1e6)
        return s


@dataclass
class SnapshotResult:
    """One steady-state solution. Values are None when not converged."""

    converged: bool
    iterations: int
    timestamp: datetime | None = None
    voltages: dict[str, complex] | None = None  # p.u.
    line_loading: dict[str, float] | None = None  # percent
    trafo_loading: dict[str, float] | None = None  # percent
    losses_kva: float | None = None
    slack_power_kva: complex | None = None
    net_injection_kva: complex = 0j  # PV infeed minus consumption
    loss_kva: complex = field(default=0j, repr=False)  # complex sum of branch losses

    @property
    def bus_voltage(self) -> dict[str, float] | None:
        if self.voltages is None:
            return None
        return {b: abs(v) for b, v in self.voltages.items()}

    def power_mismatch_pu(self) -> float:
        """|S_slack - S_load + S_pv - S_loss| in p.u."""
        if not self.converged:
            return math.nan
        balance = self.slack_power_kva + self.net_injection_kva - self.loss_kva
        return abs(balance) / (S_BASE_MVA * 1000.0)


def _sweep(net: Network, s_inj: np.ndarray, tol: float = TOLERANCE, max_iter: int = MAX_ITER):
    """Vectorised over columns of s_inj (n_bus x n_cases).

    Each column iterates on its own and is frozen once converged, so a
    case's result does not depend on what it is batched with.
    """
    n, m = s_inj.shape
    v0 = net.a * net.slack_v
    V = np.repeat(v0[:, None], m, axis=1).astype(complex)
    iters = np.zeros(m, dtype=int)
    done = np.zeros(m, dtype=bool)
    active = np.arange(m)
    for it in range(1, max_iter + 1):
        Va = V[:, active]
        draw = np.conj(-s_inj[:, active] / Va)
        draw[0] = 0.0
        J = net.K @ draw
        Vn = v0[:, None] - net.M @ J
        delta = np.max(np.abs(Vn - Va), axis=0)
        V[:, active] = Vn
        iters[active] = it
        conv = delta < tol
        done[active[conv]] = True
        active = active[~conv]
        if active.size == 0:
            break
    return V, iters, done


def _results(net: Network, V: np.ndarray, s_inj: np.ndarray, iters, done, stamps=None) -> list[SnapshotResult]:
    out = []
    m = V.shape[1]
    draw = np.conj(-s_inj / V)
    draw[0] = 0.0
    J = net.K @ draw
    for c in range(m):
        t = stamps[c] if stamps is not None else None
        if not done[c]:
            out.append(SnapshotResult(False, int(iters[c]), t))
            continue
        Vc, Jc = V[:, c], J[:, c]
        loss = complex(np.sum(np.abs(Jc) ** 2 * net.z)) * 1000.0
        # slack supplies the sum of parent-side currents of branches leaving it
        root_branches = np.nonzero(net.parent == 0)[0]
        i_slack = np.sum(net.ratio[root_branches] * Jc[root_branches])
        slack = complex(Vc[0] * np.conj(i_slack)) * 1000.0
        i_ka = np.abs(Jc) * net.i_base_ka
        ll, tl = {}, {}
        for k, bid in enumerate(net.branch_ids):
            if net.branch_kind[k] == "line":
                ll[bid] = float(i_ka[k] / net.rated[k] * 100.0)
            else:
                s_lv = abs(Vc[net.child[k]] * np.conj(Jc[k]))
                s_hv = abs(Vc[net.parent[k]] * np.conj(net.ratio[k] * Jc[k]))
                tl[bid] = float(max(s_lv, s_hv) * S_BASE_MVA / net.rated[k] * 100.0)
        out.append(SnapshotResult(
            True, int(iters[c]), t,
            voltages={b: complex(Vc[i]) for i, b in enumerate(net.bus_ids)},
            line_loading=ll, trafo_loading=tl, losses_kva=abs(loss),
            slack_power_kva=slack, net_injection_kva=complex(np.sum(s_inj[:, c])) * 1000.0,
            loss_kva=loss,
        ))
    return out


def solve_snapshot(model: GridModel | Network, injections: dict[str, tuple[float, float]],
                   timestamp: datetime | None = None) -> SnapshotResult:
    """Balanced power flow for one set of bus injections (W, var; loads negative)."""
    net = model if isinstance(model, Network) else Network(model)
    s = net.injection_vector(injections)[:, None]
    V, iters, done = _sweep(net, s)
    res = _results(net, V, s, iters, done, [timestamp])[0]
    if not res.converged:
        logger.warning("power flow did not converge within %d iterations", MAX_ITER)
    return res


# ---------------------------------------------------------------------------
# injections


def injection_matrix(net: Network, stamps: list[datetime], scenario: str, profile: LoadProfile,
                     clearsky: ClearSky = ClearSky()) -> np.ndarray:
    """Bus injections (p.u., n_bus x n_times) from loads and PV units."""
    scenario = normalise_scenario(scenario)
    model = net.model
    utc_naive = [_as_utc(t).replace(tzinfo=None) for t in stamps]
    times = np.array(utc_naive, dtype="datetime64[s]")
    shape = profile.values([_as_utc(t) for t in stamps]) / PROFILE_ENERGY_KWH  # W per kWh/a
    tan_phi = math.tan(math.acos(model.power_factor))
    s = np.zeros((net.n, len(stamps)), dtype=complex)
    for ld in model.loads:
        p = ld.annual_kwh * shape
        s[net.pos[ld.bus]] -= (p + 1j * p * tan_phi) / (S_BASE_MVA * 1e6)
    if model.pv_units:
        doy = np.array([t.timetuple().tm_yday for t in utc_naive])
        buses = {b.id: b for b in model.buses}
        for pv in model.pv_units:
            n_mod = pv.modules_present if scenario == "present" else pv.modules_full
            if n_mod == 0:
                continue
            bus = buses[pv.bus]
            el, az = sun_angles(times, bus.lat, bus.lon)
            poa = plane_of_array(el, az, doy, pv.tilt_deg, pv.azimuth_deg, clearsky)
            s[net.pos[pv.bus]] += pv_power_from_poa(model.pv_panel, n_mod, poa) / (S_BASE_MVA * 1e6)
    return s


def _as_utc(t: datetime) -> datetime:
    if t.tzinfo is None:
        return t.replace(tzinfo=timezone.utc)
    return t.astimezone(timezone.utc)


def solve_instants(model: GridModel | Network, stamps: list[datetime], scenario: str,
                   profile: LoadProfile, clearsky: ClearSky = ClearSky()) -> list[SnapshotResult]:
    net = model if isinstance(model, Network) else Network(model)
    s = injection_matrix(net, stamps, scenario, profile, clearsky)
    V, iters, done = _sweep(net, s)
    return _results(net, V, s, iters, done, list(stamps))


# ---------------------------------------------------------------------------
# summaries


MEASURES = ("trafo_loading_max", "line_loading_max", "line_loading_avg", "voltage_max", "voltage_min",
            "losses_kva")


def summarize(result) -> dict:
    """Measurement record for a snapshot or a series.

    Snapshot: max transformer loading, max and mean line loading (mean over
    all lines), voltage max/min over all buses, total losses in kVA.
    Series: the same maxima over time, the time-maximum of the mean line
    loading ("line_loading_avg_max"), the voltage envelope; no losses.
    """
    if isinstance(result, SeriesResult):
        return result.aggregates()
    if not result.converged:
        rec = {k: None for k in MEASURES}
        rec.update(converged=False, iterations=result.iterations)
        return rec
    ll = list(result.line_loading.values())
    vm = [abs(v) for v in result.voltages.values()]
    return {
        "trafo_loading_max": max(result.trafo_loading.values(), default=0.0),
        "line_loading_max": max(ll, default=0.0),
        "line_loading_avg": float(np.mean(ll)) if ll else 0.0,
        "voltage_max": max(vm),
        "voltage_min": min(vm),
        "losses_kva": result.losses_kva,
        "converged": True,
        "iterations": result.iterations,
    }


@dataclass
class SeriesResult:
    timestamps: list[datetime]
    rows: list[dict]  # summarize() of each snapshot
    line_loading: dict[str, float]  # per-line maximum over converged snapshots
    bus_voltage: dict[str, float]  # per-bus maximum |V| over converged snapshots
    bus_voltage_min: dict[str, float]
    scenario: str = "present"

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.rows if not r["converged"])

    def aggregates(self) -> dict:
        ok = [r for r in self.rows if r["converged"]]
        if not ok:
            return {"snapshots": len(self.rows), "non_converged": len(self.rows), "trafo_loading_max": None,
                    "line_loading_max": None, "line_loading_avg_max": None, "voltage_max": None,
                    "voltage_min": None}
        return {
            "snapshots": len(self.rows),
            "non_converged": len(self.rows) - len(ok),
            "trafo_loading_max": max(r["trafo_loading_max"] for r in ok),
            "line_loading_max": max(r["line_loading_max"] for r in ok),
            "line_loading_avg_max": max(r["line_loading_avg"] for r in ok),
            "voltage_max": max(r["voltage_max"] for r in ok),
            "voltage_min": min(r["voltage_min"] for r in ok),
        }


def window(t0: datetime, t1: datetime, step: timedelta = timedelta(minutes=15)) -> list[datetime]:
    """Half-open [t0, t1) grid of UTC instants."""
    if not t1 > t0:
        raise ValueError("window end must be after its start")
    if step <= timedelta(0):
        raise ValueError("step must be positive")
    t0, t1 = _as_utc(t0), _as_utc(t1)
    out, t = [], t0
    while t < t1:
        out.append(t)
        t += step
    return out


def run_quasi_dynamic(model: GridModel | Network, t0: datetime, t1: datetime,
                      step: timedelta = timedelta(minutes=15), scenario: str = "present",
                      profile: LoadProfile | None = None, clearsky: ClearSky = ClearSky(),
                      chunk: int = 96) -> SeriesResult:
    """Independent snapshots over [t0, t1); non-converged steps are counted, not fatal."""
    net = model if isinstance(model, Network) else Network(model)
    profile = profile or LoadProfile.synthetic()
    scenario = normalise_scenario(scenario)
    stamps = window(t0, t1, step)
    return run_series(net, stamps, scenario, profile, clearsky, chunk)


def run_series(net: Network, stamps, scenario: str, profile: LoadProfile, clearsky: ClearSky = ClearSky(),
               chunk: int = 96) -> SeriesResult:
    """Snapshots at arbitrary instants, aggregated like a quasi-dynamic run."""
    scenario = normalise_scenario(scenario)
    rows = []
    line_env: dict[str, float] = {}
    vmax: dict[str, float] = {}
    vmin: dict[str, float] = {}
    for lo in range(0, len(stamps), chunk):
        part = stamps[lo : lo + chunk]
        for res in solve_instants(net, part, scenario, profile, clearsky):
            rows.append(summarize(res))
            if not res.converged:
                logger.warning("snapshot %s did not converge", res.timestamp.isoformat())
                continue
            for k, v in res.line_loading.items():
                line_env[k] = max(line_env.get(k, 0.0), v)
            for b, v in res.bus_voltage.items():
                vmax[b] = max(vmax.get(b, -math.inf), v)
                vmin[b] = min(vmin.get(b, math.inf), v)
    return SeriesResult(list(stamps), rows, line_env, vmax, vmin, scenario)
