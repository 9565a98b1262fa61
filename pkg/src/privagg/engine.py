"""Synchronous noisy-consensus rounds with trace capture and diagnostics.

Each round every node broadcasts x_i + theta_i and the state advances by
the weight matrix: x(k+1) = W (x(k) + theta(k)). The update is available
in two forms that must agree bit-for-bit under the mandated ascending
summation order: a dense matrix form and a per-node neighbor-list form.
Topology events (edge add/remove, node removal) recompute the weights
mid-run; removed nodes take their state mass with them and the error
metric re-targets the surviving nodes' initial average.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .backend import Backend, get_backend
from .noise import SCHEMES, NoiseBank, NoiseParams, derive_seed
from .tolerances import TOL
from .topology import Graph, TopologyEvent, apply_event, is_connected
from .weights import metropolis

UPDATE_FORMS = ("matrix", "per_node")
AGGREGATE_KINDS = ("sum", "average")
TRANSFORM_KINDS = ("product", "second_moment", "variance")

# Schemes whose noise is bounded by alpha*rho^k, so the state envelope holds.
_ENVELOPE_SCHEMES = ("zero_sum", "independent_decaying", "zero")


class EngineAbort(RuntimeError):
    """States degenerated (NaN/overflow) or left the analytic envelope."""


@dataclass
class RunConfig:
    """Everything one run needs; all randomness flows from noise.seed."""

    graph: Graph
    x0: Sequence[float] | np.ndarray
    noise: NoiseParams = NoiseParams()
    scheme: str = "zero_sum"
    max_iterations: int | None = None  # default: n^2
    term_epsilon: float = 0.0  # 0 disables the neighbor-closeness stop
    events: tuple[TopologyEvent, ...] = ()
    record_trace: bool = True
    update_form: str = "matrix"

    def __post_init__(self) -> None:
        x0 = np.array(self.x0, dtype=np.float64)
        if x0.shape != (self.graph.n,):
            raise ValueError(
                f"x0 has length {x0.shape}, graph has {self.graph.n} nodes"
            )
        self.x0 = x0
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown noise scheme {self.scheme!r}")
        if self.update_form not in UPDATE_FORMS:
            raise ValueError(f"unknown update form {self.update_form!r}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.term_epsilon < 0.0:
            raise ValueError("term_epsilon must be >= 0")
        self.events = tuple(self.events)

    @property
    def max_rounds(self) -> int:
        return self.max_iterations if self.max_iterations is not None else self.graph.n**2


@dataclass(frozen=True)
class AppliedEvent:
    at_iteration: int
    kind: str
    payload: tuple[int, int] | int
    n_after: int
    true_average_after: float


@dataclass
class RunTrace:
    """Per-iteration record of a run.

    spreads[k] is V(x(k)) = max - min; errs[k] is max_i |x_i(k) - reference|
    where the reference is the mean initial state of the nodes alive at k.
    xs / x_pluses / thetas are populated only when record_trace is set;
    broadcasts exist for k < k_stop.
    """

    config: RunConfig
    ks: list[int] = field(default_factory=list)
    spreads: list[float] = field(default_factory=list)
    errs: list[float] = field(default_factory=list)
    node_ids: list[tuple[int, ...]] = field(default_factory=list)
    true_averages: list[float] = field(default_factory=list)
    xs: list[np.ndarray] = field(default_factory=list)
    x_pluses: list[np.ndarray] = field(default_factory=list)
    thetas: list[np.ndarray] = field(default_factory=list)
    events_applied: list[AppliedEvent] = field(default_factory=list)
    k_stop: int = 0
    reason: str = ""
    x_final: np.ndarray = field(default_factory=lambda: np.empty(0))
    consensus_value: float = math.nan

    @property
    def final_err(self) -> float:
        return self.errs[-1]

    @property
    def final_spread(self) -> float:
        return self.spreads[-1]

    @property
    def final_true_average(self) -> float:
        return self.true_averages[-1]

    def write_trace_csv(self, path: str | Path) -> None:
        if not self.xs:
            raise ValueError("run was executed with record_trace=False")
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["k", "node_id", "x", "x_plus", "theta"])
            for idx, k in enumerate(self.ks):
                broadcast = idx < len(self.x_pluses)
                for p, nid in enumerate(self.node_ids[idx]):
                    row = [k, nid, repr(float(self.xs[idx][p]))]
                    if broadcast:
                        row.append(repr(float(self.x_pluses[idx][p])))
                        row.append(repr(float(self.thetas[idx][p])))
                    else:
                        row.extend(["", ""])
                    w.writerow(row)

    def write_summary_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["k", "V", "err"])
            for k, v, e in zip(self.ks, self.spreads, self.errs):
                w.writerow([k, repr(float(v)), repr(float(e))])


def state_envelope(x0: Sequence[float] | np.ndarray, params: NoiseParams) -> float:
    """Upper bound max_k ||x(k)||_inf <= ||x0||_inf + alpha/(1-rho)."""
    x0 = np.asarray(x0, dtype=np.float64)
    return float(np.max(np.abs(x0)) + params.alpha / (1.0 - params.rho))


def _support_arrays(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    """CSR-style (indptr, indices) of each row's support {i} ∪ N_i, ascending."""
    indices: list[int] = []
    indptr = [0]
    for i in range(g.n):
        indices.extend(sorted((i, *g.neighbors[i])))
        indptr.append(len(indices))
    return np.array(indptr, dtype=np.intp), np.array(indices, dtype=np.intp)


def _edge_arrays(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    u = np.array([e[0] for e in g.edges], dtype=np.intp)
    v = np.array([e[1] for e in g.edges], dtype=np.intp)
    return u, v


def run(config: RunConfig, backend: Backend | None = None) -> RunTrace:
    """Execute one run to its stopping point and return the trace."""
    g = config.graph
    if not is_connected(g):
        raise ValueError("run requires a connected graph")
    b = backend if backend is not None else get_backend()
    kernel_dense, kernel_nbr = b.dense_step, b.neighbor_step
    matrix_form = config.update_form == "matrix"

    x = np.array(config.x0, dtype=np.float64)
    x0_full = x.copy()
    alive = list(range(g.n))
    w = metropolis(g).w
    indptr, indices = _support_arrays(g)
    edge_u, edge_v = _edge_arrays(g)
    reference = float(np.mean(x0_full))
    max_rounds = config.max_rounds
    bank = NoiseBank(config.scheme, config.noise, g.n, max_rounds)
    guard = (
        state_envelope(x0_full, config.noise) * (1.0 + TOL.envelope_slack)
        if config.scheme in _ENVELOPE_SCHEMES
        else math.inf
    )
    events = sorted(config.events, key=lambda e: e.at_iteration)
    trace = RunTrace(config=config)

    ei = 0
    k = 0
    alive_arr = np.array(alive, dtype=np.intp)
    while True:
        while ei < len(events) and events[ei].at_iteration == k:
            g, alive, x = _apply_run_event(g, events[ei], alive, x)
            w = metropolis(g).w
            indptr, indices = _support_arrays(g)
            edge_u, edge_v = _edge_arrays(g)
            alive_arr = np.array(alive, dtype=np.intp)
            reference = float(np.mean(x0_full[alive_arr]))
            trace.events_applied.append(
                AppliedEvent(k, events[ei].kind, events[ei].payload, g.n, reference)
            )
            ei += 1

        peak = float(np.max(np.abs(x)))
        if not math.isfinite(peak):
            raise EngineAbort(f"non-finite state at iteration {k}")
        if peak > guard:
            raise EngineAbort(
                f"state envelope exceeded at iteration {k}: {peak} > {guard}"
            )

        trace.ks.append(k)
        trace.spreads.append(float(x.max() - x.min()))
        trace.errs.append(float(np.max(np.abs(x - reference))))
        trace.node_ids.append(tuple(alive))
        trace.true_averages.append(reference)
        if config.record_trace:
            trace.xs.append(x.copy())

        if (
            config.term_epsilon > 0.0
            and len(edge_u)
            and float(np.max(np.abs(x[edge_u] - x[edge_v]))) <= config.term_epsilon
        ):
            trace.reason = "term_epsilon"
            break
        if k == max_rounds:
            trace.reason = "max_iterations"
            break

        theta = bank.round_values(k)[alive_arr]
        x_plus = x + theta
        if not np.isfinite(x_plus).all():
            raise EngineAbort(f"non-finite broadcast at iteration {k}")
        if config.record_trace:
            trace.x_pluses.append(x_plus)
            trace.thetas.append(theta)
        out = np.empty_like(x)
        if matrix_form:
            kernel_dense(w, x_plus, out)
        else:
            kernel_nbr(w, indptr, indices, x_plus, out)
        x = out
        k += 1

    trace.k_stop = k
    trace.x_final = x.copy()
    trace.consensus_value = float(x[0])
    return trace


def _apply_run_event(
    g: Graph, event: TopologyEvent, alive: list[int], x: np.ndarray
) -> tuple[Graph, list[int], np.ndarray]:
    """Translate an original-id event to current positions and apply it."""
    pos_of = {orig: p for p, orig in enumerate(alive)}
    if event.kind == "remove_node":
        orig = event.payload
        assert isinstance(orig, int)
        if orig not in pos_of:
            raise ValueError(f"remove_node: node {orig} is not present")
        pos = pos_of[orig]
        g2 = apply_event(g, replace(event, payload=pos))
        return g2, alive[:pos] + alive[pos + 1 :], np.delete(x, pos)
    i, j = event.payload  # type: ignore[misc]
    if i not in pos_of or j not in pos_of:
        raise ValueError(f"{event.kind}: node in ({i},{j}) is not present")
    g2 = apply_event(g, replace(event, payload=(pos_of[i], pos_of[j])))
    return g2, alive, x


def aggregate(trace: RunTrace, n: int, kind: str) -> float:
    """Recover the aggregate from a finished run: any node's final state is
    the average; the sum is n times it."""
    if kind not in AGGREGATE_KINDS:
        raise ValueError(f"unknown aggregate kind {kind!r}")
    return trace.consensus_value if kind == "average" else n * trace.consensus_value


def transform_aggregate(
    x0: Sequence[float] | np.ndarray, kind: str, config: RunConfig
) -> float:
    """Aggregate beyond the mean by running consensus on transformed inputs.

    product = exp(n * avg(log x)); second_moment = avg(x^2);
    variance = avg(x^2) - avg(x)^2 (two runs with derived noise seeds).
    """
    if kind not in TRANSFORM_KINDS:
        raise ValueError(f"unknown transform kind {kind!r}")
    x0 = np.asarray(x0, dtype=np.float64)
    n = config.graph.n
    if x0.shape != (n,):
        raise ValueError(f"x0 has length {x0.shape}, graph has {n} nodes")

    def avg_of(values: np.ndarray, salt: int) -> float:
        params = replace(config.noise, seed=derive_seed(config.noise.seed, 101, salt))
        cfg = replace(config, x0=values, noise=params, record_trace=False)
        return run(cfg).consensus_value

    if kind == "product":
        if np.any(x0 <= 0.0):
            raise ValueError("product aggregation requires strictly positive inputs")
        return math.exp(n * avg_of(np.log(x0), 0))
    if kind == "second_moment":
        return avg_of(x0 * x0, 1)
    return avg_of(x0 * x0, 1) - avg_of(x0, 0) ** 2


@dataclass(frozen=True)
class EnvelopePoint:
    k: int
    bound: float
    observed: float
    ok: bool


def decay_envelope(
    trace: RunTrace, eps_w: float, params: NoiseParams
) -> list[EnvelopePoint]:
    """Theoretical upper bounds for the spread V at iterations l + h*n.

    bound(l, h) = (1-eps_w)^h V(x(l))
                  + ahat(l) * h * max(rho^((h-1)n), (1-eps_w)^(h-1))
    with ahat(l) = 2*alpha*rho^l*(1-rho^(n+1))/(1-rho). Requires a
    static-topology trace; flags any observed violation via .ok.
    """
    if trace.events_applied:
        raise ValueError("decay envelope requires a static-topology run")
    if not 0.0 < eps_w <= 1.0:
        raise ValueError("contraction factor must be in (0, 1]")
    n = len(trace.node_ids[0])
    rho, alpha = params.rho, params.alpha
    points = []
    for start in range(min(n, trace.k_stop + 1)):
        ahat = 2.0 * alpha * rho**start * (1.0 - rho ** (n + 1)) / (1.0 - rho)
        h = 1
        while start + h * n <= trace.k_stop:
            tail = ahat * h * max(rho ** ((h - 1) * n), (1.0 - eps_w) ** (h - 1))
            bound = (1.0 - eps_w) ** h * trace.spreads[start] + tail
            observed = trace.spreads[start + h * n]
            points.append(EnvelopePoint(start + h * n, bound, observed, observed <= bound))
            h += 1
    return points
