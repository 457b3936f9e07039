"""Structural checks on solved value tables and closed-loop long-run metrics.

The pair checks never materialise all comparable pairs.  For a fixed set of
inactive queues the active levels form a box ``{0..B}^k``; a state ``b`` is
dominated by some ``a >= b`` with a larger value exactly when the suffix
maximum of the value grid at ``b`` exceeds ``V(b)``.  Offending pairs are
then listed only for the flagged states.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .cost_model import ModelParams
from .solver import REJECT, EPS_TIE, PolicyTable, _transitions, arrival_q_values
from .state_space import StateSpace


class ComparabilityError(ValueError):
    pass


@dataclass
class DominationReport:
    checked_pairs: int
    violation_count: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violation_count == 0

    def to_dict(self) -> dict:
        return {"checked_pairs": self.checked_pairs, "violation_count": self.violation_count,
                "violations": [{"a": list(a), "b": list(b), "value_a": va, "value_b": vb}
                               for a, b, va, vb in self.violations]}

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["state_a", "state_b", "value_a", "value_b"])
        for a, b, va, vb in self.violations:
            writer.writerow([" ".join(map(str, a)), " ".join(map(str, b)), f"{va:.12g}", f"{vb:.12g}"])


@dataclass
class ThresholdReport:
    checked_pairs: int
    violation_count: int = 0
    violations: list = field(default_factory=list)
    same_idle: bool = True

    @property
    def ok(self) -> bool:
        return self.violation_count == 0

    def to_dict(self) -> dict:
        return {"checked_pairs": self.checked_pairs, "violation_count": self.violation_count,
                "same_idle": self.same_idle,
                "violations": [{"a": list(a), "b": list(b), "queue": i} for a, b, i in self.violations]}


def _suffix(grid: np.ndarray, op) -> np.ndarray:
    """Accumulate ``op`` from the top corner: out[b] = op over all a >= b."""
    out = grid
    for axis in range(grid.ndim):
        out = np.flip(op.accumulate(np.flip(out, axis), axis=axis), axis)
    return out


def _boxes(space: StateSpace, fixed_inactive=(), same_idle=True):
    """Yield (state-index grid, level grid) boxes within which componentwise order is checked."""
    n, R = space.n, space.radix
    idx = np.arange(space.size).reshape((R,) * n)
    if not same_idle:
        sl = tuple(0 if i in fixed_inactive else slice(None) for i in range(n))
        yield idx[sl]
        return
    for mask in itertools.product((False, True), repeat=n):
        if any(not mask[i] for i in fixed_inactive):
            continue
        sl = tuple(0 if m else slice(1, None) for m in mask)
        yield idx[sl]


def check_domination(V: np.ndarray, space: StateSpace, tol: float = 1e-9,
                     max_listed: int = 1000) -> DominationReport:
    """Find pairs a >= b (same inactive queues) with V(a) > V(b) + 100 * tol."""
    eps = 100 * tol
    V = np.asarray(V)
    per_axis = (space.B + 1) * (space.B + 2) // 2
    report = DominationReport(checked_pairs=sum(
        per_axis ** sum(not m for m in mask) for mask in itertools.product((False, True), repeat=space.n)))
    for box in _boxes(space):
        if box.ndim == 0:
            continue
        vals = V[box]
        top = _suffix(vals, np.maximum)
        for b in zip(*np.nonzero(top > vals + eps)):
            upper = tuple(slice(k, None) for k in b)
            hits = np.nonzero(vals[upper] > vals[b] + eps)
            report.violation_count += hits[0].size
            for off in zip(*hits):
                if len(report.violations) >= max_listed:
                    break
                a = box[tuple(k + o for k, o in zip(b, off))]
                report.violations.append((space.decode(a), space.decode(box[b]), float(V[a]), float(V[box[b]])))
    return report


def compute_alpha(V: np.ndarray, a, b, space: StateSpace) -> float:
    """V(a) - V(b) for b >= a componentwise with the same inactive queues."""
    a, b = tuple(a), tuple(b)
    if any((x == -1) != (y == -1) for x, y in zip(a, b)):
        raise ComparabilityError(f"{a} and {b} have different inactive queues")
    if any(y < x for x, y in zip(a, b)):
        raise ComparabilityError(f"{b} does not dominate {a}")
    return float(V[space.encode(a)] - V[space.encode(b)])


def build_indicators(V: np.ndarray, params: ModelParams, eps: float = EPS_TIE):
    """Per queue: (strictly optimal to activate it, weakly optimal to activate it), each (size, n)."""
    L = params.space.levels
    admit, reject = arrival_q_values(V, params)
    best = np.maximum(admit.max(axis=1), reject)
    inactive = L == -1
    nonbuild = np.maximum(np.where(inactive, -np.inf, admit).max(axis=1), reject)
    weak = inactive & (admit >= best[:, None] - eps)
    strict = weak & (admit > nonbuild[:, None] + eps)
    return strict, weak


def check_build_threshold(V: np.ndarray, params: ModelParams, eps: float = EPS_TIE,
                          same_idle: bool = True, max_listed: int = 1000) -> ThresholdReport:
    """Pairs where activating queue i is strictly optimal at a but not optimal at some b >= a.

    With ``same_idle`` the pair must share its inactive queues; otherwise only
    queue i needs to be inactive in both.
    """
    space = params.space
    strict, weak = build_indicators(V, params, eps)
    report = ThresholdReport(checked_pairs=0, same_idle=same_idle)
    for i in range(space.n):
        for box in _boxes(space, fixed_inactive=(i,), same_idle=same_idle):
            s_box, bad = strict[box, i], ~weak[box, i]
            if not s_box.any():
                continue
            if box.ndim == 0:
                # a single state is only compared with itself
                report.checked_pairs += 1
                continue
            shape = np.array(box.shape)
            for a in zip(*np.nonzero(s_box)):
                report.checked_pairs += int(np.prod(shape - np.array(a)))
            reach = _suffix(bad, np.logical_or)
            for a in zip(*np.nonzero(s_box & reach)):
                upper = tuple(slice(k, None) for k in a)
                hits = np.nonzero(bad[upper])
                report.violation_count += hits[0].size
                for off in zip(*hits):
                    if len(report.violations) >= max_listed:
                        break
                    b = box[tuple(k + o for k, o in zip(a, off))]
                    report.violations.append((space.decode(box[a]), space.decode(b), i))
    return report


def count_rejecting_states(policy: PolicyTable) -> int:
    return int(np.count_nonzero(policy.arrival_kind == REJECT))


def closed_loop_generator(policy: PolicyTable, params: ModelParams) -> sp.csr_matrix:
    """Transition-rate matrix (off-diagonal rates, zero diagonal) of the chain under ``policy``."""
    tr = _transitions(params)
    S, n = tr.levels.shape
    rows = np.arange(S)
    qsafe = np.where(policy.arrival_kind == REJECT, 0, policy.arrival_queue)
    arr = np.where(policy.arrival_kind == REJECT, rows, tr.arr_target[rows, qsafe])
    dep = np.where(policy.destroy, tr.dep_destroy, tr.dep_keep)
    r = np.concatenate([rows, np.repeat(rows, n)])
    c = np.concatenate([arr, dep.ravel()])
    v = np.concatenate([np.full(S, params.lam), tr.mu_eff.ravel()])
    keep = (r != c) & (v > 0)
    return sp.csr_matrix((v[keep], (r[keep], c[keep])), shape=(S, S))


def _uniformized(Q: sp.csr_matrix, rate: float) -> sp.csr_matrix:
    out = np.asarray(Q.sum(axis=1)).ravel()
    return (Q / rate + sp.diags(1.0 - out / rate)).tocsr()


def stationary_distribution(policy: PolicyTable, params: ModelParams, start: int = 0,
                            method: str = "power", tol: float = 1e-10,
                            max_iters: int = 1_000_000) -> np.ndarray:
    """Limiting state distribution of the closed-loop chain started at ``start``.

    ``start`` defaults to index 0, the all-inactive state.  ``method="power"``
    iterates the uniformized chain (rate ``lam + sum(mu)``) from a point mass
    at ``start`` until the L1 change is below ``tol``.  ``method="direct"``
    solves the balance equations on each closed class reachable from the start
    and weights them by absorption probabilities; it is exact but LU fill-in
    makes it slow beyond a few thousand recurrent states.
    """
    Q = closed_loop_generator(policy, params)
    S = Q.shape[0]
    if method == "power":
        P = _uniformized(Q, params.lam + sum(params.mu)).T.tocsr()
        x = np.zeros(S)
        x[start] = 1.0
        for it in range(max_iters):
            y = P @ x
            if np.abs(y - x).sum() < tol:
                return y / y.sum()
            x = y
        raise RuntimeError(f"power iteration did not converge in {max_iters} iterations")
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")

    reach = np.sort(csgraph.breadth_first_order(Q, start, directed=True, return_predecessors=False))
    Qr = Q[reach][:, reach].tocsr()
    m = reach.size
    ncomp, label = csgraph.connected_components(Qr, directed=True, connection="strong")
    # a class is closed when no rate leaves it
    coo = Qr.tocoo()
    leaving = np.zeros(ncomp, bool)
    leaving[label[coo.row[label[coo.row] != label[coo.col]]]] = True
    closed = np.flatnonzero(~leaving)
    out_rate = np.asarray(Qr.sum(axis=1)).ravel()
    local = np.zeros(m)
    in_closed = np.isin(label, closed)
    s0 = int(np.searchsorted(reach, start))
    if in_closed[s0]:
        weights = {label[s0]: 1.0}
    else:
        # absorption probabilities from the embedded jump chain over transient states
        T = np.flatnonzero(~in_closed)
        Pj = sp.diags(1.0 / out_rate[T]) @ Qr[T]
        A = sp.identity(T.size, format="csc") - Pj[:, T].tocsc()
        e = np.zeros(T.size)
        e[np.searchsorted(T, s0)] = 1.0
        # visits = e^T (I - P_TT)^{-1}; absorption = visits @ P_T,closed
        visits = spla.spsolve(A.T.tocsc(), e)
        flow = Pj.T @ visits
        weights = {c: float(flow[label == c].sum()) for c in closed}
    for c, w in weights.items():
        if w <= 0:
            continue
        members = np.flatnonzero(label == c)
        if members.size == 1:
            local[members] += w
            continue
        G = Qr[members][:, members].tocsr()
        G = (G - sp.diags(np.asarray(G.sum(axis=1)).ravel())).T.tolil()
        # pi G = 0 with one balance equation replaced by normalisation
        G[members.size - 1, :] = 1.0
        rhs = np.zeros(members.size)
        rhs[-1] = 1.0
        pi = spla.spsolve(G.tocsc(), rhs)
        pi = np.clip(pi, 0.0, None)
        local[members] += w * pi / pi.sum()
    dist = np.zeros(S)
    dist[reach] = local
    return dist / dist.sum()


def stationarity_residual(dist: np.ndarray, policy: PolicyTable, params: ModelParams) -> float:
    """L1 distance between ``dist`` and one step of the uniformized closed-loop chain."""
    P = _uniformized(closed_loop_generator(policy, params), params.lam + sum(params.mu))
    return float(np.abs(P.T @ dist - dist).sum())


def long_run_metrics(dist: np.ndarray, space: StateSpace) -> tuple[float, float]:
    """(mean number of active queues, mean number of tasks) under ``dist``."""
    dist = np.asarray(dist)
    return float(dist @ space.active_counts), float(dist @ space.task_totals)
