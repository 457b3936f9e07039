"""Value iteration for the flexible-queue MDP and exact small-instance oracles.

The fixed point solved here is

    V(q) = delta_q * [ sum_i mu_i * D_i(q) + lam * A(q) - C(q) ]
    delta_q = 1 / (sum_i mu~_i(q) + lam + gamma)

where ``D_i`` is the continuation after a departure from queue ``i`` (with the
keep/destroy choice when the queue empties) and ``A`` is the best of rejecting
(``V(q) - f``) or admitting into some non-full queue (``V(q') + r``, minus the
build cost when the queue had to be activated).
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cost_model import ModelParams, holding_rate
from .state_space import StateSpace

log = logging.getLogger(__name__)

REJECT, SCHEDULE, ACTIVATE = 0, 1, 2
EPS_TIE = 1e-9


class ConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


class OracleTooLargeError(ValueError):
    def __init__(self, message, count):
        super().__init__(message)
        self.count = count


@dataclass(frozen=True)
class ArrivalAction:
    kind: int
    queue: int = -1

    @property
    def code(self) -> str:
        return "R" if self.kind == REJECT else ("S" if self.kind == SCHEDULE else "A") + str(self.queue)

    @classmethod
    def from_code(cls, code: str) -> "ArrivalAction":
        code = code.strip()
        if code == "R":
            return cls(REJECT)
        kind = {"S": SCHEDULE, "A": ACTIVATE}[code[0]]
        return cls(kind, int(code[1:]))


Reject = ArrivalAction(REJECT)


def Schedule(i: int) -> ArrivalAction:
    return ArrivalAction(SCHEDULE, i)


def ActivateAndSchedule(i: int) -> ArrivalAction:
    return ArrivalAction(ACTIVATE, i)


@dataclass
class PolicyTable:
    """Stationary deterministic policy over all states.

    ``destroy[s, i]`` is only meaningful where queue ``i`` holds exactly one
    task in state ``s``; it is False everywhere else.
    """

    arrival_kind: np.ndarray
    arrival_queue: np.ndarray
    destroy: np.ndarray

    def arrival(self, index: int) -> ArrivalAction:
        return ArrivalAction(int(self.arrival_kind[index]), int(self.arrival_queue[index]))

    def arrival_codes(self) -> list[str]:
        return [self.arrival(s).code for s in range(len(self.arrival_kind))]

    def validate(self, space: StateSpace) -> None:
        L = space.levels
        rows = np.arange(space.size)
        q = np.where(self.arrival_kind == REJECT, 0, self.arrival_queue)
        lvl = L[rows, q]
        bad = ((self.arrival_kind == SCHEDULE) & ~((lvl >= 0) & (lvl < space.B))) | (
            (self.arrival_kind == ACTIVATE) & (lvl != -1))
        if bad.any():
            s = int(np.flatnonzero(bad)[0])
            raise ValueError(f"infeasible arrival action {self.arrival(s).code} in state {space.decode(s)}")
        if (self.destroy & (L != 1)).any():
            s = int(np.flatnonzero((self.destroy & (L != 1)).any(axis=1))[0])
            raise ValueError(f"destroy set for a queue without exactly one task in state {space.decode(s)}")

    @classmethod
    def reject_all(cls, space: StateSpace) -> "PolicyTable":
        return cls(np.zeros(space.size, np.int8), np.full(space.size, -1),
                   np.zeros((space.size, space.n), bool))

    def __eq__(self, other):
        return (np.array_equal(self.arrival_kind, other.arrival_kind)
                and np.array_equal(self.arrival_queue, other.arrival_queue)
                and np.array_equal(self.destroy, other.destroy))


class _Transitions:
    """Index arithmetic shared by every backup over one parameter set."""

    def __init__(self, params: ModelParams):
        space = params.space
        L = space.levels
        w = space.weights[None, :]
        idx = np.arange(space.size, dtype=np.int64)[:, None]
        self.levels = L
        self.activate = L == -1
        self.feasible = L < space.B
        # admitting to an inactive queue moves it from -1 straight to 1
        self.arr_target = np.where(self.activate, idx + 2 * w, np.where(self.feasible, idx + w, idx))
        self.arr_offset = np.where(self.feasible, params.r - params.beta * self.activate, -np.inf)
        self.one = L == 1
        self.dep_keep = np.where(L > 0, idx - w, idx)
        self.dep_destroy = np.where(self.one, idx - 2 * w, self.dep_keep)
        self.mu_eff = params.effective_rates
        self.delta = 1.0 / (self.mu_eff.sum(axis=1) + params.lam + params.gamma)
        self.cost = params.holding_rates


@lru_cache(maxsize=8)
def _transitions(params: ModelParams) -> _Transitions:
    return _Transitions(params)


def arrival_q_values(V: np.ndarray, params: ModelParams):
    """Per-action arrival brackets: ((size, n) admit values with -inf where infeasible, reject values)."""
    tr = _transitions(params)
    return V[tr.arr_target] + tr.arr_offset, V - params.f


def bellman_operator(V: np.ndarray, params: ModelParams) -> np.ndarray:
    """Apply one synchronous backup to every state."""
    tr = _transitions(params)
    admit = (V[tr.arr_target] + tr.arr_offset).max(axis=1)
    arrival = np.maximum(admit, V - params.f)
    depart = np.maximum(V[tr.dep_keep], V[tr.dep_destroy] - params.psi)
    return tr.delta * ((tr.mu_eff * depart).sum(axis=1) + params.lam * arrival - tr.cost)


def _tie_break_arrival(admit, reject, levels, eps=EPS_TIE):
    S, n = admit.shape
    best = admit.max(axis=1)
    cand = admit >= best[:, None] - eps
    act = levels == -1
    # order: schedule before activate, then lowest level, then lowest index
    key = act * (n * (levels.max() + 3)) + (levels + 1) * n + np.arange(n)[None, :]
    key = np.where(cand, key, np.iinfo(np.int64).max)
    queue = key.argmin(axis=1)
    admits = np.isfinite(best) & (best >= reject - eps)
    kind = np.where(admits, np.where(act[np.arange(S), queue], ACTIVATE, SCHEDULE), REJECT)
    return kind.astype(np.int8), np.where(admits, queue, -1)


def extract_policy(V: np.ndarray, params: ModelParams, eps: float = EPS_TIE) -> PolicyTable:
    tr = _transitions(params)
    admit, reject = arrival_q_values(V, params)
    kind, queue = _tie_break_arrival(admit, reject, tr.levels, eps)
    destroy = tr.one & (V[tr.dep_destroy] - params.psi > V[tr.dep_keep] + eps)
    return PolicyTable(kind, queue, destroy)


def bellman_backup(V, state, params: ModelParams):
    """Backup at a single state, written out term by term.

    Returns ``(value, arrival_action, departure_actions)`` where the departure
    actions map each queue holding one task to ``"keep"`` or ``"destroy"``.
    """
    space = params.space
    q = tuple(state)
    k = space.encode(q)
    B = params.B

    def at(levels):
        return V[space.encode(levels)]

    def shifted(i, d):
        return tuple(x + d if j == i else x for j, x in enumerate(q))

    rate = params.lam + params.gamma
    total = 0.0
    departures = {}
    for i, qi in enumerate(q):
        if qi >= 2:
            total += params.mu[i] * at(shifted(i, -1))
        elif qi == 1:
            keep, destroy = at(shifted(i, -1)), at(shifted(i, -2)) - params.psi
            departures[i] = "destroy" if destroy > keep + EPS_TIE else "keep"
            total += params.mu[i] * max(keep, destroy)
        if qi >= 1:
            rate += params.mu[i]

    options = []
    for i, qi in enumerate(q):
        if qi == -1:
            options.append((at(shifted(i, 2)) - params.beta + params.r, ActivateAndSchedule(i), (1, qi, i)))
        elif qi < B:
            options.append((at(shifted(i, 1)) + params.r, Schedule(i), (0, qi, i)))
    reject = V[k] - params.f
    action = Reject
    best = reject
    if options:
        top = max(v for v, _, _ in options)
        if top >= reject - EPS_TIE:
            _, action, _ = min((o for o in options if o[0] >= top - EPS_TIE), key=lambda o: o[2])
        best = max(top, reject)
    total += params.lam * best - holding_rate(q, params)
    return total / rate, action, departures


@numba.njit(cache=True)
def _sweep(V, out, arr_target, arr_offset, dep_keep, dep_destroy, mu_eff, delta, cost,
           lam, f, psi, in_place):
    # one backup over all states; returns the sup-norm change
    S, n = arr_target.shape
    src = out if in_place else V
    residual = 0.0
    for s in range(S):
        arrival = src[s] - f
        depart = 0.0
        for i in range(n):
            a = src[arr_target[s, i]] + arr_offset[s, i]
            if a > arrival:
                arrival = a
            m = mu_eff[s, i]
            if m > 0.0:
                keep = src[dep_keep[s, i]]
                gone = src[dep_destroy[s, i]] - psi
                depart += m * (keep if keep >= gone else gone)
        new = delta[s] * (depart + lam * arrival - cost[s])
        d = abs(new - V[s])
        if d > residual:
            residual = d
        out[s] = new
    return residual


@dataclass
class SolveResult:
    values: np.ndarray
    policy: PolicyTable
    iterations: int
    residual: float
    rho: float
    history: list = field(default_factory=list, repr=False)

    @property
    def error_bound(self) -> float:
        return self.rho / (1.0 - self.rho) * self.residual

    def summary(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual, "rho": self.rho,
                "error_bound": self.error_bound}


def value_iteration(params: ModelParams, tol: float = 1e-9, max_iters: int = 200_000,
                    v0: np.ndarray | None = None, gauss_seidel: bool = False) -> SolveResult:
    """Value iteration from ``v0`` (zeros by default) to sup-norm residual < tol.

    Sweeps are synchronous (double-buffered) unless ``gauss_seidel`` is set, in
    which case each backup reads the values already updated in the same sweep.
    Both schemes share the same fixed point.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    tr = _transitions(params)
    V = np.zeros(params.space.size) if v0 is None else np.array(v0, dtype=float)
    W = V.copy()
    args = (tr.arr_target, tr.arr_offset, tr.dep_keep, tr.dep_destroy, tr.mu_eff, tr.delta,
            tr.cost, params.lam, params.f, params.psi, gauss_seidel)
    history = []
    residual = math.inf
    for it in range(1, max_iters + 1):
        residual = _sweep(V, W, *args)
        V, W = W, V
        if gauss_seidel:
            W[:] = V
        if it % 100 == 0 or residual < tol:
            history.append(residual)
        if residual < tol:
            break
    else:
        raise ConvergenceError(f"value iteration did not reach tol={tol} in {max_iters} iterations "
                               f"(residual {residual:.3e})", history)
    log.debug("value iteration converged in %d iterations, residual %.3e", it, residual)
    return SolveResult(V, extract_policy(V, params), it, residual, params.contraction_modulus, history)


def _policy_system(params: ModelParams, policy: PolicyTable):
    """Sparse (A, b) with A V = b the linear fixed point of a fixed policy."""
    tr = _transitions(params)
    S, n = tr.levels.shape
    rows = np.arange(S)
    kind, queue = policy.arrival_kind, policy.arrival_queue
    qsafe = np.where(kind == REJECT, 0, queue)
    arr_target = np.where(kind == REJECT, rows, tr.arr_target[rows, qsafe])
    arr_reward = np.where(kind == REJECT, -params.f,
                          params.r - params.beta * (kind == ACTIVATE))
    dep_target = np.where(policy.destroy, tr.dep_destroy, tr.dep_keep)
    diag = params.gamma + params.lam + tr.mu_eff.sum(axis=1)
    A = sp.csr_matrix((diag, (rows, rows)), shape=(S, S))
    A = A - sp.csr_matrix((np.full(S, params.lam), (rows, arr_target)), shape=(S, S))
    A = A - sp.csr_matrix((tr.mu_eff.ravel(), (np.repeat(rows, n), dep_target.ravel())), shape=(S, S))
    b = params.lam * arr_reward - tr.cost - params.psi * (tr.mu_eff * policy.destroy).sum(axis=1)
    return A.tocsc(), b


def policy_evaluation(policy: PolicyTable, params: ModelParams) -> np.ndarray:
    """Discounted value of following ``policy`` forever, by a direct sparse solve."""
    policy.validate(params.space)
    A, b = _policy_system(params, policy)
    V = spla.spsolve(A, b)
    if not np.all(np.isfinite(V)):
        raise RuntimeError("singular policy system")
    return V


# --- exhaustive policy enumeration ------------------------------------------

def _state_options(params: ModelParams, s: int):
    """All feasible (arrival action, destroy set) pairs at state ``s`` with their linear rows."""
    space = params.space
    q = space.decode(s)
    S = space.size
    w = space.weights
    arrivals = [(Reject, s, -params.f)]
    for i, qi in enumerate(q):
        if qi == -1:
            arrivals.append((ActivateAndSchedule(i), s + 2 * int(w[i]), params.r - params.beta))
        elif qi < params.B:
            arrivals.append((Schedule(i), s + int(w[i]), params.r))
    ones = [i for i, qi in enumerate(q) if qi == 1]
    out = []
    for action, target, reward in arrivals:
        for bits in itertools.product((False, True), repeat=len(ones)):
            destroyed = frozenset(i for i, d in zip(ones, bits) if d)
            row = np.zeros(S)
            row[s] += params.gamma + params.lam
            row[target] -= params.lam
            b = params.lam * reward - holding_rate(q, params)
            for i, qi in enumerate(q):
                if qi >= 1:
                    row[s] += params.mu[i]
                    step = 2 if i in destroyed else 1
                    row[s - step * int(w[i])] -= params.mu[i]
                    if i in destroyed:
                        b -= params.mu[i] * params.psi
            out.append(((action, destroyed), row, b))
    return out


def _orbit_map(params: ModelParams, options):
    """Representatives of queue-permutation orbits and, per state, the option map from its representative."""
    space = params.space
    rep_of = {}
    mapping = {}
    for s in range(space.size):
        q = space.decode(s)
        for perm in itertools.permutations(range(space.n)):
            # r[i] = q[perm[i]] so that queue i of r plays the role of queue perm[i] of q
            r = tuple(q[perm[i]] for i in range(space.n))
            rs = space.encode(r)
            if rs in rep_of and rep_of[rs] == rs:
                break
        else:
            rep_of[s] = s
            continue
        rep_of[s] = rs
        lookup = {key: k for k, (key, _, _) in enumerate(options[s])}
        table = []
        for (action, destroyed), _, _ in options[rs]:
            mapped = action if action.kind == REJECT else ArrivalAction(action.kind, perm[action.queue])
            table.append(lookup[(mapped, frozenset(perm[i] for i in destroyed))])
        mapping[s] = np.array(table)
    return rep_of, mapping


def count_policies(params: ModelParams) -> int:
    options = [_state_options(params, s) for s in range(params.space.size)]
    return math.prod(len(o) for o in options)


def brute_force_solve(params: ModelParams, max_policies: int = 10**6, chunk: int = 4096,
                      return_count: bool = False):
    """Pointwise maximum of the exact values of every stationary deterministic policy.

    When the full policy count exceeds ``max_policies`` and all queues are
    interchangeable, the enumeration is restricted to permutation-equivariant
    policies: the optimal value is permutation invariant, so a greedy optimal
    policy can be chosen inside that class and the maximum is unchanged.
    """
    space = params.space
    S = space.size
    options = [_state_options(params, s) for s in range(S)]
    full = math.prod(len(o) for o in options)
    if full <= max_policies:
        free = list(range(S))
        expand = None
    else:
        reduced = None
        if params.symmetric:
            rep_of, mapping = _orbit_map(params, options)
            free = sorted(set(rep_of.values()))
            reduced = math.prod(len(options[s]) for s in free)
        if reduced is None or reduced > max_policies:
            raise OracleTooLargeError(
                f"{full} feasible policies"
                + (f" ({reduced} permutation-equivariant)" if reduced else "")
                + f" exceed the limit of {max_policies}", full if reduced is None else reduced)
        pos = {s: k for k, s in enumerate(free)}

        def expand(choice):
            out = np.empty((choice.shape[0], S), dtype=np.int64)
            for s in range(S):
                rep = rep_of[s]
                c = choice[:, pos[rep]]
                out[:, s] = c if rep == s else mapping[s][c]
            return out

    rows = [np.array([o[1] for o in opts]) for opts in options]
    rhs = [np.array([o[2] for o in opts]) for opts in options]
    radices = np.array([len(options[s]) for s in free], dtype=np.int64)
    total = math.prod(int(r) for r in radices)
    best = np.full(S, -np.inf)
    for start in range(0, total, chunk):
        ids = np.arange(start, min(start + chunk, total), dtype=np.int64)
        choice = np.empty((ids.size, radices.size), dtype=np.int64)
        rem = ids.copy()
        for k in range(radices.size - 1, -1, -1):
            rem, choice[:, k] = np.divmod(rem, radices[k])
        if expand is not None:
            choice = expand(choice)
        A = np.stack([rows[s][choice[:, s]] for s in range(S)], axis=1)
        b = np.stack([rhs[s][choice[:, s]] for s in range(S)], axis=1)
        V = np.linalg.solve(A, b[..., None])[..., 0]
        np.maximum(best, V.max(axis=0), out=best)
    if return_count:
        return best, total
    return best


# --- serialization ---------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_solution_csv(fh, values: np.ndarray, policy: PolicyTable, space: StateSpace) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    n = space.n
    writer.writerow(["index", *[f"q{i + 1}" for i in range(n)], "value", "arrival",
                     *[f"d{i + 1}" for i in range(n)]])
    L = space.levels
    for s in range(space.size):
        deps = ["D" if policy.destroy[s, i] else ("K" if L[s, i] == 1 else "-") for i in range(n)]
        writer.writerow([s, *L[s].tolist(), _fmt(values[s]), policy.arrival(s).code, *deps])


def read_solution_csv(fh, space: StateSpace):
    """Inverse of :func:`write_solution_csv`; returns ``(values, policy)``."""
    reader = csv.DictReader(fh)
    S, n = space.size, space.n
    values = np.full(S, np.nan)
    kind = np.zeros(S, np.int8)
    queue = np.full(S, -1)
    destroy = np.zeros((S, n), bool)
    seen = 0
    for row in reader:
        s = int(row["index"])
        state = tuple(int(row[f"q{i + 1}"]) for i in range(n))
        if space.encode(state) != s:
            raise ValueError(f"row {s}: state {state} does not match its index")
        values[s] = float(row["value"])
        a = ArrivalAction.from_code(row["arrival"])
        kind[s], queue[s] = a.kind, a.queue
        destroy[s] = [row[f"d{i + 1}"] == "D" for i in range(n)]
        seen += 1
    if seen != S:
        raise ValueError(f"expected {S} rows, read {seen}")
    policy = PolicyTable(kind, queue, destroy)
    policy.validate(space)
    return values, policy
