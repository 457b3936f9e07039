import itertools

import numpy as np
import pytest

from vnfqueue.analysis import (ComparabilityError, build_indicators, check_build_threshold,
                               check_domination, compute_alpha, count_rejecting_states,
                               long_run_metrics, stationarity_residual, stationary_distribution)
from vnfqueue.cost_model import ModelParams
from vnfqueue.solver import (ACTIVATE, SCHEDULE, PolicyTable, brute_force_solve, value_iteration)
from vnfqueue.state_space import StateSpace

DESK = ModelParams(lam=2.0, n=2, B=3, r=1.0, f=10.0, beta=2.0, psi=1.0, kappa=1.0, h=0.5,
                   eta=(1.0, 1.5, 2.0), gamma=0.05)


def comparable_pairs(space, same_idle=True, idle=None):
    """All (a, b) with b >= a componentwise; naive enumeration."""
    states = list(space.states())
    for a, b in itertools.product(states, repeat=2):
        if same_idle and any((x == -1) != (y == -1) for x, y in zip(a, b)):
            continue
        if idle is not None and not (a[idle] == -1 and b[idle] == -1):
            continue
        if all(y >= x for x, y in zip(a, b)):
            yield a, b


def naive_violations(V, space, eps):
    return sorted((b, a) for a, b in comparable_pairs(space) if V[space.encode(b)] > V[space.encode(a)] + eps)


@pytest.mark.parametrize("n,B", [(1, 2), (2, 3), (3, 2)])
def test_checked_pair_count_matches_enumeration(n, B):
    space = StateSpace(n, B)
    report = check_domination(np.zeros(space.size), space)
    assert report.checked_pairs == sum(1 for _ in comparable_pairs(space))
    assert report.ok


@pytest.mark.parametrize("seed", range(4))
def test_domination_violations_match_naive_scan(seed):
    space = StateSpace(3, 2)
    rng = np.random.default_rng(seed)
    # mostly decreasing in load, with a few planted bumps
    V = -space.task_totals.astype(float) + rng.normal(scale=0.3, size=space.size)
    report = check_domination(V, space, tol=1e-9, max_listed=10**6)
    expected = naive_violations(V, space, 1e-7)
    assert report.violation_count == len(expected)
    assert sorted((a, b) for a, b, _, _ in report.violations) == expected


def test_domination_listing_is_capped():
    space = StateSpace(2, 3)
    V = space.task_totals.astype(float)
    report = check_domination(V, space, max_listed=5)
    assert len(report.violations) == 5
    assert report.violation_count > 5


def test_domination_holds_on_desk_instance():
    res = value_iteration(DESK)
    assert check_domination(res.values, DESK.space).ok


def test_single_queue_values_decrease_with_load():
    p = ModelParams(lam=2.0, n=1, B=2, r=1.0, f=10.0, beta=2.0, psi=1.0, kappa=1.0, h=0.5,
                    eta=(1.0, 1.5), gamma=1.0)
    V = brute_force_solve(p)
    assert V[1] >= V[2] >= V[3]


def test_idle_active_queue_can_beat_empty_one():
    # an active empty queue cannot be retired until it serves a task, so with
    # expensive keep-alive and cheap rejection one waiting task is worth having
    p = ModelParams(lam=1.0, n=1, B=2, mu=5.0, f=1.0, kappa=10.0, gamma=1.0)
    V = brute_force_solve(p)
    assert V[p.space.encode((1,))] > V[p.space.encode((0,))] + 1.0
    report = check_domination(V, p.space)
    assert ((1,), (0,)) in [(a, b) for a, b, _, _ in report.violations]


def test_alpha():
    space = DESK.space
    V = value_iteration(DESK).values
    assert compute_alpha(V, (0, 1), (0, 1), space) == 0.0
    a, m, b = (0, 1), (1, 2), (3, 2)
    total = compute_alpha(V, a, b, space)
    assert total == pytest.approx(compute_alpha(V, a, m, space) + compute_alpha(V, m, b, space), abs=1e-12)
    assert compute_alpha(V, (0, -1), (2, -1), space) >= -1e-7
    with pytest.raises(ComparabilityError):
        compute_alpha(V, (0, -1), (0, 0), space)
    with pytest.raises(ComparabilityError):
        compute_alpha(V, (2, 0), (1, 3), space)


def naive_indicators(V, params, eps):
    """Strict/weak activation indicators from arrival values computed state by state."""
    space, B = params.space, params.B
    strict = np.zeros((space.size, params.n), bool)
    weak = np.zeros_like(strict)
    for s, q in enumerate(space.states()):
        opts = {}
        for i, x in enumerate(q):
            nxt = list(q)
            if x == -1:
                nxt[i] = 1
                opts[i] = V[space.encode(nxt)] - params.beta + params.r
            elif x < B:
                nxt[i] = x + 1
                opts[i] = V[space.encode(nxt)] + params.r
        reject = V[s] - params.f
        best = max([reject, *opts.values()])
        for i, x in enumerate(q):
            if x != -1:
                continue
            others = [reject] + [v for j, v in opts.items() if q[j] != -1]
            weak[s, i] = opts[i] >= best - eps
            strict[s, i] = weak[s, i] and opts[i] > max(others) + eps
    return strict, weak


def test_build_indicators_match_naive():
    V = value_iteration(DESK).values
    s1, w1 = build_indicators(V, DESK)
    s2, w2 = naive_indicators(V, DESK, 1e-9)
    assert np.array_equal(s1, s2) and np.array_equal(w1, w2)


@pytest.mark.parametrize("same_idle", [True, False])
def test_threshold_matches_naive_scan(same_idle):
    p = ModelParams(lam=2.5, n=3, B=2, r=0.0, f=6.0, beta=1.0, psi=0.5, kappa=0.5, h=1.0, gamma=0.3)
    V = value_iteration(p).values
    strict, weak = naive_indicators(V, p, 1e-9)
    expected, checked = [], 0
    for i in range(p.n):
        for a, b in comparable_pairs(p.space, same_idle, idle=i):
            if strict[p.space.encode(a), i]:
                checked += 1
                if not weak[p.space.encode(b), i]:
                    expected.append((a, b, i))
    report = check_build_threshold(V, p, same_idle=same_idle, max_listed=10**6)
    assert report.checked_pairs == checked
    assert sorted(report.violations) == sorted(expected)
    assert report.violation_count == len(expected)


def test_threshold_holds_on_desk_instance():
    report = check_build_threshold(value_iteration(DESK).values, DESK)
    assert report.ok and report.checked_pairs > 0


def test_threshold_vacuous_when_nothing_is_built():
    p = ModelParams(lam=4.0, n=2, B=2, f=1.0, beta=1000.0, kappa=1000.0, gamma=1.0)
    report = check_build_threshold(value_iteration(p).values, p)
    assert report.checked_pairs == 0 and report.ok


def test_rejecting_state_counts():
    space = StateSpace(2, 3)
    assert count_rejecting_states(PolicyTable.reject_all(space)) == 25
    assert count_rejecting_states(admit_always(space)) == 1


def admit_always(space):
    """Schedule into the first non-full active queue, else activate the first inactive one."""
    S = space.size
    kind = np.zeros(S, np.int8)
    queue = np.full(S, -1)
    for s, q in enumerate(space.states()):
        for i, x in enumerate(q):
            if 0 <= x < space.B:
                kind[s], queue[s] = SCHEDULE, i
                break
        else:
            for i, x in enumerate(q):
                if x == -1:
                    kind[s], queue[s] = ACTIVATE, i
                    break
    return PolicyTable(kind, queue, np.zeros((S, space.n), bool))


@pytest.mark.parametrize("method", ["power", "direct"])
def test_birth_death_stationary_law(method):
    p = ModelParams(lam=1.5, n=1, B=3, mu=2.0)
    dist = stationary_distribution(admit_always(p.space), p, method=method)
    rho = 0.75
    expected = np.array([0.0] + [rho ** k for k in range(4)])
    expected /= expected.sum()
    assert np.allclose(dist, expected, atol=1e-8)


def test_reject_all_stays_put():
    p = ModelParams(lam=2.0, n=2, B=2)
    dist = stationary_distribution(PolicyTable.reject_all(p.space), p)
    assert dist[0] == 1.0
    assert long_run_metrics(dist, p.space) == (0.0, 0.0)


def test_power_and_direct_agree_on_solved_policy():
    res = value_iteration(DESK)
    a = stationary_distribution(res.policy, DESK, method="power", tol=1e-13)
    b = stationary_distribution(res.policy, DESK, method="direct")
    assert np.abs(a - b).sum() < 1e-8
    assert a.sum() == pytest.approx(1.0)
    assert stationarity_residual(a, res.policy, DESK) < 1e-9


def test_long_run_metric_examples():
    space = StateSpace(2, 3)
    dist = np.zeros(space.size)
    dist[space.encode((0, 0))] = 1.0
    assert long_run_metrics(dist, space) == (2.0, 0.0)
    dist[:] = 0.0
    dist[space.encode((2, -1))] = dist[space.encode((1, 1))] = 0.5
    assert long_run_metrics(dist, space) == (1.5, 2.0)
