"""Compiled inner loops for long training runs.

These mirror the reference step functions in :mod:`syncmbq.learner` and the
samplers in :mod:`syncmbq.envs` exactly (same update order, same uniform
consumption); the test suite checks the two paths against each other.
"""

from __future__ import annotations

import numpy as np
from numba import njit

SYNCMBQ = 0
QLEARNING = 1

# integer loop state for the episodic kernel
CUR, EP_STEPS, TOTAL, EPISODES, N_STEP_LOG, N_EP_LOG, EP_SUCCESS = range(7)
# float loop state
EP_RETURN, LAST_RETURN = range(2)


@njit(cache=True)
def record(counts, visit, rsum, support, support_len, s, a, sp, r):
    A = visit.shape[1]
    if counts[s, a, sp] == 0:
        p = s * A + a
        support[p, support_len[p]] = sp
        support_len[p] += 1
    visit[s, a] += 1
    counts[s, a, sp] += 1
    rsum[s, a] += r


@njit(cache=True)
def state_values(q, terminal, out):
    S, A = q.shape
    for s in range(S):
        if terminal[s]:
            out[s] = 0.0
        else:
            m = q[s, 0]
            for a in range(1, A):
                if q[s, a] > m:
                    m = q[s, a]
            out[s] = m


@njit(cache=True)
def syncmbq_update(q, counts, visit, rsum, support, support_len, alpha, gamma, terminal, v):
    """In-place full-vector update; ``v`` is scratch of length S."""
    S, A = q.shape
    state_values(q, terminal, v)
    for s in range(S):
        for a in range(A):
            n = visit[s, a]
            if n == 0:
                q[s, a] = (1.0 - alpha) * q[s, a]
                continue
            p = s * A + a
            # form P_hat entries first, as the reference does: a one-hot row
            # then yields v[s'] exactly, which keeps exact greedy ties intact
            acc = 0.0
            for j in range(support_len[p]):
                sp = support[p, j]
                acc += (counts[s, a, sp] / n) * v[sp]
            q[s, a] = (1.0 - alpha) * q[s, a] + alpha * (rsum[s, a] / n + gamma * acc)


@njit(cache=True)
def _inf_err(q, q_star):
    S, A = q.shape
    e = 0.0
    for s in range(S):
        for a in range(A):
            d = abs(q[s, a] - q_star[s, a])
            if d > e:
                e = d
    return e


@njit(cache=True)
def _max_abs(q):
    S, A = q.shape
    e = 0.0
    for s in range(S):
        for a in range(A):
            d = abs(q[s, a])
            if d > e:
                e = d
    return e


@njit(cache=True)
def _all_visited(visit):
    S, A = visit.shape
    for s in range(S):
        for a in range(A):
            if visit[s, a] == 0:
                return False
    return True


@njit(cache=True)
def iid_chunk(
    states, actions, next_states, rewards, step0,
    q, counts, visit, rsum, support, support_len,
    alpha, gamma, warmup, terminal, v,
    log_stride, q_star, has_star, log, n_log,
):
    """Process a block of i.i.d. transitions with SyncMBQ.

    ``step0`` is the global index of the block's first transition minus one.
    ``log`` rows: step, inf_error, all_visited, q_max_abs. Returns new n_log.
    """
    for i in range(states.shape[0]):
        k = step0 + i + 1
        record(counts, visit, rsum, support, support_len, states[i], actions[i], next_states[i], rewards[i])
        if k > warmup:
            syncmbq_update(q, counts, visit, rsum, support, support_len, alpha, gamma, terminal, v)
        if log_stride > 0 and k % log_stride == 0:
            log[n_log, 0] = k
            log[n_log, 1] = _inf_err(q, q_star) if has_star else np.nan
            log[n_log, 2] = 1.0 if _all_visited(visit) else 0.0
            log[n_log, 3] = _max_abs(q)
            n_log += 1
    return n_log


@njit(cache=True)
def _draw(cum, u):
    j = 0
    while cum[j] <= u:
        j += 1
    return j


@njit(cache=True)
def _greedy_choice(q, s, c, random_ties):
    A = q.shape[1]
    m = q[s, 0]
    for b in range(1, A):
        if q[s, b] > m:
            m = q[s, b]
    if not random_ties:
        for b in range(A):
            if q[s, b] == m:
                return b
    n = 0
    for b in range(A):
        if q[s, b] == m:
            n += 1
    pick = int(c * n)
    if pick > n - 1:
        pick = n - 1
    for b in range(A):
        if q[s, b] == m:
            if pick == 0:
                return b
            pick -= 1
    return A - 1


@njit(cache=True)
def episodic_chunk(
    buf, pos, ist, fst,
    q, counts, visit, rsum, support, support_len,
    env_next, env_cum, env_rew, terminal, success, start_cum,
    epsilon, random_ties, alpha, gamma, algorithm, warmup, max_ep_steps, max_episodes, max_steps,
    v, log_stride, q_star, has_star, step_log, ep_log,
):
    """Run epsilon-greedy episodes until the budget or the uniform buffer runs out.

    Loop state lives in ``ist``/``fst`` so a call can resume where the last
    one stopped. ``step_log`` rows: step, inf_error, episode_return,
    all_visited, q_max_abs. ``ep_log`` rows: episode, step, return, success,
    length. Returns the new buffer position.
    """
    A = q.shape[1]
    nbuf = buf.shape[0]
    while pos + 4 <= nbuf and ist[EPISODES] < max_episodes and ist[TOTAL] < max_steps:
        if ist[CUR] < 0:
            ist[CUR] = _draw(start_cum, buf[pos])
            pos += 1
            ist[EP_STEPS] = 0
            fst[EP_RETURN] = 0.0
        s = ist[CUR]
        u = buf[pos]
        c = buf[pos + 1]
        pos += 2
        if u < epsilon:
            a = int(c * A)
            if a > A - 1:
                a = A - 1
        else:
            a = _greedy_choice(q, s, c, random_ties)
        j = _draw(env_cum[s, a], buf[pos])
        pos += 1
        sp = env_next[s, a, j]
        r = env_rew[s, a, j]
        term = terminal[sp]
        ist[TOTAL] += 1
        ist[EP_STEPS] += 1
        fst[EP_RETURN] += r
        k = ist[TOTAL]
        if algorithm == SYNCMBQ:
            record(counts, visit, rsum, support, support_len, s, a, sp, r)
            if k > warmup:
                syncmbq_update(q, counts, visit, rsum, support, support_len, alpha, gamma, terminal, v)
        else:
            target = r
            if not term:
                m = q[sp, 0]
                for b in range(1, A):
                    if q[sp, b] > m:
                        m = q[sp, b]
                target += gamma * m
            q[s, a] = q[s, a] + alpha * (target - q[s, a])
            visit[s, a] += 1
        done = term or ist[EP_STEPS] >= max_ep_steps
        if done:
            n = ist[N_EP_LOG]
            ep_log[n, 0] = ist[EPISODES]
            ep_log[n, 1] = k
            ep_log[n, 2] = fst[EP_RETURN]
            ep_log[n, 3] = 1.0 if success[sp] else 0.0
            ep_log[n, 4] = ist[EP_STEPS]
            ist[N_EP_LOG] = n + 1
            ist[EPISODES] += 1
            fst[LAST_RETURN] = fst[EP_RETURN]
            ist[CUR] = -1
        else:
            ist[CUR] = sp
        if log_stride > 0 and k % log_stride == 0:
            n = ist[N_STEP_LOG]
            step_log[n, 0] = k
            step_log[n, 1] = _inf_err(q, q_star) if has_star else np.nan
            step_log[n, 2] = fst[LAST_RETURN]
            step_log[n, 3] = 1.0 if _all_visited(visit) else 0.0
            step_log[n, 4] = _max_abs(q)
            ist[N_STEP_LOG] = n + 1
    return pos
