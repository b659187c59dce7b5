"""Compiled inner loops.

Lists are stored as a dense block (``item_at``/``pos_of`` indexed 1..M)
plus two int64 dictionaries for anything beyond M; a missing dictionary
entry means the identity arrangement.  Random inputs are drawn by the
callers with numpy ``Generator`` objects and passed in as arrays, so every
kernel is deterministic given its inputs.
"""

import numpy as np
from numba import njit, types
from numba.typed import Dict

TRANSPOSITION = 0
MOVE_TO_FRONT = 1
STATIC = 2


def new_far():
    return Dict.empty(key_type=types.int64, value_type=types.int64)


# --- dense + sparse list primitives ------------------------------------------


@njit(cache=True)
def _pos(pos_of, far_pos, item):
    if item < pos_of.shape[0]:
        return pos_of[item]
    if item in far_pos:
        return far_pos[item]
    return item


@njit(cache=True)
def _item(item_at, far_item, p):
    if p < item_at.shape[0]:
        return item_at[p]
    if p in far_item:
        return far_item[p]
    return p


@njit(cache=True)
def _put(item_at, pos_of, far_item, far_pos, item, p):
    if p < item_at.shape[0]:
        item_at[p] = item
    else:
        far_item[p] = item
    if item < pos_of.shape[0]:
        pos_of[item] = p
    else:
        far_pos[item] = p


@njit(cache=True)
def _swap_forward(item_at, pos_of, far_item, far_pos, p):
    """Exchange the items at positions p-1 and p (p >= 2)."""
    a = _item(item_at, far_item, p - 1)
    b = _item(item_at, far_item, p)
    _put(item_at, pos_of, far_item, far_pos, b, p - 1)
    _put(item_at, pos_of, far_item, far_pos, a, p)


# --- list traces --------------------------------------------------------------


@njit(cache=True)
def list_trace(
    items,
    policy,
    item_at,
    pos_of,
    far_item,
    far_pos,
    step0,
    burn,
    batch_len,
    cost_hist,
    prefix_i,
    prefix_hist,
    pi_dense,
    rb_every,
    rb_acc,
    rb_count,
    frontier,
):
    """Apply ``items`` as consecutive requests.

    Costs and prefix maxima are read from the pre-request state.  Steps with
    global index < ``burn`` are applied but not recorded.  Histograms have a
    final overflow bin.  Returns the updated frontier.
    """
    nb = cost_hist.shape[0]
    hcap = cost_hist.shape[1] - 1
    xcap = rb_acc.shape[1] - 1
    n_support = pi_dense.shape[0] - 1
    for s in range(items.shape[0]):
        t = step0 + s
        j = items[s]
        p = _pos(pos_of, far_pos, j)
        if t >= burn:
            b = (t - burn) // batch_len
            if b >= nb:
                b = nb - 1
            cost_hist[b, min(p, hcap)] += 1
            if prefix_i > 0:
                m = 0
                for k in range(1, prefix_i + 1):
                    q = _pos(pos_of, far_pos, k)
                    if q > m:
                        m = q
                prefix_hist[b, min(m, hcap)] += 1
            if rb_every > 0 and (t - burn) % rb_every == 0:
                acc = 0.0
                for q in range(n_support, 0, -1):
                    acc += pi_dense[item_at[q]]
                    if q - 1 <= xcap:
                        rb_acc[b, q - 1] += acc
                rb_count[b] += 1
        if policy == TRANSPOSITION:
            if p > 1:
                _swap_forward(item_at, pos_of, far_item, far_pos, p)
                if p > frontier:
                    frontier = p
        elif policy == MOVE_TO_FRONT:
            if p > 1:
                for q in range(p, 1, -1):
                    _swap_forward(item_at, pos_of, far_item, far_pos, q)
                if p > frontier:
                    frontier = p
    return frontier


# --- constrained exclusion process ----------------------------------------------


@njit(cache=True)
def caep_run(z, choice, u, p_left, record_every, step0, burn, kappa_hist, codes, slot_base):
    """Uniformised CAEP: particle ``choice[s]`` tries left if ``u[s] < p_left``.

    ``z`` is 1-based (z[0] unused) and updated in place.  After every
    ``record_every``-th post-burn-in event the deviation z[n] - n is
    histogrammed; when ``slot_base > 0`` the configuration code
    sum_j z[j] * slot_base**(j-1) is counted in ``codes`` (overflow: -1).
    Returns (moves, blocked).
    """
    n = z.shape[0] - 1
    kcap = kappa_hist.shape[0] - 1
    moves = 0
    blocked = 0
    for s in range(choice.shape[0]):
        j = choice[s]
        if u[s] < p_left:
            target = z[j] - 1
            free = target >= 1 and (j == 1 or z[j - 1] < target)
        else:
            target = z[j] + 1
            free = j == n or z[j + 1] > target
        if free:
            z[j] = target
            moves += 1
        else:
            blocked += 1
        t = step0 + s
        if t >= burn and (t - burn) % record_every == 0:
            kappa_hist[min(z[n] - n, kcap)] += 1
            if slot_base > 0:
                code = 0
                scale = 1
                for k in range(1, n + 1):
                    if z[k] >= slot_base:
                        code = -1
                        break
                    code += z[k] * scale
                    scale *= slot_base
                if code in codes:
                    codes[code] += 1
                else:
                    codes[code] = 1
    return moves, blocked


# --- coupled original / modified lists --------------------------------------------

# slots of the integer ``stats`` vector filled by coupled_run
ST_EVENTS = 0  # uniformised events processed
ST_REAL = 1  # events that requested something from L or Lhat
ST_TO_L = 2
ST_TO_H = 3
ST_AUGMENT = 4  # accepted augmentation events (only Lhat)
ST_REORDER = 5  # reorder exchanges applied to Lhat
ST_MAX_PHI = 6
ST_Z_LEFT = 7
ST_Z_RIGHT = 8
ST_LEFT_EXPOSURE = 9  # sum over events of #{j <= i : phi_j = 1}
ST_RIGHT_EXPOSURE = 10  # sum over events of #{j > i : phi_j = 1}
N_STATS = 11


@njit(cache=True)
def _pi_far(j, far_kind, far_a, far_b):
    if far_kind == 1:
        return far_a * float(j) ** (-far_b)
    if far_kind == 2:
        return far_a * far_b ** (j - 1)
    return 0.0


@njit(cache=True)
def coupled_run(
    is_ghost,
    draw,
    mark,
    dt,
    thr,
    pi_dense,
    far_kind,
    far_a,
    far_b,
    support,
    L_item,
    L_pos,
    L_far_item,
    L_far_pos,
    H_item,
    H_pos,
    H_far_item,
    H_far_pos,
    clock,
    stats,
    log_rows,
    log_time,
    log_start,
    maxx_hist,
    z_hist,
):
    """Run the original list L and modified list Lhat over pre-drawn events.

    Row ``s`` is an original request for item ``draw[s]`` when
    ``is_ghost[s] == 0``; otherwise it is an augmentation candidate for the
    successor (in Lhat) of sublist item ``draw[s]`` in 1..thr.  ``mark[s]``
    is the thinning / acceptance uniform.  ``pi_dense[j]`` is pi_j for the
    dense range; far items use ``_pi_far``.  ``support`` is N, or 0 for an
    infinite list.

    Rows of ``log_rows`` (item, to_L, to_H, phi, max_X, Z_i) are written for
    real events with global index in [log_start, log_start + len).
    Returns the chunk-local index of a domination violation, or -1.
    """
    pi_i = pi_dense[thr]
    if support == 0 or thr < support:
        if thr + 1 < pi_dense.shape[0]:
            pi_next = pi_dense[thr + 1]
        else:
            pi_next = _pi_far(thr + 1, far_kind, far_a, far_b)
    else:
        pi_next = 0.0
    n_log = log_rows.shape[0]
    hcap = maxx_hist.shape[0] - 1
    for s in range(is_ghost.shape[0]):
        clock[0] += dt[s]
        stats[ST_EVENTS] += 1
        # phi census on the pre-event Lhat
        n_left = 0
        n_right = 0
        for k in range(1, thr + 1):
            q = _pos(H_pos, H_far_pos, k)
            if q > 1 and _item(H_item, H_far_item, q - 1) > thr:
                n_left += 1
            if (support == 0 or q < support) and _item(H_item, H_far_item, q + 1) > thr:
                n_right += 1
        if n_left + n_right > stats[ST_MAX_PHI]:
            stats[ST_MAX_PHI] = n_left + n_right
        stats[ST_LEFT_EXPOSURE] += n_left
        stats[ST_RIGHT_EXPOSURE] += n_right

        j = 0
        to_L = 0
        to_H = 0
        phi = 0
        if is_ghost[s] == 0:
            j = draw[s]
            to_L = 1
            qh = _pos(H_pos, H_far_pos, j)
            if qh > 1:
                pred = _item(H_item, H_far_item, qh - 1)
                if j <= thr:
                    phi = 1 if pred > thr else 0
                    if phi == 1 and mark[s] * pi_dense[j] < pi_i:
                        to_H = 1
                else:
                    phi = 1 if pred <= thr else 0
                    to_H = phi
        else:
            q = _pos(H_pos, H_far_pos, draw[s])
            if support == 0 or q < support:
                succ = _item(H_item, H_far_item, q + 1)
                if succ > thr:
                    if succ < pi_dense.shape[0]:
                        pj = pi_dense[succ]
                    else:
                        pj = _pi_far(succ, far_kind, far_a, far_b)
                    if mark[s] * pi_next < pi_next - pj:
                        j = succ
                        to_H = 1
                        phi = 1
                        stats[ST_AUGMENT] += 1

        same_a = 0
        same_b = 0
        if to_L == 1:
            stats[ST_TO_L] += 1
            p = _pos(L_pos, L_far_pos, j)
            if p > 1:
                other = _item(L_item, L_far_item, p - 1)
                _swap_forward(L_item, L_pos, L_far_item, L_far_pos, p)
                if (other <= thr) == (j <= thr):
                    same_a = j
                    same_b = other
        if to_H == 1:
            stats[ST_TO_H] += 1
            p = _pos(H_pos, H_far_pos, j)
            _swap_forward(H_item, H_pos, H_far_item, H_far_pos, p)
            if j <= thr:
                stats[ST_Z_LEFT] += 1
            else:
                stats[ST_Z_RIGHT] += 1
        if same_a != 0:
            # L exchanged two items of one sublist; reordering mirrors it in Lhat
            pa = _pos(H_pos, H_far_pos, same_a)
            pb = _pos(H_pos, H_far_pos, same_b)
            _put(H_item, H_pos, H_far_item, H_far_pos, same_a, pb)
            _put(H_item, H_pos, H_far_item, H_far_pos, same_b, pa)
            stats[ST_REORDER] += 1

        mx = 0
        zi = 0
        bad = False
        for k in range(1, thr + 1):
            x = _pos(L_pos, L_far_pos, k)
            xh = _pos(H_pos, H_far_pos, k)
            if x > xh:
                bad = True
            if x > mx:
                mx = x
            if xh > zi:
                zi = xh
        maxx_hist[min(mx, hcap)] += 1
        z_hist[min(zi, hcap)] += 1
        if to_L == 1 or to_H == 1:
            r = stats[ST_REAL] - log_start
            if r >= 0 and r < n_log:
                log_time[r] = clock[0]
                log_rows[r, 0] = j
                log_rows[r, 1] = to_L
                log_rows[r, 2] = to_H
                log_rows[r, 3] = phi
                log_rows[r, 4] = mx
                log_rows[r, 5] = zi
            stats[ST_REAL] += 1
        if bad:
            return s
    return -1
