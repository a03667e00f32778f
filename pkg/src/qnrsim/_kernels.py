"""Hot numeric kernels, compiled with numba when available.

Every kernel is written once as plain Python/numpy and exposed twice:
``numba_impl`` (``@njit``) and ``numpy_impl`` (the same source run by the
interpreter, or a vectorised numpy equivalent).  ``active`` points at one
of them; set ``QNRSIM_DISABLE_NUMBA=1`` to force the fallback.

Dense routing tensors use the (n, n, p) layout, ``A[i, j, f] == 1`` iff
flow ``f`` crosses link ``i -> j``.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("QNRSIM_DISABLE_NUMBA", "") not in ("1", "true", "yes")

# status codes returned by bnb_run
BNB_DONE = 0
BNB_PAUSED = 1


# --------------------------------------------------------------------------
# dense constraint sweeps (one per constraint family)
# --------------------------------------------------------------------------

def _link_load_loop(A, demand):
    n = A.shape[0]
    p = A.shape[2]
    out = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            s = 0
            for f in range(p):
                if A[i, j, f]:
                    s += demand[f]
            out[i, j] = s
    return out


def _link_load_np(A, demand):
    return np.tensordot(A.astype(np.int64), demand.astype(np.int64), axes=([2], [0]))


def _into_node_loop(A, node):
    # sum_i A[i, node[f], f]
    n = A.shape[0]
    p = A.shape[2]
    out = np.zeros(p, dtype=np.int64)
    for f in range(p):
        v = node[f]
        s = 0
        for i in range(n):
            s += A[i, v, f]
        out[f] = s
    return out


def _into_node_np(A, node):
    p = A.shape[2]
    return A[:, node, np.arange(p)].sum(axis=0, dtype=np.int64)


def _out_of_node_loop(A, node):
    # sum_j A[node[f], j, f]
    n = A.shape[0]
    p = A.shape[2]
    out = np.zeros(p, dtype=np.int64)
    for f in range(p):
        v = node[f]
        s = 0
        for j in range(n):
            s += A[v, j, f]
        out[f] = s
    return out


def _out_of_node_np(A, node):
    p = A.shape[2]
    return A[node, :, np.arange(p)].sum(axis=1, dtype=np.int64)


def _out_degree_loop(A):
    n = A.shape[0]
    p = A.shape[2]
    out = np.zeros((n, p), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            for f in range(p):
                out[i, f] += A[i, j, f]
    return out


def _out_degree_np(A):
    return A.sum(axis=1, dtype=np.int64)


def _balance_loop(A):
    # out-degree minus in-degree per (switch, flow)
    n = A.shape[0]
    p = A.shape[2]
    out = np.zeros((n, p), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            for f in range(p):
                a = A[i, j, f]
                out[i, f] += a
                out[j, f] -= a
    return out


def _balance_np(A):
    return A.sum(axis=1, dtype=np.int64) - A.sum(axis=0, dtype=np.int64)


def _count_diff_loop(A, A0):
    n = A.shape[0]
    p = A.shape[2]
    s = 0
    for i in range(n):
        for j in range(n):
            for f in range(p):
                if A[i, j, f] != A0[i, j, f]:
                    s += 1
    return s


def _count_diff_np(A, A0):
    return int(np.count_nonzero(A != A0))


# --------------------------------------------------------------------------
# branch and bound over per-flow candidate paths
# --------------------------------------------------------------------------
#
# Candidates are stored CSR-style:
#   flow f owns candidates cand_ptr[f] .. cand_ptr[f+1]-1   (global ids)
#   candidate c uses links   link_idx[link_ptr[c] .. link_ptr[c+1]-1]
#   cand_cost[c]             SFTC of this candidate against the flow's A0 slice
#   cost_rank[cand_ptr[f]:cand_ptr[f+1]]  the flow's candidates sorted by
#                            (cost, local index)
#
# At every node each unfixed flow is given its cheapest candidate that fits
# the residual on its own (the "greedy completion").  If the completion fits
# jointly it is optimal and lexicographically smallest for the subtree, so
# the node closes without branching.  Otherwise the search branches on the
# largest unfixed flow crossing the most overloaded link.
#
# Search state (mutated in place so a paused run can be resumed):
#   stack_flow[d]  flow fixed at depth d
#   stack_next[d]  position in child_order tried at depth d (-1 = none)
#   chosen[f]      local candidate index of flow f, -1 while unfixed
#   residual       per-link residual capacity
#   src_need[v]    demand of unfixed flows sourced at switch v
#   dst_need[v]    demand of unfixed flows sunk at switch v
#   ws_flow        (4, p) scratch: greedy local index, extra cost of the next
#                  cheapest fitting candidate, conflict mark, number of
#                  overloaded links crossed
#   ws_link        (L,) scratch: load of the greedy completion
#   ws_item        (p,) scratch: flows crossing one link
#   child_order    per-flow order in which a branched flow's candidates are
#                  tried (see _order_children); the greedy candidate comes
#                  last so the first dive moves flows off hot links
#   state = [depth, fixed cost, best cost, nodes, started]

SCAN_INFEASIBLE = -1
SCAN_COMPLETE = -1
_BIG = 1 << 40


def _lex_can_improve(chosen, best_vec):
    """True if some completion of the partial assignment is lexicographically
    smaller (flow index order) than best_vec."""
    p = best_vec.shape[0]
    for f in range(p):
        c = chosen[f]
        if c < 0:
            if best_vec[f] > 0:
                return True
        else:
            if c < best_vec[f]:
                return True
            if c > best_vec[f]:
                return False
    return False


def _completion_lex_smaller(chosen, greedy, best_vec):
    """Is chosen, with unfixed flows filled from greedy, lex smaller than best_vec?"""
    p = best_vec.shape[0]
    for f in range(p):
        c = chosen[f]
        if c < 0:
            c = greedy[f]
        if c < best_vec[f]:
            return True
        if c > best_vec[f]:
            return False
    return False


def _fits(c, f, link_ptr, link_idx, demand, residual):
    for k in range(link_ptr[c], link_ptr[c + 1]):
        if residual[link_idx[k]] < demand[f]:
            return False
    return True


def _uses(c, link, link_ptr, link_idx):
    for k in range(link_ptr[c], link_ptr[c + 1]):
        if link_idx[k] == link:
            return True
    return False


def _node_cut(ptr, links, residual, need):
    # aggregate cut: a switch must be able to emit (absorb) what its unfixed
    # flows source (sink)
    for v in range(need.shape[0]):
        if need[v] > 0:
            cap = 0
            for k in range(ptr[v], ptr[v + 1]):
                cap += residual[links[k]]
            if cap < need[v]:
                return False
    return True


def _cover(items, m, excess, demand, ws_flow, split):
    """Lower bound on the cost of picking flows from items[:m] whose demand
    totals >= excess (cost ws_flow[1], divided by ws_flow[3] if split).

    Larger of the LP relaxation and a cardinality bound: at least k flows
    must go, k fixed by the largest demands, so the k cheapest costs are due.
    """
    cost = np.empty(m, dtype=np.float64)
    ratio = np.empty(m, dtype=np.float64)
    dem = np.empty(m, dtype=np.int64)
    for q in range(m):
        f = items[q]
        cost[q] = float(ws_flow[1, f])
        if split:
            cost[q] /= ws_flow[3, f]
        dem[q] = demand[f]
        ratio[q] = cost[q] / dem[q]
    order = np.argsort(ratio, kind="mergesort")
    need = excess
    lp = 0.0
    for q in range(m):
        o = order[q]
        if dem[o] >= need:
            lp += ratio[o] * need
            break
        lp += cost[o]
        need -= dem[o]
    dem_sorted = np.sort(dem)
    cost_sorted = np.sort(cost)
    need = excess
    card = 0.0
    for q in range(m):
        card += cost_sorted[q]
        need -= dem_sorted[m - 1 - q]
        if need <= 0:
            break
    return max(lp, card)


def _scan(chosen, rank, cand_ptr, link_ptr, link_idx, cand_cost, cost_rank,
          demand, residual, out_ptr, out_links, src_need, in_ptr, in_links, dst_need,
          ws_flow, ws_link, ws_item, out):
    """Bound the unfixed flows and pick the next one to branch on.

    Writes out[0] = admissible lower bound on the cost of the unfixed flows
    (SCAN_INFEASIBLE if the node has no feasible completion) and out[1] =
    flow to branch on, or SCAN_COMPLETE if the greedy completion in
    ws_flow[0] is feasible (then out[0] is its exact cost).
    """
    p = chosen.shape[0]
    n_links = residual.shape[0]
    for k in range(n_links):
        ws_link[k] = 0
    total = 0
    for f in range(p):
        ws_flow[0, f] = -1
        ws_flow[1, f] = _BIG
        ws_flow[2, f] = 0
        ws_flow[3, f] = 0
        if chosen[f] >= 0:
            continue
        lo = cand_ptr[f]
        first = -1
        for r in range(lo, cand_ptr[f + 1]):
            c = cost_rank[r]
            if _fits(c, f, link_ptr, link_idx, demand, residual):
                if first < 0:
                    first = c
                else:
                    ws_flow[1, f] = cand_cost[c] - cand_cost[first]
                    break
        if first < 0:
            out[0] = SCAN_INFEASIBLE
            out[1] = f
            return
        ws_flow[0, f] = first - lo
        total += cand_cost[first]
        for k in range(link_ptr[first], link_ptr[first + 1]):
            ws_link[link_idx[k]] += demand[f]
    if not _node_cut(out_ptr, out_links, residual, src_need) or not _node_cut(in_ptr, in_links, residual, dst_need):
        out[0] = SCAN_INFEASIBLE
        out[1] = -1
        return

    worst = -1
    worst_excess = 0
    for k in range(n_links):
        excess = ws_link[k] - residual[k]
        if excess > worst_excess:
            worst_excess = excess
            worst = k
    if worst < 0:
        out[0] = total
        out[1] = SCAN_COMPLETE
        return

    # conflict bound: flows of the greedy completion must leave every
    # overloaded link until its excess is gone; a leaving flow pays at least
    # its extra cost ws_flow[1].  The LP relaxation of each link's covering
    # knapsack is summed two ways and the larger total is used:
    #   disjoint  links whose flow sets do not meet, full costs
    #   shared    every overloaded link, each flow's cost split evenly over
    #             the overloaded links it crosses
    for f in range(p):
        g = ws_flow[0, f]
        if g < 0:
            continue
        c = cand_ptr[f] + g
        for q in range(link_ptr[c], link_ptr[c + 1]):
            if ws_link[link_idx[q]] > residual[link_idx[q]]:
                ws_flow[3, f] += 1
    disjoint = 0.0
    shared = 0.0
    for k in range(n_links):
        excess = ws_link[k] - residual[k]
        if excess <= 0:
            continue
        m = 0
        movable = 0
        clash = False
        for f in range(p):
            g = ws_flow[0, f]
            if g < 0 or not _uses(cand_ptr[f] + g, k, link_ptr, link_idx):
                continue
            if ws_flow[2, f] != 0:
                clash = True
            if ws_flow[1, f] < _BIG:
                ws_item[m] = f
                m += 1
                movable += demand[f]
        if movable < excess:
            out[0] = SCAN_INFEASIBLE
            out[1] = -1
            return
        shared += _cover(ws_item, m, excess, demand, ws_flow, True)
        if not clash:
            disjoint += _cover(ws_item, m, excess, demand, ws_flow, False)
            for q in range(m):
                ws_flow[2, ws_item[q]] = 1
            for f in range(p):
                g = ws_flow[0, f]
                if g >= 0 and ws_flow[1, f] >= _BIG and _uses(cand_ptr[f] + g, k, link_ptr, link_idx):
                    ws_flow[2, f] = 1
    extra = int(np.ceil(max(disjoint, shared) - 1e-6))

    pick = -1
    for f in range(p):
        g = ws_flow[0, f]
        if g < 0 or ws_flow[1, f] >= _BIG or not _uses(cand_ptr[f] + g, worst, link_ptr, link_idx):
            continue
        if pick < 0 or demand[f] > demand[pick] or (demand[f] == demand[pick] and rank[f] < rank[pick]):
            pick = f
    out[0] = total + extra
    out[1] = pick


def _order_children(f, greedy, cand_ptr, link_ptr, link_idx, cand_cost, demand,
                    residual, ws_link, child_order):
    """Fill child_order[cand_ptr[f]:cand_ptr[f+1]] with f's candidates: those
    that stay within capacity on top of the greedy completion first, then
    the rest, by cost within each group; the greedy candidate goes last."""
    lo = cand_ptr[f]
    n_c = cand_ptr[f + 1] - lo
    g = lo + greedy
    key = np.empty(n_c, dtype=np.int64)
    for q in range(n_c):
        c = lo + q
        if c == g:
            key[q] = 3 * _BIG
            continue
        dirty = 0
        for k in range(link_ptr[c], link_ptr[c + 1]):
            l = link_idx[k]
            load = ws_link[l] + demand[f]
            if _uses(g, l, link_ptr, link_idx):
                load -= demand[f]
            if load > residual[l]:
                dirty = 1
                break
        key[q] = dirty * _BIG + cand_cost[c] * n_c + q
    order = np.argsort(key)
    for q in range(n_c):
        child_order[lo + q] = lo + order[q]


def _undo(f, c, link_ptr, link_idx, demand, residual, src_of, dst_of, src_need, dst_need):
    for k in range(link_ptr[c], link_ptr[c + 1]):
        residual[link_idx[k]] += demand[f]
    src_need[src_of[f]] += demand[f]
    dst_need[dst_of[f]] += demand[f]


def _bnb_run(rank, cand_ptr, link_ptr, link_idx, cand_cost, cost_rank, demand,
             src_of, dst_of, out_ptr, out_links, in_ptr, in_links, residual, src_need,
             dst_need, stack_flow, stack_next, child_order, chosen, best_vec, ws_flow,
             ws_link, ws_item, state, node_limit):
    p = chosen.shape[0]
    out = np.zeros(2, dtype=np.int64)
    depth = state[0]
    fixed = state[1]
    best = state[2]
    nodes = state[3]
    stop_at = nodes + node_limit

    if state[4] == 0:
        state[4] = 1
        _scan(chosen, rank, cand_ptr, link_ptr, link_idx, cand_cost, cost_rank, demand, residual,
              out_ptr, out_links, src_need, in_ptr, in_links, dst_need, ws_flow, ws_link, ws_item, out)
        nodes += 1
        if out[0] >= 0 and out[1] == SCAN_COMPLETE:
            if out[0] < best or (out[0] == best and _completion_lex_smaller(chosen, ws_flow[0], best_vec)):
                best = out[0]
                for f in range(p):
                    best_vec[f] = ws_flow[0, f]
            depth = -1
        elif out[0] < 0 or out[0] > best or (out[0] == best and not _lex_can_improve(chosen, best_vec)):
            depth = -1
        else:
            depth = 0
            stack_flow[0] = out[1]
            stack_next[0] = -1
            _order_children(out[1], ws_flow[0, out[1]], cand_ptr, link_ptr, link_idx, cand_cost,
                            demand, residual, ws_link, child_order)

    while depth >= 0:
        f = stack_flow[depth]
        lo = cand_ptr[f]
        n_c = cand_ptr[f + 1] - lo
        r = stack_next[depth] + 1
        descend = False
        while r < n_c:
            c = child_order[lo + r]
            if _fits(c, f, link_ptr, link_idx, demand, residual):
                for k in range(link_ptr[c], link_ptr[c + 1]):
                    residual[link_idx[k]] -= demand[f]
                src_need[src_of[f]] -= demand[f]
                dst_need[dst_of[f]] -= demand[f]
                fixed += cand_cost[c]
                chosen[f] = c - lo
                nodes += 1
                if fixed <= best:
                    _scan(chosen, rank, cand_ptr, link_ptr, link_idx, cand_cost, cost_rank, demand,
                          residual, out_ptr, out_links, src_need, in_ptr, in_links, dst_need,
                          ws_flow, ws_link, ws_item, out)
                    if out[0] >= 0:
                        bound = fixed + out[0]
                        if out[1] == SCAN_COMPLETE:
                            if bound < best or (bound == best and _completion_lex_smaller(chosen, ws_flow[0], best_vec)):
                                best = bound
                                for g in range(p):
                                    best_vec[g] = chosen[g] if chosen[g] >= 0 else ws_flow[0, g]
                        elif bound < best or (bound == best and _lex_can_improve(chosen, best_vec)):
                            descend = True
                if descend:
                    stack_next[depth] = r
                    break
                _undo(f, c, link_ptr, link_idx, demand, residual, src_of, dst_of, src_need, dst_need)
                fixed -= cand_cost[c]
                chosen[f] = -1
            r += 1
        if descend:
            depth += 1
            stack_flow[depth] = out[1]
            stack_next[depth] = -1
            _order_children(out[1], ws_flow[0, out[1]], cand_ptr, link_ptr, link_idx, cand_cost,
                            demand, residual, ws_link, child_order)
        else:
            stack_next[depth] = -1
            depth -= 1
            if depth >= 0:
                f = stack_flow[depth]
                c = cand_ptr[f] + chosen[f]
                _undo(f, c, link_ptr, link_idx, demand, residual, src_of, dst_of, src_need, dst_need)
                fixed -= cand_cost[c]
                chosen[f] = -1
        if nodes >= stop_at and depth >= 0:
            state[0] = depth
            state[1] = fixed
            state[2] = best
            state[3] = nodes
            return BNB_PAUSED

    state[0] = -1
    state[1] = 0
    state[2] = best
    state[3] = nodes
    return BNB_DONE


numpy_impl = SimpleNamespace(
    name="numpy",
    link_load=_link_load_np,
    into_node=_into_node_np,
    out_of_node=_out_of_node_np,
    out_degree=_out_degree_np,
    balance=_balance_np,
    count_diff=_count_diff_np,
    bnb_run=_bnb_run,
)

if NUMBA_AVAILABLE:
    _njit = numba.njit(cache=True, nogil=True)
    # the search loop calls its helpers by global name; compile a copy of each
    # function whose globals resolve those names to the jitted helpers
    import types as _types

    _jit_globals = dict(globals())

    def _rebind(fn):
        return _types.FunctionType(fn.__code__, _jit_globals, fn.__name__)

    for _fn in (_lex_can_improve, _completion_lex_smaller, _fits, _uses, _node_cut, _cover, _scan, _order_children, _undo):
        _jit_globals[_fn.__name__] = numba.njit(nogil=True, cache=True)(_rebind(_fn))

    numba_impl = SimpleNamespace(
        name="numba",
        link_load=_njit(_link_load_loop),
        into_node=_njit(_into_node_loop),
        out_of_node=_njit(_out_of_node_loop),
        out_degree=_njit(_out_degree_loop),
        balance=_njit(_balance_loop),
        count_diff=_njit(_count_diff_loop),
        bnb_run=numba.njit(nogil=True, cache=True)(_rebind(_bnb_run)),
    )
else:  # pragma: no cover
    numba_impl = None

active = numba_impl if USE_NUMBA else numpy_impl

# loop versions kept importable for tests that pit the two routes against each other
loop_impl = SimpleNamespace(
    name="loop",
    link_load=_link_load_loop,
    into_node=_into_node_loop,
    out_of_node=_out_of_node_loop,
    out_degree=_out_degree_loop,
    balance=_balance_loop,
    count_diff=_count_diff_loop,
)
