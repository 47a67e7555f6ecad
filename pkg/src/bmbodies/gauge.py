"""Certified two-sided gauge (Minkowski functional) evaluation.

For a hull body K and point x, gauge(K, x) returns lo <= |x|_K <= hi
with hi - lo <= tol * max(hi, 1e-12).  The lower bound comes from a dual
feasible direction y (h_K(y) <= 1, lo = <x, y>), the upper bound from an
explicit decomposition of x into weighted component points, so both
certificates can be rechecked independently of the solver that found
them.

Polyhedral bodies reduce to a single linear program.  Euclidean ball
components make the dual body smooth, so the dual maximum is found by a
small nonlinear solve first; its ball directions are exactly the sphere
atoms the decomposition LP needs, and a short column-generation loop
remains as a safety net.  Both bounds are recomputed from closed forms
after the solvers finish, so solver inaccuracy cannot leak into them.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog, minimize

from .bodies import (
    Ball,
    HullBody,
    SignedPoints,
    circumradius_upper,
    inradius_lower,
    support_function,
    support_many,
)

__all__ = ["GaugeResult", "GaugeToleranceError", "gauge", "component_value"]


class GaugeToleranceError(RuntimeError):
    """Gap failed to close within the iteration budget; carries the best
    certified bounds found."""

    def __init__(self, message: str, lo: float, hi: float):
        super().__init__(message)
        self.lo = lo
        self.hi = hi


@dataclass
class GaugeResult:
    """Certified bracket of the gauge value.

    dual_witness y satisfies h_K(y) <= 1 and <x, y> = lo.  pieces is a
    list of (component_index, vector, value) with sum(vectors) = x up to
    a rigorously bounded residual and sum(values) = hi.
    """

    lo: float
    hi: float
    dual_witness: np.ndarray
    pieces: list = field(default_factory=list)
    rounds: int = 0


def component_value(comp, z: np.ndarray, n: int) -> float:
    """Exact gauge of z with respect to a single component (inf when z
    lies outside the component's span)."""
    if isinstance(comp, Ball):
        if comp.support is not None:
            mask = np.zeros(n, dtype=bool)
            mask[comp.support] = True
            if np.any(z[~mask] != 0.0):
                return math.inf
            sub = z[comp.support]
        else:
            sub = z
        if comp.p == 1.0:
            return float(np.abs(sub).sum()) / comp.radius
        if comp.p == 2.0:
            return float(np.sqrt((sub * sub).sum())) / comp.radius
        return float(np.abs(sub).max()) / comp.radius
    best = math.inf
    if comp.unconditional:
        for g in comp.points:
            ag = np.abs(g)
            bad = (ag == 0.0) & (z != 0.0)
            if np.any(bad):
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(ag > 0.0, np.abs(z) / ag, 0.0)
            best = min(best, float(ratio.max()))
        return best
    for g in comp.points:
        denom = float(g @ g)
        cw = float(z @ g) / denom
        if np.all(z == cw * g):
            best = min(best, abs(cw))
    return best


def _best_single_component(body: HullBody, z: np.ndarray):
    best_val, best_idx = math.inf, -1
    for j, comp in enumerate(body.components):
        val = component_value(comp, z, body.dim)
        if val < best_val:
            best_val, best_idx = val, j
    return best_val, best_idx


def _dual_candidates(body: HullBody, z: np.ndarray):
    n = body.dim
    cands = [z]
    sg = np.sign(z)
    if np.any(sg != 0.0):
        cands.append(sg)
    imax = int(np.argmax(np.abs(z)))
    e = np.zeros(n)
    e[imax] = 1.0 if z[imax] >= 0 else -1.0
    cands.append(e)
    ys = np.stack(cands)
    hs = support_many(body, ys)
    lo, best = -math.inf, None
    for y, h in zip(ys, hs):
        if h <= 0.0:
            continue
        val = float(z @ y) / h
        if val > lo:
            lo, best = val, y / h
    return lo, best


def _static_lp(body: HullBody):
    cached = body._cache.get("gauge_lp")
    if cached is not None:
        return cached
    n = body.dim
    nv = 0
    nub = 0
    cvec = []
    eq_r, eq_c, eq_v = [], [], []
    ub_r, ub_c, ub_v = [], [], []
    blocks = []
    ball2 = []

    def add_box(j, sup, w):
        nonlocal nv, nub
        k = sup.size
        p0, m0, t0 = nv, nv + k, nv + 2 * k
        eq_r.extend(sup.tolist() * 2)
        eq_c.extend(range(p0, p0 + k))
        eq_c.extend(range(m0, m0 + k))
        eq_v.extend([1.0] * k + [-1.0] * k)
        cvec.extend([0.0] * (2 * k) + [1.0])
        for i in range(k):
            ub_r.extend([nub, nub, nub])
            ub_c.extend([p0 + i, m0 + i, t0])
            ub_v.extend([1.0, 1.0, -w[i]])
            nub += 1
        blocks.append(("box", j, sup, w, p0, m0, t0))
        nv += 2 * k + 1

    for j, comp in enumerate(body.components):
        if isinstance(comp, SignedPoints):
            if comp.unconditional:
                for g in comp.points:
                    sup = np.nonzero(g)[0]
                    add_box(j, sup, np.abs(g[sup]))
            else:
                for g in comp.points:
                    sup = np.nonzero(g)[0]
                    eq_r.extend(sup.tolist() * 2)
                    eq_c.extend([nv] * sup.size + [nv + 1] * sup.size)
                    eq_v.extend(g[sup].tolist() + (-g[sup]).tolist())
                    cvec.extend([1.0, 1.0])
                    blocks.append(("seg", j, g, nv))
                    nv += 2
        else:
            sup = np.arange(n) if comp.support is None else comp.support
            if comp.p == 1.0:
                start = nv
                for i in sup:
                    eq_r.extend([int(i), int(i)])
                    eq_c.extend([nv, nv + 1])
                    eq_v.extend([comp.radius, -comp.radius])
                    cvec.extend([1.0, 1.0])
                    nv += 2
                blocks.append(("ball1", j, sup, comp.radius, start))
            elif comp.p == math.inf:
                add_box(j, sup, np.full(sup.size, comp.radius))
            else:
                # static coordinate atoms +-r e_i inscribe the cross-polytope;
                # they pin the LP dual coordinatewise (|y_i| <= 1/r) so column
                # generation only has to resolve the remaining round part
                start = nv
                for i in sup:
                    eq_r.extend([int(i), int(i)])
                    eq_c.extend([nv, nv + 1])
                    eq_v.extend([comp.radius, -comp.radius])
                    cvec.extend([1.0, 1.0])
                    nv += 2
                ball2.append((j, sup, comp.radius, start))
                blocks.append(("ball2", j, sup, comp.radius, start))

    static = {
        "nv": nv,
        "nub": nub,
        "c": np.asarray(cvec),
        "A_eq": sparse.coo_matrix(
            (eq_v, (eq_r, eq_c)), shape=(n, nv)
        ).tocsc(),
        "A_ub": sparse.coo_matrix(
            (ub_v, (ub_r, ub_c)), shape=(nub, nv)
        ).tocsc()
        if nub
        else None,
        "blocks": blocks,
        "ball2": ball2,
    }
    body._cache["gauge_lp"] = static
    return static


def _extract(body, static, atom_dirs, xsol, z):
    """Rebuild the decomposition from an LP solution; returns (hi, pieces)
    with component values recomputed from exact closed forms."""
    n = body.dim
    nv = static["nv"]
    pieces = []
    assembled = np.zeros(n)
    for blk in static["blocks"]:
        if blk[0] == "box":
            _, j, sup, w, p0, m0, _ = blk
            diff = xsol[p0 : p0 + sup.size] - xsol[m0 : m0 + sup.size]
            if np.abs(diff).max(initial=0.0) <= 1e-15:
                continue
            vec = np.zeros(n)
            vec[sup] = diff
            val = float((np.abs(diff) / w).max())
            pieces.append([j, vec, val])
            assembled += vec
        elif blk[0] == "seg":
            _, j, g, a0 = blk
            cw = xsol[a0] - xsol[a0 + 1]
            if abs(cw) <= 1e-15:
                continue
            vec = cw * g
            pieces.append([j, vec, abs(cw)])
            assembled += vec
        elif blk[0] == "ball1":
            _, j, sup, radius, start = blk
            w = xsol[start : start + 2 * sup.size]
            diff = radius * (w[0::2] - w[1::2])
            if np.abs(diff).max(initial=0.0) <= 1e-15:
                continue
            vec = np.zeros(n)
            vec[sup] = diff
            pieces.append([j, vec, float(np.abs(diff).sum()) / radius])
            assembled += vec
    pos = nv
    for (j, sup, radius, start), dirs in zip(static["ball2"], atom_dirs):
        w = xsol[start : start + 2 * sup.size]
        acc = radius * (w[0::2] - w[1::2])
        for d in dirs:
            acc += radius * xsol[pos] * d
            pos += 1
        if np.abs(acc).max(initial=0.0) > 1e-15:
            vec = np.zeros(n)
            vec[sup] = acc
            pieces.append([j, vec, float(np.sqrt(acc @ acc)) / radius])
            assembled += vec
    resid = z - assembled
    rnorm = float(np.sqrt(resid @ resid))
    hi = sum(p[2] for p in pieces)
    if rnorm > 0.0:
        hi += rnorm / inradius_lower(body)
    return hi, pieces


def _dual_nlp(body: HullBody, z: np.ndarray, y0: np.ndarray):
    """Numerically maximize <z, y> over the dual body {h_K(y) <= 1}.

    Sign-symmetric bodies reduce to the positive orthant aligned with z;
    otherwise y splits as p - q with p, q >= 0, which represents the
    same feasible set because every row is monotone in |y|.  The result
    is a search direction only: callers certify it through the exact
    support function, so residual solver infeasibility cannot leak into
    the reported bounds.
    """
    n = body.dim
    lin_rows = []
    quads = []
    segs = []
    ub_abs = np.full(n, np.inf)
    for comp in body.components:
        if isinstance(comp, SignedPoints):
            if comp.unconditional:
                lin_rows.extend(np.abs(g) for g in comp.points)
            else:
                segs.extend(comp.points)
        else:
            sup = np.arange(n) if comp.support is None else comp.support
            if comp.p == 1.0:
                ub_abs[sup] = np.minimum(ub_abs[sup], 1.0 / comp.radius)
            elif comp.p == math.inf:
                row = np.zeros(n)
                row[sup] = 1.0
                lin_rows.append(row)
            else:
                quads.append((sup, 1.0 / comp.radius**2))

    sym = not segs
    if sym:
        s = np.where(z >= 0.0, 1.0, -1.0)
        c = np.abs(z)
        to_y = lambda u: s * u
        hi_bnd = np.where(np.isfinite(ub_abs), ub_abs, np.inf)
        bounds = [(0.0, b if math.isfinite(b) else None) for b in ub_abs]
        mats = [np.stack(lin_rows)] if lin_rows else []
        w0 = np.clip(np.abs(y0), 0.0, hi_bnd)
    else:
        c = np.concatenate([z, -z])
        to_y = lambda w: w[:n] - w[n:]
        hi_bnd = np.where(np.isfinite(ub_abs), ub_abs, np.inf)
        bounds = [(0.0, b if math.isfinite(b) else None) for b in ub_abs] * 2
        mats = []
        if lin_rows:
            r_abs = np.stack(lin_rows)
            mats.append(np.concatenate([r_abs, r_abs], axis=1))
        if segs:
            g_mat = np.stack(segs)
            g_w = np.concatenate([g_mat, -g_mat], axis=1)
            mats.append(np.concatenate([g_w, -g_w], axis=0))
        w0 = np.concatenate(
            [
                np.clip(np.maximum(y0, 0.0), 0.0, hi_bnd),
                np.clip(np.maximum(-y0, 0.0), 0.0, hi_bnd),
            ]
        )

    cons = []
    if mats:
        rows = np.concatenate(mats, axis=0)
        cons.append(
            {
                "type": "ineq",
                "fun": lambda w, rows=rows: 1.0 - rows @ w,
                "jac": lambda w, rows=rows: -rows,
            }
        )
    for sup, rr in quads:
        if sym:

            def f(u, sup=sup, rr=rr):
                v = u[sup]
                return rr - v @ v

            def j(u, sup=sup):
                g = np.zeros(u.size)
                g[sup] = -2.0 * u[sup]
                return g

        else:

            def f(w, sup=sup, rr=rr):
                v = w[:n][sup] - w[n:][sup]
                return rr - v @ v

            def j(w, sup=sup):
                g = np.zeros(w.size)
                v = w[:n][sup] - w[n:][sup]
                g[sup] = -2.0 * v
                g[n + sup] = 2.0 * v
                return g

        cons.append({"type": "ineq", "fun": f, "jac": j})

    res = minimize(
        lambda w: -float(c @ w),
        w0,
        jac=lambda w: -c,
        bounds=bounds,
        constraints=cons,
        method="SLSQP",
        options={"maxiter": 400, "ftol": 1e-14},
    )
    if not np.all(np.isfinite(res.x)):
        return None
    return to_y(res.x)


def gauge(body: HullBody, x, tol: float = 1e-6, max_rounds: int = 60) -> GaugeResult:
    """Certified gauge bracket of x with respect to body.

    Raises GaugeToleranceError (carrying the best lo/hi) if the relative
    gap cannot be closed within max_rounds column-generation rounds.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (body.dim,):
        raise ValueError(f"point shape {x.shape} != ({body.dim},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("point entries must be finite")
    scale = float(np.sqrt(x @ x))
    if scale == 0.0:
        return GaugeResult(lo=0.0, hi=0.0, dual_witness=np.zeros(body.dim))
    z = x / scale

    # closed forms run on x itself: they are scale-free ratios, and body
    # vertices then come out exact; only the LP works on the unit vector z
    hi_best, j_best = _best_single_component(body, x)
    pieces_best = [[j_best, x.copy(), hi_best]] if math.isfinite(hi_best) else []
    lo_best, y_best = _dual_candidates(body, x)
    lo_best = max(lo_best, scale / circumradius_upper(body))
    if y_best is None:
        y_best = np.zeros(body.dim)

    def finish(rounds):
        return GaugeResult(
            lo=min(lo_best, hi_best),
            hi=hi_best,
            dual_witness=y_best,
            pieces=pieces_best,
            rounds=rounds,
        )

    def gap_ok():
        return hi_best - lo_best <= tol * max(hi_best, 1e-12)

    if math.isfinite(hi_best) and gap_ok():
        return finish(0)

    static = _static_lp(body)
    atom_dirs = [[] for _ in static["ball2"]]
    seen = [set() for _ in static["ball2"]]

    def push_atom(which, vec):
        nrm = float(np.sqrt(vec @ vec))
        if nrm <= 0.0:
            return False
        d = vec / nrm
        key = tuple(np.round(d, 12))
        if key in seen[which]:
            return False
        seen[which].add(key)
        atom_dirs[which].append(d)
        return True

    for which, (j, sup, _r, _s) in enumerate(static["ball2"]):
        push_atom(which, z[sup])

    if static["ball2"]:
        y0 = y_best if np.any(y_best != 0.0) else z
        y_nlp = _dual_nlp(body, z, y0)
        if y_nlp is not None and np.all(np.isfinite(y_nlp)):
            h = support_function(body, y_nlp)
            if h > 0.0:
                cand = float(x @ y_nlp) / h
                if cand > lo_best:
                    lo_best, y_best = cand, y_nlp / h
            for which, (j, sup, _r, _s) in enumerate(static["ball2"]):
                push_atom(which, y_nlp[sup])

    n = body.dim
    y_hist = deque(maxlen=4)
    for rounds in range(1, max_rounds + 1):
        cols_r, cols_c, cols_v = [], [], []
        natoms = 0
        for (j, sup, radius, _s), dirs in zip(static["ball2"], atom_dirs):
            for d in dirs:
                cols_r.extend(sup.tolist())
                cols_c.extend([natoms] * sup.size)
                cols_v.extend((radius * d).tolist())
                natoms += 1
        if natoms:
            atom_mat = sparse.coo_matrix(
                (cols_v, (cols_r, cols_c)), shape=(n, natoms)
            ).tocsc()
            a_eq = sparse.hstack([static["A_eq"], atom_mat], format="csc")
            cvec = np.concatenate([static["c"], np.ones(natoms)])
            a_ub = static["A_ub"]
            if a_ub is not None:
                a_ub = sparse.hstack(
                    [a_ub, sparse.csc_matrix((a_ub.shape[0], natoms))], format="csc"
                )
        else:
            a_eq, cvec, a_ub = static["A_eq"], static["c"], static["A_ub"]

        res = linprog(
            cvec,
            A_ub=a_ub,
            b_ub=np.zeros(a_ub.shape[0]) if a_ub is not None else None,
            A_eq=a_eq,
            b_eq=z,
            bounds=(0, None),
            method="highs",
        )
        if res.status != 0:
            raise RuntimeError(f"gauge LP failed (status {res.status}): {res.message}")

        hi_lp, pieces_lp = _extract(body, static, atom_dirs, res.x, z)
        if hi_lp * scale < hi_best:
            hi_best = hi_lp * scale
            pieces_best = [[j, vec * scale, val * scale] for j, vec, val in pieces_lp]

        y_raw = np.asarray(res.eqlin.marginals, dtype=float)
        y_hist.append(y_raw)
        # the marginals of successive restricted LPs oscillate around the
        # true dual optimum; their running mean settles much faster
        y_avg = np.mean(y_hist, axis=0) if len(y_hist) > 1 else None
        cand_ys = [y_raw, -y_raw]
        if y_avg is not None:
            cand_ys.extend([y_avg, -y_avg])
        hs = support_many(body, np.stack(cand_ys))
        for y_try, h in zip(cand_ys, hs):
            if h > 0.0:
                cand = float(x @ y_try) / h
                if cand > lo_best:
                    lo_best, y_best = cand, y_try / h

        if gap_ok():
            break

        added = False
        for which, (j, sup, radius, _s) in enumerate(static["ball2"]):
            for y_src in cand_ys:
                ysub = y_src[sup]
                if radius * float(np.sqrt(ysub @ ysub)) > 1.0 + 1e-12:
                    added |= push_atom(which, ysub)
        # the mixture direction of the Euclidean piece in the current
        # decomposition is the exact column the restricted LP is missing
        for piece in pieces_lp:
            for which, (j, sup, _r, _s) in enumerate(static["ball2"]):
                if piece[0] == j and piece[2] > 1e-15:
                    added |= push_atom(which, piece[1][sup])
        if not added:
            break
    else:
        rounds = max_rounds

    if not gap_ok():
        raise GaugeToleranceError(
            f"tolerance not reached: lo={lo_best:.12g}, "
            f"hi={hi_best:.12g}, tol={tol}",
            lo_best,
            hi_best,
        )
    return finish(rounds)
