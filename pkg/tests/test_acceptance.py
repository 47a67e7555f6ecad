"""End-to-end acceptance run: one test per shipped guarantee.

Each test exercises a full pipeline at its stated scale and tolerance;
the module test files cover the fine-grained contracts.
"""
import itertools
import json
import math
import time

import numpy as np
import yaml

from _oracles import OracleGauge, grid_bm_2x2
from bmbodies import cli
from bmbodies.bodies import Ball, HullBody, SignedPoints, ball_body, support_many
from bmbodies.concentration import mc_quadratic_tail, mc_small_ball
from bmbodies.distance import bm_upper, op_norm
from bmbodies.gauge import gauge
from bmbodies.linalg import spectral_interval
from bmbodies.randmodel import ModelParams, sample_body, substream
from bmbodies.symnet import build_net, certify_pair, enumerate_steps, level_count, lp_body


def test_rank_one_restricted_quadratic_matches_the_two_point_law():
    # keeping coordinate 0 has probability m/n and the restricted form
    # is its indicator, so |stat - m/n| is 0.75 w.p. 0.25, else 0.25
    n, m, trials = 20, 5, 10**5
    a = np.zeros((n, n))
    a[0, 0] = 1.0
    thresholds = [0.1, 0.4, 0.6, 0.9, 1.2]
    start = time.perf_counter()
    curve = mc_quadratic_tail(
        a, n, m, trials, thresholds=thresholds, stream=substream(2026, "accept/conc/two-point")
    )
    elapsed = time.perf_counter() - start
    exact = np.array([1.0, 0.25, 0.25, 0.0, 0.0])
    assert np.all(curve.wilson_lo <= exact)
    assert np.all(exact <= curve.wilson_hi)
    # thresholds sit strictly between the two atoms, so counts are exact
    assert curve.counts[0] == trials
    assert curve.counts[1] == curve.counts[2]
    assert curve.counts[3] == curve.counts[4] == 0
    assert elapsed < 10.0


def test_small_ball_probability_degenerates_correctly():
    n, m, trials = 20, 5, 10**5
    ident = mc_small_ball(
        np.eye(n), n, m, trials, stream=substream(2026, "accept/conc/small-ball/identity")
    )
    # the restricted norm of the identity is the constant sqrt(m)
    assert ident.threshold < math.sqrt(m)
    assert ident.count == 0
    assert ident.p_hat == 0.0

    rank_one = np.zeros((n, n))
    rank_one[0, 0] = 1.0
    est = mc_small_ball(
        rank_one, n, m, trials, stream=substream(2026, "accept/conc/small-ball/rank-one")
    )
    lo, hi = est.wilson
    assert lo <= 1.0 - m / n <= hi


def test_restricted_quadratic_mean_tracks_the_subset_fraction_of_trace():
    n, m, trials = 100, 10, 4000
    mats = substream(2026, "accept/centering/mats")
    for i in range(20):
        a = mats.normal(size=(n, n))
        curve = mc_quadratic_tail(
            a, n, m, trials, thresholds=[1.0], stream=substream(2026, f"accept/centering/{i}")
        )
        target = (m / n) * float(np.trace(a))
        assert curve.raw_se > 0.0
        assert abs(curve.raw_mean - target) <= 3.0 * curve.raw_se


def test_certified_gauge_brackets_a_membership_bisection_oracle():
    rng = substream(2026, "accept/gauge/bodies")
    for trial in range(50):
        n = int(rng.integers(2, 5))
        k = int(rng.integers(2, 6))
        comps = [
            SignedPoints(
                rng.normal(size=(k, n)) * rng.uniform(0.3, 2.0),
                unconditional=bool(trial % 2),
            )
        ]
        if trial % 2 or k < n:
            comps.append(Ball(float([1.0, 2.0, math.inf][trial % 3]), float(rng.uniform(0.2, 1.5))))
        body = HullBody(n, comps)
        x = rng.normal(size=n) * rng.uniform(0.2, 4.0)
        res = gauge(body, x, tol=1e-9)
        oracle = OracleGauge(body, rng=substream(2026, f"accept/gauge/search/{trial}"))
        est = oracle.value(x)
        assert oracle.queries <= 10**4
        gap = max(res.lo - est, est - res.hi, 0.0)
        assert gap <= 1e-4 * max(est, res.hi, 1e-12)


def test_model_bodies_sit_between_the_reference_balls():
    rng = substream(2026, "accept/sandwich")
    for _ in range(100):
        n = int(rng.integers(4, 65))
        m = int(rng.integers(1, n))
        params = ModelParams(n=n, delta=m / n, n_subsets=int(rng.integers(1, 13)))
        assert params.m == m
        body = sample_body(params, rng).body
        ys = rng.normal(size=(100, n))
        h = support_many(body, ys)
        l2 = np.linalg.norm(ys, axis=1)
        peak = np.abs(ys).max(axis=1)
        assert np.all(h >= params.delta * math.sqrt(n) * l2 * (1.0 - 1e-6))
        assert np.all(h <= math.sqrt(params.delta * n) * l2 * (1.0 + 1e-6))
        assert np.all(h <= params.delta * n * peak * (1.0 + 1e-6))


def _extreme_points(body):
    """Every vertex of a polytopal hull body, by full sign enumeration."""
    pts = []
    for c in body.components:
        if isinstance(c, SignedPoints):
            for g in np.asarray(c.points, dtype=float):
                if c.unconditional:
                    for signs in itertools.product((1.0, -1.0), repeat=body.dim):
                        pts.append(np.asarray(signs) * g)
                else:
                    pts.extend((g, -g))
        elif c.p == 1.0:
            for j in range(body.dim):
                e = np.zeros(body.dim)
                e[j] = c.radius
                pts.extend((e, -e))
        else:
            for signs in itertools.product((1.0, -1.0), repeat=body.dim):
                pts.append(c.radius * np.asarray(signs))
    return pts


def test_exhaustive_operator_norm_reproduces_full_sign_enumeration():
    rng = substream(2026, "accept/opnorm")
    for trial in range(100):
        n_src = int(rng.integers(2, 7))
        n_dst = int(rng.integers(2, 7))
        t = rng.normal(size=(n_dst, n_src))
        k = int(rng.integers(1, 4))
        comps = [SignedPoints(rng.normal(size=(k, n_src)), unconditional=bool(trial % 2))]
        if not trial % 2 or rng.random() < 0.5:
            comps.append(
                Ball(1.0 if trial % 4 < 2 else math.inf, float(rng.uniform(0.3, 1.5)))
            )
        src = HullBody(n_src, comps)
        p_dst = 1.0 if trial % 3 else math.inf
        r_dst = float(rng.uniform(0.5, 2.0))
        dst = HullBody(n_dst, (Ball(p_dst, r_dst),))
        res = op_norm(t, src, dst)

        if p_dst == 1.0:
            brute = max(float(np.abs(t @ p).sum()) / r_dst for p in _extreme_points(src))
        else:
            brute = max(float(np.abs(t @ p).max()) / r_dst for p in _extreme_points(src))
        assert res.mode == "exhaustive"
        assert res.lo == brute
        assert res.hi == brute


def test_planar_ball_distances_hit_their_calibration_windows():
    start = time.perf_counter()
    cross = ball_body(2, 1.0)
    cube = bm_upper(cross, ball_body(2, math.inf))
    disk = bm_upper(cross, ball_body(2, 2.0))
    grid_cube = grid_bm_2x2(1.0, math.inf)
    grid_disk = grid_bm_2x2(1.0, 2.0)
    elapsed = time.perf_counter() - start

    root2 = math.sqrt(2.0)
    assert cube.upper <= 1.0 + 1e-6
    assert root2 * (1.0 - 1e-6) <= disk.upper <= root2 * (1.0 + 1e-3)
    # the independent dense grid search lands in the same windows
    assert grid_cube <= 1.0 + 5e-3
    assert abs(grid_disk - root2) <= 5e-3
    assert elapsed < 60.0


def test_flat_spectral_blocks_exist_for_every_generated_spectrum():
    rng = substream(2026, "accept/spectra")
    n_half_checked = 0
    for trial in range(1000):
        n = 2 * int(rng.integers(4, 129))
        n_half = n // 2
        flavor = trial % 4
        if flavor == 0:
            # constant geometric decay, strictly less than a ratio of 2
            # per index, so some admissible block is always flat enough
            gaps = np.full(n - 1, float(rng.uniform(0.01, 1.0)))
        else:
            if flavor == 1:
                top = rng.uniform(0.0, 0.8, size=n_half - 1)
            elif flavor == 2:
                top = np.minimum(rng.exponential(0.5, size=n_half - 1), 0.95)
            else:
                top = np.zeros(n_half - 1)
                spots = rng.integers(0, max(1, n_half - 2), size=3)
                top[spots] = rng.uniform(1.0, 4.0, size=3)
            # the tail decays at least as fast as the top plus a pad, so
            # the derived block length leaves a flat window reachable
            bot = np.concatenate([top, [0.0]]) + 2.0 / n_half
            gaps = np.concatenate([top, bot])
        s = np.power(2.0, -np.concatenate([[0.0], np.cumsum(gaps)]))
        s /= s[-1]
        interval = spectral_interval(s, float(s[0]), c0=0.5)
        assert 1 <= interval.i1 < interval.i2 <= n_half
        assert interval.i2 - interval.i1 == interval.r
        ratio = s[interval.i1 - 1] / s[interval.i2 - 1]
        assert ratio <= 2.0
        assert interval.ratio == ratio
        n_half_checked += 1
    assert n_half_checked == 1000


def test_every_lp_family_member_certifies_against_its_net_representative():
    start = time.perf_counter()
    n, tau = 12, 2.0
    assert level_count(n, tau) == 5
    ps = [1.0 + 0.25 * i for i in range(13)] + [math.inf]
    bodies = [lp_body(n, p) for p in ps]
    net = build_net(bodies, tau)
    assert net.levels == 5
    family = enumerate_steps(n, net.levels)
    certified = 0
    for cell, rep in net.cell_reps:
        for pos in net.members[cell]:
            cert = certify_pair(
                bodies[pos],
                rep,
                family,
                tau,
                samples=10**4,
                stream=substream(2026, f"accept/net/{pos}"),
            )
            assert cert.granted
            assert cert.empirical_ok
            certified += 1
    assert certified == len(bodies)
    assert time.perf_counter() - start < 300.0


def test_payloads_are_identical_across_worker_counts(tmp_path):
    docs = {
        "conc": {
            "command": "conc",
            "params": {
                "n": 16,
                "m": 4,
                "trials": 20000,
                "statistic": "quadratic",
                "matrix": "gaussian",
                "thresholds": [0.05, 0.2, 0.4, 0.8],
            },
        },
        "separate": {
            "command": "separate",
            "params": {
                "n": 6,
                "delta": 0.5,
                "n_subsets": 2,
                "bodies": 3,
                "refine": False,
                "n_diag": 2,
            },
        },
    }
    for command, doc in docs.items():
        cfg = tmp_path / f"{command}.yaml"
        cfg.write_text(yaml.safe_dump(doc))
        runs = []
        for workers in (1, 4, 8):
            out = tmp_path / f"{command}-w{workers}"
            code = cli.main(
                [
                    command,
                    "--config",
                    str(cfg),
                    "--workers",
                    str(workers),
                    "--out",
                    str(out),
                    "--seed",
                    "77",
                ]
            )
            assert code == cli.EXIT_OK
            with open(out / f"{command}-records.jsonl", encoding="utf-8") as fh:
                recs = [json.loads(line) for line in fh if line.strip()]
            runs.append([(r["stream"], r["kind"], r["payload"]) for r in recs])
        assert len(runs[0]) > 0
        assert runs[0] == runs[1] == runs[2]
