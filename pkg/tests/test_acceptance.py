"""Acceptance suite: one test per criterion, each printing a PASS line.

Full-dataset benchmark numbers are not reproducible at this scale; the
criteria below are property- and oracle-based instead, with the synthetic
scene generator as ground truth.  Every pipeline run executed here is also
checked for the loss-cap invariant (no assigned pixel at or above epsilon).
"""

import time

import numpy as np

from conftest import smooth_noise_image
from oracles import brute_force_nnf
from planeflow import synth
from planeflow.cli import main, run_pipeline
from planeflow.config import RunConfig
from planeflow.homography import (Homography, RansacConfig, fit_dlt,
                                  ransac_homography, symmetric_errors)
from planeflow.imgcore import (FlowField, Image, OcclusionMask, compute_epe,
                               flow_to_color, make_color_wheel,
                               occlusion_scores, read_flo, write_flo)
from planeflow.patchmatch import PatchMatchConfig, compute_nnf
from planeflow.plane_match import color_consistency_loss


def _report(criterion, text):
    print(f"ACCEPTANCE CRITERION {criterion}: PASS - {text}")


def _assert_loss_cap(result, epsilon):
    """No assigned pixel ever carries loss >= epsilon (checked per level and
    on the merged field)."""
    for art in result["artifacts"]:
        mask = art.assignment.assigned_mask()
        if mask.any():
            assert art.assignment.loss[mask].max() < epsilon
    merged = result["merged"]
    if merged.flow.valid.any():
        assert merged.loss[merged.flow.valid].max() < epsilon


def _run(a, b, **cfg_kwargs):
    cfg = RunConfig(**cfg_kwargs)
    result = run_pipeline(a, b, cfg)
    _assert_loss_cap(result, cfg.epsilon)
    return result


def test_criterion_1_eval_produces_benchmark_table(tmp_path, capsys):
    # benchmark-scale numbers are out of reach here; the eval verb must still
    # produce the benchmark-format report for user-supplied frames, with no
    # numeric tolerance asserted
    gt = FlowField(np.full((20, 20), 1.5), np.full((20, 20), -0.5),
                   np.ones((20, 20), bool))
    est = FlowField(gt.u + 0.25, gt.v, gt.valid.copy())
    write_flo(gt, tmp_path / "gt.flo")
    write_flo(est, tmp_path / "est.flo")
    from planeflow.imgcore import write_mask_png

    occ = np.zeros((20, 20), bool)
    occ[:3] = True
    write_mask_png(occ, tmp_path / "occ.png")
    rc = main(["eval", str(tmp_path / "est.flo"), str(tmp_path / "gt.flo"),
               "--occ", str(tmp_path / "occ.png"), "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "EPE nocc." in out and "EPE occ." in out and "EPE all" in out
    assert (tmp_path / "eval.json").exists()
    _report(1, "eval verb emits the benchmark-format EPE table")


def test_criterion_2_homography_suite():
    start = time.time()
    rng = np.random.default_rng(42)

    # exact minimal DLT: symmetric reprojection below 1e-6 px
    m = np.eye(3)
    m[:2, 2] = (7.0, -3.0)
    m[2, 0] = 2e-4
    h_true = Homography(m)
    worst = 0.0
    for _ in range(50):
        src = rng.uniform(0, 200, (4, 2))
        if np.linalg.matrix_rank(np.c_[src, np.ones(4)]) < 3:
            continue
        try:
            h = fit_dlt(src, h_true.apply_points(src))
        except Exception:
            continue
        worst = max(worst, symmetric_errors(h, src, h_true.apply_points(src)).max())
    assert worst < 1e-6

    # 50% planted outliers: >= 95% of planted inliers in >= 99% of runs
    successes = 0
    runs = 200
    for seed in range(runs):
        r = np.random.default_rng(1000 + seed)
        src_in = r.uniform(0, 200, (50, 2))
        dst_in = h_true.apply_points(src_in)
        src_out = r.uniform(0, 200, (50, 2))
        dst_out = r.uniform(0, 200, (50, 2))
        src = np.vstack([src_in, src_out])
        dst = np.vstack([dst_in, dst_out])
        res = ransac_homography(src, dst, RansacConfig(rng_seed=seed))
        if res is None:
            continue
        recovered = np.intersect1d(res.inlier_indices, np.arange(50)).size
        if recovered >= 0.95 * 50:
            successes += 1
    elapsed = time.time() - start
    assert successes >= 0.99 * runs, f"only {successes}/{runs} runs recovered"
    assert elapsed < 5.0, f"homography suite took {elapsed:.2f}s"
    _report(2, f"DLT worst {worst:.2e} px; RANSAC {successes}/{runs} runs; "
               f"{elapsed:.2f}s")


def test_criterion_3_patchmatch_oracle(rng):
    start = time.time()
    a = smooth_noise_image(rng, 48, 48, 1, sigma=1.0)
    t = (6, -3)
    ys = np.clip(np.arange(48)[:, None] - t[1], 0, 47)
    xs = np.clip(np.arange(48)[None, :] - t[0], 0, 47)
    b = Image(a.data[ys, xs])
    cfg = PatchMatchConfig(patch_radius=3, iterations=8, rng_seed=21)
    nnf = compute_nnf(a, b, cfg)

    # interior pixels: full patch support inside both images at the offset
    gy, gx = np.mgrid[0:48, 0:48]
    interior = ((gx >= 3) & (gx + t[0] < 45) & (gx + t[0] >= 3)
                & (gy >= 3 - t[1]) & (gy + t[1] < 45) & (gy < 45))
    assert np.all(nnf.cost[interior] == 0.0)
    np.testing.assert_array_equal(nnf.off_u[interior], t[0])
    np.testing.assert_array_equal(nnf.off_v[interior], t[1])

    bu, bv, bc = brute_force_nnf(a.data, b.data, 3)
    assert np.all(bc[interior] == 0.0)
    np.testing.assert_array_equal(nnf.off_u[interior], bu[interior])
    np.testing.assert_array_equal(nnf.off_v[interior], bv[interior])

    assert np.all(np.diff(nnf.iteration_costs) <= 0.0)
    elapsed = time.time() - start
    assert elapsed < 10.0, f"oracle comparison took {elapsed:.2f}s"
    _report(3, f"48x48 exhaustive oracle matched, monotone cost; {elapsed:.2f}s")


def test_criterion_4_consistency_loss_contract():
    # hand-computed truncated-loss fixtures, exact to 1e-9
    a = Image(np.full((4, 4, 3), 0.50))
    b = Image(np.full((4, 4, 3), 0.53))
    loss = color_consistency_loss(a, b, Homography.identity(),
                                  np.array([2]), np.array([2]), 0.05)
    assert abs(loss[0] - 0.03) < 1e-9

    loss = color_consistency_loss(a, b, Homography.translation(100.0, 0.0),
                                  np.array([2]), np.array([2]), 0.05)
    assert abs(loss[0] - 0.05) < 1e-9  # out of bounds costs epsilon

    dark = Image(np.zeros((4, 4, 3)))
    lite = Image(np.ones((4, 4, 3)))
    loss = color_consistency_loss(dark, lite, Homography.identity(),
                                  np.array([1]), np.array([1]), 0.05)
    assert abs(loss[0] - 0.05) < 1e-9  # truncation at epsilon

    # the loss cap holds across the epsilon sweep on a real pipeline run
    a, b, _, _ = synth.two_plane_scene(3, size=128)
    for eps in (0.02, 0.04, 0.08):
        result = _run(a, b, epsilon=eps, seed=17)
        assert result["merged"].flow.valid.any()
    _report(4, "hand fixtures exact to 1e-9; loss cap held for "
               "epsilon in {0.02, 0.04, 0.08}")


def test_criterion_5_two_plane_oracle():
    passes = 0
    details = []
    for seed in range(10):
        start = time.time()
        a, b, gt, gt_occ = synth.two_plane_scene(seed, size=256)
        result = _run(a, b, seed=101)
        rep = compute_epe(result["flow"], gt, gt_occ)
        sc = occlusion_scores(result["occlusion"], gt_occ)
        elapsed = time.time() - start
        assert elapsed < 120.0, f"seed {seed} took {elapsed:.1f}s"
        ok = rep.epe_nocc < 0.5 and sc["f1"] >= 0.8
        passes += ok
        details.append(f"seed {seed}: nocc {rep.epe_nocc:.3f} f1 {sc['f1']:.3f} "
                       f"{elapsed:.0f}s")
    assert passes >= 9, "\n".join(details)
    _report(5, f"{passes}/10 seeds met EPE nocc < 0.5 and occlusion F1 >= 0.8")


def test_criterion_6_small_plane_ablation():
    a, b, gt, _ = synth.small_plane_scene(1, size=256)
    plane = gt.u > 2.0
    fractions = {}
    for k in (2, 1):
        result = _run(a, b, levels=k, seed=11)
        fractions[k] = result["merged"].flow.valid[plane].mean()
    assert fractions[2] >= 0.8, fractions
    assert fractions[1] <= 0.3, fractions
    _report(6, f"plane assigned {fractions[2]:.2f} at k=2 vs "
               f"{fractions[1]:.2f} at k=1")


def test_criterion_7_thin_object():
    a, b, gt, _, bar = synth.thin_bar_scene(2, size=256)
    result = _run(a, b, seed=5)
    flow = result["flow"]
    err = np.hypot(flow.u - gt.u, flow.v - gt.v)
    frac = (err[bar] < 1.0).mean()
    assert frac >= 0.7, f"only {frac:.2f} of the bar below 1 px"
    _report(7, f"{frac:.2f} of a 3-px bar at 12-px displacement within 1 px")


def test_criterion_8_determinism(tmp_path):
    scene = tmp_path / "scene"
    rc = main(["synth", "two-plane", "--seed", "4", "--size", "128",
               "--out", str(scene)])
    assert rc == 0
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        rc = main(["flow", str(scene / "frame1.png"), str(scene / "frame2.png"),
                   "--gt-flow", str(scene / "gt_flow.flo"),
                   "--gt-occ", str(scene / "gt_occ.png"),
                   "--out", str(out), "--seed", "33"])
        assert rc == 0
        outs.append(out)
    for name in ("flow.flo", "occlusion.png", "report.json", "merged.flo",
                 "flow_color.png", "manifest.txt"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    _report(8, "two identically-seeded runs produced bit-identical artifacts")


def test_criterion_9_histogram_equalization_gain():
    a, b, _, _ = synth.brightness_scene(3, size=192, offset=0.15)
    plain = _run(a, b, hsv_equalize=False, seed=13)
    equalized = _run(a, b, hsv_equalize=True, seed=13)
    n_plain = plain["stats"]["assigned_merged"]
    n_eq = equalized["stats"]["assigned_merged"]
    assert n_eq > n_plain, (n_plain, n_eq)
    _report(9, f"assigned inliers {n_plain} -> {n_eq} with V equalization")


def test_criterion_10_format_suite(tmp_path, rng):
    # byte-exact .flo round trip
    u = rng.uniform(-40, 40, (17, 13)).astype(np.float32).astype(np.float64)
    v = rng.uniform(-40, 40, (17, 13)).astype(np.float32).astype(np.float64)
    valid = rng.random((17, 13)) > 0.1
    flow = FlowField(u.copy(), v.copy(), valid)
    p1 = tmp_path / "a.flo"
    p2 = tmp_path / "b.flo"
    write_flo(flow, p1)
    back = read_flo(p1)
    write_flo(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    np.testing.assert_array_equal(back.u[valid], u[valid])

    # color wheel hue ordering: evenly spaced directions advance monotonically
    # around the wheel
    n = 12
    ang = 2 * np.pi * np.arange(n) / n + 0.02
    flow = FlowField(np.cos(ang)[None, :], np.sin(ang)[None, :],
                     np.ones((1, n), bool))
    img = flow_to_color(flow, max_magnitude=1.0)
    wheel = make_color_wheel()
    fk = (np.arctan2(-np.sin(ang), -np.cos(ang)) / np.pi + 1) / 2 * (len(wheel) - 1)
    order_expected = np.argsort(fk)
    hues = img.data[0]
    # reconstruct each direction's wheel position from its color
    k0 = np.floor(fk).astype(int)
    f = fk - k0
    expected = (1 - f[:, None]) * wheel[k0 % 55] + f[:, None] * wheel[(k0 + 1) % 55]
    np.testing.assert_allclose(hues, expected, atol=1e-9)
    assert len({tuple(np.round(c, 9)) for c in hues}) == n

    # EPE fixtures exact to 1e-9
    gt = FlowField(np.full((2, 2), 3.0), np.full((2, 2), 4.0),
                   np.ones((2, 2), bool))
    rep = compute_epe(FlowField.zeros(2, 2), gt,
                      OcclusionMask(np.zeros((2, 2), bool)))
    assert abs(rep.epe_all - 5.0) < 1e-9
    f = FlowField(np.array([[0.0, 0.0]]), np.zeros((1, 2)), np.ones((1, 2), bool))
    g = FlowField(np.array([[1.0, 3.0]]), np.zeros((1, 2)), np.ones((1, 2), bool))
    rep = compute_epe(f, g, OcclusionMask(np.array([[False, True]])))
    assert abs(rep.epe_nocc - 1.0) < 1e-9
    assert abs(rep.epe_occ - 3.0) < 1e-9
    assert abs(rep.epe_all - 2.0) < 1e-9
    _report(10, "flo round trip byte-exact; wheel ordering; EPE fixtures exact")
