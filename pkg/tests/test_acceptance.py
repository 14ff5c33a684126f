"""Acceptance suite: one test per criterion, printed as a pass/fail line.

Every tolerance is pinned here, not computed; grids are the stated desk
sizes.  The suite exercises the public pipeline end to end.
"""

import contextlib
import io
import json
import os
import time

import numpy as np

from cartanheis import (cli, darboux, dsl, heis, invariants, psh, reconstruct,
                        rigidity)

CORPUS = os.path.join(os.path.dirname(__file__), "corpus")


def _report(num, desc, ok, detail=""):
    print(f"ACCEPTANCE {num:02d} [{'PASS' if ok else 'FAIL'}] {desc}"
          + (f"  ({detail})" if detail else ""))
    assert ok, f"criterion {num}: {desc} — {detail}"


def _pipeline(spec, counts, policy="canonical", mode="ad"):
    imm = dsl.parse_surface_spec(spec)
    grid = darboux.ChartGrid(imm.chart, counts)
    ff = darboux.darboux_frame(imm, grid, policy=policy, mode=mode)
    return imm, grid, ff, invariants.Analysis(ff)


def test_criterion_01_flat_model():
    t0 = time.perf_counter()
    _, _, ff, an = _pipeline("builtin:heis_sub(1,2)", 9)
    vals = {
        "II": float(np.max(np.sqrt(an.II_norm2))),
        "A": float(np.max(np.sqrt(an.torsion_norm2))),
        "nu": float(np.max(ff.nu_norm)),
        "R": float(np.max(np.abs(an.curvature["scalar"]))),
    }
    elapsed = time.perf_counter() - t0
    ok = all(v < 1e-8 for v in vals.values()) and elapsed < 2.0
    _report(1, "flat model invariants vanish on heis_sub(1,2), grid 9^3", ok,
            f"max {max(vals.values()):.2e}, {elapsed:.2f}s")


def test_criterion_02_sphere_invariants():
    worst = []
    for r in (1.0, 2.0):
        t0 = time.perf_counter()
        _, _, ff, an = _pipeline(f"builtin:sphere(2,{r})", 17, policy="nu")
        m = an.m
        want_R = m * (m + 1) / r ** 2
        nu_err = float(np.max(np.abs(ff.nu_norm - 1 / r)))
        ii = float(np.max(np.sqrt(an.II_norm2)))
        a = float(np.max(np.sqrt(an.torsion_norm2)))
        r_err = float(np.max(np.abs(an.curvature["scalar"] - want_R)) / want_R)
        elapsed = time.perf_counter() - t0
        worst.append((nu_err < 1e-8 and ii < 1e-8 and a < 1e-8
                      and r_err < 1e-6 and elapsed < 10.0,
                      f"r={r}: nu {nu_err:.1e} II {ii:.1e} A {a:.1e} "
                      f"R {r_err:.1e} {elapsed:.1f}s"))
    ok = all(w[0] for w in worst)
    _report(2, "sphere invariants at grid 17^3 for r in {1, 2}", ok,
            "; ".join(w[1] for w in worst))


def test_criterion_03_sphere_rigidity():
    rng = np.random.default_rng(101)
    imm = dsl.parse_surface_spec("builtin:sphere(2,1)")
    worst_c = worst_r = 0.0
    for _ in range(20):
        Phi = psh.random_element(2, rng)
        moved = dsl.transform_immersion(imm, Phi)
        grid = darboux.ChartGrid(moved.chart, 5)
        ff = darboux.darboux_frame(moved, grid, policy="nu")
        fit = rigidity.detect_sphere(invariants.Analysis(ff))
        target = psh.apply(Phi, heis.origin(2))
        worst_c = max(worst_c, float(np.max(np.abs(fit.center.coords
                                                   - target.coords))))
        worst_r = max(worst_r, abs(fit.radius - 1.0))
    ok = worst_c < 1e-6 and worst_r < 1e-6
    _report(3, "sphere detector under 20 random rigid motions", ok,
            f"center {worst_c:.2e} radius {worst_r:.2e}")


def test_criterion_04_flat_rigidity():
    rng = np.random.default_rng(202)
    imm = dsl.parse_surface_spec("builtin:heis_sub(1,2)")
    worst = 0.0
    for _ in range(20):
        Phi = psh.random_element(2, rng)
        moved = dsl.transform_immersion(imm, Phi)
        grid = darboux.ChartGrid(moved.chart, 5)
        fit = rigidity.detect_flat(invariants.Analysis(
            darboux.darboux_frame(moved, grid)))
        worst = max(worst, fit.image_residual)
    ok = worst < 1e-7
    _report(4, "flat detector under 20 random rigid motions", ok,
            f"image residual {worst:.2e}")


def test_criterion_05_identity_suite_torsionful():
    _, _, ff, an = _pipeline("builtin:ellipsoid(2,1,1.3)", 17, policy="nu")
    res = an.restriction_residuals()
    five = {k: res[k] for k in ("tangent_coframe", "normal_coframe", "contact",
                                "tangent_connection", "mixed_connection")}
    nver15 = an.cnv_curvature_residual()
    nver28 = an.scalar_torsion_residual()
    link = an.h_torsion_link_residual()
    ok = (all(v < 1e-5 for v in five.values()) and nver15 < 1e-5
          and nver28 < 1e-5 and link < 1e-6)
    _report(5, "identity suite on the torsionful surface, grid 17^3", ok,
            f"restriction {max(five.values()):.1e} curvature {nver15:.1e} "
            f"scalar {nver28:.1e} link {link:.1e}")


def test_criterion_06_structure_equation():
    surfaces = [("builtin:heis_sub(1,2)", "canonical"),
                ("builtin:sphere(2,1)", "nu"),
                ("builtin:holograph()", "canonical"),
                ("builtin:ellipsoid(2,1,1.3)", "nu")]
    details = []
    ok = True
    for spec, policy in surfaces:
        _, _, ff, an = _pipeline(spec, 9, policy=policy)
        r_ad = an.mc.structure_residual()
        ok &= r_ad < 1e-8
        res = []
        for N in (9, 17, 33):
            _, _, fff, _ = _pipeline(spec, N, policy=policy, mode="fd")
            res.append(darboux.darboux_derivative(fff).structure_residual())
            if res[-1] < 1e-10:
                break             # machine floor: differences are exact here
        if res[-1] < 1e-10:
            fd_ok = True
            orders = None
        else:
            orders = [float(np.log2(res[i] / res[i + 1])) for i in range(2)]
            fd_ok = min(orders) >= 1.7
        ok &= fd_ok
        details.append(f"{spec.split(':')[1]}: ad {r_ad:.1e} fd "
                       + (f"orders {np.round(orders, 2).tolist()}" if orders
                          else "exact"))
    _report(6, "structure-equation residual, AD exact and FD converging", ok,
            "; ".join(details))


def test_criterion_07_uniqueness():
    rng = np.random.default_rng(303)
    imm = dsl.parse_surface_spec("builtin:sphere(2,1)")
    grid = darboux.ChartGrid(imm.chart, 5)
    ff = darboux.darboux_frame(imm, grid, policy="nu")
    mc = darboux.darboux_derivative(ff)
    A = np.moveaxis(ff.matrix_values(), (0, 1), (-2, -1))
    f1 = reconstruct.FrameSolution(2, grid, A, (0, 0, 0), 0.0)
    worst_w = worst_g = 0.0
    for _ in range(20):
        Phi = psh.random_element(2, rng)
        moved = dsl.transform_immersion(imm, Phi)
        ff2 = darboux.darboux_frame(moved, grid, policy="nu")
        mc2 = darboux.darboux_derivative(ff2)
        worst_w = max(worst_w, float(np.max(np.abs(mc2.values - mc.values))))
        A2 = np.moveaxis(ff2.matrix_values(), (0, 1), (-2, -1))
        f2 = reconstruct.FrameSolution(2, grid, A2, (0, 0, 0), 0.0)
        g, resid = reconstruct.congruence(f1, f2)
        worst_g = max(worst_g, float(np.max(np.abs(g.mat - Phi.mat))), resid)
    ok = worst_w < 1e-12 and worst_g < 1e-10
    _report(7, "uniqueness: frame derivatives invariant, congruence recovers "
               "the motion (20 trials)", ok,
            f"derivative gap {worst_w:.2e} congruence {worst_g:.2e}")


def test_criterion_08_existence_roundtrip():
    rng = np.random.default_rng(404)
    details = []
    ok = True
    for spec, policy, counts in (("builtin:heis_sub(1,2)", "canonical", 9),
                                 ("builtin:sphere(2,1)", "nu", 9),
                                 ("builtin:holograph()", "canonical", 17)):
        imm, grid, ff, an = _pipeline(spec, counts, policy=policy)
        data = reconstruct.intrinsic_data_from_analysis(an)
        eta = reconstruct.assemble_eta(data)
        g0 = psh.random_element(2, rng)
        base = psh.compose(g0, ff.psh_at((0,) * 3))
        sol = reconstruct.integrate_frame(eta, base, substeps=2, stencil=6)
        A = np.moveaxis(ff.matrix_values(), (0, 1), (-2, -1))
        f_orig = reconstruct.FrameSolution(2, grid, A, (0,) * 3, 0.0)
        ghat, _ = reconstruct.congruence(f_orig, sol)
        moved = dsl.transform_immersion(imm, ghat)
        Xm = np.stack(moved.values(grid.points), axis=-1)
        gap_pts = float(np.max(np.abs(sol.points() - Xm)))
        ff2 = darboux.darboux_frame(moved, grid, policy=policy)
        an2 = invariants.Analysis(ff2)
        gap_fields = max(
            float(np.max(np.abs(ff2.nu_norm - ff.nu_norm))),
            float(np.max(np.abs(np.sqrt(an2.II_norm2) - np.sqrt(an.II_norm2)))),
            float(np.max(np.abs(np.sqrt(an2.torsion_norm2)
                                - np.sqrt(an.torsion_norm2)))),
            float(np.max(np.abs(an2.curvature["scalar"]
                                - an.curvature["scalar"]))))
        ok &= gap_pts < 1e-5 and gap_fields < 1e-5
        details.append(f"{spec.split(':')[1]}: points {gap_pts:.1e} "
                       f"fields {gap_fields:.1e}")

    # integrator order on a closed-form rotating curve
    def frames(svals):
        out = []
        for s in svals:
            p = heis.HPoint(1, [np.sin(s)], [1 - np.cos(s)], 0.3 * s)
            c, sn = np.cos(0.7 * s), np.sin(0.7 * s)
            out.append(psh.recompose(p, np.array([[c, -sn], [sn, c]])).mat)
        return np.array(out)

    errs, hs = [], []
    for N in (17, 33, 65, 129):
        svals = np.linspace(0, 1.5, N)
        grid1 = darboux.ChartGrid([(0.0, 1.5)], [N])
        slots = []
        d = 1e-6
        for s in svals:
            Amat = frames([s])[0]
            dA = (frames([s + d])[0] - frames([s - d])[0]) / (2 * d)
            slots.append(np.linalg.solve(Amat, dA))
        eta = reconstruct.EtaForm(1, grid1,
                                  np.moveaxis(np.array(slots), 0, -1)[None])
        sol = reconstruct.integrate_frame(eta, psh.PSHElement(1, frames([0])[0]))
        errs.append(np.max(np.abs(sol.frames - frames(svals))))
        hs.append(1.5 / (N - 1))
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    ok &= 3.5 <= slope <= 4.5
    details.append(f"integrator order {slope:.2f}")
    _report(8, "existence round trip and integrator order", ok,
            "; ".join(details))


def test_criterion_09_curvature_determines_ii():
    _, _, _, an = _pipeline("builtin:holograph()", 17)
    out = invariants.h_from_curvature(an)
    amb = np.abs(an.second_ff["h"][0])
    n_degenerate = int(np.sum(out["degenerate_mask"]))
    gap = float(np.nanmax(np.abs(out["h_abs"] - amb)))
    ok = gap < 1e-6 and n_degenerate == 0
    _report(9, "second fundamental form recovered from curvature (holograph)",
            ok, f"gap {gap:.2e}, degenerate points {n_degenerate}")


def test_criterion_10_vertical_ricci_sign():
    _, _, _, an = _pipeline("builtin:holograph()", 17)
    chk = invariants.ricci_nonpositivity_check(an, tol=1e-8)
    _report(10, "Webster-Ricci nonpositive on the vertical graph", chk["pass"],
            f"max eigenvalue {chk['max_eigenvalue']:.3e}")


def test_criterion_11_parser_corpus(capsys):
    manifest = json.load(open(os.path.join(CORPUS, "manifest.json")))
    total = len(manifest["valid"]) + len(manifest["invalid"])
    ok = total >= 30
    bad = []
    for name in manifest["valid"]:
        text = open(os.path.join(CORPUS, f"{name}.srf")).read()
        pp = dsl.pretty_print(dsl.parse(text))
        if dsl.pretty_print(dsl.parse(pp)) != pp:
            ok = False
            bad.append(name)
    for name, (line, col) in manifest["invalid"].items():
        path = os.path.join(CORPUS, f"{name}.srf")
        buf = io.StringIO()
        with contextlib.redirect_stderr(buf):
            code = cli.main(["invariants", "--surface", path])
        err = buf.getvalue()
        if code != 2 or f"line {line}" not in err or f"col {col}" not in err:
            ok = False
            bad.append(name)
    with capsys.disabled() if hasattr(capsys, "disabled") else contextlib.nullcontext():
        pass
    _report(11, f"parser corpus of {total} files (valid round-trip, "
                "invalid flagged with position)", ok,
            f"failures: {bad}" if bad else "all good")
