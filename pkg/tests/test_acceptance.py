"""Acceptance gate: the 13 criteria at their stated tolerances and runtime budgets.

Each test records one PASS/FAIL line (printed in the terminal summary) and then
asserts it. Nothing here is loosened to make a criterion pass.
"""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from meanfield_lab.experiments import run
from meanfield_lab.hermite import GridSpec, HermiteBasis, grid_to_spectral, mode_eigenvalue, spectral_to_grid
from meanfield_lab.interaction import InteractionSpec
from meanfield_lab.manybody import (OccupationBasis, assemble_hamiltonian, evolve_trajectory,
                                    first_quantized_hamiltonian, product_state, second_quantize_one_body,
                                    symmetrizer_isometry)
from meanfield_lab.marginals import bbgky_residual, partial_trace, reduce, trace_norm


def record(n, title, checks, elapsed, budget):
    checks = dict(checks)
    checks[f"runtime {elapsed:.1f}s < {budget}s"] = elapsed < budget
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    line = f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}"
    if failed:
        line += "  (failed: " + "; ".join(failed) + ")"
    ACCEPTANCE_LINES[n] = line
    print(line)
    for k, v in checks.items():
        print(f"      {'ok ' if v else 'BAD'} {k}")
    assert ok, line


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_01_hermite_exactness():
    with Clock() as c:
        b = HermiteBasis(1.0, 30.0)
        occ = OccupationBasis(b.size, 1)
        S2 = second_quantize_one_body(occ, b.eigenvalues).toarray()
        exact = np.array([mode_eigenvalue(m, 1.0) for m in b.modes])
        # one-particle sector: occupation state j is mode j
        order = [int(np.argmax(s)) for s in occ.states]
        spectrum_exact = np.array_equal(np.diag(S2), exact[order]) and np.array_equal(
            b.eigenvalues, 2.0 * (b.n1 + b.n2 + 1))
        gram = np.abs(b.gram() - np.eye(b.size)).max()
        g = GridSpec.default(1.0)
        c0 = np.random.default_rng(1).standard_normal(b.size)
        rt = np.abs(grid_to_spectral(spectral_to_grid(c0, b, g), b, g) - c0).max()
    record(1, "Hermite exactness", {
        "S^2 spectrum = 2 omega (n1+n2+1) exactly": spectrum_exact,
        f"Gram - I = {gram:.1e} <= 1e-12": gram <= 1e-12,
        f"round trip {rt:.1e} < 1e-10": rt < 1e-10,
    }, c.elapsed, 10)


def test_02_nls_conservation():
    with Clock() as c:
        reps = [run({"experiment": "nls-evolve", "parameters": {"dt": dt}}) for dt in (1e-3, 5e-4)]
    r1, r2 = (r.results for r in reps)
    ratio = r1["energy_drift"] / r2["energy_drift"]
    record(2, "NLS conservation", {
        f"mass drift {r1['mass_drift']:.1e} < 1e-10": r1["mass_drift"] < 1e-10,
        f"energy drift {r1['energy_drift']:.2e} < 1e-6": r1["energy_drift"] < 1e-6,
        f"drift ratio {ratio:.3f} in 4 +- 0.5": abs(ratio - 4) <= 0.5,
    }, c.elapsed, 120)


def test_03_gn_constant():
    with Clock() as c:
        r = run({"experiment": "gn-constant", "parameters": {"trials": 1000}}, seed=0).results
    record(3, "Gagliardo-Nirenberg constant", {
        f"quotient vs shooting {r['relative_gap']:.1e} (rel) < 1e-3": abs(r["relative_gap"]) < 1e-3,
        f"C^4 |Q|^2 - 2 = {r['identity'] - 2:.1e}": abs(r["identity"] - 2) <= 1e-6,
        f"max of 1000 trials {r['trial_max']:.4f} <= C^4 + 1e-3 = {r['C_gn4'] + 1e-3:.4f}":
            r["trial_max"] <= r["C_gn4"] + 1e-3,
    }, c.elapsed, 300)


def test_04_hartree_positivity():
    with Clock() as c:
        rep = run({"experiment": "hartree-scan", "parameters": {"alpha": 0.9, "l1_fraction": 0.9}}, seed=7)
    r = rep.results
    vals = [row[2] for row in rep.tables["hartree"][1] if row[0] == "random"]
    record(4, "Hartree positivity", {
        f"{sum(v >= -1e-10 for v in vals)}/500 random fields nonnegative (eps = {r['epsilon']})":
            len(vals) == 500 and all(v >= -1e-10 for v in vals),
        f"violation at 3x threshold (min {r['sharpness_min_value']:.3f})": r["sharpness_min_value"] < -1e-10,
    }, c.elapsed, 300)


def test_05_manybody_exactness():
    with Clock() as c:
        rep = run({"experiment": "manybody-evolve", "parameters": {"cutoff": 6.0, "N": 3, "times": [0.0, 0.25, 0.5]}})
        b = HermiteBasis(1.0, 4.0)
        I = InteractionSpec(1.0, 0.1, 2)
        occ = OccupationBasis(b.size, 2)
        P = symmetrizer_isometry(occ)
        oracle = np.abs(assemble_hamiltonian(occ, b, I).dense() - P.T @ first_quantized_hamiltonian(b, I, 2) @ P).max()
    r = rep.results
    record(5, "Many-body exactness", {
        f"D = {b.size} oracle size, D = 6 run ({r['dim']} states)": b.size == 3 and r["dim"] == 56,
        f"norm drift {r['norm_drift']:.1e} < 1e-9": r["norm_drift"] < 1e-9,
        f"<H> drift {r['energy_drift']:.1e} < 1e-8": r["energy_drift"] < 1e-8,
        f"second vs first quantized {oracle:.1e} < 1e-10": oracle < 1e-10,
    }, c.elapsed, 120)


def test_06_marginal_structure():
    with Clock() as c:
        b = HermiteBasis(1.0, 6.0)
        worst = dict(herm=0.0, psd=0.0, trace=0.0, compat=0.0)
        for N in (2, 3, 4):
            occ = OccupationBasis(b.size, N)
            H = assemble_hamiltonian(occ, b, InteractionSpec(1.0, 0.1, N))
            phi = np.random.default_rng(N).standard_normal(b.size)
            psi0 = product_state(occ, phi / np.linalg.norm(phi))
            for _, st in evolve_trajectory(psi0, H, np.linspace(0, 1, 11)):
                g1, g2 = reduce(st, 1), reduce(st, 2)
                for g in (g1, g2):
                    worst["herm"] = max(worst["herm"], g.hermiticity())
                    worst["psd"] = max(worst["psd"], -g.min_eigenvalue())
                    worst["trace"] = max(worst["trace"], abs(g.trace() - 1))
                worst["compat"] = max(worst["compat"], trace_norm(partial_trace(g2.matrix, b.size, 2) - g1.matrix))
    record(6, "Marginal structure", {
        f"Hermitian {worst['herm']:.1e} < 1e-10": worst["herm"] < 1e-10,
        f"PSD (min eig >= -{worst['psd']:.1e}) within 1e-10": worst["psd"] < 1e-10,
        f"unit trace {worst['trace']:.1e} < 1e-9": worst["trace"] < 1e-9,
        f"Tr_2 gamma2 = gamma1 to {worst['compat']:.1e} < 1e-9": worst["compat"] < 1e-9,
    }, c.elapsed, 60)


def test_07_free_factorization():
    with Clock() as c:
        rep = run({"experiment": "converge", "parameters": {
            "l1_fraction": 0.0, "times": [0.0, 0.25, 0.5, 0.75, 1.0], "dt": 1e-4, "grid_points": 64}})
    dists = [row[3] for row in rep.tables["converge"][1]]
    record(7, "V = 0 factorization", {
        f"max trace distance {max(dists):.1e} < 1e-7 over N <= 5, t <= 1, k = 1, 2": max(dists) < 1e-7,
    }, c.elapsed, 180)


def test_08_focusing_trend():
    with Clock() as c:
        rep = run({"experiment": "converge", "parameters": {"l1_fraction": 0.5, "alpha": 0.9, "beta": 0.1,
                                                            "times": [0.0, 0.1, 0.2], "cutoff": 6.0}})
    d = rep.results["final_distance_k1"]
    seq = ", ".join(f"{d[k]:.4f}" for k in sorted(d, key=int))
    record(8, "Focusing convergence trend", {
        f"D = {rep.results['D']}": rep.results["D"] == 6,
        f"Tr|gamma1 - |phi><phi|| at t = 0.2 over N = 2..5: {seq} nonincreasing": rep.verdicts["trend_nonincreasing"],
    }, c.elapsed, 900)


def test_09_stability_checks():
    with Clock() as c:
        free = run({"experiment": "energy-check", "parameters": {"l1_fraction": 0.0}})
        foc = run({"experiment": "energy-check", "parameters": {"l1_fraction": 0.5}})
    free_min = min(r["min_eigenvalue"] for r in free.results["reports"])
    series = {}
    for r in foc.results["reports"]:
        series.setdefault(r["inequality_id"], []).append(r["min_eigenvalue"])
    checks = {f"V = 0: all hold, min eig {free_min:.3f} >= -1e-8": free.verdicts["all_hold"] and free_min >= -1e-8}
    for name, vals in series.items():
        if len(vals) > 1:
            label = ", ".join(f"{v:.4f}" for v in vals)
            checks[f"focusing {name} over N = 2,4,6: {label} nondecreasing"] = all(
                b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    record(9, "Stability checks", checks, c.elapsed, 600)


@pytest.mark.filterwarnings("ignore:beta=0.9 is outside")
def test_10_projection_inequality():
    with Clock() as c:
        rep = run({"experiment": "lewin-check"})
    rows = rep.tables["lewin"][1]
    sweep, viol = rows[:9], rows[9:]
    record(10, "Projection inequality", {
        f"3x3 sweep holds (min eig {min(r[3] for r in sweep):.1e})": len(sweep) == 9 and rep.verdicts["holds_under_hypothesis"],
        f"violation when M << N^beta (min eig {min(r[3] for r in viol):.3f})": rep.verdicts["violation_below_threshold_M"],
    }, c.elapsed, 300)


def test_11_definetti_bound():
    with Clock() as c:
        rand = [run({"experiment": "definetti", "parameters": {"D": D, "N": N, "samples": 200000}}, seed=11)
                for D, N in ((3, 6), (4, 8))]
        prod = run({"experiment": "definetti", "parameters": {"D": 3, "N": 6, "samples": 200000,
                                                              "state": "product"}}, seed=11)
    checks = {}
    for rep in rand:
        r, p = rep.results, rep.config
        checks[f"(D,N)=({p['D']},{p['N']}): {r['estimate']:.4f} <= 8D/N + 3 err = "
               f"{r['bound'] + 3 * r['mc_error']:.3f}"] = rep.verdicts["within_bound"]
    r = prod.results
    checks[f"product state: {r['estimate']:.4f} < 3 err = {3 * r['mc_error']:.4f} "
           f"(closed form {r['exact']:.4f})"] = prod.verdicts["product_near_zero"]
    record(11, "de Finetti bound", checks, c.elapsed, 600)


def test_12_counterexample():
    with Clock() as c:
        ce = run({"experiment": "counterexample"})
        ti = run({"experiment": "trace-identity"}, seed=12)
    r, t = ce.results, ti.results
    J = [row[1] for row in ce.tables["counterexample"][1]]
    record(12, "Counterexample", {
        "J strictly increasing over eps = 1e-3..1e-9": ce.verdicts["J_increasing"],
        f"J ratio {r['ratio']:.3f} > 1.5": r["ratio"] > 1.5,
        f"gradient-norm variation {100 * r['gradient_variation']:.1f}% < 5%": r["gradient_variation"] < 0.05,
        f"|J_V - J_delta| = {t['difference']:.1e} < 1e-7 max(J_delta, 1), hypothesis {t['hypothesis']}":
            t["hypothesis"] and t["difference"] < 1e-7 * max(t["J_delta"], 1.0),
    }, c.elapsed, 600)


def test_13_bbgky_residual():
    with Clock() as c:
        b = HermiteBasis(1.0, 6.0)
        N = 3
        I = InteractionSpec(1.0, 0.1, N)
        occ = OccupationBasis(b.size, N)
        H = assemble_hamiltonian(occ, b, I)
        phi = np.ones(b.size) / math.sqrt(b.size)
        psi0 = product_state(occ, phi)
        res = []
        for h in (0.02, 0.01, 0.005):
            tr = evolve_trajectory(psi0, H, [0.5 - h, 0.5, 0.5 + h], tol=1e-13)
            res.append(bbgky_residual(tr, 1, I, b)[0][1])
    ratios = [a / b_ for a, b_ in zip(res, res[1:])]
    record(13, "BBGKY residual", {
        f"k = 1 residuals {', '.join(f'{x:.2e}' for x in res)}, ratios "
        f"{', '.join(f'{x:.3f}' for x in ratios)} in 4 +- 1": all(abs(x - 4) <= 1 for x in ratios),
    }, c.elapsed, 300)
