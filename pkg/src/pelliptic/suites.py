"""The five verification suites run by the CLI.

Each suite takes a Scenario and a seed and returns a JSON-ready dict with a
``passed`` verdict, the measured constants/witnesses, and optional series
(lists of rows) for CSV export and plotting.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from . import bellman as bl
from . import ellipticity as el
from . import flows as fl
from . import mollify as ml
from . import semigroup as sg
from .operators import assemble, lp_dissipativity, numerical_range_angle
from .potentials import solve_subcritical


def _smooth_samples(grid, free, rng, count, modes=4):
    """Dirichlet-compatible smooth samples evaluated from closed forms, so
    they are comparable across grid refinements."""
    xs = grid.coords[free]
    out = []
    for _ in range(count):
        a = rng.standard_normal(modes) + 1j * rng.standard_normal(modes)
        f = np.zeros(free.size, dtype=complex)
        for k in range(modes):
            term = np.ones(free.size)
            for ax in range(grid.dim):
                lo, hi = grid.extents[ax]
                term = term * np.sin((k + 1) * math.pi * (xs[:, ax] - lo) / (hi - lo))
            f = f + a[k] * term
        out.append(f)
    return out


def _unbounded_alpha_result() -> dict:
    return {"passed": False,
            "reason": "subcritical constant unbounded on this form domain "
                      "(pure-Neumann constant mode); scenario is supercritical"}


def suite_ellipticity(scenario, seed: int) -> dict:
    A, p = scenario.A, scenario.params.p
    alpha = _certified_alpha(scenario)
    if not math.isfinite(alpha):
        return _unbounded_alpha_result()
    rep = el.is_perturbed_p_elliptic(A, alpha, p, seed=seed)
    rep_q = el.delta_p(A, scenario.params.q, seed=seed)
    rep_p = el.delta_p(A, p, seed=seed)
    conj_gap = abs(rep_p.delta_p - rep_q.delta_p)

    L = assemble(scenario.grid, A, scenario.V, scenario.bc)
    L.alpha = alpha
    try:
        theta0 = el.sector_angle(A, alpha)
        nr_angle = numerical_range_angle(L, alpha, seed=seed)
        angle_ok = nr_angle <= theta0 + 1e-9
    except ValueError:
        # A - alpha I not accretive: the sector comparison is vacuous and the
        # perturbed verdict below carries the failure
        theta0, nr_angle, angle_ok = None, None, not rep.is_strict

    p_grid = sorted(set(np.geomspace(1.05, 8.0, 13)) | {p, scenario.params.q})
    curve = [(float(pp), el.delta_p(A, pp, seed=seed).delta_p) for pp in p_grid]

    passed = rep.is_strict and conj_gap < 1e-6 and angle_ok
    out = {
        "passed": bool(passed),
        "p": p,
        "alpha": alpha,
        "delta_p": rep.delta_p,
        "verdict": rep.verdict,
        "conjugate_gap": conj_gap,
        "theta0": theta0,
        "numerical_range_angle": nr_angle,
        "witness_cell": int(rep.witness_cell),
        "witness_xi": [[c.real, c.imag] for c in np.atleast_1d(rep.witness_xi)],
        "series": {"delta_p_curve": [{"p": a, "delta_p": b} for a, b in curve]},
    }
    if alpha < 1.0:
        pm, pp_ = el.exponent_window(alpha)
        out["window"] = [pm, pp_ if math.isfinite(pp_) else None]
    return out


def suite_subcritical(scenario, seed: int) -> dict:
    betas = tuple(scenario.options.get("betas", (0.0, 0.25, 0.5, 0.75, 0.9, 0.99)))
    cert = solve_subcritical(scenario.V, scenario.bc, betas=betas)
    alphas = [a for _, a in cert.alpha_curve]
    monotone = all(alphas[i + 1] <= alphas[i] + 1e-10 for i in range(len(alphas) - 1))
    zero_ok = True
    if not np.any(scenario.V.v_minus > 0):
        zero_ok = all(a == 0.0 for a in alphas)
    passed = monotone and zero_ok and not cert.unbounded
    return {
        "passed": bool(passed),
        "alpha_star": cert.alpha_star if math.isfinite(cert.alpha_star) else None,
        "monotone": monotone,
        "unbounded": cert.unbounded,
        "residual_max": max(cert.residuals) if cert.residuals else 0.0,
        "series": {"alpha_curve": [{"beta": b, "alpha": a if math.isfinite(a) else None}
                                   for b, a in cert.alpha_curve]},
    }


def _certified_alpha(scenario) -> float:
    if "alpha" in scenario.options:
        return float(scenario.options["alpha"])
    if not np.any(scenario.V.v_minus > 0):
        return 0.0
    beta = float(scenario.options.get("beta", 0.5))
    cert = solve_subcritical(scenario.V, scenario.bc, betas=(beta,))
    return cert.alpha_curve[0][1]


def suite_bellman(scenario, seed: int) -> dict:
    params = scenario.params
    p = params.p
    alpha = _certified_alpha(scenario)
    if not math.isfinite(alpha):
        return _unbounded_alpha_result()
    n_cert = int(scenario.options.get("cert_samples", 20_000))
    B = scenario.A.adjoint()

    delta, cert = bl.select_delta(p, scenario.A, B, mu=alpha or 0.5 * 4 / (p * params.q),
                                  sigma=alpha or 0.5 * 4 / (p * params.q),
                                  n_samples=n_cert, seed=seed)

    # first-order identity spot check (exact, not approximate)
    rng = np.random.default_rng(seed + 1)
    z, e, _, _ = bl.sample_points(params, 1, 2000, rng)
    dz, _ = bl.q_grad(params, z, e)
    lhs = 2.0 * np.real(dz * z)
    mx = np.maximum(np.abs(z) ** (p / 2.0 - 1.0), np.abs(e) ** (1.0 - params.q / 2.0))
    rhs = p * np.abs(z) ** p + 2.0 * params.delta * np.abs(z * mx) ** 2
    identity_err = float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)))

    n_scan = int(scenario.options.get("mollify_samples", 200))
    m = ml.Mollifier(float(scenario.options.get("nu", 0.5)))
    zs, es = ml.sample_omegas(np.random.default_rng(seed + 2), n_scan)
    scan = ml.positivity_scan("Q_conv", params, m, zs, es)

    passed = cert.passed and identity_err < 1e-12 and scan["worst"] >= -1e-4
    return {
        "passed": bool(passed),
        "delta_selected": delta,
        "certificate": cert.to_dict(),
        "first_order_identity_err": identity_err,
        "mollified_positivity_worst": scan["worst"],
        "mu": cert.mu,
    }


def suite_semigroup(scenario, seed: int) -> dict:
    alpha = _certified_alpha(scenario)
    if not math.isfinite(alpha):
        return _unbounded_alpha_result()
    beta = float(scenario.options.get("beta", 0.5))
    L = assemble(scenario.grid, scenario.A, scenario.V, scenario.bc)
    L.alpha, L.beta = alpha, beta
    if scenario.A.lam - alpha <= 0:
        return {"passed": False, "alpha": alpha,
                "reason": "A - alpha*I is not accretive: no sector angle, the "
                          "semigroup checks do not apply"}
    rng = np.random.default_rng(seed)
    nf = int(scenario.options.get("n_samples", 20))
    fs = _smooth_samples(scenario.grid, L.free, rng, nf // 2)
    fs += [rng.standard_normal(L.nfree) + 1j * rng.standard_normal(L.nfree)
           for _ in range(nf - len(fs))]
    t_grid = np.geomspace(*scenario.options.get("t_range", (1e-3, 10.0)),
                          int(scenario.options.get("n_times", 10)))

    if alpha < 1.0:
        pm, pp = el.exponent_window(alpha)
    else:
        pm, pp = 2.0, 2.0
    p_list = sorted({2.0, scenario.params.p, scenario.params.q} | set(
        float(p) for p in scenario.options.get("p_list", ())))
    p_list = [p for p in p_list if pm + 1e-9 < p and (not math.isfinite(pp) or p < pp - 1e-9)]
    sweep = sg.contractivity_sweep(L, p_list, fs, t_grid)

    theta_star = math.pi / 2 - L.theta0
    z_ray = 0.5 * cmath.exp(1j * 0.5 * theta_star)
    ray_ok = all(L.lp_norm(sg.propagate(L, f, z_ray), 2.0) <= L.lp_norm(f, 2.0) * (1 + 1e-8)
                 for f in fs[:5])

    diss = [lp_dissipativity(L, scenario.params.p, f) for f in fs]
    diss_min = float(min(diss))

    linf = float(np.max(scenario.V.v_minus)) if np.any(scenario.V.v_minus > 0) else 0.0
    trunc_rows = []
    trunc_ok = True
    if linf > 0:
        res = sg.truncation_convergence(scenario.grid, scenario.A, scenario.V, scenario.bc,
                                        fs[0], 0.1, [linf / 4, linf / 2, linf],
                                        alpha=alpha, beta=beta)
        trunc_rows = res["rows"]
        gr = [r["grad"] for r in trunc_rows]
        trunc_ok = gr[-1] <= 1e-10 and all(gr[i + 1] <= gr[i] + 1e-12 for i in range(len(gr) - 1))

    traj = sg.trajectory(L, fs[0], t_grid, r_values=(2.0, scenario.params.p))
    passed = all(sweep["contractive"].values()) and ray_ok and trunc_ok
    return {
        "passed": bool(passed),
        "alpha": alpha,
        "p_window": [pm, pp if math.isfinite(pp) else None],
        "p_list": p_list,
        "max_ratio": {str(k): v for k, v in sweep["max_ratio"].items()},
        "ray_contractive": ray_ok,
        "dissipativity_min": diss_min,
        "truncation": trunc_rows,
        "series": {"trajectory": [
            {"t": float(np.real(t)), **{f"norm_{r}": traj.norms[r][i] for r in traj.norms}}
            for i, t in enumerate(traj.times)]},
    }


def suite_bilinear(scenario, seed: int) -> dict:
    params = scenario.params
    alpha = _certified_alpha(scenario)
    if not math.isfinite(alpha):
        return _unbounded_alpha_result()
    if scenario.A.lam - alpha <= 0:
        return {"passed": False, "alpha": alpha,
                "reason": "A - alpha*I is not accretive: the flow and bilinear "
                          "estimates do not apply"}
    LA = assemble(scenario.grid, scenario.A, scenario.V, scenario.bc)
    LB = assemble(scenario.grid, scenario.A.adjoint(), scenario.V, scenario.bc)
    LA.alpha = LB.alpha = alpha

    rng = np.random.default_rng(seed)
    f = _smooth_samples(scenario.grid, LA.free, rng, 1)[0]
    g = _smooth_samples(scenario.grid, LB.free, rng, 1)[0]
    t_grid = np.geomspace(*scenario.options.get("flow_t_range", (0.01, 1.0)),
                          int(scenario.options.get("flow_n_times", 9)))
    flow = fl.heat_flow(params, LA, LB, f, g, t_grid)

    bil = fl.bilinear_estimate(params, LA, LB, f, g)
    s = 3.0
    bil_scaled = fl.bilinear_estimate(params, LA, LB, s * f, g / s)
    invariance = abs(bil["ratio"] - bil_scaled["ratio"])
    sup_ratio = bil["ratio"]
    for i in range(int(scenario.options.get("bilinear_pairs", 3)) - 1):
        fi = _smooth_samples(scenario.grid, LA.free, rng, 1)[0]
        gi = _smooth_samples(scenario.grid, LB.free, rng, 1)[0]
        sup_ratio = max(sup_ratio, fl.bilinear_estimate(params, LA, LB, fi, gi)["ratio"])

    theta = 0.5 * (math.pi / 2 - LA.theta0)
    ray = fl.bilinear_estimate(params, LA, LB, f, g, theta=theta, phi=-theta)

    # default decomposition tolerance tracks the Hessian-form quadrature
    # error, which is O(h) * (integral magnitudes) when the flow crosses the
    # branch interface
    rel = float(scenario.options.get("decomposition_rel", 2.0 * max(scenario.grid.h)))
    abs_tol = float(scenario.options.get("decomposition_abs", 1e-8))
    err = np.abs(flow.dE_dt + (flow.I1 + flow.I2 - flow.I3))
    scale = np.abs(flow.dE_dt) + np.abs(flow.I1) + np.abs(flow.I2) + np.abs(flow.I3)
    decomposition_ok = bool(np.all(err <= rel * scale + abs_tol))
    passed = (flow.monotone and decomposition_ok and invariance < 1e-10
              and not bil["nonintegrable_tail"])
    flow.bilinear_value = bil["value"]
    flow.sup_ratio = sup_ratio
    return {
        "passed": bool(passed),
        "monotone": flow.monotone,
        "monotone_slack": flow.monotone_slack,
        "decomposition_ok": decomposition_ok,
        "bilinear_ratio": bil["ratio"],
        "sup_ratio": sup_ratio,
        "bilinear_ray_ratio": ray["ratio"],
        "scale_invariance_gap": invariance,
        "flow": flow.to_dict(),
        "series": {"flow": [
            {"t": float(t), "E": float(flow.E_values[i]), "dE_dt": float(flow.dE_dt[i]),
             "I1": float(flow.I1[i]), "I2": float(flow.I2[i]), "I3": float(flow.I3[i])}
            for i, t in enumerate(flow.t_grid)]},
    }


SUITES = {
    "ellipticity": suite_ellipticity,
    "bellman": suite_bellman,
    "subcritical": suite_subcritical,
    "semigroup": suite_semigroup,
    "bilinear": suite_bilinear,
}


def run_suites(scenario, parallel: bool = False, max_workers: int | None = None) -> dict:
    """Execute the scenario's suites; seeds are derived per suite so results
    do not depend on execution order."""
    seeds = {name: scenario.seed + 1000 * i for i, name in enumerate(scenario.suites)}
    results = {}
    if parallel:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=max_workers) as ex:
            futures = {name: ex.submit(SUITES[name], scenario, seeds[name])
                       for name in scenario.suites}
            results = {name: fut.result() for name, fut in futures.items()}
    else:
        for name in scenario.suites:
            results[name] = SUITES[name](scenario, seeds[name])
    return results
