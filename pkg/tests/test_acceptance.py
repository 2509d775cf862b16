"""End-to-end acceptance checks, one per shipped guarantee.

Each test prints a single PASS/FAIL line with the measured quantity so a
plain `pytest -s tests/test_acceptance.py` reads as a checklist.
"""

import configparser
import os
import time

import numpy as np
import pytest

from hydrograd import (
    adjoint,
    cli,
    default_initial_states,
    generate_twin,
    simulate,
    water_balance,
)
from hydrograd.cost import improvement_rate, kge, nse
from hydrograd.driver import calibrate_problem, problem_from_twin
from hydrograd.mesh import build_mesh
from hydrograd.optimize import (
    TERM_COST_DECREASE,
    TERM_GRADIENT_NORM,
    TERM_MAX_ITERATIONS,
    adam_step,
    quasi_newton_bounded,
)
from hydrograd.params import BoundsSpec, ParameterFields
from hydrograd.regio import (
    init_control,
    map_params,
    vjp,
    xavier_init,
)
from hydrograd.twin import storm_forcings, synthetic_descriptors, synthetic_flowdir

BOUNDS = BoundsSpec(lower=np.array([30.0, 5.0, -3.0, 1.0]),
                    upper=np.array([500.0, 100.0, 3.0, 200.0]))


def verdict(num, ok, detail):
    print(f"criterion {num} {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


def chain_problem(n_desc, nt=80, seed=10):
    """Small gauged catchment with descriptors for control-space checks."""
    rng = np.random.default_rng(seed)
    mesh = build_mesh(synthetic_flowdir((6, 6), rng), dx=1000.0)
    dmat = synthetic_descriptors(rng, (6, 6), n_desc).matrix
    span = BOUNDS.upper - BOUNDS.lower
    truth = BOUNDS.lower + rng.uniform(0.3, 0.7, (mesh.n, 4)) * span
    forc = storm_forcings(rng, mesh, nt=nt, dt=3600.0)
    outlet = int(mesh.outlets[0])
    second = [c for c in range(mesh.n)
              if 6 <= mesh.drainage[c] < mesh.n][0]
    cells = np.array([outlet, second])
    obs = simulate(mesh, ParameterFields(values=truth), forc,
                   record_cells=cells).discharge
    weights = np.array([0.5, 0.5])
    return mesh, dmat, forc, cells, obs, weights


class TestAcceptance:
    def test_01_adjoint_matches_finite_differences(self):
        # 10x10 mesh, 2 gauges, 200 hourly steps, every (cell, parameter)
        # component against central differences with h = 1e-4 (u - l)
        rng = np.random.default_rng(1)
        mesh = build_mesh(synthetic_flowdir((10, 10), rng), dx=1000.0)
        outlet = int(mesh.outlets[0])
        mask = mesh.upstream_mask(outlet)
        upstream = [c for c in range(mesh.n)
                    if mask[c] and c != outlet
                    and 10 <= mesh.drainage[c] <= mesh.n // 2]
        cells = np.array([outlet, upstream[0]])
        span = BOUNDS.upper - BOUNDS.lower
        truth = BOUNDS.lower + rng.uniform(0.25, 0.75, (mesh.n, 4)) * span
        forc = storm_forcings(rng, mesh, nt=200, dt=3600.0)
        obs = simulate(mesh, ParameterFields(values=truth), forc,
                       record_cells=cells).discharge
        start = BOUNDS.lower + rng.uniform(0.15, 0.85, (mesh.n, 4)) * span
        # keep the exchange term on its smooth branch: the difference
        # quotient is not a valid oracle across the zero clamp
        start[:, 2] = rng.uniform(0.3, 2.1, mesh.n)
        params = ParameterFields(values=start)
        weights = np.array([0.5, 0.5])

        t0 = time.perf_counter()
        _, grad, _ = adjoint.grad_theta(
            mesh, params, forc, cells, obs, weights)
        comps = [(c, k) for c in range(mesh.n) for k in range(4)]
        fd = adjoint.fd_gradient(
            mesh, params, forc, cells, obs, weights,
            h=1e-4 * span, components=comps, bounds=BOUNDS)
        elapsed = time.perf_counter() - t0

        worst = 0.0
        resolved = 0
        for (c, k), v in zip(comps, fd):
            if abs(v) > 1e-12:
                resolved += 1
                worst = max(worst, abs(grad[c, k] - v) / abs(v))
        ok = worst < 1e-4 and elapsed < 60.0
        assert verdict(
            1, ok,
            f"worst rel err {worst:.3e} over {resolved}/400 components "
            f"in {elapsed:.1f}s (tol 1e-4, budget 60s)",
        )

    def test_02_chain_rule_to_control_space(self):
        mesh, dmat, forc, cells, obs, weights = chain_problem(n_desc=7)

        def cost_of(ctl):
            return adjoint.cost_at(
                mesh, map_params(ctl, dmat, BOUNDS), forc, cells, obs,
                weights)

        def chain_grad(ctl):
            fields = map_params(ctl, dmat, BOUNDS)
            _, gf, _ = adjoint.grad_theta(
                mesh, fields, forc, cells, obs, weights)
            return vjp(ctl, dmat, BOUNDS, gf)

        def fd_entry(ctl, vec, i, h):
            vp, vm = vec.copy(), vec.copy()
            vp[i] += h
            vm[i] -= h
            return (cost_of(ctl.from_vector(vp))
                    - cost_of(ctl.from_vector(vm))) / (2 * h)

        # (a) every coefficient of the 32-entry multilinear control
        lin = init_control("multilinear", 7, BOUNDS)
        vec = np.random.default_rng(3).standard_normal(32) * 0.4
        lin = lin.from_vector(vec)
        g = chain_grad(lin)
        worst_lin = 0.0
        for i in range(32):
            v = fd_entry(lin, vec, i, 1e-6)
            if abs(v) > 1e-12:
                worst_lin = max(worst_lin, abs(g[i] - v) / abs(v))

        # (b) 200 random coordinates of the 6276-entry network control
        net = xavier_init((7, 96, 48, 16, 4), seed=21)
        nvec = net.to_vector()
        assert nvec.size == 6276
        g = chain_grad(net)
        idx = np.random.default_rng(4).choice(6276, 200, replace=False)
        worst_net = 0.0
        resolved = 0
        for i in idx:
            v = fd_entry(net, nvec, int(i), 1e-5)
            if abs(v) > 1e-12:
                resolved += 1
                worst_net = max(worst_net, abs(g[i] - v) / abs(v))

        ok = worst_lin < 1e-4 and worst_net < 1e-4
        assert verdict(
            2, ok,
            f"multilinear worst {worst_lin:.3e} (32/32), network worst "
            f"{worst_net:.3e} ({resolved}/200 resolved), tol 1e-4",
        )

    def test_03_control_dimensions(self):
        net = xavier_init((7, 96, 48, 16, 4), seed=0)
        counts = net.layer_param_counts
        uni = init_control("uniform", 0, BOUNDS)
        lin = init_control("multilinear", 7, BOUNDS)
        ok = (counts == (768, 4656, 784, 68)
              and net.n_params == 6276
              and uni.n_params == 4
              and lin.n_params == 32)
        assert verdict(
            3, ok,
            f"layer counts {counts} sum {net.n_params}, control sizes "
            f"{uni.n_params}/{lin.n_params}/{net.n_params}",
        )

    def test_04_water_balance_closure(self):
        # conservative configuration: no exchange, no evaporation
        rng = np.random.default_rng(44)
        mesh = build_mesh(synthetic_flowdir((8, 8), rng), dx=1000.0)
        span = BOUNDS.upper - BOUNDS.lower
        vals = BOUNDS.lower + rng.uniform(0.2, 0.8, (mesh.n, 4)) * span
        vals[:, 2] = 0.0
        params = ParameterFields(values=vals)
        forc = storm_forcings(rng, mesh, nt=1000, dt=3600.0, pet_rate=0.0)
        res = simulate(mesh, params, forc)
        factor = mesh.cell_area * 1e-3
        rain_volume = float(forc.rain.dense().sum()) * factor
        out_volume = float(res.discharge.sum()) * forc.dt
        h0 = default_initial_states(params)
        dstore = float((res.final_states - h0).sum()) * factor
        closure = abs(rain_volume - out_volume - dstore) / rain_volume
        wb = water_balance(mesh, params, forc)
        ok = (closure < 1e-9 and wb["exchange_gain"] == 0.0
              and wb["evaporated"] == 0.0
              and wb["relative_residual"] < 1e-9)
        assert verdict(
            4, ok,
            f"1000-step cumulative closure {closure:.3e} of "
            f"{rain_volume:.0f} m3 rainfall, ledger residual "
            f"{wb['relative_residual']:.3e} (tol 1e-9)",
        )

    def test_05_mapped_fields_stay_inside_bounds(self):
        rng = np.random.default_rng(55)
        dmat = rng.uniform(0.0, 1.0, (25, 3))
        span = BOUNDS.upper - BOUNDS.lower
        checked = 0
        ok = True
        for kind in ("uniform", "multilinear", "multipolynomial", "mlp"):
            template = init_control(kind, 3, BOUNDS, hidden=(8, 6))
            exp_slots = []
            if kind == "multipolynomial":
                exp_slots = [
                    i for i, b in enumerate(template.vector_bounds())
                    if b == (0.5, 2.0)
                ]
            for _ in range(10000):
                if kind == "uniform":
                    vec = BOUNDS.lower + rng.uniform(1e-9, 1 - 1e-9, 4) * span
                else:
                    vec = rng.standard_normal(template.n_params) * 3.0
                    if exp_slots:
                        vec[exp_slots] = rng.uniform(0.5, 2.0, len(exp_slots))
                fields = map_params(
                    template.from_vector(vec), dmat, BOUNDS).values
                checked += 1
                if (np.any(fields <= BOUNDS.lower[None, :])
                        or np.any(fields >= BOUNDS.upper[None, :])):
                    ok = False
                    break

        # exponent iterates stay in [0.5, 2] through a real calibration
        tw = generate_twin(seed=5, shape=(8, 8), truth_kind="uniform",
                           n_desc=2, nt=160, warmup=24, n_cal=2, n_val=1)
        prob = problem_from_twin(tw)
        dmat2 = prob.descriptors.matrix
        cal = prob.gauges.subset("cal")
        cal_cells = prob.gauges.cells[cal]
        cal_w = prob.gauges.weights[cal]
        obs = prob.observations[:, cal]
        template = init_control("multipolynomial", 2, prob.bounds)
        vb = template.vector_bounds()
        beta_slots = [i for i, b in enumerate(vb) if b == (0.5, 2.0)]

        def fun_grad(x):
            c = template.from_vector(x)
            fields = map_params(c, dmat2, prob.bounds)
            cost, gf, _ = adjoint.grad_theta(
                prob.mesh, fields, prob.forcings, cal_cells, obs, cal_w,
                prob.cal_window)
            return cost, vjp(c, dmat2, prob.bounds, gf)

        iterates = []
        quasi_newton_bounded(
            fun_grad, template.to_vector(), vb, maxiter=25,
            iterate_callback=lambda x, c, g: iterates.append(x.copy()),
        )
        betas_ok = bool(iterates) and all(
            np.all(x[beta_slots] >= 0.5) and np.all(x[beta_slots] <= 2.0)
            for x in iterates
        )
        ok = ok and betas_ok
        assert verdict(
            5, ok,
            f"{checked} random controls mapped strictly inside the box; "
            f"exponents within [0.5, 2] over {len(iterates)} iterates",
        )

    def test_06_linear_twin_regionalization(self):
        t0 = time.perf_counter()
        tw = generate_twin(seed=42, shape=(12, 12), truth_kind="linear",
                           n_desc=3, nt=400, warmup=48)
        prob = problem_from_twin(tw)
        res = calibrate_problem(prob, "multilinear", seed=7, maxiter=250)
        elapsed = time.perf_counter() - t0
        cal = [row["nse"] for row in res.metrics["Cal"]]
        held = res.metrics["S_Val"][0]["nse"]
        iters = len(res.trace)
        ok = (min(cal) >= 0.99 and held >= 0.95 and iters <= 250
              and elapsed < 600.0)
        assert verdict(
            6, ok,
            f"cal NSE {['%.5f' % v for v in cal]}, held-out gauge "
            f"{held:.5f}, {iters} iterations, {elapsed:.1f}s "
            f"(floors 0.99/0.95, 250 iters, 10 min)",
        )

    def test_07_nonlinear_twin_needs_the_network(self):
        t0 = time.perf_counter()
        tw = generate_twin(seed=11, shape=(12, 12), truth_kind="nonlinear",
                           n_desc=2, nt=400, warmup=48, n_cal=3)
        prob = problem_from_twin(tw)
        res_net = calibrate_problem(
            prob, "mlp", seed=6, hidden=(16, 12), epochs=350,
            learning_rate=0.003)
        res_lin = calibrate_problem(prob, "multilinear", seed=6, maxiter=250)
        elapsed = time.perf_counter() - t0
        cal_net = [row["nse"] for row in res_net.metrics["Cal"]]
        held_net = res_net.metrics["S_Val"][0]["nse"]
        held_lin = res_lin.metrics["S_Val"][0]["nse"]
        epochs = len(res_net.trace)
        ok = (min(cal_net) >= 0.95 and held_net >= 0.85 and epochs <= 350
              and held_lin < held_net)
        assert verdict(
            7, ok,
            f"network cal NSE {['%.5f' % v for v in cal_net]}, held-out "
            f"{held_net:.5f} in {epochs} epochs; affine held-out "
            f"{held_lin:.5f} (floors 0.95/0.85, affine strictly below), "
            f"{elapsed:.1f}s",
        )

    def test_08_metric_unit_examples(self):
        v_nse = nse([1.1, 1.9, 3.2, 3.9], [1.0, 2.0, 3.0, 4.0])
        obs = np.array([1.0, 4.0, 2.0, 6.0, 3.0])
        v_kge = kge(2.0 * obs, obs)
        v_imp = improvement_rate(0.8, 0.5)

        rng = np.random.default_rng(5)
        g = rng.standard_normal(7)
        p0 = rng.standard_normal(7)
        eta = 0.003
        (p1,), _, _ = adam_step(
            [p0.copy()], [g], [np.zeros(7)], [np.zeros(7)],
            learning_rate=eta)
        adam_dev = float(
            np.abs(p1 - (p0 - eta * g / (np.abs(g) + 1e-8))).max())

        ok = (v_nse == pytest.approx(1.0 - 0.07 / 5.0, rel=1e-14)
              and v_kge == pytest.approx(1.0 / 3.0, rel=1e-14)
              and v_imp == pytest.approx(0.6, rel=1e-14)
              and adam_dev < 1e-14)
        assert verdict(
            8, ok,
            f"NSE {v_nse:.3f} (want 0.986), KGE {v_kge:.15f} (want 1/3), "
            f"improvement {v_imp:.1f} (want 0.6), first-step deviation "
            f"{adam_dev:.2e} (tol 1e-14)",
        )

    def test_09_termination_rules(self):
        def rosen(x):
            f = 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2
            g = np.array([
                -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1.0 - x[0]),
                200.0 * (x[1] - x[0] ** 2),
            ])
            return f, g

        _, tr_iter = quasi_newton_bounded(
            rosen, np.array([-1.2, 1.0]), maxiter=3)

        def quartic(x):
            r = x[0] - 0.37
            return 1.0 + 1e6 * r ** 4, np.array([4e6 * r ** 3])

        _, tr_cost = quasi_newton_bounded(quartic, np.array([2.0]),
                                          maxiter=400)

        def quad(x):
            return float(((x - 0.5) ** 2).sum()), 2.0 * (x - 0.5)

        _, tr_grad = quasi_newton_bounded(quad, np.full(3, 0.5), maxiter=50)

        got = (tr_iter.termination, tr_cost.termination, tr_grad.termination)
        ok = got == (TERM_MAX_ITERATIONS, TERM_COST_DECREASE,
                     TERM_GRADIENT_NORM)
        assert verdict(
            9, ok,
            f"iteration budget -> {got[0]}, stalled cost -> {got[1]}, "
            f"vanished gradient -> {got[2]}",
        )

    def test_10_cli_runs_are_reproducible(self, tmp_path, capsys):
        twin_ini = (
            "[twin]\nseed = 5\nrows = 8\ncols = 8\ntruth = uniform\n"
            "n_desc = 2\nnt = 160\nwarmup = 24\nn_cal = 2\nn_val = 1\n"
            "[output]\ndir = {d}\n"
        )

        def tree(root):
            out = {}
            for base, _, files in os.walk(root):
                for f in files:
                    p = os.path.join(base, f)
                    with open(p, "rb") as fh:
                        out[os.path.relpath(p, root)] = fh.read()
            return out

        cfgs = []
        for d in ("ds_a", "ds_b"):
            ini = tmp_path / f"{d}.ini"
            ini.write_text(twin_ini.format(d=d))
            assert cli.main(["twin", str(ini)]) == cli.EXIT_OK
            cfg = tmp_path / d / "calibration.ini"
            cp = configparser.ConfigParser()
            cp.read(cfg)
            cp["optimizer"]["maxiter"] = "20"
            with open(cfg, "w") as fh:
                cp.write(fh)
            cfgs.append(cfg)
        twin_same = tree(tmp_path / "ds_a") == tree(tmp_path / "ds_b")

        capsys.readouterr()
        assert cli.main(["gradcheck", str(cfgs[0])]) == cli.EXIT_OK
        out1 = capsys.readouterr().out
        assert cli.main(["gradcheck", str(cfgs[0])]) == cli.EXIT_OK
        out2 = capsys.readouterr().out
        gradcheck_same = out1 == out2

        for cfg in cfgs:
            assert cli.main(["calibrate", str(cfg)]) == cli.EXIT_OK
        cal_same = (tree(tmp_path / "ds_a" / "run")
                    == tree(tmp_path / "ds_b" / "run"))

        for cfg, d in zip(cfgs, ("ds_a", "ds_b")):
            control = tmp_path / d / "run" / "run_control.txt"
            assert cli.main(["validate", str(cfg), str(control)]) \
                == cli.EXIT_OK
        val_same = (tree(tmp_path / "ds_a" / "run")
                    == tree(tmp_path / "ds_b" / "run"))

        ok = twin_same and gradcheck_same and cal_same and val_same
        assert verdict(
            10, ok,
            f"byte-identical reruns: twin {twin_same}, gradcheck "
            f"{gradcheck_same}, calibrate {cal_same}, validate {val_same}",
        )
