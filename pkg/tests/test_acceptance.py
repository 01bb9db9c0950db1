"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. The quantitative targets
are desk-scale: small grids, short training budgets, property-based checks.
"""

import time

import numpy as np
import pytest
import torch

from astral.certify import CertifyConfig, bound_metrics, certify_direct, majorant_grad_y, optimal_beta
from astral.field import (
    ScalarField,
    VectorField,
    deriv_fd,
    grad_fd,
    make_grid,
    tensor_apply,
)
from astral.majorant import Certificate, astral_convdiff, astral_elliptic, astral_scalar, variational_loss
from astral.norms import cd_error_norm, energy_norm, l2_norm
from astral.problems import (
    convdiff_exact_flux,
    gen_convdiff,
    gen_elliptic_1d,
    gen_elliptic_2d,
    gen_pinn_problem,
)
from astral.rng import substream
from astral.solver import reference_solution, solve_elliptic, solve_elliptic_fd
from conftest import bubble_flux, manufactured_problem, sine_problem

torch.set_num_threads(4)

SLACK = 0.98  # 1 - 0.02 from the guarantee statements


def _perturbation_2d(grid, rng, max_mode=3):
    x, y = grid.meshgrid()
    d = np.zeros(grid.shape)
    for m in range(1, max_mode + 1):
        for n in range(1, max_mode + 1):
            d += rng.standard_normal() * np.sin(np.pi * m * x) * np.sin(np.pi * n * y)
    return d


def _perturbation_1d(grid, rng, max_mode=3):
    x = grid.axis_coords(0)
    return sum(rng.standard_normal() * np.sin(np.pi * k * x) for k in range(1, max_mode + 1))


def _random_certificate(problem, v, rng, rho):
    naive = tensor_apply(problem.a, grad_fd(v))
    comps = []
    for c in naive.components:
        scale = rho * max(float(np.std(c.values)), 1e-12)
        pert = scale * rng.standard_normal(problem.grid.shape)
        comps.append(ScalarField(problem.grid, c.values + pert))
    beta = float(10 ** rng.uniform(-1, 1))
    return Certificate(VectorField(problem.grid, tuple(comps)), beta)


class TestCriterion1GuaranteedBound:
    def test_guaranteed_bound_suite(self):
        t0 = time.time()
        rng = substream(20240501)
        tuples = 0
        violations = 0
        min_ratio = np.inf
        cases_2d = [("smooth_o", 7), ("smooth_b", 7), ("disc_o", 7), ("disc_b", 7)]
        cases_1d = [(1, 8), (2, 8), (3, 8)]
        rhos = (0.0, 0.3, 1.0)

        for family, n_problems in cases_2d:
            for k in range(n_problems):
                p = gen_elliptic_2d(family, 100 + k, make_grid(2, 5))
                u_ref = reference_solution(p, J_ref=7)
                for j in range(4):
                    scale = float(10 ** rng.uniform(-2, np.log10(0.5)))
                    delta = scale * _perturbation_2d(p.grid, rng)
                    v = ScalarField(p.grid, u_ref.values + delta)
                    cert = _random_certificate(p, v, rng, rhos[j % 3])
                    rep = astral_elliptic(v, cert, p, mode="safe")
                    err = energy_norm(ScalarField(p.grid, delta), p.a, p.b_sq)
                    ratio = np.sqrt(rep.total) / err
                    min_ratio = min(min_ratio, ratio)
                    tuples += 1
                    if ratio < SLACK:
                        violations += 1

        for family, n_problems in cases_1d:
            for k in range(n_problems):
                p = gen_elliptic_1d(family, 200 + k, make_grid(1, 5))
                u_ref = reference_solution(p, J_ref=7)
                for j in range(4):
                    scale = float(10 ** rng.uniform(-2, np.log10(0.5)))
                    delta = scale * _perturbation_1d(p.grid, rng)
                    v = ScalarField(p.grid, u_ref.values + delta)
                    cert = _random_certificate(p, v, rng, rhos[j % 3])
                    rep = astral_elliptic(v, cert, p, mode="safe")
                    err = energy_norm(ScalarField(p.grid, delta), p.a, p.b_sq)
                    ratio = np.sqrt(rep.total) / err
                    min_ratio = min(min_ratio, ratio)
                    tuples += 1
                    if ratio < SLACK:
                        violations += 1

        elapsed = time.time() - t0
        assert tuples >= 200
        assert violations == 0
        assert elapsed < 300.0
        print(
            f"\nPASS criterion 1: guaranteed bound on {tuples} tuples, "
            f"0 violations, min ratio {min_ratio:.3f}, {elapsed:.1f}s"
        )


class TestCriterion2Saturation:
    def test_saturation(self):
        p = manufactured_problem(6)
        g = p.grid
        y = VectorField(g, bubble_flux(g))
        rep = astral_elliptic(p.exact_solution, Certificate(y, 1.0), p)
        assert rep.total <= 1e-3

        # the exact pair leaves a 0/0 ratio, so tightness is pinned on a
        # nearby admissible solution with the exact-flux certificate
        delta = ScalarField.from_function(
            g, lambda a, b: 1e-2 * np.sin(np.pi * a) * np.sin(2 * np.pi * b)
        )
        v = ScalarField(g, p.exact_solution.values + delta.values)
        rep2 = astral_elliptic(v, Certificate(y, 1e4), p)
        err = energy_norm(delta, p.a, p.b_sq)
        ratio = np.sqrt(rep2.total) / err
        assert 0.95 <= ratio <= 1.05
        print(
            f"\nPASS criterion 2: exact-pair total {rep.total:.2e} <= 1e-3, "
            f"near-exact ratio {ratio:.5f} in [0.95, 1.05]"
        )


class TestCriterion3ClosedFormValues:
    def test_closed_form_values(self):
        p = manufactured_problem(7)
        zero = ScalarField.constant(p.grid, 0.0)
        cert = Certificate(VectorField(p.grid, (zero, zero)), 0.01)
        total = astral_elliptic(zero, cert, p, mode="safe").total
        assert total == pytest.approx(0.02502, abs=1e-4)

        energy_sq = energy_norm(p.exact_solution, p.a, p.b_sq) ** 2
        assert energy_sq == pytest.approx(1.0 / 45.0, abs=1e-4)

        var = variational_loss(p.exact_solution, p)
        assert var == pytest.approx(-1.0 / 90.0, abs=1e-4)
        print(
            f"\nPASS criterion 3: majorant {total:.6f} ~ 0.02502, "
            f"|||u|||^2 {energy_sq:.7f} ~ 1/45, variational {var:.7f} ~ -1/90"
        )


class TestCriterion4ScalingEquivariance:
    def test_scaling(self):
        from dataclasses import replace

        p = manufactured_problem(6)
        rng = substream(4)
        v = ScalarField(p.grid, rng.standard_normal(p.grid.shape))
        y = VectorField(
            p.grid,
            tuple(ScalarField(p.grid, rng.standard_normal(p.grid.shape)) for _ in range(2)),
        )
        cert = Certificate(y, 0.31)
        base = astral_scalar(v, cert, p).total
        worst = 0.0
        for s in (1e-3, 0.5, 1e3):
            p_s = replace(p, f=ScalarField(p.grid, s * p.f.values), exact_solution=None)
            v_s = ScalarField(p.grid, s * v.values)
            y_s = VectorField(
                p.grid, tuple(ScalarField(p.grid, s * c.values) for c in y.components)
            )
            scaled = astral_scalar(v_s, Certificate(y_s, 0.31), p_s).total
            worst = max(worst, abs(scaled / (s * s * base) - 1.0))
        assert worst <= 1e-12
        print(f"\nPASS criterion 4: scaling equivariance, worst deviation {worst:.2e}")


class TestCriterion5Certification:
    def test_certification(self):
        ratios = []
        mono_ok = True
        for seed in range(20):
            p = gen_elliptic_2d("smooth_o", 300 + seed, make_grid(2, 5))
            v = solve_elliptic_fd(p)
            u_ref = reference_solution(p, J_ref=7)
            err = energy_norm(ScalarField(p.grid, v.values - u_ref.values), p.a, p.b_sq)
            res = certify_direct(v, p, CertifyConfig(max_outer_iters=20))
            ratios.append(np.sqrt(res.report.total) / err)
            mono_ok &= all(
                b <= a * (1 + 1e-12) for a, b in zip(res.totals, res.totals[1:])
            )
        median = float(np.median(ratios))
        assert median <= 1.5
        assert mono_ok

        # tightness on approximate solutions whose error dominates the
        # discretization mismatch
        tight = []
        rng = substream(55)
        for seed in range(5):
            p = gen_elliptic_2d("smooth_o", 400 + seed, make_grid(2, 5))
            u_ref = reference_solution(p, J_ref=7)
            delta = 0.05 * _perturbation_2d(p.grid, rng)
            v = ScalarField(p.grid, u_ref.values + delta)
            err = energy_norm(ScalarField(p.grid, delta), p.a, p.b_sq)
            res = certify_direct(v, p, CertifyConfig(max_outer_iters=20))
            tight.append(np.sqrt(res.report.total) / err)
        assert np.median(tight) <= 1.5

        # beta solvers agree on a balanced state
        p = gen_elliptic_2d("smooth_o", 9, make_grid(2, 4))
        rng2 = substream(11)
        v = ScalarField(p.grid, rng2.standard_normal(p.grid.shape) * 0.1)
        naive = tensor_apply(p.a, grad_fd(v))
        y = VectorField(
            p.grid,
            tuple(
                ScalarField(p.grid, c.values + 0.3 * rng2.standard_normal(p.grid.shape))
                for c in naive.components
            ),
        )
        rep = astral_elliptic(v, Certificate(y, 1.0), p)
        from astral.certify import BETA_CAP, BETA_FLOOR, _golden_beta

        beta_cf = optimal_beta(rep.residual_term / 2.0, rep.flux_term / 2.0)
        beta_gs = _golden_beta(v, p, y, (BETA_FLOOR, BETA_CAP), 1e-12, "safe")
        assert beta_cf == pytest.approx(beta_gs, rel=1e-6)
        print(
            f"\nPASS criterion 5: median fd-solution ratio {median:.3f} <= 1.5, "
            f"monotone totals, perturbed-solution median {np.median(tight):.3f}, "
            f"beta solvers agree to {abs(beta_cf / beta_gs - 1):.1e}"
        )


class TestCriterion6Gradients:
    def test_majorant_grad_y_fd(self):
        p = gen_elliptic_2d("smooth_b", 77, make_grid(2, 4))
        rng = substream(7)
        v = ScalarField(p.grid, rng.standard_normal(p.grid.shape) * 0.1)
        y = VectorField(
            p.grid,
            tuple(ScalarField(p.grid, rng.standard_normal(p.grid.shape)) for _ in range(2)),
        )
        cert = Certificate(y, 0.8)
        grad = majorant_grad_y(v, cert, p)
        gvec = np.concatenate([c.values.ravel() for c in grad.components])
        size = int(np.prod(p.grid.shape))
        eps = 1e-5
        worst = 0.0
        for _ in range(10):
            d = rng.standard_normal(2 * size)
            d /= np.linalg.norm(d)

            def total_at(t):
                comps = tuple(
                    ScalarField(
                        p.grid,
                        y[ax].values + t * d[ax * size : (ax + 1) * size].reshape(p.grid.shape),
                    )
                    for ax in range(2)
                )
                return astral_elliptic(v, Certificate(VectorField(p.grid, comps), 0.8), p).total

            fd = (total_at(eps) - total_at(-eps)) / (2 * eps)
            an = float(gvec @ d)
            worst = max(worst, abs(fd - an) / max(abs(fd), 1e-300))
        assert worst <= 1e-5
        print(f"\nPASS criterion 6a: majorant y-gradient vs FD, worst rel err {worst:.1e}")

    @pytest.mark.parametrize("kind", [
        "astral", "astral_bc", "residual", "variational_gauss",
        "variational_mc", "pino", "l2_supervised",
    ])
    def test_param_grad_fd_all_kinds(self, kind):
        from test_nn import _loss_closures

        closures = _loss_closures(seed=1)
        closure, params = closures[kind]
        from astral.nn import param_grad

        grads = param_grad(params, closure)
        rng = np.random.default_rng(6)
        eps = 1e-6
        worst = 0.0
        checked = 0
        for pid in rng.choice(len(params), size=min(5, len(params)), replace=False):
            p = params[pid]
            idx = tuple(rng.integers(0, s) for s in p.shape) if p.ndim else ()
            with torch.no_grad():
                p[idx] += eps
            up = float(closure().detach())
            with torch.no_grad():
                p[idx] -= 2 * eps
            down = float(closure().detach())
            with torch.no_grad():
                p[idx] += eps
            fd = (up - down) / (2 * eps)
            an = float(grads[pid][idx]) if p.ndim else float(grads[pid])
            if abs(fd) > 1e-12:
                worst = max(worst, abs(an - fd) / abs(fd))
                checked += 1
        assert checked > 0
        assert worst <= 1e-5
        print(f"\nPASS criterion 6b[{kind}]: param gradient vs FD, worst rel err {worst:.1e}")


class TestCriterion7SolverOrder:
    def test_solver_order(self):
        errs = []
        for J in (5, 6):
            p = sine_problem(J)
            u = solve_elliptic(p)
            errs.append(l2_norm(ScalarField(p.grid, u.values - p.exact_solution.values)))
        ratio = errs[0] / errs[1]
        assert 3.2 <= ratio <= 4.8
        print(f"\nPASS criterion 7: L2 error ratio J5/J6 = {ratio:.3f} in [3.2, 4.8]")


class TestCriterion8PinnDeskRun:
    def test_pinn_desk_run(self):
        from astral.nn import TrainConfig, train_pinn
        from astral.nn.optim import OptimizerConfig

        problem = gen_pinn_problem(0, make_grid(2, 6))
        opt = OptimizerConfig(
            kind="lion", lr=1e-3, beta1=0.9, beta2=0.99,
            decay_factor=0.5, decay_period=1000,
        )
        astral_cfg = TrainConfig(
            loss="astral", optimizer=opt, epochs=2000, log_period=100, seed=0
        )
        res_astral = train_pinn(problem, astral_cfg)
        bound_ok = all(row["bound"] >= row["energy_error"] for row in res_astral.trace)
        final_astral = res_astral.final["rel_energy_error"]
        assert bound_ok
        assert final_astral <= 0.1

        residual_cfg = TrainConfig(
            loss="residual", optimizer=opt, epochs=2000, log_period=100, seed=0,
            collocation_points=1024,
        )
        res_res = train_pinn(problem, residual_cfg)
        final_res = res_res.final["rel_energy_error"]
        assert final_res <= 5.0 * final_astral
        print(
            f"\nPASS criterion 8: bound >= error at 100% of logged epochs, "
            f"astral final rel err {final_astral:.4f} <= 0.1, "
            f"residual {final_res:.4f} within 5x"
        )


class TestCriterion9OperatorDeskRun:
    def test_operator_desk_run(self):
        from astral.nn import OperatorTrainConfig, build_dataset, train_operator

        gen = lambda seed, i: gen_elliptic_1d(2, seed, make_grid(1, 5), sample_index=i)
        test = build_dataset(gen, 50, master_seed=999)
        results = {200: [], 400: []}
        all_corr = []
        for n_train in (200, 400):
            for seed in range(3):
                train = build_dataset(gen, n_train, master_seed=11 + seed)
                cfg = OperatorTrainConfig(scheme="unsupervised", seed=seed)
                res = train_operator(train, test, cfg)
                m = res.metrics
                assert np.all(m.test_bounds >= SLACK * m.test_errors)
                assert m.corr_test is not None and m.corr_test >= 0.5
                all_corr.append(m.corr_test)
                results[n_train].append(m.e_test)
        mean200 = float(np.mean(results[200]))
        mean400 = float(np.mean(results[400]))
        assert mean400 <= mean200
        print(
            f"\nPASS criterion 9: all test bounds >= 0.98 x errors, "
            f"corr in [{min(all_corr):.2f}, {max(all_corr):.2f}] >= 0.5, "
            f"E_test(400) {mean400:.3f} <= E_test(200) {mean200:.3f}"
        )


class TestCriterion10ConvDiff:
    def test_convdiff_bounds(self):
        rng = substream(10)
        min_ratio = np.inf
        for k in range(20):
            p = gen_convdiff(500 + k, make_grid(1, 6, time_extent=1.0))
            g = p.grid
            x, t = g.meshgrid()
            scale = float(10 ** rng.uniform(-2, 0))
            delta = scale * (
                rng.standard_normal() * np.sin(np.pi * x) * np.sin(0.5 * np.pi * t / g.time_extent)
                + rng.standard_normal() * np.sin(2 * np.pi * x) * (t / g.time_extent) ** 2
            )
            v = ScalarField(g, p.exact_solution.values + delta)
            y = deriv_fd(v, 0)
            bound = np.sqrt(astral_convdiff(v, y, p))
            err = cd_error_norm(ScalarField(g, delta))
            min_ratio = min(min_ratio, bound / err)
            assert bound >= SLACK * err

        # tightness at the exact pair needs the transient resolved in time
        p = gen_convdiff(3, make_grid(1, 6, time_extent=0.2), N=2)
        y = convdiff_exact_flux(p)
        val = astral_convdiff(p.exact_solution, y, p)
        assert val <= 1e-2
        print(
            f"\nPASS criterion 10: 20 perturbed problems, min bound/error "
            f"{min_ratio:.2f} >= 0.98; exact pair value {val:.2e} <= 1e-2"
        )


class TestCriterion11ConstantModeGuard:
    def test_constant_mode_guard(self):
        p = manufactured_problem(7)
        zero = ScalarField.constant(p.grid, 0.0)
        cert = Certificate(VectorField(p.grid, (zero, zero)), 0.01)
        true_sq = energy_norm(p.exact_solution, p.a, p.b_sq) ** 2
        paper = astral_elliptic(zero, cert, p, mode="paper").total
        safe = astral_elliptic(zero, cert, p, mode="safe").total
        assert paper < true_sq
        assert safe >= true_sq
        print(
            f"\nPASS criterion 11: paper-mode {paper:.5f} < true {true_sq:.5f} "
            f"<= safe-mode {safe:.5f}"
        )
