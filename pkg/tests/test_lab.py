import numpy as np
import pytest

from stochpe import lab
from stochpe.lab import (
    Example1DReport,
    cancellation_ladder,
    energy_budget,
    fit_advection_constant,
    pointwise_product,
    shear_transport_field,
    oblique_transport_field,
    verify_cancellation,
    verify_commutator_alpha,
    verify_double_commutator,
    verify_kato_ponce,
    verify_leray_commutator,
    verify_multiplier_commutator,
    verify_negative_sobolev,
    wap_path_norm,
    weighted_cancellation_1d,
)
from stochpe.integrator import SimParams, integrate, random_state
from stochpe.noise import NoiseSpec, build_noise_model
from stochpe.operators import fraclap_transport_commutator, lambda_power
from stochpe.spectral import Lattice, Parity, derivative, l2_norm, zero_field


class TestKatoPonce:
    def test_constant_factor_kills_commutator(self):
        lat = Lattice(4)
        f = zero_field(lat, 1, (Parity.NONE,))
        f.coeffs[0, lat.n, lat.n, lat.n] = 2.0  # constant
        g = lab.sample_scalar(lat, 2, 1.0, 3)
        comm = lambda_power(pointwise_product(f, g), 3.0) - pointwise_product(
            f, lambda_power(g, 3.0)
        )
        assert l2_norm(comm) <= 1e-12 * l2_norm(lambda_power(g, 3.0))

    def test_squared_field_hoelder(self):
        # |f^2| <= 2 |f|_inf |f| is plain Hoelder: ratio at most one
        lat = Lattice(4)
        from stochpe.spectral import to_physical

        for seed in range(5):
            f = lab.sample_scalar(lat, 2, 1.5, seed)
            ff = pointwise_product(f, f)
            lhs = l2_norm(ff)
            rhs = 2.0 * lab.sup_norm(f) * l2_norm(f)
            assert lhs <= rhs * (1 + 1e-12)

    def test_sweep_bounded(self):
        reports = verify_kato_ponce(samples=12, ns=(4, 8), s=3.0, seed=1)
        for rep in reports:
            assert rep.passes
            assert all(np.isfinite(v) for v in rep.max_ratio.values())


class TestCommutatorSweeps:
    def test_alpha_zero_reduces_to_product_commutators(self):
        # divergence-free rewrite: [L^s, b.grad]V = sum_j [L^s, b_j .](d_j V)
        lat = Lattice(6)
        b = lab.sample_transport_field(lat, 2, 1.0, 5)
        V = lab.sample_scalar(lat, 3, 2.0, 6)
        s = 3.0
        route_a = fraclap_transport_commutator(b, V, s)
        acc = None
        for j in range(3):
            bj = b.component(j)
            bj = lab.SpectralField(lat, bj.coeffs, (Parity.NONE,))
            dv = derivative(V, j)
            piece = lambda_power(pointwise_product(bj, dv), s) - pointwise_product(
                bj, lambda_power(dv, s)
            )
            acc = piece if acc is None else acc + piece
        assert np.max(np.abs(route_a.coeffs - acc.coeffs)) <= 1e-11 * np.max(
            np.abs(acc.coeffs)
        )

    def test_alpha_sweep(self):
        for alpha in (-0.5, 0.0, 0.5):
            rep = verify_commutator_alpha(samples=6, ns=(4, 8), s=3.0, alpha=alpha, seed=2)
            assert rep.passes
            assert rep.inside_hypotheses

    def test_negative_sobolev_rough_input(self):
        rep = verify_negative_sobolev(samples=6, ns=(4, 8), s=3.0, alpha=3.0, beta=2.0,
                                      seed=3, decay=0.8)
        assert rep.passes

    def test_negative_sobolev_flags_bad_params(self):
        rep = verify_negative_sobolev(samples=2, ns=(4,), s=3.0, alpha=4.0, beta=2.0, seed=3)
        assert not rep.inside_hypotheses

    def test_double_commutator_ladder_non_increasing(self):
        rep = verify_double_commutator(samples=5, ns=(4, 8), s=3.0, seed=4, ladder=(4, 8, 16))
        ratios = rep.extras["ladder_ratios"]
        assert all(b <= a * 1.05 for a, b in zip(ratios, ratios[1:]))
        assert rep.passes

    def test_leray_commutator_variants(self):
        plain = verify_leray_commutator(samples=5, ns=(4, 8), s=3.0, seed=5)
        for rep in plain:
            assert rep.passes
        zfree = verify_leray_commutator(samples=5, ns=(4, 8), s=3.0, seed=5,
                                        z_independent=True)
        for rep in zfree:
            assert rep.passes  # first-term-only bound suffices

    def test_multiplier_commutator(self):
        rep = verify_multiplier_commutator(samples=6, ns=(4, 8), s=3.0, seed=6)
        assert rep.passes


class TestCancellation:
    def test_stream_noise_has_no_halforder_term(self):
        noise = build_noise_model(
            NoiseSpec(modes=2, decay=1.0, amplitude=0.5, seed=7, family="horizontal_stream")
        )
        rep = verify_cancellation(noise, samples=4, sigma=3.5, ns=(4, 6), seed=8)
        assert rep.z_independent
        # the half-order regressor vanishes identically for this family
        assert rep.term_coefficients[0] == 0.0

    def test_ladder_shapes(self):
        lat = Lattice(2)
        bs = [shear_transport_field(lat, 1.0, 0), shear_transport_field(lat, 1.0, 1)]
        rep = cancellation_ladder(bs, sigma=3.5, radii=(2, 4))
        assert rep.combined_top.shape == (2,)
        assert np.all(rep.combined_top > 0)
        assert np.all(rep.naive_top > rep.combined_top)  # the first term dominates

    def test_oblique_field_validation(self):
        lat = Lattice(2)
        with pytest.raises(ValueError):
            oblique_transport_field(lat, 1.0, 0, 0)

    def test_fit_advection_constant(self):
        c = fit_advection_constant(samples=4, n=4, sigma=3.5, seed=9)
        assert np.isfinite(c) and c > 0


class TestExample1D:
    def test_reference_case(self):
        rep = weighted_cancellation_1d(1.0, 0.0, 24)
        assert rep.max_rel_discrepancy <= 1e-10
        assert np.allclose(rep.a_closed, 2.0 * rep.ks ** 2)
        scale = np.abs(rep.a_closed)
        assert np.max(np.abs(rep.b_direct)) <= 1e-10 * np.max(scale)
        assert rep.functional_residual <= 1e-10

    def test_weighted_case_growth(self):
        rep = weighted_cancellation_1d(1.0, 0.1, 24)
        assert rep.max_rel_discrepancy <= 1e-10
        ratio = rep.a_closed / rep.ks ** 2
        assert ratio[-1] > ratio[0]  # exponential weights break the cancellation

    def test_flat_case_bounded(self):
        rep = weighted_cancellation_1d(2.0, 0.0, 40)
        ratio = np.abs(rep.a_closed) / rep.ks ** 4
        mid = ratio[np.where(rep.ks == 20)[0][0]]
        assert np.max(ratio) <= 1.1 * mid

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            weighted_cancellation_1d(0.0, 0.0, 24)
        with pytest.raises(ValueError):
            weighted_cancellation_1d(1.0, -0.1, 24)
        with pytest.raises(ValueError):
            weighted_cancellation_1d(1.0, 0.0, 4)


class TestPathNorm:
    def test_constant_path(self):
        u = np.full(64, 2.0)
        out = wap_path_norm(u, 0.25, 2.0, 1.0)
        assert out == pytest.approx((1.0 * 2.0 ** 2) ** 0.5, rel=1e-12)

    def test_linear_path_oracle(self):
        # u(t) = t on [0,1], alpha = 1/4, p = 2:
        # integral of u^2 is 1/3; double integral of |s-r|^(1/2) is 8/15
        N = 2000
        t = (np.arange(N) + 0.5) / N
        out = wap_path_norm(t, 0.25, 2.0, 1.0)
        expect = np.sqrt(1.0 / 3.0 + 8.0 / 15.0)
        assert abs(out - expect) <= 0.01 * expect

    def test_refinement(self):
        def series(n):
            t = (np.arange(n) + 0.5) / n
            return np.sin(2 * np.pi * t) + 0.3 * t

        a = wap_path_norm(series(256), 0.3, 2.0, 1.0)
        b = wap_path_norm(series(512), 0.3, 2.0, 1.0)
        assert abs(a - b) <= 0.02 * b

    def test_monotone_in_alpha(self):
        rng = np.random.default_rng(3)
        u = np.cumsum(rng.standard_normal(128)) * 0.05
        vals = [wap_path_norm(u, a, 2.0, 1.0) for a in (0.1, 0.2, 0.3, 0.4)]
        assert all(x <= y for x, y in zip(vals, vals[1:]))

    def test_homogeneous(self):
        rng = np.random.default_rng(4)
        u = rng.standard_normal(64)
        a = wap_path_norm(3.0 * u, 0.25, 2.0, 1.0)
        b = wap_path_norm(u, 0.25, 2.0, 1.0)
        assert a == pytest.approx(3.0 * b, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            wap_path_norm([1.0], 0.25, 2.0, 1.0)
        with pytest.raises(ValueError):
            wap_path_norm([1.0, 2.0], 1.5, 2.0, 1.0)
        with pytest.raises(ValueError):
            wap_path_norm([1.0, 2.0], 0.5, 0.5, 1.0)


class TestEnergyBudget:
    def _run(self, dt, noise):
        p = SimParams(n=4, s=1.5, sigma=3.5, rho=50.0, dt=dt, T=0.08, seed=3,
                      record_every=1)
        V0 = random_state(p.lattice, 0.2, 4.0, seed=10)
        diag = integrate(p, noise, V0, record_terms=True)
        return energy_budget(diag, p), diag

    def test_residual_shrinks_with_dt(self):
        noise = build_noise_model(NoiseSpec())
        coarse, _ = self._run(0.02, noise)
        fine, _ = self._run(0.005, noise)
        assert fine.rel_residual < 0.5 * coarse.rel_residual
        assert coarse.fitted_constant > 0

    def test_zero_state_budget(self):
        noise = build_noise_model(NoiseSpec(modes=1, decay=1.0, amplitude=0.1, seed=2))
        p = SimParams(n=4, s=1.5, sigma=3.5, rho=2.0, dt=0.01, T=0.05, seed=3,
                      record_every=1)
        lat = p.lattice
        diag = integrate(p, noise, zero_field(lat, 2, (Parity.EVEN, Parity.EVEN)),
                         record_terms=True)
        rep = energy_budget(diag, p)
        assert np.all(rep.residuals == 0.0)

    def test_requires_term_recording(self):
        noise = build_noise_model(NoiseSpec())
        p = SimParams(n=4, s=1.5, sigma=3.5, rho=2.0, dt=0.01, T=0.02, seed=3)
        diag = integrate(p, noise, random_state(p.lattice, 0.1, 4.0, seed=1))
        with pytest.raises(ValueError):
            energy_budget(diag, p)

    def test_critical_margin_with_small_noise(self):
        noise = build_noise_model(NoiseSpec(modes=2, decay=1.0, amplitude=1e-3, seed=4))
        p = SimParams(n=4, s=1.0, sigma=3.5, rho=0.05, dt=0.01, T=0.1, seed=5,
                      record_every=1)
        V0 = random_state(p.lattice, 0.01, 4.0, seed=11)
        diag = integrate(p, noise, V0, record_terms=True)
        rep = energy_budget(diag, p)
        assert rep.dissipation_margin >= 0.0
