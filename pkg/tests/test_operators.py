import numpy as np
import pytest

import stochpe.operators as op
from stochpe.operators import (
    OperatorParams,
    cancellation_terms,
    coriolis,
    divergence_defect,
    double_transport_commutator,
    fraclap_transport_commutator,
    fractional_laplacian,
    hydrostatic_advection,
    lambda_power,
    leray_hydrostatic,
    leray_transport_commutator,
    project_state,
    q_part,
    state_defect,
    stratonovich_corrector,
    transport,
    vertical_velocity,
)
from stochpe.spectral import (
    Lattice,
    Parity,
    SpectralField,
    embed,
    gaussian_random_field,
    hdot_seminorm,
    inner_product,
    l2_norm,
    sobolev_norm,
    to_physical,
    zero_field,
)

import oracles

EV, OD, NO = Parity.EVEN, Parity.ODD, Parity.NONE


def rand_state(lat, seed, decay=2.0):
    raw = gaussian_random_field(lat, 2, (EV, EV), decay=decay, seed=seed)
    return project_state(raw)


def rand_b(lat, seed, support=2, decay=1.5):
    raw = gaussian_random_field(lat, 3, (EV, EV, OD), decay=decay, seed=seed)
    c = raw.coeffs
    c[:, lat.msq > support * support] = 0.0
    m1, m2, m3 = lat.mgrid
    dot = m1 * c[0] + m2 * c[1] + m3 * c[2]
    msq = np.maximum(lat.msq, 1)
    for i, m in enumerate((m1, m2, m3)):
        c[i] = c[i] - m * dot / msq
    n = lat.n
    c[:, n, n, n] = 0.0
    return SpectralField(lat, c, (EV, EV, OD))


def const_b(lat, c1, c2):
    b = zero_field(lat, 3, (EV, EV, OD))
    b.coeffs[0, lat.n, lat.n, lat.n] = c1
    b.coeffs[1, lat.n, lat.n, lat.n] = c2
    return b


def single_mode(lat, m, value, ncomp=1, comp=0, parity=None):
    parity = parity or ((EV,) * ncomp)
    f = zero_field(lat, ncomp, parity)
    n = lat.n
    f.coeffs[comp, n + m[0], n + m[1], n + m[2]] = value
    f.coeffs[comp, n - m[0], n - m[1], n - m[2]] = np.conj(value)
    from stochpe.spectral import symmetrized

    return symmetrized(f)


class TestParams:
    def test_ranges(self):
        with pytest.raises(ValueError):
            OperatorParams(s=-0.5)
        with pytest.raises(ValueError):
            OperatorParams(s=2.5)
        with pytest.raises(ValueError):
            OperatorParams(s=1.5, sigma=0.0)

    def test_hypothesis_flag(self):
        assert not OperatorParams(s=1.5, sigma=3.5).outside_hypotheses
        assert OperatorParams(s=0.5, sigma=3.5).outside_hypotheses
        assert OperatorParams(s=1.5, sigma=3.0).outside_hypotheses


class TestFractionalLaplacian:
    def test_identity_at_zero_order(self):
        lat = Lattice(3)
        f = gaussian_random_field(lat, 1, (EV,), decay=1.0, seed=1)
        out = fractional_laplacian(f, 0.0)
        assert np.allclose(out.coeffs, f.coeffs)  # zero-mean field

    def test_cos_full_laplacian(self):
        lat = Lattice(3)
        f = single_mode(lat, (1, 0, 0), 0.5)
        out = fractional_laplacian(f, 2.0)
        assert np.allclose(out.coeffs, (2 * np.pi) ** 2 * f.coeffs)

    def test_semigroup(self):
        lat = Lattice(4)
        f = gaussian_random_field(lat, 2, (EV, EV), decay=1.0, seed=2)
        twice = fractional_laplacian(fractional_laplacian(f, 1.0), 1.0)
        once = fractional_laplacian(f, 2.0)
        assert np.max(np.abs(twice.coeffs - once.coeffs)) <= 1e-12 * np.max(
            np.abs(once.coeffs)
        )

    def test_negative_order_rejected(self):
        lat = Lattice(2)
        f = gaussian_random_field(lat, 1, (EV,), seed=0)
        with pytest.raises(ValueError):
            fractional_laplacian(f, -1.0)

    def test_lambda_power_negative(self):
        lat = Lattice(2)
        f = gaussian_random_field(lat, 1, (EV,), seed=0)
        down = lambda_power(f, -1.0)
        up = lambda_power(down, 1.0)
        assert np.allclose(up.coeffs, f.coeffs)


class TestLeray:
    def test_horizontal_gradient_killed(self):
        lat = Lattice(3)
        f = zero_field(lat, 2, (EV, EV))
        f.coeffs[0, lat.n + 1, lat.n, lat.n] = 0.5
        f.coeffs[0, lat.n - 1, lat.n, lat.n] = 0.5
        assert l2_norm(leray_hydrostatic(f)) == 0.0

    def test_transverse_mode_kept(self):
        lat = Lattice(3)
        f = zero_field(lat, 2, (EV, EV))
        f.coeffs[1, lat.n + 1, lat.n, lat.n] = 0.5
        f.coeffs[1, lat.n - 1, lat.n, lat.n] = 0.5
        assert l2_norm(leray_hydrostatic(f) - f) == 0.0

    def test_projection_algebra(self):
        lat = Lattice(4)
        f = gaussian_random_field(lat, 2, (EV, EV), decay=1.5, seed=3)
        g = gaussian_random_field(lat, 2, (EV, EV), decay=1.5, seed=4)
        pf = leray_hydrostatic(f)
        scale = l2_norm(f)
        assert l2_norm(leray_hydrostatic(pf) - pf) <= 1e-12 * scale
        assert abs(
            inner_product(leray_hydrostatic(f), g) - inner_product(f, leray_hydrostatic(g))
        ) <= 1e-12 * scale * l2_norm(g)
        s = 1.3
        a = leray_hydrostatic(fractional_laplacian(f, s))
        b = fractional_laplacian(leray_hydrostatic(f), s)
        assert l2_norm(a - b) <= 1e-12 * l2_norm(a)

    def test_complement(self):
        lat = Lattice(4)
        f = gaussian_random_field(lat, 2, (EV, EV), decay=1.5, seed=5)
        total = leray_hydrostatic(f) + q_part(f)
        assert np.allclose(total.coeffs, f.coeffs)

    def test_three_components_rejected(self):
        lat = Lattice(2)
        f = gaussian_random_field(lat, 3, (EV, EV, OD), seed=1)
        with pytest.raises(ValueError):
            leray_hydrostatic(f)


class TestVerticalVelocity:
    def test_product_mode(self):
        lat = Lattice(3)
        V = zero_field(lat, 2, (EV, EV))
        n = lat.n
        for s1 in (1, -1):
            for s3 in (1, -1):
                V.coeffs[0, n + s1, n, n + s3] = 0.25
        w = vertical_velocity(V)
        G = lat.grid
        x = np.arange(G) / G
        X, _, Z = np.meshgrid(x, x, x, indexing="ij")
        expected = np.sin(2 * np.pi * X) * np.sin(2 * np.pi * Z)
        assert np.max(np.abs(to_physical(w)[0] - expected)) < 1e-13

    def test_z_independent_divfree_gives_zero(self):
        lat = Lattice(3)
        V = zero_field(lat, 2, (EV, EV))
        n = lat.n
        # V = (cos(2 pi x2), 0): divergence-free, z independent
        V.coeffs[0, n, n + 1, n] = 0.5
        V.coeffs[0, n, n - 1, n] = 0.5
        assert l2_norm(vertical_velocity(V)) == 0.0

    def test_vertical_derivative_balances(self):
        lat = Lattice(4)
        V = rand_state(lat, 7)
        w = vertical_velocity(V)
        from stochpe.spectral import derivative

        resid = derivative(w, 2).coeffs[0] + (
            derivative(V.component(0), 0).coeffs[0] + derivative(V.component(1), 1).coeffs[0]
        )
        assert np.max(np.abs(resid)) <= 1e-12 * max(l2_norm(V), 1.0)

    def test_oracle(self):
        lat = Lattice(3)
        V = rand_state(lat, 8)
        w = vertical_velocity(V)
        expect = oracles.vertical_velocity_oracle(V.coeffs)
        assert np.max(np.abs(w.coeffs[0] - expect)) < 1e-13

    def test_precondition(self):
        lat = Lattice(3)
        V = gaussian_random_field(lat, 2, (EV, EV), decay=1.0, seed=9)
        with pytest.raises(ValueError):
            vertical_velocity(V)


class TestAdvection:
    def test_constant_is_annihilated(self):
        lat = Lattice(3)
        g = rand_state(lat, 1)
        const = zero_field(lat, 2, (EV, EV))
        const.coeffs[:, lat.n, lat.n, lat.n] = 2.0
        assert l2_norm(hydrostatic_advection(g, const)) == 0.0

    def test_energy_cancellation(self):
        for seed in range(5):
            lat = Lattice(4)
            V = rand_state(lat, 20 + seed)
            q = leray_hydrostatic(hydrostatic_advection(V, V))
            assert abs(inner_product(q, V)) <= 1e-10 * l2_norm(q) * l2_norm(V)

    def test_brute_force_convolution(self):
        lat = Lattice(2)
        g = rand_state(lat, 31)
        f = gaussian_random_field(lat, 2, (EV, EV), decay=1.0, seed=32)
        ours = hydrostatic_advection(g, f)
        expect = oracles.advection_oracle(g.coeffs, f.coeffs, lat.n)
        assert np.max(np.abs(ours.coeffs - expect)) <= 1e-12 * np.max(np.abs(expect))

    def test_lattice_mismatch(self):
        g = rand_state(Lattice(2), 1)
        f = gaussian_random_field(Lattice(3), 2, (EV, EV), seed=2)
        with pytest.raises(ValueError):
            hydrostatic_advection(g, f)


class TestCoriolis:
    def test_zero_rate(self):
        lat = Lattice(2)
        V = rand_state(lat, 2)
        assert l2_norm(coriolis(V, 0.0)) == 0.0

    def test_quarter_turn(self):
        lat = Lattice(3)
        V = zero_field(lat, 2, (EV, EV))
        V.coeffs[0, lat.n + 1, lat.n, lat.n] = 0.5
        V.coeffs[0, lat.n - 1, lat.n, lat.n] = 0.5
        out = coriolis(V, 1.0)
        assert np.allclose(out.coeffs[1], V.coeffs[0])
        assert np.all(out.coeffs[0] == 0)

    def test_orthogonality(self):
        lat = Lattice(4)
        for seed in range(5):
            V = rand_state(lat, 40 + seed)
            F = coriolis(V, 1.7)
            assert abs(inner_product(F, V)) <= 1e-13 * l2_norm(F) * l2_norm(V)


class TestTransport:
    def test_constant_b(self):
        lat = Lattice(3)
        b = const_b(lat, 1.0, 0.0)
        f = single_mode(lat, (1, 0, 0), 0.5)
        out = transport(b, f)
        G = lat.grid
        x = np.arange(G) / G
        X = np.meshgrid(x, x, x, indexing="ij")[0]
        assert np.max(np.abs(to_physical(out)[0] + 2 * np.pi * np.sin(2 * np.pi * X))) < 1e-12

    def test_skew_symmetry(self):
        lat = Lattice(4)
        for seed in range(5):
            b = rand_b(lat, 50 + seed)
            f = gaussian_random_field(lat, 1, (EV,), decay=1.5, seed=60 + seed)
            out = transport(b, f)
            assert abs(inner_product(out, f)) <= 1e-10 * l2_norm(out) * l2_norm(f)

    def test_divergence_precondition(self):
        lat = Lattice(3)
        b = gaussian_random_field(lat, 3, (EV, EV, OD), decay=1.0, seed=70)
        assert divergence_defect(b) > 1e-10
        f = gaussian_random_field(lat, 1, (EV,), seed=71)
        with pytest.raises(ValueError):
            transport(b, f)

    def test_brute_force_convolution(self):
        lat = Lattice(2)
        b = rand_b(lat, 80)
        f = gaussian_random_field(lat, 1, (NO,), decay=1.0, seed=81)
        ours = transport(b, f)
        expect = oracles.transport_oracle(b.coeffs, f.coeffs, lat.n)
        assert np.max(np.abs(ours.coeffs - expect)) <= 1e-12 * np.max(np.abs(expect))

    def test_sparse_equals_grid_path(self):
        lat = Lattice(4)
        b = rand_b(lat, 90)
        f = gaussian_random_field(lat, 2, (EV, EV), decay=1.5, seed=91)
        sparse = transport(b, f)
        limit = op.SPARSE_MODE_LIMIT
        try:
            op.SPARSE_MODE_LIMIT = 0
            dense = transport(b, f)
        finally:
            op.SPARSE_MODE_LIMIT = limit
        assert np.max(np.abs(sparse.coeffs - dense.coeffs)) <= 1e-12 * np.max(
            np.abs(dense.coeffs)
        )


class TestCorrector:
    def test_constant_b_pairing(self):
        lat = Lattice(4)
        V = rand_state(lat, 100)
        bs = [const_b(lat, 0.7, -0.4), const_b(lat, -0.2, 0.9)]
        corr = stratonovich_corrector(bs, V)
        total = sum(l2_norm(op.projected_transport(b, V)) ** 2 for b in bs)
        assert 2 * inner_product(corr, V) == pytest.approx(-total, rel=1e-12)

    def test_zero_noise(self):
        lat = Lattice(3)
        V = rand_state(lat, 101)
        assert l2_norm(stratonovich_corrector([], V)) == 0.0

    def test_compositional_recomputation(self):
        lat = Lattice(4)
        V = rand_state(lat, 102)
        # state without vertically averaged modes
        V.coeffs[:, :, :, lat.n] = 0.0
        b = rand_b(lat, 103)
        corr = stratonovich_corrector([b], V)
        manual = 0.5 * leray_hydrostatic(
            transport(b, leray_hydrostatic(transport(b, V, check=False)), check=False)
        )
        assert np.max(np.abs(corr.coeffs - manual.coeffs)) <= 1e-13 * max(
            np.max(np.abs(manual.coeffs)), 1e-30
        )


class TestCommutators:
    def test_leray_commutator_identity(self):
        lat = Lattice(4)
        for seed in range(5):
            b = rand_b(lat, 110 + seed)
            phi = rand_state(lat, 120 + seed)
            lhs = leray_transport_commutator(b, phi)
            rhs = -1.0 * q_part(transport(b, phi, check=False))
            scale = max(l2_norm(rhs), 1e-30)
            assert l2_norm(lhs - rhs) <= 1e-12 * scale
            # supported on the vertically averaged slice only
            n = lat.n
            off_slice = lhs.coeffs.copy()
            off_slice[:, :, :, n] = 0.0
            assert np.max(np.abs(off_slice)) <= 1e-14 * scale

    def test_constant_b_commutes(self):
        lat = Lattice(3)
        b = const_b(lat, 0.3, -0.2)
        phi = rand_state(lat, 130)
        assert l2_norm(leray_transport_commutator(b, phi)) <= 1e-13 * l2_norm(phi)
        V = gaussian_random_field(lat, 1, (EV,), decay=1.0, seed=131)
        assert l2_norm(fraclap_transport_commutator(b, V, 1.3)) <= 1e-12 * hdot_seminorm(
            V, 1.3
        )

    def test_unprojected_input_rejected(self):
        lat = Lattice(3)
        b = rand_b(lat, 132)
        phi = gaussian_random_field(lat, 2, (EV, EV), decay=1.0, seed=133)
        with pytest.raises(ValueError):
            leray_transport_commutator(b, phi)

    def test_zero_order_vanishes(self):
        lat = Lattice(3)
        b = rand_b(lat, 134)
        f = gaussian_random_field(lat, 1, (EV,), decay=1.0, seed=135)
        out = fraclap_transport_commutator(b, f, 0.0)
        assert l2_norm(out) <= 1e-12 * l2_norm(f)

    def test_one_dimensional_convolution_weights(self):
        # x1-dependent scalar field and transporting field: the commutator
        # coefficients reduce to (|k|^s - |j|^s) b_{k-j} (i k_j) f_j
        lat = Lattice(4)
        s = 1.7
        b = zero_field(lat, 3, (EV, EV, OD))
        n = lat.n
        b.coeffs[1, n + 1, n, n] = 1.0  # b = 2cos(2 pi x1) e2 is div-free
        b.coeffs[1, n - 1, n, n] = 1.0
        f = zero_field(lat, 1, (NO,))
        rngv = {1: 0.3 - 0.1j, 2: 0.05 + 0.2j}
        for j, v in rngv.items():
            f.coeffs[0, n, n + j, n] = v
            f.coeffs[0, n, n - j, n] = np.conj(v)
        # transported along x2 by b2(x1): not 1d; instead use b2 depending on x2?
        # direct comparison: build equivalent 1d problem along x2 with b = 2cos(2 pi x1)... skip mixing:
        # use b aligned with the variation axis: b = 2cos(2 pi x1) e1 is NOT
        # divergence-free, so transport with check disabled for the oracle test.
        b1 = zero_field(lat, 3, (EV, EV, OD))
        b1.coeffs[0, n + 1, n, n] = 1.0
        b1.coeffs[0, n - 1, n, n] = 1.0
        f1 = zero_field(lat, 1, (NO,))
        for j, v in rngv.items():
            f1.coeffs[0, n + j, n, n] = v
            f1.coeffs[0, n - j, n, n] = np.conj(v)
        ours = fraclap_transport_commutator(b1, f1, s)
        b_hat = {1: 1.0, -1: 1.0}
        f_hat = {}
        for j, v in rngv.items():
            f_hat[j] = v
            f_hat[-j] = np.conj(v)
        expect = oracles.fraclap_commutator_1d_oracle(b_hat, f_hat, s, lat.n)
        for k in range(-lat.n, lat.n + 1):
            got = ours.coeffs[0, n + k, n, n]
            want = expect.get(k, 0.0)
            assert abs(got - want) <= 1e-12 * max(abs(want), 1.0)

    def test_double_commutator_brute_force(self):
        lat = Lattice(2)
        b = rand_b(lat, 140)
        f = gaussian_random_field(lat, 1, (NO,), decay=1.0, seed=141)
        ours = double_transport_commutator(b, f, 1.5)

        def lam(box, s):
            n = lat.n
            modes = np.arange(-n, n + 1)
            m1, m2, m3 = np.meshgrid(modes, modes, modes, indexing="ij")
            w = (2 * np.pi * np.sqrt(m1 ** 2 + m2 ** 2 + m3 ** 2)) ** s
            w[n, n, n] = 0.0
            return box * w

        def brute_comm(box):
            t = oracles.transport_oracle(b.coeffs, box[None], lat.n)[0]
            return lam(t, 1.5) - oracles.transport_oracle(b.coeffs, lam(box, 1.5)[None], lat.n)[0]

        inner = oracles.transport_oracle(b.coeffs, f.coeffs, lat.n)[0]
        expect = brute_comm(inner) - oracles.transport_oracle(
            b.coeffs, brute_comm(f.coeffs[0])[None], lat.n
        )[0]
        assert np.max(np.abs(ours.coeffs[0] - expect)) <= 1e-12 * np.max(np.abs(expect))


class TestCancellation:
    def test_constant_b_exact_zero(self):
        lat = Lattice(4)
        V = rand_state(lat, 150)
        bs = [const_b(lat, 0.5, 0.1)]
        combined, first, second = cancellation_terms(bs, V, 3.5)
        assert abs(combined) <= 1e-12 * abs(second)

    def test_zero_state(self):
        lat = Lattice(3)
        V = zero_field(lat, 2, (EV, EV))
        assert op.cancellation_functional([rand_b(lat, 151)], V, 3.5) == 0.0

    def test_resolution_sweep_no_upward_trend(self):
        sigma = 3.5
        tops = []
        for n in (4, 6, 8):
            lat = Lattice(n + 4)
            b = rand_b(lat, 152, support=2)
            vals = []
            for seed in range(6):
                raw = gaussian_random_field(lat, 2, (EV, EV), decay=4.0, seed=160 + seed)
                raw.coeffs[:, lat.msq > n * n] = 0.0
                V = project_state(raw)
                den = sobolev_norm(V, sigma + 0.5) ** 2
                vals.append(abs(op.cancellation_functional([b], V, sigma)) / den)
            tops.append(max(vals))
        slope = np.polyfit(np.log([4, 6, 8]), np.log(tops), 1)[0]
        assert slope <= 0.1


class TestStateHelpers:
    def test_project_state_idempotent_invariants(self):
        lat = Lattice(4)
        raw = gaussian_random_field(lat, 2, (EV, EV), decay=1.0, seed=170)
        V = project_state(raw)
        assert state_defect(V) <= 1e-13 * max(l2_norm(V), 1.0)
