"""Numerical verification harness for the inequalities behind the solver.

Each ``verify_*`` function draws random band-limited fields, evaluates both
sides of one inequality exactly (band-limited fields are genuine smooth
functions, and the working lattice is enlarged so no truncation error enters),
and reports the distribution of the ratio left/right across samples and
resolutions.  An inequality with an unspecified constant is operationalized
as: the max ratio must not trend upward with resolution (slope of
log(max ratio) against log(n) below a small threshold).

The transporting fields are band-limited to a fixed low wavenumber while the
transported fields fill the whole resolution ball; the resolution sweep then
stresses exactly the high-frequency content the estimates are about.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.optimize

from . import rng
from .noise import NoiseModel
from .operators import (
    cancellation_terms,
    divergence_defect,
    double_transport_commutator,
    fraclap_transport_commutator,
    lambda_power,
    leray_hydrostatic,
    leray_transport_commutator,
    project_state,
    q_part,
    transport,
)
from .spectral import (
    Lattice,
    Parity,
    SpectralField,
    derivative,
    embed,
    field_from_coeffs,
    gaussian_random_field,
    hdot_seminorm,
    l2_norm,
    sobolev_norm,
    to_physical,
    to_spectral,
)

DEFAULT_B_WAVENUMBER = 4
TREND_SLOPE_LIMIT = 0.1


# ---------------------------------------------------------------------------
# sampling helpers
# ---------------------------------------------------------------------------


def _work_lattice(n: int, headroom: int) -> Lattice:
    return Lattice(n + headroom)


def sample_scalar(lattice: Lattice, support: int, decay: float, seed: int) -> SpectralField:
    f = gaussian_random_field(lattice, 1, (Parity.NONE,), decay=decay, seed=seed)
    c = f.coeffs
    c[:, lattice.msq > support * support] = 0.0
    return SpectralField(lattice, c, f.parity)


def sample_transport_field(
    lattice: Lattice, support: int, decay: float, seed: int
) -> SpectralField:
    """Divergence-free 3-component field, band-limited to ``support``."""
    parity = (Parity.EVEN, Parity.EVEN, Parity.ODD)
    raw = gaussian_random_field(lattice, 3, parity, decay=decay, seed=seed)
    c = raw.coeffs
    c[:, lattice.msq > support * support] = 0.0
    m1, m2, m3 = lattice.mgrid
    dot = m1 * c[0] + m2 * c[1] + m3 * c[2]
    msq = np.maximum(lattice.msq, 1)
    for i, m in enumerate((m1, m2, m3)):
        c[i] = c[i] - m * dot / msq
    n = lattice.n
    c[:, n, n, n] = 0.0
    out = SpectralField(lattice, c, parity)
    assert divergence_defect(out) < 1e-12
    return out


def sample_projected_pair(lattice: Lattice, support: int, decay: float, seed: int):
    """(b, phi) with phi a 2-component projection-invariant even field."""
    phi_raw = gaussian_random_field(
        lattice, 2, (Parity.EVEN, Parity.EVEN), decay=decay, seed=seed
    )
    phi_raw.coeffs[:, lattice.msq > support * support] = 0.0
    return project_state(phi_raw)


def sample_state(lattice: Lattice, support: int, decay: float, seed: int) -> SpectralField:
    V = sample_projected_pair(lattice, support, decay, seed)
    return V


def _shell_mask(lattice: Lattice, radius: int) -> np.ndarray:
    # thin band [radius, radius+2): wide enough to hold generic (non-axis) modes
    return (lattice.msq >= radius * radius) & (lattice.msq < (radius + 2) ** 2)


def shell_state(lattice: Lattice, radius: int, seed: int) -> SpectralField:
    """Admissible state concentrated on the band radius <= |m| < radius + 2."""
    raw = gaussian_random_field(
        lattice, 2, (Parity.EVEN, Parity.EVEN), decay=0.0, seed=seed
    )
    raw.coeffs[:, ~_shell_mask(lattice, radius)] = 0.0
    V = project_state(raw)
    size = l2_norm(V)
    if size == 0:
        raise ValueError(f"no admissible modes near |m| = {radius}")
    return (1.0 / size) * V


def shell_scalar(lattice: Lattice, radius: int, seed: int) -> SpectralField:
    f = sample_scalar(lattice, lattice.n, 0.0, seed)
    f.coeffs[:, ~_shell_mask(lattice, radius)] = 0.0
    return f


def pointwise_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Exact truncated product of two scalar fields on a shared lattice."""
    if f.lattice != g.lattice:
        raise ValueError("product requires a shared lattice")
    values = to_physical(f) * to_physical(g)
    return to_spectral(values, f.lattice, (Parity.NONE,))


def sup_norm(f: SpectralField) -> float:
    return float(np.max(np.abs(to_physical(f))))


def grad_sup_norm(f: SpectralField) -> float:
    return max(float(np.max(np.abs(to_physical(derivative(f, a))))) for a in range(3))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class LemmaReport:
    """Ratio statistics of one inequality across samples and resolutions."""

    lemma_id: str
    lhs_formula: str
    rhs_formula: str
    resolutions: list[int]
    samples: int
    ratios: dict[int, np.ndarray]
    inside_hypotheses: bool = True
    extras: dict = dc_field(default_factory=dict)

    @property
    def max_ratio(self) -> dict[int, float]:
        return {n: float(np.max(r)) for n, r in self.ratios.items()}

    @property
    def trend_slope(self) -> float:
        """Slope of log(max ratio) against log(n)."""
        ns = np.array(sorted(self.ratios))
        if len(ns) < 2:
            return 0.0
        tops = np.array([np.max(self.ratios[n]) for n in ns])
        return float(np.polyfit(np.log(ns), np.log(np.maximum(tops, 1e-300)), 1)[0])

    @property
    def passes(self) -> bool:
        return self.trend_slope <= TREND_SLOPE_LIMIT

    def fitted_constant(self) -> float:
        return float(max(np.max(r) for r in self.ratios.values()))


def _sweep(lemma_id, lhs_formula, rhs_formula, ns, samples, one_sample, inside=True, extras=None):
    ratios = {}
    for n in ns:
        vals = np.empty(samples)
        for i in range(samples):
            lhs, rhs = one_sample(n, i)
            vals[i] = lhs / max(rhs, 1e-300)
        ratios[int(n)] = vals
    return LemmaReport(
        lemma_id=lemma_id,
        lhs_formula=lhs_formula,
        rhs_formula=rhs_formula,
        resolutions=[int(n) for n in ns],
        samples=samples,
        ratios=ratios,
        inside_hypotheses=inside,
        extras=extras or {},
    )


# ---------------------------------------------------------------------------
# product and commutator estimates
# ---------------------------------------------------------------------------


def verify_kato_ponce(
    samples: int = 200,
    ns=(4, 8, 16),
    s: float = 3.0,
    seed: int = 0,
    decay: float = 3.0,
) -> list[LemmaReport]:
    """Fractional product rule and first commutator bound for products."""
    if s < 0:
        raise ValueError("the product rule needs s >= 0")

    def product_sample(n, i):
        lat = _work_lattice(n, n)  # product support is 2n
        f = sample_scalar(lat, n, decay, rng.derive_seed(seed, 1, n, i))
        g = sample_scalar(lat, n, decay, rng.derive_seed(seed, 2, n, i))
        fg = pointwise_product(f, g)
        lhs = hdot_seminorm(fg, s)
        rhs = sup_norm(f) * sobolev_norm(g, s) + sup_norm(g) * sobolev_norm(f, s)
        return lhs, rhs

    def commutator_sample(n, i):
        lat = _work_lattice(n, n)
        f = sample_scalar(lat, n, decay, rng.derive_seed(seed, 3, n, i))
        g = sample_scalar(lat, n, decay, rng.derive_seed(seed, 4, n, i))
        lhs_field = lambda_power(pointwise_product(f, g), s) - pointwise_product(
            f, lambda_power(g, s)
        )
        lhs = l2_norm(lhs_field)
        rhs = grad_sup_norm(f) * l2_norm(lambda_power(g, s - 1.0)) + hdot_seminorm(
            f, s
        ) * sup_norm(g)
        return lhs, rhs

    rep1 = _sweep(
        "kato_ponce_product",
        "|L^s(fg)|",
        "|f|_inf |g|_s + |g|_inf |f|_s",
        ns,
        samples,
        product_sample,
    )
    rep2 = _sweep(
        "kato_ponce_commutator",
        "|L^s(fg) - f L^s g|",
        "|grad f|_inf |L^(s-1) g| + |L^s f| |g|_inf",
        ns,
        samples,
        commutator_sample,
        inside=s > 0,
    )
    return [rep1, rep2]


def verify_commutator_alpha(
    samples: int = 200,
    ns=(4, 8, 16),
    s: float = 3.0,
    alpha: float = 0.0,
    seed: int = 0,
    decay: float = 3.0,
    b_wavenumber: int = DEFAULT_B_WAVENUMBER,
) -> LemmaReport:
    """|L^alpha [L^s, b.grad] V| against |b|_s |V|_{s+a} + |b|_{a+s} |V|_s."""
    inside = s > 2.5 and alpha > -s

    def one(n, i):
        lat = _work_lattice(n, b_wavenumber)
        b = sample_transport_field(lat, b_wavenumber, 1.0, rng.derive_seed(seed, 5, n, i))
        V = sample_scalar(lat, n, decay, rng.derive_seed(seed, 6, n, i))
        comm = fraclap_transport_commutator(b, V, s)
        lhs = l2_norm(lambda_power(comm, alpha))
        rhs = sobolev_norm(b, s) * sobolev_norm(V, s + alpha) + sobolev_norm(
            b, alpha + s
        ) * sobolev_norm(V, s)
        return lhs, rhs

    return _sweep(
        f"commutator_alpha_{alpha:+g}",
        "|L^a [L^s, b.grad] V|",
        "|b|_s |V|_{s+a} + |b|_{a+s} |V|_s",
        ns,
        samples,
        one,
        inside=inside,
        extras={"s": s, "alpha": alpha},
    )


def verify_double_commutator(
    samples: int = 200,
    ns=(4, 8, 16),
    s: float = 3.0,
    seed: int = 0,
    decay: float = 3.0,
    b_wavenumber: int = DEFAULT_B_WAVENUMBER,
    ladder=(4, 8, 16),
) -> LemmaReport:
    """|[[L^s, b.grad], b.grad] f| against |b|_{s+1}^2 |f|_s.

    The headline content is the order: the double commutator costs no extra
    derivative of f.  A frequency ladder at fixed |f|_s checks that directly.
    """

    def one(n, i):
        lat = _work_lattice(n, 2 * b_wavenumber)
        b = sample_transport_field(lat, b_wavenumber, 1.0, rng.derive_seed(seed, 7, n, i))
        f = sample_scalar(lat, n, decay, rng.derive_seed(seed, 8, n, i))
        lhs = l2_norm(double_transport_commutator(b, f, s))
        rhs = sobolev_norm(b, s + 1.0) ** 2 * sobolev_norm(f, s)
        return lhs, rhs

    report = _sweep(
        "double_commutator",
        "|[[L^s, b.grad], b.grad] f|",
        "|b|_{s+1}^2 |f|_s",
        ns,
        samples,
        one,
        inside=s > 2.5,
    )
    lad = []
    for j, radius in enumerate(ladder):
        lat = _work_lattice(radius, 2 * b_wavenumber)
        b = sample_transport_field(lat, b_wavenumber, 1.0, rng.derive_seed(seed, 9))
        f = shell_scalar(lat, radius, rng.derive_seed(seed, 10, j))
        f = (1.0 / sobolev_norm(f, s)) * f
        lhs = l2_norm(double_transport_commutator(b, f, s))
        rhs = sobolev_norm(b, s + 1.0) ** 2
        lad.append(lhs / rhs)
    report.extras["ladder_radii"] = list(ladder)
    report.extras["ladder_ratios"] = lad
    return report


def verify_negative_sobolev(
    samples: int = 200,
    ns=(4, 8, 16),
    s: float = 3.0,
    alpha: float = 0.5,
    beta: float = 2.0,
    seed: int = 0,
    decay: float = 3.0,
    b_wavenumber: int = DEFAULT_B_WAVENUMBER,
) -> LemmaReport:
    """|L^-a [L^s, b.grad] V| against |b|_{s+a+beta} |V|_{s-a}."""
    inside = s >= 1.0 and 0.0 <= alpha <= s and beta > 1.5

    def one(n, i):
        lat = _work_lattice(n, b_wavenumber)
        b = sample_transport_field(lat, b_wavenumber, 1.0, rng.derive_seed(seed, 11, n, i))
        V = sample_scalar(lat, n, decay, rng.derive_seed(seed, 12, n, i))
        comm = fraclap_transport_commutator(b, V, s)
        lhs = l2_norm(lambda_power(comm, -alpha))
        rhs = sobolev_norm(b, s + alpha + beta) * sobolev_norm(V, s - alpha)
        return lhs, rhs

    return _sweep(
        f"commutator_negative_{alpha:g}",
        "|L^-a [L^s, b.grad] V|",
        "|b|_{s+a+beta} |V|_{s-a}",
        ns,
        samples,
        one,
        inside=inside,
        extras={"s": s, "alpha": alpha, "beta": beta},
    )


def verify_leray_commutator(
    samples: int = 200,
    ns=(4, 8, 16),
    s: float = 3.0,
    seed: int = 0,
    decay: float = 3.0,
    b_wavenumber: int = DEFAULT_B_WAVENUMBER,
    z_independent: bool = False,
) -> list[LemmaReport]:
    """Barotropic-projection commutator bounds (plain and smoothed composite).

    With ``z_independent`` the horizontal components of b are built from a
    z-independent stream function, the second right-hand term vanishes, and
    the bound with the first term alone must hold.
    """

    def make_b(lat, key):
        if not z_independent:
            return sample_transport_field(lat, b_wavenumber, 1.0, key)
        from .noise import _stream_field

        b = _stream_field(lat, b_wavenumber, key)
        size = l2_norm(b)
        return (1.0 / max(size, 1e-300)) * b

    def plain(n, i):
        lat = _work_lattice(n, b_wavenumber)
        b = make_b(lat, rng.derive_seed(seed, 13, n, i))
        phi = sample_projected_pair(lat, n, decay, rng.derive_seed(seed, 14, n, i))
        comm = leray_transport_commutator(b, phi)
        lhs = sobolev_norm(comm, s)
        bh = SpectralField(b.lattice, b.coeffs[:2], b.parity[:2])
        dzbh = derivative(bh, 2)
        rhs = sobolev_norm(b, s + 1.0) * sobolev_norm(phi, s)
        if not z_independent:
            rhs += sobolev_norm(dzbh, s - 1.0) * sobolev_norm(phi, s + 1.0)
        return lhs, rhs

    def composite(n, i):
        lat = _work_lattice(n, 2 * b_wavenumber)
        b = make_b(lat, rng.derive_seed(seed, 15, n, i))
        phi = sample_projected_pair(lat, n, decay, rng.derive_seed(seed, 16, n, i))
        comm = leray_transport_commutator(b, phi)
        outer = fraclap_transport_commutator(b, comm, s)
        lhs = l2_norm(lambda_power(outer, -0.5))
        bh = SpectralField(b.lattice, b.coeffs[:2], b.parity[:2])
        dzbh = derivative(bh, 2)
        rhs = sobolev_norm(b, s + 3.0) ** 2 * sobolev_norm(phi, s - 0.5)
        if not z_independent:
            rhs += (
                sobolev_norm(b, s + 3.0)
                * sobolev_norm(dzbh, s - 1.5)
                * sobolev_norm(phi, s + 0.5)
            )
        return lhs, rhs

    suffix = "_zfree" if z_independent else ""
    rep1 = _sweep(
        "leray_commutator" + suffix,
        "|[proj, b.grad] phi|_s",
        "|b|_{s+1} |phi|_s + |dz b_h|_{s-1} |phi|_{s+1}",
        ns,
        samples,
        plain,
        inside=s > 2.0,
    )
    rep2 = _sweep(
        "leray_commutator_composite" + suffix,
        "|L^-1/2 [L^s, b.grad][proj, b.grad] phi|",
        "|b|_{s+3}^2 |phi|_{s-1/2} + |b|_{s+3} |dz b_h|_{s-3/2} |phi|_{s+1/2}",
        ns,
        samples,
        composite,
        inside=s > 2.5,
    )
    return [rep1, rep2]


def verify_multiplier_commutator(
    samples: int = 200,
    ns=(4, 8, 16),
    s: float = 3.0,
    eps: float = 0.5,
    seed: int = 0,
    decay: float = 3.0,
) -> LemmaReport:
    """|[L^s d_j, g] f| against |g|_{5/2+eps} |L^s f| + |g|_{5/2+1+s+eps}... (d=3)."""
    reg = 1.5 + 1.0 + eps

    def one(n, i):
        lat = _work_lattice(n, n)
        g = sample_scalar(lat, n, decay, rng.derive_seed(seed, 17, n, i))
        f = sample_scalar(lat, n, decay, rng.derive_seed(seed, 18, n, i))
        j = i % 3
        gf = pointwise_product(g, f)
        lhs_field = lambda_power(derivative(gf, j), s) - pointwise_product(
            g, lambda_power(derivative(f, j), s)
        )
        lhs = l2_norm(lhs_field)
        rhs = sobolev_norm(g, reg) * hdot_seminorm(f, s) + sobolev_norm(
            g, reg + s
        ) * l2_norm(f)
        return lhs, rhs

    return _sweep(
        "multiplier_commutator",
        "|[L^s d_j, g] f|",
        "|g|_{d/2+1+eps} |L^s f| + |g|_{d/2+1+s+eps} |f|",
        ns,
        samples,
        one,
        extras={"eps": eps},
    )


# ---------------------------------------------------------------------------
# noise-energy cancellation
# ---------------------------------------------------------------------------


@dataclass
class CancellationReport:
    sigma: float
    resolutions: list[int]
    combined_ratios: dict[int, np.ndarray]
    ladder_radii: list[int]
    ladder_combined: list[float]
    ladder_naive: list[float]
    term_coefficients: tuple[float, float, float]
    z_independent: bool

    @property
    def max_combined(self) -> dict[int, float]:
        return {n: float(np.max(np.abs(r))) for n, r in self.combined_ratios.items()}

    @property
    def trend_slope(self) -> float:
        ns = np.array(sorted(self.combined_ratios))
        tops = np.array([np.max(np.abs(self.combined_ratios[n])) for n in ns])
        if len(ns) < 2:
            return 0.0
        return float(np.polyfit(np.log(ns), np.log(np.maximum(tops, 1e-300)), 1)[0])


def verify_cancellation(
    noise: NoiseModel,
    samples: int = 50,
    sigma: float = 3.5,
    ns=(4, 6, 8),
    ladder=(4, 8, 16),
    seed: int = 0,
    decay: float = 4.0,
) -> CancellationReport:
    """Check that the noise-energy pairing is controlled by the sigma+1/2 norm.

    The combined pairing divided by |V|_{sigma+1/2}^2 stays bounded across
    resolutions, while its first term alone grows along a frequency ladder:
    the cancellation between the second-order correction and the noise energy
    is what removes that growth.  Per-field values are also regressed (with
    nonnegative coefficients) on the three right-hand terms of the refined
    bound to estimate their constants.
    """
    bs = noise.fields
    nb = max((b.lattice.n for b in bs), default=1)
    combined = {}
    rows = []
    targets = []
    for n in ns:
        lat = _work_lattice(n, 2 * nb)
        bse = [embed(b, lat) for b in bs]
        vals = np.empty(samples)
        for i in range(samples):
            V = sample_state(lat, n, decay, rng.derive_seed(seed, 19, n, i))
            den = sobolev_norm(V, sigma + 0.5) ** 2
            total, _, _ = cancellation_terms(bse, V, sigma)
            vals[i] = total / max(den, 1e-300)
            for b in bse:
                tot_k, _, _ = cancellation_terms([b], V, sigma)
                bh = SpectralField(b.lattice, b.coeffs[:2], b.parity[:2])
                dzbh = derivative(bh, 2)
                r1 = (
                    sobolev_norm(b, sigma + 3.0)
                    * sobolev_norm(dzbh, sigma - 1.5)
                    * sobolev_norm(V, sigma + 0.5) ** 2
                )
                r2 = (
                    sobolev_norm(b, sigma + 3.0) ** 2
                    * sobolev_norm(V, sigma)
                    * sobolev_norm(V, sigma + 0.5)
                )
                r3 = sobolev_norm(b, sigma + 3.0) ** 2 * sobolev_norm(V, sigma) ** 2
                rows.append([r1, r2, r3])
                targets.append(abs(tot_k))
        combined[int(n)] = vals

    coeffs, _ = scipy.optimize.nnls(np.asarray(rows), np.asarray(targets))

    ladder_combined = []
    ladder_naive = []
    radii = list(ladder)
    for j, radius in enumerate(radii):
        lat = _work_lattice(radius, 2 * nb)
        bse = [embed(b, lat) for b in bs]
        V = shell_state(lat, radius, rng.derive_seed(seed, 20, j))
        den = sobolev_norm(V, sigma + 0.5) ** 2
        total, first, _ = cancellation_terms(bse, V, sigma)
        ladder_combined.append(abs(total) / den)
        ladder_naive.append(abs(first) / den)

    z_free = all(
        l2_norm(derivative(SpectralField(b.lattice, b.coeffs[:2], b.parity[:2]), 2)) == 0.0
        for b in bs
    )
    return CancellationReport(
        sigma=sigma,
        resolutions=[int(n) for n in ns],
        combined_ratios=combined,
        ladder_radii=radii,
        ladder_combined=ladder_combined,
        ladder_naive=ladder_naive,
        term_coefficients=tuple(float(c) for c in coeffs),
        z_independent=z_free,
    )


def shear_transport_field(lattice: Lattice, amplitude: float, comp: int, mz: int = 1) -> SpectralField:
    """b = amplitude * cos(2 pi mz z) e_comp: maximal vertical shear of b_h."""
    from .spectral import zero_field

    b = zero_field(lattice, 3, (Parity.EVEN, Parity.EVEN, Parity.ODD))
    n = lattice.n
    b.coeffs[comp, n, n, n + mz] = 0.5 * amplitude
    b.coeffs[comp, n, n, n - mz] = 0.5 * amplitude
    return b


def oblique_transport_field(
    lattice: Lattice, amplitude: float, horiz_axis: int, comp: int, mh: int = 1, mz: int = 1
) -> SpectralField:
    """b = amplitude * cos(2 pi mh x_h) cos(2 pi mz z) e_comp with comp != horiz_axis.

    Divergence-free single-product mode with both horizontal and vertical
    wavenumber content; the adversarial direction for the projection
    commutators.
    """
    if comp == horiz_axis:
        raise ValueError("component along the horizontal wavenumber is not divergence-free")
    from .spectral import zero_field

    b = zero_field(lattice, 3, (Parity.EVEN, Parity.EVEN, Parity.ODD))
    n = lattice.n
    for s1 in (1, -1):
        for s3 in (1, -1):
            idx = [n, n]
            idx[horiz_axis] += s1 * mh
            b.coeffs[comp, idx[0], idx[1], n + s3 * mz] = 0.25 * amplitude
    return b


@dataclass
class LadderReport:
    """Restricted operator norms of the noise-energy forms on frequency shells.

    For each rung the two quadratic forms (combined pairing and its first term
    alone) are restricted to the admissible states concentrated on the shell
    |m_h|^2 in [r^2, r^2+1], m3 = +-1 (the states adjacent to the singular
    slice of the barotropic projection) and their extreme eigenvalues per unit
    |V|_{sigma+1/2}^2 are reported.
    """

    sigma: float
    radii: list[int]
    combined_top: np.ndarray
    naive_top: np.ndarray

    @property
    def combined_variation(self) -> float:
        return float(np.max(self.combined_top) / np.min(self.combined_top))

    @property
    def naive_growth(self) -> float:
        return float(self.naive_top[-1] / self.naive_top[0])


def _pancake_basis(lattice: Lattice, radius: int, sigma: float) -> list[SpectralField]:
    """Complete orthonormal basis (in H^{sigma+1/2}) of the shell subspace."""
    n = lattice.n
    w = 1.0 + _hdot_weight_local(lattice, sigma + 0.5)

    def wip(f, g):
        return float(np.real(np.sum(w * f.coeffs * np.conj(g.coeffs))))

    basis: list[SpectralField] = []
    lo, hi = radius * radius, radius * radius + 1
    for m1 in range(-n, n + 1):
        for m2 in range(-n, n + 1):
            h2 = m1 * m1 + m2 * m2
            if not lo <= h2 <= hi:
                continue
            for comp in (0, 1):
                for val in (1.0, 1.0j):
                    raw = zero_field_local(lattice)
                    raw.coeffs[comp, n + m1, n + m2, n + 1] = val
                    V = project_state(raw)
                    for e in basis:
                        V = V - wip(V, e) * e
                    nrm = math.sqrt(max(wip(V, V), 0.0))
                    if nrm < 1e-9:
                        continue
                    basis.append((1.0 / nrm) * V)
    if not basis:
        raise ValueError(f"no admissible modes near |m_h| = {radius}")
    return basis


def _hdot_weight_local(lattice: Lattice, sigma: float) -> np.ndarray:
    from .spectral import _hdot_weight

    return _hdot_weight(lattice, sigma)


def zero_field_local(lattice: Lattice) -> SpectralField:
    from .spectral import zero_field

    return zero_field(lattice, 2, (Parity.EVEN, Parity.EVEN))


def cancellation_ladder(
    noise, sigma: float = 3.5, radii=(4, 8, 16)
) -> LadderReport:
    """Worst-case shell ratios of the combined and first-term noise forms."""
    from .operators import projected_transport

    bs_all = getattr(noise, "fields", noise)
    combined_top = []
    naive_top = []
    for radius in radii:
        nb = max(b.lattice.n for b in bs_all)
        lat = _work_lattice(radius + 2, 2 * nb)
        bs = [embed(b, lat) for b in bs_all]
        basis = _pancake_basis(lat, radius, sigma)
        d = len(basis)
        wsig = _hdot_weight_local(lat, sigma)
        # u_k(e_i) and c_k(e_i) = proj b_k.grad u_k(e_i), flattened with the
        # sigma weight folded in so the forms become plain matrix products
        first = np.zeros((d, d))
        second = np.zeros((d, d))
        base_flat = np.stack([e.coeffs.ravel() for e in basis])
        for b in bs:
            us = [projected_transport(b, e) for e in basis]
            cs = [projected_transport(b, u) for u in us]
            u_flat = np.stack([(wsig * u.coeffs).ravel() for u in us])
            u_plain = np.stack([u.coeffs.ravel() for u in us])
            c_flat = np.stack([(wsig * c.coeffs).ravel() for c in cs])
            second += np.real(u_flat @ np.conj(u_plain.T))
            first += np.real(c_flat @ np.conj(base_flat.T))
        first = 0.5 * (first + first.T)
        second = 0.5 * (second + second.T)
        ev_comb = np.linalg.eigvalsh(first + second)
        ev_naive = np.linalg.eigvalsh(first)
        combined_top.append(max(abs(ev_comb[0]), abs(ev_comb[-1])))
        naive_top.append(max(abs(ev_naive[0]), abs(ev_naive[-1])))
    return LadderReport(
        sigma=sigma,
        radii=list(radii),
        combined_top=np.asarray(combined_top),
        naive_top=np.asarray(naive_top),
    )


def fit_advection_constant(
    samples: int = 20, n: int = 8, sigma: float = 3.5, seed: int = 0, decay: float = 4.0
) -> float:
    """Fitted constant in |<L^sigma adv(V,V), L^sigma V>| <= C |V|_W1inf |V|_{sigma+1/2}^2."""
    from .operators import hydrostatic_advection
    from .spectral import hdot_inner, w1inf_norm

    worst = 0.0
    for i in range(samples):
        lat = _work_lattice(n, n)
        V = sample_state(lat, n, decay, rng.derive_seed(seed, 21, i))
        q = leray_hydrostatic(hydrostatic_advection(V, V))
        num = abs(hdot_inner(q, V, sigma))
        den = w1inf_norm(V) * hdot_seminorm(V, sigma + 0.5) ** 2
        worst = max(worst, num / max(den, 1e-300))
    return worst


# ---------------------------------------------------------------------------
# one-dimensional weighted-cancellation example
# ---------------------------------------------------------------------------


@dataclass
class Example1DReport:
    """Kernel comparison for the analytic-weight quadratic forms on the circle.

    The transporting field is 2 cos(x) on the 2 pi circle (integer
    wavenumbers).  ``a`` are diagonal kernel entries, ``b`` couples modes two
    apart; ``*_direct`` are probed from the assembled quadratic forms and
    ``*_closed`` evaluate the closed-form expressions.
    """

    r: float
    tau: float
    kmax: int
    ks: np.ndarray
    a_direct: np.ndarray
    a_closed: np.ndarray
    b_direct: np.ndarray
    b_closed: np.ndarray
    functional_residual: float

    @property
    def max_rel_discrepancy(self) -> float:
        scale = np.maximum(np.abs(self.a_closed), np.abs(self.b_closed))
        scale = np.maximum(scale, 1e-300)
        return float(
            max(
                np.max(np.abs(self.a_direct - self.a_closed) / scale),
                np.max(np.abs(self.b_direct - self.b_closed) / scale),
            )
        )

    def growth_ratio(self, k_lo: int, k_hi: int) -> float:
        """Ratio of a(k)/k^{2r} between two mode indices."""
        a = dict(zip(self.ks.tolist(), (self.a_closed / self.ks ** (2 * self.r)).tolist()))
        return a[k_hi] / a[k_lo]


class _Circle:
    """Spectral operations on the 2 pi circle with integer wavenumbers."""

    def __init__(self, kmax: int):
        self.kmax = kmax
        self.k = np.arange(-kmax, kmax + 1)

    def zeros(self):
        return np.zeros(2 * self.kmax + 1, dtype=complex)

    def mult_two_cos(self, g):
        out = np.zeros_like(g)
        out[1:] += g[:-1]
        out[:-1] += g[1:]
        return out

    def dx(self, g):
        return 1j * self.k * g

    def weight(self, r, tau):
        ak = np.abs(self.k).astype(float)
        return ak ** (2.0 * r) * np.exp(2.0 * tau * ak)

    def forms(self, f, r, tau):
        """(I, II) for the weighted pairing with transport by 2 cos x."""
        w = self.weight(r, tau)
        bdf = self.mult_two_cos(self.dx(f))
        bbdf = self.mult_two_cos(self.dx(bdf))
        I = float(np.real(np.sum(w * bbdf * np.conj(f))))
        II = float(np.real(np.sum(w * bdf * np.conj(bdf))))
        return I, II

    def quadratic(self, f, r, tau):
        I, II = self.forms(f, r, tau)
        return I + II


def _a_closed(k, r, tau):
    k = np.asarray(k, dtype=float)
    return (
        np.abs(k + 1) ** (2 * r) * np.exp(2 * tau * np.abs(k + 1))
        + np.abs(k - 1) ** (2 * r) * np.exp(2 * tau * np.abs(k - 1))
        - 2 * np.abs(k) ** (2 * r) * np.exp(2 * tau * np.abs(k))
    ) * k ** 2


def _b_closed(k, r, tau):
    k = np.asarray(k, dtype=float)
    return (
        2 * k * (k - 2) * np.abs(k - 1) ** (2 * r) * np.exp(2 * tau * np.abs(k - 1))
        - (k - 1) * (k - 2) * np.abs(k) ** (2 * r) * np.exp(2 * tau * np.abs(k))
        - k * (k - 1) * np.abs(k - 2) ** (2 * r) * np.exp(2 * tau * np.abs(k - 2))
    )


def weighted_cancellation_1d(r: float, tau: float, kmax: int, seed: int = 0) -> Example1DReport:
    """Probe the weighted quadratic forms on the circle and compare kernels.

    For tau = 0 the diagonal kernel grows like k^{2r} (all higher-degree terms
    cancel); for tau > 0 the unequal exponential weights break that
    cancellation and a(k)/k^{2r} grows without bound.
    """
    if r <= 0:
        raise ValueError("the derivative weight r must be positive")
    if tau < 0:
        raise ValueError("the analytic weight tau must be nonnegative")
    if kmax < 5:
        raise ValueError("kmax must be at least 5 to probe interior modes")
    circ = _Circle(kmax + 2)
    off = circ.kmax
    ks = np.arange(3, kmax - 1)

    def probe_a(k):
        f = circ.zeros()
        f[off + k] = 1.0
        return circ.quadratic(f, r, tau)

    a_cache: dict[int, float] = {}

    def a_of(k):
        if k not in a_cache:
            a_cache[k] = probe_a(k)
        return a_cache[k]

    phase = np.exp(1j * np.pi / 4.0)
    a_direct = np.array([a_of(int(k)) for k in ks])
    b_direct = np.empty(len(ks))
    for idx, k in enumerate(ks):
        k = int(k)
        f = circ.zeros()
        f[off + k - 2] = phase
        f[off + k] = 1.0
        f[off - (k - 2)] = np.conj(phase)
        f[off - k] = 1.0
        q = circ.quadratic(f, r, tau)
        q -= a_of(k) + a_of(-k) + a_of(k - 2) + a_of(-(k - 2))
        b_direct[idx] = q / (2.0 * math.cos(math.pi / 4.0))

    a_cl = _a_closed(ks, r, tau)
    b_cl = _b_closed(ks, r, tau)

    # functional cross-check on a random real field supported away from the
    # small-|k| folding region
    rng_np = np.random.default_rng(seed)
    f = circ.zeros()
    body = np.arange(3, kmax - 1)
    vals = rng_np.standard_normal(len(body)) + 1j * rng_np.standard_normal(len(body))
    f[off + body] = vals
    f[off - body] = np.conj(vals)
    direct = circ.quadratic(f, r, tau)
    kernel = 0.0
    for k in range(-(kmax + 2), kmax + 3):
        fk = f[off + k] if abs(k) <= circ.kmax else 0.0
        fk2 = f[off + k - 2] if abs(k - 2) <= circ.kmax else 0.0
        if fk == 0.0 and fk2 == 0.0:
            continue
        kernel += float(_a_closed(k, r, tau)) * abs(fk) ** 2
        kernel += float(_b_closed(k, r, tau)) * float(np.real(fk2 * np.conj(fk)))
    functional_residual = abs(direct - kernel) / max(abs(direct), 1e-300)

    return Example1DReport(
        r=r,
        tau=tau,
        kmax=kmax,
        ks=ks,
        a_direct=a_direct,
        a_closed=a_cl,
        b_direct=b_direct,
        b_closed=b_cl,
        functional_residual=functional_residual,
    )


# ---------------------------------------------------------------------------
# fractional time regularity of sampled paths
# ---------------------------------------------------------------------------


def wap_path_norm(series, alpha: float, p: float, T: float) -> float:
    """Fractional-time Sobolev norm of a uniformly sampled path.

    The samples are read as midpoint values of ``len(series)`` equal cells
    covering [0, T]; the double integral is a midpoint sum over off-diagonal
    cell pairs (the diagonal is dropped; its contribution vanishes with
    refinement for alpha*p < 1 on paths of bounded variation).
    """
    u = np.asarray(series, dtype=float)
    if u.ndim != 1 or len(u) < 2:
        raise ValueError("need a 1-d series with at least two samples")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if p <= 1.0:
        raise ValueError("p must exceed 1")
    if T <= 0:
        raise ValueError("T must be positive")
    N = len(u)
    h = T / N
    single = float(np.sum(np.abs(u) ** p) * h)
    diff = np.abs(u[:, None] - u[None, :]) ** p
    gaps = np.abs(np.arange(N)[:, None] - np.arange(N)[None, :]).astype(float) * h
    np.fill_diagonal(gaps, 1.0)
    kern = diff / gaps ** (1.0 + alpha * p)
    np.fill_diagonal(kern, 0.0)
    double = float(np.sum(kern) * h * h)
    return (single + double) ** (1.0 / p)


# ---------------------------------------------------------------------------
# energy budget of recorded trajectories
# ---------------------------------------------------------------------------


@dataclass
class EnergyBudget:
    times: np.ndarray
    residuals: np.ndarray
    rel_residual: float
    fitted_constant: float
    dissipation_margin: float


def energy_budget(diag, params, V0_norm: float | None = None) -> EnergyBudget:
    """Audit the discrete budget of |L^sigma V|^p against the recorded terms.

    The residual per step is the change of |L^sigma V|^p minus the recorded
    drift terms times dt minus the recorded noise increment; it shrinks with
    dt.  The fitted constant is the trajectory functional
    (sup |V|_sigma^p + int |V|_sigma^{p-2} |V|_{sigma+s/2}^2) / (1 + |V0|_sigma^p).
    The dissipation margin is the least-squares coefficient a in
    (noise drift) ~ a * (dissipation drift) + c * |V|_sigma^p, reported as 1 - a.
    """
    if diag.terms is None:
        raise ValueError("run integrate(..., record_terms=True) to audit the budget")
    t = diag.terms
    dt = params.dt
    hsig_p = np.append(t["hsig_p"], hdot_seminorm(diag.final_state, params.sigma) ** params.p)
    dh = np.diff(hsig_p)
    model = (t["i0"] + t["i1"] + t["i2"]) * dt + t["i3"]
    residuals = dh - model
    scale = max(np.max(hsig_p), 1e-300)
    v0 = V0_norm if V0_norm is not None else diag.norm_sigma[0]
    fitted = (np.max(diag.norm_sigma) ** params.p + diag.energy_integral[-1]) / (
        1.0 + v0 ** params.p
    )
    diss = np.asarray(t["dissipation"])
    i1 = np.asarray(t["i1"])
    basis = np.stack([diss, np.asarray(t["hsig_p"]) + 1.0], axis=1)
    coef, *_ = np.linalg.lstsq(basis, i1, rcond=None)
    return EnergyBudget(
        times=np.asarray(t["t"]),
        residuals=residuals,
        rel_residual=float(np.sum(np.abs(residuals)) / scale),
        fitted_constant=float(fitted),
        dissipation_margin=float(1.0 - coef[0]),
    )


# ---------------------------------------------------------------------------
# contraction audit of twin runs
# ---------------------------------------------------------------------------


@dataclass
class TwinMonotonicity:
    c_fit: float
    residual: float
    max_violation: float
    weighted: np.ndarray


def twin_monotonicity(twin, c: float | None = None) -> TwinMonotonicity:
    """Audit the weighted contraction of a twin run.

    With the weight built from the fitted rate constant, the conditional-mean
    increments of weight * |difference|^2 are non-positive up to the scheme
    error; the residual (sum of positive scheme-error parts, relative to the
    initial squared difference) shrinks linearly with dt.
    """
    U = twin.U
    dt = float(np.diff(twin.times)[0])
    I = twin.integrand
    rates = twin.continuum_rate
    denom = U[:-1] * I
    ok = denom > 0
    slopes = np.zeros_like(rates)
    slopes[ok] = rates[ok] / denom[ok]
    c_use = float(np.max(slopes, initial=0.0)) if c is None else c
    y = np.exp(-c_use * np.concatenate([[0.0], np.cumsum(I * dt)]))
    scheme_err = twin.mean_increment - rates * dt
    resid = float(np.sum(y[1:] * np.maximum(scheme_err, 0.0)) / max(U[0], 1e-300))
    dz_mean = y[1:] * (U[:-1] + twin.mean_increment) - y[:-1] * U[:-1]
    bound = y[1:] * np.maximum(scheme_err, 0.0)
    max_violation = float(np.max(dz_mean - bound, initial=0.0) / max(U[0], 1e-300))
    return TwinMonotonicity(
        c_fit=float(np.max(slopes, initial=0.0)),
        residual=resid,
        max_violation=max_violation,
        weighted=y * U,
    )
