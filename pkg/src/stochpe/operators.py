"""Spatial operators for hydrostatic flow on the torus.

Everything here acts on :class:`~stochpe.spectral.SpectralField` boxes and is a
pure function.  Quadratic terms route through one canonical product: evaluate
the factors on the collocation grid, multiply pointwise, transform back, and
truncate to the lattice ball.  Since the grid resolves triple wavenumbers,
this is an exact truncated convolution, which is what makes the energy
cancellations below hold to rounding at any fixed truncation.

Horizontal velocity states ("states" below) are 2-component fields, even in z,
zero mean, with divergence-free vertical average; the barotropic projection
keeps that class invariant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .spectral import (
    Lattice,
    Parity,
    SpectralField,
    derivative,
    divergence,
    hdot_inner,
    hdot_seminorm,
    l2_norm,
    symmetrized,
    to_physical,
    to_spectral,
)

TWO_PI = 2.0 * np.pi

# b fields with at most this many active modes are applied by direct
# shift-convolution instead of grid transforms.
SPARSE_MODE_LIMIT = 48


@dataclass(frozen=True)
class OperatorParams:
    """Scalar knobs shared by the dissipative/rotating operators.

    ``s`` is the dissipation exponent (accepted range (0, 2] for experiments),
    ``f0`` the rotation rate and ``sigma`` the Sobolev index used by
    diagnostics.  ``outside_hypotheses`` marks parameter choices the
    supporting analysis does not cover (sigma <= 3 or s < 1).
    """

    s: float
    f0: float = 0.0
    sigma: float = 3.5

    def __post_init__(self):
        if not 0.0 < self.s <= 2.0:
            raise ValueError(f"dissipation exponent must lie in (0, 2], got {self.s}")
        if self.sigma <= 0:
            raise ValueError(f"Sobolev index must be positive, got {self.sigma}")

    @property
    def outside_hypotheses(self) -> bool:
        return self.sigma <= 3.0 or self.s < 1.0


def _noise_fields(noise) -> Sequence[SpectralField]:
    """Accept either a noise model object (with .fields) or a plain sequence."""
    fields = getattr(noise, "fields", noise)
    return tuple(fields)


# ---------------------------------------------------------------------------
# Fourier multipliers
# ---------------------------------------------------------------------------


def fractional_laplacian(f: SpectralField, s: float) -> SpectralField:
    """Multiply mode m by |2 pi m|^s; the mean mode is untouched (weight 0)."""
    if s < 0:
        raise ValueError("negative orders go through lambda_power")
    return lambda_power(f, s)


def lambda_power(f: SpectralField, s: float) -> SpectralField:
    """|2 pi m|^s multiplier for any real s, defined as 0 on the mean mode."""
    kmag = f.lattice.kmag
    mult = np.zeros_like(kmag)
    nz = kmag > 0
    mult[nz] = kmag[nz] ** s
    return SpectralField(f.lattice, f.coeffs * mult, f.parity)


def dissipation_factor(lattice: Lattice, s: float, dt: float) -> np.ndarray:
    """exp(-|k|^s dt) per box entry (1 on the mean mode)."""
    kmag = lattice.kmag
    mult = np.zeros_like(kmag)
    nz = kmag > 0
    mult[nz] = kmag[nz] ** s
    return np.exp(-mult * dt)


# ---------------------------------------------------------------------------
# barotropic projection
# ---------------------------------------------------------------------------


def q_part(f: SpectralField) -> SpectralField:
    """Horizontal-gradient part of the vertical average (complement of the projection)."""
    if f.ncomp != 2:
        raise ValueError("the barotropic projection acts on 2-component fields")
    lat = f.lattice
    n = lat.n
    out = np.zeros_like(f.coeffs)
    m1 = lat.modes[:, None]
    m2 = lat.modes[None, :]
    kh2 = (m1 * m1 + m2 * m2).astype(float)
    nz = kh2 > 0
    sub = f.coeffs[:, :, :, n]
    dot = m1 * sub[0] + m2 * sub[1]
    factor = np.zeros_like(dot)
    factor[nz] = dot[nz] / kh2[nz]
    out[0, :, :, n] = m1 * factor
    out[1, :, :, n] = m2 * factor
    return SpectralField(lat, out, f.parity)


def leray_hydrostatic(f: SpectralField) -> SpectralField:
    """Remove the horizontal-gradient part of the vertical average.

    Acts only on the m3 = 0 slice (the vertical average); self-adjoint,
    idempotent, and commutes with every radial Fourier multiplier.
    """
    return f - q_part(f)


def project_state(f: SpectralField, zero_mean: bool = True) -> SpectralField:
    """Project a 2-component field onto the admissible state class."""
    g = symmetrized(f, zero_mean=zero_mean)
    return leray_hydrostatic(g)


def state_defect(V: SpectralField) -> float:
    """Worst violation of the state constraints (symmetry, mean, vertical average)."""
    from .spectral import ball_defect, parity_defect, reality_defect

    lat = V.lattice
    n = lat.n
    m1 = lat.modes[:, None]
    m2 = lat.modes[None, :]
    sub = V.coeffs[:, :, :, n]
    baro = float(np.max(np.abs(m1 * sub[0] + m2 * sub[1]))) if V.ncomp == 2 else np.inf
    mean = float(np.max(np.abs(V.mean_coefficient)))
    return max(reality_defect(V), parity_defect(V), ball_defect(V), baro, mean)


# ---------------------------------------------------------------------------
# vertical velocity and advection
# ---------------------------------------------------------------------------


def vertical_velocity(V: SpectralField, tol: float = 1e-10) -> SpectralField:
    """Vertical velocity diagnosed from the horizontal state.

    w(x', z) = -int_0^z div_h V dz'; in coefficients w_m = -(m_h . V_m)/m3 for
    m3 != 0 and 0 on the m3 = 0 slice, which requires the barotropic
    constraint (checked against ``tol``).  The result is odd in z, vanishes at
    z = 0, and satisfies dz w = -div_h V exactly on the lattice.
    """
    if V.ncomp != 2:
        raise ValueError("vertical velocity is diagnosed from a 2-component state")
    lat = V.lattice
    n = lat.n
    m1, m2, m3 = lat.mgrid
    dot = m1 * V.coeffs[0] + m2 * V.coeffs[1]
    slice0 = np.max(np.abs(dot[:, :, n])) if V.coeffs.size else 0.0
    scale = max(l2_norm(V), 1e-300)
    if slice0 > tol * scale:
        raise ValueError(
            f"state has nonzero barotropic divergence ({slice0:.3e}); project it first"
        )
    w = np.zeros_like(dot)
    nz = m3 != 0
    w[nz] = -dot[nz] / m3[nz]
    return SpectralField(lat, w[None], (Parity.ODD,))


def _multiply_to_field(
    values: np.ndarray, lattice: Lattice, parity: Sequence[Parity]
) -> SpectralField:
    return to_spectral(values, lattice, parity)


def hydrostatic_advection(g: SpectralField, f: SpectralField) -> SpectralField:
    """Advection of f by the hydrostatic velocity induced by g.

    Output = g . grad_h f + w(g) dz f, with w the diagnosed vertical velocity.
    Pseudo-spectral with exact dealiasing, truncated back to the lattice ball.
    Orthogonal to f in L2 when g = f is an admissible state.
    """
    if g.lattice != f.lattice:
        raise ValueError("advection requires a shared lattice")
    if g.ncomp != 2:
        raise ValueError("the advecting field must have 2 components")
    w = vertical_velocity(g)
    g_phys = to_physical(g)
    w_phys = to_physical(w)[0]
    d1 = to_physical(derivative(f, 0))
    d2 = to_physical(derivative(f, 1))
    d3 = to_physical(derivative(f, 2))
    values = g_phys[0] * d1 + g_phys[1] * d2 + w_phys * d3
    return _multiply_to_field(values, f.lattice, f.parity)


def coriolis(V: SpectralField, f0: float) -> SpectralField:
    """Rotation term f0 * (-V2, V1); orthogonal to V pointwise."""
    if V.ncomp != 2:
        raise ValueError("rotation acts on 2-component fields")
    c = np.stack([-V.coeffs[1], V.coeffs[0]]) * f0
    return SpectralField(V.lattice, c, V.parity)


# ---------------------------------------------------------------------------
# transport by a prescribed divergence-free field
# ---------------------------------------------------------------------------


def divergence_defect(b: SpectralField) -> float:
    scale = max(1.0, hdot_seminorm(b, 1.0))
    return l2_norm(divergence(b)) / scale


def sparse_modes(b: SpectralField) -> int:
    return int(np.count_nonzero(np.any(b.coeffs != 0, axis=0)))


def transport(b: SpectralField, f: SpectralField, check: bool = True) -> SpectralField:
    """b . grad f for a divergence-free 3-component b, truncated to the ball.

    Skew-symmetric in L2 (integration by parts), so <transport(b, f), f> = 0.
    Fields with few active modes are applied by direct shift-convolution,
    which produces the same truncated convolution as the grid path.
    """
    if b.lattice != f.lattice:
        raise ValueError("transport requires a shared lattice")
    if b.ncomp != 3:
        raise ValueError("the transporting field must have 3 components")
    if check:
        defect = divergence_defect(b)
        if defect > 1e-10:
            raise ValueError(f"transporting field is not divergence-free (defect {defect:.3e})")
    if 0 < sparse_modes(b) <= SPARSE_MODE_LIMIT:
        return _transport_sparse(b, f)
    b_phys = to_physical(b)
    values = (
        b_phys[0] * to_physical(derivative(f, 0))
        + b_phys[1] * to_physical(derivative(f, 1))
        + b_phys[2] * to_physical(derivative(f, 2))
    )
    return _multiply_to_field(values, f.lattice, f.parity)


def _transport_sparse(b: SpectralField, f: SpectralField) -> SpectralField:
    lat = f.lattice
    w = lat.box_width
    active = np.argwhere(np.any(b.coeffs != 0, axis=0))
    out = np.zeros_like(f.coeffs)
    mgrid = lat.mgrid
    for idx in active:
        p = idx - lat.n  # mode of b
        bhat = b.coeffs[:, idx[0], idx[1], idx[2]]
        tgt = []
        src = []
        for a in range(3):
            lo, hi = max(0, p[a]), w + min(0, p[a])
            tgt.append(slice(lo, hi))
            src.append(slice(lo - p[a], hi - p[a]))
        tgt, src = tuple(tgt), tuple(src)
        block = f.coeffs[(slice(None),) + src]
        mult = sum(bhat[a] * (1j * TWO_PI) * mgrid[a][src] for a in range(3))
        out[(slice(None),) + tgt] += mult[None, :, :, :] * block
    out[:, ~lat.ball] = 0.0
    return symmetrized(SpectralField(lat, out, f.parity))


def projected_transport(b: SpectralField, V: SpectralField, check: bool = False) -> SpectralField:
    """Barotropic projection of the transport of a state field."""
    return leray_hydrostatic(transport(b, V, check=check))


def stratonovich_corrector(noise, V: SpectralField) -> SpectralField:
    """Second-order correction of the noise: 1/2 sum_k (proj b_k.grad)^2 V."""
    fields = _noise_fields(noise)
    out = None
    for b in fields:
        u = projected_transport(b, V)
        c = projected_transport(b, u)
        out = c if out is None else out + c
    if out is None:
        return SpectralField(V.lattice, np.zeros_like(V.coeffs), V.parity)
    return 0.5 * out


# ---------------------------------------------------------------------------
# commutators
# ---------------------------------------------------------------------------


def leray_transport_commutator(
    b: SpectralField, phi: SpectralField, tol: float = 1e-10
) -> SpectralField:
    """proj(b.grad phi) - b.grad(proj phi) for phi already projected.

    Equals minus the gradient part of b.grad phi, so the output lives on the
    m3 = 0 slice only.
    """
    defect = l2_norm(q_part(phi)) / max(l2_norm(phi), 1e-300)
    if defect > tol:
        raise ValueError(f"input is not projection-invariant (defect {defect:.3e})")
    bf = transport(b, phi, check=False)
    return leray_hydrostatic(bf) - transport(b, leray_hydrostatic(phi), check=False)


def fraclap_transport_commutator(b: SpectralField, f: SpectralField, s: float) -> SpectralField:
    """[|grad|^s, b.grad] f with both branches truncated to the lattice ball."""
    return lambda_power(transport(b, f, check=False), s) - transport(
        b, lambda_power(f, s), check=False
    )


def double_transport_commutator(b: SpectralField, f: SpectralField, s: float) -> SpectralField:
    """[[|grad|^s, b.grad], b.grad] f, composed from two single commutators."""
    inner = transport(b, f, check=False)
    first = fraclap_transport_commutator(b, inner, s)
    second = transport(b, fraclap_transport_commutator(b, f, s), check=False)
    return first - second


# ---------------------------------------------------------------------------
# noise-energy pairing
# ---------------------------------------------------------------------------


def cancellation_terms(noise, V: SpectralField, sigma: float) -> tuple[float, float, float]:
    """Per-family pairing of the second-order noise term against the state.

    Returns ``(combined, first, second)`` where ``first`` is
    sum_k <L^sigma (proj b_k.grad)^2 V, L^sigma V>, ``second`` is
    sum_k |L^sigma proj b_k.grad V|^2 and ``combined`` their sum.  The two
    leading-order contributions cancel, leaving a quantity controlled by the
    sigma+1/2 norm of V.
    """
    fields = _noise_fields(noise)
    first = 0.0
    second = 0.0
    for b in fields:
        u = projected_transport(b, V)
        c = projected_transport(b, u)
        first += hdot_inner(c, V, sigma)
        second += hdot_seminorm(u, sigma) ** 2
    return first + second, first, second


def cancellation_functional(noise, V: SpectralField, sigma: float) -> float:
    combined, _, _ = cancellation_terms(noise, V, sigma)
    return combined
