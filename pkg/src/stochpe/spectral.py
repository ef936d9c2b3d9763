"""Truncated Fourier fields on the unit torus with vertical symmetry classes.

Fields are stored as complex coefficient boxes over integer modes
``m in [-n, n]^3`` with Euclidean truncation ``|m| <= n``; the physical
wavenumber of mode ``m`` is ``k = 2*pi*m``.  Real-valued fields satisfy the
conjugate symmetry ``coeff(-m) = conj(coeff(m))`` and each component carries a
parity tag describing its behaviour under ``z -> -z``.

Transforms go through real FFTs on a collocation grid that is large enough to
make quadratic products exact for band-limited inputs (at least ``3n + 1``
points per axis), so every nonlinear operator built on top of this module is a
plain truncated convolution, with no aliasing error.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as _fft

TWO_PI = 2.0 * np.pi


def fast_grid_size(n: int) -> int:
    """Smallest FFT-friendly multiple-of-4 grid with at least ``3n + 1`` points.

    A multiple of 4 puts the extrema of the lowest pure modes (their values
    and their gradients) on collocation points, which keeps sup-norm
    evaluations of such modes exact.
    """
    g = _fft.next_fast_len(max(3 * n + 1, 2 * n + 2, 4), real=True)
    while g % 4:
        g = _fft.next_fast_len(g + 1, real=True)
    return g


class Parity(Enum):
    """Behaviour of one field component under reflection of the vertical axis."""

    EVEN = "even"
    ODD = "odd"
    NONE = "none"

    def flipped(self) -> "Parity":
        if self is Parity.EVEN:
            return Parity.ODD
        if self is Parity.ODD:
            return Parity.EVEN
        return Parity.NONE


@dataclass(frozen=True)
class Lattice:
    """Mode truncation radius plus collocation grid size.

    ``n`` is the Euclidean truncation radius (modes kept satisfy ``|m| <= n``)
    and ``grid`` the number of collocation points per axis.  The default grid
    is the smallest fast size ``>= 3n + 1``, which keeps quadratic products of
    retained modes exact after truncation.
    """

    n: int
    grid: int | None = None

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"truncation radius must be >= 0, got {self.n}")
        if self.grid is None:
            object.__setattr__(self, "grid", fast_grid_size(self.n))
        if self.grid < 2 * self.n + 2:
            raise ValueError(
                f"grid {self.grid} too small for n={self.n} (need >= {2 * self.n + 2})"
            )

    @property
    def box_width(self) -> int:
        return 2 * self.n + 1

    @cached_property
    def modes(self) -> np.ndarray:
        return np.arange(-self.n, self.n + 1)

    @cached_property
    def mgrid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.modes, self.modes, self.modes, indexing="ij"))

    @cached_property
    def msq(self) -> np.ndarray:
        m1, m2, m3 = self.mgrid
        return m1 * m1 + m2 * m2 + m3 * m3

    @cached_property
    def ball(self) -> np.ndarray:
        """Boolean mask of retained modes ``|m| <= n``."""
        return self.msq <= self.n * self.n

    @cached_property
    def kmag(self) -> np.ndarray:
        """|k| = 2*pi*|m| per box entry."""
        return TWO_PI * np.sqrt(self.msq.astype(float))

    @cached_property
    def _wrap(self) -> np.ndarray:
        # FFT bin index of each mode row.
        return np.mod(self.modes, self.grid)

    def supports_products(self) -> bool:
        return self.grid >= 3 * self.n + 1


@dataclass
class SpectralField:
    """A truncated Fourier field: coefficient box, lattice, per-component parity.

    ``coeffs`` has shape ``(ncomp, 2n+1, 2n+1, 2n+1)`` indexed by
    ``[c, m1+n, m2+n, m3+n]``.  Instances are treated as immutable values:
    operations return new fields.
    """

    lattice: Lattice
    coeffs: np.ndarray
    parity: tuple[Parity, ...]

    def __post_init__(self):
        w = self.lattice.box_width
        if self.coeffs.ndim != 4 or self.coeffs.shape[1:] != (w, w, w):
            raise ValueError(
                f"coefficient box shape {self.coeffs.shape} does not match lattice n={self.lattice.n}"
            )
        if len(self.parity) != self.coeffs.shape[0]:
            raise ValueError("one parity tag per component is required")

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    def copy(self) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs.copy(), self.parity)

    def component(self, c: int) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs[c : c + 1], (self.parity[c],))

    @property
    def mean_coefficient(self) -> np.ndarray:
        n = self.lattice.n
        return self.coeffs[:, n, n, n]

    def _check_compatible(self, other: "SpectralField") -> None:
        if self.lattice != other.lattice or self.parity != other.parity:
            raise ValueError("field arithmetic requires matching lattice and parity")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self.lattice, self.coeffs + other.coeffs, self.parity)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self.lattice, self.coeffs - other.coeffs, self.parity)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs * scalar, self.parity)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.lattice, -self.coeffs, self.parity)


def zero_field(lattice: Lattice, ncomp: int, parity: Sequence[Parity]) -> SpectralField:
    w = lattice.box_width
    return SpectralField(lattice, np.zeros((ncomp, w, w, w), dtype=complex), tuple(parity))


def field_from_coeffs(
    lattice: Lattice, coeffs: np.ndarray, parity: Sequence[Parity]
) -> SpectralField:
    """Build a field from raw coefficients, enforcing all structural constraints."""
    f = SpectralField(lattice, np.asarray(coeffs, dtype=complex).copy(), tuple(parity))
    return symmetrized(f)


# ---------------------------------------------------------------------------
# structural constraints
# ---------------------------------------------------------------------------


def _conj_flip(coeffs: np.ndarray) -> np.ndarray:
    return np.conj(coeffs[:, ::-1, ::-1, ::-1])


def _parity_flip(coeffs: np.ndarray) -> np.ndarray:
    return coeffs[:, :, :, ::-1]


def symmetrized(f: SpectralField, zero_mean: bool = False) -> SpectralField:
    """Project onto the constraint set: ball support, reality, declared parity."""
    c = f.coeffs.copy()
    c[:, ~f.lattice.ball] = 0.0
    c = 0.5 * (c + _conj_flip(c))
    flip = _parity_flip(c)
    for i, p in enumerate(f.parity):
        if p is Parity.EVEN:
            c[i] = 0.5 * (c[i] + flip[i])
        elif p is Parity.ODD:
            c[i] = 0.5 * (c[i] - flip[i])
    if zero_mean:
        n = f.lattice.n
        c[:, n, n, n] = 0.0
    return SpectralField(f.lattice, c, f.parity)


def reality_defect(f: SpectralField) -> float:
    return float(np.max(np.abs(f.coeffs - _conj_flip(f.coeffs))))


def parity_defect(f: SpectralField) -> float:
    flip = _parity_flip(f.coeffs)
    worst = 0.0
    for i, p in enumerate(f.parity):
        if p is Parity.EVEN:
            worst = max(worst, float(np.max(np.abs(f.coeffs[i] - flip[i]))))
        elif p is Parity.ODD:
            worst = max(worst, float(np.max(np.abs(f.coeffs[i] + flip[i]))))
    return worst


def ball_defect(f: SpectralField) -> float:
    out = f.coeffs[:, ~f.lattice.ball]
    return float(np.max(np.abs(out))) if out.size else 0.0


# ---------------------------------------------------------------------------
# projections and embeddings
# ---------------------------------------------------------------------------


def project_galerkin(f: SpectralField, n: int) -> SpectralField:
    """Zero all coefficients with ``|m| > n``; orthogonal and idempotent."""
    if n < 0:
        raise ValueError(f"projection order must be >= 0, got {n}")
    if n > f.lattice.n:
        raise ValueError(f"projection order {n} exceeds lattice radius {f.lattice.n}")
    c = f.coeffs.copy()
    c[:, f.lattice.msq > n * n] = 0.0
    return SpectralField(f.lattice, c, f.parity)


def embed(f: SpectralField, lattice: Lattice) -> SpectralField:
    """Copy a field into a larger lattice (coefficients unchanged)."""
    if lattice.n < f.lattice.n:
        raise ValueError("target lattice is smaller than the field support")
    out = zero_field(lattice, f.ncomp, f.parity)
    a = lattice.n - f.lattice.n
    b = a + f.lattice.box_width
    out.coeffs[:, a:b, a:b, a:b] = f.coeffs
    return out


def restrict(f: SpectralField, lattice: Lattice) -> SpectralField:
    """Truncate a field onto a smaller lattice (modes outside its ball drop)."""
    if lattice.n > f.lattice.n:
        raise ValueError("use embed() to enlarge a field")
    a = f.lattice.n - lattice.n
    b = a + lattice.box_width
    c = f.coeffs[:, a:b, a:b, a:b].copy()
    c[:, ~lattice.ball] = 0.0
    return SpectralField(lattice, c, f.parity)


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def to_physical(f: SpectralField) -> np.ndarray:
    """Collocation values, shape ``(ncomp, G, G, G)``; exact for box modes."""
    lat = f.lattice
    G = lat.grid
    n = lat.n
    half = np.zeros((f.ncomp, G, G, G // 2 + 1), dtype=complex)
    rows = lat._wrap
    half[:, rows[:, None, None], rows[None, :, None], np.arange(0, n + 1)[None, None, :]] = (
        f.coeffs[:, :, :, n:]
    )
    out = _fft.irfftn(half, s=(G, G, G), axes=(1, 2, 3), workers=-1)
    return out * (G ** 3)


def to_spectral(values: np.ndarray, lattice: Lattice, parity: Sequence[Parity]) -> SpectralField:
    """Coefficients of grid values, truncated to the lattice ball and symmetrized."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 3:
        values = values[None]
    G = lattice.grid
    if values.shape[1:] != (G, G, G):
        raise ValueError(f"grid shape {values.shape[1:]} does not match lattice grid {G}")
    n = lattice.n
    half = _fft.rfftn(values, axes=(1, 2, 3), workers=-1) / (G ** 3)
    w = lattice.box_width
    box = np.zeros((values.shape[0], w, w, w), dtype=complex)
    rows = lattice._wrap
    box[:, :, :, n:] = half[
        :, rows[:, None, None], rows[None, :, None], np.arange(0, n + 1)[None, None, :]
    ]
    # negative vertical modes from conjugate symmetry of the real field
    box[:, :, :, :n] = np.conj(box[:, ::-1, ::-1, : n : -1])
    return symmetrized(SpectralField(lattice, box, tuple(parity)))


# ---------------------------------------------------------------------------
# calculus on coefficients
# ---------------------------------------------------------------------------


def derivative(f: SpectralField, axis: int) -> SpectralField:
    """Partial derivative along axis 0, 1 or 2 (vertical flips parity)."""
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0, 1, or 2")
    m = f.lattice.mgrid[axis]
    c = f.coeffs * (1j * TWO_PI * m)
    parity = f.parity if axis < 2 else tuple(p.flipped() for p in f.parity)
    return SpectralField(f.lattice, c, parity)


def divergence(f: SpectralField) -> SpectralField:
    """Divergence of a 3-component field, one scalar component out."""
    if f.ncomp != 3:
        raise ValueError("divergence expects a 3-component field")
    m1, m2, m3 = f.lattice.mgrid
    c = 1j * TWO_PI * (m1 * f.coeffs[0] + m2 * f.coeffs[1] + m3 * f.coeffs[2])
    return SpectralField(f.lattice, c[None], (f.parity[2].flipped(),))


def _hdot_weight(lattice: Lattice, sigma: float) -> np.ndarray:
    kmag = lattice.kmag
    if sigma == 0:
        return np.ones_like(kmag)
    w = np.zeros_like(kmag)
    nz = kmag > 0
    w[nz] = kmag[nz] ** (2.0 * sigma)
    return w


def hdot_seminorm(f: SpectralField, sigma: float) -> float:
    """Homogeneous Sobolev seminorm: (sum |k|^(2 sigma) |c|^2)^(1/2)."""
    w = _hdot_weight(f.lattice, sigma)
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def sobolev_norm(f: SpectralField, sigma: float) -> float:
    """Inhomogeneous norm with weight (1 + |k|^(2 sigma)); plain L2 at sigma=0."""
    if sigma == 0:
        return l2_norm(f)
    w = 1.0 + _hdot_weight(f.lattice, sigma)
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def l2_norm(f: SpectralField) -> float:
    return float(np.sqrt(np.sum(np.abs(f.coeffs) ** 2)))


def inner_product(f: SpectralField, g: SpectralField) -> float:
    """L2 pairing Re sum(c_f * conj(c_g)); equals the integral of f*g."""
    if f.lattice != g.lattice or f.ncomp != g.ncomp:
        raise ValueError("inner product requires matching lattices and component counts")
    return float(np.real(np.sum(f.coeffs * np.conj(g.coeffs))))


def hdot_inner(f: SpectralField, g: SpectralField, sigma: float) -> float:
    """Weighted pairing sum |k|^(2 sigma) Re(c_f conj(c_g))."""
    if f.lattice != g.lattice or f.ncomp != g.ncomp:
        raise ValueError("weighted pairing requires matching lattices and components")
    w = _hdot_weight(f.lattice, sigma)
    return float(np.real(np.sum(w * f.coeffs * np.conj(g.coeffs))))


def w1inf_norm(f: SpectralField) -> float:
    """Collocation sup norm: max of Euclidean |f| and componentwise |df/dx_j|."""
    phys = to_physical(f)
    value = float(np.max(np.sqrt(np.sum(phys ** 2, axis=0))))
    for axis in range(3):
        d = to_physical(derivative(f, axis))
        value = max(value, float(np.max(np.abs(d))))
    return value


# ---------------------------------------------------------------------------
# mixed cosine basis bridge (vertical cosine expansion of even fields)
# ---------------------------------------------------------------------------


def mixed_cosine_coefficients(f: SpectralField) -> np.ndarray:
    """Coefficients in the basis e^{i k_h x'} cos(k_3 z) (k_3 >= 0), even fields.

    The vertical-cosine basis element with m3 > 0 carries a sqrt(2)
    normalisation, so a_m = sqrt(2) * c_m for m3 > 0 and a_m = c_m on the
    m3 = 0 slice.  Parseval holds between the two representations.
    """
    for p in f.parity:
        if p is not Parity.EVEN:
            raise ValueError("the cosine expansion applies to even components only")
    n = f.lattice.n
    a = f.coeffs[:, :, :, n:].copy()
    a[:, :, :, 1:] *= np.sqrt(2.0)
    return a


# ---------------------------------------------------------------------------
# random fields
# ---------------------------------------------------------------------------


def gaussian_random_field(
    lattice: Lattice,
    ncomp: int,
    parity: Sequence[Parity],
    decay: float = 3.0,
    seed: int = 0,
    amplitude: float = 1.0,
    zero_mean: bool = True,
) -> SpectralField:
    """i.i.d. complex Gaussian coefficients damped by |m|^(-decay), symmetrized."""
    rng = np.random.default_rng(seed)
    w = lattice.box_width
    raw = rng.standard_normal((ncomp, w, w, w)) + 1j * rng.standard_normal((ncomp, w, w, w))
    msq = np.maximum(lattice.msq, 1).astype(float)
    raw *= amplitude * msq ** (-decay / 2.0)
    f = field_from_coeffs(lattice, raw, parity)
    if zero_mean:
        n = lattice.n
        f.coeffs[:, n, n, n] = 0.0
    return f
