"""Transport-noise coefficient families and reproducible Wiener increments.

A noise model is a finite family of divergence-free, zero-mean coefficient
fields with the symmetry class (horizontal components even in z, vertical
component odd).  Three construction families are supported:

* ``solenoidal`` — random trigonometric polynomials projected mode-wise onto
  the orthogonal complement of the wavevector (the default);
* ``horizontal_stream`` — horizontal fields derived from a z-independent
  stream function, for which the vertical derivative of the horizontal
  components vanishes identically;
* ``horizontal_constant`` — spatially constant horizontal fields.  These are
  a diagnostic family: they violate the zero-mean convention on purpose and
  make the second-order noise correction an exact Fourier multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .spectral import (
    Lattice,
    Parity,
    SpectralField,
    derivative,
    embed,
    field_from_coeffs,
    l2_norm,
    sobolev_norm,
    zero_field,
)
from .operators import divergence_defect

FAMILIES = ("solenoidal", "horizontal_stream", "horizontal_constant")

# Calibrated so that the measured constant in the cancellation sweep stays
# below one for models passing the check (see the estimate lab).
DEFAULT_SMALLNESS_THRESHOLD = 0.05

_PARITY = (Parity.EVEN, Parity.EVEN, Parity.ODD)


@dataclass(frozen=True)
class NoiseSpec:
    """Construction recipe for the coefficient family."""

    modes: int = 0
    decay: float = 2.0
    amplitude: float = 0.0
    max_wavenumber: int = 2
    seed: int = 0
    family: str = "solenoidal"

    def __post_init__(self):
        if self.modes < 0:
            raise ValueError("number of noise modes must be >= 0")
        if self.max_wavenumber < 1:
            raise ValueError("max wavenumber must be >= 1")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r} (choose from {FAMILIES})")


@dataclass(frozen=True)
class SmallnessReport:
    value: float
    threshold: float

    @property
    def passes(self) -> bool:
        return self.value <= self.threshold


@dataclass(frozen=True)
class NoiseCheck:
    regularity: float
    smallness: SmallnessReport
    tail_summable: bool
    required: bool

    @property
    def passes(self) -> bool:
        return (not self.required) or self.smallness.passes


@dataclass
class NoiseModel:
    """A finite family of transport-noise coefficient fields."""

    spec: NoiseSpec
    fields: tuple[SpectralField, ...]
    sigma_ref: float = 3.5

    @property
    def K(self) -> int:
        return len(self.fields)

    @property
    def lattice(self) -> Lattice:
        return self.fields[0].lattice if self.fields else Lattice(self.spec.max_wavenumber)

    def regularity(self, sigma: float | None = None) -> float:
        """sum_k |b_k|^2 in the sigma+3 Sobolev norm."""
        sig = self.sigma_ref if sigma is None else sigma
        return float(sum(sobolev_norm(b, sig + 3.0) ** 2 for b in self.fields))

    def smallness(self, sigma: float | None = None) -> float:
        """sum_k |b_k|_{sigma+3} * |dz b_k^h|_{sigma-3/2}."""
        sig = self.sigma_ref if sigma is None else sigma
        total = 0.0
        for b in self.fields:
            bh = SpectralField(b.lattice, b.coeffs[:2], b.parity[:2])
            dzbh = derivative(bh, 2)
            total += sobolev_norm(b, sig + 3.0) * sobolev_norm(dzbh, sig - 1.5)
        return float(total)

    def on_lattice(self, lattice: Lattice) -> "NoiseModel":
        return NoiseModel(
            self.spec, tuple(embed(b, lattice) for b in self.fields), self.sigma_ref
        )


def _solenoidal_field(lattice: Lattice, max_m: int, seed: int) -> SpectralField:
    rng_np = np.random.default_rng(seed)
    w = lattice.box_width
    raw = rng_np.standard_normal((3, w, w, w)) + 1j * rng_np.standard_normal((3, w, w, w))
    raw[:, lattice.msq > max_m * max_m] = 0.0
    f = field_from_coeffs(lattice, raw, _PARITY)
    c = f.coeffs
    m1, m2, m3 = lattice.mgrid
    dot = m1 * c[0] + m2 * c[1] + m3 * c[2]
    msq = np.maximum(lattice.msq, 1)
    for i, m in enumerate((m1, m2, m3)):
        c[i] = c[i] - m * dot / msq
    n = lattice.n
    c[:, n, n, n] = 0.0
    return SpectralField(lattice, c, _PARITY)


def _stream_field(lattice: Lattice, max_m: int, seed: int) -> SpectralField:
    rng_np = np.random.default_rng(seed)
    w = lattice.box_width
    psi_raw = rng_np.standard_normal((1, w, w, w)) + 1j * rng_np.standard_normal((1, w, w, w))
    n = lattice.n
    keep = (lattice.msq <= max_m * max_m) & (lattice.mgrid[2] == 0)
    psi_raw[0, ~keep] = 0.0
    psi = field_from_coeffs(lattice, psi_raw, (Parity.EVEN,))
    psi.coeffs[:, n, n, n] = 0.0
    out = zero_field(lattice, 3, _PARITY)
    out.coeffs[0] = derivative(psi, 1).coeffs[0]
    out.coeffs[1] = -derivative(psi, 0).coeffs[0]
    return out


def _constant_field(lattice: Lattice, seed: int) -> SpectralField:
    rng_np = np.random.default_rng(seed)
    c = rng_np.standard_normal(2)
    c /= max(np.linalg.norm(c), 1e-300)
    out = zero_field(lattice, 3, _PARITY)
    n = lattice.n
    out.coeffs[0, n, n, n] = c[0]
    out.coeffs[1, n, n, n] = c[1]
    return out


def build_noise_model(
    spec: NoiseSpec, lattice: Lattice | None = None, sigma_ref: float = 3.5
) -> NoiseModel:
    """Construct the coefficient family; deterministic in the spec seed.

    Field k is scaled to L2 size ``amplitude * k**-decay``.  Divergence-free
    and symmetry constraints hold exactly by construction.
    """
    lat = lattice or Lattice(spec.max_wavenumber)
    if lat.n < spec.max_wavenumber:
        raise ValueError("lattice cannot hold the requested noise wavenumbers")
    fields = []
    for k in range(1, spec.modes + 1):
        seed_k = rng.derive_seed(spec.seed, 0xB0, k)
        if spec.family == "solenoidal":
            b = _solenoidal_field(lat, spec.max_wavenumber, seed_k)
        elif spec.family == "horizontal_stream":
            b = _stream_field(lat, spec.max_wavenumber, seed_k)
        else:
            b = _constant_field(lat, seed_k)
        size = l2_norm(b)
        if size == 0.0:
            raise RuntimeError("degenerate noise draw; change the seed")
        b = (spec.amplitude * float(k) ** (-spec.decay) / size) * b
        defect = divergence_defect(b)
        if defect > 1e-12:
            raise AssertionError(f"noise field {k} is not divergence-free ({defect:.3e})")
        if spec.family != "horizontal_constant" and np.max(np.abs(b.mean_coefficient)) > 0:
            raise AssertionError(f"noise field {k} has nonzero mean")
        fields.append(b)
    return NoiseModel(spec, tuple(fields), sigma_ref)


def check_noise_conditions(
    model: NoiseModel,
    sigma: float,
    s: float,
    smallness_threshold: float = DEFAULT_SMALLNESS_THRESHOLD,
) -> NoiseCheck:
    """Evaluate the summability statistic and the small-noise statistic.

    The small-noise condition is only binding in the critical regime s = 1;
    for s > 1 it is reported but not enforced.
    """
    report = SmallnessReport(model.smallness(sigma), smallness_threshold)
    return NoiseCheck(
        regularity=model.regularity(sigma),
        smallness=report,
        tail_summable=model.spec.decay > 0.5 or model.spec.modes == 0,
        required=(s == 1.0),
    )


# ---------------------------------------------------------------------------
# Wiener increments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WienerPath:
    """Finite family of independent Brownian motions sampled at step dt."""

    seed: int
    dt: float
    modes: int

    def __post_init__(self):
        if self.dt < 0:
            raise ValueError("dt must be nonnegative")
        if self.modes < 0:
            raise ValueError("modes must be >= 0")

    def block(self, start: int, count: int) -> np.ndarray:
        """Increments for steps [start, start+count), shape (count, modes)."""
        if start < 0:
            raise ValueError("step index must be >= 0")
        out = np.empty((count, self.modes))
        for k in range(self.modes):
            out[:, k] = rng.brownian_increments(self.seed, k, self.dt, start, count)
        return out

    def increments(self, step: int) -> np.ndarray:
        """Increments of all modes for one step, shape (modes,)."""
        return self.block(step, 1)[0]


def wiener_increments(path: WienerPath, step: int) -> np.ndarray:
    return path.increments(step)
