"""Independent reference implementations used to check the package.

Everything here is written directly from definitions (explicit mode loops,
brute-force convolution sums, grid quadrature) and deliberately avoids the
package's own product/transform helpers.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def convolve_boxes(a: np.ndarray, b: np.ndarray, n_out: int) -> np.ndarray:
    """Direct convolution c[m] = sum_j a[j] b[m-j] of centered coefficient boxes."""
    na = (a.shape[0] - 1) // 2
    nb = (b.shape[0] - 1) // 2
    w = 2 * n_out + 1
    out = np.zeros((w, w, w), dtype=complex)
    for j1 in range(-na, na + 1):
        for j2 in range(-na, na + 1):
            for j3 in range(-na, na + 1):
                aj = a[j1 + na, j2 + na, j3 + na]
                if aj == 0:
                    continue
                for m1 in range(max(-n_out, j1 - nb), min(n_out, j1 + nb) + 1):
                    for m2 in range(max(-n_out, j2 - nb), min(n_out, j2 + nb) + 1):
                        for m3 in range(max(-n_out, j3 - nb), min(n_out, j3 + nb) + 1):
                            out[m1 + n_out, m2 + n_out, m3 + n_out] += (
                                aj * b[m1 - j1 + nb, m2 - j2 + nb, m3 - j3 + nb]
                            )
    return out


def gradient_box(f: np.ndarray, axis: int) -> np.ndarray:
    """Spectral derivative of one centered coefficient box."""
    n = (f.shape[0] - 1) // 2
    modes = np.arange(-n, n + 1)
    shape = [1, 1, 1]
    shape[axis] = 2 * n + 1
    return f * (1j * TWO_PI * modes.reshape(shape))


def ball_truncate(box: np.ndarray, n: int) -> np.ndarray:
    nb = (box.shape[0] - 1) // 2
    modes = np.arange(-nb, nb + 1)
    m1, m2, m3 = np.meshgrid(modes, modes, modes, indexing="ij")
    out = box.copy()
    out[m1 ** 2 + m2 ** 2 + m3 ** 2 > n * n] = 0.0
    return out


def center_crop(box: np.ndarray, n: int) -> np.ndarray:
    nb = (box.shape[0] - 1) // 2
    a = nb - n
    return box[a : a + 2 * n + 1, a : a + 2 * n + 1, a : a + 2 * n + 1]


def transport_oracle(b_coeffs: np.ndarray, f_coeffs: np.ndarray, n: int) -> np.ndarray:
    """(b . grad f) truncated to |m| <= n, by brute-force convolution.

    b_coeffs: (3, w, w, w); f_coeffs: (C, w, w, w); both centered boxes.
    """
    ncomp = f_coeffs.shape[0]
    w = 2 * n + 1
    out = np.zeros((ncomp, w, w, w), dtype=complex)
    for c in range(ncomp):
        acc = np.zeros_like(out[c])
        for axis in range(3):
            df = gradient_box(f_coeffs[c], axis)
            acc += center_crop(convolve_boxes(b_coeffs[axis], df,
                                              (b_coeffs.shape[1] - 1) // 2 +
                                              (f_coeffs.shape[1] - 1) // 2), n)
        out[c] = acc
    return ball_truncate_all(out, n)


def ball_truncate_all(boxes: np.ndarray, n: int) -> np.ndarray:
    return np.stack([ball_truncate(e, n) for e in boxes])


def vertical_velocity_oracle(V_coeffs: np.ndarray) -> np.ndarray:
    """w coefficients from the definition, mode by mode."""
    n = (V_coeffs.shape[1] - 1) // 2
    w = np.zeros(V_coeffs.shape[1:], dtype=complex)
    for m1 in range(-n, n + 1):
        for m2 in range(-n, n + 1):
            for m3 in range(-n, n + 1):
                if m3 == 0:
                    continue
                dot = m1 * V_coeffs[0, m1 + n, m2 + n, m3 + n] + m2 * V_coeffs[
                    1, m1 + n, m2 + n, m3 + n
                ]
                w[m1 + n, m2 + n, m3 + n] = -dot / m3
    return w


def advection_oracle(g_coeffs: np.ndarray, f_coeffs: np.ndarray, n: int) -> np.ndarray:
    """g . grad_h f + w(g) dz f truncated to |m| <= n, by convolution sums."""
    ncomp = f_coeffs.shape[0]
    nin = (f_coeffs.shape[1] - 1) // 2
    wvel = vertical_velocity_oracle(g_coeffs)
    out = []
    for c in range(ncomp):
        total = np.zeros((2 * (2 * nin) + 1,) * 3, dtype=complex)
        for axis, adv in ((0, g_coeffs[0]), (1, g_coeffs[1]), (2, wvel)):
            df = gradient_box(f_coeffs[c], axis)
            total += convolve_boxes(adv, df, 2 * nin)
        out.append(ball_truncate(center_crop(total, n), n))
    return np.stack(out)


def quadrature_inner(f_phys: np.ndarray, g_phys: np.ndarray) -> float:
    """Trapezoidal L2 pairing on the periodic unit torus (exact band-limited)."""
    return float(np.mean(np.sum(f_phys * g_phys, axis=0)))


def dft_at_point(coeffs: np.ndarray, x: np.ndarray) -> complex:
    """Direct Fourier sum of one centered box at one physical point."""
    n = (coeffs.shape[0] - 1) // 2
    total = 0.0 + 0.0j
    for m1 in range(-n, n + 1):
        for m2 in range(-n, n + 1):
            for m3 in range(-n, n + 1):
                total += coeffs[m1 + n, m2 + n, m3 + n] * np.exp(
                    2j * np.pi * (m1 * x[0] + m2 * x[1] + m3 * x[2])
                )
    return total


def fraclap_commutator_1d_oracle(b_hat: dict, f_hat: dict, s: float, n: int) -> dict:
    """[L^s, b d/dx] f on x1-only modes: weights (|k|^s - |j|^s) f_j b_{k-j} (i 2 pi j).

    ``b_hat``/``f_hat`` map integer x1-modes to coefficients; returns the same
    mapping for the commutator, truncated to |k| <= n.
    """
    out: dict = {}
    for k in range(-n, n + 1):
        acc = 0.0 + 0.0j
        for j, fj in f_hat.items():
            bk = b_hat.get(k - j)
            if bk is None:
                continue
            wk = (TWO_PI * abs(k)) ** s if k != 0 else 0.0
            wj = (TWO_PI * abs(j)) ** s if j != 0 else 0.0
            acc += (wk - wj) * bk * (1j * TWO_PI * j) * fj
        if acc != 0:
            out[k] = acc
    return out
