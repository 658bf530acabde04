"""Compiled inner loops for the physical-optics gain.

Both kernels evaluate the same per-node integrand as
:func:`oirssim.channel.power_density` (which stays in plain numpy and acts
as the reference implementation in the tests).
"""

import numba
import numpy as np


@numba.njit(cache=True)
def _pd_irradiance_sum(Rn, Rw, N, P, Pw, L, N1, N2, rho, m, cosfov):
    """Sum over PD nodes ``P`` and mirror nodes ``Rn`` of the weighted integrand."""
    total = 0.0
    rho2 = rho * rho
    for p in range(P.shape[0]):
        acc = 0.0
        for k in range(Rn.shape[0]):
            dx = Rn[k, 0] - P[p, 0]
            dy = Rn[k, 1] - P[p, 1]
            dz = Rn[k, 2] - P[p, 2]
            d2 = dx * dx + dy * dy + dz * dz
            d = np.sqrt(d2)
            dx /= d
            dy /= d
            dz /= d
            c_pd = N2[0] * dx + N2[1] * dy + N2[2] * dz
            if c_pd < cosfov:
                continue
            dn = N[0] * dx + N[1] * dy + N[2] * dz
            if dn >= 0.0:
                continue
            # ray P->R reflected at the mirror, traced back toward the LED plane
            ox = dx - 2.0 * dn * N[0]
            oy = dy - 2.0 * dn * N[1]
            oz = dz - 2.0 * dn * N[2]
            den = N1[0] * ox + N1[1] * oy + N1[2] * oz
            if den >= 0.0:
                continue
            t = (N1[0] * (L[0] - Rn[k, 0]) + N1[1] * (L[1] - Rn[k, 1])
                 + N1[2] * (L[2] - Rn[k, 2])) / den
            if t <= 0.0:
                continue
            ix = Rn[k, 0] + t * ox - L[0]
            iy = Rn[k, 1] + t * oy - L[1]
            iz = Rn[k, 2] + t * oz - L[2]
            if ix * ix + iy * iy + iz * iz > rho2:
                continue
            val = Rw[k] * c_pd * (-dn) / d2
            if m != 1.0:
                # irradiance angle at the LED: N1 . normalize(R - I) = -N1 . o
                val *= (-den) ** (m - 1.0)
            acc += val
        total += Pw[p] * acc
    return total


@numba.njit(cache=True)
def patch_gain_kernel(R0, t1, t2, N, mir_uv, mir_w, U, s1, s2, pd_uv, pd_w,
                      L, N1, N2, rho, m, cosfov):
    Rn = np.empty((mir_uv.shape[0], 3))
    for k in range(mir_uv.shape[0]):
        for c in range(3):
            Rn[k, c] = R0[c] + mir_uv[k, 0] * t1[c] + mir_uv[k, 1] * t2[c]
    P = np.empty((pd_uv.shape[0], 3))
    for k in range(pd_uv.shape[0]):
        for c in range(3):
            P[k, c] = U[c] + pd_uv[k, 0] * s1[c] + pd_uv[k, 1] * s2[c]
    return _pd_irradiance_sum(Rn, mir_w, N, P, pd_w, L, N1, N2, rho, m, cosfov)


@numba.njit(cache=True)
def batch_patch_gain_kernel(R0s, rolls, yaws, Us, mir_uv, mir_w, s1, s2, pd_uv, pd_w,
                            L, N1, N2, rho, m, cosfov):
    """Gains for many (element center, orientation, PD center) tasks."""
    out = np.empty(R0s.shape[0])
    N = np.empty(3)
    t1 = np.empty(3)
    t2 = np.empty(3)
    for i in range(R0s.shape[0]):
        cw = np.cos(rolls[i])
        sw = np.sin(rolls[i])
        cg = np.cos(yaws[i])
        sg = np.sin(yaws[i])
        N[0] = cw * sg
        N[1] = cw * cg
        N[2] = -sw
        t1[0] = cg
        t1[1] = -sg
        t1[2] = 0.0
        # t2 = N x t1
        t2[0] = N[1] * t1[2] - N[2] * t1[1]
        t2[1] = N[2] * t1[0] - N[0] * t1[2]
        t2[2] = N[0] * t1[1] - N[1] * t1[0]
        out[i] = patch_gain_kernel(R0s[i], t1, t2, N, mir_uv, mir_w, Us[i], s1, s2,
                                   pd_uv, pd_w, L, N1, N2, rho, m, cosfov)
    return out
