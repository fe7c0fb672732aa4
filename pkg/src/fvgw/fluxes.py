"""Monotone upwind convective fluxes, gravity fluxes, and face transmissibilities.

The convective numerical fluxes take the upstream mobility with respect to the
sign of the pressure flux c = tau * (p_L - p_K):

    G1(a, b; c) = -M1(b) c+ + M1(a) c-          (gas; flows down-gradient)
    G2(a, b; c) =  M2(b) c+ - M2(a) c-          (water)

where x+ = max(x, 0), x- = max(-x, 0).  These forms require M1 nondecreasing
and M2 nonincreasing.  For general continuous mobilities the kernel switches
to the variation-split form

    G_i(a, b; c) = c f_i(0) + c+ (f_up(a) + f_down(b)) - c- (f_up(b) + f_down(a))

with f_1 = -M1, f_2 = M2 split into monotone parts; the constant term
c f_i(0) keeps the flux consistent (G_i(a, a; c) = c f_i(a)) when
f_i(0) != 0, and the whole form reduces exactly to the upwind expressions
above when the mobilities are monotone.

Both paths satisfy, by construction and exactly in floating point:

* consistency   G_i(a, a, c) == c f_i(a)
* conservativity G_i(a, b, c) == -G_i(b, a, -c)
* monotonicity  nondecreasing in a, nonincreasing in b
* coercivity    (G2 - G1)(a, b, c) * c >= m0 c^2 for a, b in [0, 1]
                (upwind path; the identity behind it picks the upstream total
                mobility, which the floor bounds from below).

Gravity fluxes upwind each phase separately through the split face gravity
g+ = |sigma| (g . eta_KL)+ and g- = |sigma| (g . eta_LK)+:

    F1(K, L) = rho(p_K)^2 M1(s_K) g+ - rho(p_L)^2 M1(s_L) g-
    F2(K, L) = rho2 M2(s_L) g+ - rho2 M2(s_K) g-

Both are antisymmetric under (K, L) swap, nondecreasing in s_K and
nonincreasing in s_L.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .physics import mobility_split


def harmonic_transmissibility(k_left, k_right, d_left, d_right, dist):
    """Face permeability scale for heterogeneous isotropic permeability.

    d* = k_K k_L d(x_K, x_L) / (d(x_K, sigma) k_K + d(x_L, sigma) k_L),
    the distance-weighted harmonic average that keeps the two one-sided flux
    approximations conservative.  Reduces to the plain harmonic mean for
    centered faces and to k for uniform permeability.
    """
    k_left = np.asarray(k_left, dtype=float)
    k_right = np.asarray(k_right, dtype=float)
    if np.any(k_left <= 0) or np.any(k_right <= 0):
        raise ValueError("permeabilities must be positive")
    num = k_left * k_right * np.asarray(dist, dtype=float)
    den = (np.asarray(d_left, dtype=float) * k_left
           + np.asarray(d_right, dtype=float) * k_right)
    out = num / den
    return float(out) if out.ndim == 0 else out


@dataclass
class FaceGravity:
    """Split gravity coefficients per face: g+ toward L, g- toward K.

    ``b_plus``/``b_minus`` are the one-sided analogues on boundary faces
    (outward normal plays the role of eta_KL); only Dirichlet ghost faces
    ever use them.
    """

    plus: np.ndarray
    minus: np.ndarray
    b_plus: np.ndarray
    b_minus: np.ndarray


def face_gravity(mesh, gravity) -> FaceGravity:
    """Precompute |sigma| (g . eta)^+/- for every face of the mesh."""
    g = np.asarray(gravity, dtype=float)
    gn = mesh.face_normals @ g
    bn = mesh.bface_normals @ g if mesh.n_bfaces else np.zeros(0)
    return FaceGravity(
        plus=mesh.face_areas * np.maximum(gn, 0.0),
        minus=mesh.face_areas * np.maximum(-gn, 0.0),
        b_plus=mesh.bface_areas * np.maximum(bn, 0.0),
        b_minus=mesh.bface_areas * np.maximum(-bn, 0.0),
    )


class FluxKernel:
    """Numerical flux functions bound to one fluid model.

    Selects the plain upwind path when the mobilities are monotone in the
    right directions and the variation-split path otherwise.  All methods are
    vectorized and accept scalars or arrays.
    """

    def __init__(self, model, path="auto"):
        if path not in ("auto", "upwind", "general"):
            raise ValueError("path must be 'auto', 'upwind', or 'general'")
        self.model = model
        self.m1 = model.mobility_gas
        self.m2 = model.mobility_water
        self.rho = model.density
        self.rho2 = float(model.water_density)
        self.m0 = float(model.total_mobility_floor)
        monotone_ok = (getattr(self.m1, "monotone", None) == "nondecreasing"
                       and getattr(self.m2, "monotone", None) == "nonincreasing")
        if path == "upwind" and not monotone_ok:
            raise ValueError("upwind path needs M1 nondecreasing and "
                             "M2 nonincreasing")
        self.upwind_path = monotone_ok if path == "auto" else path == "upwind"
        if not self.upwind_path:
            self._u1, self._d1 = mobility_split(self.m1)
            self._u2, self._d2 = mobility_split(self.m2)
            self._m1_0 = float(self.m1(0.0))
            self._m2_0 = float(self.m2(0.0))

    # -- convective fluxes ---------------------------------------------------

    def g1(self, a, b, c):
        """Gas convective flux G1(a, b; c)."""
        c = np.asarray(c, dtype=float)
        cp = np.maximum(c, 0.0)
        cm = np.maximum(-c, 0.0)
        if self.upwind_path:
            out = -np.asarray(self.m1(b)) * cp + np.asarray(self.m1(a)) * cm
        else:
            out = (-self._m1_0 * c
                   - cp * (np.asarray(self._u1(b)) + np.asarray(self._d1(a)))
                   + cm * (np.asarray(self._u1(a)) + np.asarray(self._d1(b))))
        return float(out) if out.ndim == 0 else out

    def g2(self, a, b, c):
        """Water convective flux G2(a, b; c)."""
        c = np.asarray(c, dtype=float)
        cp = np.maximum(c, 0.0)
        cm = np.maximum(-c, 0.0)
        if self.upwind_path:
            out = np.asarray(self.m2(b)) * cp - np.asarray(self.m2(a)) * cm
        else:
            out = (self._m2_0 * c
                   + cp * (np.asarray(self._u2(a)) + np.asarray(self._d2(b)))
                   - cm * (np.asarray(self._u2(b)) + np.asarray(self._d2(a))))
        return float(out) if out.ndim == 0 else out

    def dg1(self, a, b, c):
        """Partial derivatives (d/da, d/db, d/dc) of G1.

        At c = 0 the c-derivative takes the average of its one-sided values.
        """
        c = np.asarray(c, dtype=float)
        cp = np.maximum(c, 0.0)
        cm = np.maximum(-c, 0.0)
        pos = (c > 0).astype(float)
        neg = (c < 0).astype(float)
        half = 0.5 * (c == 0).astype(float)
        if self.upwind_path:
            da = np.asarray(self.m1.derivative(a)) * cm
            db = -np.asarray(self.m1.derivative(b)) * cp
            slope_pos = -np.asarray(self.m1(b))
            slope_neg = -np.asarray(self.m1(a))
        else:
            da = (-cp * np.asarray(self._d1.derivative(a))
                  + cm * np.asarray(self._u1.derivative(a)))
            db = (-cp * np.asarray(self._u1.derivative(b))
                  + cm * np.asarray(self._d1.derivative(b)))
            slope_pos = -self._m1_0 - (np.asarray(self._u1(b))
                                       + np.asarray(self._d1(a)))
            slope_neg = -self._m1_0 - (np.asarray(self._u1(a))
                                       + np.asarray(self._d1(b)))
        dc = (slope_pos * (pos + half) + slope_neg * (neg + half))
        return da, db, dc

    def dg2(self, a, b, c):
        """Partial derivatives (d/da, d/db, d/dc) of G2."""
        c = np.asarray(c, dtype=float)
        cp = np.maximum(c, 0.0)
        cm = np.maximum(-c, 0.0)
        pos = (c > 0).astype(float)
        neg = (c < 0).astype(float)
        half = 0.5 * (c == 0).astype(float)
        if self.upwind_path:
            da = -np.asarray(self.m2.derivative(a)) * cm
            db = np.asarray(self.m2.derivative(b)) * cp
            slope_pos = np.asarray(self.m2(b))
            slope_neg = np.asarray(self.m2(a))
        else:
            da = (cp * np.asarray(self._u2.derivative(a))
                  - cm * np.asarray(self._d2.derivative(a)))
            db = (cp * np.asarray(self._d2.derivative(b))
                  - cm * np.asarray(self._u2.derivative(b)))
            slope_pos = self._m2_0 + (np.asarray(self._u2(a))
                                      + np.asarray(self._d2(b)))
            slope_neg = self._m2_0 + (np.asarray(self._u2(b))
                                      + np.asarray(self._d2(a)))
        dc = (slope_pos * (pos + half) + slope_neg * (neg + half))
        return da, db, dc

    def coercivity_gap(self, a, b, c):
        """(G2 - G1)(a, b, c) * c - m0 * c^2, with a, b clamped to [0, 1].

        Nonnegative up to rounding: the difference flux picks the upstream
        total mobility, which the floor m0 bounds from below.
        """
        a = np.clip(np.asarray(a, dtype=float), 0.0, 1.0)
        b = np.clip(np.asarray(b, dtype=float), 0.0, 1.0)
        c = np.asarray(c, dtype=float)
        gap = (np.asarray(self.g2(a, b, c)) - np.asarray(self.g1(a, b, c))) * c \
            - self.m0 * c * c
        return float(gap) if gap.ndim == 0 else gap

    # -- gravity fluxes --------------------------------------------------------

    def gravity_gas(self, p_k, p_l, s_k, s_l, g_plus, g_minus):
        """F1: gas gravity flux through a face, upwinded per orientation."""
        rk = np.asarray(self.rho(p_k))
        rl = np.asarray(self.rho(p_l))
        out = (rk * rk * np.asarray(self.m1(s_k)) * g_plus
               - rl * rl * np.asarray(self.m1(s_l)) * g_minus)
        return float(out) if np.ndim(out) == 0 else out

    def gravity_water(self, s_k, s_l, g_plus, g_minus):
        """F2: water gravity flux; note the downstream mobility convention."""
        out = self.rho2 * (np.asarray(self.m2(s_l)) * g_plus
                           - np.asarray(self.m2(s_k)) * g_minus)
        return float(out) if np.ndim(out) == 0 else out

    def dgravity_gas(self, p_k, p_l, s_k, s_l, g_plus, g_minus):
        """Partials of F1 with respect to (p_k, s_k, p_l, s_l)."""
        rk = np.asarray(self.rho(p_k))
        rl = np.asarray(self.rho(p_l))
        drk = np.asarray(self.rho.derivative(p_k))
        drl = np.asarray(self.rho.derivative(p_l))
        dpk = 2.0 * rk * drk * np.asarray(self.m1(s_k)) * g_plus
        dsk = rk * rk * np.asarray(self.m1.derivative(s_k)) * g_plus
        dpl = -2.0 * rl * drl * np.asarray(self.m1(s_l)) * g_minus
        dsl = -rl * rl * np.asarray(self.m1.derivative(s_l)) * g_minus
        return dpk, dsk, dpl, dsl

    def dgravity_water(self, s_k, s_l, g_plus, g_minus):
        """Partials of F2 with respect to (s_k, s_l)."""
        dsk = -self.rho2 * np.asarray(self.m2.derivative(s_k)) * g_minus
        dsl = self.rho2 * np.asarray(self.m2.derivative(s_l)) * g_plus
        return dsk, dsl
