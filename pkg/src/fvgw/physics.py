"""Fluid laws, the derived scalar functions, and hypothesis validation.

The flow model is written in terms of a handful of scalar laws:

* gas density ``rho(p)``: C1, nondecreasing, bounded between positive
  ``rho_min`` and ``rho_max``;
* phase mobilities ``M1(s)`` (gas, ``M1(0) = 0``) and ``M2(s)`` (water,
  ``M2(1) = 0``) with total mobility floor ``M1 + M2 >= m0 > 0``;
* capillary diffusion coefficient ``alpha(s) >= 0`` with ``alpha(0) = 0``
  (degenerate at the dry end).

Everything downstream consumes the laws through
:class:`DerivedFunctions`:

* ``beta``      antiderivative of alpha, extended flat below 0 and with
                slope alpha(1) above 1;
* ``big_B``     antiderivative of beta (convex, used by the water energy);
* ``g_aux``     negative antiderivative of rho (concave since rho is
                nondecreasing);
* ``big_H``     ``g_aux(p) + rho(p) * p`` (nonnegative, used by the gas
                energy);
* ``interface_density``  mean density over a pressure interval, the face
                density of the scheme.

``g_aux`` and ``interface_density`` share one antiderivative object, so the
cancellation ``interface_density(a, b) * (b - a) + g_aux(b) - g_aux(a) = 0``
holds to machine precision -- several energy estimates hinge on it.

All laws accept scalars or arrays and return matching shapes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .quadrature import CachedAntiderivative

_Poly = np.polynomial.Polynomial


class ModelValidationError(ValueError):
    """Raised when a law or model violates a structural requirement."""


def _out(value):
    """Return a float for 0-d results, the array otherwise."""
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value


def _check_finite(name, x, values):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        bad = np.asarray(x, dtype=float).ravel()[
            int(np.argmax(~np.isfinite(values).ravel()))]
        raise ModelValidationError(
            f"{name} produced a non-finite value at input {bad!r}")
    return values


# -- density laws -----------------------------------------------------------------

class ConstantDensity:
    """Incompressible gas stand-in; mostly for oracles and hand computations."""

    def __init__(self, value):
        if value <= 0:
            raise ModelValidationError("density must be positive")
        self.value = float(value)
        self.rho_min = self.value
        self.rho_max = self.value

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        return _out(np.full_like(p, self.value))

    def derivative(self, p):
        p = np.asarray(p, dtype=float)
        return _out(np.zeros_like(p))

    def antiderivative(self, p):
        p = np.asarray(p, dtype=float)
        return _out(self.value * p)

    def mean_value(self, p_left, p_right):
        p = np.broadcast_arrays(np.asarray(p_left, dtype=float),
                                np.asarray(p_right, dtype=float))[0]
        return _out(np.full_like(p, self.value))


class LinearDensity:
    """rho(p) = value_at_zero + slope * p on a stated validity range.

    Unbounded on all of R, so the bounds ``rho_min``/``rho_max`` are taken on
    ``valid_range``; keep simulated pressures inside it.
    """

    def __init__(self, value_at_zero, slope, valid_range=(0.0, 1.0)):
        if slope < 0:
            raise ModelValidationError("density slope must be nonnegative")
        self.value_at_zero = float(value_at_zero)
        self.slope = float(slope)
        self.valid_range = (float(valid_range[0]), float(valid_range[1]))
        lo = self.value_at_zero + self.slope * self.valid_range[0]
        hi = self.value_at_zero + self.slope * self.valid_range[1]
        if lo <= 0:
            raise ModelValidationError(
                "linear density is non-positive on its validity range")
        self.rho_min = lo
        self.rho_max = hi

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        return _out(self.value_at_zero + self.slope * p)

    def derivative(self, p):
        p = np.asarray(p, dtype=float)
        return _out(np.full_like(p, self.slope))

    def antiderivative(self, p):
        p = np.asarray(p, dtype=float)
        return _out(self.value_at_zero * p + 0.5 * self.slope * p * p)

    def mean_value(self, p_left, p_right):
        """Average of rho over the interval; exact for a linear law."""
        pa = np.asarray(p_left, dtype=float)
        pb = np.asarray(p_right, dtype=float)
        return _out(self.value_at_zero + 0.5 * self.slope * (pa + pb))


class LogisticDensity:
    """Smooth increasing density bounded in (rho_min, rho_max).

    rho(p) = rho_min + (rho_max - rho_min) * sigmoid(rate * (p - p_ref)).
    """

    def __init__(self, rho_min, rho_max, rate, p_ref=0.0):
        if not (0 < rho_min < rho_max):
            raise ModelValidationError("need 0 < rho_min < rho_max")
        if rate <= 0:
            raise ModelValidationError("rate must be positive")
        self.rho_min = float(rho_min)
        self.rho_max = float(rho_max)
        self.rate = float(rate)
        self.p_ref = float(p_ref)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        span = self.rho_max - self.rho_min
        return _out(self.rho_min + span * expit(self.rate * (p - self.p_ref)))

    def derivative(self, p):
        p = np.asarray(p, dtype=float)
        sig = expit(self.rate * (p - self.p_ref))
        return _out((self.rho_max - self.rho_min) * self.rate * sig * (1.0 - sig))

    def antiderivative(self, p):
        # softplus(x) = log(1 + e^x) evaluated stably; F(0) = 0 by construction.
        p = np.asarray(p, dtype=float)
        span = self.rho_max - self.rho_min
        sp = np.logaddexp(0.0, self.rate * (p - self.p_ref))
        sp0 = np.logaddexp(0.0, self.rate * (0.0 - self.p_ref))
        return _out(self.rho_min * p + span * (sp - sp0) / self.rate)

    def mean_value(self, p_left, p_right):
        """Average of rho over the pressure interval, cancellation-free.

        A direct antiderivative difference loses digits once the interval
        shrinks below ~1e-8 of the pressure scale; the softplus increment
        log1p(sigmoid(a) * expm1(d)) keeps full relative accuracy, which
        matters for Newton residuals near pressure equilibria.  Endpoints
        are sorted first, so the result is symmetric bit for bit.
        """
        pa = np.asarray(p_left, dtype=float)
        pb = np.asarray(p_right, dtype=float)
        pa, pb = np.broadcast_arrays(pa, pb)
        lo = np.minimum(pa, pb)
        hi = np.maximum(pa, pb)
        a = self.rate * (lo - self.p_ref)
        d = self.rate * (hi - lo)
        span = self.rho_max - self.rho_min
        degenerate = d == 0.0
        d_safe = np.where(degenerate, 1.0, d)
        wide = d_safe > 30.0
        # softplus(a + d) - softplus(a), exact in relative terms for small d.
        inc = np.log1p(expit(a) * np.expm1(np.where(wide, 30.0, d_safe)))
        sp_diff = np.where(wide,
                           np.logaddexp(0.0, a + d_safe)
                           - np.logaddexp(0.0, a),
                           inc)
        out = np.where(degenerate,
                       np.asarray(self(lo), dtype=float),
                       self.rho_min + span * sp_diff / d_safe)
        return _out(np.clip(out, self.rho_min, self.rho_max))


# -- mobility laws -----------------------------------------------------------------

class PowerMobility:
    """M(s) = scale * s**exponent (gas) or scale * (1-s)**exponent (water).

    Constant extension outside [0, 1].  ``decreasing=True`` selects the water
    form.
    """

    def __init__(self, exponent, scale=1.0, decreasing=False):
        if exponent < 1:
            raise ModelValidationError("mobility exponent must be >= 1")
        if scale <= 0:
            raise ModelValidationError("mobility scale must be positive")
        self.exponent = float(exponent)
        self.scale = float(scale)
        self.decreasing = bool(decreasing)
        self.monotone = "nonincreasing" if decreasing else "nondecreasing"

    def _arg(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        return 1.0 - s if self.decreasing else s

    def __call__(self, s):
        return _out(self.scale * self._arg(s) ** self.exponent)

    def derivative(self, s):
        z = self._arg(s)
        d = self.scale * self.exponent * z ** (self.exponent - 1.0)
        if self.decreasing:
            d = -d
        # Constant extension: zero slope outside [0, 1].
        s = np.asarray(s, dtype=float)
        return _out(np.where((s < 0.0) | (s > 1.0), 0.0, d))

    def critical_points(self):
        return np.empty(0)


class PolynomialMobility:
    """Mobility given by polynomial coefficients (constant term first) on [0, 1].

    Constant extension outside [0, 1].  Must be nonnegative on [0, 1]; interior
    critical points are extracted from the exact derivative polynomial, which
    is what makes the positive/negative-variation split exact.
    """

    def __init__(self, coeffs):
        self.poly = _Poly(np.asarray(coeffs, dtype=float))
        self.dpoly = self.poly.deriv()
        grid = np.linspace(0.0, 1.0, 1001)
        if np.min(self.poly(grid)) < -1e-12:
            raise ModelValidationError("mobility is negative on [0, 1]")
        self._crit = self._interior_roots()
        if len(self._crit) == 0:
            dmid = self.dpoly(np.linspace(0.0, 1.0, 101))
            if np.all(dmid >= -1e-14):
                self.monotone = "nondecreasing"
            elif np.all(dmid <= 1e-14):
                self.monotone = "nonincreasing"
            else:
                self.monotone = None
        else:
            self.monotone = None

    def _interior_roots(self):
        if self.dpoly.degree() < 1:
            return np.empty(0)
        roots = self.dpoly.roots()
        real = roots[np.abs(roots.imag) < 1e-10].real
        inside = np.unique(real[(real > 1e-12) & (real < 1.0 - 1e-12)])
        return np.sort(inside)

    def __call__(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        return _out(self.poly(s))

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        d = self.dpoly(np.clip(s, 0.0, 1.0))
        return _out(np.where((s < 0.0) | (s > 1.0), 0.0, d))

    def critical_points(self):
        return self._crit.copy()


class GenericMobility:
    """Wrap an arbitrary callable mobility on [0, 1].

    ``derivative`` falls back to a central difference; critical points are
    located by sign changes of the derivative on a dense grid refined by
    bisection, which keeps the variation split accurate to ~1e-10.
    """

    def __init__(self, func, derivative=None, grid_points=4097):
        self.func = func
        self._derivative = derivative
        grid = np.linspace(0.0, 1.0, grid_points)
        vals = _check_finite("mobility", grid, func(grid))
        if np.min(vals) < -1e-12:
            raise ModelValidationError("mobility is negative on [0, 1]")
        self._crit = self._find_critical(grid)
        self.monotone = None
        dvals = np.diff(vals)
        if np.all(dvals >= -1e-14):
            self.monotone = "nondecreasing"
        elif np.all(dvals <= 1e-14):
            self.monotone = "nonincreasing"

    def __call__(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        return _out(np.asarray(self.func(s), dtype=float))

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        z = np.clip(s, 0.0, 1.0)
        if self._derivative is not None:
            d = np.asarray(self._derivative(z), dtype=float)
        else:
            h = 1e-6
            zp = np.minimum(z + h, 1.0)
            zm = np.maximum(z - h, 0.0)
            d = (np.asarray(self.func(zp), dtype=float)
                 - np.asarray(self.func(zm), dtype=float)) / (zp - zm)
        return _out(np.where((s < 0.0) | (s > 1.0), 0.0, d))

    def _find_critical(self, grid):
        d = np.asarray(self.derivative(grid))
        crit = []
        for i in range(len(grid) - 1):
            if d[i] == 0.0 and 0 < i:
                crit.append(grid[i])
            elif d[i] * d[i + 1] < 0.0:
                lo, hi = grid[i], grid[i + 1]
                dlo = d[i]
                for _ in range(80):  # bisect to ~1e-17 interval width
                    mid = 0.5 * (lo + hi)
                    dm = float(self.derivative(mid))
                    if dm == 0.0:
                        lo = hi = mid
                        break
                    if dlo * dm < 0:
                        hi = mid
                    else:
                        lo = mid
                        dlo = dm
                crit.append(0.5 * (lo + hi))
        crit = [c for c in crit if 1e-12 < c < 1.0 - 1e-12]
        return np.unique(np.asarray(crit))

    def critical_points(self):
        return self._crit.copy()


class MobilityVariation:
    """Running positive or negative variation of a mobility from s = 0.

    ``up(z) = int_0^z (M')^+`` is nondecreasing, ``down(z) = -int_0^z (M')^-``
    is nonincreasing, and ``up + down + M(0) = M`` exactly on the node
    algebra (telescoping sums of exact mobility values).
    """

    def __init__(self, mobility, kind):
        if kind not in ("up", "down"):
            raise ValueError("kind must be 'up' or 'down'")
        self.mobility = mobility
        self.kind = kind
        crit = np.asarray(mobility.critical_points(), dtype=float)
        self.nodes = np.concatenate([[0.0], crit])
        node_vals = np.asarray(mobility(self.nodes), dtype=float).reshape(-1)
        steps = np.diff(node_vals)
        if kind == "up":
            cum = np.concatenate([[0.0], np.cumsum(np.maximum(steps, 0.0))])
        else:
            cum = np.concatenate([[0.0], np.cumsum(-np.maximum(-steps, 0.0))])
        self._node_vals = node_vals
        self._cum = cum

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        z = np.clip(s, 0.0, 1.0)
        j = np.searchsorted(self.nodes, z, side="right") - 1
        j = np.clip(j, 0, len(self.nodes) - 1)
        mz = np.asarray(self.mobility(z), dtype=float)
        part = mz - self._node_vals[j]
        if self.kind == "up":
            part = np.maximum(part, 0.0)
        else:
            part = -np.maximum(-part, 0.0)
        return _out(self._cum[j] + part)

    def derivative(self, s):
        d = np.asarray(self.mobility.derivative(s), dtype=float)
        if self.kind == "up":
            return _out(np.maximum(d, 0.0))
        return _out(np.minimum(d, 0.0))


def mobility_split(mobility):
    """Split a mobility into (nondecreasing, nonincreasing) variation parts."""
    return (MobilityVariation(mobility, "up"),
            MobilityVariation(mobility, "down"))


# -- capillary laws ----------------------------------------------------------------

class PolynomialCapillary:
    """alpha(s) = polynomial(s) + epsilon on [0, 1].

    ``epsilon > 0`` gives the nondegenerate test-mode variant used by smooth
    convergence studies (it deliberately breaks alpha(0) = 0; the hypothesis
    report flags it).  Outside [0, 1] alpha is extended by 0 below and
    alpha(1) above, matching the flat/linear extension of beta.
    """

    def __init__(self, coeffs, epsilon=0.0):
        if epsilon < 0:
            raise ModelValidationError("epsilon must be nonnegative")
        self.epsilon = float(epsilon)
        self.poly = _Poly(np.asarray(coeffs, dtype=float))
        grid = np.linspace(0.0, 1.0, 1001)
        if np.min(self.poly(grid)) + epsilon < -1e-12:
            raise ModelValidationError("capillary alpha is negative on [0, 1]")
        # Closed-form antiderivatives on [0, 1]; A(0) = 0, AA(0) = 0.
        self._A = (self.poly + _Poly([self.epsilon])).integ(lbnd=0.0)
        self._AA = self._A.integ(lbnd=0.0)
        self.alpha_at_one = float(self.poly(1.0) + self.epsilon)

    def alpha(self, s):
        s = np.asarray(s, dtype=float)
        inside = self.poly(np.clip(s, 0.0, 1.0)) + self.epsilon
        return _out(np.where(s < 0.0, 0.0,
                             np.where(s > 1.0, self.alpha_at_one, inside)))

    def beta(self, s):
        s = np.asarray(s, dtype=float)
        inside = self._A(np.clip(s, 0.0, 1.0))
        above = self._A(1.0) + self.alpha_at_one * (s - 1.0)
        return _out(np.where(s < 0.0, 0.0, np.where(s > 1.0, above, inside)))

    def big_B(self, s):
        s = np.asarray(s, dtype=float)
        inside = self._AA(np.clip(s, 0.0, 1.0))
        t = s - 1.0
        above = self._AA(1.0) + self._A(1.0) * t + 0.5 * self.alpha_at_one * t * t
        return _out(np.where(s < 0.0, 0.0, np.where(s > 1.0, above, inside)))


class GenericCapillary:
    """Wrap an arbitrary callable alpha on [0, 1]; antiderivatives by quadrature."""

    def __init__(self, func):
        self.func = func
        grid = np.linspace(0.0, 1.0, 2001)
        vals = _check_finite("capillary alpha", grid, func(grid))
        if np.min(vals) < -1e-12:
            raise ModelValidationError("capillary alpha is negative on [0, 1]")
        self.alpha_at_one = float(func(1.0))
        self._A = CachedAntiderivative(self._alpha_scalar, anchor=0.0, step=0.125)
        self._A1 = float(self._A(1.0))
        self._AA = CachedAntiderivative(self._beta_scalar, anchor=0.0, step=0.125)

    def _alpha_scalar(self, s):
        if s < 0.0:
            return 0.0
        if s > 1.0:
            return self.alpha_at_one
        return float(self.func(s))

    def _beta_scalar(self, s):
        if s < 0.0:
            return 0.0
        if s > 1.0:
            return self._A1 + self.alpha_at_one * (s - 1.0)
        return float(self._A(s))

    def alpha(self, s):
        s = np.asarray(s, dtype=float)
        inside = np.asarray(self.func(np.clip(s, 0.0, 1.0)), dtype=float)
        return _out(np.where(s < 0.0, 0.0,
                             np.where(s > 1.0, self.alpha_at_one, inside)))

    def beta(self, s):
        s = np.asarray(s, dtype=float)
        if s.ndim == 0:
            return self._beta_scalar(float(s))
        return np.array([self._beta_scalar(v) for v in s.ravel()]
                        ).reshape(s.shape)

    def big_B(self, s):
        s = np.asarray(s, dtype=float)
        if s.ndim == 0:
            return float(self._AA(float(np.maximum(s, 0.0))))
        return np.asarray(self._AA(np.maximum(s, 0.0)))


# -- the model ---------------------------------------------------------------------

@dataclass
class FluidModel:
    """Complete description of the two-phase fluid system.

    ``porosity`` and ``permeability`` may be scalars or per-cell arrays; the
    scheme broadcasts them.  ``gravity`` is the gravity vector (or None for
    no gravity); ``water_density`` is the constant density of the
    incompressible water phase; ``total_mobility_floor`` is the constant m0
    in M1 + M2 >= m0.
    """

    density: object
    mobility_gas: object
    mobility_water: object
    capillary: object
    water_density: float = 1.0
    total_mobility_floor: float = 0.5
    porosity: object = 1.0
    permeability: object = 1.0
    gravity: object = None
    _derived: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.water_density <= 0:
            raise ModelValidationError("water density must be positive")
        if self.total_mobility_floor <= 0:
            raise ModelValidationError("total mobility floor must be positive")
        phi = np.atleast_1d(np.asarray(self.porosity, dtype=float))
        if np.any(phi <= 0) or not np.all(np.isfinite(phi)):
            raise ModelValidationError("porosity must be positive and finite")
        k = np.atleast_1d(np.asarray(self.permeability, dtype=float))
        if np.any(k <= 0) or not np.all(np.isfinite(k)):
            raise ModelValidationError("permeability must be positive and finite")

    def derived(self):
        if self._derived is None:
            self._derived = DerivedFunctions(self)
        return self._derived

    def porosity_field(self, n_cells):
        return np.broadcast_to(np.asarray(self.porosity, dtype=float),
                               (n_cells,)).copy()

    def permeability_field(self, n_cells):
        return np.broadcast_to(np.asarray(self.permeability, dtype=float),
                               (n_cells,)).copy()

    def gravity_vector(self, dim):
        if self.gravity is None:
            return np.zeros(dim)
        g = np.asarray(self.gravity, dtype=float)
        if g.shape != (dim,):
            raise ModelValidationError(
                f"gravity vector has shape {g.shape}, expected ({dim},)")
        return g


class DerivedFunctions:
    """Scalar functions derived from the laws. See the module docstring."""

    def __init__(self, model: FluidModel):
        self.model = model
        cap = model.capillary
        if not hasattr(cap, "beta"):
            cap = GenericCapillary(cap)
        self._cap = cap
        self.beta_max = float(cap.beta(1.0))
        rho = model.density
        if hasattr(rho, "antiderivative"):
            self._R = rho.antiderivative
        else:
            self._R = CachedAntiderivative(lambda p: float(rho(p)), anchor=0.0)
        # Inversion table for beta on [0, 1]; beta is strictly increasing
        # wherever alpha > 0, so the table brackets are valid.
        self._s_tab = np.linspace(0.0, 1.0, 1025)
        self._b_tab = np.asarray(cap.beta(self._s_tab), dtype=float)

    # capillary side -------------------------------------------------------

    def alpha(self, s):
        return self._cap.alpha(s)

    def beta(self, s):
        return self._cap.beta(s)

    def big_B(self, s):
        return self._cap.big_B(s)

    def beta_inverse(self, v):
        """Inverse of beta on [0, beta(1)], to ~1e-13 in s."""
        v = np.asarray(v, dtype=float)
        slack = 1e-9 * max(1.0, self.beta_max)
        if np.any(v < -slack) or np.any(v > self.beta_max + slack):
            raise ValueError("beta_inverse argument outside [0, beta(1)]")
        vc = np.clip(v, 0.0, self.beta_max)
        lo_idx = np.clip(np.searchsorted(self._b_tab, vc, side="right") - 1,
                         0, len(self._s_tab) - 2)
        lo = self._s_tab[lo_idx]
        hi = self._s_tab[lo_idx + 1]
        for _ in range(52):  # bisection: interval shrinks below 1e-15
            mid = 0.5 * (lo + hi)
            below = np.asarray(self._cap.beta(mid), dtype=float) <= vc
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return _out(0.5 * (lo + hi))

    # density side -----------------------------------------------------------

    def g_aux(self, p):
        return _out(-np.asarray(self._R(p), dtype=float))

    def big_H(self, p):
        p = np.asarray(p, dtype=float)
        rho = np.asarray(self.model.density(p), dtype=float)
        return _out(-np.asarray(self._R(p), dtype=float) + rho * p)

    def interface_density(self, p_left, p_right):
        """Mean of rho over [p_left, p_right]; symmetric, within the rho bounds.

        Laws that carry a cancellation-free ``mean_value`` are preferred;
        otherwise the antiderivative difference is used, with degenerate
        intervals falling back to the average of the endpoint densities.
        """
        rho = self.model.density
        if hasattr(rho, "mean_value"):
            out = np.asarray(rho.mean_value(p_left, p_right), dtype=float)
            return _out(np.clip(out, rho.rho_min, rho.rho_max))
        pa = np.asarray(p_left, dtype=float)
        pb = np.asarray(p_right, dtype=float)
        pa, pb = np.broadcast_arrays(pa, pb)
        dp = pb - pa
        scale = np.maximum(1.0, np.maximum(np.abs(pa), np.abs(pb)))
        tiny = np.abs(dp) <= 1e-12 * scale
        safe = np.where(tiny, 1.0, dp)
        mean = (np.asarray(self._R(pb), dtype=float)
                - np.asarray(self._R(pa), dtype=float)) / safe
        fallback = 0.5 * (np.asarray(rho(pa), dtype=float)
                          + np.asarray(rho(pb), dtype=float))
        out = np.where(tiny, fallback, mean)
        return _out(np.clip(out, rho.rho_min, rho.rho_max))


def interface_density(p_left, p_right, density):
    """Mean density over a pressure interval for a stand-alone density law."""
    if hasattr(density, "mean_value"):
        out = np.asarray(density.mean_value(p_left, p_right), dtype=float)
        return _out(np.clip(out, density.rho_min, density.rho_max))
    if hasattr(density, "antiderivative"):
        R = density.antiderivative
    else:
        if not hasattr(density, "_cached_antiderivative"):
            density._cached_antiderivative = CachedAntiderivative(
                lambda p: float(density(p)), anchor=0.0)
        R = density._cached_antiderivative
    pa = np.asarray(p_left, dtype=float)
    pb = np.asarray(p_right, dtype=float)
    pa, pb = np.broadcast_arrays(pa, pb)
    dp = pb - pa
    scale = np.maximum(1.0, np.maximum(np.abs(pa), np.abs(pb)))
    tiny = np.abs(dp) <= 1e-12 * scale
    safe = np.where(tiny, 1.0, dp)
    mean = (np.asarray(R(pb), dtype=float)
            - np.asarray(R(pa), dtype=float)) / safe
    fallback = 0.5 * (np.asarray(density(pa), dtype=float)
                      + np.asarray(density(pb), dtype=float))
    out = np.where(tiny, fallback, mean)
    return _out(np.clip(out, density.rho_min, density.rho_max))


# -- hypothesis validation -----------------------------------------------------------

@dataclass
class HypothesisCheck:
    name: str
    passed: object          # True/False, or None when not checkable here
    worst: float
    note: str

    def __str__(self):
        status = {True: "pass", False: "FAIL", None: "n/a "}[self.passed]
        return f"  {self.name}: {status}  worst={self.worst:.3e}  {self.note}"


@dataclass
class HypothesisReport:
    checks: dict

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values()
                   if c.passed is not None)

    def failed_hard(self):
        """Names of failed checks that make the scheme unusable (not test-mode)."""
        hard = []
        for key in ("H1", "H3", "H6"):
            c = self.checks.get(key)
            if c is not None and c.passed is False:
                hard.append(key)
        return hard

    def __str__(self):
        lines = ["hypothesis report:"]
        lines += [str(c) for c in self.checks.values()]
        return "\n".join(lines)


def validate_hypotheses(model: FluidModel, pressure_range=(-1.0, 5.0),
                        n_samples=2001) -> HypothesisReport:
    """Sample the laws and report on the structural hypotheses.

    The report is advisory: a nondegenerate test-mode capillary fails H4 by
    design.  Non-finite law values are a hard failure and raise
    :class:`ModelValidationError` naming the offending law and input.
    """
    checks = {}
    s = np.linspace(0.0, 1.0, n_samples)
    p_lo, p_hi = float(pressure_range[0]), float(pressure_range[1])
    if not p_hi > p_lo:
        raise ValueError("pressure_range must be increasing")
    p = np.linspace(p_lo, p_hi, n_samples)
    der = model.derived()

    phi = np.atleast_1d(np.asarray(model.porosity, dtype=float))
    _check_finite("porosity", phi, phi)
    phi_min, phi_max = float(phi.min()), float(phi.max())
    checks["H1"] = HypothesisCheck(
        "H1 porosity bounds", phi_min > 0.0, phi_min,
        f"phi in [{phi_min:.6g}, {phi_max:.6g}]")

    m1 = _check_finite("gas mobility", s, model.mobility_gas(s))
    m2 = _check_finite("water mobility", s, model.mobility_water(s))
    m0 = model.total_mobility_floor
    tot_min = float(np.min(m1 + m2))
    ok = (abs(float(model.mobility_gas(0.0))) <= 1e-12
          and abs(float(model.mobility_water(1.0))) <= 1e-12
          and float(np.min(m1)) >= -1e-12 and float(np.min(m2)) >= -1e-12
          and tot_min >= m0 - 1e-12)
    checks["H3"] = HypothesisCheck(
        "H3 mobilities", ok, tot_min - m0,
        f"M1(0)={float(model.mobility_gas(0.0)):.2e}, "
        f"M2(1)={float(model.mobility_water(1.0)):.2e}, "
        f"min(M1+M2)-m0={tot_min - m0:.3e}")

    alpha = _check_finite("capillary alpha", s, der.alpha(s))
    a0 = float(der.alpha(0.0))
    interior_min = float(np.min(alpha[1:]))
    theta = _holder_exponent_estimate(der)
    ok = abs(a0) <= 1e-12 and interior_min > 0.0
    checks["H4"] = HypothesisCheck(
        "H4 capillary degeneracy", ok, interior_min,
        f"alpha(0)={a0:.3e}, min alpha on (0,1]={interior_min:.3e}, "
        f"beta_inverse Holder exponent ~ {theta:.3f} (reported only)")

    checks["H5"] = HypothesisCheck(
        "H5 source positivity", None, 0.0,
        "sources live on the scheme; validated at assembly time")

    rho = _check_finite("density", p, model.density(p))
    drho = _check_finite("density derivative", p, model.density.derivative(p))
    lo_ok = float(np.min(rho)) >= model.density.rho_min - 1e-12
    hi_ok = float(np.max(rho)) <= model.density.rho_max + 1e-12
    mono = float(np.min(drho))
    ok = lo_ok and hi_ok and mono >= -1e-12 and model.density.rho_min > 0
    checks["H6"] = HypothesisCheck(
        "H6 density", ok, mono,
        f"rho in [{float(np.min(rho)):.6g}, {float(np.max(rho)):.6g}], "
        f"min rho'={mono:.3e}")

    return HypothesisReport(checks)


def _holder_exponent_estimate(derived: DerivedFunctions) -> float:
    """Log-log slope of beta_inverse near v = 0 (the degenerate end)."""
    if derived.beta_max <= 0:
        return float("nan")
    ks = np.arange(4, 22)
    v = derived.beta_max * 0.5 ** ks
    s = np.asarray(derived.beta_inverse(v), dtype=float)
    good = s > 1e-14
    if np.count_nonzero(good) < 3:
        return float("nan")
    slope, _ = np.polyfit(np.log(v[good]), np.log(s[good]), 1)
    return float(slope)
