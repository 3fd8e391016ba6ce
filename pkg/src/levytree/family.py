"""Admissible families of branching mechanisms.

A family assigns to every time q in a window a mechanism (b_q, c, m_q)
whose jump measure rides on a fixed tuple of unit primitives with
time-dependent weights w_i(q).  Differentiating in q recovers the kernel

    zeta_q(lam) = beta_q lam + sum_i rate_i(q) * D_i(lam),

where rate_i = -dw_i/dq and D_i is the unit Laplace defect of primitive i.
Because every weight is a plain scalar per primitive, the survival factor
of a jump carried by primitive i over [t, q] is exactly w_i(q) / w_i(t):
monotonicity and the cocycle identity hold by construction rather than by
numerical accident.

Pruning reads off two ingredients from the kernel: the skeleton mark rate
alpha(t, q) = integral of beta, and the node mark probability
p(delta) = 1 - survival(t, q, delta) for a branch point of size delta.
"""

import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .mechanism import (
    DomainError,
    GammaDensity,
    Mechanism,
    NumericError,
    PointMass,
    primitive_from_dict,
)

_QBAR_GRID = np.linspace(0.1, 10.0, 100)
_QBAR_TOL = 1e-9


@dataclass(frozen=True)
class PruneParams:
    """Parameters of the marking functional over a time slice [t, q].

    alpha is the Poisson rate per unit skeleton length; p maps a node size
    to its mark probability; hazard is the cumulative node-mark measure
    -ln(survival), infinite once survival hits zero.
    """

    alpha: float
    p: object
    hazard: object


class AdmissibleFamily(ABC):
    """Base class wiring weights and drift into mechanisms and kernels.

    Subclasses provide b_at, beta_at, weights_at and weight_rates_at; the
    window must contain 0 and c stays constant across the window.
    """

    def __init__(self, window, c, shapes, left_closed=None):
        t0, t1 = float(window[0]), float(window[1])
        if math.isnan(t0) or math.isnan(t1) or not t0 < t1:
            raise DomainError(f"bad window [{t0}, {t1}]")
        if not t0 <= 0.0 <= t1:
            raise DomainError(f"window [{t0}, {t1}] must contain 0")
        if not (math.isfinite(c) and c >= 0.0):
            raise DomainError(f"need c >= 0, got {c}")
        for s in shapes:
            s.validate()
            if s.w != 1.0:
                raise DomainError(
                    "shapes carry unit weight; put the scale in the weights"
                )
        if left_closed is None:
            left_closed = math.isfinite(t0)
        self.window = (t0, t1)
        self.left_closed = bool(left_closed) and math.isfinite(t0)
        self.c = float(c)
        self.shapes = tuple(shapes)
        self._atom_idx = tuple(
            i for i, s in enumerate(self.shapes) if isinstance(s, PointMass)
        )

    # -- data supplied by each concrete family ------------------------------

    @abstractmethod
    def b_at(self, q):
        """Drift coefficient b_q."""

    @abstractmethod
    def beta_at(self, q):
        """Drift part of the kernel, beta_q >= 0."""

    @abstractmethod
    def weights_at(self, q):
        """Array of w_i(q) aligned with self.shapes."""

    @abstractmethod
    def weight_rates_at(self, q):
        """Array of -dw_i/dq (the absolutely continuous part)."""

    @abstractmethod
    def to_dict(self):
        """JSON-ready description, inverse of family_from_dict."""

    # -- validation helpers --------------------------------------------------

    def _check_time(self, q, name="q"):
        t0, t1 = self.window
        if not (math.isfinite(q) and t0 <= q <= t1):
            raise DomainError(f"{name}={q} outside window [{t0}, {t1}]")

    def _check_interval(self, t, q):
        self._check_time(t, "t")
        self._check_time(q, "q")
        if t > q:
            raise DomainError(f"need t <= q, got t={t} > q={q}")

    # -- mechanisms and kernels ----------------------------------------------

    def psi_at(self, q):
        self._check_time(q)
        w = self.weights_at(q)
        prims = tuple(s.scaled(wi) for s, wi in zip(self.shapes, w))
        return Mechanism(self.b_at(q), self.c, prims)

    def zeta(self, q, lam):
        self._check_time(q)
        if lam < 0:
            raise DomainError(f"need lam >= 0, got {lam}")
        out = self.beta_at(q) * lam
        rates = self.weight_rates_at(q)
        for s, r in zip(self.shapes, rates):
            if r != 0.0:
                out += r * s.unit_laplace_defect(lam)
        return out

    def dzeta_dlam(self, q, lam):
        self._check_time(q)
        out = self.beta_at(q)
        rates = self.weight_rates_at(q)
        for s, r in zip(self.shapes, rates):
            if r != 0.0:
                out += r * s.unit_laplace_defect_dlam(lam)
        return out

    def mz(self, t, q, i):
        """Survival factor of primitive i over [t, q]: w_i(q) / w_i(t)."""
        self._check_interval(t, q)
        if not 0 <= i < len(self.shapes):
            raise DomainError(f"no jump primitive with index {i}")
        wt = self.weights_at(t)[i]
        if wt == 0.0:
            raise DomainError(f"primitive {i} is degenerate at t={t} (zero weight)")
        return self.weights_at(q)[i] / wt

    # -- pruning parameters ----------------------------------------------------

    def alpha(self, t, q):
        """Skeleton mark rate: integral of beta over [t, q]."""
        self._check_interval(t, q)
        return self._alpha(t, q)

    def _alpha(self, t, q):
        if t == q:
            return 0.0
        val, err = integrate.quad(
            self.beta_at, t, q, epsabs=1e-13, epsrel=1e-12, limit=200
        )
        if err > 1e-8 * max(1.0, abs(val)):
            raise NumericError(f"alpha({t}, {q}) quadrature error {err:.2e}")
        return val

    def node_survival(self, t, q, delta):
        """Survival factor for a branch point of size delta over [t, q].

        The default keys the ratio off the nearest atom; families whose
        survival law extends smoothly off the atoms override this.
        """
        self._check_interval(t, q)
        if not delta > 0:
            raise DomainError(f"need node size > 0, got {delta}")
        if not self._atom_idx:
            return 1.0
        i = min(self._atom_idx, key=lambda j: abs(self.shapes[j].z - delta))
        return self.mz(t, q, i)

    def node_mark_time(self, t, delta, u):
        """First time q with 1 - survival(t, q, delta) >= u; inf if never."""
        self._check_time(t, "t")
        if not 0.0 < u < 1.0:
            raise DomainError(f"need u in (0, 1), got {u}")
        target = 1.0 - u
        t1 = self.window[1]
        hi = min(t1, t + 1.0)
        while self.node_survival(t, hi, delta) > target:
            if hi >= t1 or hi - t > 1e9:
                return math.inf
            hi = min(t1, t + 2.0 * (hi - t))
        return optimize.brentq(
            lambda s: self.node_survival(t, s, delta) - target, t, hi, xtol=1e-14
        )

    def prune_parameters(self, t, q):
        a = self.alpha(t, q)

        def p(delta):
            return 1.0 - self.node_survival(t, q, delta)

        def hazard(delta):
            surv = self.node_survival(t, q, delta)
            return math.inf if surv == 0.0 else -math.log(surv)

        return PruneParams(alpha=a, p=p, hazard=hazard)

    def mark_times(self, t, q, rng, size):
        """iid mark times on [t, q] with density beta / alpha(t, q)."""
        self._check_interval(t, q)
        total = self.alpha(t, q)
        if total <= 0.0:
            raise DomainError(f"alpha({t}, {q}) = {total}: no mark-time density")
        grid = np.linspace(t, q, 1025)
        dens = np.array([self.beta_at(x) for x in grid])
        cum = integrate.cumulative_trapezoid(dens, grid, initial=0.0)
        return np.interp(rng.random(size) * cum[-1], cum, grid)

    # -- family-level quantities ----------------------------------------------

    def eta_at(self, q):
        """Largest root of psi_q."""
        return self.psi_at(q).eta

    def t_infinity(self):
        """Window infimum and whether the family extends to it."""
        t0 = self.window[0]
        return t0, (self.left_closed and math.isfinite(t0))

    def _require_critical_origin(self):
        if self.psi_at(0.0).criticality() != "critical":
            raise DomainError("conjugation needs psi_0 critical")

    def qbar(self, q):
        """Time with psi_qbar = psi_q(eta_q + .), or None if none exists.

        Generic families match the drift coefficient by root-finding and
        then verify the conjugacy on a lambda grid.
        """
        self._check_time(q)
        if q >= 0:
            raise DomainError(f"qbar needs q < 0, got {q}")
        self._require_critical_origin()
        mech = self.psi_at(q)
        eta = mech.eta
        target = mech.dpsi(eta)
        t1 = self.window[1]
        hi = min(t1, 1.0)
        while self.b_at(hi) < target:
            if hi >= t1 or hi > 1e12:
                return None
            hi = min(t1, 2.0 * hi)
        qb = optimize.brentq(lambda s: self.b_at(s) - target, 0.0, hi, xtol=1e-14)
        return self._verify_qbar(qb, mech, eta)

    def _verify_qbar(self, qb, mech, eta):
        conj = self.psi_at(qb)
        gap = np.max(np.abs(conj.psi(_QBAR_GRID) - mech.psi(eta + _QBAR_GRID)))
        return qb if gap < _QBAR_TOL else None

    def gamma_and_U_density(self, t):
        """Ascension rate gamma_t and the conjugate-time density at qbar(t)."""
        self._check_time(t, "t")
        if t >= 0:
            raise DomainError(f"need t < 0, got {t}")
        mech = self.psi_at(t)
        eta = mech.eta
        dps = mech.dpsi(eta)
        if dps == 0.0:
            raise NumericError(f"psi'_t vanishes at its largest root (t={t})")
        zet = self.zeta(t, eta)
        gamma = -(self.dzeta_dlam(t, eta) * dps - mech.d2psi(eta) * zet) / dps
        tb = self.qbar(t)
        if tb is None:
            raise DomainError(f"no conjugate time for t={t}")
        dens = zet * self.dzeta_dlam(tb, 0.0) / (dps * gamma)
        return gamma, dens


# -- built-in families ---------------------------------------------------------


class ShiftFamily(AdmissibleFamily):
    """psi_q(lam) = psi(q + lam) - psi(q) for a base mechanism given at q = 0.

    The base jump measure must be purely atomic: exponential tilting keeps
    each atom in place with weight w_i e^{-z_i q}, which is the scalar
    structure the family machinery needs.  Gamma primitives change shape
    under tilting and are rejected.
    """

    def __init__(self, base, window, left_closed=None):
        if any(not isinstance(s, PointMass) for s in base.m):
            raise DomainError("shift families carry atomic jump measures only")
        shapes = tuple(PointMass(s.z, 1.0) for s in base.m)
        super().__init__(window, base.c, shapes, left_closed)
        self.base = base
        self._w0 = np.array([s.w for s in base.m], dtype=float)
        self._z = np.array([s.z for s in base.m], dtype=float)

    def b_at(self, q):
        zq = self._z * q
        return self.base.b + 2.0 * self.c * q + float(np.sum(self._w0 * self._z * -np.expm1(-zq)))

    def beta_at(self, q):
        return 2.0 * self.c

    def weights_at(self, q):
        return self._w0 * np.exp(-self._z * q)

    def weight_rates_at(self, q):
        return self._z * self.weights_at(q)

    def _alpha(self, t, q):
        return 2.0 * self.c * (q - t)

    def node_survival(self, t, q, delta):
        self._check_interval(t, q)
        if not delta > 0:
            raise DomainError(f"need node size > 0, got {delta}")
        return math.exp(-delta * (q - t))

    def node_mark_time(self, t, delta, u):
        self._check_time(t, "t")
        if not 0.0 < u < 1.0:
            raise DomainError(f"need u in (0, 1), got {u}")
        tm = t - math.log1p(-u) / delta
        return tm if tm <= self.window[1] else math.inf

    def mark_times(self, t, q, rng, size):
        self._check_interval(t, q)
        return t + (q - t) * rng.random(size)

    def qbar(self, q):
        self._check_time(q)
        if q >= 0:
            raise DomainError(f"qbar needs q < 0, got {q}")
        self._require_critical_origin()
        qb = q + self.eta_at(q)
        return qb if qb <= self.window[1] else None

    def to_dict(self):
        return {
            "type": "shift",
            "window": _window_out(self.window),
            "left_closed": self.left_closed,
            "base": self.base.to_dict(),
        }


class LinearDriftFamily(AdmissibleFamily):
    """psi_q(lam) = q * b_rate * lam + c * lam^2: pure drift kernel, no jumps."""

    def __init__(self, b_rate, c, window=(-math.inf, math.inf), left_closed=None):
        if not b_rate > 0:
            raise DomainError(f"kernel drift must be positive, got {b_rate}")
        if not c > 0:
            raise DomainError(f"need c > 0, got {c}")
        super().__init__(window, c, (), left_closed)
        self.b_rate = float(b_rate)

    def b_at(self, q):
        return self.b_rate * q

    def beta_at(self, q):
        return self.b_rate

    def weights_at(self, q):
        return np.zeros(0)

    def weight_rates_at(self, q):
        return np.zeros(0)

    def _alpha(self, t, q):
        return self.b_rate * (q - t)

    def eta_at(self, q):
        self._check_time(q)
        return -self.b_rate * q / self.c if q < 0 else 0.0

    def node_mark_time(self, t, delta, u):
        return math.inf

    def mark_times(self, t, q, rng, size):
        self._check_interval(t, q)
        return t + (q - t) * rng.random(size)

    def qbar(self, q):
        self._check_time(q)
        if q >= 0:
            raise DomainError(f"qbar needs q < 0, got {q}")
        return -q if -q <= self.window[1] else None

    def to_dict(self):
        return {
            "type": "lineardrift",
            "window": _window_out(self.window),
            "left_closed": self.left_closed,
            "b_rate": self.b_rate,
            "c": self.c,
        }


class TruncationFamily(AdmissibleFamily):
    """Atoms above the moving ceiling h(q) = h0 - slope * q are dropped whole.

    With an atomic base the kernel is singular in time: an atom leaves at
    the single instant h crosses its site, psi_q jumps there, and zeta only
    carries the drift part g_rate.  check_admissibility reports the gap
    instead of smoothing it over.  A node of size delta is marked exactly
    when the ceiling crosses delta, so node_mark_time is deterministic.
    """

    def __init__(self, base, h0, slope, g_rate=0.0, window=(-1.0, 1.0), left_closed=None):
        if any(not isinstance(s, PointMass) for s in base.m):
            raise DomainError("truncation families carry atomic jump measures only")
        if not h0 > 0:
            raise DomainError(f"need a positive ceiling, got h0={h0}")
        if g_rate < 0:
            raise DomainError(f"kernel drift must be nonnegative, got {g_rate}")
        shapes = tuple(PointMass(s.z, 1.0) for s in base.m)
        super().__init__(window, base.c, shapes, left_closed)
        for end in self.window:
            if math.isfinite(end):
                if not h0 - slope * end > 0:
                    raise DomainError(f"ceiling is not positive at window end {end}")
            elif slope != 0.0:
                raise DomainError("a sloped ceiling needs a finite window")
        self.base = base
        self.h0 = float(h0)
        self.slope = float(slope)
        self.g_rate = float(g_rate)
        self._w0 = np.array([s.w for s in base.m], dtype=float)
        self._z = np.array([s.z for s in base.m], dtype=float)

    def ceiling(self, q):
        return self.h0 - self.slope * q

    def b_at(self, q):
        dropped = self._z > self.ceiling(q)
        return self.base.b + self.g_rate * q + float(np.sum(self._w0[dropped] * self._z[dropped]))

    def beta_at(self, q):
        return self.g_rate

    def weights_at(self, q):
        return self._w0 * (self._z <= self.ceiling(q))

    def weight_rates_at(self, q):
        # the true kernel is a time-atom at each drop; the a.c. part is zero
        return np.zeros_like(self._w0)

    def _alpha(self, t, q):
        return self.g_rate * (q - t)

    def node_survival(self, t, q, delta):
        self._check_interval(t, q)
        if not delta > 0:
            raise DomainError(f"need node size > 0, got {delta}")
        return 1.0 if delta <= self.ceiling(q) else 0.0

    def node_mark_time(self, t, delta, u):
        self._check_time(t, "t")
        if self.slope <= 0.0:
            return math.inf
        td = (self.h0 - delta) / self.slope
        if td <= t:
            return t
        return td if td <= self.window[1] else math.inf

    def mark_times(self, t, q, rng, size):
        self._check_interval(t, q)
        if self.g_rate <= 0.0:
            raise DomainError(f"alpha({t}, {q}) = 0: no mark-time density")
        return t + (q - t) * rng.random(size)

    def to_dict(self):
        return {
            "type": "truncation",
            "window": _window_out(self.window),
            "left_closed": self.left_closed,
            "base": self.base.to_dict(),
            "h0": self.h0,
            "slope": self.slope,
            "g_rate": self.g_rate,
        }


class ReflectedFamily(AdmissibleFamily):
    """Extend a family living on [t0, 0] with psi_0 critical to [t0, -t0].

    For q > 0 the mechanism is the conjugate at the largest root of the
    mirror time: psi_q = psi_{-q}(eta_{-q} + .).  All kernel quantities on
    the positive side follow from the negative side by the chain rule with
    d eta_t / dt = -zeta_t(eta_t) / psi'_t(eta_t); the mark rate integral
    collapses to alpha(0, q) = 2 c eta_{-q} - alpha_neg(-q, 0).
    """

    def __init__(self, negative):
        t0 = negative.window[0]
        if not math.isfinite(t0) or t0 >= 0:
            raise DomainError("reflection needs a finite negative window start")
        if negative.window[1] < 0:
            raise DomainError("the negative-side family must reach 0")
        if any(not isinstance(s, PointMass) for s in negative.shapes):
            raise DomainError("reflection supports atomic jump measures only")
        super().__init__((t0, -t0), negative.c, negative.shapes, negative.left_closed)
        if negative.psi_at(0.0).criticality() != "critical":
            raise DomainError("reflection needs psi_0 critical")
        self.negative = negative
        self._z = np.array([s.z for s in negative.shapes], dtype=float)

    def _mirror(self, q):
        """(eta, psi', zeta) of the negative side at t = -q."""
        t = -q
        mech = self.negative.psi_at(t)
        eta = mech.eta
        return t, eta, mech.dpsi(eta), self.negative.zeta(t, eta)

    def b_at(self, q):
        if q <= 0:
            return self.negative.b_at(q)
        t = -q
        mech = self.negative.psi_at(t)
        return mech.dpsi(mech.eta)

    def beta_at(self, q):
        if q <= 0:
            return self.negative.beta_at(q)
        t, eta, dps, zet = self._mirror(q)
        return -self.negative.beta_at(t) + 2.0 * self.c * zet / dps

    def weights_at(self, q):
        if q <= 0:
            return self.negative.weights_at(q)
        t, eta, _, _ = self._mirror(q)
        return self.negative.weights_at(t) * np.exp(-self._z * eta)

    def weight_rates_at(self, q):
        if q <= 0:
            return self.negative.weight_rates_at(q)
        t, eta, dps, zet = self._mirror(q)
        w = self.negative.weights_at(t)
        r = self.negative.weight_rates_at(t)
        return np.exp(-self._z * eta) * (w * self._z * zet / dps - r)

    def _alpha(self, t, q):
        return self._alpha_from_zero(q) - self._alpha_from_zero(t)

    def _alpha_from_zero(self, s):
        if s <= 0:
            return -self.negative.alpha(s, 0.0)
        return 2.0 * self.c * self.negative.eta_at(-s) - self.negative.alpha(-s, 0.0)

    def eta_at(self, q):
        self._check_time(q)
        return self.negative.eta_at(q) if q <= 0 else 0.0

    def node_survival(self, t, q, delta):
        self._check_interval(t, q)
        if not delta > 0:
            raise DomainError(f"need node size > 0, got {delta}")
        if not self._atom_idx:
            return 1.0
        i = min(self._atom_idx, key=lambda j: abs(self.shapes[j].z - delta))

        def factor(s):
            if s <= 0:
                return self.negative.weights_at(s)[i]
            w = self.negative.weights_at(-s)[i]
            return w * math.exp(-delta * self.negative.eta_at(-s))

        ft = factor(t)
        if ft == 0.0:
            raise DomainError(f"primitive {i} is degenerate at t={t} (zero weight)")
        return factor(q) / ft

    def qbar(self, q):
        self._check_time(q)
        if q >= 0:
            raise DomainError(f"qbar needs q < 0, got {q}")
        return -q

    def to_dict(self):
        return {"type": "reflected", "negative": self.negative.to_dict()}


class CustomFamily(AdmissibleFamily):
    """Family described by callables on a finite window.

    beta and the weight rates are tabulated eagerly on an even grid (step
    1e-4 of the window) and integrated by cumulative Simpson; off-node
    queries finish the partial end intervals with three-point Simpson, so
    alpha is additive to machine precision.  Not serializable.
    """

    def __init__(
        self,
        window,
        c,
        b0,
        beta,
        shapes=(),
        weights=None,
        weight_rates=None,
        node_survival_fn=None,
        left_closed=True,
    ):
        super().__init__(window, c, shapes, left_closed)
        t0, t1 = self.window
        if not (math.isfinite(t0) and math.isfinite(t1)):
            raise DomainError("custom families need a finite window")
        if self.shapes and (weights is None or weight_rates is None):
            raise DomainError("jump-carrying custom families need weights and rates")
        self._beta_fn = beta
        self._weights_fn = weights
        self._rates_fn = weight_rates
        self._survival_fn = node_survival_fn
        self.b0 = float(b0)
        self._beta_table = _CumTable(beta, t0, t1)
        if np.any(self._beta_table.values < 0.0):
            raise DomainError("beta must be nonnegative on the window")
        self._fm = np.array([s.unit_first_moment for s in self.shapes])
        self._w_start = self.weights_at(t0)
        if self.shapes:
            rate0 = np.min([np.min(self._rates(x)) for x in self._beta_table.nodes[:: 500]])
            if rate0 < 0.0:
                raise DomainError("weight rates must be nonnegative on the window")

    def _rates(self, q):
        return np.asarray(self._rates_fn(q), dtype=float)

    def b_at(self, q):
        drift = self._beta_table.between(self.window[0], q)
        jump = float(np.sum(self._fm * (self._w_start - self.weights_at(q))))
        return self.b0 + drift + jump

    def beta_at(self, q):
        return float(self._beta_fn(q))

    def weights_at(self, q):
        if self._weights_fn is None:
            return np.zeros(0)
        return np.asarray(self._weights_fn(q), dtype=float)

    def weight_rates_at(self, q):
        if self._rates_fn is None:
            return np.zeros(0)
        return self._rates(q)

    def _alpha(self, t, q):
        return self._beta_table.between(t, q)

    def node_survival(self, t, q, delta):
        if self._survival_fn is not None:
            self._check_interval(t, q)
            if not delta > 0:
                raise DomainError(f"need node size > 0, got {delta}")
            return float(self._survival_fn(t, q, delta))
        return super().node_survival(t, q, delta)

    def to_dict(self):
        raise DomainError("custom families built from callables have no JSON form")


class _CumTable:
    """Cumulative integral of a scalar function on an even grid."""

    def __init__(self, fn, lo, hi, steps=10000):
        self.fn = fn
        self.lo = lo
        self.dx = (hi - lo) / steps
        self.nodes = np.linspace(lo, hi, steps + 1)
        self.values = np.array([float(fn(x)) for x in self.nodes])
        self.cum = integrate.cumulative_simpson(self.values, dx=self.dx, initial=0.0)

    def _simp3(self, a, b):
        if a == b:
            return 0.0
        return (b - a) / 6.0 * (self.fn(a) + 4.0 * self.fn(0.5 * (a + b)) + self.fn(b))

    def between(self, t, q):
        j0 = math.ceil((t - self.lo) / self.dx - 1e-12)
        j1 = math.floor((q - self.lo) / self.dx + 1e-12)
        j0 = max(0, min(j0, len(self.nodes) - 1))
        j1 = max(0, min(j1, len(self.nodes) - 1))
        if j1 < j0:
            return self._simp3(t, q)
        return (
            self.cum[j1]
            - self.cum[j0]
            + self._simp3(t, self.nodes[j0])
            + self._simp3(self.nodes[j1], q)
        )


# -- admissibility report --------------------------------------------------------


@dataclass(frozen=True)
class Condition:
    passed: bool
    worst: float
    note: str = ""


@dataclass(frozen=True)
class AdmissibilityReport:
    monotone_psi: Condition
    h1_weights: Condition
    h2_cocycle: Condition
    h3_grey: Condition
    kernel_integrals: Condition

    @property
    def passed(self):
        return all(
            c.passed
            for c in (
                self.monotone_psi,
                self.h1_weights,
                self.h2_cocycle,
                self.h3_grey,
                self.kernel_integrals,
            )
        )

    def summary(self):
        rows = [
            ("psi increasing in q", self.monotone_psi),
            ("H1 weights", self.h1_weights),
            ("H2 cocycle", self.h2_cocycle),
            ("H3 grey", self.h3_grey),
            ("kernel integrals", self.kernel_integrals),
        ]
        lines = []
        for label, cond in rows:
            state = "pass" if cond.passed else "FAIL"
            note = f"  ({cond.note})" if cond.note else ""
            lines.append(f"{label:<22} {state}  worst={cond.worst:.3e}{note}")
        verdict = "admissible" if self.passed else "NOT admissible"
        lines.append(f"overall: {verdict}")
        return "\n".join(lines)


def _default_t_grid(fam, n=9):
    t0, t1 = fam.window
    lo = t0 if math.isfinite(t0) else -3.0
    hi = t1 if math.isfinite(t1) else 3.0
    return np.linspace(lo, hi, n)


def check_admissibility(fam, t_grid=None, lam_grid=None):
    """Grid verification of the defining properties; report-only."""
    ts = np.sort(np.asarray(t_grid if t_grid is not None else _default_t_grid(fam)))
    lams = np.asarray(lam_grid if lam_grid is not None else (0.1, 0.5, 1.0, 2.0, 5.0, 10.0))

    mechs = [fam.psi_at(t) for t in ts]
    psi_tab = np.array([m.psi(lams) for m in mechs])
    worst_mono = float(np.min(np.diff(psi_tab, axis=0), initial=0.0))
    monotone = Condition(worst_mono >= -1e-9, min(worst_mono, 0.0))

    weights = np.array([fam.weights_at(t) for t in ts])
    if weights.size:
        growth = float(np.max(np.diff(weights, axis=0), initial=0.0))
        negative = float(np.min(weights))
        note = "a weight reaches zero" if np.any(weights == 0.0) else ""
        h1 = Condition(growth <= 1e-12 and negative >= 0.0, max(growth, -negative, 0.0), note)
    else:
        h1 = Condition(True, 0.0, "no jump part")

    worst_cocycle = 0.0
    skipped = False
    for i in range(len(ts)):
        for j in range(i, len(ts)):
            for k in range(j, len(ts)):
                for p in range(weights.shape[1] if weights.size else 0):
                    if weights[i, p] == 0.0 or weights[j, p] == 0.0:
                        skipped = True
                        continue
                    err = abs(
                        fam.mz(ts[i], ts[k], p)
                        - fam.mz(ts[i], ts[j], p) * fam.mz(ts[j], ts[k], p)
                    )
                    worst_cocycle = max(worst_cocycle, err)
    h2 = Condition(
        worst_cocycle < 1e-12, worst_cocycle, "degenerate triples skipped" if skipped else ""
    )

    grey_fail = [t for t, m in zip(ts, mechs) if not m.is_grey]
    h3 = Condition(not grey_fail, float(len(grey_fail)), "" if not grey_fail else f"fails at t={grey_fail[0]:g}")

    fm = np.array([s.unit_first_moment for s in fam.shapes])
    worst_kernel = 0.0
    for i in range(len(ts) - 1):
        for j in range(i + 1, len(ts)):
            t, q = ts[i], ts[j]
            lhs = fam.b_at(q) - fam.b_at(t)
            jump = float(np.sum(fm * (weights[i] - weights[j]))) if fm.size else 0.0
            rhs = fam.alpha(t, q) + jump
            if not (math.isfinite(lhs) and math.isfinite(rhs)):
                worst_kernel = math.inf
                continue
            worst_kernel = max(worst_kernel, abs(lhs - rhs))
    kernel = Condition(worst_kernel < 1e-8, worst_kernel)

    return AdmissibilityReport(monotone, h1, h2, h3, kernel)


# -- serialization ----------------------------------------------------------------


def _window_out(window):
    return [None if not math.isfinite(x) else x for x in window]


def _window_in(pair):
    lo = -math.inf if pair[0] is None else float(pair[0])
    hi = math.inf if pair[1] is None else float(pair[1])
    return (lo, hi)


def family_to_dict(fam):
    return fam.to_dict()


def family_from_dict(d):
    kind = d.get("type")
    if kind == "shift":
        return ShiftFamily(
            Mechanism.from_dict(d["base"]), _window_in(d["window"]), d.get("left_closed")
        )
    if kind == "lineardrift":
        return LinearDriftFamily(
            d["b_rate"], d["c"], _window_in(d["window"]), d.get("left_closed")
        )
    if kind == "truncation":
        return TruncationFamily(
            Mechanism.from_dict(d["base"]),
            d["h0"],
            d["slope"],
            d.get("g_rate", 0.0),
            _window_in(d["window"]),
            d.get("left_closed"),
        )
    if kind == "reflected":
        return ReflectedFamily(family_from_dict(d["negative"]))
    raise DomainError(f"unknown family type {kind!r}")


def family_to_json(fam):
    return json.dumps(family_to_dict(fam), sort_keys=True)


def family_from_json(text):
    return family_from_dict(json.loads(text))
