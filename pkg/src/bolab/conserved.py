"""Conserved quantities and their algebra.

Everything here is organized around the generating function

    beta(kappa; q) = <q_+, (L + kappa)^{-1} q_+>,

whose expansion in inverse powers of kappa produces the polynomial
conserved quantities (momentum, energy, and the next one up), and whose
functional derivative m + conj(m) + |m|^2 drives the regularized flows.
Also here: Poisson brackets via analytic functional gradients, the
Miura-type transform w = kappa * dbeta/dq with its defining pointwise
equation, the renormalized trace series alpha, and the scaling/boost
covariance checks.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.special

from . import lax as _lax
from .spectral import (
    Geometry,
    GeometryError,
    HardyField,
    NormSpec,
    RealField,
    cauchy_szego,
    derivative,
    hilbert_transform,
    inner,
    l2_norm,
    mean,
    sobolev_norm,
    _from_padded_values,
)

__all__ = [
    "HamiltonianValue",
    "BetaCurve",
    "ExpansionFit",
    "BockKruskalResult",
    "AlphaDiagnostics",
    "CovarianceReport",
    "Scale",
    "Galilei",
    "beta",
    "beta_derivatives",
    "beta_gradient",
    "beta_curve",
    "polynomial_hamiltonians",
    "beta_expansion_check",
    "h_kappa",
    "poisson_bracket",
    "Momentum",
    "BOEnergy",
    "BetaFunctional",
    "HKappaFunctional",
    "bock_kruskal",
    "perturbation_determinant_alpha",
    "symmetry_covariance",
    "quadrature_integral",
]


# ---------------------------------------------------------------------------
# quadrature helpers (alias-free via padded grids)


def quadrature_integral(geometry: Geometry, *value_arrays: np.ndarray, pad: int = 1) -> float:
    """integral of a pointwise product of sampled fields over the domain.

    The samples must all live on the same (optionally `pad`-refined) grid.
    """
    prod = value_arrays[0]
    for v in value_arrays[1:]:
        prod = prod * v
    n = prod.shape[0]
    return float(np.real(np.sum(prod)) * geometry.length / n)


def _padded(f, factor: int = 2) -> np.ndarray:
    return f.values_padded(factor)


def line_nonlocal_derivative(q: RealField) -> np.ndarray:
    """Values (padded grid) of H q' with the line-consistent kernel.

    The periodic Hilbert kernel cot(pi u/L)/L deviates from the line
    kernel 1/(pi u) at O(u/L^2); the first two expansion terms are
    removed through spatial moments of q'.  On the circle the periodic
    kernel is returned as is.
    """
    from .spectral import apply_symbol_padded

    geom = q.geometry
    base = apply_symbol_padded(geom, _padded(q).real, np.abs).real
    if geom.kind != "box":
        return base
    lam = geom.length
    n = base.shape[0]
    x = geom.x0 + lam / n * np.arange(n)
    dq = _padded(derivative(q)).real
    w = lam / n
    mu1 = w * np.sum(x * dq)
    mu2 = w * np.sum(x**2 * dq)
    mu3 = w * np.sum(x**3 * dq)
    c2 = np.pi / (3.0 * lam**2)
    c4 = np.pi**3 / (45.0 * lam**4)
    return base - c2 * mu1 + c4 * (-3.0 * x**2 * mu1 + 3.0 * x * mu2 - mu3)


def line_nonlocal_transpose(geometry, f_vals: np.ndarray) -> np.ndarray:
    """Transpose of the line-consistent H d/dx under the plain pairing.

    Needed for exact functional gradients of box quantities built with
    line_nonlocal_derivative; reduces to H d/dx itself on the circle.
    """
    from .spectral import apply_symbol_padded

    base = apply_symbol_padded(geometry, f_vals, np.abs).real
    if geometry.kind != "box":
        return base
    lam = geometry.length
    n = f_vals.shape[0]
    x = geometry.x0 + lam / n * np.arange(n)
    w = lam / n
    s0 = w * np.sum(f_vals)
    s1 = w * np.sum(x * f_vals)
    s2 = w * np.sum(x**2 * f_vals)
    dsaw = [
        apply_symbol_padded(geometry, x**j, lambda xi: 1j * xi).real for j in (1, 2, 3)
    ]
    c2 = np.pi / (3.0 * lam**2)
    c4 = np.pi**3 / (45.0 * lam**4)
    return base + c2 * s0 * dsaw[0] + c4 * (
        3.0 * s2 * dsaw[0] - 3.0 * s1 * dsaw[1] + s0 * dsaw[2]
    )


# ---------------------------------------------------------------------------
# beta and its kappa-derivatives


def _auto_lax(q: RealField, lax, line) -> "_lax.LaxMatrix":
    if lax is not None:
        return lax
    if line is None:
        line = q.geometry.kind == "box"
    return _lax.build_lax(q, line=line)


def beta(
    q: RealField,
    kappa: float,
    lax: "_lax.LaxMatrix | None" = None,
    gauge: "_lax.GaugeData | None" = None,
    line: bool | None = None,
) -> float:
    """<q_+, (L+kappa)^{-1} q_+>; real for real q and admissible kappa.

    On the box the line-consistent compression is used by default so the
    value approximates the line integral; line=False selects the exact
    periodic value instead (that is what the flows conserve discretely).
    """
    if gauge is None:
        gauge = _lax.gauge_m(q, kappa, lax=_auto_lax(q, lax, line), check_series=False)
    val = inner(cauchy_szego(q), gauge.density)
    if abs(val.imag) > 1e-12 * max(abs(val), 1e-300):
        raise RuntimeError(f"beta came out non-real: {val}")
    return float(val.real)


def beta_derivatives(
    q: RealField,
    kappa: float,
    order: int = 3,
    lax: "_lax.LaxMatrix | None" = None,
    line: bool | None = None,
) -> np.ndarray:
    """[beta, beta', ..., beta^(order)] via iterated resolvent powers.

    d^j beta / d kappa^j = (-1)^j j! <q_+, R(kappa)^{j+1} q_+>.
    """
    if order < 0 or order > 6:
        raise ValueError("derivative order must be between 0 and 6")
    _lax.require_admissible(q, kappa)
    lax = _auto_lax(q, lax, line)
    a = lax.matrix + kappa * np.eye(lax.mode_count)
    lu = scipy.linalg.lu_factor(a)
    vec = np.sqrt(lax.weights) * q.coeffs[: lax.mode_count]
    length = q.geometry.length
    out = np.empty(order + 1)
    power = vec
    fact = 1.0
    for j in range(order + 1):
        power = scipy.linalg.lu_solve(lu, power)
        val = length * np.vdot(vec, power)
        out[j] = ((-1.0) ** j) * fact * val.real
        fact *= j + 1
    return out


def beta_gradient(
    q: RealField,
    kappa: float,
    gauge: "_lax.GaugeData | None" = None,
    line: bool | None = None,
) -> RealField:
    """Functional gradient of beta: m + conj(m) + |m|^2 as a real field.

    This is the exact discrete gradient of the matching beta functional
    (periodic or line-consistent), with m the gauge field of the same
    compression.
    """
    if gauge is None:
        gauge = _lax.gauge_m(q, kappa, lax=_auto_lax(q, None, line), check_series=False)
    mv = _padded(gauge.density)
    vals = 2.0 * mv.real + np.abs(mv) ** 2
    full = _from_padded_values(q.geometry, vals.astype(complex), 2)
    return RealField.from_coeffs(q.geometry, full)


@dataclass(frozen=True)
class BetaCurve:
    kappas: np.ndarray
    values: np.ndarray
    fingerprint: str

    def is_strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.values) < 0))


def beta_curve(q: RealField, kappas, line: bool | None = None) -> BetaCurve:
    kappas = np.sort(np.asarray(kappas, dtype=float))
    lax = _auto_lax(q, None, line)
    vals = np.array([beta(q, k, lax=lax) for k in kappas])
    digest = hashlib.sha1(np.ascontiguousarray(q.coeffs).tobytes()).hexdigest()
    return BetaCurve(kappas, vals, digest)


# ---------------------------------------------------------------------------
# polynomial conserved quantities


@dataclass(frozen=True)
class HamiltonianValue:
    momentum: float     # P = integral q^2/2
    energy: float       # integral q H q'/2 - q^3/3
    h2: float           # integral (q')^2/2 - 3 q^2 H q'/4 + q^4/4
    mean: float         # integral q (the Casimir)
    geometry: str

    def __post_init__(self):
        for v in (self.momentum, self.energy, self.h2, self.mean):
            if not np.isfinite(v):
                raise ValueError("non-finite conserved quantity")
        if self.momentum < 0:
            raise ValueError("momentum must be nonnegative")


def polynomial_hamiltonians(q: RealField) -> HamiltonianValue:
    """Quadrature values of the polynomial conserved quantities.

    On the box the nonlocal-derivative terms use the line-consistent
    kernel, so the values approximate the line integrals at the rate set
    by the datum's tails.
    """
    geom = q.geometry
    qv = _padded(q).real
    hqp = line_nonlocal_derivative(q)
    qpv = _padded(derivative(q)).real
    p = 0.5 * quadrature_integral(geom, qv, qv)
    energy = 0.5 * quadrature_integral(geom, qv, hqp) - quadrature_integral(geom, qv, qv, qv) / 3.0
    h2 = (
        0.5 * quadrature_integral(geom, qpv, qpv)
        - 0.75 * quadrature_integral(geom, qv, qv, hqp)
        + 0.25 * quadrature_integral(geom, qv, qv, qv, qv)
    )
    return HamiltonianValue(p, energy, h2, geom.length * float(q.coeffs[0].real), geom.kind)


@dataclass(frozen=True)
class ExpansionFit:
    momentum: float
    energy: float
    h2: float
    residual: float
    coefficients: np.ndarray  # raw inverse-power coefficients A_1, A_2, ...


def beta_expansion_check(
    q: RealField,
    kappas,
    n_powers: int = 5,
    lax: "_lax.LaxMatrix | None" = None,
    line: bool | None = None,
) -> ExpansionFit:
    """Least-squares fit of beta against inverse powers of kappa.

    The first three coefficients encode the polynomial conserved
    quantities; extra powers absorb the truncation tail so the leading
    coefficients are unbiased.  On the circle the mean-dependent
    corrections are removed before reporting.
    """
    kappas = np.asarray(kappas, dtype=float)
    if kappas.size < 6:
        raise ValueError("need at least 6 kappa points")
    lax = _auto_lax(q, lax, line)
    vals = np.array([beta(q, k, lax=lax) for k in kappas])
    design = np.column_stack([kappas ** (-j) for j in range(1, n_powers + 1)])
    scale = np.linalg.norm(design, axis=0)
    if np.linalg.cond(design / scale) > 1e10:
        raise ValueError("kappa grid too narrow: expansion fit is ill-conditioned")
    coef, _, _, _ = np.linalg.lstsq(design / scale, vals, rcond=None)
    coef = coef / scale
    residual = float(np.linalg.norm(design @ coef - vals))

    a1, a2, a3 = coef[0], coef[1], coef[2]
    if q.geometry.kind == "circle":
        mu = mean(q) * q.geometry.length
        p = a1 - 0.5 * mu**2
        energy = -a2 + mu * p + mu**3 / 6.0
        h2 = a3  # mean corrections at this order are not tracked
    else:
        p, energy, h2 = a1, -a2, a3
    return ExpansionFit(float(p), float(energy), float(h2), residual, coef)


def h_kappa(
    q: RealField,
    kappa: float,
    lax: "_lax.LaxMatrix | None" = None,
    line: bool | None = None,
) -> float:
    """Regularized Hamiltonian; box uses the line form, circle its variant."""
    b = beta(q, kappa, lax=_auto_lax(q, lax, line))
    ham = polynomial_hamiltonians(q)
    if q.geometry.kind == "circle":
        mu = ham.mean
        return (kappa + mu) * ham.momentum - kappa**2 * b + 0.5 * kappa * mu**2 + mu**3 / 6.0
    return kappa * ham.momentum - kappa**2 * b


# ---------------------------------------------------------------------------
# functionals and Poisson brackets


class Momentum:
    name = "P"

    def value(self, q: RealField) -> float:
        return polynomial_hamiltonians(q).momentum

    def gradient(self, q: RealField) -> RealField:
        return q


class BOEnergy:
    name = "H_BO"

    def value(self, q: RealField) -> float:
        return polynomial_hamiltonians(q).energy

    def gradient(self, q: RealField) -> RealField:
        # H q' - q^2, with the symmetrized line-consistent kernel on the
        # box (the exact gradient of the corrected energy quadrature).
        geom = q.geometry
        qv = _padded(q).real
        vals = 0.5 * line_nonlocal_derivative(q) + 0.5 * line_nonlocal_transpose(
            geom, qv
        ) - qv**2
        return RealField.from_coeffs(geom, _from_padded_values(geom, vals.astype(complex), 2))


class BetaFunctional:
    def __init__(self, kappa: float, line: bool | None = None):
        self.kappa = kappa
        self.line = line
        self.name = f"beta({kappa:g})"

    def value(self, q: RealField) -> float:
        return beta(q, self.kappa, line=self.line)

    def gradient(self, q: RealField) -> RealField:
        return beta_gradient(q, self.kappa, line=self.line)


class HKappaFunctional:
    def __init__(self, kappa: float, line: bool | None = None):
        self.kappa = kappa
        self.line = line
        self.name = f"H_kappa({kappa:g})"

    def value(self, q: RealField) -> float:
        return h_kappa(q, self.kappa, line=self.line)

    def gradient(self, q: RealField) -> RealField:
        k = self.kappa
        gb = beta_gradient(q, k, line=self.line)
        if q.geometry.kind == "circle":
            ham = polynomial_hamiltonians(q)
            mu = ham.mean
            extra = ham.momentum + k * mu + 0.5 * mu**2
            c = (k + mu) * q.coeffs - k**2 * gb.coeffs
            c = c.copy()
            c[0] += extra
            return RealField.from_coeffs(q.geometry, c)
        return RealField.from_coeffs(q.geometry, k * q.coeffs - k**2 * gb.coeffs)


def poisson_bracket(f_func, g_func, q: RealField) -> float:
    """{F, G} = integral (dF/dq) (dG/dq)' dx via analytic gradients."""
    gf = f_func.gradient(q)
    gg = g_func.gradient(q)
    return float(inner(gf, derivative(gg)).real)


# ---------------------------------------------------------------------------
# the Miura-type transform


@dataclass(frozen=True)
class BockKruskalResult:
    w: RealField
    residual: float          # finite-box corrected defining-equation residual
    residual_raw: float      # literal line-form residual (carries the 1/L term)
    min_denominator: float   # min over the grid of kappa + w
    mu: HardyField           # multiplicative factor from the spectral log-split
    wiener_hopf_error: float  # ||mu - m|| / ||m||


def bock_kruskal(q: RealField, kappa: float) -> BockKruskalResult:
    """w = kappa*(|m|^2 + m + conj m) and its defining pointwise equation.

    The literal equation is a line identity; on a periodic box of length
    L it acquires the exactly-known constant 2(beta + int q)/L, which is
    removed in `residual` and retained in `residual_raw`.  The
    factorization 1 + w/kappa = (1+mu)(1+conj mu) is recovered by a
    spectral log-split and compared against the gauge field itself.
    """
    if q.geometry.kind != "box":
        raise GeometryError("the transform is implemented on the box (line surrogate)")
    geom = q.geometry
    # Periodic compression throughout: the defining equation, with its
    # finite-box constant, is then exact discrete algebra.
    gauge = _lax.gauge_m(q, kappa, lax=_lax.build_lax(q), check_series=False)
    b = beta(q, kappa, gauge=gauge)

    grad = beta_gradient(q, kappa, gauge=gauge)
    w = RealField.from_coeffs(geom, kappa * grad.coeffs)

    wv = _padded(w).real
    qv = _padded(q).real
    denom = kappa + wv
    min_den = float(denom.min())
    if min_den <= 0:
        raise RuntimeError("kappa + w is not positive; kappa too small")

    # All transforms act on the padded grid so the quotient's spectrum is
    # never truncated to the base band mid-computation.
    from .spectral import apply_symbol_padded

    wp = apply_symbol_padded(geom, wv, lambda xi: 1j * xi).real
    hwp = apply_symbol_padded(geom, wv, lambda xi: np.abs(xi)).real
    h_ratio = apply_symbol_padded(
        geom, wp / denom, lambda xi: -1j * np.sign(xi)
    ).real

    resid_vals = 2.0 * qv - hwp / denom - h_ratio - 2.0 * kappa * wv / denom
    const = 2.0 * (b + geom.length * mean(q)) / geom.length
    corrected = resid_vals + const * kappa / denom

    def _norm(vals: np.ndarray) -> float:
        return float(np.sqrt(geom.length * np.mean(vals**2)))

    # Wiener-Hopf split: log(1 + w/kappa) distributed half/half at mode 0.
    logf = RealField.from_coeffs(
        geom, _from_padded_values(geom, np.log1p(wv / kappa).astype(complex), 2)
    )
    hcount = geom.hardy_count
    hcoef = logf.coeffs[:hcount].copy()
    hcoef[0] *= 0.5
    hfield = HardyField(geom, hcoef)
    mu_vals = np.exp(hfield.values_padded(2)) - 1.0
    mu = HardyField.from_full(geom, _from_padded_values(geom, mu_vals, 2))
    gap = l2_norm(
        HardyField(geom, mu.coeffs - gauge.m.coeffs)
    ) / max(l2_norm(gauge.m), 1e-300)

    return BockKruskalResult(
        w, _norm(corrected), _norm(resid_vals), min_den, mu, float(gap)
    )


# ---------------------------------------------------------------------------
# renormalized trace series


@dataclass(frozen=True)
class AlphaDiagnostics:
    series: float       # sum_{l>=2} (1/l) tr{(R0 C_+ q)^l}
    beta_sum: float     # (1/L) sum_{xi >= 0} beta(kappa+xi)/(kappa+xi)
    difference: float
    series_terms: int
    sum_terms: int


def _pair_sums(h: float, a: float, b: float) -> float:
    """sum_{j>=0} 1/((a + h j)(b + h j)) in closed form."""
    if abs(a - b) < 1e-12 * max(a, b):
        return float(scipy.special.polygamma(1, a / h) / h**2)
    va = scipy.special.digamma(a / h)
    vb = scipy.special.digamma(b / h)
    return float((vb - va) / (h * (b - a)))


def perturbation_determinant_alpha(
    q: RealField,
    kappa: float,
    term_tol: float = 1e-14,
) -> AlphaDiagnostics:
    """Both evaluations of the renormalized log-determinant.

    The quadratic (l = 2) contribution is summed in closed form on both
    sides so that mode truncation cannot pollute the comparison; higher
    trace powers come from the dense matrix, and the higher-order part of
    the beta sum from explicit resolvent solves with a tail estimate.
    The two sides agree only to fourth order in the amplitude for
    mean-zero data; the residual is reported, not asserted.
    """
    _lax.require_admissible(q, kappa)
    geom = q.geometry
    lax = _lax.build_lax(q)
    mcount = lax.mode_count
    h = 2.0 * np.pi / geom.length

    # Quadratic parts, closed form over the full (untruncated) mode set.
    band = geom.dealias_limit
    ks = np.arange(-band, band + 1)
    qmod2 = np.abs(q.coeffs[ks]) ** 2
    t2 = 0.5 * sum(
        qmod2[i] * _pair_sums(h, kappa, kappa + abs(k) * h) for i, k in enumerate(ks)
    )
    quad_beta = geom.length * sum(
        abs(q.coeffs[k]) ** 2 * _pair_sums(h, kappa, kappa + k * h)
        for k in range(0, band + 1)
    )

    # Trace series, l >= 3, from dense matrix powers.  Termination waits
    # for two consecutive negligible terms: odd-power traces vanish
    # identically for single-mode data.
    weights = 1.0 / (lax.frequencies + kappa)
    toep = scipy.linalg.toeplitz(q.coeffs[:mcount], np.conj(q.coeffs[:mcount]))
    a_mat = toep * weights[None, :]
    power = a_mat @ a_mat
    series_high = 0.0
    terms = 2
    small_run = 0
    prev1 = prev2 = np.inf  # two-term history: odd traces can vanish identically
    for ell in range(3, 200):
        power = power @ a_mat
        t = power.trace().real / ell
        if abs(t) > max(prev1, prev2) and abs(t) > 100.0 * term_tol:
            raise RuntimeError("trace series is not contracting; kappa too small")
        prev2, prev1 = prev1, abs(t)
        series_high += t
        terms = ell
        small_run = small_run + 1 if abs(t) < term_tol else 0
        if small_run >= 2:
            break

    # Higher-order part of the beta sum: explicit solves, decay ~ xi^-4.
    rem_sum = 0.0
    sum_terms = 0
    last = 0.0
    for j in range(0, 100000):
        kk = kappa + h * j
        g = _lax.gauge_m(q, kk, lax=lax, check_series=False)
        b_full = beta(q, kk, gauge=g)
        b_quad = geom.length * float(
            np.sum(np.abs(q.coeffs[: mcount]) ** 2 / (lax.frequencies + kk))
        )
        last = (b_full - b_quad) / kk
        rem_sum += last
        sum_terms = j + 1
        if abs(last) < term_tol * max(1.0, abs(rem_sum)) or (
            j > 30 and abs(last) < 1e-17
        ):
            break
        if j == 400:
            # geometric-ish tail estimate for ~xi^-4 decay
            rem_sum += last * (kappa + h * j) / (3.0 * h)
            break
    rem_sum /= geom.length

    series = float(t2 + series_high)
    beta_side = float(quad_beta / geom.length + rem_sum)
    return AlphaDiagnostics(series, beta_side, series - beta_side, terms, sum_terms)


# ---------------------------------------------------------------------------
# covariance under scaling and boosts


@dataclass(frozen=True)
class Scale:
    lam: float


@dataclass(frozen=True)
class Galilei:
    c: float


@dataclass(frozen=True)
class CovarianceReport:
    transform: str
    kappas: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    max_rel_err: float


def symmetry_covariance(q: RealField, transform, kappas=None) -> CovarianceReport:
    """Check the exact covariance of beta under scaling (box) or boosts (circle)."""
    if isinstance(transform, Scale):
        if q.geometry.kind != "box":
            raise GeometryError("scaling covariance is a box (line) check")
        lam = transform.lam
        if lam <= 0:
            raise ValueError("scale factor must be positive")
        scaled_geom = Geometry("box", q.geometry.length / lam, q.geometry.n)
        q_lam = RealField.from_coeffs(scaled_geom, lam * q.coeffs)
        if kappas is None:
            kappas = np.array([4.0, 6.0, 9.0, 14.0])
        kappas = np.asarray(kappas, dtype=float)
        lhs = np.array([beta(q_lam, lam * k) for k in kappas])
        rhs = np.array([beta(q, k) for k in kappas])
        rel = np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)
        return CovarianceReport(f"scale({lam:g})", kappas, lhs, rhs, float(rel.max()))

    if isinstance(transform, Galilei):
        if q.geometry.kind != "circle":
            raise GeometryError("boost covariance is a circle check")
        c = transform.c
        if kappas is None:
            kappas = np.array([6.0, 8.0, 12.0, 18.0])
        kappas = np.asarray(kappas, dtype=float)
        boosted = RealField.from_coeffs(q.geometry, _shift_mean(q.coeffs, c))
        mu = mean(q)
        lhs = np.array([beta(boosted, k) + (mu + c) for k in kappas])
        rhs = np.array(
            [
                (k / (k - c)) ** 2 * (beta(q, k - c) + mu) + c * k / (k - c)
                for k in kappas
            ]
        )
        rel = np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)
        return CovarianceReport(f"galilei({c:g})", kappas, lhs, rhs, float(rel.max()))

    raise ValueError("transform must be Scale(lam) or Galilei(c)")


def _shift_mean(coeffs: np.ndarray, c: float) -> np.ndarray:
    out = coeffs.copy()
    out[0] += c
    return out


# ---------------------------------------------------------------------------
# spectral-calculus conservation and two-parameter identities (diagnostics)


def spectral_functional(q: RealField, func, k_eigs: int | None = None) -> float:
    """<q_+, F(L) q_+> through the eigendecomposition of the truncated operator."""
    lax = _lax.build_lax(q)
    vals, vecs = np.linalg.eigh(lax.matrix)
    proj = vecs.conj().T @ q.coeffs[: lax.mode_count]
    return float(q.geometry.length * np.sum(func(vals) * np.abs(proj) ** 2))


def coupled_identity_values(q: RealField, kappa: float, varkappa: float) -> dict:
    """Numerator/denominator pairs for the two-parameter resolvent identities.

    Uses the plain periodic compression, for which these are exact
    discrete identities.
    """
    lax = _lax.build_lax(q)
    gm = _lax.gauge_m(q, kappa, lax=lax, check_series=False)
    gn = _lax.gauge_m(q, varkappa, lax=lax, check_series=False)
    b_k = beta(q, kappa, gauge=gm)
    b_v = beta(q, varkappa, gauge=gn)
    cross = inner(gm.m, gn.m)
    out = {
        "cross": complex(cross),
        "ratio": -(b_k - b_v) / (kappa - varkappa),
        "beta_k": b_k,
        "beta_v": b_v,
    }
    if q.geometry.kind == "circle":
        out["int_m"] = complex(q.geometry.length * gm.m.coeffs[0])
        out["mean_q"] = mean(q) * q.geometry.length
    return out


def gauge_pair_identity(q: RealField, kappa: float, varkappa: float) -> dict:
    """Pointwise two-parameter gauge identity.

    With m at kappa and n at varkappa, the combination

      H(m nbar + m + nbar)' + i(m+1) nbar' - i m'(nbar+1)
        - 2q(m+1)(nbar+1) + i(kappa-varkappa) H(m nbar + m + nbar)
        + (kappa+varkappa)(m nbar + m + nbar)

    vanishes identically on the line and is the constant
    varkappa*mean(m) + kappa*mean(conj n) on a periodic domain (exactly
    the circle value varkappa*int m + kappa*int conj n at period 1).
    Returns the constancy statistics of the evaluated field.
    """
    from .spectral import apply_symbol_padded

    geom = q.geometry
    lax = _lax.build_lax(q)
    gm = _lax.gauge_m(q, kappa, lax=lax, check_series=False)
    gn = _lax.gauge_m(q, varkappa, lax=lax, check_series=False)
    mv = _padded(gm.density)
    nbar = np.conj(_padded(gn.density))
    qv = _padded(q).real

    u = mv * nbar + mv + nbar
    hu = apply_symbol_padded(geom, u, lambda xi: -1j * np.sign(xi))
    hup = apply_symbol_padded(geom, u, lambda xi: np.sign(xi) * xi)
    mp = _padded(derivative(gm.density))
    nbarp = np.conj(_padded(derivative(gn.density)))

    field = (
        hup
        + 1j * (mv + 1.0) * nbarp
        - 1j * mp * (nbar + 1.0)
        - 2.0 * qv * (mv + 1.0) * (nbar + 1.0)
        + 1j * (kappa - varkappa) * hu
        + (kappa + varkappa) * u
    )
    expected = varkappa * complex(gm.density.coeffs[0]) + kappa * np.conj(
        complex(gn.density.coeffs[0])
    )
    return {
        "mean": complex(field.mean()),
        "std": float(np.sqrt(np.mean(np.abs(field - field.mean()) ** 2))),
        "expected_constant": complex(expected),
        "max_abs": float(np.abs(field).max()),
    }


def hs_norm_ratio(q: RealField, kappa: float, s: float = -0.25, xi_max: float | None = None) -> float:
    """Measured ratio of the kappa-integral of x^{2s} beta(x) to ||q||^2_{H^s_kappa}.

    Reported without a pass/fail bound; the comparison constant in the
    two-sided estimate is not constructive.
    """
    lax = _lax.build_lax(q)
    if xi_max is None:
        xi_max = 60.0 * kappa
    grid = np.geomspace(kappa, xi_max, 120)
    vals = np.array([beta(q, x, lax=lax) * x ** (2 * s) for x in grid])
    integ = float(np.trapezoid(vals, grid))
    nrm = sobolev_norm(q, NormSpec(s, kappa)) ** 2
    return integ / nrm
