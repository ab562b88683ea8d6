"""Scalar and matrix-valued rational functions, contours, circle quadrature.

Rational scalars are stored in factored form (zeros, poles, overall scale),
which keeps pole data exact under products and inversion; coefficient forms
are derived on demand for sums, fits and determinants.  Contours are unions
of disjoint circles and all contour integrals use the trapezoidal rule,
which converges geometrically for integrands analytic in an annulus around
each circle.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import (
    DegreeTooLow,
    IllConditioned,
    NearPole,
    NonCongruentViolation,
    NotConverged,
    NotRegular,
    SingularFamily,
)

CANCEL_TOL = 1e-9      # zero/pole cancellation
CLUSTER_TOL = 1e-7     # merging of nearly equal fitted poles
EVAL_TOL = 1e-10       # minimum distance from a pole at evaluation time


# ----------------------------------------------------------------------------
# small polynomial helpers (ascending coefficient order)
# ----------------------------------------------------------------------------

def poly_trim(c, tol=0.0):
    c = np.atleast_1d(np.asarray(c, dtype=complex))
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        return np.zeros(1, dtype=complex)
    keep = len(c)
    while keep > 1 and abs(c[keep - 1]) <= tol * scale:
        keep -= 1
    return c[:keep].copy()


def poly_from_roots(roots):
    roots = np.asarray(roots, dtype=complex)
    if roots.size == 0:
        return np.ones(1, dtype=complex)
    return P.polyfromroots(roots)


def poly_interp_circle(values, radius, degree, center=0.0):
    """Coefficients of the polynomial of given degree from equispaced
    samples on the circle |u - center| = radius (values[s] = p(node_s),
    len(values) >= degree+1 nodes, len a power of anything; plain DFT)."""
    m = len(values)
    s = np.arange(m)
    w = np.exp(-2j * np.pi * np.outer(np.arange(degree + 1), s) / m)
    local = (w @ np.asarray(values, dtype=complex)) / m
    local /= radius ** np.arange(degree + 1)
    if center == 0.0:
        return poly_trim(local, 1e-13)
    out = np.zeros(1, dtype=complex)
    shift = np.array([-center, 1.0], dtype=complex)
    power = np.ones(1, dtype=complex)
    for a in local:
        out = P.polyadd(out, a * power)
        power = P.polymul(power, shift)
    return poly_trim(out, 1e-13)


def circle_nodes(center, radius, count):
    theta = 2.0 * np.pi * np.arange(count) / count
    return center + radius * np.exp(1j * theta)


def cluster_points(points, tol=CLUSTER_TOL):
    """Greedy clustering; returns list of (centroid, multiplicity)."""
    pts = list(np.asarray(points, dtype=complex))
    clusters = []
    for p in pts:
        for k, (c, m) in enumerate(clusters):
            if abs(p - c) <= tol:
                clusters[k] = ((c * m + p) / (m + 1), m + 1)
                break
        else:
            clusters.append((p, 1))
    return clusters


def _cluster_centroid(roots, tol):
    """Replace members of each root cluster by the cluster centroid.

    Multiple roots split symmetrically under rounding (a double root of a
    degree-n polynomial moves by ~eps^(1/2)); the centroid recovers them
    to ~eps, so downstream cancellation stays sharp.
    """
    roots = np.asarray(roots, dtype=complex)
    out = roots.copy()
    used = np.zeros(len(roots), dtype=bool)
    for i in range(len(roots)):
        if used[i]:
            continue
        group = [i]
        for j in range(i + 1, len(roots)):
            if not used[j] and abs(roots[j] - roots[i]) <= tol:
                group.append(j)
        if len(group) > 1:
            c = np.mean(roots[group])
            for j in group:
                out[j] = c
                used[j] = True
    return out


def _cancel_pairs(zeros, poles, tol):
    zeros = list(zeros)
    poles = list(poles)
    i = 0
    while i < len(zeros):
        hit = -1
        best = tol
        for j, q in enumerate(poles):
            d = abs(zeros[i] - q)
            if d <= best:
                best = d
                hit = j
        if hit >= 0:
            zeros.pop(i)
            poles.pop(hit)
        else:
            i += 1
    return np.asarray(zeros, dtype=complex), np.asarray(poles, dtype=complex)


# ----------------------------------------------------------------------------
# RationalScalar
# ----------------------------------------------------------------------------

class RationalScalar:
    """scale * prod(u - zeros) / prod(u - poles)."""

    __slots__ = ("zeros", "poles", "scale")

    def __init__(self, zeros=(), poles=(), scale=1.0, cancel=True):
        z = np.asarray(list(zeros), dtype=complex)
        p = np.asarray(list(poles), dtype=complex)
        if cancel and z.size and p.size:
            z, p = _cancel_pairs(z, p, CANCEL_TOL)
        self.zeros = z
        self.poles = p
        self.scale = complex(scale)
        if self.scale == 0.0:
            self.zeros = np.zeros(0, dtype=complex)
            self.poles = np.zeros(0, dtype=complex)

    @classmethod
    def zero(cls):
        return cls((), (), 0.0)

    @classmethod
    def const(cls, c):
        return cls((), (), c)

    @classmethod
    def from_coeffs(cls, num, den, cancel_tol=CANCEL_TOL):
        num = poly_trim(num, 1e-13)
        den = poly_trim(den, 1e-13)
        if np.max(np.abs(num)) == 0.0:
            return cls.zero()
        zeros = P.polyroots(num) if len(num) > 1 else np.zeros(0, complex)
        poles = P.polyroots(den) if len(den) > 1 else np.zeros(0, complex)
        scale = num[-1] / den[-1]
        # double roots of a coefficient-noisy polynomial split by
        # ~sqrt(eps) ~ 1e-7; centroid them back before cancellation
        zeros = _cluster_centroid(zeros, max(cancel_tol, 5e-7))
        poles = _cluster_centroid(poles, max(cancel_tol, 5e-7))
        z, p = _cancel_pairs(zeros, poles, cancel_tol)
        return cls(z, p, scale, cancel=False)

    @property
    def is_zero(self):
        return self.scale == 0.0

    def __call__(self, u):
        u = np.asarray(u, dtype=complex)
        val = np.full(u.shape, self.scale, dtype=complex)
        for z in self.zeros:
            val = val * (u - z)
        for p in self.poles:
            val = val / (u - p)
        return val if val.shape else complex(val)

    def coeffs(self):
        """(numerator, denominator) with monic denominator."""
        if self.is_zero:
            return np.zeros(1, complex), np.ones(1, complex)
        return self.scale * poly_from_roots(self.zeros), poly_from_roots(self.poles)

    def value_at_infinity(self):
        d = len(self.zeros) - len(self.poles)
        if d > 0:
            raise NotRegular("pole at infinity")
        return self.scale if d == 0 else 0.0 + 0.0j

    def __mul__(self, other):
        if isinstance(other, RationalScalar):
            if self.is_zero or other.is_zero:
                return RationalScalar.zero()
            return RationalScalar(
                np.concatenate([self.zeros, other.zeros]),
                np.concatenate([self.poles, other.poles]),
                self.scale * other.scale,
            )
        return RationalScalar(self.zeros, self.poles, self.scale * complex(other),
                              cancel=False)

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, RationalScalar):
            other = RationalScalar.const(other)
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        # common denominator as an exact pole multiset union; only the
        # numerator is re-rooted, so pole multiplicities never smear
        union = _multiset_union(self.poles, other.poles)
        n1 = self.scale * poly_from_roots(self.zeros)
        n2 = other.scale * poly_from_roots(other.zeros)
        c1 = poly_from_roots(_multiset_difference(union, self.poles))
        c2 = poly_from_roots(_multiset_difference(union, other.poles))
        num = poly_trim(P.polyadd(P.polymul(n1, c1), P.polymul(n2, c2)), 1e-14)
        if np.max(np.abs(num)) == 0.0:
            return RationalScalar.zero()
        zeros = P.polyroots(num) if len(num) > 1 else np.zeros(0, complex)
        zeros = _cluster_centroid(zeros, 5e-7)
        z, p = _cancel_pairs(zeros, list(union), CANCEL_TOL)
        return RationalScalar(z, p, num[-1], cancel=False)

    def __neg__(self):
        return RationalScalar(self.zeros, self.poles, -self.scale, cancel=False)

    def __sub__(self, other):
        if not isinstance(other, RationalScalar):
            other = RationalScalar.const(other)
        return self + (-other)

    def reciprocal(self):
        if self.is_zero:
            raise SingularFamily("reciprocal of the zero function")
        return RationalScalar(self.poles, self.zeros, 1.0 / self.scale, cancel=False)

    def translate(self, a):
        """f(u) -> f(u - a): zeros and poles move by +a."""
        return RationalScalar(self.zeros + a, self.poles + a, self.scale, cancel=False)

    def dilate(self, alpha):
        """f(z) -> f(z / alpha): zeros and poles scale by alpha."""
        alpha = complex(alpha)
        k = len(self.poles) - len(self.zeros)
        return RationalScalar(self.zeros * alpha, self.poles * alpha,
                              self.scale * alpha ** k, cancel=False)

    def to_json(self):
        return {
            "zeros": [{"re": z.real, "im": z.imag} for z in self.zeros],
            "poles": [{"re": p.real, "im": p.imag} for p in self.poles],
            "scale": {"re": self.scale.real, "im": self.scale.imag},
        }

    @classmethod
    def from_json(cls, obj):
        unpack = lambda lst: [complex(c["re"], c["im"]) for c in lst]
        sc = complex(obj["scale"]["re"], obj["scale"]["im"])
        return cls(unpack(obj["zeros"]), unpack(obj["poles"]), sc, cancel=False)


# ----------------------------------------------------------------------------
# RationalMatrix
# ----------------------------------------------------------------------------

class RationalMatrix:
    """Matrix of RationalScalar entries in one complex variable."""

    # keep numpy from intercepting ndarray @ RationalMatrix
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, entries):
        self.entries = [list(row) for row in entries]
        self.dim_out = len(self.entries)
        self.dim_in = len(self.entries[0]) if self.dim_out else 0

    # -- constructors ---------------------------------------------------------

    @classmethod
    def identity(cls, dim):
        return cls([[RationalScalar.const(1.0 if i == j else 0.0)
                     for j in range(dim)] for i in range(dim)])

    @classmethod
    def zeros(cls, dim_out, dim_in):
        return cls([[RationalScalar.zero() for _ in range(dim_in)]
                    for _ in range(dim_out)])

    @classmethod
    def from_scalar(cls, rs):
        return cls([[rs]])

    @classmethod
    def constant(cls, mat):
        mat = np.asarray(mat, dtype=complex)
        return cls([[RationalScalar.const(mat[i, j]) for j in range(mat.shape[1])]
                    for i in range(mat.shape[0])])

    @classmethod
    def diag(cls, scalars):
        n = len(scalars)
        out = cls.zeros(n, n)
        for i, s in enumerate(scalars):
            out.entries[i][i] = s
        return out

    @classmethod
    def block_diag(cls, blocks):
        rows = sum(b.dim_out for b in blocks)
        cols = sum(b.dim_in for b in blocks)
        out = cls.zeros(rows, cols)
        r = c = 0
        for b in blocks:
            for i in range(b.dim_out):
                for j in range(b.dim_in):
                    out.entries[r + i][c + j] = b.entries[i][j]
            r += b.dim_out
            c += b.dim_in
        return out

    # -- evaluation -----------------------------------------------------------

    def __call__(self, u):
        u = np.asarray(u, dtype=complex)
        out = np.empty(u.shape + (self.dim_out, self.dim_in), dtype=complex)
        for i in range(self.dim_out):
            for j in range(self.dim_in):
                out[..., i, j] = self.entries[i][j](u)
        return out

    @property
    def is_square(self):
        return self.dim_out == self.dim_in

    def pole_list(self):
        """All entry poles, with per-entry multiplicity collapsed to the max."""
        per_entry = []
        for row in self.entries:
            for e in row:
                per_entry.append(cluster_points(e.poles, CANCEL_TOL))
        merged = []
        for clusters in per_entry:
            for (c, m) in clusters:
                for k, (c0, m0) in enumerate(merged):
                    if abs(c - c0) <= CLUSTER_TOL:
                        merged[k] = (c0, max(m0, m))
                        break
                else:
                    merged.append((c, m))
        return merged

    def pole_set(self, tol=CLUSTER_TOL):
        return [c for c, _ in self.pole_list()]

    def common_denominator(self):
        """(numcoeffs[dim_out][dim_in], dencoeffs) with monic denominator."""
        dens = self.pole_list()
        den = poly_from_roots(np.concatenate(
            [np.full(m, c) for c, m in dens]) if dens else [])
        num = [[None] * self.dim_in for _ in range(self.dim_out)]
        for i in range(self.dim_out):
            for j in range(self.dim_in):
                e = self.entries[i][j]
                extra = _multiset_difference([c for c, m in dens for _ in range(m)],
                                             list(e.poles))
                base = (e.scale * poly_from_roots(e.zeros)) if not e.is_zero \
                    else np.zeros(1, complex)
                num[i][j] = poly_trim(P.polymul(base, poly_from_roots(extra)), 1e-14)
        return num, den

    def max_degree(self):
        num, den = self.common_denominator()
        d = len(den) - 1
        for row in num:
            for c in row:
                d = max(d, len(c) - 1)
        return d

    # -- algebra ---------------------------------------------------------------

    def __matmul__(self, other):
        if isinstance(other, np.ndarray):
            other = RationalMatrix.constant(other)
        out = RationalMatrix.zeros(self.dim_out, other.dim_in)
        for i in range(self.dim_out):
            for j in range(other.dim_in):
                acc = RationalScalar.zero()
                for k in range(self.dim_in):
                    a = self.entries[i][k]
                    b = other.entries[k][j]
                    if a.is_zero or b.is_zero:
                        continue
                    acc = acc + a * b
                out.entries[i][j] = acc
        return out

    def __rmatmul__(self, mat):
        return RationalMatrix.constant(mat) @ self

    def __add__(self, other):
        out = RationalMatrix.zeros(self.dim_out, self.dim_in)
        for i in range(self.dim_out):
            for j in range(self.dim_in):
                out.entries[i][j] = self.entries[i][j] + other.entries[i][j]
        return out

    def __sub__(self, other):
        out = RationalMatrix.zeros(self.dim_out, self.dim_in)
        for i in range(self.dim_out):
            for j in range(self.dim_in):
                out.entries[i][j] = self.entries[i][j] - other.entries[i][j]
        return out

    def scalar_mul(self, c):
        out = RationalMatrix.zeros(self.dim_out, self.dim_in)
        for i in range(self.dim_out):
            for j in range(self.dim_in):
                out.entries[i][j] = self.entries[i][j] * c
        return out

    def conjugate_by(self, V):
        """V^{-1} R V for a constant matrix V."""
        Vi = np.linalg.inv(V)
        return (Vi @ self) @ V

    def translate(self, a):
        return RationalMatrix([[e.translate(a) for e in row] for row in self.entries])

    def dilate(self, alpha):
        return RationalMatrix([[e.dilate(alpha) for e in row] for row in self.entries])

    def transpose(self):
        return RationalMatrix([[self.entries[i][j] for i in range(self.dim_out)]
                               for j in range(self.dim_in)])

    def value_at_infinity(self):
        out = np.empty((self.dim_out, self.dim_in), dtype=complex)
        for i in range(self.dim_out):
            for j in range(self.dim_in):
                out[i, j] = self.entries[i][j].value_at_infinity()
        return out

    def norm_at(self, u):
        return np.max(np.abs(self(u)))

    def to_json(self):
        return {
            "dim_out": self.dim_out,
            "dim_in": self.dim_in,
            "entries": [[e.to_json() for e in row] for row in self.entries],
        }

    @classmethod
    def from_json(cls, obj):
        return cls([[RationalScalar.from_json(e) for e in row]
                    for row in obj["entries"]])


def _multiset_union(a, b, tol=CLUSTER_TOL):
    """Pole-multiset lcm: per cluster, the larger of the two multiplicities."""
    out = list(a)
    avail = list(a)
    for q in b:
        best, hit = tol, -1
        for k, p in enumerate(avail):
            if abs(p - q) <= best:
                best, hit = abs(p - q), k
        if hit >= 0:
            avail.pop(hit)
        else:
            out.append(q)
    return np.asarray(out, dtype=complex)


def _multiset_difference(big, small, tol=CLUSTER_TOL):
    out = list(big)
    for s in small:
        best, hit = tol, -1
        for k, b in enumerate(out):
            if abs(b - s) <= best:
                best, hit = abs(b - s), k
        if hit >= 0:
            out.pop(hit)
    return np.asarray(out, dtype=complex)


# ----------------------------------------------------------------------------
# operations of the module surface
# ----------------------------------------------------------------------------

def rf_eval(R, u, guard=EVAL_TOL):
    """Entrywise evaluation with a proximity guard around the pole set."""
    u = complex(u)
    for p in R.pole_set():
        if abs(u - p) <= guard:
            raise NearPole(f"evaluation point {u} within {guard} of pole {p}")
    return R(u)


def rm_inverse(R):
    """Inverse of a square RationalMatrix by sampling and rational fitting.

    Pointwise inverses are exact where det != 0, so fitting them recovers
    the rational inverse with simple fitted roots; the fit degree starts at
    dim * (max numerator degree) and is reduced automatically.
    """
    if not R.is_square:
        raise SingularFamily("inverse of a non-square matrix")
    dim = R.dim_out
    num, _den = R.common_denominator()
    g = max(len(c) - 1 for row in num for c in row)
    det_deg = max(dim * g, 1)
    radius = 1.0 + max([abs(p) for p in R.pole_set()] + [1.0])
    m = max(4 * (2 * det_deg + 1), 24)
    nodes = np.concatenate([circle_nodes(0.0, radius, m),
                            circle_nodes(0.0, 0.43 * radius, m)])
    vals = R(nodes)
    dets = np.linalg.det(vals)
    scale = max(np.max(np.abs(vals)), 1e-300)
    if np.max(np.abs(dets)) <= 1e-12 * scale ** dim:
        raise SingularFamily("determinant vanishes identically on samples")
    keep = np.abs(dets) > 1e-8 * np.median(np.abs(dets))
    inv = np.linalg.inv(vals[keep])
    try:
        grow = 0 if abs(np.linalg.det(R.value_at_infinity())) > 1e-10 else dim
    except NotRegular:
        grow = dim
    samples = list(zip(nodes[keep], inv))
    return rf_fit(samples, det_deg + grow, det_deg, residual_max=1e-6)


def taylor_at(R, point, k):
    """First k Taylor coefficients of R at infinity or at zero.

    point: "inf" expands in powers of 1/u; 0 (or "zero") in powers of u.
    """
    poles = np.asarray(R.pole_set(), dtype=complex)
    at_inf = isinstance(point, str) and point.lower() in ("inf", "infinity")
    if not at_inf and point not in (0, "zero", "0"):
        raise NotRegular("expansion point must be infinity or zero")
    if at_inf:
        for row in R.entries:
            for e in row:
                if len(e.zeros) > len(e.poles):
                    raise NotRegular("pole at infinity")
        rmax = np.max(np.abs(poles)) if poles.size else 0.5
        radius = 2.0 * max(rmax, 0.5)
        sample = lambda u: R(u)
    else:
        if poles.size and np.min(np.abs(poles)) < 10 * EVAL_TOL:
            raise NotRegular("pole at zero")
        rmin = np.min(np.abs(poles)) if poles.size else 2.0
        radius = 0.5 * rmin
        sample = lambda u: R(u)
    m = max(64, 4 * k)
    nodes = circle_nodes(0.0, radius, m)
    vals = sample(nodes)
    s = np.arange(m)
    coeffs = []
    for j in range(k):
        w = np.exp(2j * np.pi * j * s / m) if at_inf else np.exp(-2j * np.pi * j * s / m)
        c = (vals * w[:, None, None]).sum(axis=0) / m
        coeffs.append(c * radius ** (j if at_inf else -j))
    return coeffs


# ----------------------------------------------------------------------------
# contours
# ----------------------------------------------------------------------------

@dataclass
class JordanCurve:
    """Disjoint union of circles (center, radius), traversed counterclockwise."""
    components: list
    node_count: int = 256
    margin: float = field(default=np.inf)

    def contains(self, p):
        return any(abs(p - c) < r for c, r in self.components)

    def nodes_and_weights(self, node_count=None):
        """Nodes u_s and weights w_s with (1/2pi i) oint f du = sum_s w_s f(u_s)."""
        m = node_count or self.node_count
        nodes, weights = [], []
        for c, r in self.components:
            theta = 2.0 * np.pi * np.arange(m) / m
            e = np.exp(1j * theta)
            nodes.append(c + r * e)
            weights.append(r * e / m)
        return np.concatenate(nodes), np.concatenate(weights)

    def scaled(self, factor):
        return JordanCurve([(c, r * factor) for c, r in self.components],
                           self.node_count, self.margin)


def build_contour(include, exclude, n_trunc=None, node_count=256,
                  radius_cap=0.25, min_margin=1e-6):
    """Disks covering `include`, staying clear of every nonzero integer
    translate of `exclude`.

    Raises NonCongruentViolation when an include point sits within
    min_margin of a translate, i.e. when the data is congruent mod Z.
    """
    include = [complex(p) for p in include]
    exclude = [complex(p) for p in exclude]
    if not include:
        return JordanCurve([], node_count, margin=np.inf)
    if n_trunc is None:
        spread = max(abs(p - q) for p in include for q in include + exclude) \
            if (include and (include or exclude)) else 0.0
        n_trunc = int(np.ceil(spread)) + 2
    translates = [q + n for q in exclude
                  for n in range(-n_trunc, n_trunc + 1) if n != 0]
    sep = np.inf
    for p in include:
        for t in translates:
            sep = min(sep, abs(p - t))
    if sep <= min_margin:
        raise NonCongruentViolation(
            f"include point within {sep:.2e} of an integer translate")

    base = min(radius_cap, sep / 4.0)
    clusters = [[p] for p in include]
    merged = True
    while merged:
        merged = False
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                ci, ri = _enclosing_disk(clusters[i], base)
                cj, rj = _enclosing_disk(clusters[j], base)
                if abs(ci - cj) < ri + rj + base / 2:
                    clusters[i] = clusters[i] + clusters.pop(j)
                    merged = True
                    break
            if merged:
                break
    disks = [_enclosing_disk(c, base) for c in clusters]
    margin = np.inf
    for c, r in disks:
        for t in translates:
            margin = min(margin, abs(t - c) - r)
    if margin <= min_margin:
        raise NonCongruentViolation(
            f"contour margin {margin:.2e} below {min_margin:.0e}")
    return JordanCurve(disks, node_count, margin=margin)


def _enclosing_disk(points, base_radius):
    c = np.mean(points)
    r = max(abs(p - c) for p in points) + base_radius
    return complex(c), float(r)


def quad_contour(f, curve, node_count=None, check_tol=None):
    """(1/2pi i) times the contour integral of f along the curve.

    f maps a complex point to a scalar or ndarray.  With check_tol set,
    the node count is doubled once and NotConverged is raised if the
    result moves by more than check_tol.
    """
    if not curve.components:
        probe = np.asarray(f(0.0 + 0.0j))
        return np.zeros_like(probe, dtype=complex)

    def run(m):
        nodes, weights = curve.nodes_and_weights(m)
        acc = None
        for u, w in zip(nodes, weights):
            term = w * np.asarray(f(u), dtype=complex)
            acc = term if acc is None else acc + term
        return acc

    m = node_count or curve.node_count
    out = run(m)
    if check_tol is not None:
        out2 = run(2 * m)
        if np.max(np.abs(out2 - out)) > check_tol:
            raise NotConverged("node doubling moved the integral by "
                               f"{np.max(np.abs(out2 - out)):.2e}")
        out = out2
    return out


def quad_contour_batched(values_fn, curve, node_count=None):
    """Like quad_contour but values_fn takes the whole node array at once
    and returns an array with the node axis first."""
    if not curve.components:
        return None
    nodes, weights = curve.nodes_and_weights(node_count)
    vals = values_fn(nodes)
    shape = (len(nodes),) + (1,) * (vals.ndim - 1)
    return (vals * weights.reshape(shape)).sum(axis=0)


# ----------------------------------------------------------------------------
# rational fitting
# ----------------------------------------------------------------------------

def rf_fit(samples, deg_num, deg_den, cond_max=1e12, residual_ok=1e-8,
           residual_max=1e-6, num_factor=None):
    """Least-squares rational fit with a common scalar denominator.

    samples: list of (z, matrix) pairs.  num_factor, when given, is a
    polynomial (ascending coeffs) dividing every numerator entry, e.g.
    (0, 1) to force vanishing at z = 0.  Returns a RationalMatrix; raises
    DegreeTooLow when the residual stays above residual_max.
    """
    zs = np.array([z for z, _ in samples], dtype=complex)
    mats = np.array([np.atleast_2d(m) for _, m in samples], dtype=complex)
    n_s, dout, din = mats.shape
    if num_factor is not None:
        fac = np.asarray(num_factor, dtype=complex)
        fvals = P.polyval(zs, fac)
        deg_eff = deg_num - (len(fac) - 1)
        if deg_eff < 0:
            raise DegreeTooLow("numerator factor exceeds requested degree")
    else:
        fac = None
        fvals = np.ones_like(zs)
        deg_eff = deg_num
    if n_s < (deg_eff + 1) + (deg_den + 1):
        raise DegreeTooLow("not enough samples for the requested degrees")

    rho = np.exp(np.mean(np.log(np.abs(zs) + 1e-300)))
    zn = zs / rho
    scale = max(np.max(np.abs(mats)), 1e-300)
    vand_n = zn[:, None] ** np.arange(deg_eff + 1)
    vand_d = zn[:, None] ** np.arange(deg_den + 1)

    n_unknown_num = (deg_eff + 1) * dout * din
    ncols = n_unknown_num + (deg_den + 1)
    rows = np.zeros((n_s * dout * din, ncols), dtype=complex)
    r = 0
    for i in range(dout):
        for j in range(din):
            base = (i * din + j) * (deg_eff + 1)
            rows[r:r + n_s, base:base + deg_eff + 1] = vand_n * fvals[:, None]
            rows[r:r + n_s, n_unknown_num:] = -mats[:, i, j][:, None] * vand_d / scale
            r += n_s

    u_svd, s_svd, vh = np.linalg.svd(rows, full_matrices=False)
    tol_rank = max(rows.shape) * np.finfo(float).eps * s_svd[0]
    nullity = int(np.sum(s_svd <= max(tol_rank, 1e-13 * s_svd[0])))
    if nullity > 1:
        # common-factor ambiguity: reduce the degrees and retry
        drop = nullity - 1
        if deg_den - drop < 0 or deg_eff - drop < 0:
            raise IllConditioned("degenerate fit system")
        return rf_fit(samples, deg_num - drop, deg_den - drop,
                      cond_max, residual_ok, residual_max, num_factor)
    if nullity == 0 and s_svd[-1] > 0 and s_svd[0] / s_svd[-1] > cond_max \
            and s_svd[-1] / s_svd[0] > 1e-8:
        raise IllConditioned(f"fit condition number {s_svd[0]/s_svd[-1]:.2e}")

    sol = vh[-1].conj()
    den_n = sol[n_unknown_num:]
    if np.max(np.abs(den_n)) < 1e-13:
        raise IllConditioned("vanishing denominator in fit")
    # undo sample scaling: coefficients in original variable z
    powers_n = rho ** (-np.arange(deg_eff + 1))
    powers_d = rho ** (-np.arange(deg_den + 1))
    den = poly_trim(den_n * powers_d, 1e-12)
    entries = []
    for i in range(dout):
        row = []
        for j in range(din):
            base = (i * din + j) * (deg_eff + 1)
            num = sol[base:base + deg_eff + 1] * powers_n * scale
            if fac is not None:
                num = P.polymul(poly_trim(num, 1e-13), fac)
            row.append(RationalScalar.from_coeffs(num, den,
                                                  cancel_tol=CLUSTER_TOL))
        entries.append(row)
    fit = RationalMatrix(entries)
    resid = max(np.max(np.abs(fit(z) - np.atleast_2d(m))) for z, m in samples)
    resid /= scale
    if resid > residual_max:
        raise DegreeTooLow(f"fit residual {resid:.2e} exceeds {residual_max:.0e}")
    fit.fit_residual = resid
    fit.fit_ok = resid < residual_ok
    return fit


def rf_fit_scalar(samples, deg_num, deg_den, **kw):
    mat_samples = [(z, np.array([[v]])) for z, v in samples]
    out = rf_fit(mat_samples, deg_num, deg_den, **kw)
    return out.entries[0][0]


# ----------------------------------------------------------------------------
# Cauchy derivatives
# ----------------------------------------------------------------------------

def cauchy_derivatives(f, u, order, radius, nodes=64):
    """[f(u), f'(u), ..., f^(order)(u)] for f analytic on |w-u| <= radius."""
    pts = circle_nodes(u, radius, nodes)
    vals = np.array([f(w) for w in pts], dtype=complex)
    s = np.arange(nodes)
    out = []
    for m in range(order + 1):
        w = np.exp(-2j * np.pi * m * s / nodes)
        cm = (vals * w).sum() / nodes / radius ** m
        out.append(cm * np.prod(np.arange(1, m + 1)))
    return out
