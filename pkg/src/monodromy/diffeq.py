"""Additive difference equations phi(u+1) = A(u) phi(u) with rational A.

Provides the formal solution at infinity, the canonical fundamental
solutions phi+/phi- (holomorphic and invertible in right/left half-planes,
asymptotic to the formal solution times (+-u)^{A0}), the 1-periodic
connection matrix S = (phi+)^{-1} phi- as a rational function of
z = exp(2 pi i u), and the inverse problem: reconstructing A from S in the
abelian case, split into semisimple and unipotent factorizations.

Numerically, phi-(u) is evaluated as the finite product
A(u-1)...A(u-N) times the asymptotic tail Upsilon(u-N) (-(u-N))^{A0};
the tail accelerates the raw product from O(1/N) to O(N^{-k-1}) accuracy,
with k the number of formal-series coefficients retained.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.linalg import expm, solve_sylvester

from . import ratmat
from .errors import (
    ClusterAmbiguity,
    ConsistencyViolation,
    FitResidualTooLarge,
    NonCongruentPi,
    NotCommuting,
    NotUnipotent,
    PeriodicityViolation,
    PoleHit,
    PreconditionViolation,
    RelationViolation,
    ResonantSystem,
    SingularFamily,
    TruncationInsufficient,
)
from .ratmat import (
    RationalMatrix,
    RationalScalar,
    circle_nodes,
    cluster_points,
    poly_interp_circle,
    poly_from_roots,
    quad_contour,
    rf_fit,
)
from .specfun import EULER_GAMMA

TWO_PI_I = 2j * np.pi


# ----------------------------------------------------------------------------
# DifferenceSystem
# ----------------------------------------------------------------------------

@dataclass
class DifferenceSystem:
    """Rational coefficient matrix A(u) = 1 + A0/u + ... with metadata."""

    A: RationalMatrix
    abelian: bool = True
    A0: np.ndarray = None
    nonresonance: dict = None

    def __post_init__(self):
        head = ratmat.taylor_at(self.A, "inf", 2)
        if np.max(np.abs(head[0] - np.eye(self.A.dim_out))) > 1e-8:
            raise PreconditionViolation("A(infinity) != 1")
        if self.A0 is None:
            self.A0 = head[1]
        if self.abelian:
            rng = np.random.default_rng(7)
            scale = 1.0
            worst = 0.0
            for _ in range(20):
                u, v = rng.normal(size=2) * 2 + 1j * rng.normal(size=2)
                Au, Av = self._safe_eval(u), self._safe_eval(v)
                scale = max(scale, np.max(np.abs(Au)))
                worst = max(worst, np.max(np.abs(Au @ Av - Av @ Au)))
            if worst > 1e-10 * scale ** 2:
                raise NotCommuting(f"[A(u),A(v)] norm {worst:.2e} on samples")
        if self.nonresonance is None:
            self.nonresonance = self._resonance_report()

    def _safe_eval(self, u):
        poles = np.asarray(self.A.pole_set(), dtype=complex)
        while poles.size and np.min(np.abs(u - poles)) < 1e-3:
            u = u + 0.11 + 0.07j
        return self.A(u)

    def _resonance_report(self):
        lam = np.linalg.eigvals(self.A0)
        margin = np.inf
        for a in lam:
            for b in lam:
                d = a - b
                n = round(d.real)
                if n != 0 and abs(d.imag) < 0.5:
                    margin = min(margin, abs(d - n))
        return {"ad_eigenvalue_margin": float(margin),
                "scope": "algebra" if self.abelian else "End(V)",
                "ok": bool(self.abelian or margin > 1e-6)}

    @property
    def dim(self):
        return self.A.dim_out

    def pole_set(self):
        return self.A.pole_set()

    def zero_set(self):
        """Poles of A(u)^{-1}."""
        if not hasattr(self, "_zeros"):
            self._zeros = ratmat.rm_inverse(self.A).pole_set()
        return self._zeros

    def to_json(self):
        return {"A": self.A.to_json(), "abelian": bool(self.abelian)}

    @classmethod
    def from_json(cls, obj):
        return cls(RationalMatrix.from_json(obj["A"]), bool(obj["abelian"]))


# ----------------------------------------------------------------------------
# formal solution
# ----------------------------------------------------------------------------

def upsilon_series(sys, k):
    """Coefficients [Y_1, ..., Y_k] of the formal solution 1 + sum Y_j u^-j.

    Order j solves (ad(A0) + j) Y_j = known(Y_0..Y_{j-1}); non-resonance
    keeps these solvable.  For abelian systems everything lives in the
    commutative algebra generated by A, where ad(A0) = 0.
    """
    dim = sys.dim
    A0 = sys.A0
    ahat = ratmat.taylor_at(sys.A, "inf", k + 2)  # [1, A0, A1, ...]
    eye = np.eye(dim)
    bcoef = [eye]
    for r in range(1, k + 2):
        bcoef.append(-bcoef[-1] @ (A0 + (r - 1) * eye) / r)

    if not sys.abelian:
        lam = np.linalg.eigvals(A0)
        for a in lam:
            for b in lam:
                d = b - a
                n = round(d.real)
                if 1 <= n <= k and abs(d - n) < 1e-6:
                    raise ResonantSystem(
                        f"ad(A0) eigenvalue {d:.3e} within 1e-6 of {n}")

    def c_shift(r, m):
        # coefficient of u^-m in (u+1)^-r
        from math import comb
        return ((-1) ** (m - r)) * comb(m - 1, r - 1)

    Y = [eye]
    for j in range(1, k + 1):
        m = j + 1
        rhs = np.zeros((dim, dim), dtype=complex)
        for r in range(1, j):
            rhs += Y[r] * c_shift(r, m)
        for t in range(0, j):
            for s in range(0, m - t + 1):
                r = m - t - s
                if s + r < 2:
                    continue
                rhs -= ahat[s] @ Y[t] @ bcoef[r]
        if sys.abelian:
            Yj = rhs / j
        else:
            try:
                Yj = solve_sylvester(A0 + j * eye, -A0, rhs)
            except Exception as exc:
                raise ResonantSystem(f"order-{j} solve failed: {exc}")
        Y.append(Yj)
    return Y[1:]


# ----------------------------------------------------------------------------
# matrix powers (+-u)^{A0}, batched over evaluation points
# ----------------------------------------------------------------------------

def _power_evaluator(A0):
    """Returns pw(w, sign) -> stack of (sign*w)^{A0} over the array w."""
    dim = A0.shape[0]
    eye = np.eye(dim, dtype=complex)
    if np.max(np.abs(A0)) < 1e-14:
        def pw(w, sign=1.0):
            w = np.asarray(w, dtype=complex)
            return np.broadcast_to(eye, w.shape + (dim, dim)).copy()
        return pw
    c = np.trace(A0) / dim
    N = A0 - c * eye
    Npow = [eye]
    for _ in range(dim):
        Npow.append(Npow[-1] @ N)
    if np.max(np.abs(Npow[dim])) <= 1e-12 * (1 + np.max(np.abs(N))) ** dim:
        # scalar plus nilpotent: exp(A0 L) = e^{cL} sum (N L)^k / k!
        def pw(w, sign=1.0):
            w = np.asarray(w, dtype=complex)
            L = np.log(sign * w)
            out = np.zeros(w.shape + (dim, dim), dtype=complex)
            fact = 1.0
            for kk in range(dim):
                if kk:
                    fact *= kk
                out += (L ** kk / fact)[..., None, None] * Npow[kk]
            return np.exp(c * L)[..., None, None] * out
        return pw
    lam, V = np.linalg.eig(A0)
    if np.linalg.cond(V) < 1e6:
        Vi = np.linalg.inv(V)
        def pw(w, sign=1.0):
            w = np.asarray(w, dtype=complex)
            L = np.log(sign * w)
            D = np.exp(np.multiply.outer(L, lam))
            return np.einsum("ij,...j,jk->...ik", V, D, Vi)
        return pw
    # nearly defective: Pade expm point by point is backward stable
    def pw(w, sign=1.0):
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        return np.stack([expm(A0 * np.log(sign * x)) for x in w])
    return pw


# ----------------------------------------------------------------------------
# fundamental solutions
# ----------------------------------------------------------------------------

@dataclass
class FundamentalPair:
    """Evaluators for the canonical solutions phi+ and phi-."""

    sys: DifferenceSystem
    N: int
    k: int
    upsilon: list = field(default=None)
    residual: float = field(default=np.nan)

    def __post_init__(self):
        if self.upsilon is None:
            self.upsilon = upsilon_series(self.sys, self.k)
        self._pw = _power_evaluator(self.sys.A0)
        self._poles = np.asarray(self.sys.pole_set(), dtype=complex)
        self._zeros = np.asarray(self.sys.zero_set(), dtype=complex)

    def _tail(self, w, sign):
        w = np.asarray(w, dtype=complex)
        dim = self.sys.dim
        ups = np.broadcast_to(np.eye(dim, dtype=complex), w.shape + (dim, dim)).copy()
        winv = 1.0 / w
        p = winv.copy()
        for Y in self.upsilon:
            ups += p[..., None, None] * Y
            p = p * winv
        return ups @ self._pw(w, sign)

    def _guard(self, pts, bad, label):
        if bad.size == 0:
            return
        d = np.abs(pts[..., None] - bad)
        if d.size and d.min() < 1e-9:
            raise PoleHit(f"evaluation hit a translated {label}")

    def phi_minus(self, u):
        """phi-(u) = A(u-1) ... A(u-N) Upsilon(u-N) (-(u-N))^{A0}."""
        u = np.asarray(u, dtype=complex)
        scalar = (u.ndim == 0)
        u = np.atleast_1d(u)
        shifts = u[:, None] - np.arange(1, self.N + 1)
        self._guard(shifts, self._poles, "pole of A")
        out = self._tail(u - self.N, -1.0)
        for n in range(self.N, 0, -1):
            out = self.sys.A(u - n) @ out
        return out[0] if scalar else out

    def phi_plus(self, u):
        """phi+(u) = A(u)^{-1} ... A(u+N-1)^{-1} Upsilon(u+N) (u+N)^{A0}."""
        u = np.asarray(u, dtype=complex)
        scalar = (u.ndim == 0)
        u = np.atleast_1d(u)
        shifts = u[:, None] + np.arange(0, self.N)
        self._guard(shifts, self._zeros, "zero of A")
        out = self._tail(u + self.N, 1.0)
        for n in range(self.N - 1, -1, -1):
            out = np.linalg.inv(self.sys.A(u + n)) @ out
        return out[0] if scalar else out

    def connection(self, u):
        return np.linalg.inv(self.phi_plus(u)) @ self.phi_minus(u)

    def equation_residual(self, count=20, rng=None):
        """max |phi(u+1) - A(u) phi(u)| over probe points in the half-planes."""
        rng = rng or np.random.default_rng(11)
        ys = np.linspace(-3, 3, count)
        worst = 0.0
        up = self.N / 2 + 0.37 + 1j * ys
        um = -self.N / 2 + 0.37 + 1j * ys
        for pts, phi in ((up, self.phi_plus), (um, self.phi_minus)):
            lhs = phi(pts + 1.0)
            rhs = self.sys.A(pts) @ phi(pts)
            worst = max(worst, np.max(np.abs(lhs - rhs)))
        return worst


def fundamental_solutions(sys, N=None, k=10, probe_tol=1e-8, max_N=512):
    """Builds a FundamentalPair, doubling N until probes stabilize.

    With N given, a single doubling check certifies it; adaptively,
    N starts at 64.  Raises TruncationInsufficient if max_N is reached.
    """
    if not sys.abelian and np.max(np.abs(sys.A0)) > 1e-10:
        if not sys.nonresonance["ok"]:
            raise ResonantSystem("non-abelian resonant system")
        raise PreconditionViolation(
            "non-abelian systems supported only in the regular case A0 = 0")
    adaptive = N is None
    N = 64 if adaptive else max(N, 50)
    ups = upsilon_series(sys, k)
    probes = np.array([0.37 + 1.1j, -0.53 + 0.4j, 1.21 - 0.7j])
    pair = FundamentalPair(sys, N, k, upsilon=ups)
    while True:
        pair2 = FundamentalPair(sys, 2 * N, k, upsilon=ups)
        delta = max(np.max(np.abs(pair.phi_minus(probes) - pair2.phi_minus(probes))),
                    np.max(np.abs(pair.phi_plus(probes) - pair2.phi_plus(probes))))
        if delta <= probe_tol:
            pair2.residual = pair2.equation_residual()
            return pair2
        if not adaptive or 2 * N >= max_N:
            raise TruncationInsufficient(
                f"doubling N={N} still moves phi by {delta:.2e}")
        N *= 2
        pair = pair2


def fundamental_solutions_gamma_route(sys, N=600, k=10):
    """Gamma-prefactor regularization route, for cross-checking.

    Regularizes to Abar(u) = (1 - A0/u) A(u), which is a regular system,
    and multiplies its fundamental solutions by the matrix-Gamma factors
    f+(u) = Gamma(u) Gamma(u - A0)^{-1}, f-(u) = Gamma(1-u+A0) Gamma(1-u)^{-1}.
    """
    from .specfun import gamma
    dim = sys.dim
    A0 = sys.A0
    u_over = RationalMatrix([[RationalScalar.from_coeffs(
        [-A0[i, j], 1.0 if i == j else 0.0], [0.0, 1.0])
        for j in range(dim)] for i in range(dim)])
    abar = DifferenceSystem(u_over @ sys.A, abelian=sys.abelian,
                            A0=np.zeros((dim, dim), dtype=complex))
    bar_pair = FundamentalPair(abar, N, k)

    def gamma_matrix(M):
        lam = np.linalg.eigvals(M)
        c0 = np.mean(lam)
        rad = max(1.0, 2.0 * np.max(np.abs(lam - c0)) + 0.5)
        # keep the contour away from Gamma poles
        while any(abs(c0 + rad * np.exp(2j * np.pi * t / 256) - m) < 0.1
                  for m in range(0, -40, -1) for t in range(0, 256, 8)):
            rad *= 1.07
        curve = ratmat.JordanCurve([(c0, rad)], node_count=512)
        return quad_contour(
            lambda v: gamma(v) * np.linalg.inv(v * np.eye(dim) - M), curve)

    def phi_plus(u):
        f = gamma_matrix(u * np.eye(dim)) @ np.linalg.inv(gamma_matrix(u * np.eye(dim) - A0))
        return f @ bar_pair.phi_plus(np.atleast_1d(u))[0]

    def phi_minus(u):
        f = gamma_matrix((1 - u) * np.eye(dim) + A0) @ np.linalg.inv(
            gamma_matrix((1 - u) * np.eye(dim)))
        return f @ bar_pair.phi_minus(np.atleast_1d(u))[0]

    return phi_plus, phi_minus


def two_sided_connection(sys, u, N=6000):
    """Richardson-extrapolated two-sided regularized product for S(u).

    The partial product ...A(u+1) A(u) A(u-1)... with e^{-+A0/n} factors
    converges like 1/N; combining N and 2N removes the leading term.
    """
    def partial(n):
        dim = sys.dim
        out = sys.A(u)
        for m in range(1, n + 1):
            left = sys.A(u + m) @ expm(-sys.A0 / m)
            right = sys.A(u - m) @ expm(sys.A0 / m)
            out = left @ out @ right
        return out
    p1, p2 = partial(N), partial(2 * N)
    return 2.0 * p2 - p1


# ----------------------------------------------------------------------------
# connection matrix
# ----------------------------------------------------------------------------

@dataclass
class ConnectionData:
    """Rational connection matrix in z = exp(2 pi i u) with its limits."""

    S: RationalMatrix
    S_infinity: np.ndarray
    S_zero: np.ndarray
    report: dict = None

    def to_json(self):
        pack = lambda M: [[{"re": c.real, "im": c.imag} for c in row] for row in M]
        return {"S": self.S.to_json(), "S_inf": pack(self.S_infinity),
                "S_zero": pack(self.S_zero)}

    @classmethod
    def from_json(cls, obj):
        unpack = lambda M: np.array([[complex(c["re"], c["im"]) for c in row]
                                     for row in M])
        return cls(RationalMatrix.from_json(obj["S"]), unpack(obj["S_inf"]),
                   unpack(obj["S_zero"]))


def _mod_z_clusters(points):
    """Clusters of points reduced mod 1 via their exponentials."""
    zpts = np.exp(TWO_PI_I * np.asarray(points, dtype=complex))
    return cluster_points(zpts, tol=1e-7 * (1 + np.max(np.abs(zpts))) if len(zpts) else 1e-7)


def connection_matrix(sys, pair=None, fit_tol=1e-7, period_tol=1e-9,
                      samples_per_circle=None):
    """Connection matrix S(z) of the system, as fitted rational data.

    Samples S(u) on two horizontal segments of width one (two circles in
    z bracketing the pole moduli), fits a common-denominator rational
    function, and checks 1-periodicity and the fit residual.
    """
    if pair is None:
        pair = fundamental_solutions(sys)
    ppoles = list(sys.pole_set())
    pzeros = list(sys.zero_set())
    pclusters = _mod_z_clusters(ppoles) if ppoles else []
    deg = sum(m for _, m in pclusters)
    special = np.asarray(ppoles + pzeros, dtype=complex)
    y_lo = (np.min(special.imag) if special.size else 0.0) - 0.22
    y_hi = (np.max(special.imag) if special.size else 0.0) + 0.22
    m = samples_per_circle or max(4 * deg + 16, 40)
    xs = np.arange(m) / m + 0.093
    rows = np.concatenate([xs + 1j * y_lo, xs + 1j * y_hi])
    svals = pair.connection(rows)

    # 1-periodicity probes the tail accuracy (exact identity analytically)
    per_pts = np.array([0.17 + 1j * y_lo, 0.61 + 1j * y_hi, 0.37 + 1j * y_lo])
    per = np.max(np.abs(pair.connection(per_pts + 1.0) - pair.connection(per_pts)))
    if per > period_tol:
        raise PeriodicityViolation(f"|S(u+1)-S(u)| = {per:.2e}")

    zs = np.exp(TWO_PI_I * rows)
    fit = rf_fit(list(zip(zs, svals)), deg, deg, residual_max=1e-5)
    if fit.fit_residual > fit_tol:
        raise FitResidualTooLarge(f"S fit residual {fit.fit_residual:.2e}")
    s_inf = fit.value_at_infinity()
    s_zero = fit(0.0)
    lim_plus = expm(1j * np.pi * sys.A0)
    lim_minus = expm(-1j * np.pi * sys.A0)
    report = {
        "fit_residual": float(fit.fit_residual),
        "periodicity": float(per),
        "pair_residual": float(pair.residual),
        "limit_error_inf": float(np.max(np.abs(s_inf - lim_plus))),
        "limit_error_zero": float(np.max(np.abs(s_zero - lim_minus))),
        "denominator_degree": int(deg),
        "truncation_N": int(pair.N),
    }
    return ConnectionData(fit, s_inf, s_zero, report)


# ----------------------------------------------------------------------------
# spectral projectors and the multiplicative Jordan split
# ----------------------------------------------------------------------------

def _commuting_projectors(mats, tol=1e-7, tries=5, seed=23):
    """Joint generalized-eigenspace projectors of a commuting family.

    Uses resolvent integrals of a random linear combination; retries with
    fresh coefficients when the eigenvalue clustering is ambiguous.
    Eigenvalues of a defective block split by ~scale * eps^(1/m) under
    rounding, so the cluster threshold adapts to the observed gaps.
    """
    dim = mats[0].shape[0]
    rng = np.random.default_rng(seed)
    last = None
    for _ in range(tries):
        coef = rng.normal(size=len(mats)) + 1j * rng.normal(size=len(mats))
        T = sum(c * M for c, M in zip(coef, mats))
        lam = np.linalg.eigvals(T)
        scale = 1 + np.max(np.abs(lam))
        ds = sorted(abs(lam[i] - lam[j]) for i in range(dim)
                    for j in range(i + 1, dim))
        theta = tol * scale
        absorbed = [d for d in ds if d <= 1e-4 * scale]
        if absorbed:
            theta = max(theta, 3.0 * absorbed[-1])
        outside = [d for d in ds if d > theta]
        if outside and outside[0] < 10 * theta:
            last = ClusterAmbiguity(
                f"eigenvalue gap {outside[0]:.2e} inside the cluster band")
            continue
        clusters = cluster_points(lam, tol=theta)
        centers = [c for c, _ in clusters]
        gap = np.inf
        for i in range(len(centers)):
            for j in range(i + 1, len(centers)):
                gap = min(gap, abs(centers[i] - centers[j]))
        projectors = []
        eye = np.eye(dim)
        for c, mult in clusters:
            r = gap / 3 if len(centers) > 1 else 0.5 + np.max(np.abs(lam - c))
            curve = ratmat.JordanCurve([(c, r)], node_count=128)
            Pm = quad_contour(lambda w: np.linalg.inv(w * eye - T), curve)
            projectors.append(Pm)
        total = sum(projectors)
        idem = max(np.max(np.abs(Pm @ Pm - Pm)) for Pm in projectors)
        if np.max(np.abs(total - eye)) < 1e-8 and idem < 1e-8:
            return projectors
        last = ClusterAmbiguity("projectors failed idempotency check")
    raise last or ClusterAmbiguity("no stable clustering found")


def _trace_eigenvalue(M, proj):
    """tr(M(u) proj)/rank as a RationalScalar (exact polynomial algebra)."""
    num, den = M.common_denominator()
    rank = round(np.trace(proj).real)
    tr = np.zeros(1, dtype=complex)
    for i in range(M.dim_out):
        for j in range(M.dim_in):
            tr = P.polyadd(tr, num[i][j] * proj[j, i])
    return RationalScalar.from_coeffs(tr / rank, den, cancel_tol=ratmat.CLUSTER_TOL)


def jordan_split(M, tol=1e-7, samples=None):
    """Pointwise multiplicative Jordan decomposition M = M_S M_U.

    Valid for commuting rational families; both factors are rational.
    """
    if samples is None:
        samples = np.array([0.83 + 0.41j, -0.97 + 1.13j, 1.73 - 0.61j])
    samples = _avoid(samples, M.pole_set())
    vals = [M(s) for s in samples]
    scale = max(np.max(np.abs(v)) for v in vals)
    worst = max(np.max(np.abs(a @ b - b @ a)) for a in vals for b in vals)
    if worst > 1e-10 * scale ** 2:
        raise NotCommuting(f"[M(u),M(v)] norm {worst:.2e}")
    projectors = _commuting_projectors(vals, tol=tol)
    lam_fns = [_trace_eigenvalue(M, Pm) for Pm in projectors]
    dim = M.dim_out
    ms = RationalMatrix.zeros(dim, dim)
    for lam, Pm in zip(lam_fns, projectors):
        for i in range(dim):
            for j in range(dim):
                if abs(Pm[i, j]) > 1e-13:
                    ms.entries[i][j] = ms.entries[i][j] + lam * Pm[i, j]
    mu = ratmat.rm_inverse(ms) @ M
    # validation
    for s in samples:
        resid = np.max(np.abs(ms(s) @ mu(s) - M(s)))
        if resid > 1e-9 * max(1.0, scale):
            raise ClusterAmbiguity(f"split residual {resid:.2e}")
        X = mu(s) - np.eye(dim)
        Xp = np.eye(dim)
        for _ in range(dim):
            Xp = Xp @ X
        if np.max(np.abs(Xp)) > 1e-9 * max(1.0, np.max(np.abs(mu(s))) ** dim):
            raise NotUnipotent("unipotent factor fails nilpotency check")
    return ms, mu


def _avoid(samples, poles, dist=0.2):
    poles = np.asarray(poles, dtype=complex)
    out = []
    for s in samples:
        while poles.size and np.min(np.abs(s - poles)) < dist:
            s = s + 0.13 + 0.17j
        out.append(s)
    return np.asarray(out)


def matrix_jordan_parts(A0, tol=1e-7):
    """Additive Jordan decomposition A0 = S + N for a plain matrix."""
    dim = A0.shape[0]
    lam = np.linalg.eigvals(A0)
    clusters = cluster_points(lam, tol=tol * (1 + np.max(np.abs(lam))))
    if len(clusters) == 1:
        S = clusters[0][0] * np.eye(dim)
        return S, A0 - S
    projectors = _commuting_projectors([A0], tol=tol)
    S = np.zeros_like(A0, dtype=complex)
    for Pm in projectors:
        rank = round(np.trace(Pm).real)
        mu = np.trace(A0 @ Pm) / rank
        S += mu * Pm
    return S, A0 - S


# ----------------------------------------------------------------------------
# inverse problem: semisimple part
# ----------------------------------------------------------------------------

def _as_rm(S):
    return S.S if isinstance(S, ConnectionData) else S


def inverse_semisimple(S, A0, branch, verify=True, tol=1e-8):
    """Coefficient matrix with prescribed semisimple connection matrix.

    Per joint eigenspace of (S(z), A0) the problem is scalar: with zeros
    alpha_i and poles beta_j of the eigenvalue, the coefficient eigenvalue
    is prod (u - a_i) / (u - b_j) for the branch logarithms a_i, b_j, and
    the logarithm choice must satisfy sum(b) - sum(a) = A0-eigenvalue.
    """
    S = _as_rm(S)
    A0 = np.asarray(A0, dtype=complex)
    dim = S.dim_out
    zs = _avoid(np.array([1.31 + 0.63j, -0.74 + 1.21j, 0.44 - 1.52j]), S.pole_set())
    vals = [S(z) for z in zs]
    scale = max(np.max(np.abs(v)) for v in vals + [A0])
    for v in vals:
        if np.max(np.abs(v @ A0 - A0 @ v)) > 1e-8 * scale ** 2:
            raise NotCommuting("[A0, S(z)] != 0")
    projectors = _commuting_projectors(vals + [A0], tol=1e-7)
    parts = []
    for Pm in projectors:
        rank = round(np.trace(Pm).real)
        lam = _trace_eigenvalue(S, Pm)
        mu = np.trace(A0 @ Pm) / rank
        a_logs = np.array([branch.log(z) for z in lam.zeros])
        b_logs = np.array([branch.log(z) for z in lam.poles])
        gap = np.sum(b_logs) - np.sum(a_logs) - mu
        if abs(gap) > tol * max(1.0, abs(mu)) + 1e-10:
            raise ConsistencyViolation(
                f"sum(b) - sum(a) - mu = {gap:.2e} for eigenvalue block")
        lam_a = RationalScalar(a_logs, b_logs, 1.0, cancel=False)
        parts.append((lam_a, Pm))
    A = RationalMatrix.zeros(dim, dim)
    for lam_a, Pm in parts:
        for i in range(dim):
            for j in range(dim):
                if abs(Pm[i, j]) > 1e-13:
                    A.entries[i][j] = A.entries[i][j] + lam_a * Pm[i, j]
    out = DifferenceSystem(A, abelian=True)
    if verify:
        _verify_forward(out, S, tol=1e-7)
    return out


def _verify_forward(sys, S_target, tol=1e-7):
    pair = fundamental_solutions(sys)
    pts = _avoid(np.array([0.21 + 0.31j, 0.64 - 0.27j, 0.11 + 0.11j]),
                 sys.pole_set(), dist=0.25)
    worst = 0.0
    for u in pts:
        z = np.exp(TWO_PI_I * u)
        worst = max(worst, np.max(np.abs(pair.connection(u) - S_target(z))))
    if worst > tol:
        raise ConsistencyViolation(f"forward connection differs by {worst:.2e}")
    return worst


# ----------------------------------------------------------------------------
# inverse problem: unipotent part
# ----------------------------------------------------------------------------

def nilpotent_log(X, dim=None):
    """log of a unipotent matrix by the finite series."""
    dim = dim or X.shape[-1]
    Y = X - np.eye(X.shape[-1])
    out = np.zeros_like(Y)
    power = np.eye(X.shape[-1])
    for j in range(1, dim):
        power = power @ Y
        out += ((-1) ** (j + 1) / j) * power
    return out


def unipotent_factor_data(S, A0, branch, rel_tol=1e-8):
    """Residue data of log S and its branch logarithms.

    Returns (delta, d, C) with C[k] the list of residue matrices
    C[k][r-1] of order r at the pole delta[k]; checks the residue-sum
    constraint sum_r C_{r,k} (-delta_k)^{-r} = -2 pi i A0.
    """
    S = _as_rm(S)
    dim = S.dim_out
    A0 = np.asarray(A0, dtype=complex)
    Npow = np.eye(dim)
    for _ in range(dim):
        Npow = Npow @ A0
    if np.max(np.abs(Npow)) > 1e-9 * (1 + np.max(np.abs(A0))) ** dim:
        raise NotUnipotent("A0 is not nilpotent")
    probe = _avoid(np.array([0.83 + 0.67j]), S.pole_set())[0]
    X = S(probe) - np.eye(dim)
    Xp = np.eye(dim)
    for _ in range(dim):
        Xp = Xp @ X
    if np.max(np.abs(Xp)) > 1e-9 * (1 + np.max(np.abs(X))) ** dim:
        raise NotUnipotent("S(z) is not unipotent")

    pole_clusters = S.pole_list()
    L = lambda z: nilpotent_log(S(z), dim)
    l_inf = nilpotent_log(S.value_at_infinity(), dim)
    inf_err = np.max(np.abs(l_inf - 1j * np.pi * A0))
    if inf_err > rel_tol * max(1.0, np.max(np.abs(A0))):
        raise RelationViolation(
            f"log S at infinity differs from pi i A0 by {inf_err:.2e}")
    deltas, orders = [], []
    for c, m in pole_clusters:
        deltas.append(c)
        orders.append(m * (dim - 1))
    Cs = []
    for dk, rmax in zip(deltas, orders):
        others = [d for d in deltas if d != dk] + [0.0]
        rho = 0.35 * min(abs(dk - o) for o in others)
        curve = ratmat.JordanCurve([(dk, rho)], node_count=256)
        ck = []
        for r in range(1, rmax + 1):
            Cr = quad_contour(lambda z: L(z) * (z - dk) ** (r - 1), curve)
            ck.append(Cr)
        while ck and np.max(np.abs(ck[-1])) < 1e-11 * (1 + np.max(np.abs(ck[0]))):
            ck.pop()
        Cs.append(ck)
    total = np.zeros((dim, dim), dtype=complex)
    for dk, ck in zip(deltas, Cs):
        for r, Cr in enumerate(ck, start=1):
            total += Cr * (-dk) ** (-r)
    rel = np.max(np.abs(total + TWO_PI_I * A0))
    if rel > rel_tol * max(1.0, np.max(np.abs(A0))):
        raise RelationViolation(
            f"residue sum differs from -2 pi i A0 by {rel:.2e}")
    d_logs = [branch.log(dk) for dk in deltas]
    return np.array(deltas), np.array(d_logs), Cs


def _shift_op_coeffs(r):
    """Coefficients t_m of prod_{j<r} (d/du / (2 pi i j) + 1) on the slot
    basis; applying the operator to f gives sum t_m f^{(m)}."""
    t = np.zeros(r, dtype=complex)
    t[0] = 1.0
    for j in range(1, r):
        t[1:j + 1] += t[0:j] / (TWO_PI_I * j)
    return t


def inverse_unipotent(S, A0, branch, verify=True):
    """Coefficient matrix with prescribed unipotent connection matrix.

    A(u) = exp( -(1/2 pi i) sum_{k,r} (-delta_k)^{-r}
                prod_{j<r}(d_u/(2 pi i j) + 1) C_{k,r}/(u - d_k) ).
    """
    S = _as_rm(S)
    dim = S.dim_out
    A0 = np.asarray(A0, dtype=complex)
    deltas, d_logs, Cs = unipotent_factor_data(S, A0, branch)

    terms = []  # (d_k, coefficient matrices gamma_m for 1/(u-d)^{m+1})
    for dk, dl, ck in zip(deltas, d_logs, Cs):
        rmax = len(ck)
        gam = [np.zeros((dim, dim), dtype=complex) for _ in range(rmax)]
        for r, Cr in enumerate(ck, start=1):
            t = _shift_op_coeffs(r)
            for m in range(r):
                # m-th derivative of 1/(u-d) is (-1)^m m! / (u-d)^{m+1}
                fac = (-1) ** m * float(np.prod(np.arange(1, m + 1))) if m else 1.0
                gam[m] = gam[m] + (-(dk)) ** (-r) * t[m] * fac * Cr
        terms.append((dl, gam))

    def exponent(u):
        u = np.asarray(u, dtype=complex)
        out = np.zeros(u.shape + (dim, dim), dtype=complex)
        for dl, gam in terms:
            base = 1.0 / (u - dl)
            p = base.copy()
            for m, g in enumerate(gam):
                out += p[..., None, None] * g
                p = p * base
        return out / (-TWO_PI_I)

    def a_eval(u):
        E = exponent(u)
        out = np.zeros_like(E)
        term = np.broadcast_to(np.eye(dim, dtype=complex), E.shape).copy()
        fact = 1.0
        for j in range(dim):
            if j:
                fact *= j
            out = out + term / fact
            term = term @ E
        return out

    q = np.ones(1, dtype=complex)
    for dl, gam in terms:
        q = P.polymul(q, poly_from_roots(np.full(len(gam), dl)))
    degq = len(q) - 1
    radius = 1.5 + max([abs(dl) for dl, _ in terms] + [1.0])
    m = max(4 * (degq + 1), 32)
    nodes = circle_nodes(0.0, radius, m)
    av = a_eval(nodes)
    qv = P.polyval(nodes, q)
    entries = []
    for i in range(dim):
        row = []
        for j in range(dim):
            coeffs = poly_interp_circle(av[:, i, j] * qv, radius, degq)
            row.append(RationalScalar.from_coeffs(coeffs, q,
                                                  cancel_tol=ratmat.CLUSTER_TOL))
        entries.append(row)
    A = RationalMatrix(entries)
    out = DifferenceSystem(A, abelian=True)
    if verify:
        _verify_forward(out, S, tol=1e-7)
    return out


def unipotent_phi(sign, deltas, d_logs, Cs, A0):
    """phi+ or phi- of the unipotent factorization (log-scale evaluator).

    phi^{+-}(u) = -+ pi i A0 / 2 + sum_{k,r} phi_r^{+-}(u, d_k) C_{k,r},
    with the digamma-based phi_r of the additive factorization; derivative
    orders are taken by Cauchy differentiation.
    """
    from .specfun import digamma
    dim = A0.shape[0]

    def psi_pm(u):
        return digamma(u) if sign > 0 else digamma(1.0 - u)

    def value(u):
        out = -sign * (1j * np.pi / 2.0) * A0.astype(complex)
        for dk, dl, ck in zip(deltas, d_logs, Cs):
            rmax = len(ck)
            if rmax == 0:
                continue
            if rmax == 1:
                ders = [psi_pm(u - dl)]
            else:
                # psi(w - dl) has poles on dl + Z<=0 (plus branch) resp.
                # dl + 1 + N (minus); keep the circle well inside
                if sign > 0:
                    bad = dl + np.arange(0, -30, -1)
                else:
                    bad = dl + 1 + np.arange(0, 30)
                rad = 0.45 * np.min(np.abs(u - bad))
                ders = ratmat.cauchy_derivatives(
                    lambda w: psi_pm(w - dl), u, rmax - 1, rad, nodes=128)
            for r, Cr in enumerate(ck, start=1):
                t = _shift_op_coeffs(r)
                val = sum(t[mm] * ders[mm] for mm in range(r)) / (1j * np.pi)
                val = -0.5 * (-dk) ** (-r) * (val + sign * 0.5)
                out = out + val * Cr
        return out

    return value


# ----------------------------------------------------------------------------
# inverse problem: general abelian case
# ----------------------------------------------------------------------------

def inverse_abelian(S, A0, branch, verify=True):
    """Unique abelian coefficient matrix with connection matrix S.

    Splits S into commuting semisimple and unipotent rational factors,
    solves each, and multiplies the results.
    """
    S = _as_rm(S)
    A0 = np.asarray(A0, dtype=complex)
    dim = S.dim_out
    s_s, s_u = jordan_split(S)
    a0_s, a0_n = matrix_jordan_parts(A0)
    sys_s = inverse_semisimple(s_s, a0_s, branch, verify=False)
    unip_trivial = np.max(np.abs(s_u(0.91 + 0.7j) - np.eye(dim))) < 1e-10 \
        and not s_u.pole_set()
    if unip_trivial:
        A = sys_s.A
    else:
        sys_u = inverse_unipotent(s_u, a0_n, branch, verify=False)
        A = sys_s.A @ sys_u.A
    logs = []
    for p in A.pole_set():
        logs.append(p)
    out = DifferenceSystem(A, abelian=True)
    for z in out.zero_set():
        logs.append(z)
    bad = _congruence_margin(logs)
    if bad < 1e-8:
        raise NonCongruentPi(f"reconstructed pole/zero logs congruent ({bad:.2e})")
    if verify:
        _verify_forward(out, S, tol=1e-7)
    return out


def _congruence_margin(points):
    margin = np.inf
    pts = list(points)
    for i in range(len(pts)):
        for j in range(len(pts)):
            if i == j:
                continue
            d = pts[i] - pts[j]
            n = round(d.real)
            if n != 0 and abs(d.imag) < 0.5:
                margin = min(margin, abs(d - n))
    return margin
