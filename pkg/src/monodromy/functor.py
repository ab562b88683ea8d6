"""The transform F between rational and trigonometric module data, and
its inverse G.

For each Cartan index i and weight mu, the commuting block xi_i(u) on
V_mu defines an abelian additive difference equation; its connection
matrix is the trigonometric commuting block Psi_i(z).  The raising and
lowering blocks transport through contour integrals against the
regularized half-products g_i^{+-}(u) built from the fundamental
solutions:

    X_{i,k}  =  c_i^{+-} (1/2 pi i) int_C e^{2 pi i k u} g^{+-}(u) x^{+-}(u) du
    x_{i,r}  =  1/(c_i^{+-} hbar)   int_C v^r g^{+-}(v)^{-1} X^{+-}(e^{2 pi i v}) dv

with contours enclosing the poles of the integrand's rational factor and
none of their nonzero integer translates.  The constants satisfy
c_i^+ c_i^- = d_i Gamma(hbar d_i)^2; only the product matters.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import diffeq, ratmat, repmodel
from .errors import (
    NonCongruentPi,
    PreconditionViolation,
    QuadratureNotConverged,
    RelationCheckFailed,
)
from .ratmat import RationalMatrix, build_contour, rf_fit
from .repmodel import LogBranch, LoopModule, WeightModule, check_qloop_relations, \
    check_yangian_relations
from .specfun import gamma

TWO_PI_I = 2j * np.pi


@dataclass
class FunctorConfig:
    """Knobs for both directions of the transform.

    c_plus/c_minus default to the symmetric split sqrt(d_i) Gamma(d_i hbar);
    any rebalancing at fixed product is equivalent.
    """

    hbar: complex
    branch: LogBranch = None
    c_plus: dict = None
    c_minus: dict = None
    node_count: int = 256
    trunc_N: int = None
    upsilon_k: int = 10
    modes: int = 4
    fit_residual: float = 1e-7
    check_tol: float = 1e-6
    check_samples: int = 30
    seed: int = 11
    verify: bool = True
    contour_scale: float = 1.0

    def __post_init__(self):
        self.hbar = complex(self.hbar)
        if self.branch is None:
            self.branch = LogBranch(self.hbar)

    @property
    def q(self):
        return np.exp(1j * np.pi * self.hbar)

    def constants(self, i, d_i):
        default = np.sqrt(d_i) * gamma(d_i * self.hbar)
        cp = self.c_plus.get(i, default) if self.c_plus else default
        cm = self.c_minus.get(i, default) if self.c_minus else default
        want = d_i * gamma(self.hbar * d_i) ** 2
        if abs(cp * cm - want) > 1e-12 * abs(want):
            raise PreconditionViolation(
                f"c_plus * c_minus != d_i Gamma(hbar d_i)^2 for i = {i}")
        return cp, cm


@dataclass
class GFactors:
    """Regularized half-products attached to one (i, mu) block."""

    sys: diffeq.DifferenceSystem
    pair: diffeq.FundamentalPair

    def g_minus(self, u):
        return self.pair.phi_minus(u)

    def g_plus(self, u):
        return np.linalg.inv(self.pair.phi_plus(np.asarray(u) + 1.0))


def g_factors(V, i, mu, cfg=None):
    """Builds the half-product evaluators for the block xi_i(u) on V_mu."""
    cfg = cfg or FunctorConfig(V.hbar)
    blk = V.block("xi", i, mu)
    if blk is None:
        blk = RationalMatrix.identity(V.weight_dim(mu))
    sys = diffeq.DifferenceSystem(blk, abelian=True)
    pair = diffeq.fundamental_solutions(sys, N=cfg.trunc_N, k=cfg.upsilon_k)
    return GFactors(sys, pair)


def _contour_for(include, exclude, cfg):
    return build_contour(include, exclude, node_count=cfg.node_count,
                         radius_cap=0.25 * cfg.contour_scale)


def _zimage_bounds(curve):
    lo, hi = np.inf, 0.0
    for c, r in curve.components:
        lo = min(lo, np.exp(-2 * np.pi * (c.imag + r)))
        hi = max(hi, np.exp(-2 * np.pi * (c.imag - r)))
    return lo, hi


# ----------------------------------------------------------------------------
# forward direction
# ----------------------------------------------------------------------------

def apply_F(V, cfg=None):
    """Builds the trigonometric module carried by V's difference equations.

    Per (i, mu): Psi_i(z) is the fitted connection matrix of xi_i(u); the
    modes X_{i,k} come from contour quadrature of e^{2 pi i k u} g x, and
    the rational X_i(z) from fitting the kernel z/(z - e^{2 pi i u});
    the fit's expansions must reproduce the quadrature modes.  The output
    must pass the trigonometric relation checks.
    """
    cfg = cfg or FunctorConfig(V.hbar)
    t_start = time.time()
    if abs(cfg.hbar - V.hbar) > 1e-12:
        raise PreconditionViolation("config hbar differs from module hbar")
    C = V.cartan
    Psi, Xp, Xm = {}, {}, {}
    factors = {}
    contour_meta = []
    for i in C.indices:
        for mu in V.weights:
            if V.weight_dim(mu) and V.block("xi", i, mu) is not None:
                factors[(i, mu)] = g_factors(V, i, mu, cfg)
    for (i, mu), gf in factors.items():
        conn = diffeq.connection_matrix(gf.sys, gf.pair, fit_tol=cfg.fit_residual)
        Psi[(i, mu)] = conn.S
    for i in C.indices:
        cp, cm = cfg.constants(i, C.d[i])
        for kind, sign, store, c_i in (("xplus", +1, Xp, cp),
                                       ("xminus", -1, Xm, cm)):
            for mu in V.weights:
                blk = V.block(kind, i, mu)
                if blk is None:
                    continue
                target = C.weight_plus_alpha(mu, i, sign)
                include = blk.pole_set()
                if not include:
                    continue
                other = V.block(kind, i, target)
                exclude = list(include)
                exclude += list(other.pole_set()) if other is not None else []
                curve = _contour_for(include, exclude, cfg)
                contour_meta.append({
                    "i": i, "mu": list(mu), "kind": kind,
                    "disks": [[c.real, c.imag, r] for c, r in curve.components],
                    "margin": float(curve.margin)})
                gfun = factors[(i, target)]
                geval = gfun.g_plus if sign > 0 else gfun.g_minus

                def block_values(nodes):
                    return geval(nodes) @ blk(nodes)

                store[(i, mu)] = _fit_loop_block(
                    block_values, curve, c_i, len(blk.pole_list()), cfg,
                    mult_total=sum(m for _, m in blk.pole_list()))
    weights = dict(V.weights)
    W = LoopModule(C, cfg.q, weights, Psi, Xp, Xm)
    if cfg.verify:
        rep = check_qloop_relations(W, samples=cfg.check_samples,
                                    tol=cfg.check_tol, seed=cfg.seed)
        if not rep.passed:
            raise RelationCheckFailed(
                f"loop relations fail at {rep.max_residual:.2e}")
        W.forward_report = rep.to_json()
        W.forward_report["contours"] = contour_meta
        W.forward_report["runtime"] = time.time() - t_start
    return W


def _fit_loop_block(block_values, curve, c_i, n_pole_clusters, cfg, mult_total):
    """Quadrature modes plus rational fit of one X block."""
    nodes, wts = curve.nodes_and_weights(cfg.node_count)
    vals = block_values(nodes)
    nodes2, wts2 = curve.nodes_and_weights(2 * cfg.node_count)
    vals2 = block_values(nodes2)
    K = cfg.modes
    modes = {}
    for k in range(-K, K + 1):
        m1 = np.einsum("s,s...->...", wts * np.exp(TWO_PI_I * k * nodes), vals)
        m2 = np.einsum("s,s...->...", wts2 * np.exp(TWO_PI_I * k * nodes2), vals2)
        if np.max(np.abs(m1 - m2)) > 1e-9 * (1 + np.max(np.abs(m2))):
            raise QuadratureNotConverged(
                f"mode {k} moved by {np.max(np.abs(m1 - m2)):.2e} under doubling")
        modes[k] = c_i * m2
    lo, hi = _zimage_bounds(curve)
    r_out, r_in = hi * np.e, lo / np.e
    D = mult_total
    n_samp = max(4 * (2 * D + 1), 24)
    zs = np.concatenate([ratmat.circle_nodes(0.0, r_out, n_samp),
                         ratmat.circle_nodes(0.0, r_in, n_samp)])
    kernel = zs[:, None] / (zs[:, None] - np.exp(TWO_PI_I * nodes2)[None, :])
    samples = c_i * np.einsum("zs,s,s...->z...", kernel, wts2, vals2)
    fit = rf_fit(list(zip(zs, samples)), D, D, num_factor=np.array([0.0, 1.0]),
                 residual_max=1e-5)
    # the fitted function's expansions must reproduce the quadrature modes
    taylor_inf = ratmat.taylor_at(fit, "inf", K + 1)
    taylor_zero = ratmat.taylor_at(fit, 0, K + 1)
    scale = 1 + max(np.max(np.abs(m)) for m in modes.values())
    for k in range(0, K + 1):
        if np.max(np.abs(taylor_inf[k] - modes[k])) > 1e-7 * scale:
            raise QuadratureNotConverged(
                f"fitted expansion at infinity misses mode {k}")
    for k in range(1, K + 1):
        if np.max(np.abs(taylor_zero[k] + modes[-k])) > 1e-7 * scale:
            raise QuadratureNotConverged(
                f"fitted expansion at zero misses mode {-k}")
    return fit


# ----------------------------------------------------------------------------
# inverse direction
# ----------------------------------------------------------------------------

def apply_G(W, cfg):
    """Builds the rational module from trigonometric data.

    Per (i, mu): xi_i(u) solves the inverse monodromy problem for
    Psi_i(z) with residue matrix hbar d_i mu(alpha_i-vee); the modes
    x_{i,r} come from contour quadrature of v^r g(v)^{-1} X(e^{2 pi i v})
    over contours enclosing the branch logarithms of the poles of X.
    """
    t_start = time.time()
    C = W.cartan
    branch = cfg.branch
    if abs(np.exp(1j * np.pi * cfg.hbar) - W.q) > 1e-10:
        raise PreconditionViolation("config hbar inconsistent with module q")
    sigma_logs = [branch.log(z) for z in repmodel.sigma_set(W)]
    margin = branch.noncongruence_margin(sigma_logs)
    if margin < 1e-8:
        raise NonCongruentPi(
            f"branch logarithms of sigma(W) congruent within {margin:.2e}")
    xi, xp, xm = {}, {}, {}
    systems, pairs = {}, {}
    for i in C.indices:
        for mu in W.weights:
            blk = W.block("Psi", i, mu)
            if blk is None:
                if W.weight_dim(mu):
                    xi[(i, mu)] = RationalMatrix.identity(W.weight_dim(mu))
                continue
            a0 = cfg.hbar * C.d[i] * mu[i] * np.eye(W.weight_dim(mu))
            sys = diffeq.inverse_abelian(blk, a0, branch, verify=False)
            systems[(i, mu)] = sys
            pairs[(i, mu)] = diffeq.fundamental_solutions(
                sys, N=cfg.trunc_N, k=cfg.upsilon_k)
            xi[(i, mu)] = sys.A
    for i in C.indices:
        cp, cm = cfg.constants(i, C.d[i])
        for kind, sign, store, c_i in (("Xp", +1, xp, cp), ("Xm", -1, xm, cm)):
            for mu in W.weights:
                blk = W.block(kind, i, mu)
                if blk is None:
                    continue
                target = C.weight_plus_alpha(mu, i, sign)
                zpoles = blk.pole_set()
                if not zpoles:
                    continue
                include = [branch.log(z) for z in zpoles]
                exclude = list(include)
                for key in ((i, mu), (i, target)):
                    if key in systems:
                        exclude += list(systems[key].zero_set())
                        exclude += list(systems[key].pole_set())
                curve = _contour_for(include, exclude, cfg)
                pair_t = pairs.get((i, target))
                if pair_t is None:
                    raise PreconditionViolation(
                        f"missing commuting block at target weight {target}")
                if sign > 0:
                    ginv = lambda v: pair_t.phi_plus(np.asarray(v) + 1.0)
                else:
                    ginv = lambda v: np.linalg.inv(pair_t.phi_minus(v))

                def block_values(nodes):
                    return ginv(nodes) @ blk(np.exp(TWO_PI_I * nodes))

                store[(i, mu)] = _fit_yangian_block(
                    block_values, curve, c_i, cfg,
                    mult_total=sum(m for _, m in blk.pole_list()))
    V = WeightModule(C, cfg.hbar, dict(W.weights), xi, xp, xm)
    if cfg.verify:
        rep = check_yangian_relations(V, samples=cfg.check_samples,
                                      tol=cfg.check_tol, seed=cfg.seed)
        if not rep.passed:
            raise RelationCheckFailed(
                f"rational relations fail at {rep.max_residual:.2e}")
        V.inverse_report = rep.to_json()
        V.inverse_report["runtime"] = time.time() - t_start
    return V


def _fit_yangian_block(block_values, curve, c_i, cfg, mult_total):
    """Modes x_r and the rational fit of one x block.

    The defining integrals carry no 1/(2 pi i): x_r = (1/(c hbar)) int ...
    """
    hbar = cfg.hbar
    nodes, wts = curve.nodes_and_weights(cfg.node_count)
    vals = block_values(nodes)
    nodes2, wts2 = curve.nodes_and_weights(2 * cfg.node_count)
    vals2 = block_values(nodes2)
    R = cfg.modes
    modes = {}
    for r in range(R + 1):
        m1 = np.einsum("s,s...->...", wts * nodes ** r, vals)
        m2 = np.einsum("s,s...->...", wts2 * nodes2 ** r, vals2)
        if np.max(np.abs(m1 - m2)) > 1e-9 * (1 + np.max(np.abs(m2))):
            raise QuadratureNotConverged(
                f"mode {r} moved by {np.max(np.abs(m1 - m2)):.2e} under doubling")
        modes[r] = TWO_PI_I * m2 / (c_i * hbar)
    centers = np.array([c for c, _ in curve.components])
    spread = max([abs(c - centers.mean()) + r for c, r in curve.components])
    n_samp = max(4 * (2 * mult_total + 1), 24)
    us = np.concatenate([
        centers.mean() + (spread + 0.8) * np.exp(TWO_PI_I * np.arange(n_samp) / n_samp),
        centers.mean() + (spread + 2.1) * np.exp(TWO_PI_I * np.arange(n_samp) / n_samp)])
    kernel = 1.0 / (us[:, None] - nodes2[None, :])
    samples = (TWO_PI_I / c_i) * np.einsum("zs,s,s...->z...", kernel, wts2, vals2)
    D = mult_total
    fit = rf_fit(list(zip(us, samples)), max(D - 1, 0), D, residual_max=1e-5)
    taylor_inf = ratmat.taylor_at(fit, "inf", R + 2)
    scale = 1 + max(np.max(np.abs(m)) for m in modes.values())
    if np.max(np.abs(taylor_inf[0])) > 1e-7 * scale:
        raise QuadratureNotConverged("fitted x block does not vanish at infinity")
    for r in range(R + 1):
        if np.max(np.abs(taylor_inf[r + 1] - hbar * modes[r])) > 1e-7 * scale:
            raise QuadratureNotConverged(
                f"fitted expansion misses mode {r}")
    return fit


# ----------------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------------

def _compare_weight_modules(V1, V2, samples=30, seed=5):
    rng = np.random.default_rng(seed)
    sigma = repmodel.sigma_set(V1) + repmodel.sigma_set(V2)
    pts = repmodel._sample_points(sigma, samples, rng)
    worst = 0.0
    for kind in ("xi", "xplus", "xminus"):
        keys = set(V1.blocks[kind]) | set(V2.blocks[kind])
        for (i, mu) in keys:
            diag = kind == "xi"
            a = np.array([V1.eval_block(kind, i, mu, u, diagonal=diag) for u in pts])
            b = np.array([V2.eval_block(kind, i, mu, u, diagonal=diag) for u in pts])
            worst = max(worst, np.max(np.abs(a - b)) / (1 + np.max(np.abs(b))))
    return worst


def _compare_loop_modules(W1, W2, samples=30, seed=6):
    rng = np.random.default_rng(seed)
    sigma = np.asarray(repmodel.sigma_set(W1) + repmodel.sigma_set(W2), complex)
    mags = np.abs(sigma) if sigma.size else np.array([1.0])
    pts = []
    while len(pts) < samples:
        r = rng.uniform(0.3 * mags.min(), 3.0 * mags.max())
        z = r * np.exp(TWO_PI_I * rng.uniform())
        if sigma.size and np.min(np.abs(z - sigma)) < 0.07 * max(abs(z), 1.0):
            continue
        pts.append(z)
    worst = 0.0
    for kind in ("Psi", "Xp", "Xm"):
        keys = set(W1.blocks[kind]) | set(W2.blocks[kind])
        for (i, mu) in keys:
            diag = kind == "Psi"
            a = np.array([W1.eval_block(kind, i, mu, z, diagonal=diag) for z in pts])
            b = np.array([W2.eval_block(kind, i, mu, z, diagonal=diag) for z in pts])
            worst = max(worst, np.max(np.abs(a - b)) / (1 + np.max(np.abs(b))))
    return worst


def roundtrip_report(V, cfg, tol=1e-6):
    """G(F(V)) against V, blockwise at sample points."""
    gate = repmodel.category_test(V, cfg.branch)
    if not gate["member"]:
        raise PreconditionViolation("module data leaves the branch set")
    W = apply_F(V, cfg)
    V2 = apply_G(W, cfg)
    dev = _compare_weight_modules(V, V2)
    return {"deviation": float(dev), "tol": tol, "passed": bool(dev < tol)}


def roundtrip_report_loop(W, cfg, tol=1e-6):
    """F(G(W)) against W, blockwise at sample points."""
    V = apply_G(W, cfg)
    W2 = apply_F(V, cfg)
    dev = _compare_loop_modules(W, W2)
    return {"deviation": float(dev), "tol": tol, "passed": bool(dev < tol)}


def shift_compat_report(V, a, cfg, tol=1e-6):
    """F(V shifted by a) against F(V) dilated by e^{2 pi i a}."""
    a = complex(a)
    left = apply_F(repmodel.shift_module(V, a), cfg)
    right = repmodel.shift_loop(apply_F(V, cfg), np.exp(TWO_PI_I * a))
    dev = _compare_loop_modules(left, right)
    return {"deviation": float(dev), "tol": tol, "passed": bool(dev < tol),
            "shift": [a.real, a.imag]}
