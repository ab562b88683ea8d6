"""q-characters: joint generalized eigenvalues of the commuting fields,
recorded weight space by weight space as monomials in located variables.

On the rational side an eigenvalue function factors as
Q(u + hbar d_i)/Q(u) * R(u)/R(u + hbar d_i); on the trigonometric side as
q_i^{deg R - deg Q} Q(q_i^2 z)/Q(z) * R(z)/R(q_i^2 z).  The factorization
is recovered by chaining the observed zeros and poles of the eigenvalue
into shift ladders; ambiguous chains raise rather than guess.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from . import ratmat
from .errors import (
    FactorizationFailure,
    LocationOutsideDomain,
    NotCommuting,
)
from .ratmat import RationalScalar, rf_fit_scalar

TWO_PI_I = 2j * np.pi


@dataclass(frozen=True)
class QTerm:
    mu: tuple
    monomial: tuple  # ((i, location, exponent), ...) sorted
    mult: int


@dataclass
class QCharacter:
    terms: list

    def __post_init__(self):
        for t in self.terms:
            for (i, loc, e) in t.monomial:
                total = sum(ee for (ii, _, ee) in t.monomial if ii == i)
                if total != t.mu[i]:
                    raise FactorizationFailure(
                        f"monomial degree {total} != mu(alpha_{i}-vee) = {t.mu[i]}")

    def total_dim(self):
        return sum(t.mult for t in self.terms)

    def to_json(self):
        return {"terms": [{
            "mu": list(t.mu),
            "monomial": [{"i": i, "location": {"re": loc.real, "im": loc.imag},
                          "exp": e} for (i, loc, e) in t.monomial],
            "mult": t.mult} for t in self.terms]}

    @classmethod
    def from_json(cls, obj):
        terms = []
        for t in obj["terms"]:
            mon = tuple(sorted(((m["i"], complex(m["location"]["re"],
                                                 m["location"]["im"]), m["exp"])
                                for m in t["monomial"]),
                               key=lambda x: (x[0], x[1].real, x[1].imag, x[2])))
            terms.append(QTerm(tuple(t["mu"]), mon, t["mult"]))
        return cls(terms)


def characters_equal(chi1, chi2, tol=1e-8):
    """Multiset equality of terms with location tolerance."""
    left = [(t.mu, list(t.monomial), t.mult) for t in chi1.terms]
    right = [(t.mu, list(t.monomial), t.mult) for t in chi2.terms]
    if len(left) != len(right):
        return False
    for mu, mon, mult in left:
        hit = -1
        for k, (mu2, mon2, mult2) in enumerate(right):
            if mu != mu2 or mult != mult2 or len(mon) != len(mon2):
                continue
            if _monomials_match(mon, mon2, tol):
                hit = k
                break
        if hit < 0:
            return False
        right.pop(hit)
    return True


def _monomials_match(m1, m2, tol):
    rem = list(m2)
    for (i, loc, e) in m1:
        hit = -1
        for k, (i2, loc2, e2) in enumerate(rem):
            if i == i2 and e == e2 and abs(loc - loc2) <= tol * (1 + abs(loc)):
                hit = k
                break
        if hit < 0:
            return False
        rem.pop(hit)
    return True


# ----------------------------------------------------------------------------
# joint eigenvalue extraction
# ----------------------------------------------------------------------------

def _joint_eigenvalues(blocks, pole_sets, rng, extra_checks=10):
    """Per-slot scalar eigenvalue functions of a commuting block family.

    blocks: list over i of RationalMatrix on a fixed weight space; returns
    a list over slots of tuples of RationalScalar (one per i).  Uses one
    Schur frame at a generic point, validated at extra samples.
    """
    dim = blocks[0].dim_out
    if dim == 1:
        return [tuple(b.entries[0][0] for b in blocks)], [1]
    special = np.concatenate([np.asarray(ps, dtype=complex)
                              for ps in pole_sets if len(ps)] or
                             [np.zeros(1, complex)])
    def draw():
        while True:
            u = 2.0 * (rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1))
            if not special.size or np.min(np.abs(u - special)) > 0.2:
                return u
    u0, u1 = draw(), draw()
    T = sum((rng.normal() + 1j * rng.normal()) * b(u)
            for b in blocks for u in (u0, u1))
    _, Qf = schur(T, output="complex")
    scale = max(np.max(np.abs(b(u0))) for b in blocks)
    samples = [draw() for _ in range(extra_checks)]
    for b in blocks:
        for u in samples:
            tri = Qf.conj().T @ b(u) @ Qf
            low = np.max(np.abs(np.tril(tri, -1)))
            if low > 1e-8 * (1 + np.max(np.abs(tri))):
                raise NotCommuting(
                    f"Schur frame fails to triangularize family ({low:.2e})")
    # fit each diagonal slot as a scalar rational function
    slot_fns = []
    for s in range(dim):
        fns = []
        for b, ps in zip(blocks, pole_sets):
            deg = max(len(ps), 1)
            radius = 1.5 + (np.max(np.abs(special)) if special.size else 1.0)
            nodes = np.concatenate([ratmat.circle_nodes(0.0, radius, 4 * deg + 8),
                                    ratmat.circle_nodes(0.31 + 0.22j, 0.53 * radius,
                                                        4 * deg + 8)])
            vals = np.einsum("j,...jk,k->...", Qf[:, s].conj(), b(nodes), Qf[:, s])
            fns.append(rf_fit_scalar(list(zip(nodes, vals)), deg, deg))
        slot_fns.append(tuple(fns))
    # cluster identical slots
    probe = np.array([draw() for _ in range(4)])
    groups, counts = [], []
    for fns in slot_fns:
        sig = np.concatenate([f(probe) for f in fns])
        for k, (gf, gsig) in enumerate(groups):
            if np.max(np.abs(sig - gsig)) < 1e-7 * (1 + np.max(np.abs(gsig))):
                counts[k] += 1
                break
        else:
            groups.append((fns, sig))
            counts.append(1)
    return [g for g, _ in groups], counts


# ----------------------------------------------------------------------------
# ladder factorization
# ----------------------------------------------------------------------------

def _chain_pairs(zeros, poles, key_of_pair, tol=1e-7):
    """Greedy zero/pole matching minimizing |signed number of steps - 1|.

    key_of_pair(z, p) returns the signed integer step count k with
    p = z + k*step (None when not an integer multiple).  Returns the list
    of matched (z, p, k); raises FactorizationFailure on leftovers.
    """
    zs, ps = list(zeros), list(poles)
    if len(zs) != len(ps):
        raise FactorizationFailure(
            f"{len(zs)} zeros vs {len(ps)} poles in a ladder class")
    matches = []
    while zs:
        best = None
        for a, z in enumerate(zs):
            for b, p in enumerate(ps):
                k = key_of_pair(z, p)
                if k is None or k == 0:
                    continue
                score = abs(k - 1)
                if best is None or score < best[0]:
                    best = (score, a, b, k)
        if best is None:
            raise FactorizationFailure("unmatched zero/pole in ladder class")
        _, a, b, k = best
        matches.append((zs.pop(a), ps.pop(b), k))
    return matches


def _factor_additive(fn, step, tol=1e-7):
    """Q/R ladder roots of a rational eigenvalue, additive steps."""
    zeros, poles = list(fn.zeros), list(fn.poles)
    classes = {}
    for kind, pts in (("z", zeros), ("p", poles)):
        for x in pts:
            for ref in classes:
                k = (x - ref) / step
                if abs(k - round(k.real)) < tol / abs(step):
                    classes[ref].append((kind, x))
                    break
            else:
                classes[x] = [(kind, x)]
    q_roots, r_roots = [], []
    for members in classes.values():
        zs = [x for kind, x in members if kind == "z"]
        ps = [x for kind, x in members if kind == "p"]
        def key(z, p):
            k = (p - z) / step
            return round(k.real) if abs(k - round(k.real)) < tol / abs(step) else None
        for z, p, k in _chain_pairs(zs, ps, key, tol):
            if k >= 1:
                q_roots.extend(z + j * step for j in range(1, k + 1))
            else:
                r_roots.extend(z - j * step for j in range(0, -k))
    return q_roots, r_roots


def _factor_multiplicative(fn, ratio, tol=1e-7, kmax=12):
    """Q/R ladder roots, multiplicative steps by `ratio` (= q_i^2)."""
    zeros, poles = list(fn.zeros), list(fn.poles)
    # when q is numerically close to a root of unity several step counts
    # match; the tie-break prefers the smallest move past a single step
    candidates = sorted((k for k in range(-kmax, kmax + 1) if k != 0),
                        key=lambda k: (abs(k - 1), -k))
    def step_count(z, p):
        for k in candidates:
            if abs(p - z * ratio ** k) < tol * (1 + abs(p)):
                return k
        return None
    classes = {}
    for kind, pts in (("z", zeros), ("p", poles)):
        for x in pts:
            for ref in classes:
                if step_count(ref, x) is not None or abs(x - ref) < tol:
                    classes[ref].append((kind, x))
                    break
            else:
                classes[x] = [(kind, x)]
    q_roots, r_roots = [], []
    for members in classes.values():
        zs = [x for kind, x in members if kind == "z"]
        ps = [x for kind, x in members if kind == "p"]
        for z, p, k in _chain_pairs(zs, ps, step_count, tol):
            if k >= 1:
                q_roots.extend(z * ratio ** j for j in range(1, k + 1))
            else:
                r_roots.extend(z * ratio ** (-j) for j in range(0, -k))
    return q_roots, r_roots


def _validate_additive(fn, q_roots, r_roots, step, rng):
    for _ in range(6):
        u = 3.0 * (rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1))
        bad = list(fn.poles) + [r - step for r in q_roots + r_roots]
        if bad and np.min(np.abs(u - np.asarray(bad))) < 0.15:
            continue
        val = np.prod([(u + step - r) / (u - r) for r in q_roots]) \
            * np.prod([(u - r) / (u + step - r) for r in r_roots])
        if abs(val - fn(u)) > 1e-8 * (1 + abs(val)):
            raise FactorizationFailure(
                f"ladder reconstruction differs by {abs(val - fn(u)):.2e}")


def _validate_multiplicative(fn, q_roots, r_roots, ratio, qi, rng):
    for _ in range(6):
        z = np.exp(1.2 * rng.uniform(-1, 1)) * np.exp(2j * np.pi * rng.uniform())
        bad = list(fn.poles) + list(np.asarray(q_roots + r_roots) / ratio)
        if bad and np.min(np.abs(z - np.asarray(bad))) < 0.1:
            continue
        val = qi ** (len(r_roots) - len(q_roots)) \
            * np.prod([(ratio * z - r) / (z - r) for r in q_roots]) \
            * np.prod([(z - r) / (ratio * z - r) for r in r_roots])
        if abs(val - fn(z)) > 1e-8 * (1 + abs(val)):
            raise FactorizationFailure(
                f"ladder reconstruction differs by {abs(val - fn(z)):.2e}")


# ----------------------------------------------------------------------------
# the two q-characters and the exponential map between them
# ----------------------------------------------------------------------------

def qchar_yangian(V, seed=97):
    """Rational-side q-character of a weight module."""
    rng = np.random.default_rng(seed)
    terms = []
    for mu in sorted(V.weights):
        if V.weights[mu] == 0:
            continue
        blocks = [V.block("xi", i, mu) or
                  ratmat.RationalMatrix.identity(V.weights[mu])
                  for i in V.cartan.indices]
        pole_sets = [b.pole_set() for b in blocks]
        slots, counts = _joint_eigenvalues(blocks, pole_sets, rng)
        for fns, mult in zip(slots, counts):
            monomial = []
            for i, fn in enumerate(fns):
                step = V.hbar * V.cartan.d[i]
                qr, rr = _factor_additive(fn, step)
                _validate_additive(fn, qr, rr, step, rng)
                if len(qr) - len(rr) != mu[i]:
                    raise FactorizationFailure(
                        f"ladder degree {len(qr)-len(rr)} != mu_i = {mu[i]}")
                monomial.extend((i, complex(r), +1) for r in qr)
                monomial.extend((i, complex(r), -1) for r in rr)
            monomial = tuple(sorted(monomial,
                                    key=lambda x: (x[0], x[1].real, x[1].imag, x[2])))
            terms.append(QTerm(tuple(mu), monomial, mult))
    return QCharacter(terms)


def qchar_qloop(W, seed=98):
    """Trigonometric-side q-character of a loop module."""
    rng = np.random.default_rng(seed)
    terms = []
    for mu in sorted(W.weights):
        if W.weights[mu] == 0:
            continue
        blocks = [W.block("Psi", i, mu) or
                  ratmat.RationalMatrix.identity(W.weights[mu])
                  for i in W.cartan.indices]
        pole_sets = [b.pole_set() for b in blocks]
        slots, counts = _joint_eigenvalues(blocks, pole_sets, rng)
        for fns, mult in zip(slots, counts):
            monomial = []
            for i, fn in enumerate(fns):
                qi = W.q ** W.cartan.d[i]
                ratio = qi ** 2
                qr, rr = _factor_multiplicative(fn, ratio)
                _validate_multiplicative(fn, qr, rr, ratio, qi, rng)
                if len(qr) - len(rr) != mu[i]:
                    raise FactorizationFailure(
                        f"ladder degree {len(qr)-len(rr)} != mu_i = {mu[i]}")
                monomial.extend((i, complex(r), +1) for r in qr)
                monomial.extend((i, complex(r), -1) for r in rr)
            monomial = tuple(sorted(monomial,
                                    key=lambda x: (x[0], x[1].real, x[1].imag, x[2])))
            terms.append(QTerm(tuple(mu), monomial, mult))
    return QCharacter(terms)


def e_pi_map(chi, branch, tol=1e-9):
    """Exponentiates every variable location; the branch set guarantees
    injectivity, which is checked on the support."""
    locs = []
    for t in chi.terms:
        for (i, loc, e) in t.monomial:
            if not branch.contains(loc, tol=1e-8):
                raise LocationOutsideDomain(f"location {loc} outside branch set")
            locs.append(loc)
    mapped = [np.exp(TWO_PI_I * l) for l in locs]
    for a in range(len(locs)):
        for b in range(a + 1, len(locs)):
            if abs(mapped[a] - mapped[b]) < tol and abs(locs[a] - locs[b]) > tol:
                raise LocationOutsideDomain(
                    "exponential map collides on the character support")
    terms = []
    for t in chi.terms:
        mon = tuple(sorted(((i, complex(np.exp(TWO_PI_I * loc)), e)
                            for (i, loc, e) in t.monomial),
                           key=lambda x: (x[0], x[1].real, x[1].imag, x[2])))
        terms.append(QTerm(t.mu, mon, t.mult))
    return QCharacter(terms)
