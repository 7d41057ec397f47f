"""Exact spectral-sequence machinery for finite bigraded complexes.

A bigraded complex carries a total differential D = D_0 + D_1 + D_2 + ...
where D_i raises the first grading by i and the second by 1 - i. All page
dimensions and differential ranks are computed over the rationals, so a
reported dimension is a theorem about the input, not a tolerance call.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from . import lie
from .numerics import (InputError, RationalMatrix, nullspace_exact,
                       quotient_dim, rank_exact, solve_exact)


class BigradedComplex:
    """Finite first-quadrant bigraded complex with differentials D_i of
    bidegree (i, 1-i)."""

    def __init__(self, dims, maps, check: bool = True):
        self.dims = {(int(a), int(b)): int(d) for (a, b), d in dims.items()
                     if d > 0}
        if any(a < 0 or b < 0 for a, b in self.dims):
            raise InputError("bigraded spots must sit in the first quadrant")
        self.maps: dict[int, dict[tuple[int, int], RationalMatrix]] = {}
        for i, per_spot in maps.items():
            bucket = {}
            for (a, b), mat in per_spot.items():
                if not isinstance(mat, RationalMatrix):
                    mat = RationalMatrix(mat)
                want = (self.dim(a + i, b + 1 - i), self.dim(a, b))
                if (mat.rows, mat.cols) != want:
                    raise InputError(
                        f"D_{i} at {(a, b)} has shape {(mat.rows, mat.cols)}, "
                        f"expected {want}")
                if mat.rows and mat.cols:
                    bucket[(a, b)] = mat
            if bucket:
                self.maps[int(i)] = bucket
        self.a_max = max((a for a, _ in self.dims), default=0)
        self.b_max = max((b for _, b in self.dims), default=0)
        if check:
            self.check_complex()

    # -- access -------------------------------------------------------------

    def dim(self, a: int, b: int) -> int:
        return self.dims.get((a, b), 0)

    def D(self, i: int, a: int, b: int) -> RationalMatrix:
        mat = self.maps.get(i, {}).get((a, b))
        if mat is None:
            return RationalMatrix.zeros(self.dim(a + i, b + 1 - i),
                                        self.dim(a, b))
        return mat

    def shifts(self):
        return sorted(self.maps)

    def check_complex(self) -> None:
        """D^2 = 0, graded piece by graded piece."""
        top_shift = max(self.maps, default=0)
        for (a, b), d in self.dims.items():
            for s in range(2 * top_shift + 1):
                rows = self.dim(a + s, b + 2 - s)
                acc = RationalMatrix.zeros(rows, d)
                for i in range(s + 1):
                    j = s - i
                    if rows and d:
                        acc = acc + self.D(i, a + j, b + 1 - j) @ self.D(j, a, b)
                if not acc.is_zero():
                    raise InputError(
                        f"D^2 != 0 in total shift {s} at spot {(a, b)}")

    # -- total complex ------------------------------------------------------

    def total_spots(self, p: int) -> list[tuple[int, int]]:
        return [(a, p - a) for a in range(p + 1) if self.dim(a, p - a) > 0]

    def total_dim(self, p: int) -> int:
        return sum(self.dim(a, b) for a, b in self.total_spots(p))

    def total_differential(self, p: int) -> RationalMatrix:
        src = self.total_spots(p)
        dst = self.total_spots(p + 1)
        return _assemble(dst, src, self.dims,
                         lambda t, s: self.D(t[0] - s[0], s[0], s[1])
                         if t[0] >= s[0] else None)

    def total_cohomology(self, p: int) -> int:
        dim = self.total_dim(p)
        if dim == 0:
            return 0
        r_out = rank_exact(self.total_differential(p))
        r_in = rank_exact(self.total_differential(p - 1)) if p > 0 else 0
        return dim - r_out - r_in

    def top_total_degree(self) -> int:
        return max((a + b for a, b in self.dims), default=0)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dims": [[a, b, d] for (a, b), d in sorted(self.dims.items())],
            "maps": [
                {"shift": i, "a": a, "b": b,
                 "matrix": [[str(x) for x in row] for row in mat.data]}
                for i in sorted(self.maps)
                for (a, b), mat in sorted(self.maps[i].items())
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BigradedComplex":
        try:
            dims = {(int(a), int(b)): int(d) for a, b, d in payload["dims"]}
            maps: dict[int, dict] = {}
            for entry in payload.get("maps", []):
                i = int(entry["shift"])
                spot = (int(entry["a"]), int(entry["b"]))
                mat = RationalMatrix(
                    [[Fraction(x) for x in row] for row in entry["matrix"]],
                    cols=dims.get(spot, 0))
                maps.setdefault(i, {})[spot] = mat
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed complex payload: {exc}") from exc
        return cls(dims, maps)


def load_complex(path) -> BigradedComplex:
    with open(path) as fh:
        return BigradedComplex.from_dict(json.load(fh))


def save_complex(cx: BigradedComplex, path) -> None:
    with open(path, "w") as fh:
        json.dump(cx.to_dict(), fh, indent=1)


def _assemble(row_spots, col_spots, dims, block_fn) -> RationalMatrix:
    nrows = sum(dims.get(s, 0) for s in row_spots)
    ncols = sum(dims.get(s, 0) for s in col_spots)
    out = RationalMatrix.zeros(nrows, ncols)
    r0 = 0
    for rs in row_spots:
        c0 = 0
        for cs in col_spots:
            blk = block_fn(rs, cs)
            if blk is not None and blk.rows and blk.cols:
                for i in range(blk.rows):
                    out.data[r0 + i][c0:c0 + blk.cols] = blk.data[i][:]
            c0 += dims.get(cs, 0)
        r0 += dims.get(rs, 0)
    return out


# ---------------------------------------------------------------------------
# pages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Page:
    """One page: dimensions plus the rank of the outgoing page differential."""

    r: int
    dims: dict
    d_ranks: dict

    def dim(self, a: int, b: int) -> int:
        return self.dims.get((a, b), 0)

    def total(self, p: int) -> int:
        return sum(d for (a, b), d in self.dims.items() if a + b == p)

    def totals(self) -> list[int]:
        top = max((a + b for a, b in self.dims), default=-1)
        return [self.total(p) for p in range(top + 1)]


class _TupleSpace:
    """The r-tuple space at one spot, in filtration form.

    A class on page r at (a, b) is a tuple (omega^{a+s, b-s})_{s<r} whose
    total differential vanishes in the first r output rows, taken modulo
    two kinds of trivial classes: tuples with zero leading component (they
    live one filtration step deeper), and differentials of degree-(p-1)
    data from up to r-1 filtration steps below that lands in filtration a.
    Everything is a constraint matrix or a column-span, so page dimensions
    reduce to exact quotient computations.
    """

    def __init__(self, cx: BigradedComplex, r: int, a: int, b: int):
        self.cx, self.r, self.a, self.b = cx, r, a, b
        self.spots = [(a + s, b - s) for s in range(r)]
        self.ambient = sum(cx.dim(*s) for s in self.spots)
        self.lead_dim = cx.dim(a, b)

        def block(t, s):
            return cx.D(t[0] - s[0], s[0], s[1]) if t[0] - s[0] >= 0 else None

        con_rows = [(a + s, b - s + 1) for s in range(r)]
        self.constraints = _assemble(
            con_rows, self.spots, _spot_dims(cx, con_rows + self.spots), block)
        # admissible boundaries: d(y) for y reaching down to filtration
        # a - r + 1 with d(y) supported in filtration >= a
        hat = [(a + t, b - 1 - t) for t in range(-(r - 1), r)]
        low_rows = [(a + s, b - s) for s in range(-(r - 1), 0)]
        H = _assemble(low_rows, hat, _spot_dims(cx, low_rows + hat), block)
        G = _assemble(self.spots, hat, _spot_dims(cx, self.spots + hat), block)
        self.boundary_cols = G @ nullspace_exact(H)

    def _deep_selector(self) -> RationalMatrix:
        """Rows picking out the leading-component coordinates."""
        sel = RationalMatrix.zeros(self.lead_dim, self.ambient)
        for i in range(self.lead_dim):
            sel.data[i][i] = Fraction(1)
        return sel

    def denominator_generators(self) -> RationalMatrix:
        """Rows spanning the trivial classes (before intersecting cycles)."""
        gens = self.boundary_cols.transpose()
        deep = RationalMatrix.zeros(self.ambient - self.lead_dim, self.ambient)
        for i in range(self.ambient - self.lead_dim):
            deep.data[i][self.lead_dim + i] = Fraction(1)
        return gens.vstack(deep)

    def dimension(self) -> int:
        if self.ambient == 0:
            return 0
        return quotient_dim(self.constraints, self.denominator_generators())

    def cycle_basis(self) -> RationalMatrix:
        return nullspace_exact(self.constraints)

    def denominator_basis(self) -> RationalMatrix:
        """Columns spanning the trivial classes inside the cycle space.

        Boundaries are automatically cycles (total differential squares to
        zero), so only the deep part needs intersecting with the cycles.
        """
        if self.ambient == 0:
            return RationalMatrix.zeros(0, 0)
        deep_ker = nullspace_exact(
            self.constraints.vstack(self._deep_selector()))
        return self.boundary_cols.hstack(deep_ker)


def _spot_dims(cx, spots):
    return {s: cx.dim(*s) for s in spots}


def _page_map(cx: BigradedComplex, r: int, src: _TupleSpace,
              dst: _TupleSpace) -> RationalMatrix:
    """Ambient matrix of the page-r differential between two tuple spaces."""
    a, b = src.a, src.b
    return _assemble(
        dst.spots, src.spots, _spot_dims(cx, dst.spots + src.spots),
        lambda t, s: cx.D(t[0] - s[0], s[0], s[1]) if t[0] - s[0] >= 0 else None)


def page(cx: BigradedComplex, r: int) -> Page:
    """Dimensions of page r together with the ranks of its differential.

    The differential's ambient matrix is checked to map representative
    cycles into cycles; a failure means the complex is inconsistent.
    """
    if r < 0:
        raise InputError("negative page index")
    if r == 0:
        # page 0 is the complex itself with the vertical differential
        ranks = {(a, b): rank_exact(mat)
                 for (a, b), mat in cx.maps.get(0, {}).items()}
        return Page(0, dict(cx.dims), {k: v for k, v in ranks.items() if v})
    spaces = {}
    for a in range(cx.a_max + 1):
        for b in range(cx.b_max + r):
            spaces[(a, b)] = _TupleSpace(cx, r, a, b)
    dims = {}
    for (a, b), sp in spaces.items():
        d = sp.dimension()
        if d:
            dims[(a, b)] = d
    d_ranks = {}
    for (a, b) in dims:
        dst = spaces.get((a + r, b - r + 1))
        if dst is None or dst.dimension() == 0:
            continue
        src = spaces[(a, b)]
        L = _page_map(cx, r, src, dst)
        Z = src.cycle_basis()
        LZ = L @ Z
        if not (dst.constraints @ LZ).is_zero():
            raise ArithmeticError(
                "page differential left the cycle space; complex inconsistent")
        W = dst.denominator_basis()
        rk = rank_exact(LZ.hstack(W)) - rank_exact(W)
        if rk:
            d_ranks[(a, b)] = rk
    return Page(r, dims, d_ranks)


def verify_page_recursion(cx: BigradedComplex, r: int) -> None:
    """Cross-check: page r+1 must be the homology of page r under d_r."""
    cur, nxt = page(cx, r), page(cx, r + 1)
    spots = set(cur.dims) | set(nxt.dims)
    for a, b in spots:
        out_rank = cur.d_ranks.get((a, b), 0)
        in_rank = cur.d_ranks.get((a - r, b + r - 1), 0)
        expect = cur.dim(a, b) - out_rank - in_rank
        if nxt.dim(a, b) != expect:
            raise ArithmeticError(
                f"page recursion fails at {(a, b)}: "
                f"dim E_{r + 1} = {nxt.dim(a, b)}, homology gives {expect}")


def stabilization_index(cx: BigradedComplex) -> int:
    """Smallest r at which the pages have stopped moving."""
    r_stab = cx.a_max + cx.b_max + 1
    final = page(cx, r_stab).dims
    for r in range(1, r_stab + 1):
        if page(cx, r).dims == final:
            return r
    return r_stab


def e_infinity(cx: BigradedComplex, verify: bool = True) -> Page:
    """The stable page; verified against the total cohomology when asked."""
    r_stab = cx.a_max + cx.b_max + 1
    stable = page(cx, r_stab)
    if verify:
        for p in range(cx.top_total_degree() + 2):
            want = cx.total_cohomology(p)
            got = stable.total(p)
            if want != got:
                raise ArithmeticError(
                    f"E_infinity total {got} != total cohomology {want} "
                    f"in degree {p}")
    return stable


# ---------------------------------------------------------------------------
# model complexes for flat bundles over a point, a circle, or a 2-torus
# ---------------------------------------------------------------------------

def from_algebra(algebra) -> BigradedComplex:
    """One-column complex: the exterior-algebra cochain complex of the fiber."""
    n = algebra.n
    dims = {(0, b): len(lie.multi_indices(n, b)) for b in range(n + 1)}
    maps = {0: {(0, b): lie.ce_differential(algebra, b) for b in range(n)}}
    return BigradedComplex(dims, maps)


def flat_bundle_complex(ranks, a0, monodromies, base_kind: str,
                        a2=None, area: Fraction = Fraction(1)) -> BigradedComplex:
    """Group-cochain model of the twisted cohomology over the base.

    ranks: fiber dims per degree. a0: per-degree fiber differential.
    monodromies: per base generator, a per-degree list of holonomy matrices.
    a2: optional per-degree contraction blocks, scaled by the base area
    (torus only; the rank pattern is what matters, so area defaults to 1).
    """
    ranks = [int(r) for r in ranks]
    m = len(ranks) - 1
    a0 = [_ratmat(x, ranks[b + 1], ranks[b]) for b, x in enumerate(a0)] \
        if a0 is not None else [RationalMatrix.zeros(ranks[b + 1], ranks[b])
                                for b in range(m)]
    monos = [[_ratmat(x, ranks[b], ranks[b]) for b, x in enumerate(gen)]
             for gen in monodromies]

    def a0_blk(b):
        if 0 <= b < m:
            return a0[b]
        return RationalMatrix.zeros(ranks[b + 1] if b + 1 <= m else 0,
                                    ranks[b] if 0 <= b <= m else 0)

    def hol(g, b):
        return monos[g][b]

    eye = [RationalMatrix.identity(r) for r in ranks]
    dims, d0, d1, d2 = {}, {}, {}, {}
    if base_kind == "point":
        for b in range(m + 1):
            dims[(0, b)] = ranks[b]
            if b < m:
                d0[(0, b)] = a0[b]
    elif base_kind == "circle":
        if len(monos) != 1:
            raise InputError("circle base needs exactly one monodromy generator")
        for b in range(m + 1):
            dims[(0, b)] = dims[(1, b)] = ranks[b]
            if b < m:
                d0[(0, b)] = a0[b]
                d0[(1, b)] = -a0[b]
            d1[(0, b)] = hol(0, b) - eye[b]
    elif base_kind == "torus2":
        if len(monos) != 2:
            raise InputError("torus base needs two monodromy generators")
        for b in range(m + 1):
            dims[(0, b)] = dims[(2, b)] = ranks[b]
            dims[(1, b)] = 2 * ranks[b]
            if b < m:
                d0[(0, b)] = a0[b]
                z = RationalMatrix.zeros(ranks[b + 1], ranks[b])
                top = (-a0[b]).hstack(z)
                bot = z.hstack(-a0[b])
                d0[(1, b)] = top.vstack(bot)
                d0[(2, b)] = a0[b]
            d1[(0, b)] = (hol(0, b) - eye[b]).vstack(hol(1, b) - eye[b])
            d1[(1, b)] = (hol(1, b) - eye[b]).hstack(-(hol(0, b) - eye[b]))
        if a2 is not None:
            for b in range(1, m + 1):
                blk = _ratmat(a2[b - 1], ranks[b - 1], ranks[b]).scale(area)
                d2[(0, b)] = blk
    else:
        raise InputError(f"unsupported base kind {base_kind!r}")
    maps = {0: d0, 1: d1}
    if d2:
        maps[2] = d2
    dims = {k: v for k, v in dims.items() if v > 0}
    return BigradedComplex(dims, maps)


def _ratmat(x, rows, cols) -> RationalMatrix:
    if isinstance(x, RationalMatrix):
        mat = x
    else:
        mat = RationalMatrix([[Fraction(v) if isinstance(v, str) else v
                               for v in row] for row in np.asarray(x, dtype=object)],
                             cols=cols) if np.asarray(x).size else \
            RationalMatrix.zeros(rows, cols)
    if (mat.rows, mat.cols) != (rows, cols):
        raise InputError(f"block has shape {(mat.rows, mat.cols)}, "
                         f"expected {(rows, cols)}")
    return mat


def leray_circle(monodromies_on_cohomology, p: int) -> int:
    """Total-space Betti number over a circle from the fiber-cohomology
    holonomy: invariants in degree p plus coinvariants in degree p - 1."""
    def phi(q):
        if 0 <= q < len(monodromies_on_cohomology):
            return monodromies_on_cohomology[q]
        return None

    out = 0
    mp = phi(p)
    if mp is not None:
        A = mp - RationalMatrix.identity(mp.cols)
        out += A.cols - rank_exact(A)
    mq = phi(p - 1)
    if mq is not None:
        A = mq - RationalMatrix.identity(mq.cols)
        out += A.rows - rank_exact(A)
    return out


# ---------------------------------------------------------------------------
# exact matrix invariants of a holonomy
# ---------------------------------------------------------------------------

def _poly_deriv(c: list[Fraction]) -> list[Fraction]:
    return [k * c[k] for k in range(1, len(c))]


def _poly_trim(c: list[Fraction]) -> list[Fraction]:
    while c and c[-1] == 0:
        c = c[:-1]
    return c


def _poly_mod(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    a, b = _poly_trim(a[:]), _poly_trim(b)
    while len(a) >= len(b) > 0:
        f = a[-1] / b[-1]
        shift = len(a) - len(b)
        for i, bi in enumerate(b):
            a[shift + i] -= f * bi
        a = _poly_trim(a)
    return a


def _poly_gcd(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    a, b = _poly_trim(a), _poly_trim(b)
    while b:
        a, b = b, _poly_mod(a, b)
    if a:
        lead = a[-1]
        a = [x / lead for x in a]
    return a


def minimal_polynomial(A: RationalMatrix) -> list[Fraction]:
    """Monic minimal polynomial, coefficients low to high, computed exactly."""
    if A.rows != A.cols:
        raise InputError("minimal polynomial needs a square matrix")
    n = A.rows
    if n == 0:
        return [Fraction(1)]
    powers = [RationalMatrix.identity(n)]
    vecs = [[x for row in powers[0].data for x in row]]
    while rank_exact(RationalMatrix(vecs, cols=n * n)) == len(vecs):
        powers.append(powers[-1] @ A)
        vecs.append([x for row in powers[-1].data for x in row])
    k = len(powers) - 1
    cols = RationalMatrix([[vecs[i][j] for i in range(k)]
                           for j in range(n * n)], cols=k)
    target = RationalMatrix([[vecs[k][j]] for j in range(n * n)], cols=1)
    x = solve_exact(cols, target)
    return [-x.data[i][0] for i in range(k)] + [Fraction(1)]


@dataclass(frozen=True)
class HolonomyFactorReport:
    """Jordan structure of a holonomy at the eigenvalue one, plus global
    semisimplicity, both decided exactly."""

    has_unipotent_block: bool
    semisimple: bool
    minimal_polynomial: tuple


def unipotent_factor(Phi: RationalMatrix) -> HolonomyFactorReport:
    if Phi.rows != Phi.cols:
        raise InputError("holonomy must be square")
    n = Phi.rows
    if n == 0:
        return HolonomyFactorReport(False, True, (Fraction(1),))
    A = Phi - RationalMatrix.identity(n)
    unip = rank_exact(A @ A) < rank_exact(A)
    m = minimal_polynomial(Phi)
    g = _poly_gcd(m, _poly_deriv(m))
    return HolonomyFactorReport(bool(unip), len(g) <= 1, tuple(m))


def generalized_one_eigenspace_dim(Phi: RationalMatrix) -> int:
    n = Phi.rows
    A = Phi - RationalMatrix.identity(n)
    P = RationalMatrix.identity(n)
    for _ in range(n):
        P = P @ A
    return n - rank_exact(P)


def joint_generalized_one_eigenspace_dim(phis: list[RationalMatrix]) -> int:
    if not phis:
        raise InputError("need at least one holonomy")
    n = phis[0].rows
    stacked = None
    for Phi in phis:
        A = Phi - RationalMatrix.identity(n)
        P = RationalMatrix.identity(n)
        for _ in range(n):
            P = P @ A
        stacked = P if stacked is None else stacked.vstack(P)
    return n - rank_exact(stacked)


def compound_exact(A: RationalMatrix, p: int) -> RationalMatrix:
    """p-th compound matrix (minor determinants) over the rationals."""
    n = A.rows
    idx = lie.multi_indices(n, p)
    out = RationalMatrix.zeros(len(idx), len(idx))
    for r, I in enumerate(idx):
        for c, J in enumerate(idx):
            out.data[r][c] = _det_exact([[A.data[i][j] for j in J] for i in I])
    return out


def _det_exact(rows) -> Fraction:
    rows = [row[:] for row in rows]
    n = len(rows)
    det = Fraction(1)
    for c in range(n):
        pr = next((i for i in range(c, n) if rows[i][c] != 0), None)
        if pr is None:
            return Fraction(0)
        if pr != c:
            rows[c], rows[pr] = rows[pr], rows[c]
            det = -det
        det *= rows[c][c]
        inv = 1 / rows[c][c]
        for i in range(c + 1, n):
            if rows[i][c] != 0:
                f = rows[i][c] * inv
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[c])]
    return det


def inverse_exact(A: RationalMatrix) -> RationalMatrix:
    if A.rows != A.cols:
        raise InputError("inverse needs a square matrix")
    return solve_exact(A, RationalMatrix.identity(A.rows))


def form_action(g: RationalMatrix, b: int) -> RationalMatrix:
    """Induced action of the automorphism g on degree-b exterior forms
    (compound of the inverse transpose)."""
    return compound_exact(inverse_exact(g).transpose(), b)


# ---------------------------------------------------------------------------
# predicted small-eigenvalue counts and the obstruction taxonomy
# ---------------------------------------------------------------------------

_BASE_GENS = {"point": 0, "circle": 1, "torus2": 2}


@dataclass(frozen=True)
class SmallCountPrediction:
    degree: int
    count: int
    per_bidegree: dict
    obstruction_case: int | None


def _invariant_sector_dims(algebra, F, b: int):
    """(dim of invariant b-forms, holonomy restricted to them or None)."""
    n = algebra.n
    full = len(lie.multi_indices(n, b))
    if F is None or len(F.elements) == 1:
        return full, None
    U = lie.invariant_basis(F, b)
    return U.shape[1], U


def contraction_blocks(v, n: int) -> list[RationalMatrix]:
    """Exact interior-multiplication blocks Lambda^b -> Lambda^{b-1} for a
    vector with rational components, b = 1..n."""
    v = [Fraction(x) if not isinstance(x, Fraction) else x for x in v]
    out = []
    for b in range(1, n + 1):
        src = lie.multi_indices(n, b)
        dst = {idx: r for r, idx in enumerate(lie.multi_indices(n, b - 1))}
        mat = RationalMatrix.zeros(len(dst), len(src))
        for c, I in enumerate(src):
            for pos, i in enumerate(I):
                mat.data[dst[I[:pos] + I[pos + 1:]]][c] += (-1) ** pos * v[i]
        out.append(mat)
    return out


def predict_small_count(algebra, base_kind: str, p: int,
                        monodromy_action=None,
                        F=None, T=None) -> SmallCountPrediction:
    """Number of collapsing eigenvalues in total degree p, from the limit
    flat structure: base cohomology with coefficients in the invariant
    fiber forms, holonomy replaced by its semisimple part.

    `monodromy_action`: per base generator, an exact automorphism matrix of
    the fiber algebra (rows/entries rational). The semisimple replacement is
    implemented by counting generalized 1-eigenspaces, which only depend on
    the semisimple part.
    """
    gens = _BASE_GENS.get(base_kind)
    if gens is None:
        raise InputError(f"unsupported base kind {base_kind!r}")
    n = algebra.n
    if monodromy_action is None:
        monodromy_action = [RationalMatrix.identity(n)] * gens
    monodromy_action = [m if isinstance(m, RationalMatrix)
                        else RationalMatrix(m) for m in monodromy_action]
    if len(monodromy_action) != gens:
        raise InputError("one holonomy generator per base circle factor")
    trivial_F = F is None or len(F.elements) == 1

    def fixed_dim(b: int) -> int:
        """dim of the 1-generalized-eigenspace of the holonomy on the
        invariant b-forms."""
        if b < 0 or b > n:
            return 0
        full, U = _invariant_sector_dims(algebra, F, b)
        if full == 0:
            return 0
        if gens == 0:
            return full
        acts = [form_action(g, b) for g in monodromy_action]
        if trivial_F:
            if gens == 1:
                return generalized_one_eigenspace_dim(acts[0])
            return joint_generalized_one_eigenspace_dim(acts)
        # restricted to a float invariant basis: count eigenvalues at 1
        mats = [U.T @ a.to_numpy() @ U for a in acts]
        dims = []
        for M in mats:
            w = np.linalg.eigvals(M)
            dims.append(int(np.sum(np.abs(w - 1.0) < 1e-6)))
        return min(dims)

    per = {}
    total = 0
    for a in range(gens + 1):
        b = p - a
        h = comb(gens, a) * fixed_dim(b)
        if h:
            per[(a, b)] = h
            total += h
    case = classify_obstruction(algebra, base_kind, p,
                                monodromy_action=monodromy_action, F=F, T=T)
    return SmallCountPrediction(p, total, per, case)


def classify_obstruction(algebra, base_kind: str, p: int,
                         monodromy_action=None, F=None,
                         T=None) -> int | None:
    """Which structural feature (if any) makes the naive fiberwise-harmonic
    count fail: 1 = fiber cohomology smaller than the invariant forms,
    2 = holonomy acts non-semisimply on fiber cohomology, 3 = the
    twisted-coefficient pages do not stabilize at page 2. Checked in that
    order; None when no obstruction applies through degree p."""
    gens = _BASE_GENS.get(base_kind)
    if gens is None:
        raise InputError(f"unsupported base kind {base_kind!r}")
    n = algebra.n
    trivial_F = F is None or len(F.elements) == 1
    # case 1: fiber cochain complex not already harmonic
    for q in range(min(p, n) + 1):
        full, U = _invariant_sector_dims(algebra, F, q)
        if trivial_F:
            bq = lie.betti_numbers(algebra)[q]
        else:
            bq = _invariant_betti(algebra, F, q)
        if bq < full:
            return 1
    if gens == 0 or monodromy_action is None:
        return None
    monodromy_action = [m if isinstance(m, RationalMatrix)
                        else RationalMatrix(m) for m in monodromy_action]
    if not trivial_F:
        return None  # non-semisimplicity checks need the exact sector
    # case 2: holonomy non-semisimple on fiber cohomology
    for q in range(min(p, n) + 1):
        for g in monodromy_action:
            ind = cohomology_action(algebra, form_action(g, q), q)
            if not unipotent_factor(ind).semisimple:
                return 2
    # case 3: page 2 of the twisted model differs from the stable page
    ranks = [len(lie.multi_indices(n, b)) for b in range(n + 1)]
    a0 = [lie.ce_differential(algebra, b) for b in range(n)]
    monos = [[form_action(g, b) for b in range(n + 1)]
             for g in monodromy_action]
    a2 = contraction_blocks(T, n) if T is not None else None
    cx = flat_bundle_complex(ranks, a0, monos, base_kind, a2=a2)
    if page(cx, 2).dims != e_infinity(cx, verify=False).dims:
        return 3
    return None


def _invariant_betti(algebra, F, q: int) -> int:
    """Betti number of the invariant subcomplex, via float ranks of the
    restricted differentials (finite orthogonal symmetry only)."""
    Uq = lie.invariant_basis(F, q)
    Up = lie.invariant_basis(F, q + 1) if q < algebra.n else None
    Um = lie.invariant_basis(F, q - 1) if q > 0 else None
    dim = Uq.shape[1]
    r_out = 0
    if Up is not None and Up.shape[1]:
        r_out = np.linalg.matrix_rank(Up.T @ lie.ce_matrix(algebra, q) @ Uq,
                                      tol=1e-9)
    r_in = 0
    if Um is not None and Um.shape[1]:
        r_in = np.linalg.matrix_rank(Uq.T @ lie.ce_matrix(algebra, q - 1) @ Um,
                                     tol=1e-9)
    return dim - r_out - r_in


def cohomology_action(algebra, form_act: RationalMatrix, q: int) -> RationalMatrix:
    """Induced action of a fiber automorphism on degree-q fiber cohomology."""
    n = algebra.n
    d_out = lie.ce_differential(algebra, q) if q < n else None
    d_in = lie.ce_differential(algebra, q - 1) if q > 0 else None
    amb = form_act.cols
    K = nullspace_exact(d_out) if d_out is not None \
        else RationalMatrix.identity(amb)
    Im = d_in if d_in is not None else RationalMatrix.zeros(amb, 0)
    # pick cycle columns independent modulo the image
    data = [[Im.data[i][j] for j in range(Im.cols)]
            + [K.data[i][j] for j in range(K.cols)] for i in range(amb)]
    from .numerics import _row_echelon
    work = [row[:] for row in data]
    pivots = _row_echelon(work)
    reps = [c - Im.cols for c in pivots if c >= Im.cols]
    R = RationalMatrix([[K.data[i][j] for j in reps] for i in range(amb)],
                       cols=len(reps))
    if not reps:
        return RationalMatrix.zeros(0, 0)
    # solve [R | Im] x = form_act R; the R-part of x is the induced matrix
    aug = R.hstack(Im) if Im.cols else R
    X = solve_exact(aug, form_act @ R)
    return RationalMatrix([X.data[i][:] for i in range(len(reps))],
                          cols=len(reps))
