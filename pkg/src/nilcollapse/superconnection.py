"""Flat degree-1 superconnections on graded bundles over flat base models.

The base is a flat circle or square 2-torus; sections of a flat bundle with
monodromy Phi are grid functions with a Phi-twisted wraparound. Exterior
derivatives are forward differences on the staggered (vertex / edge / face)
grids, which keeps d^2 = 0 exact at the discrete level, and metrics enter
through staggered mass matrices, giving an h-symmetric Galerkin Laplacian.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import lie
from .numerics import InputError
from .report import SpectrumReport, epsilon_close  # noqa: F401 (re-export)


class FlatnessError(ValueError):
    """A constructed superconnection violates one of the flatness identities."""


# ---------------------------------------------------------------------------
# base models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BaseModel:
    kind: str  # "circle" | "torus2"
    resolution: int
    circumferences: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("circle", "torus2"):
            raise InputError(f"unsupported base kind {self.kind!r}")
        if self.resolution < 8:
            raise InputError("resolution must be >= 8")
        want = 1 if self.kind == "circle" else 2
        circ = self.circumferences
        if circ is None:
            circ = (1.0,) * want
        circ = tuple(float(c) for c in circ)
        if len(circ) != want or any(c <= 0 for c in circ):
            raise InputError("bad circumference list")
        object.__setattr__(self, "circumferences", circ)

    @property
    def dim(self) -> int:
        return 1 if self.kind == "circle" else 2

    @property
    def npoints(self) -> int:
        return self.resolution ** self.dim

    @property
    def steps(self) -> tuple[float, ...]:
        return tuple(c / self.resolution for c in self.circumferences)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.steps))

    def form_components(self, a: int) -> list[tuple[int, ...]]:
        """Coordinate directions carried by each degree-a form component."""
        return list(itertools.combinations(range(self.dim), a))

    def points(self, stagger: tuple[int, ...] = ()) -> np.ndarray:
        """Grid coordinates, staggered half a step in the given directions."""
        N = self.resolution
        axes = []
        for g in range(self.dim):
            off = 0.5 if g in stagger else 0.0
            axes.append((np.arange(N) + off) * self.steps[g])
        if self.dim == 1:
            return axes[0][:, None]
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])


# ---------------------------------------------------------------------------
# graded bundles
# ---------------------------------------------------------------------------

class GradedBundle:
    """Z-graded bundle given by per-degree ranks and grading-preserving
    monodromy matrices, one per base generator."""

    def __init__(self, ranks, monodromies=None, generators: int = 1):
        self.ranks = tuple(int(r) for r in ranks)
        if not self.ranks or self.ranks[0] < 1:
            raise InputError("degree-0 rank must be >= 1")
        if monodromies is None:
            monodromies = [[np.eye(r) for r in self.ranks]
                           for _ in range(generators)]
        self.monodromies = [[np.asarray(m, dtype=float) for m in gen]
                            for gen in monodromies]
        for gen in self.monodromies:
            if len(gen) != len(self.ranks):
                raise InputError("need one monodromy block per degree")
            for b, m in enumerate(gen):
                if m.shape != (self.ranks[b], self.ranks[b]):
                    raise InputError("monodromy block has wrong shape")
                if abs(np.linalg.det(m)) < 1e-12:
                    raise InputError("monodromy must be invertible")
        if len(self.monodromies) == 2:
            for b in range(len(self.ranks)):
                comm = (self.monodromies[0][b] @ self.monodromies[1][b]
                        - self.monodromies[1][b] @ self.monodromies[0][b])
                if np.abs(comm).max() > 1e-10:
                    raise InputError("torus monodromies must commute")

    @property
    def top(self) -> int:
        return len(self.ranks) - 1

    def rank(self, b: int) -> int:
        return self.ranks[b] if 0 <= b <= self.top else 0

    def monodromy(self, gen: int, b: int) -> np.ndarray:
        return self.monodromies[gen][b]


# ---------------------------------------------------------------------------
# metric fields
# ---------------------------------------------------------------------------

class MetricField:
    """Graded fiber inner product h^E over the base, sampled where needed.

    Stored as a callable (b, points) -> stack of SPD matrices; the bundle's
    monodromy fixes the required equivariance across the seam, which
    `check_equivariance` verifies on sample points.
    """

    def __init__(self, bundle: GradedBundle, func):
        self.bundle = bundle
        self._func = func

    @classmethod
    def identity(cls, bundle: GradedBundle) -> "MetricField":
        def func(b, pts):
            return np.broadcast_to(np.eye(bundle.rank(b)),
                                   (len(pts), bundle.rank(b), bundle.rank(b)))
        return cls(bundle, func)

    @classmethod
    def equivariant(cls, bundle: GradedBundle, base: BaseModel) -> "MetricField":
        """h(x) = (Phi^{-s})^T Phi^{-s} along each generator, built from the
        principal matrix logarithm. This is the harmonic metric when the
        monodromy is diagonalizable with positive spectrum, and it degrades
        gracefully to unipotent blocks."""
        logs = []
        for gen in range(len(bundle.monodromies)):
            per_degree = []
            for b in range(len(bundle.ranks)):
                X = scipy.linalg.logm(bundle.monodromy(gen, b))
                if np.abs(X.imag).max() > 1e-9:
                    raise InputError(
                        "monodromy has no real logarithm; supply a metric explicitly")
                per_degree.append(X.real)
            logs.append(per_degree)

        def func(b, pts):
            out = np.empty((len(pts), bundle.rank(b), bundle.rank(b)))
            for i, x in enumerate(np.atleast_2d(pts)):
                A = sum((-x[g] / base.circumferences[g]) * logs[g][b]
                        for g in range(base.dim))
                M = scipy.linalg.expm(A)
                out[i] = M.T @ M
            return out
        return cls(bundle, func)

    @classmethod
    def conformal(cls, other: "MetricField", factor: float) -> "MetricField":
        return cls(other.bundle, lambda b, pts: factor * other._func(b, pts))

    def sample(self, b: int, pts: np.ndarray) -> np.ndarray:
        h = np.asarray(self._func(b, np.atleast_2d(pts)), dtype=float)
        return h

    def check_equivariance(self, base: BaseModel, tol: float = 1e-8) -> None:
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, min(base.circumferences), size=(4, base.dim))
        for gen in range(base.dim):
            shift = np.zeros(base.dim)
            shift[gen] = base.circumferences[gen]
            for b in range(len(self.bundle.ranks)):
                phi = self.bundle.monodromy(gen, b)
                h0 = self.sample(b, pts)
                h1 = self.sample(b, pts + shift)
                want = np.einsum("ij,pjk,kl->pil",
                                 np.linalg.inv(phi).T, h0, np.linalg.inv(phi))
                if np.abs(h1 - want).max() > tol * max(1.0, np.abs(h0).max()):
                    raise InputError(
                        f"metric violates monodromy equivariance (degree {b})")


# ---------------------------------------------------------------------------
# the superconnection
# ---------------------------------------------------------------------------

class Superconnection:
    """Components of a flat degree-1 superconnection over a flat base.

    a0[b] : E^b -> E^{b+1} is the constant fiber differential; the connection
    is (monodromy, zero local potential); a2[b] : E^b -> E^{b-1} is the
    coefficient of the base area form in the curvature term (torus only).
    """

    def __init__(self, bundle: GradedBundle, base: BaseModel,
                 a0=None, a2=None):
        self.bundle = bundle
        self.base = base
        m = bundle.top
        if a0 is None:
            a0 = [np.zeros((bundle.rank(b + 1), bundle.rank(b)))
                  for b in range(m)]
        self.a0 = [np.asarray(x, dtype=float) for x in a0]
        if len(self.a0) != m:
            raise InputError("need one a0 block per adjacent degree pair")
        for b, x in enumerate(self.a0):
            if x.shape != (bundle.rank(b + 1), bundle.rank(b)):
                raise InputError(f"a0[{b}] has wrong shape {x.shape}")
        if a2 is not None and base.kind != "torus2":
            raise InputError("a2 needs a 2-dimensional base")
        if a2 is None:
            a2 = [np.zeros((bundle.rank(b - 1), bundle.rank(b)))
                  for b in range(1, m + 1)]
        self.a2 = [np.asarray(x, dtype=float) for x in a2]
        if len(self.a2) != m:
            raise InputError("need one a2 block per adjacent degree pair")
        for b, x in enumerate(self.a2, start=1):
            if x.shape != (bundle.rank(b - 1), bundle.rank(b)):
                raise InputError(f"a2[{b}] has wrong shape {x.shape}")

    def a0_block(self, b: int) -> np.ndarray:
        if 0 <= b < self.bundle.top:
            return self.a0[b]
        return np.zeros((self.bundle.rank(b + 1), self.bundle.rank(b)))

    def a2_block(self, b: int) -> np.ndarray:
        if 1 <= b <= self.bundle.top:
            return self.a2[b - 1]
        return np.zeros((self.bundle.rank(b - 1), self.bundle.rank(b)))


@dataclass(frozen=True)
class FlatnessReport:
    """Max violation of each flatness identity."""

    squares: float           # (a0)^2 = 0 and (a2)^2 = 0
    parallel_a0: float       # a0 commutes with the holonomy
    parallel_a2: float       # a2 commutes with the holonomy
    curvature: float         # (nabla)^2 + a0 a2 + a2 a0 = 0

    @property
    def max_violation(self) -> float:
        return max(self.squares, self.parallel_a0, self.parallel_a2,
                   self.curvature)

    def ok(self, tol: float = 1e-12) -> bool:
        return self.max_violation <= tol

    def worst_identity(self) -> str:
        vals = {"squares": self.squares, "parallel_a0": self.parallel_a0,
                "parallel_a2": self.parallel_a2, "curvature": self.curvature}
        return max(vals, key=vals.get)


def check_flatness(sc: Superconnection) -> FlatnessReport:
    bundle, m = sc.bundle, sc.bundle.top
    sq = 0.0
    for b in range(m - 1):
        sq = max(sq, _absmax(sc.a0_block(b + 1) @ sc.a0_block(b)))
    for b in range(2, m + 1):
        sq = max(sq, 0.0)  # (a2)^2 lands in 4-forms, absent on dim <= 2 bases
    pa0 = pa2 = 0.0
    for gen in range(len(bundle.monodromies)):
        for b in range(m):
            pa0 = max(pa0, _absmax(bundle.monodromy(gen, b + 1) @ sc.a0_block(b)
                                   - sc.a0_block(b) @ bundle.monodromy(gen, b)))
        for b in range(1, m + 1):
            pa2 = max(pa2, _absmax(bundle.monodromy(gen, b - 1) @ sc.a2_block(b)
                                   - sc.a2_block(b) @ bundle.monodromy(gen, b)))
    curv = 0.0
    if len(bundle.monodromies) == 2:
        for b in range(m + 1):
            curv = max(curv, _absmax(
                bundle.monodromy(0, b) @ bundle.monodromy(1, b)
                - bundle.monodromy(1, b) @ bundle.monodromy(0, b)))
    for b in range(m + 1):
        curv = max(curv, _absmax(sc.a0_block(b - 1) @ sc.a2_block(b)
                                 + sc.a2_block(b + 1) @ sc.a0_block(b)))
    return FlatnessReport(sq, pa0, pa2, curv)


def _absmax(A) -> float:
    A = np.asarray(A)
    return float(np.abs(A).max()) if A.size else 0.0


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def contraction_matrix(v: np.ndarray, p: int) -> np.ndarray:
    """Interior multiplication by the vector v: Lambda^p -> Lambda^{p-1}."""
    n = len(v)
    src = lie.multi_indices(n, p)
    dst = {idx: r for r, idx in enumerate(lie.multi_indices(n, p - 1))}
    out = np.zeros((len(dst), len(src)))
    for c, I in enumerate(src):
        for a, ia in enumerate(I):
            out[dst[I[:a] + I[a + 1:]], c] += (-1) ** a * v[ia]
    return out


def from_affine_bundle(algebra, base: BaseModel, monodromy_action=None,
                       T=None, F=None, grading=None,
                       tol: float = 1e-12) -> Superconnection:
    """Superconnection of an affine bundle: fiber differential + holonomy of
    the affine action + interior multiplication by the curvature 2-form.

    `monodromy_action`: per base generator, an automorphism of the fiber
    algebra as an n x n matrix. `T`: curvature coefficient, a length-n vector
    of vertical components of the area-form coefficient (torus base only).
    Raises FlatnessError naming the violated identity if the data is not flat.
    """
    n = algebra.n
    if F is None:
        F = lie.FiniteSymmetryGroup.trivial(n)
    trivial_F = len(F.elements) == 1
    bases = [None if trivial_F else lie.invariant_basis(F, b)
             for b in range(n + 1)]

    def restrict(mat, b_src, b_dst):
        if trivial_F:
            return mat
        return bases[b_dst].T @ mat @ bases[b_src]

    ranks = [len(lie.multi_indices(n, b)) if trivial_F else bases[b].shape[1]
             for b in range(n + 1)]
    gens = base.dim
    if monodromy_action is None:
        monodromy_action = [np.eye(n)] * gens
    monos = []
    for g in monodromy_action:
        g = np.asarray(g, dtype=float)
        ginv_t = np.linalg.inv(g).T
        per_degree = [restrict(lie.compound_matrix(ginv_t, b), b, b)
                      for b in range(n + 1)]
        monos.append(per_degree)
    bundle = GradedBundle(ranks, monos, generators=gens)
    a0 = [restrict(lie.ce_matrix(algebra, b), b, b + 1) for b in range(n)]
    a2 = None
    if T is not None:
        v = np.asarray(T, dtype=float)
        a2 = [restrict(contraction_matrix(v, b), b, b - 1)
              for b in range(1, n + 1)]
    sc = Superconnection(bundle, base, a0=a0, a2=a2)
    rep = check_flatness(sc)
    if not rep.ok(tol):
        raise FlatnessError(
            f"flatness identity {rep.worst_identity()!r} violated "
            f"by {rep.max_violation:.3e}")
    return sc


def circle_bundle_model(base: BaseModel, coeff: float) -> Superconnection:
    """Two trivial line bundles with the curvature 2-form coupling them: the
    invariant-forms model of an oriented circle bundle over the base."""
    if base.kind != "torus2":
        raise InputError("the circle-bundle model needs a 2-torus base")
    bundle = GradedBundle([1, 1], generators=2)
    return Superconnection(bundle, base, a0=[np.zeros((1, 1))],
                           a2=[np.array([[float(coeff)]])])


def _num_matrix(rows) -> np.ndarray:
    """Matrix whose entries may be numbers or rational strings like "1/3"."""
    from fractions import Fraction
    out = [[float(Fraction(x)) if isinstance(x, str) else float(x)
            for x in row] for row in rows]
    return np.array(out, dtype=float)


def load_bundle(source) -> tuple[Superconnection, MetricField]:
    """Superconnection plus metric from a JSON file path or a parsed dict.

    Two shapes are accepted: a fiber-algebra description ("fiber",
    "monodromy_action", a0 = "ce_differential", a2 = {"interior": [...T...]})
    or explicit per-degree data ("ranks", "monodromy", "a0_blocks",
    "a2_blocks"). "metric" picks "identity" (default) or "equivariant".
    """
    import json
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source) as fh:
            payload = json.load(fh)
    else:
        payload = source
    if not isinstance(payload, dict) or "base" not in payload:
        raise InputError("bundle description needs a 'base' entry")
    b = payload["base"]
    try:
        base = BaseModel(b["kind"], int(b["resolution"]),
                         tuple(b.get("circumferences",
                                     [1.0] * (2 if b["kind"] == "torus2" else 1))))
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed base description: {exc}") from exc

    if "fiber" in payload:
        algebra = lie.load_algebra(payload["fiber"])
        rep = lie.validate(algebra)
        if not rep.ok():
            raise InputError(f"fiber algebra invalid: {rep}")
        action = payload.get("monodromy_action")
        if action is not None:
            action = [_num_matrix(g) for g in action]
        a0_kind = payload.get("a0", "ce_differential")
        if a0_kind not in ("ce_differential", None):
            raise InputError(f"unknown a0 specification {a0_kind!r}")
        T = None
        a2_spec = payload.get("a2")
        if a2_spec is not None:
            if not (isinstance(a2_spec, dict) and "interior" in a2_spec):
                raise InputError("a2 must be {'interior': [components]}")
            T = [float(x) for x in a2_spec["interior"]]
        sc = from_affine_bundle(algebra, base, monodromy_action=action, T=T)
        if a0_kind is None:
            sc = Superconnection(sc.bundle, base, a0=None, a2=None)
    else:
        try:
            ranks = [int(r) for r in payload["ranks"]]
        except (KeyError, TypeError) as exc:
            raise InputError("explicit bundle needs 'ranks'") from exc
        monos = payload.get("monodromy")
        if monos is not None:
            monos = [[_num_matrix(m) for m in gen] for gen in monos]
        bundle = GradedBundle(ranks, monos, generators=base.dim)
        a0 = payload.get("a0_blocks")
        a2 = payload.get("a2_blocks")
        sc = Superconnection(
            bundle, base,
            a0=[_num_matrix(m) for m in a0] if a0 is not None else None,
            a2=[_num_matrix(m) for m in a2] if a2 is not None else None)
    metric_kind = payload.get("metric", "identity")
    if metric_kind == "identity":
        h = MetricField.identity(sc.bundle)
    elif metric_kind == "equivariant":
        h = MetricField.equivariant(sc.bundle, base)
    else:
        raise InputError(f"unknown metric kind {metric_kind!r}")
    return sc, h


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------

def _shift_blocks(base: BaseModel, gen: int, phi: np.ndarray):
    """(rows, cols, blocks) for the one-step shift with monodromy twist."""
    N = base.resolution
    r = phi.shape[0]
    eye = np.eye(r)
    rows, cols, blocks = [], [], []
    if base.kind == "circle":
        for j in range(N):
            nxt = j + 1
            rows.append(j)
            cols.append(nxt % N)
            blocks.append(eye if nxt < N else phi)
    else:
        for i in range(N):
            for j in range(N):
                p = i * N + j
                if gen == 0:
                    q = ((i + 1) % N) * N + j
                    wrap = i + 1 == N
                else:
                    q = i * N + (j + 1) % N
                    wrap = j + 1 == N
                rows.append(p)
                cols.append(q)
                blocks.append(phi if wrap else eye)
    return rows, cols, blocks


def _block_coo(rows, cols, blocks, nrow_pts, ncol_pts):
    r_out, r_in = blocks[0].shape
    data = np.array(blocks)
    bi, bj = np.meshgrid(np.arange(r_out), np.arange(r_in), indexing="ij")
    row_idx = (np.array(rows)[:, None, None] * r_out + bi[None]).ravel()
    col_idx = (np.array(cols)[:, None, None] * r_in + bj[None]).ravel()
    return sp.coo_matrix((data.ravel(), (row_idx, col_idx)),
                         shape=(nrow_pts * r_out, ncol_pts * r_in)).tocsr()


def _derivative(base: BaseModel, gen: int, phi: np.ndarray) -> sp.csr_matrix:
    rows, cols, blocks = _shift_blocks(base, gen, phi)
    npts = base.npoints
    S = _block_coo(rows, cols, blocks, npts, npts)
    I = sp.identity(npts * phi.shape[0], format="csr")
    return (S - I) / base.steps[gen]


def _pointwise(base: BaseModel, mat: np.ndarray) -> sp.csr_matrix:
    return sp.kron(sp.identity(base.npoints, format="csr"), mat, format="csr")


class DiscreteComplex:
    """Assembled total differential and mass matrices on the staggered grids."""

    def __init__(self, sc: Superconnection, h: MetricField,
                 check_metric: bool = True):
        self.sc = sc
        self.base = sc.base
        self.bundle = sc.bundle
        self.h = h
        if h.bundle is not sc.bundle and h.bundle.ranks != sc.bundle.ranks:
            raise InputError("metric belongs to a different bundle")
        if check_metric:
            h.check_equivariance(self.base)
        self._mass_cache: dict[int, sp.csr_matrix] = {}
        self._diff_cache: dict[int, sp.csr_matrix] = {}

    # -- layout -------------------------------------------------------------

    def components(self, p: int) -> list[tuple[tuple[int, ...], int]]:
        out = []
        for a in range(self.base.dim + 1):
            b = p - a
            if 0 <= b <= self.bundle.top and self.bundle.rank(b) > 0:
                for dirs in self.base.form_components(a):
                    out.append((dirs, b))
        return out

    def component_size(self, comp) -> int:
        _, b = comp
        return self.base.npoints * self.bundle.rank(b)

    def dim(self, p: int) -> int:
        return sum(self.component_size(c) for c in self.components(p))

    def _offsets(self, p: int) -> dict:
        out, off = {}, 0
        for comp in self.components(p):
            out[comp] = off
            off += self.component_size(comp)
        return out

    # -- differential -------------------------------------------------------

    def differential(self, p: int) -> sp.csr_matrix:
        if p in self._diff_cache:
            return self._diff_cache[p]
        src = self.components(p)
        dst = self.components(p + 1)
        src_off, dst_off = self._offsets(p), self._offsets(p + 1)
        n_src, n_dst = self.dim(p), self.dim(p + 1)
        D = sp.lil_matrix((n_dst, n_src))
        for dirs, b in src:
            a = len(dirs)
            col = src_off[(dirs, b)]
            w = self.component_size((dirs, b))
            # base exterior derivative
            for gen in range(self.base.dim):
                if gen in dirs:
                    continue
                new_dirs = tuple(sorted(dirs + (gen,)))
                sign = (-1) ** new_dirs.index(gen)
                if (new_dirs, b) in dst_off:
                    row = dst_off[(new_dirs, b)]
                    blk = sign * _derivative(self.base, gen,
                                             self.bundle.monodromy(gen, b))
                    D[row:row + blk.shape[0], col:col + w] = blk
            # fiber differential, with the Koszul sign on a-forms
            if (dirs, b + 1) in dst_off:
                row = dst_off[(dirs, b + 1)]
                blk = (-1) ** a * _pointwise(self.base, self.sc.a0_block(b))
                D[row:row + blk.shape[0], col:col + w] = blk
            # curvature term: 0-forms to area forms
            if a == 0 and self.base.dim == 2 and ((0, 1), b - 1) in dst_off:
                row = dst_off[((0, 1), b - 1)]
                blk = _pointwise(self.base, self.sc.a2_block(b))
                D[row:row + blk.shape[0], col:col + w] = blk
        out = D.tocsr()
        self._diff_cache[p] = out
        return out

    # -- mass ---------------------------------------------------------------

    def _mass_blocks(self, p: int) -> np.ndarray | None:
        blocks = []
        vol = self.base.cell_volume
        for dirs, b in self.components(p):
            pts = self.base.points(stagger=dirs)
            hb = self.h.sample(b, pts)
            blocks.append(vol * hb)
        if not blocks:
            return None
        return blocks

    def mass(self, p: int) -> sp.csr_matrix:
        if p not in self._mass_cache:
            blocks = self._mass_blocks(p)
            self._mass_cache[p] = (sp.csr_matrix((0, 0)) if blocks is None
                                   else _block_diag_sparse(blocks))
        return self._mass_cache[p]

    def mass_powers(self, p: int, power: float) -> sp.csr_matrix:
        blocks = self._mass_blocks(p)
        if blocks is None:
            return sp.csr_matrix((0, 0))
        powered = [_spd_power(blk, power) for blk in blocks]
        return _block_diag_sparse(powered)

    # -- Laplacian ----------------------------------------------------------

    def stiffness(self, p: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """(K, M) of the pencil K v = lambda M v for the degree-p Laplacian."""
        M = self.mass(p)
        K = sp.csr_matrix((self.dim(p), self.dim(p)))
        if self.dim(p + 1) > 0:
            D = self.differential(p)
            K = K + D.T @ self.mass(p + 1) @ D
        if p > 0 and self.dim(p - 1) > 0:
            Dm = self.differential(p - 1)
            Minv = self.mass_powers(p - 1, -1.0)
            K = K + M @ Dm @ Minv @ Dm.T @ M
        return K.tocsr(), M

    def laplacian(self, p: int) -> sp.csr_matrix:
        """Symmetric matrix similar to the degree-p Laplacian (conjugated by
        the square root of the mass)."""
        K, _ = self.stiffness(p)
        Mhalf_inv = self.mass_powers(p, -0.5)
        L = Mhalf_inv @ K @ Mhalf_inv
        return (0.5 * (L + L.T)).tocsr()

    def operator_norm(self, other: "DiscreteComplex") -> float:
        """Weighted operator norm of the difference of the two total
        differentials (both complexes must share the grid and metric)."""
        worst = 0.0
        top = self.base.dim + self.bundle.top
        for p in range(top + 1):
            if self.dim(p) == 0 or self.dim(p + 1) == 0:
                continue
            X = self.differential(p) - other.differential(p)
            if X.nnz == 0:
                continue
            A = self.mass_powers(p + 1, 0.5) @ X @ self.mass_powers(p, -0.5)
            G = (A.T @ A).toarray() if A.shape[1] <= 1500 else None
            if G is not None:
                worst = max(worst, float(np.sqrt(max(
                    0.0, np.linalg.eigvalsh(0.5 * (G + G.T))[-1]))))
            else:
                s = spla.svds(A, k=1, return_singular_vectors=False)
                worst = max(worst, float(s[0]))
        return worst


def _block_diag_sparse(blocks) -> sp.csr_matrix:
    mats = []
    for blk in blocks:
        npts, r, _ = blk.shape
        rows = np.repeat(np.arange(npts * r), r)
        cols = (np.arange(npts)[:, None, None] * r
                + np.broadcast_to(np.arange(r), (npts, r, r))).ravel()
        mats.append(sp.coo_matrix((blk.ravel(), (rows, cols)),
                                  shape=(npts * r, npts * r)))
    return sp.block_diag(mats, format="csr") if mats else sp.csr_matrix((0, 0))


def _spd_power(blocks: np.ndarray, power: float) -> np.ndarray:
    w, v = np.linalg.eigh(blocks)
    if w.min() <= 0:
        raise InputError("mass block not positive definite")
    return np.einsum("pij,pj,pkj->pik", v, w ** power, v)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

_DENSE_LIMIT = 2200


def laplacian(sc: Superconnection, h: MetricField, p: int,
              check_metric: bool = True):
    """Galerkin matrix of the degree-p superconnection Laplacian; dense below
    a size cutoff, sparse CSR above it."""
    dc = DiscreteComplex(sc, h, check_metric=check_metric)
    L = dc.laplacian(p)
    return L.toarray() if L.shape[0] <= _DENSE_LIMIT else L


def spectrum(sc: Superconnection, h: MetricField, p: int, count: int = 12,
             tol: float = 1e-10, check_metric: bool = True) -> SpectrumReport:
    """Lowest eigenvalues of the degree-p Laplacian with the gap-rule split."""
    dc = DiscreteComplex(sc, h, check_metric=check_metric)
    L = dc.laplacian(p)
    n = L.shape[0]
    if n == 0:
        return SpectrumReport.from_eigenvalues(p, [])
    k = min(count, n)
    if n <= _DENSE_LIMIT:
        lam = np.linalg.eigvalsh(L.toarray())[:k]
    else:
        scale = max(1.0, float(abs(L).max()))
        lam = spla.eigsh(L, k=k, sigma=-1e-3 * scale, which="LM",
                         return_eigenvectors=False)
        lam = np.sort(lam)
    lam = np.where(np.abs(lam) < tol * max(1.0, np.abs(lam).max()),
                   np.maximum(lam, 0.0), lam)
    if lam.min(initial=0.0) < -1e-6:
        raise ArithmeticError("Laplacian produced a significantly negative eigenvalue")
    return SpectrumReport.from_eigenvalues(p, np.maximum(lam, 0.0))


@dataclass(frozen=True)
class PerturbationReport:
    """Eq-style square-root eigenvalue continuity check between two flat
    superconnections on the same bundle and metric."""

    operator_norm: float
    bound: float
    max_difference: float
    max_ratio: float
    holds: bool


PERTURBATION_CONSTANT = 2.0 + np.sqrt(2.0)


def perturbation_check(sc1: Superconnection, sc2: Superconnection,
                       h: MetricField, p: int, count: int = 8) -> PerturbationReport:
    if sc1.bundle.ranks != sc2.bundle.ranks:
        raise InputError("superconnections live on different bundles")
    for gen in range(len(sc1.bundle.monodromies)):
        for b in range(len(sc1.bundle.ranks)):
            if _absmax(sc1.bundle.monodromy(gen, b)
                       - sc2.bundle.monodromy(gen, b)) > 1e-12:
                raise InputError("difference must be an endomorphism-valued "
                                 "form: monodromies differ")
    d1 = DiscreteComplex(sc1, h)
    d2 = DiscreteComplex(sc2, h, check_metric=False)
    norm = d1.operator_norm(d2)
    s1 = spectrum(sc1, h, p, count=count, check_metric=False)
    s2 = spectrum(sc2, h, p, count=count, check_metric=False)
    diffs = np.abs(np.sqrt(s1.eigenvalues) - np.sqrt(s2.eigenvalues))
    bound = PERTURBATION_CONSTANT * norm
    max_diff = float(diffs.max(initial=0.0))
    ratio = max_diff / bound if bound > 0 else (0.0 if max_diff == 0 else np.inf)
    return PerturbationReport(norm, bound, max_diff, ratio,
                              bool(max_diff <= bound + 1e-9))


@dataclass(frozen=True)
class MetricContinuityReport:
    eps_in: float
    eps_out: float


def metric_continuity_check(sc: Superconnection, h1: MetricField,
                            h2: MetricField, p: int, eps: float,
                            count: int = 8) -> MetricContinuityReport:
    """Smallest eps' with eps'-close spectra for two eps-close metrics."""
    from .report import closeness_epsilon
    s1 = spectrum(sc, h1, p, count=count)
    s2 = spectrum(sc, h2, p, count=count)
    return MetricContinuityReport(eps, closeness_epsilon(s1, s2))
