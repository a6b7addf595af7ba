//! Projectors, approximate projections and cone calculus for constraint sets
//! that need not be manifolds.

use crate::error::{Error, Result};
use crate::manifolds::Manifold;
use crate::numkernels::{nnls, pinv, rank, svd, sym_apply, DenseMatrix, TOL_RANK};

/// Active-set tolerance used by [`ConeQuery`] unless overridden.
pub const DEFAULT_ACTIVE_TOL: f64 = 1e-8;

/// Anything that maps a point to a (possibly approximate) nearest point of a set.
pub trait Projector {
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectorKind {
    /// `{x : aᵀx ≤ b}`
    Halfspace { a: DenseMatrix, b: f64 },
    /// `{x : aᵀx = b}`
    Hyperplane { a: DenseMatrix, b: f64 },
    /// `{x : Lx = c}` with `L` of full row rank.
    AffineRows { l: DenseMatrix, c: DenseMatrix },
    /// Symmetric positive semidefinite `n x n` matrices.
    PsdCone { n: usize },
    /// `n x n` matrices with unit diagonal.
    UnitDiagonal { n: usize },
    /// `n x m` matrices of rank at most `r` (nonconvex).
    FixedRankTrunc { n: usize, m: usize, r: usize },
    /// `n x m` matrices with orthonormal columns (nonconvex).
    StiefelPolar { n: usize, m: usize },
    /// `{x : lo ≤ x ≤ hi}` componentwise.
    Box { lo: DenseMatrix, hi: DenseMatrix },
}

/// Exact projection onto one simple set.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementaryProjector {
    kind: ProjectorKind,
    // L† for AffineRows
    pinv: Option<DenseMatrix>,
}

impl ElementaryProjector {
    pub fn new(kind: ProjectorKind) -> Result<Self> {
        let mut pinv_cache = None;
        match &kind {
            ProjectorKind::Halfspace { a, b } | ProjectorKind::Hyperplane { a, b } => {
                if a.cols() != 1 || a.norm() == 0.0 || !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidSpec(
                        "halfspace normal must be a finite nonzero column vector".into(),
                    ));
                }
            }
            ProjectorKind::AffineRows { l, c } => {
                c.ensure_shape((l.rows(), 1))?;
                pinv_cache = Some(pinv(l)?);
            }
            ProjectorKind::PsdCone { n } | ProjectorKind::UnitDiagonal { n } => {
                if *n == 0 {
                    return Err(Error::InvalidSpec("matrix dimension must be positive".into()));
                }
            }
            ProjectorKind::FixedRankTrunc { n, m, r } => {
                if *r == 0 || *r > (*n).min(*m) {
                    return Err(Error::InvalidSpec(format!(
                        "rank {r} out of range for {n}x{m} matrices"
                    )));
                }
            }
            ProjectorKind::StiefelPolar { n, m } => {
                if *m == 0 || m > n {
                    return Err(Error::InvalidSpec(format!(
                        "Stiefel projector requires 0 < m <= n, got n={n}, m={m}"
                    )));
                }
            }
            ProjectorKind::Box { lo, hi } => {
                hi.ensure_shape(lo.shape())?;
                if lo.as_slice().iter().zip(hi.as_slice()).any(|(l, h)| !(l <= h)) {
                    return Err(Error::InvalidSpec("box requires lo <= hi componentwise".into()));
                }
            }
        }
        Ok(Self {
            kind,
            pinv: pinv_cache,
        })
    }

    pub fn halfspace(a: &[f64], b: f64) -> Result<Self> {
        Self::new(ProjectorKind::Halfspace {
            a: DenseMatrix::column(a),
            b,
        })
    }

    pub fn hyperplane(a: &[f64], b: f64) -> Result<Self> {
        Self::new(ProjectorKind::Hyperplane {
            a: DenseMatrix::column(a),
            b,
        })
    }

    pub fn affine_rows(l: DenseMatrix, c: DenseMatrix) -> Result<Self> {
        Self::new(ProjectorKind::AffineRows { l, c })
    }

    pub fn psd_cone(n: usize) -> Result<Self> {
        Self::new(ProjectorKind::PsdCone { n })
    }

    pub fn unit_diagonal(n: usize) -> Result<Self> {
        Self::new(ProjectorKind::UnitDiagonal { n })
    }

    pub fn fixed_rank_trunc(n: usize, m: usize, r: usize) -> Result<Self> {
        Self::new(ProjectorKind::FixedRankTrunc { n, m, r })
    }

    pub fn stiefel_polar(n: usize, m: usize) -> Result<Self> {
        Self::new(ProjectorKind::StiefelPolar { n, m })
    }

    pub fn boxed(lo: &[f64], hi: &[f64]) -> Result<Self> {
        Self::new(ProjectorKind::Box {
            lo: DenseMatrix::column(lo),
            hi: DenseMatrix::column(hi),
        })
    }

    pub fn kind(&self) -> &ProjectorKind {
        &self.kind
    }

    pub fn is_convex(&self) -> bool {
        !matches!(
            self.kind,
            ProjectorKind::FixedRankTrunc { .. } | ProjectorKind::StiefelPolar { .. }
        )
    }

    pub fn input_shape(&self) -> (usize, usize) {
        match &self.kind {
            ProjectorKind::Halfspace { a, .. } | ProjectorKind::Hyperplane { a, .. } => (a.rows(), 1),
            ProjectorKind::AffineRows { l, .. } => (l.cols(), 1),
            ProjectorKind::PsdCone { n } | ProjectorKind::UnitDiagonal { n } => (*n, *n),
            ProjectorKind::FixedRankTrunc { n, m, .. } | ProjectorKind::StiefelPolar { n, m } => {
                (*n, *m)
            }
            ProjectorKind::Box { lo, .. } => lo.shape(),
        }
    }

    fn project_impl(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        x.ensure_shape(self.input_shape())?;
        x.ensure_finite()?;
        Ok(match &self.kind {
            ProjectorKind::Halfspace { a, b } => {
                let excess = a.dot(x) - b;
                if excess <= 0.0 {
                    x.clone()
                } else {
                    x.add_scaled(a, -excess / a.dot(a))
                }
            }
            ProjectorKind::Hyperplane { a, b } => x.add_scaled(a, -(a.dot(x) - b) / a.dot(a)),
            ProjectorKind::AffineRows { l, c } => {
                let lp = self.pinv.as_ref().expect("affine pinv");
                x - &lp.matmul(&(&l.matmul(x) - c))
            }
            ProjectorKind::PsdCone { .. } => sym_apply(&x.sym(), |lam| lam.max(0.0))?,
            ProjectorKind::UnitDiagonal { n } => {
                let mut y = x.clone();
                for i in 0..*n {
                    y[(i, i)] = 1.0;
                }
                y
            }
            ProjectorKind::FixedRankTrunc { r, .. } => {
                let s = svd(x)?;
                let sr = s.sigma[r - 1];
                let next = s.sigma.get(*r).copied().unwrap_or(0.0);
                if next > 0.0 && sr - next <= TOL_RANK * s.sigma[0].max(1.0) {
                    return Err(Error::NonUniqueProjection(format!(
                        "sigma_r = {sr:e} ties with sigma_r+1 = {next:e}"
                    )));
                }
                s.reconstruct(*r)
            }
            ProjectorKind::StiefelPolar { m, .. } => {
                let s = svd(x)?;
                let threshold = TOL_RANK * s.sigma[0].max(1.0);
                if s.sigma[m - 1] <= threshold {
                    return Err(Error::RankDeficient {
                        pivot: s.sigma[m - 1],
                        threshold,
                    });
                }
                s.polar(*m)
            }
            ProjectorKind::Box { lo, hi } => {
                let data = x
                    .as_slice()
                    .iter()
                    .zip(lo.as_slice().iter().zip(hi.as_slice()))
                    .map(|(v, (l, h))| v.clamp(*l, *h))
                    .collect();
                DenseMatrix::from_vec(x.rows(), x.cols(), data)?
            }
        })
    }
}

impl Projector for ElementaryProjector {
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.project_impl(x)
    }
}

impl Projector for Manifold {
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Manifold::project(self, x)
    }
}

/// Outcome of [`ApproxProjection::projection_limit`].
#[derive(Debug, Clone, PartialEq)]
pub struct LimitEstimate {
    pub point: DenseMatrix,
    pub iterations: usize,
}

/// The map `f` of the approximate-projection schemes: sweeps of relaxed
/// projections `(1−λ)x + λPⁱ(x)` over the stages, optionally with Dykstra
/// corrections.
///
/// With corrections enabled the instance is stateful: [`apply`](Self::apply)
/// continues from the corrections left by the previous call. Use
/// [`apply_fresh`](Self::apply_fresh) for the memoryless map.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxProjection {
    stages: Vec<ElementaryProjector>,
    relaxation: f64,
    sweeps_per_call: usize,
    dykstra: Option<bool>,
    corrections: Vec<DenseMatrix>,
}

impl ApproxProjection {
    pub fn new(stages: Vec<ElementaryProjector>) -> Result<Self> {
        let Some(first) = stages.first() else {
            return Err(Error::InvalidSpec("approximate projection needs at least one stage".into()));
        };
        let shape = first.input_shape();
        if let Some(bad) = stages.iter().find(|s| s.input_shape() != shape) {
            return Err(Error::ShapeMismatch {
                expected: shape,
                got: bad.input_shape(),
            });
        }
        Ok(Self {
            stages,
            relaxation: 1.0,
            sweeps_per_call: 1,
            dykstra: None,
            corrections: Vec::new(),
        })
    }

    pub fn with_relaxation(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidSpec(format!("relaxation must lie in (0, 1], got {lambda}")));
        }
        if lambda < 1.0 && self.dykstra == Some(true) {
            return Err(Error::InvalidSpec(
                "Dykstra corrections require unrelaxed stages (lambda = 1)".into(),
            ));
        }
        self.relaxation = lambda;
        Ok(self)
    }

    pub fn with_sweeps(mut self, sweeps: usize) -> Result<Self> {
        if sweeps == 0 {
            return Err(Error::InvalidSpec("sweeps_per_call must be positive".into()));
        }
        self.sweeps_per_call = sweeps;
        Ok(self)
    }

    pub fn with_dykstra(mut self, enabled: bool) -> Result<Self> {
        if enabled && !self.all_convex() {
            return Err(Error::InvalidSpec(
                "Dykstra corrections are only valid when every stage is convex".into(),
            ));
        }
        if enabled && self.relaxation < 1.0 {
            return Err(Error::InvalidSpec(
                "Dykstra corrections require unrelaxed stages (lambda = 1)".into(),
            ));
        }
        self.dykstra = Some(enabled);
        self.corrections.clear();
        Ok(self)
    }

    pub fn stages(&self) -> &[ElementaryProjector] {
        &self.stages
    }

    pub fn relaxation(&self) -> f64 {
        self.relaxation
    }

    pub fn sweeps_per_call(&self) -> usize {
        self.sweeps_per_call
    }

    pub fn all_convex(&self) -> bool {
        self.stages.iter().all(ElementaryProjector::is_convex)
    }

    /// Whether Dykstra corrections are in effect (default: on for convex,
    /// unrelaxed stage lists).
    pub fn dykstra_enabled(&self) -> bool {
        self.dykstra
            .unwrap_or(self.all_convex() && self.relaxation == 1.0)
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.stages[0].input_shape()
    }

    /// Clears the Dykstra correction state.
    pub fn reset(&mut self) {
        self.corrections.clear();
    }

    fn sweeps(&self, x: &DenseMatrix, sweeps: usize, q: &mut Vec<DenseMatrix>) -> Result<DenseMatrix> {
        x.ensure_shape(self.input_shape())?;
        let dykstra = self.dykstra_enabled();
        if dykstra && q.len() != self.stages.len() {
            *q = vec![DenseMatrix::zeros(x.rows(), x.cols()); self.stages.len()];
        }
        let lambda = self.relaxation;
        let mut y = x.clone();
        for _ in 0..sweeps {
            for (i, stage) in self.stages.iter().enumerate() {
                if dykstra {
                    let shifted = &y + &q[i];
                    let p = stage.project_impl(&shifted)?;
                    q[i] = &shifted - &p;
                    y = p;
                } else {
                    let p = stage.project_impl(&y)?;
                    y = if lambda == 1.0 {
                        p
                    } else {
                        y.scale(1.0 - lambda).add_scaled(&p, lambda)
                    };
                }
            }
        }
        Ok(y)
    }

    /// One call of `f`, continuing the Dykstra state from the previous call.
    pub fn apply(&mut self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut q = std::mem::take(&mut self.corrections);
        let out = self.sweeps(x, self.sweeps_per_call, &mut q);
        self.corrections = q;
        out
    }

    /// One call of `f` from zero corrections; a fixed map of `x`.
    pub fn apply_fresh(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.apply_fresh_sweeps(x, self.sweeps_per_call)
    }

    /// `f` with an explicit sweep count, from zero corrections.
    pub fn apply_fresh_sweeps(&self, x: &DenseMatrix, sweeps: usize) -> Result<DenseMatrix> {
        self.sweeps(x, sweeps, &mut Vec::new())
    }

    /// Iterates `f` from `x` until successive iterates differ by at most `tol`.
    pub fn projection_limit(&self, x: &DenseMatrix, tol: f64, max_iter: usize) -> Result<LimitEstimate> {
        if !(tol > 0.0) {
            return Err(Error::InvalidSpec(format!("tolerance must be positive, got {tol}")));
        }
        let mut work = self.clone();
        work.reset();
        let mut cur = x.clone();
        for k in 1..=max_iter {
            let before = work.corrections.clone();
            let next = work.apply(&cur)?;
            // a Dykstra sweep can return the same point while the corrections still move
            let mut step = next.dist(&cur);
            if before.len() == work.corrections.len() {
                step += before
                    .iter()
                    .zip(&work.corrections)
                    .map(|(a, b)| a.dist(b))
                    .sum::<f64>();
            }
            cur = next;
            if step <= tol {
                return Ok(LimitEstimate {
                    point: cur,
                    iterations: k,
                });
            }
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
        })
    }
}

impl Projector for ApproxProjection {
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.apply_fresh(x)
    }
}

/// The polyhedron `{x : a_iᵀx ≤ b_i}` together with an active-set tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeQuery {
    /// Outward normals as rows.
    a: DenseMatrix,
    b: Vec<f64>,
    active_tol: f64,
}

impl ConeQuery {
    pub fn new(a: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        if a.rows() != b.len() {
            return Err(Error::ShapeMismatch {
                expected: (a.rows(), 1),
                got: (b.len(), 1),
            });
        }
        for i in 0..a.rows() {
            if (0..a.cols()).all(|j| a[(i, j)] == 0.0) {
                return Err(Error::InvalidSpec(format!("constraint {i} has a zero normal")));
            }
        }
        Ok(Self {
            a,
            b,
            active_tol: DEFAULT_ACTIVE_TOL,
        })
    }

    /// `{x : lo ≤ x ≤ hi}` written as `2d` inequalities.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::ShapeMismatch {
                expected: (lo.len(), 1),
                got: (hi.len(), 1),
            });
        }
        let d = lo.len();
        let mut a = DenseMatrix::zeros(2 * d, d);
        let mut b = Vec::with_capacity(2 * d);
        for i in 0..d {
            a[(2 * i, i)] = 1.0;
            b.push(hi[i]);
            a[(2 * i + 1, i)] = -1.0;
            b.push(-lo[i]);
        }
        Self::new(a, b)
    }

    pub fn with_active_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidSpec(format!("active_tol must be positive, got {tol}")));
        }
        self.active_tol = tol;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn n_constraints(&self) -> usize {
        self.b.len()
    }

    pub fn active_tol(&self) -> f64 {
        self.active_tol
    }

    fn normal(&self, i: usize) -> DenseMatrix {
        DenseMatrix::column(&(0..self.dim()).map(|j| self.a[(i, j)]).collect::<Vec<_>>())
    }

    /// One halfspace projector per inequality.
    pub fn halfspace_stages(&self) -> Result<Vec<ElementaryProjector>> {
        (0..self.n_constraints())
            .map(|i| {
                ElementaryProjector::new(ProjectorKind::Halfspace {
                    a: self.normal(i),
                    b: self.b[i],
                })
            })
            .collect()
    }

    /// Largest constraint violation `max(0, max_i a_iᵀx − b_i)`.
    pub fn violation(&self, x: &DenseMatrix) -> Result<f64> {
        x.ensure_shape((self.dim(), 1))?;
        let ax = self.a.matmul(x);
        Ok((0..self.b.len())
            .map(|i| ax[(i, 0)] - self.b[i])
            .fold(0.0, f64::max))
    }

    pub fn active_set(&self, x: &DenseMatrix) -> Result<Vec<usize>> {
        x.ensure_shape((self.dim(), 1))?;
        let ax = self.a.matmul(x);
        Ok((0..self.b.len())
            .filter(|&i| ax[(i, 0)] >= self.b[i] - self.active_tol)
            .collect())
    }

    /// Distance from `h` to the normal cone at `x`: zero iff `h ∈ N(x)`.
    pub fn normal_cone_residual(&self, x: &DenseMatrix, h: &DenseMatrix) -> Result<f64> {
        h.ensure_shape((self.dim(), 1))?;
        let violation = self.violation(x)?;
        if violation > self.active_tol {
            return Err(Error::Infeasible { violation });
        }
        let active = self.active_set(x)?;
        if active.is_empty() {
            return Ok(h.norm());
        }
        let mut g = DenseMatrix::zeros(self.dim(), active.len());
        for (k, &i) in active.iter().enumerate() {
            for j in 0..self.dim() {
                g[(j, k)] = self.a[(i, j)];
            }
        }
        let coef = nnls(&g, h.as_slice())?;
        let fit = g.matmul(&DenseMatrix::column(&coef));
        Ok(h.dist(&fit))
    }
}

/// Checks `x ∈ P(x + τv)`, i.e. that `v` is a proximal normal at `x`.
pub fn proximal_normal_check<P: Projector + ?Sized>(
    p: &P,
    x_on_set: &DenseMatrix,
    v: &DenseMatrix,
    tau: f64,
    tol: f64,
) -> Result<bool> {
    let moved = p.project(&x_on_set.add_scaled(v, tau))?;
    Ok(moved.dist(x_on_set) <= tol)
}

/// Numerical evidence that the rank-`r` matrices and an affine set `{X : L vec(X) = c}`
/// intersect transversally at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransversalityWitness {
    pub fixed_rank_tangent_dim: usize,
    pub affine_tangent_dim: usize,
    pub sum_rank: usize,
    pub ambient_dim: usize,
}

impl TransversalityWitness {
    pub fn is_transversal(&self) -> bool {
        self.sum_rank == self.ambient_dim
    }
}

/// Builds tangent bases of both sets at `x` (vectorised row-major) and
/// reports the rank of their concatenation.
pub fn transversality_witness(
    rank_set: &ElementaryProjector,
    affine: &ElementaryProjector,
    x: &DenseMatrix,
) -> Result<TransversalityWitness> {
    let ProjectorKind::FixedRankTrunc { n, m, r } = *rank_set.kind() else {
        return Err(Error::InvalidSpec("first set must be FixedRankTrunc".into()));
    };
    let ProjectorKind::AffineRows { l, .. } = affine.kind() else {
        return Err(Error::InvalidSpec("second set must be AffineRows".into()));
    };
    let dim = n * m;
    l.ensure_shape((l.rows(), dim))?;
    let manifold = Manifold::fixed_rank(n, m, r)?;
    let lp = affine.pinv.as_ref().expect("affine pinv");
    let mut basis = DenseMatrix::zeros(dim, 2 * dim);
    let mut first = DenseMatrix::zeros(dim, dim);
    let mut second = DenseMatrix::zeros(dim, dim);
    for k in 0..dim {
        let mut e = DenseMatrix::zeros(n, m);
        e.as_mut_slice()[k] = 1.0;
        let t = manifold.tangent_project(x, &e)?.vec;
        let ev = DenseMatrix::column(e.as_slice());
        let a = &ev - &lp.matmul(&l.matmul(&ev));
        for j in 0..dim {
            first[(j, k)] = t.as_slice()[j];
            second[(j, k)] = a[(j, 0)];
            basis[(j, k)] = t.as_slice()[j];
            basis[(j, dim + k)] = a[(j, 0)];
        }
    }
    Ok(TransversalityWitness {
        fixed_rank_tangent_dim: rank(&first)?,
        affine_tangent_dim: rank(&second)?,
        sum_rank: rank(&basis)?,
        ambient_dim: dim,
    })
}
