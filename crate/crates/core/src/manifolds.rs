//! Embedded submanifolds: unit sphere, Stiefel, fixed-rank and affine.
//!
//! Points and tangent vectors live in ambient coordinates (vectors are
//! `n x 1` matrices). A [`Manifold`] pairs the set with the retraction used to
//! map tangent steps back onto it; the retraction is an explicit choice, not a
//! property of the set.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numkernels::{pinv, qr_qf, svd, DenseMatrix, TOL_RANK};

/// A point of the embedding space.
pub type AmbientPoint = DenseMatrix;

/// Default tolerance used when an operation requires an on-manifold input.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// Tangency tolerance for vectors produced by the projectors.
pub const TOL_TANGENT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldKind {
    /// Unit sphere in `R^dim`.
    Sphere { dim: usize },
    /// `n x m` matrices with orthonormal columns, `m <= n`.
    Stiefel { n: usize, m: usize },
    /// `n x m` matrices of rank exactly `r`.
    FixedRank { n: usize, m: usize, r: usize },
    /// `{ w : L w = c }` with `L` of full row rank.
    Affine { l: DenseMatrix, c: DenseMatrix },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Retraction {
    /// Metric projection of `x + v` back onto the set.
    Projection,
    /// Orthonormal factor of the QR decomposition of `X + V` (Stiefel).
    QrFactor,
    /// `(x + v) / ‖x + v‖` (sphere).
    Normalize,
    /// Closed-form geodesic (sphere).
    Exponential,
}

/// Lower bound on the injectivity radius and the step norm enforced below it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectivityGuard {
    r0: f64,
    clip_norm: f64,
}

impl InjectivityGuard {
    pub fn new(r0: f64, clip_norm: f64) -> Result<Self> {
        if !(r0 > 0.0 && clip_norm > 0.0 && clip_norm < r0) {
            return Err(Error::InvalidSpec(format!(
                "injectivity guard needs 0 < clip_norm < r0, got r0={r0}, clip_norm={clip_norm}"
            )));
        }
        Ok(Self { r0, clip_norm })
    }

    /// The sphere's injectivity radius is `pi`; steps are clipped at `pi / 2`.
    pub fn sphere_default() -> Self {
        Self {
            r0: std::f64::consts::PI,
            clip_norm: std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn clip_norm(&self) -> f64 {
        self.clip_norm
    }
}

/// An ambient vector attached to a base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: AmbientPoint,
    pub vec: DenseMatrix,
}

impl TangentVector {
    pub fn new(base: AmbientPoint, vec: DenseMatrix) -> Self {
        Self { base, vec }
    }

    pub fn zero(base: AmbientPoint) -> Self {
        let vec = DenseMatrix::zeros(base.rows(), base.cols());
        Self { base, vec }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            base: self.base.clone(),
            vec: self.vec.scale(alpha),
        }
    }

    pub fn norm(&self) -> f64 {
        self.vec.norm()
    }
}

/// Result of one exponential-map step.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpStep {
    pub point: AmbientPoint,
    /// The tangent vector was rescaled to the guard's clip norm.
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    kind: ManifoldKind,
    retraction: Retraction,
    // L† for the affine kind, computed once
    affine_pinv: Option<DenseMatrix>,
}

impl Manifold {
    pub fn new(kind: ManifoldKind, retraction: Retraction) -> Result<Self> {
        let affine_pinv = match &kind {
            ManifoldKind::Sphere { dim } => {
                if *dim == 0 {
                    return Err(Error::InvalidSpec("sphere dimension must be positive".into()));
                }
                None
            }
            ManifoldKind::Stiefel { n, m } => {
                if *m == 0 || m > n {
                    return Err(Error::InvalidSpec(format!(
                        "Stiefel manifold requires 0 < m <= n, got n={n}, m={m}"
                    )));
                }
                None
            }
            ManifoldKind::FixedRank { n, m, r } => {
                if *r == 0 || *r > (*n).min(*m) {
                    return Err(Error::InvalidSpec(format!(
                        "fixed-rank manifold requires 0 < r <= min(n, m), got n={n}, m={m}, r={r}"
                    )));
                }
                None
            }
            ManifoldKind::Affine { l, c } => {
                if c.shape() != (l.rows(), 1) {
                    return Err(Error::ShapeMismatch {
                        expected: (l.rows(), 1),
                        got: c.shape(),
                    });
                }
                let p = pinv(l).map_err(|e| {
                    Error::InvalidSpec(format!("affine constraint needs full row rank: {e}"))
                })?;
                Some(p)
            }
        };
        let valid = matches!(
            (&kind, retraction),
            (
                ManifoldKind::Sphere { .. },
                Retraction::Normalize | Retraction::Projection | Retraction::Exponential
            ) | (
                ManifoldKind::Stiefel { .. },
                Retraction::QrFactor | Retraction::Projection
            ) | (ManifoldKind::FixedRank { .. }, Retraction::Projection)
                | (ManifoldKind::Affine { .. }, Retraction::Projection)
        );
        if !valid {
            return Err(Error::InvalidSpec(format!(
                "retraction {retraction:?} is not available for {kind:?}"
            )));
        }
        Ok(Self {
            kind,
            retraction,
            affine_pinv,
        })
    }

    pub fn sphere(dim: usize) -> Result<Self> {
        Self::new(ManifoldKind::Sphere { dim }, Retraction::Normalize)
    }

    pub fn stiefel(n: usize, m: usize) -> Result<Self> {
        Self::new(ManifoldKind::Stiefel { n, m }, Retraction::QrFactor)
    }

    pub fn fixed_rank(n: usize, m: usize, r: usize) -> Result<Self> {
        Self::new(ManifoldKind::FixedRank { n, m, r }, Retraction::Projection)
    }

    pub fn affine(l: DenseMatrix, c: DenseMatrix) -> Result<Self> {
        Self::new(ManifoldKind::Affine { l, c }, Retraction::Projection)
    }

    pub fn with_retraction(self, retraction: Retraction) -> Result<Self> {
        Self::new(self.kind, retraction)
    }

    pub fn kind(&self) -> &ManifoldKind {
        &self.kind
    }

    pub fn retraction(&self) -> Retraction {
        self.retraction
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.kind, ManifoldKind::Sphere { .. })
    }

    pub fn ambient_shape(&self) -> (usize, usize) {
        match &self.kind {
            ManifoldKind::Sphere { dim } => (*dim, 1),
            ManifoldKind::Stiefel { n, m } | ManifoldKind::FixedRank { n, m, .. } => (*n, *m),
            ManifoldKind::Affine { l, .. } => (l.cols(), 1),
        }
    }

    /// Dimension of the tangent spaces.
    pub fn intrinsic_dim(&self) -> usize {
        match &self.kind {
            ManifoldKind::Sphere { dim } => dim - 1,
            ManifoldKind::Stiefel { n, m } => n * m - m * (m + 1) / 2,
            ManifoldKind::FixedRank { n, m, r } => (n + m - r) * r,
            ManifoldKind::Affine { l, .. } => l.cols() - l.rows(),
        }
    }

    fn check_shape(&self, x: &DenseMatrix) -> Result<()> {
        x.ensure_shape(self.ambient_shape())
    }

    /// Violation of the defining equations at `x`.
    ///
    /// Sphere: `|‖x‖ − 1|`; Stiefel: `‖XᵀX − I‖_F`; fixed-rank: `σ_{r+1}(X)`
    /// (infinite when `σ_r(X)` vanishes); affine: `‖Lx − c‖`.
    pub fn membership_residual(&self, x: &AmbientPoint) -> Result<f64> {
        self.check_shape(x)?;
        x.ensure_finite()?;
        Ok(match &self.kind {
            ManifoldKind::Sphere { .. } => (x.norm() - 1.0).abs(),
            ManifoldKind::Stiefel { m, .. } => x.t_matmul(x).dist(&DenseMatrix::identity(*m)),
            ManifoldKind::FixedRank { r, .. } => {
                let s = svd(x)?;
                let tail = s.sigma.get(*r).copied().unwrap_or(0.0);
                let floor = MEMBERSHIP_TOL * s.sigma[0].max(1.0);
                if s.sigma[r - 1] <= floor {
                    f64::INFINITY
                } else {
                    tail
                }
            }
            ManifoldKind::Affine { l, c } => l.matmul(x).dist(c),
        })
    }

    pub fn is_on_manifold(&self, x: &AmbientPoint, tol: f64) -> Result<bool> {
        if let ManifoldKind::FixedRank { r, .. } = &self.kind {
            self.check_shape(x)?;
            let s = svd(x)?;
            let tail = s.sigma.get(*r).copied().unwrap_or(0.0);
            return Ok(s.sigma[r - 1] > tol && tail <= tol);
        }
        Ok(self.membership_residual(x)? <= tol)
    }

    fn require_on_manifold(&self, x: &AmbientPoint) -> Result<()> {
        let res = self.membership_residual(x)?;
        if res <= MEMBERSHIP_TOL * x.norm().max(1.0) {
            Ok(())
        } else {
            Err(Error::NotOnManifold { residual: res })
        }
    }

    /// Orthogonal projection of `v` onto the tangent space at `x`, without
    /// checking that `x` is on the manifold.
    pub(crate) fn tangent_project_unchecked(
        &self,
        x: &AmbientPoint,
        v: &DenseMatrix,
    ) -> Result<DenseMatrix> {
        Ok(match &self.kind {
            ManifoldKind::Sphere { .. } => v.add_scaled(x, -x.dot(v)),
            ManifoldKind::Stiefel { .. } => {
                let s = x.t_matmul(v).sym();
                v - &x.matmul(&s)
            }
            ManifoldKind::FixedRank { r, .. } => {
                let s = svd(x)?;
                let u = s.u.leading_cols(*r);
                let w = s.v.leading_cols(*r);
                let uu_v = u.matmul(&u.t_matmul(v));
                let v_ww = v.matmul(&w).matmul(&w.transpose());
                let uu_v_ww = uu_v.matmul(&w).matmul(&w.transpose());
                &(&uu_v + &v_ww) - &uu_v_ww
            }
            ManifoldKind::Affine { l, .. } => {
                let lp = self.affine_pinv.as_ref().expect("affine pinv");
                v - &lp.matmul(&l.matmul(v))
            }
        })
    }

    pub fn tangent_project(&self, x: &AmbientPoint, v: &DenseMatrix) -> Result<TangentVector> {
        self.check_shape(v)?;
        self.require_on_manifold(x)?;
        let vec = self.tangent_project_unchecked(x, v)?;
        Ok(TangentVector::new(x.clone(), vec))
    }

    /// Metric projection onto the manifold (where it is unique).
    pub fn project(&self, y: &DenseMatrix) -> Result<AmbientPoint> {
        self.check_shape(y)?;
        y.ensure_finite()?;
        match &self.kind {
            ManifoldKind::Sphere { .. } => {
                let n = y.norm();
                if n == 0.0 {
                    return Err(Error::StepTooLarge(
                        "projection of the origin onto the sphere is not unique".into(),
                    ));
                }
                Ok(y.scale(1.0 / n))
            }
            ManifoldKind::Stiefel { m, .. } => {
                let s = svd(y)?;
                let floor = TOL_RANK * s.sigma[0];
                if s.sigma[m - 1] <= floor {
                    return Err(Error::StepTooLarge(
                        "polar factor undefined for a rank-deficient matrix".into(),
                    ));
                }
                Ok(s.polar(*m))
            }
            ManifoldKind::FixedRank { r, .. } => {
                let s = svd(y)?;
                let sr = s.sigma[r - 1];
                let next = s.sigma.get(*r).copied().unwrap_or(0.0);
                let floor = TOL_RANK * s.sigma[0].max(1.0);
                if sr <= floor || sr - next <= floor {
                    return Err(Error::StepTooLarge(format!(
                        "rank-{r} truncation is not unique (sigma_r={sr:e}, sigma_r+1={next:e})"
                    )));
                }
                Ok(s.reconstruct(*r))
            }
            ManifoldKind::Affine { l, c } => {
                let lp = self.affine_pinv.as_ref().expect("affine pinv");
                let resid = &l.matmul(y) - c;
                Ok(y - &lp.matmul(&resid))
            }
        }
    }

    /// Maps a tangent step back onto the manifold with the configured retraction.
    pub fn retract(&self, t: &TangentVector) -> Result<AmbientPoint> {
        self.check_shape(&t.vec)?;
        self.require_on_manifold(&t.base)?;
        match (&self.kind, self.retraction) {
            (ManifoldKind::Sphere { .. }, Retraction::Exponential) => {
                Ok(sphere_geodesic(&t.base, &t.vec, 1.0))
            }
            (ManifoldKind::Stiefel { .. }, Retraction::QrFactor) => qr_qf(&(&t.base + &t.vec))
                .map_err(|e| Error::StepTooLarge(format!("qf of a rank-deficient step: {e}"))),
            (ManifoldKind::FixedRank { r, .. }, Retraction::Projection) => {
                let s = svd(&t.base)?;
                let radius = 0.5 * s.sigma[r - 1];
                if t.vec.norm() >= radius {
                    return Err(Error::StepTooLarge(format!(
                        "step norm {:e} exceeds sigma_r/2 = {radius:e}",
                        t.vec.norm()
                    )));
                }
                self.project(&(&t.base + &t.vec))
            }
            _ => self.project(&(&t.base + &t.vec)),
        }
    }

    /// Applies the retraction map to an arbitrary ambient displacement `d`
    /// from `x`, i.e. `R(x + d)` without first projecting `d` to the tangent
    /// space. Used by integrators as a corrector.
    pub fn retract_displacement(&self, x: &AmbientPoint, d: &DenseMatrix) -> Result<AmbientPoint> {
        match (&self.kind, self.retraction) {
            (ManifoldKind::Sphere { .. }, Retraction::Exponential) => {
                let t = self.tangent_project(x, d)?;
                self.retract(&t)
            }
            (ManifoldKind::Stiefel { .. }, Retraction::QrFactor) => {
                qr_qf(&(x + d)).map_err(|e| Error::StepTooLarge(e.to_string()))
            }
            _ => self.project(&(x + d)),
        }
    }

    /// Exponential map on the sphere, clipping steps longer than the guard's
    /// clip norm.
    pub fn exp_map(&self, t: &TangentVector, guard: &InjectivityGuard) -> Result<ExpStep> {
        if !self.is_sphere() {
            return Err(Error::UnsupportedManifold(
                "closed-form exponential map is only available on the sphere".into(),
            ));
        }
        self.check_shape(&t.vec)?;
        self.require_on_manifold(&t.base)?;
        let norm = t.vec.norm();
        let (vec, clipped) = if norm > guard.clip_norm {
            (t.vec.scale(guard.clip_norm / norm), true)
        } else {
            (t.vec.clone(), false)
        };
        Ok(ExpStep {
            point: sphere_geodesic(&t.base, &vec, 1.0),
            clipped,
        })
    }

    pub fn riemannian_distance(&self, x: &AmbientPoint, y: &AmbientPoint) -> Result<f64> {
        self.require_on_manifold(x)?;
        self.require_on_manifold(y)?;
        Ok(self.distance_unchecked(x, y))
    }

    /// Great-circle distance on the sphere; ambient Frobenius distance on the
    /// other kinds.
    pub(crate) fn distance_unchecked(&self, x: &AmbientPoint, y: &AmbientPoint) -> f64 {
        match self.kind {
            ManifoldKind::Sphere { .. } => {
                // acos loses half the digits near 1; the chord form does not
                let chord = x.dist(y);
                2.0 * (0.5 * chord).clamp(-1.0, 1.0).asin()
            }
            _ => x.dist(y),
        }
    }

    /// Converts a Euclidean gradient to the Riemannian gradient at `x`.
    pub fn riemannian_grad(&self, x: &AmbientPoint, egrad: &DenseMatrix) -> Result<TangentVector> {
        self.check_shape(egrad)?;
        self.require_on_manifold(x)?;
        let vec = match &self.kind {
            // (I − W Wᵀ) G
            ManifoldKind::Stiefel { .. } => egrad - &x.matmul(&x.t_matmul(egrad)),
            _ => self.tangent_project_unchecked(x, egrad)?,
        };
        Ok(TangentVector::new(x.clone(), vec))
    }

    /// Draws a random point on the manifold.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<AmbientPoint> {
        let (n, m) = self.ambient_shape();
        match &self.kind {
            ManifoldKind::FixedRank { r, .. } => {
                let a = gaussian_matrix(rng, n, *r);
                let b = gaussian_matrix(rng, *r, m);
                Ok(a.matmul(&b))
            }
            ManifoldKind::Affine { c, .. } => {
                let lp = self.affine_pinv.as_ref().expect("affine pinv");
                let g = gaussian_matrix(rng, n, 1);
                let free = self.tangent_project_unchecked(&g, &g)?;
                Ok(&lp.matmul(c) + &free)
            }
            _ => self.project(&gaussian_matrix(rng, n, m)),
        }
    }

    /// Draws a random unit tangent vector at `x`.
    pub fn sample_unit_tangent<R: Rng + ?Sized>(
        &self,
        x: &AmbientPoint,
        rng: &mut R,
    ) -> Result<TangentVector> {
        let (n, m) = self.ambient_shape();
        loop {
            let t = self.tangent_project(x, &gaussian_matrix(rng, n, m))?;
            let nv = t.norm();
            if nv > 1e-8 {
                return Ok(t.scaled(1.0 / nv));
            }
        }
    }
}

/// `x cos(‖v‖ s) + v/‖v‖ sin(‖v‖ s)`, renormalised against roundoff.
pub(crate) fn sphere_geodesic(x: &DenseMatrix, v: &DenseMatrix, s: f64) -> DenseMatrix {
    let nv = v.norm();
    if nv == 0.0 {
        return x.clone();
    }
    let theta = nv * s;
    let p = x.scale(theta.cos()).add_scaled(v, theta.sin() / nv);
    let np = p.norm();
    p.scale(1.0 / np)
}

/// Constant-speed great-circle interpolation between two unit vectors.
pub(crate) fn sphere_slerp(x: &DenseMatrix, y: &DenseMatrix, s: f64) -> DenseMatrix {
    let c = x.dot(y).clamp(-1.0, 1.0);
    let dir = y.add_scaled(x, -c);
    let nd = dir.norm();
    if nd < 1e-300 {
        return x.clone();
    }
    let theta = 2.0 * (0.5 * x.dist(y)).clamp(-1.0, 1.0).asin();
    sphere_geodesic(x, &dir.scale(theta / nd), s)
}

pub(crate) fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> DenseMatrix {
    let data = (0..n * m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    DenseMatrix::from_vec(n, m, data).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn v(x: &[f64]) -> DenseMatrix {
        DenseMatrix::column(x)
    }

    fn all_manifolds() -> Vec<Manifold> {
        vec![
            Manifold::sphere(3).unwrap(),
            Manifold::sphere(3).unwrap().with_retraction(Retraction::Exponential).unwrap(),
            Manifold::stiefel(4, 2).unwrap(),
            Manifold::stiefel(4, 2).unwrap().with_retraction(Retraction::Projection).unwrap(),
            Manifold::fixed_rank(4, 3, 2).unwrap(),
            Manifold::affine(
                DenseMatrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 1.0, -1.0]]),
                v(&[2.0, 0.5]),
            )
            .unwrap(),
        ]
    }

    #[test]
    fn membership_examples() {
        let s3 = Manifold::sphere(3).unwrap();
        assert!(s3.is_on_manifold(&v(&[1.0, 0.0, 0.0]), 1e-10).unwrap());
        let st = Manifold::stiefel(2, 2).unwrap();
        let x = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert!(st.is_on_manifold(&x, 1e-10).unwrap());
        let s2 = Manifold::sphere(2).unwrap();
        assert!(!s2.is_on_manifold(&v(&[1.0, 1.0]), 1e-10).unwrap());
        assert!(matches!(
            s2.is_on_manifold(&v(&[1.0, 0.0, 0.0]), 1e-10),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn fixed_rank_membership() {
        let fr = Manifold::fixed_rank(2, 2, 1).unwrap();
        assert!(fr.is_on_manifold(&DenseMatrix::diag(&[3.0, 0.0]), 1e-10).unwrap());
        assert!(!fr.is_on_manifold(&DenseMatrix::diag(&[3.0, 1.0]), 1e-10).unwrap());
        assert!(!fr.is_on_manifold(&DenseMatrix::zeros(2, 2), 1e-10).unwrap());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(Manifold::stiefel(2, 3).is_err());
        assert!(Manifold::affine(DenseMatrix::from_rows(&[[1.0, 1.0], [2.0, 2.0]]), v(&[1.0, 2.0])).is_err());
        assert!(Manifold::sphere(2).unwrap().with_retraction(Retraction::QrFactor).is_err());
        assert!(Manifold::fixed_rank(2, 2, 1).unwrap().with_retraction(Retraction::Normalize).is_err());
        assert!(InjectivityGuard::new(1.0, 1.0).is_err());
    }

    #[test]
    fn tangent_project_examples() {
        let s2 = Manifold::sphere(2).unwrap();
        let t = s2.tangent_project(&v(&[1.0, 0.0]), &v(&[1.0, 1.0])).unwrap();
        assert_eq!(t.vec, v(&[0.0, 1.0]));

        let aff = Manifold::affine(DenseMatrix::from_rows(&[[1.0, 1.0]]), v(&[2.0])).unwrap();
        let t = aff.tangent_project(&v(&[1.0, 1.0]), &v(&[1.0, 1.0])).unwrap();
        assert!(t.vec.norm() < 1e-15);

        assert!(matches!(
            s2.tangent_project(&v(&[2.0, 0.0]), &v(&[1.0, 1.0])),
            Err(Error::NotOnManifold { .. })
        ));
    }

    #[test]
    fn projector_idempotent_and_self_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in all_manifolds() {
            let (n, k) = m.ambient_shape();
            for _ in 0..10 {
                let x = m.sample_point(&mut rng).unwrap();
                let a = gaussian_matrix(&mut rng, n, k);
                let b = gaussian_matrix(&mut rng, n, k);
                let pa = m.tangent_project(&x, &a).unwrap().vec;
                let pb = m.tangent_project(&x, &b).unwrap().vec;
                let ppa = m.tangent_project(&x, &pa).unwrap().vec;
                assert!(ppa.dist(&pa) <= 1e-10 * pa.norm().max(1.0), "{:?}", m.kind());
                assert!((pa.dot(&b) - a.dot(&pb)).abs() <= 1e-10, "{:?}", m.kind());
            }
        }
    }

    #[test]
    fn retract_examples() {
        let s2 = Manifold::sphere(2).unwrap();
        let p = s2
            .retract(&TangentVector::new(v(&[1.0, 0.0]), v(&[0.0, 0.1])))
            .unwrap();
        let expect = v(&[1.0, 0.1]).scale(1.0 / 1.01f64.sqrt());
        assert!(p.dist(&expect) < 1e-15);

        let st = Manifold::stiefel(2, 2).unwrap();
        let p = st.retract(&TangentVector::zero(DenseMatrix::identity(2))).unwrap();
        assert_eq!(p, DenseMatrix::identity(2));

        let fr = Manifold::fixed_rank(2, 2, 1).unwrap();
        let t = TangentVector::new(DenseMatrix::diag(&[3.0, 0.0]), DenseMatrix::diag(&[0.0, 0.4]));
        let p = fr.retract(&t).unwrap();
        assert!(p.dist(&DenseMatrix::diag(&[3.0, 0.0])) < 1e-15);
    }

    #[test]
    fn fixed_rank_step_too_large() {
        let fr = Manifold::fixed_rank(2, 2, 1).unwrap();
        let t = TangentVector::new(DenseMatrix::diag(&[3.0, 0.0]), DenseMatrix::diag(&[0.0, 1.6]));
        assert!(matches!(fr.retract(&t), Err(Error::StepTooLarge(_))));
    }

    #[test]
    fn exp_map_examples() {
        let s2 = Manifold::sphere(2).unwrap();
        let guard = InjectivityGuard::new(2.0 * PI, PI).unwrap();
        let step = s2
            .exp_map(&TangentVector::new(v(&[1.0, 0.0]), v(&[0.0, FRAC_PI_2])), &guard)
            .unwrap();
        assert!(step.point.dist(&v(&[0.0, 1.0])) < 1e-15 && !step.clipped);

        let s3 = Manifold::sphere(3).unwrap();
        let step = s3
            .exp_map(&TangentVector::zero(v(&[1.0, 0.0, 0.0])), &InjectivityGuard::sphere_default())
            .unwrap();
        assert_eq!(step.point, v(&[1.0, 0.0, 0.0]));

        let guard = InjectivityGuard::new(PI, FRAC_PI_2).unwrap();
        let step = s2
            .exp_map(&TangentVector::new(v(&[1.0, 0.0]), v(&[0.0, 2.0 * PI])), &guard)
            .unwrap();
        assert!(step.point.dist(&v(&[0.0, 1.0])) < 1e-15 && step.clipped);

        let st = Manifold::stiefel(2, 1).unwrap();
        let t = TangentVector::zero(v(&[1.0, 0.0]));
        assert!(matches!(st.exp_map(&t, &guard), Err(Error::UnsupportedManifold(_))));
    }

    #[test]
    fn distance_examples() {
        let s2 = Manifold::sphere(2).unwrap();
        let d = s2.riemannian_distance(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap();
        assert!((d - FRAC_PI_2).abs() < 1e-15);
        let d = s2.riemannian_distance(&v(&[1.0, 0.0]), &v(&[-1.0, 0.0])).unwrap();
        assert!((d - PI).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in all_manifolds() {
            let x = m.sample_point(&mut rng).unwrap();
            assert_eq!(m.riemannian_distance(&x, &x).unwrap(), 0.0);
        }
    }

    #[test]
    fn riemannian_grad_examples() {
        let s2 = Manifold::sphere(2).unwrap();
        let g = s2.riemannian_grad(&v(&[1.0, 0.0]), &v(&[2.0, 3.0])).unwrap();
        assert_eq!(g.vec, v(&[0.0, 3.0]));

        let aff = Manifold::affine(DenseMatrix::from_rows(&[[1.0, 1.0]]), v(&[2.0])).unwrap();
        let g = aff.riemannian_grad(&v(&[1.0, 1.0]), &v(&[1.0, 1.0])).unwrap();
        assert!(g.vec.norm() < 1e-15);

        let st = Manifold::stiefel(2, 1).unwrap();
        let g = st.riemannian_grad(&v(&[1.0, 0.0]), &v(&[4.0, 0.0])).unwrap();
        assert_eq!(g.vec.norm(), 0.0);
    }

    #[test]
    fn riemannian_grad_compatibility() {
        // ⟨grad, ξ⟩ = ⟨egrad, ξ⟩ for tangent ξ, and grad is tangent
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for m in all_manifolds() {
            let (n, k) = m.ambient_shape();
            let x = m.sample_point(&mut rng).unwrap();
            let eg = match m.kind() {
                // the Stiefel form is exact for gradients of trace(WᵀAW) with A symmetric
                ManifoldKind::Stiefel { .. } => gaussian_matrix(&mut rng, n, n).sym().matmul(&x),
                _ => gaussian_matrix(&mut rng, n, k),
            };
            let g = m.riemannian_grad(&x, &eg).unwrap().vec;
            let pg = m.tangent_project(&x, &g).unwrap().vec;
            assert!(pg.dist(&g) <= TOL_TANGENT * g.norm().max(1.0), "{:?}", m.kind());
            for _ in 0..5 {
                let xi = m.sample_unit_tangent(&x, &mut rng).unwrap().vec;
                assert!((g.dot(&xi) - eg.dot(&xi)).abs() < 1e-10, "{:?}", m.kind());
            }
        }
    }

    #[test]
    fn retraction_feasibility_for_small_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in all_manifolds() {
            for _ in 0..20 {
                let x = m.sample_point(&mut rng).unwrap();
                let t = m.sample_unit_tangent(&x, &mut rng).unwrap().scaled(0.1);
                let y = m.retract(&t).unwrap();
                assert!(m.is_on_manifold(&y, 1e-9).unwrap(), "{:?}", m.kind());
            }
        }
    }

    #[test]
    fn exp_and_normalize_agree_to_second_order() {
        let s3 = Manifold::sphere(3).unwrap();
        let guard = InjectivityGuard::sphere_default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = s3.sample_point(&mut rng).unwrap();
        let t = s3.sample_unit_tangent(&x, &mut rng).unwrap().scaled(0.1);
        let gap = |t: &TangentVector| {
            let e = s3.exp_map(t, &guard).unwrap().point;
            let r = s3.retract(t).unwrap();
            e.dist(&r)
        };
        let e1 = gap(&t);
        let e2 = gap(&t.scaled(0.5));
        // quadratic agreement: the gap drops at least ~4x when the step halves
        let ratio = e1 / e2;
        assert!(ratio > 3.5, "ratio {ratio}");
        assert!(e1 <= 0.1 * 0.1 * 0.5);
    }

    #[test]
    fn sphere_geodesic_arc_length() {
        let s3 = Manifold::sphere(3).unwrap();
        let guard = InjectivityGuard::new(PI, 3.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for len in [0.1, 1.0, 2.5, 3.0] {
            let x = s3.sample_point(&mut rng).unwrap();
            let t = s3.sample_unit_tangent(&x, &mut rng).unwrap().scaled(len);
            let y = s3.exp_map(&t, &guard).unwrap().point;
            let d = s3.riemannian_distance(&x, &y).unwrap();
            assert!((d - len).abs() < 1e-8, "len {len}: {d}");
        }
    }

    #[test]
    fn retractions_are_locally_rigid() {
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for m in all_manifolds() {
            for _ in 0..10 {
                let x = m.sample_point(&mut rng).unwrap();
                let t = m.sample_unit_tangent(&x, &mut rng).unwrap();
                let fwd = m.retract(&t.scaled(h)).unwrap();
                let bwd = m.retract(&t.scaled(-h)).unwrap();
                let d = (&fwd - &bwd).scale(0.5 / h);
                assert!(d.dist(&t.vec) <= 1e-6, "{:?} {:?}", m.kind(), m.retraction());
            }
        }
    }
}
