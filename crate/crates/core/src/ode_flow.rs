//! Limit flows of the SA drivers and the trajectory comparator.
//!
//! Manifold flows use classical RK4 in ambient coordinates followed by a
//! corrector; projected flows evaluate the projected-dynamical-system field
//! `lim (P(x + δH) − x)/δ` at every stage.

use crate::constraint_sets::{ApproxProjection, Projector};
use crate::error::{Error, Result};
use crate::manifolds::{sphere_slerp, Manifold};
use crate::numkernels::DenseMatrix;
use crate::sa_core::{RunRecord, VectorField};

/// δ ladder used by [`pds_limit`].
pub const PDS_DELTAS: [f64; 3] = [1e-3, 5e-4, 2.5e-4];
/// Cauchy tolerance across the ladder.
pub const PDS_CAUCHY_TOL: f64 = 1e-5;
/// δ used for the projected field inside the integrator.
pub const PDS_FLOW_DELTA: f64 = 1e-7;
/// Feasibility tolerance for projected flows and the PDS operator.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corrector {
    /// Map the RK displacement back with the manifold's retraction.
    RetractEachStep,
    /// Metric projection of the RK endpoint.
    ProjectEachStep,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub dt: f64,
    pub corrector: Corrector,
    pub max_time: f64,
}

impl FlowConfig {
    pub fn new(dt: f64, corrector: Corrector, max_time: f64) -> Result<Self> {
        if !(dt > 0.0 && max_time > 0.0 && dt <= max_time) {
            return Err(Error::InvalidSpec(format!(
                "flow needs 0 < dt <= max_time, got dt={dt}, max_time={max_time}"
            )));
        }
        Ok(Self { dt, corrector, max_time })
    }
}

/// A sampled flow.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<DenseMatrix>,
}

impl Trajectory {
    pub fn last(&self) -> &DenseMatrix {
        self.points.last().expect("non-empty trajectory")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The set a flow or an SA run lives on.
#[derive(Clone, Copy)]
pub enum ConstraintRef<'a> {
    Manifold(&'a Manifold),
    Set(&'a dyn Projector),
}

/// Exact projection realised as the limit of an [`ApproxProjection`].
#[derive(Debug, Clone)]
pub struct LimitProjector<'a> {
    pub f: &'a ApproxProjection,
    pub tol: f64,
    pub max_iter: usize,
}

impl<'a> LimitProjector<'a> {
    pub fn new(f: &'a ApproxProjection) -> Self {
        Self { f, tol: 1e-13, max_iter: 100_000 }
    }
}

impl Projector for LimitProjector<'_> {
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.f.projection_limit(x, self.tol, self.max_iter)?.point)
    }
}

fn ensure_feasible(p: &dyn Projector, x: &DenseMatrix) -> Result<()> {
    let violation = p.project(x)?.dist(x);
    if violation > FEASIBILITY_TOL * x.norm().max(1.0) {
        return Err(Error::Infeasible { violation });
    }
    Ok(())
}

/// `(P(x + δh) − x) / δ` at a feasible `x`.
pub fn pds_operator(p: &dyn Projector, x: &DenseMatrix, h: &DenseMatrix, delta: f64) -> Result<DenseMatrix> {
    if !(delta > 0.0) {
        return Err(Error::InvalidSpec(format!("delta must be positive, got {delta}")));
    }
    ensure_feasible(p, x)?;
    Ok((&p.project(&x.add_scaled(h, delta))? - x).scale(1.0 / delta))
}

/// The PDS quotient along [`PDS_DELTAS`].
#[derive(Debug, Clone, PartialEq)]
pub struct PdsEstimate {
    /// Quotient at the smallest δ.
    pub value: DenseMatrix,
    /// Largest gap between successive quotients.
    pub cauchy_gap: f64,
}

impl PdsEstimate {
    pub fn is_cauchy(&self) -> bool {
        self.cauchy_gap <= PDS_CAUCHY_TOL
    }
}

pub fn pds_limit(p: &dyn Projector, x: &DenseMatrix, h: &DenseMatrix) -> Result<PdsEstimate> {
    let mut prev: Option<DenseMatrix> = None;
    let mut gap: f64 = 0.0;
    for &d in &PDS_DELTAS {
        let q = pds_operator(p, x, h, d)?;
        if let Some(pq) = &prev {
            gap = gap.max(q.dist(pq));
        }
        prev = Some(q);
    }
    Ok(PdsEstimate {
        value: prev.expect("non-empty ladder"),
        cauchy_gap: gap,
    })
}

enum FieldKind<'a> {
    /// `H` evaluated in ambient coordinates.
    Ambient,
    /// Tangent projection of `H` at the projected stage point.
    TangentProjected(&'a Manifold),
    /// PDS field at the projected stage point.
    Pds(&'a dyn Projector),
}

struct FlowStepper<'a> {
    field: FieldKind<'a>,
    set: ConstraintRef<'a>,
    h: &'a dyn VectorField,
    corrector: Corrector,
}

impl FlowStepper<'_> {
    fn eval(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        match self.field {
            FieldKind::Ambient => Ok(self.h.eval(z)),
            FieldKind::TangentProjected(m) => {
                let y = m.project(z)?;
                m.tangent_project_unchecked(&y, &self.h.eval(&y))
            }
            FieldKind::Pds(p) => {
                let y = p.project(z)?;
                let hy = self.h.eval(&y);
                Ok((&p.project(&y.add_scaled(&hy, PDS_FLOW_DELTA))? - &y).scale(1.0 / PDS_FLOW_DELTA))
            }
        }
    }

    fn step(&self, x: &DenseMatrix, dt: f64) -> Result<DenseMatrix> {
        let k1 = self.eval(x)?;
        let k2 = self.eval(&x.add_scaled(&k1, 0.5 * dt))?;
        let k3 = self.eval(&x.add_scaled(&k2, 0.5 * dt))?;
        let k4 = self.eval(&x.add_scaled(&k3, dt))?;
        let mut d = k1;
        d.axpy(2.0, &k2);
        d.axpy(2.0, &k3);
        d.axpy(1.0, &k4);
        let d = d.scale(dt / 6.0);
        let out = match (self.corrector, self.set) {
            (Corrector::None, _) => x + &d,
            (Corrector::RetractEachStep, ConstraintRef::Manifold(m)) => m.retract_displacement(x, &d)?,
            (Corrector::ProjectEachStep, ConstraintRef::Manifold(m)) => m.project(&(x + &d))?,
            (_, ConstraintRef::Set(p)) => p.project(&(x + &d))?,
        };
        out.ensure_finite()?;
        Ok(out)
    }

    fn run(&self, x0: &DenseMatrix, cfg: &FlowConfig) -> Result<Trajectory> {
        let mut traj = Trajectory::default();
        let mut x = x0.clone();
        let mut t = 0.0;
        traj.times.push(t);
        traj.points.push(x.clone());
        while t < cfg.max_time {
            let dt = cfg.dt.min(cfg.max_time - t);
            x = self.step(&x, dt)?;
            t = if cfg.max_time - t <= cfg.dt { cfg.max_time } else { t + dt };
            traj.times.push(t);
            traj.points.push(x.clone());
        }
        Ok(traj)
    }
}

fn require_on(m: &Manifold, x0: &DenseMatrix) -> Result<()> {
    let residual = m.membership_residual(x0)?;
    if residual > crate::manifolds::MEMBERSHIP_TOL {
        return Err(Error::NotOnManifold { residual });
    }
    Ok(())
}

/// RK4 in ambient space plus the configured corrector.
pub fn integrate_manifold_ode(
    m: &Manifold,
    h: &dyn VectorField,
    x0: &DenseMatrix,
    cfg: &FlowConfig,
) -> Result<Trajectory> {
    require_on(m, x0)?;
    FlowStepper {
        field: FieldKind::Ambient,
        set: ConstraintRef::Manifold(m),
        h,
        corrector: cfg.corrector,
    }
    .run(x0, cfg)
}

/// `ẋ = Π_{T(x)}(H(x))`, with the tangent projection (manifolds) or the PDS
/// quotient (general sets) evaluated at every stage.
pub fn integrate_projected_ode(
    set: ConstraintRef<'_>,
    h: &dyn VectorField,
    x0: &DenseMatrix,
    cfg: &FlowConfig,
) -> Result<Trajectory> {
    let field = match set {
        ConstraintRef::Manifold(m) => {
            require_on(m, x0).map_err(|e| match e {
                Error::NotOnManifold { residual } => Error::Infeasible { violation: residual },
                other => other,
            })?;
            FieldKind::TangentProjected(m)
        }
        ConstraintRef::Set(p) => {
            ensure_feasible(p, x0)?;
            FieldKind::Pds(p)
        }
    };
    FlowStepper {
        field,
        set,
        h,
        corrector: cfg.corrector,
    }
    .run(x0, cfg)
}

/// Per-window sup distances between an SA run and the flows started on it.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowReport {
    /// Window starts snapped to recorded times.
    pub window_starts: Vec<f64>,
    pub sup_distances: Vec<f64>,
    pub horizon: f64,
}

impl WindowReport {
    pub fn is_strictly_decreasing(&self) -> bool {
        self.sup_distances.windows(2).all(|w| w[1] < w[0])
    }
}

/// Integration step rule of the comparator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparatorConfig {
    /// Upper bound on the flow step.
    pub dt_max: f64,
    /// The flow step is at most this fraction of the local SA step.
    pub step_fraction: f64,
    /// Lower bound on the flow step.
    pub dt_min: f64,
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        Self {
            dt_max: 1e-3,
            step_fraction: 0.1,
            dt_min: 1e-5,
        }
    }
}

fn interpolate(set: ConstraintRef<'_>, a: &DenseMatrix, b: &DenseMatrix, s: f64) -> Result<DenseMatrix> {
    if s <= 0.0 {
        return Ok(a.clone());
    }
    if s >= 1.0 {
        return Ok(b.clone());
    }
    match set {
        ConstraintRef::Manifold(m) if m.is_sphere() => Ok(sphere_slerp(a, b, s)),
        ConstraintRef::Manifold(m) => m.project(&a.scale(1.0 - s).add_scaled(b, s)),
        ConstraintRef::Set(_) => Ok(a.scale(1.0 - s).add_scaled(b, s)),
    }
}

fn distance(set: ConstraintRef<'_>, a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    match set {
        ConstraintRef::Manifold(m) => m.distance_unchecked(a, b),
        ConstraintRef::Set(_) => a.dist(b),
    }
}

/// For every window start `s`, integrates the limit flow from the SA point
/// at the recorded time nearest `s` for ODE time `T` and reports the sup over
/// the flow grid of the distance to the interpolated SA trajectory.
pub fn compare_trajectories(
    run: &RunRecord,
    set: ConstraintRef<'_>,
    h: &dyn VectorField,
    horizon: f64,
    window_starts: &[f64],
    cfg: &ComparatorConfig,
) -> Result<WindowReport> {
    if run.is_empty() {
        return Err(Error::InvalidSpec("cannot compare an empty run".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidSpec(format!("window length must be positive, got {horizon}")));
    }
    let times = &run.times;
    let span = *times.last().expect("non-empty");
    let mut starts = Vec::with_capacity(window_starts.len());
    let mut sups = Vec::with_capacity(window_starts.len());
    for &s in window_starts {
        let idx = nearest_index(times, s);
        let t0 = times[idx];
        if s < 0.0 || t0 + horizon > span * (1.0 + 1e-12) {
            return Err(Error::WindowOutOfRange {
                start: s,
                end: s + horizon,
                span,
            });
        }
        let x0 = &run.points[idx];
        let (field, corrector) = match set {
            ConstraintRef::Manifold(_) => (FieldKind::Ambient, Corrector::RetractEachStep),
            ConstraintRef::Set(p) => (FieldKind::Pds(p), Corrector::ProjectEachStep),
        };
        let stepper = FlowStepper { field, set, h, corrector };
        let mut x = x0.clone();
        let mut t = t0;
        let end = t0 + horizon;
        let mut j = idx;
        let mut sup: f64 = 0.0;
        while t < end {
            while j + 1 < times.len() && times[j + 1] <= t {
                j += 1;
            }
            let local = if j + 1 < times.len() {
                times[j + 1] - times[j]
            } else {
                cfg.dt_max
            };
            let dt = (local * cfg.step_fraction)
                .min(cfg.dt_max)
                .max(cfg.dt_min)
                .min(end - t);
            x = stepper.step(&x, dt)?;
            t = if end - t <= dt { end } else { t + dt };
            while j + 1 < times.len() && times[j + 1] <= t {
                j += 1;
            }
            let sa = if j + 1 < times.len() {
                let s = (t - times[j]) / (times[j + 1] - times[j]);
                interpolate(set, &run.points[j], &run.points[j + 1], s)?
            } else {
                run.points[j].clone()
            };
            sup = sup.max(distance(set, &sa, &x));
        }
        starts.push(t0);
        sups.push(sup);
    }
    Ok(WindowReport {
        window_starts: starts,
        sup_distances: sups,
        horizon,
    })
}

fn nearest_index(times: &[f64], s: f64) -> usize {
    let i = times.partition_point(|&t| t < s);
    if i == 0 {
        0
    } else if i >= times.len() {
        times.len() - 1
    } else if (times[i] - s).abs() < (s - times[i - 1]).abs() {
        i
    } else {
        i - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint_sets::{ConeQuery, ElementaryProjector};
    use crate::sa_core::{run_retraction_sa, NoiseModel, RunOptions, StepSchedule};
    use std::f64::consts::FRAC_PI_2;

    fn v(x: &[f64]) -> DenseMatrix {
        DenseMatrix::column(x)
    }

    fn rotation(x: &DenseMatrix) -> DenseMatrix {
        v(&[-x[(1, 0)], x[(0, 0)]])
    }

    #[test]
    fn rotation_flow_closed_form() {
        let m = Manifold::sphere(2).unwrap();
        let cfg = FlowConfig::new(1e-3, Corrector::RetractEachStep, FRAC_PI_2).unwrap();
        let traj = integrate_manifold_ode(&m, &rotation, &v(&[1.0, 0.0]), &cfg).unwrap();
        assert!(traj.last().dist(&v(&[0.0, 1.0])) < 1e-6);
        assert_eq!(*traj.times.last().unwrap(), FRAC_PI_2);
    }

    #[test]
    fn skew_flow_stays_on_sphere() {
        let m = Manifold::sphere(3).unwrap();
        let omega = DenseMatrix::from_rows(&[[0.0, -1.0, 0.5], [1.0, 0.0, -2.0], [-0.5, 2.0, 0.0]]);
        let h = move |x: &DenseMatrix| omega.matmul(x);
        let cfg = FlowConfig::new(1e-2, Corrector::None, 5.0).unwrap();
        let traj = integrate_manifold_ode(&m, &h, &v(&[0.0, 0.6, 0.8]), &cfg).unwrap();
        assert!(traj.points.iter().all(|p| (p.norm() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn oja_flow_reaches_dominant_eigenvector() {
        let m = Manifold::stiefel(2, 1).unwrap();
        let a = DenseMatrix::diag(&[4.0, 1.0]);
        let h = move |w: &DenseMatrix| {
            let aw = a.matmul(w);
            &aw - &w.matmul(&w.t_matmul(&aw))
        };
        let x0 = v(&[1.0, 1.0]).scale(1.0 / 2f64.sqrt());
        let cfg = FlowConfig::new(1e-3, Corrector::RetractEachStep, 50.0).unwrap();
        let traj = integrate_manifold_ode(&m, &h, &x0, &cfg).unwrap();
        let w = traj.last();
        assert!(w.dist(&v(&[1.0, 0.0])).min(w.dist(&v(&[-1.0, 0.0]))) < 1e-6);
    }

    #[test]
    fn off_manifold_start_rejected() {
        let m = Manifold::sphere(2).unwrap();
        let cfg = FlowConfig::new(1e-3, Corrector::None, 1.0).unwrap();
        assert!(matches!(
            integrate_manifold_ode(&m, &rotation, &v(&[2.0, 0.0]), &cfg),
            Err(Error::NotOnManifold { .. })
        ));
        assert!(FlowConfig::new(2.0, Corrector::None, 1.0).is_err());
    }

    #[test]
    fn pds_examples() {
        let b = ElementaryProjector::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let q = pds_operator(&b, &v(&[0.5, 0.5]), &v(&[0.3, -0.2]), 1e-3).unwrap();
        assert!(q.dist(&v(&[0.3, -0.2])) < 1e-12);
        let est = pds_limit(&b, &v(&[1.0, 0.5]), &v(&[1.0, 0.0])).unwrap();
        assert!(est.is_cauchy() && est.value.norm() < 1e-12);
        let est = pds_limit(&b, &v(&[1.0, 0.5]), &v(&[-1.0, 1.0])).unwrap();
        assert!(est.is_cauchy() && est.value.dist(&v(&[-1.0, 1.0])) < 1e-9);
        assert!(matches!(
            pds_operator(&b, &v(&[2.0, 0.5]), &v(&[1.0, 0.0]), 1e-3),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn pds_matches_normal_cone_decomposition() {
        // on a polyhedron Π(h) = h − proj_{N(x)}(h); its norm equals the cone residual
        let q = ConeQuery::from_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let b = ElementaryProjector::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let x = v(&[1.0, 0.0]);
        for h in [v(&[1.0, -1.0]), v(&[2.0, 0.5]), v(&[-0.3, -0.7])] {
            let est = pds_limit(&b, &x, &h).unwrap();
            let r = q.normal_cone_residual(&x, &h).unwrap();
            assert!((est.value.norm() - r).abs() < 1e-6);
        }
    }

    #[test]
    fn projected_affine_flow_is_straight() {
        let l = DenseMatrix::from_rows(&[[1.0, 1.0]]);
        let m = Manifold::affine(l.clone(), v(&[2.0])).unwrap();
        let c = v(&[3.0, 1.0]);
        let cc = c.clone();
        let h = move |_x: &DenseMatrix| cc.clone();
        let cfg = FlowConfig::new(1e-2, Corrector::ProjectEachStep, 1.0).unwrap();
        let x0 = v(&[1.0, 1.0]);
        let traj = integrate_projected_ode(ConstraintRef::Manifold(&m), &h, &x0, &cfg).unwrap();
        // (I − L†L)c = (1, −1)
        let expect = x0.add_scaled(&v(&[1.0, -1.0]), 1.0);
        assert!(traj.last().dist(&expect) < 1e-12);

        let aff = ElementaryProjector::affine_rows(l, v(&[2.0])).unwrap();
        let traj = integrate_projected_ode(ConstraintRef::Set(&aff), &h, &x0, &cfg).unwrap();
        assert!(traj.last().dist(&expect) < 1e-8);
        assert!(matches!(
            integrate_projected_ode(ConstraintRef::Set(&aff), &h, &v(&[0.0, 0.0]), &cfg),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn projected_flow_rests_at_kkt_point() {
        let b = ElementaryProjector::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let h = |_x: &DenseMatrix| v(&[1.0, 0.0]);
        let cfg = FlowConfig::new(1e-2, Corrector::ProjectEachStep, 1.0).unwrap();
        let x0 = v(&[1.0, 0.3]);
        let traj = integrate_projected_ode(ConstraintRef::Set(&b), &h, &x0, &cfg).unwrap();
        assert!(traj.points.iter().all(|p| p.dist(&x0) < 1e-12));
    }

    #[test]
    fn projected_and_manifold_flows_agree_on_sphere() {
        let m = Manifold::sphere(3).unwrap();
        let e2 = v(&[0.0, 1.0, 0.0]);
        let h = move |x: &DenseMatrix| e2.add_scaled(x, -x.dot(&e2));
        let x0 = v(&[1.0, 0.0, 1.0]).scale(1.0 / 2f64.sqrt());
        let cfg = FlowConfig::new(1e-3, Corrector::RetractEachStep, 2.0).unwrap();
        let a = integrate_manifold_ode(&m, &h, &x0, &cfg).unwrap();
        let cfgp = FlowConfig::new(1e-3, Corrector::ProjectEachStep, 2.0).unwrap();
        let b = integrate_projected_ode(ConstraintRef::Manifold(&m), &h, &x0, &cfgp).unwrap();
        assert!(a.last().dist(b.last()) < 1e-8);
    }

    #[test]
    fn comparator_constant_run() {
        let m = Manifold::sphere(2).unwrap();
        let h = |x: &DenseMatrix| DenseMatrix::zeros(x.rows(), x.cols());
        let rec = run_retraction_sa(
            &m,
            &h,
            &mut NoiseModel::zero().stream(),
            &StepSchedule::new(0.5, 0.9, 10).unwrap(),
            &v(&[0.6, 0.8]),
            2000,
            &RunOptions::default(),
        )
        .unwrap();
        let rep = compare_trajectories(
            &rec,
            ConstraintRef::Manifold(&m),
            &h,
            1.0,
            &[0.0, 1.0],
            &ComparatorConfig::default(),
        )
        .unwrap();
        assert!(rep.sup_distances.iter().all(|&d| d <= 1e-8));
        assert!(matches!(
            compare_trajectories(&rec, ConstraintRef::Manifold(&m), &h, 100.0, &[0.0], &ComparatorConfig::default()),
            Err(Error::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn nearest_index_snaps() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(nearest_index(&t, 1.4), 1);
        assert_eq!(nearest_index(&t, 1.6), 2);
        assert_eq!(nearest_index(&t, 9.0), 3);
        assert_eq!(nearest_index(&t, -1.0), 0);
    }
}
