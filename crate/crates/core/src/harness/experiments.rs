//! Reference experiments: Oja subspace tracking, constrained regression,
//! nearest correlation and polyhedral relaxed SA.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, ExperimentKind, NoiseKindConfig, ProblemConfig};
use crate::constraint_sets::{ApproxProjection, ConeQuery, ElementaryProjector, Projector};
use crate::error::{Error, Result};
use crate::manifolds::Manifold;
use crate::numkernels::{qr_qf, solve, sym_apply, sym_eig, DenseMatrix};
use crate::ode_flow::{compare_trajectories, ComparatorConfig, ConstraintRef, LimitProjector};
use crate::sa_core::{
    run_relaxed_sa, run_retraction_sa, standard_normals, stream_rng, A7Config, NoiseSource,
    RunOptions, RunRecord, StepSchedule, TwoRateSchedule, VectorField, SERIES_DIST_TO_SET,
    STREAM_DATA, STREAM_INIT,
};

/// Window length used for the report's sup-distance column.
pub const REPORT_WINDOW: f64 = 1.0;

/// One CSV row; `None` cells are written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub step: usize,
    pub ode_time: f64,
    pub primary_residual: Option<f64>,
    pub dist_to_set: Option<f64>,
    pub subspace_error: Option<f64>,
    pub window_sup_distance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub record: RunRecord,
    pub rows: Vec<ReportRow>,
    pub summary: BTreeMap<String, f64>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    match cfg.experiment {
        ExperimentKind::Oja => experiment_oja(cfg),
        ExperimentKind::RegressionAffine | ExperimentKind::RegressionSphere => experiment_regression(cfg),
        ExperimentKind::NearestCorrelation => experiment_nearest_correlation(cfg),
        ExperimentKind::Polyhedral => experiment_polyhedral(cfg),
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DenseMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(cfg_err(format!("{what} must be a non-empty rectangular array")));
    }
    DenseMatrix::from_vec(rows.len(), cols, rows.concat())
}

fn checkpoint_steps(record: &RunRecord, every: usize) -> Vec<usize> {
    let last = *record.steps.last().expect("non-empty record");
    record
        .steps
        .iter()
        .enumerate()
        .filter(|(_, &s)| s % every == 0 || s == last)
        .map(|(i, _)| i)
        .collect()
}

/// Sup-distance over `[t, t + T]` for every checkpoint whose window fits in the run.
fn window_column(
    record: &RunRecord,
    set: ConstraintRef<'_>,
    h: &dyn VectorField,
    idx: &[usize],
) -> Result<Vec<Option<f64>>> {
    let span = *record.times.last().expect("non-empty record");
    let cfg = ComparatorConfig {
        dt_min: 1e-4,
        ..ComparatorConfig::default()
    };
    idx.iter()
        .map(|&i| {
            let t = record.times[i];
            if t + REPORT_WINDOW > span {
                return Ok(None);
            }
            let rep = compare_trajectories(record, set, h, REPORT_WINDOW, &[t], &cfg)?;
            Ok(Some(rep.sup_distances[0]))
        })
        .collect()
}

/// Additive noise or sampled-data noise, chosen by the config.
enum Noise<S> {
    Additive(crate::sa_core::NoiseStream),
    Sampled(S),
}

impl<S: NoiseSource> NoiseSource for Noise<S> {
    fn sample(&mut self, x: &DenseMatrix, drift: &DenseMatrix) -> DenseMatrix {
        match self {
            Noise::Additive(s) => s.sample(x, drift),
            Noise::Sampled(s) => s.sample(x, drift),
        }
    }
}

// ---------------------------------------------------------------- Oja

/// Covariance `A = Q diag(λ) Qᵀ` with a random rotation and its leading
/// eigenspace.
#[derive(Debug, Clone)]
pub struct OjaProblem {
    pub n: usize,
    pub r: usize,
    pub a: DenseMatrix,
    pub sqrt_a: DenseMatrix,
    /// Orthonormal basis of the leading `r`-dimensional eigenspace.
    pub v_r: DenseMatrix,
}

/// `(4, 2, 1, …, 1)` truncated or padded to length `n`.
pub fn default_spectrum(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| match i {
            0 => 4.0,
            1 => 2.0,
            _ => 1.0,
        })
        .collect()
}

impl OjaProblem {
    pub fn new(spectrum: &[f64], r: usize, rotation: &DenseMatrix) -> Result<Self> {
        let n = spectrum.len();
        if r == 0 || r > n {
            return Err(cfg_err(format!("Oja requires 1 <= r <= n, got n={n}, r={r}")));
        }
        if spectrum.iter().any(|&l| !(l >= 0.0)) {
            return Err(cfg_err("spectrum must be nonnegative"));
        }
        rotation.ensure_shape((n, n))?;
        let a = rotation
            .matmul(&DenseMatrix::diag(spectrum))
            .matmul(&rotation.transpose())
            .sym();
        let sqrt_a = sym_apply(&a, |l| l.max(0.0).sqrt())?;
        let (vals, vecs) = sym_eig(&a)?;
        if r < n && vals[r - 1] - vals[r] <= 1e-9 * vals[0].abs().max(1.0) {
            return Err(cfg_err("spectrum needs a gap after the r-th eigenvalue"));
        }
        Ok(Self {
            n,
            r,
            a,
            sqrt_a,
            v_r: vecs.leading_cols(r),
        })
    }

    /// Rotation and initial point drawn from the init stream of `seed`.
    pub fn with_seed(spectrum: &[f64], r: usize, seed: u64) -> Result<(Self, DenseMatrix)> {
        let n = spectrum.len();
        let mut rng = stream_rng(seed, STREAM_INIT);
        let q = qr_qf(&gaussian(&mut rng, n, n))?;
        let w0 = qr_qf(&gaussian(&mut rng, n, r))?;
        Ok((Self::new(spectrum, r, &q)?, w0))
    }

    /// `(I − WWᵀ) A W`.
    pub fn field(&self) -> impl Fn(&DenseMatrix) -> DenseMatrix + '_ {
        move |w: &DenseMatrix| {
            let aw = self.a.matmul(w);
            &aw - &w.matmul(&w.t_matmul(&aw))
        }
    }

    pub fn residual(&self, w: &DenseMatrix) -> f64 {
        (self.field())(w).norm()
    }

    /// `‖WWᵀ − V_r V_rᵀ‖_F`.
    pub fn subspace_error(&self, w: &DenseMatrix) -> f64 {
        let p = w.matmul(&w.transpose());
        let q = self.v_r.matmul(&self.v_r.transpose());
        p.dist(&q)
    }

    pub fn data_stream(&self, seed: u64) -> OjaStream<'_> {
        OjaStream {
            problem: self,
            rng: stream_rng(seed, STREAM_DATA),
        }
    }
}

/// Sampled Oja field `H(z, W) = (I − WWᵀ) z zᵀ W` with `z = A^{1/2} g`.
pub struct OjaStream<'a> {
    problem: &'a OjaProblem,
    rng: ChaCha8Rng,
}

impl NoiseSource for OjaStream<'_> {
    fn sample(&mut self, w: &DenseMatrix, drift: &DenseMatrix) -> DenseMatrix {
        let g = DenseMatrix::column(&standard_normals(&mut self.rng, self.problem.n));
        let z = self.problem.sqrt_a.matmul(&g);
        let wz = w.t_matmul(&z);
        let resid = &z - &w.matmul(&wz);
        &resid.matmul(&wz.transpose()) - drift
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DenseMatrix {
    DenseMatrix::from_vec(n, m, standard_normals(rng, n * m)).expect("shape")
}

/// Change in subspace error under a random right rotation `W → WO`.
pub fn rotation_probe(problem: &OjaProblem, w: &DenseMatrix, seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed ^ 0x9e37_79b9_7f4a_7c15, STREAM_INIT);
    let o = qr_qf(&gaussian(&mut rng, problem.r, problem.r))?;
    Ok((problem.subspace_error(&w.matmul(&o)) - problem.subspace_error(w)).abs())
}

pub fn experiment_oja(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let spectrum = match (&cfg.problem.spectrum, cfg.dims.n) {
        (Some(s), Some(n)) if s.len() != n => {
            return Err(cfg_err(format!("spectrum has {} entries but dims.n = {n}", s.len())))
        }
        (Some(s), _) => s.clone(),
        (None, n) => default_spectrum(n.unwrap_or(10)),
    };
    let r = cfg.dims.r.unwrap_or(2.min(spectrum.len()));
    let (problem, w0) = OjaProblem::with_seed(&spectrum, r, cfg.seed)?;
    let m = Manifold::stiefel(problem.n, r)?;
    let sched = cfg.schedule.build()?;
    let field = problem.field();
    let mut noise = match cfg.noise.kind {
        NoiseKindConfig::Sampled => Noise::Sampled(problem.data_stream(cfg.seed)),
        _ => Noise::Additive(cfg.noise.additive(cfg.seed)?.stream()),
    };
    let record = run_retraction_sa(&m, &field, &mut noise, &sched, &w0, cfg.n_steps, &RunOptions::default())?;
    let idx = checkpoint_steps(&record, cfg.checkpoint_every());
    let windows = window_column(&record, ConstraintRef::Manifold(&m), &field, &idx)?;
    let rows = idx
        .iter()
        .zip(windows)
        .map(|(&i, win)| {
            let w = &record.points[i];
            ReportRow {
                step: record.steps[i],
                ode_time: record.times[i],
                primary_residual: Some(problem.residual(w)),
                dist_to_set: Some(m.membership_residual(w).unwrap_or(f64::INFINITY)),
                subspace_error: Some(problem.subspace_error(w)),
                window_sup_distance: win,
            }
        })
        .collect();
    let w = record.last();
    let mut summary = BTreeMap::new();
    summary.insert("final_subspace_error".into(), problem.subspace_error(w));
    summary.insert("final_residual".into(), problem.residual(w));
    summary.insert("rotation_probe".into(), rotation_probe(&problem, w, cfg.seed)?);
    Ok(ExperimentOutcome { record, rows, summary })
}

// ---------------------------------------------------------------- regression

#[derive(Debug, Clone, PartialEq)]
pub enum RegressionConstraint {
    Affine { l: DenseMatrix, c: DenseMatrix },
    Sphere,
}

/// Least squares for `y = xᵀw_true + σε` with `x ~ N(0, diag(variances))`,
/// constrained to an affine set or the unit sphere.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub variances: Vec<f64>,
    pub w_true: DenseMatrix,
    pub sigma: f64,
    pub constraint: RegressionConstraint,
}

impl RegressionProblem {
    pub fn dim(&self) -> usize {
        self.variances.len()
    }

    pub fn manifold(&self) -> Result<Manifold> {
        match &self.constraint {
            RegressionConstraint::Affine { l, c } => Manifold::affine(l.clone(), c.clone()),
            RegressionConstraint::Sphere => Manifold::sphere(self.dim()),
        }
    }

    fn cov(&self) -> DenseMatrix {
        DenseMatrix::diag(&self.variances)
    }

    /// Expected descent field `−Σ(w − w_true)`.
    pub fn field(&self) -> impl Fn(&DenseMatrix) -> DenseMatrix + '_ {
        let cov = self.cov();
        move |w: &DenseMatrix| cov.matmul(&(&self.w_true - w))
    }

    /// Constrained minimiser of `½(w − w_true)ᵀΣ(w − w_true)`.
    pub fn optimum(&self) -> Result<DenseMatrix> {
        let d = self.dim();
        let b = self.cov().matmul(&self.w_true);
        match &self.constraint {
            RegressionConstraint::Affine { l, c } => {
                let p = l.rows();
                let mut kkt = DenseMatrix::zeros(d + p, d + p);
                let mut rhs = DenseMatrix::zeros(d + p, 1);
                for i in 0..d {
                    kkt[(i, i)] = self.variances[i];
                    rhs[(i, 0)] = b[(i, 0)];
                }
                for k in 0..p {
                    for j in 0..d {
                        kkt[(d + k, j)] = l[(k, j)];
                        kkt[(j, d + k)] = l[(k, j)];
                    }
                    rhs[(d + k, 0)] = c[(k, 0)];
                }
                let sol = solve(&kkt, &rhs)?;
                Ok(DenseMatrix::column(&sol.as_slice()[..d]))
            }
            RegressionConstraint::Sphere => sphere_quadratic_min(&self.variances, b.as_slice()),
        }
    }

    pub fn data_stream(&self, seed: u64) -> RegressionStream<'_> {
        RegressionStream {
            problem: self,
            rng: stream_rng(seed, STREAM_DATA),
        }
    }
}

/// Minimiser of `½wᵀdiag(s)w − bᵀw` over the unit sphere, by bisection on
/// the multiplier `μ < min s` in `w(μ) = (diag(s) − μ)⁻¹ b`.
pub fn sphere_quadratic_min(s: &[f64], b: &[f64]) -> Result<DenseMatrix> {
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_at = |mu: f64| {
        s.iter()
            .zip(b)
            .map(|(si, bi)| if *bi == 0.0 { 0.0 } else { (bi / (si - mu)).powi(2) })
            .sum::<f64>()
            .sqrt()
    };
    let tie = |i: usize| (s[i] - smin).abs() <= 1e-14 * smin.abs().max(1.0);
    // hard case: b has no weight on the bottom eigenspace and w(μ) never reaches norm 1
    let hard = (0..s.len()).all(|i| !tie(i) || b[i] == 0.0);
    if hard {
        let partial: Vec<f64> = (0..s.len())
            .map(|i| if tie(i) { 0.0 } else { b[i] / (s[i] - smin) })
            .collect();
        let pn = partial.iter().map(|v| v * v).sum::<f64>();
        if pn <= 1.0 {
            let k = (0..s.len()).find(|&i| tie(i)).expect("bottom index");
            let mut w = partial;
            w[k] = (1.0 - pn).sqrt();
            return Ok(DenseMatrix::column(&w));
        }
    }
    let mut hi = smin;
    let mut lo = smin - scale.max(1e-300) - 1.0;
    while norm_at(lo) > 1.0 {
        lo = smin - 2.0 * (smin - lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if norm_at(mid) > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let w: Vec<f64> = s.iter().zip(b).map(|(si, bi)| bi / (si - mu)).collect();
    let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(DenseMatrix::column(&w).scale(1.0 / n))
}

/// Sampled gradient `−x(xᵀw − y)` on a fresh observation per step.
pub struct RegressionStream<'a> {
    problem: &'a RegressionProblem,
    rng: ChaCha8Rng,
}

impl NoiseSource for RegressionStream<'_> {
    fn sample(&mut self, w: &DenseMatrix, drift: &DenseMatrix) -> DenseMatrix {
        let d = self.problem.dim();
        let g = standard_normals(&mut self.rng, d + 1);
        let x = DenseMatrix::column(
            &(0..d)
                .map(|i| self.problem.variances[i].sqrt() * g[i])
                .collect::<Vec<_>>(),
        );
        let y = x.dot(&self.problem.w_true) + self.problem.sigma * g[d];
        &x.scale(y - x.dot(w)) - drift
    }
}

fn regression_problem(cfg: &ExperimentConfig) -> Result<(RegressionProblem, DenseMatrix)> {
    let p: &ProblemConfig = &cfg.problem;
    let sphere = cfg.experiment == ExperimentKind::RegressionSphere;
    let default_w = if sphere { vec![0.0, 5.0] } else { vec![3.0, -1.0] };
    let w_true = p.w_true.clone().unwrap_or(default_w);
    let d = w_true.len();
    if let Some(dd) = cfg.dims.d {
        if dd != d {
            return Err(cfg_err(format!("w_true has {d} entries but dims.d = {dd}")));
        }
    }
    let variances = p.regressor_variances.clone().unwrap_or_else(|| vec![1.0; d]);
    if variances.len() != d || variances.iter().any(|&v| !(v > 0.0)) {
        return Err(cfg_err("regressor_variances must be positive with one entry per weight"));
    }
    let constraint = if sphere {
        RegressionConstraint::Sphere
    } else {
        let l = match &p.l {
            Some(rows) => matrix_from_rows(rows, "problem.l")?,
            None => DenseMatrix::from_rows(&[vec![1.0; d]]),
        };
        let c = DenseMatrix::column(&p.c.clone().unwrap_or_else(|| vec![2.0; l.rows()]));
        if l.cols() != d || c.rows() != l.rows() {
            return Err(cfg_err("constraint shapes do not match w_true"));
        }
        RegressionConstraint::Affine { l, c }
    };
    let problem = RegressionProblem {
        variances,
        w_true: DenseMatrix::column(&w_true),
        sigma: cfg.noise.sigma,
        constraint,
    };
    let x0 = match &p.x0 {
        Some(x) if x.len() != d => return Err(cfg_err("x0 has the wrong length")),
        Some(x) => DenseMatrix::column(x),
        None if sphere => {
            let mut e = vec![0.0; d];
            e[0] = 1.0;
            DenseMatrix::column(&e)
        }
        None => {
            let m = problem.manifold().map_err(|e| cfg_err(e.to_string()))?;
            m.project(&DenseMatrix::zeros(d, 1))?
        }
    };
    Ok((problem, x0))
}

pub fn experiment_regression(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let (problem, x0) = regression_problem(cfg)?;
    let m = problem.manifold().map_err(|e| cfg_err(e.to_string()))?;
    if !m.is_on_manifold(&x0, 1e-8)? {
        return Err(cfg_err("x0 does not satisfy the constraint"));
    }
    let optimum = problem.optimum()?;
    let sched = cfg.schedule.build()?;
    let field = problem.field();
    let mut noise = match cfg.noise.kind {
        NoiseKindConfig::Sampled => Noise::Sampled(problem.data_stream(cfg.seed)),
        _ => Noise::Additive(cfg.noise.additive(cfg.seed)?.stream()),
    };
    let record = run_retraction_sa(&m, &field, &mut noise, &sched, &x0, cfg.n_steps, &RunOptions::default())?;
    let idx = checkpoint_steps(&record, cfg.checkpoint_every());
    let windows = window_column(&record, ConstraintRef::Manifold(&m), &field, &idx)?;
    let rows = idx
        .iter()
        .zip(windows)
        .map(|(&i, win)| {
            let w = &record.points[i];
            ReportRow {
                step: record.steps[i],
                ode_time: record.times[i],
                primary_residual: Some(w.dist(&optimum)),
                dist_to_set: Some(m.membership_residual(w).unwrap_or(f64::INFINITY)),
                subspace_error: None,
                window_sup_distance: win,
            }
        })
        .collect();
    let mut summary = BTreeMap::new();
    summary.insert("final_distance_to_optimum".into(), record.last().dist(&optimum));
    Ok(ExperimentOutcome { record, rows, summary })
}

// ---------------------------------------------------------------- relaxed experiments

fn rates(cfg: &ExperimentConfig) -> Result<TwoRateSchedule> {
    let fast = match &cfg.fast_schedule {
        Some(f) => f.build()?,
        None => StepSchedule::default_fast(),
    };
    TwoRateSchedule::new(fast, cfg.schedule.build()?).map_err(|e| cfg_err(e.to_string()))
}

fn relaxed_projection(cfg: &ExperimentConfig, stages: Vec<ElementaryProjector>) -> Result<ApproxProjection> {
    let f = ApproxProjection::new(stages)?;
    match cfg.problem.relaxation {
        Some(l) => f.with_relaxation(l).map_err(|e| cfg_err(e.to_string())),
        None => Ok(f),
    }
}

fn relaxed_options(cfg: &ExperimentConfig) -> RunOptions {
    RunOptions {
        record_every: cfg.checkpoint_every(),
        ..RunOptions::default()
    }
}

pub fn experiment_nearest_correlation(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let c_obs = match &cfg.problem.c_obs {
        Some(rows) => matrix_from_rows(rows, "problem.c_obs")?,
        None => DenseMatrix::from_rows(&[[1.0, 0.9], [0.9, 0.5]]),
    };
    let n = c_obs.rows();
    if c_obs.cols() != n || cfg.dims.n.is_some_and(|d| d != n) {
        return Err(cfg_err("c_obs must be square and match dims.n"));
    }
    let f = relaxed_projection(
        cfg,
        vec![ElementaryProjector::psd_cone(n)?, ElementaryProjector::unit_diagonal(n)?],
    )?;
    let exact = ApproxProjection::new(f.stages().to_vec())?;
    let target = exact.projection_limit(&c_obs, 1e-12, 1_000_000)?.point;
    let obs = c_obs.clone();
    let field = move |c: &DenseMatrix| &obs - c;
    let mut noise = cfg.noise.additive(cfg.seed)?.stream();
    let budget = cfg.problem.a7_budget.unwrap_or(8);
    let x0 = c_obs.clone();
    let record = run_relaxed_sa(
        &f,
        &field,
        &mut noise,
        &rates(cfg)?,
        &x0,
        cfg.n_steps,
        &A7Config::with_budget(budget),
        &relaxed_options(cfg),
    )?;
    let proj = LimitProjector { f: &exact, tol: 1e-12, max_iter: 1_000_000 };
    let dist = record.series(SERIES_DIST_TO_SET).expect("dist series");
    let mut rows = Vec::with_capacity(record.len());
    for i in 0..record.len() {
        let pc = proj.project(&record.points[i])?;
        rows.push(ReportRow {
            step: record.steps[i],
            ode_time: record.times[i],
            primary_residual: Some(pc.dist(&target)),
            dist_to_set: Some(dist[i]),
            subspace_error: None,
            window_sup_distance: None,
        });
    }
    let mut summary = BTreeMap::new();
    summary.insert("final_error_projected".into(), rows.last().and_then(|r| r.primary_residual).unwrap_or(f64::NAN));
    summary.insert("final_error_raw".into(), record.last().dist(&target));
    summary.insert("final_dist_to_set".into(), *dist.last().expect("non-empty"));
    Ok(ExperimentOutcome { record, rows, summary })
}

/// A polyhedron, its projection map and a drift field.
pub struct PolyhedralProblem {
    pub query: ConeQuery,
    pub stages: Vec<ElementaryProjector>,
    pub target: Option<DenseMatrix>,
    pub drive: Option<DenseMatrix>,
}

impl PolyhedralProblem {
    pub fn eval(&self, x: &DenseMatrix) -> DenseMatrix {
        match (&self.drive, &self.target) {
            (Some(d), _) => d.clone(),
            (None, Some(t)) => t - x,
            (None, None) => DenseMatrix::zeros(x.rows(), 1),
        }
    }
}

fn polyhedral_problem(cfg: &ExperimentConfig) -> Result<(PolyhedralProblem, DenseMatrix)> {
    let p = &cfg.problem;
    let query = match (&p.a, &p.b) {
        (Some(a), Some(b)) => ConeQuery::new(matrix_from_rows(a, "problem.a")?, b.clone())
            .map_err(|e| cfg_err(e.to_string()))?,
        (None, None) => {
            let lo = p.lo.clone().unwrap_or_else(|| vec![0.0, 0.0]);
            let hi = p.hi.clone().unwrap_or_else(|| vec![1.0; lo.len()]);
            ConeQuery::from_box(&lo, &hi).map_err(|e| cfg_err(e.to_string()))?
        }
        _ => return Err(cfg_err("problem.a and problem.b must be given together")),
    };
    let d = query.dim();
    let vec_of = |v: &Option<Vec<f64>>, what: &str| -> Result<Option<DenseMatrix>> {
        match v {
            Some(x) if x.len() != d => Err(cfg_err(format!("{what} must have {d} entries"))),
            Some(x) => Ok(Some(DenseMatrix::column(x))),
            None => Ok(None),
        }
    };
    let mut target = vec_of(&p.target, "problem.target")?;
    let drive = vec_of(&p.drive, "problem.drive")?;
    if target.is_none() && drive.is_none() {
        let mut t = vec![0.5; d];
        t[0] = 2.0;
        target = Some(DenseMatrix::column(&t));
    }
    let x0 = vec_of(&p.x0, "problem.x0")?.unwrap_or_else(|| DenseMatrix::zeros(d, 1));
    let stages = query.halfspace_stages()?;
    Ok((PolyhedralProblem { query, stages, target, drive }, x0))
}

pub fn experiment_polyhedral(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let (problem, x0) = polyhedral_problem(cfg)?;
    let f = relaxed_projection(cfg, problem.stages.clone())?;
    let exact = ApproxProjection::new(problem.stages.clone())?;
    let proj = LimitProjector::new(&exact);
    let field = |x: &DenseMatrix| problem.eval(x);
    let mut noise = cfg.noise.additive(cfg.seed)?.stream();
    let budget = cfg.problem.a7_budget.unwrap_or(8);
    let record = run_relaxed_sa(
        &f,
        &field,
        &mut noise,
        &rates(cfg)?,
        &x0,
        cfg.n_steps,
        &A7Config::with_budget(budget),
        &relaxed_options(cfg),
    )?;
    let dist = record.series(SERIES_DIST_TO_SET).expect("dist series");
    let mut rows = Vec::with_capacity(record.len());
    for i in 0..record.len() {
        let px = proj.project(&record.points[i])?;
        let kkt = problem.query.normal_cone_residual(&px, &problem.eval(&px))?;
        rows.push(ReportRow {
            step: record.steps[i],
            ode_time: record.times[i],
            primary_residual: Some(kkt),
            dist_to_set: Some(dist[i]),
            subspace_error: None,
            window_sup_distance: None,
        });
    }
    let mut summary = BTreeMap::new();
    summary.insert("final_kkt_residual".into(), rows.last().and_then(|r| r.primary_residual).unwrap_or(f64::NAN));
    summary.insert("final_dist_to_set".into(), *dist.last().expect("non-empty"));
    for (w, win) in record.a7_windows.iter().enumerate() {
        summary.insert(format!("a7_window_{w:03}"), win.sum);
    }
    Ok(ExperimentOutcome { record, rows, summary })
}
