//! Stochastic-approximation drivers, step schedules and noise.
//!
//! Three iterations are provided:
//!
//! * retraction SA, `x ← R_x(a(H + M))`, and its exponential-map variant;
//! * approximate-projection SA, `x ← f(x) + a(H + M)`;
//! * relaxed two-rate SA, `x ← (1 − γ)x + γ f(x) + a(H + M)`, with `a = o(γ)`.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraint_sets::ApproxProjection;
use crate::error::{Error, Result};
use crate::manifolds::{InjectivityGuard, Manifold, TangentVector};
use crate::numkernels::DenseMatrix;

/// RNG stream for sampled data (e.g. Oja observations).
pub const STREAM_DATA: u64 = 0;
/// RNG stream for additive martingale noise.
pub const STREAM_NOISE: u64 = 1;
/// RNG stream for random initial points.
pub const STREAM_INIT: u64 = 2;

/// Residual series names used in [`RunRecord::residuals`].
pub const SERIES_DIST_TO_SET: &str = "dist_to_set";
pub const SERIES_FIXED_POINT_GAP: &str = "fixed_point_gap";
pub const SERIES_SWEEPS: &str = "sweeps";

/// ChaCha8 generator for one named stream of a seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `a_n = a0 / (n + τ)^p` for `n = 0, 1, ...`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    a0: f64,
    p: f64,
    offset: u64,
}

impl StepSchedule {
    pub fn new(a0: f64, p: f64, offset: u64) -> Result<Self> {
        if !(a0 > 0.0 && a0.is_finite()) {
            return Err(Error::InvalidSchedule(format!("scale must be positive, got {a0}")));
        }
        if !(p > 0.5 && p <= 1.0) {
            return Err(Error::InvalidSchedule(format!("exponent must lie in (0.5, 1], got {p}")));
        }
        if offset == 0 {
            return Err(Error::InvalidSchedule("offset must be a positive integer".into()));
        }
        Ok(Self { a0, p, offset })
    }

    /// `0.5 / (n + 10)^0.9`
    pub fn default_slow() -> Self {
        Self { a0: 0.5, p: 0.9, offset: 10 }
    }

    /// `0.5 / (n + 10)^0.6`
    pub fn default_fast() -> Self {
        Self { a0: 0.5, p: 0.6, offset: 10 }
    }

    pub fn scale(&self) -> f64 {
        self.a0
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn step(&self, n: usize) -> f64 {
        self.a0 / (n as f64 + self.offset as f64).powf(self.p)
    }

    /// `t_n = Σ_{m<n} a_m`.
    pub fn ode_time(&self, n: usize) -> f64 {
        (0..n).map(|m| self.step(m)).sum()
    }

    /// Smallest `n` with `t_n ≥ t`.
    pub fn steps_to_reach(&self, t: f64) -> usize {
        let mut acc = 0.0;
        let mut n = 0;
        while acc < t {
            acc += self.step(n);
            n += 1;
        }
        n
    }
}

/// A fast schedule `γ` and a slow schedule `a` with `a = o(γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoRateSchedule {
    fast: StepSchedule,
    slow: StepSchedule,
}

impl TwoRateSchedule {
    pub fn new(fast: StepSchedule, slow: StepSchedule) -> Result<Self> {
        if slow.p <= fast.p {
            return Err(Error::InvalidSchedule(format!(
                "slow exponent {} must exceed fast exponent {}",
                slow.p, fast.p
            )));
        }
        Ok(Self { fast, slow })
    }

    pub fn defaults() -> Self {
        Self {
            fast: StepSchedule::default_fast(),
            slow: StepSchedule::default_slow(),
        }
    }

    pub fn fast(&self) -> &StepSchedule {
        &self.fast
    }

    pub fn slow(&self) -> &StepSchedule {
        &self.slow
    }

    /// `a_n / γ_n`.
    pub fn ratio(&self, n: usize) -> f64 {
        self.slow.step(n) / self.fast.step(n)
    }
}

/// Partial sums of `a_n` and `a_n²` at `n ∈ {10², 10³, 10⁴, 10⁵}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleCertificate {
    pub checkpoints: Vec<usize>,
    pub partial_sums: Vec<f64>,
    pub sq_partial_sums: Vec<f64>,
    /// `a_n²` at each checkpoint.
    pub sq_increments: Vec<f64>,
}

impl ScheduleCertificate {
    /// `S(10⁵) / S(10⁴)`
    pub fn growth_ratio(&self) -> f64 {
        self.partial_sums[3] / self.partial_sums[2]
    }
}

pub fn schedule_certificate(s: &StepSchedule) -> ScheduleCertificate {
    let checkpoints = vec![100, 1_000, 10_000, 100_000];
    let mut partial_sums = Vec::new();
    let mut sq_partial_sums = Vec::new();
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut n = 0;
    for &c in &checkpoints {
        while n < c {
            let a = s.step(n);
            s1 += a;
            s2 += a * a;
            n += 1;
        }
        partial_sums.push(s1);
        sq_partial_sums.push(s2);
    }
    let sq_increments = checkpoints.iter().map(|&c| s.step(c).powi(2)).collect();
    ScheduleCertificate {
        checkpoints,
        partial_sums,
        sq_partial_sums,
        sq_increments,
    }
}

/// The mean field `H`.
pub trait VectorField {
    fn eval(&self, x: &DenseMatrix) -> DenseMatrix;
}

impl<F: Fn(&DenseMatrix) -> DenseMatrix> VectorField for F {
    fn eval(&self, x: &DenseMatrix) -> DenseMatrix {
        self(x)
    }
}

/// Source of the martingale term `M_{k+1}` given the iterate and `H(x_k)`.
pub trait NoiseSource {
    fn sample(&mut self, x: &DenseMatrix, drift: &DenseMatrix) -> DenseMatrix;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Zero,
    /// i.i.d. `N(0, σ²)` entries, projected to the tangent space by the
    /// manifold drivers.
    TangentGaussian { sigma: f64 },
    /// i.i.d. `U[−radius, radius]` entries.
    TangentBoundedUniform { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, seed: u64) -> Result<Self> {
        let ok = match kind {
            NoiseKind::Zero => true,
            NoiseKind::TangentGaussian { sigma } => sigma >= 0.0 && sigma.is_finite(),
            NoiseKind::TangentBoundedUniform { radius } => radius >= 0.0 && radius.is_finite(),
        };
        if !ok {
            return Err(Error::InvalidSpec(format!("invalid noise parameters {kind:?}")));
        }
        Ok(Self { kind, seed })
    }

    pub fn zero() -> Self {
        Self { kind: NoiseKind::Zero, seed: 0 }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Result<Self> {
        Self::new(NoiseKind::TangentGaussian { sigma }, seed)
    }

    pub fn stream(&self) -> NoiseStream {
        NoiseStream {
            kind: self.kind,
            rng: stream_rng(self.seed, STREAM_NOISE),
        }
    }
}

/// Stateful sampler for a [`NoiseModel`]. Every sample of `k` entries
/// consumes exactly `k` (uniform) or `2⌈k/2⌉` (Gaussian) 64-bit draws.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    kind: NoiseKind,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn draw(&mut self, rows: usize, cols: usize) -> DenseMatrix {
        let k = rows * cols;
        let data = match self.kind {
            NoiseKind::Zero => vec![0.0; k],
            NoiseKind::TangentGaussian { sigma } => {
                let mut out = standard_normals(&mut self.rng, k);
                out.iter_mut().for_each(|v| *v *= sigma);
                out
            }
            NoiseKind::TangentBoundedUniform { radius } => (0..k)
                .map(|_| radius * (2.0 * unit_open(self.rng.next_u64()) - 1.0))
                .collect(),
        };
        DenseMatrix::from_vec(rows, cols, data).expect("shape")
    }
}

impl NoiseSource for NoiseStream {
    fn sample(&mut self, x: &DenseMatrix, _drift: &DenseMatrix) -> DenseMatrix {
        self.draw(x.rows(), x.cols())
    }
}

// uniform in (0, 1]
fn unit_open(u: u64) -> f64 {
    ((u >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// `k` standard normals by Box–Muller, two draws per pair.
pub fn standard_normals<R: RngCore + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    while out.len() < k {
        let u1 = unit_open(rng.next_u64());
        let u2 = unit_open(rng.next_u64());
        let r = (-2.0 * u1.ln()).sqrt();
        let th = std::f64::consts::TAU * u2;
        out.push(r * th.cos());
        out.push(r * th.sin());
    }
    out.truncate(k);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepFlag {
    /// The exponential-map step was shortened to the guard's clip norm.
    ClippedStep,
}

/// One closed (A7) window of slow ODE-time length `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A7Window {
    pub start_step: usize,
    pub end_step: usize,
    /// `Σ γ_j ‖f(x_j) − x_j‖` over the window.
    pub sum: f64,
    pub threshold: f64,
    /// Sweeps per call in effect after the window closed.
    pub sweeps_after: usize,
}

/// Recorded trajectory of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    /// Step index of every recorded point.
    pub steps: Vec<usize>,
    /// `t_n = Σ_{m<n} a_m` at the recorded steps.
    pub times: Vec<f64>,
    pub points: Vec<DenseMatrix>,
    /// `(step, flag)` events.
    pub flags: Vec<(usize, StepFlag)>,
    /// Named series aligned with `points`.
    pub residuals: BTreeMap<String, Vec<f64>>,
    pub a7_windows: Vec<A7Window>,
}

impl RunRecord {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> &DenseMatrix {
        self.points.last().expect("non-empty record")
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.residuals.get(name).map(Vec::as_slice)
    }

    pub fn count_flag(&self, flag: StepFlag) -> usize {
        self.flags.iter().filter(|(_, f)| *f == flag).count()
    }

    fn push(&mut self, step: usize, time: f64, x: &DenseMatrix) {
        self.steps.push(step);
        self.times.push(time);
        self.points.push(x.clone());
    }

    fn push_series(&mut self, name: &str, value: f64) {
        self.residuals.entry(name.to_string()).or_default().push(value);
    }
}

/// Options shared by the drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Record every `record_every`-th step (the first and last are always kept).
    pub record_every: usize,
    /// Abort with `InfeasibleDrift` once `‖x_k‖` exceeds this radius.
    pub monitor_radius: Option<f64>,
    /// Tolerance and iteration cap of the dist-to-set residual.
    pub residual_tol: f64,
    pub residual_max_iter: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            record_every: 1,
            monitor_radius: None,
            residual_tol: 1e-10,
            residual_max_iter: 10_000,
        }
    }
}

impl RunOptions {
    fn should_record(&self, step: usize, n_steps: usize) -> bool {
        step == n_steps || step % self.record_every.max(1) == 0
    }

    fn monitor(&self, step: usize, x: &DenseMatrix) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::NonFinite);
        }
        if let Some(radius) = self.monitor_radius {
            let norm = x.norm();
            if norm > radius {
                return Err(Error::InfeasibleDrift { step, norm, radius });
            }
        }
        Ok(())
    }
}

fn manifold_loop<F>(
    m: &Manifold,
    h: &dyn VectorField,
    noise: &mut dyn NoiseSource,
    sched: &StepSchedule,
    x0: &DenseMatrix,
    n_steps: usize,
    opts: &RunOptions,
    mut step_fn: F,
) -> Result<RunRecord>
where
    F: FnMut(&TangentVector) -> Result<(DenseMatrix, bool)>,
{
    let residual = m.membership_residual(x0)?;
    if residual > crate::manifolds::MEMBERSHIP_TOL {
        return Err(Error::NotOnManifold { residual });
    }
    let mut rec = RunRecord::default();
    let mut x = x0.clone();
    let mut t = 0.0;
    rec.push(0, t, &x);
    for k in 0..n_steps {
        let a = sched.step(k);
        let drift = h.eval(&x);
        let mv = noise.sample(&x, &drift);
        let v = (&drift + &mv).scale(a);
        let tv = m.tangent_project(&x, &v)?;
        let (next, clipped) = step_fn(&tv)?;
        if clipped {
            rec.flags.push((k, StepFlag::ClippedStep));
        }
        x = next;
        t += a;
        opts.monitor(k + 1, &x)?;
        if opts.should_record(k + 1, n_steps) {
            rec.push(k + 1, t, &x);
        }
    }
    Ok(rec)
}

/// `x_{k+1} = R_{x_k}(a_k (H(x_k) + M_{k+1}))` with both terms projected to
/// the tangent space at `x_k`.
pub fn run_retraction_sa(
    m: &Manifold,
    h: &dyn VectorField,
    noise: &mut dyn NoiseSource,
    sched: &StepSchedule,
    x0: &DenseMatrix,
    n_steps: usize,
    opts: &RunOptions,
) -> Result<RunRecord> {
    manifold_loop(m, h, noise, sched, x0, n_steps, opts, |t| Ok((m.retract(t)?, false)))
}

/// `x_{k+1} = exp_{x_k}(a_k (H(x_k) + M_{k+1}))` on the sphere, with steps
/// beyond the guard's clip norm shortened and flagged.
#[allow(clippy::too_many_arguments)]
pub fn run_exp_sa(
    m: &Manifold,
    h: &dyn VectorField,
    noise: &mut dyn NoiseSource,
    sched: &StepSchedule,
    x0: &DenseMatrix,
    n_steps: usize,
    guard: &InjectivityGuard,
    opts: &RunOptions,
) -> Result<RunRecord> {
    if !m.is_sphere() {
        return Err(Error::UnsupportedManifold(
            "exponential-map SA is only available on the sphere".into(),
        ));
    }
    manifold_loop(m, h, noise, sched, x0, n_steps, opts, |t| {
        let s = m.exp_map(t, guard)?;
        Ok((s.point, s.clipped))
    })
}

fn dist_to_set(f: &ApproxProjection, x: &DenseMatrix, opts: &RunOptions) -> Result<f64> {
    let lim = f.projection_limit(x, opts.residual_tol, opts.residual_max_iter)?;
    Ok(x.dist(&lim.point))
}

/// `x_{k+1} = f(x_k) + a_k (H(x_k) + M_{k+1})`.
///
/// `f` is evaluated from zero Dykstra corrections at every step, so it is a
/// fixed map of the current iterate. Records the `dist_to_set` series.
pub fn run_approx_projection_sa(
    f: &ApproxProjection,
    h: &dyn VectorField,
    noise: &mut dyn NoiseSource,
    sched: &StepSchedule,
    x0: &DenseMatrix,
    n_steps: usize,
    opts: &RunOptions,
) -> Result<RunRecord> {
    x0.ensure_shape(f.input_shape())?;
    x0.ensure_finite()?;
    let mut rec = RunRecord::default();
    let mut x = x0.clone();
    let mut t = 0.0;
    rec.push(0, t, &x);
    rec.push_series(SERIES_DIST_TO_SET, dist_to_set(f, &x, opts)?);
    for k in 0..n_steps {
        let a = sched.step(k);
        let drift = h.eval(&x);
        let mv = noise.sample(&x, &drift);
        let fx = f.apply_fresh(&x)?;
        x = fx.add_scaled(&(&drift + &mv), a);
        t += a;
        opts.monitor(k + 1, &x)?;
        if opts.should_record(k + 1, n_steps) {
            rec.push(k + 1, t, &x);
            rec.push_series(SERIES_DIST_TO_SET, dist_to_set(f, &x, opts)?);
        }
    }
    Ok(rec)
}

/// Window length and thresholds for the (A7) monitor of the relaxed driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A7Config {
    /// Slow ODE-time length `T` of each window.
    pub horizon: f64,
    /// Window `w` escalates when its sum exceeds `threshold0 / (w + 1)`.
    pub threshold0: f64,
    /// Upper bound on sweeps per call of `f`.
    pub budget: usize,
}

impl A7Config {
    pub fn with_budget(budget: usize) -> Self {
        Self {
            horizon: 1.0,
            threshold0: 1.0,
            budget,
        }
    }
}

/// `x_{k+1} = (1 − γ_k)x_k + γ_k f(x_k) + a_k (H(x_k) + M_{k+1})`.
///
/// Records `fixed_point_gap` (`‖f(x_k) − x_k‖`), `dist_to_set` and `sweeps`
/// series and closes an [`A7Window`] each time `Σ a` over the window reaches
/// the horizon; windows whose `Σ γ‖f(x) − x‖` exceeds the declining threshold
/// double the sweeps per call, up to the budget.
#[allow(clippy::too_many_arguments)]
pub fn run_relaxed_sa(
    f: &ApproxProjection,
    h: &dyn VectorField,
    noise: &mut dyn NoiseSource,
    rates: &TwoRateSchedule,
    x0: &DenseMatrix,
    n_steps: usize,
    a7: &A7Config,
    opts: &RunOptions,
) -> Result<RunRecord> {
    if !f.all_convex() {
        return Err(Error::NotNonExpansive(
            "relaxed SA requires convex stages so that f is non-expansive".into(),
        ));
    }
    if a7.budget == 0 || !(a7.horizon > 0.0) || !(a7.threshold0 > 0.0) {
        return Err(Error::InvalidSpec(format!("invalid (A7) configuration {a7:?}")));
    }
    x0.ensure_shape(f.input_shape())?;
    x0.ensure_finite()?;
    let mut sweeps = f.sweeps_per_call().min(a7.budget);
    let mut rec = RunRecord::default();
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut fx = f.apply_fresh_sweeps(&x, sweeps)?;
    let mut gap = fx.dist(&x);
    rec.push(0, t, &x);
    rec.push_series(SERIES_FIXED_POINT_GAP, gap);
    rec.push_series(SERIES_DIST_TO_SET, dist_to_set(f, &x, opts)?);
    rec.push_series(SERIES_SWEEPS, sweeps as f64);

    let (mut win_start, mut win_time, mut win_sum) = (0usize, 0.0, 0.0);
    for k in 0..n_steps {
        let a = rates.slow().step(k);
        let g = rates.fast().step(k);
        let drift = h.eval(&x);
        let mv = noise.sample(&x, &drift);
        let next = x
            .scale(1.0 - g)
            .add_scaled(&fx, g)
            .add_scaled(&(&drift + &mv), a);

        win_sum += g * gap;
        win_time += a;
        if win_time >= a7.horizon {
            let w = rec.a7_windows.len();
            let threshold = a7.threshold0 / (w as f64 + 1.0);
            if win_sum > threshold {
                sweeps = (sweeps * 2).min(a7.budget);
            }
            rec.a7_windows.push(A7Window {
                start_step: win_start,
                end_step: k,
                sum: win_sum,
                threshold,
                sweeps_after: sweeps,
            });
            win_start = k + 1;
            win_time = 0.0;
            win_sum = 0.0;
        }

        x = next;
        t += a;
        opts.monitor(k + 1, &x)?;
        fx = f.apply_fresh_sweeps(&x, sweeps)?;
        gap = fx.dist(&x);
        if opts.should_record(k + 1, n_steps) {
            rec.push(k + 1, t, &x);
            rec.push_series(SERIES_FIXED_POINT_GAP, gap);
            rec.push_series(SERIES_DIST_TO_SET, dist_to_set(f, &x, opts)?);
            rec.push_series(SERIES_SWEEPS, sweeps as f64);
        }
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint_sets::ElementaryProjector;

    fn v(x: &[f64]) -> DenseMatrix {
        DenseMatrix::column(x)
    }

    #[test]
    fn schedule_validation() {
        assert!(StepSchedule::new(1.0, 0.5, 1).is_err());
        assert!(StepSchedule::new(1.0, 1.01, 1).is_err());
        assert!(StepSchedule::new(0.0, 0.9, 1).is_err());
        assert!(StepSchedule::new(1.0, 0.9, 0).is_err());
        assert!(StepSchedule::new(1.0, 1.0, 1).is_ok());
        let s = StepSchedule::new(1.0, 0.9, 3).unwrap();
        assert!(TwoRateSchedule::new(s, s).is_err());
    }

    #[test]
    fn schedule_values() {
        let s = StepSchedule::default_slow();
        assert_eq!(s.step(0), 0.5 / 10f64.powf(0.9));
        assert_eq!(s.ode_time(0), 0.0);
        assert!((s.ode_time(3) - (s.step(0) + s.step(1) + s.step(2))).abs() < 1e-15);
        let n = s.steps_to_reach(2.0);
        assert!(s.ode_time(n) >= 2.0 && s.ode_time(n - 1) < 2.0);
    }

    #[test]
    fn harmonic_certificate_matches_brute_force() {
        let s = StepSchedule::new(1.0, 1.0, 1).unwrap();
        let c = schedule_certificate(&s);
        let brute: f64 = (1..=10_000).map(|k| 1.0 / k as f64).sum();
        assert!((c.partial_sums[2] - brute).abs() < 1e-9);
        // H_N = ln N + γ + O(1/N)
        let euler_gamma = 0.577_215_664_901_532_9;
        assert!((c.partial_sums[2] - (10_000f64.ln() + euler_gamma)).abs() < 1e-4);
    }

    #[test]
    fn gaussian_draws_are_fixed_width() {
        let mut a = NoiseModel::gaussian(1.0, 5).unwrap().stream();
        let mut b = NoiseModel::gaussian(1.0, 5).unwrap().stream();
        a.draw(3, 1);
        b.draw(2, 2);
        // 3 and 4 entries both consume four words
        assert_eq!(a.draw(1, 1), b.draw(1, 1));
    }

    #[test]
    fn noise_stream_moments() {
        let mut s = NoiseModel::gaussian(0.5, 1).unwrap().stream();
        let n = 100_000;
        let xs = s.draw(n, 1);
        let mean = xs.as_slice().iter().sum::<f64>() / n as f64;
        let var = xs.as_slice().iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 5.0 * 0.5 / (n as f64).sqrt());
        assert!((var - 0.25).abs() < 0.01);
        let mut u = NoiseModel::new(NoiseKind::TangentBoundedUniform { radius: 2.0 }, 1)
            .unwrap()
            .stream();
        assert!(u.draw(1000, 1).max_abs() <= 2.0);
        assert!(NoiseModel::gaussian(-1.0, 0).is_err());
    }

    #[test]
    fn retraction_sa_zero_field_is_constant() {
        let m = Manifold::sphere(2).unwrap();
        let x0 = v(&[0.6, 0.8]);
        let h = |x: &DenseMatrix| DenseMatrix::zeros(x.rows(), x.cols());
        let rec = run_retraction_sa(
            &m,
            &h,
            &mut NoiseModel::zero().stream(),
            &StepSchedule::default_slow(),
            &x0,
            100,
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(rec.len(), 101);
        assert!(rec.points.iter().all(|p| p.dist(&x0) < 1e-15));
        assert!(rec.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn retraction_sa_rejects_off_manifold_start() {
        let m = Manifold::sphere(2).unwrap();
        let h = |x: &DenseMatrix| x.clone();
        let r = run_retraction_sa(
            &m,
            &h,
            &mut NoiseModel::zero().stream(),
            &StepSchedule::default_slow(),
            &v(&[1.0, 1.0]),
            1,
            &RunOptions::default(),
        );
        assert!(matches!(r, Err(Error::NotOnManifold { .. })));
    }

    #[test]
    fn exp_sa_requires_sphere() {
        let m = Manifold::stiefel(2, 1).unwrap();
        let h = |x: &DenseMatrix| x.clone();
        let r = run_exp_sa(
            &m,
            &h,
            &mut NoiseModel::zero().stream(),
            &StepSchedule::default_slow(),
            &v(&[1.0, 0.0]),
            1,
            &InjectivityGuard::sphere_default(),
            &RunOptions::default(),
        );
        assert!(matches!(r, Err(Error::UnsupportedManifold(_))));
    }

    #[test]
    fn monitor_aborts_on_drift() {
        let f = ApproxProjection::new(vec![ElementaryProjector::boxed(
            &[f64::NEG_INFINITY],
            &[f64::INFINITY],
        )
        .unwrap()])
        .unwrap();
        let h = |x: &DenseMatrix| x.clone();
        let opts = RunOptions {
            monitor_radius: Some(10.0),
            ..RunOptions::default()
        };
        let sched = StepSchedule::new(1.0, 1.0, 1).unwrap();
        let r = run_approx_projection_sa(&f, &h, &mut NoiseModel::zero().stream(), &sched, &v(&[1.0]), 1000, &opts);
        assert!(matches!(r, Err(Error::InfeasibleDrift { radius, .. }) if radius == 10.0));
    }

    #[test]
    fn relaxed_sa_rejects_nonconvex_stages() {
        let f = ApproxProjection::new(vec![ElementaryProjector::fixed_rank_trunc(2, 2, 1).unwrap()])
            .unwrap();
        let h = |x: &DenseMatrix| x.clone();
        let r = run_relaxed_sa(
            &f,
            &h,
            &mut NoiseModel::zero().stream(),
            &TwoRateSchedule::defaults(),
            &DenseMatrix::identity(2),
            1,
            &A7Config::with_budget(4),
            &RunOptions::default(),
        );
        assert!(matches!(r, Err(Error::NotNonExpansive(_))));
    }

    #[test]
    fn record_stride_keeps_endpoints() {
        let m = Manifold::sphere(2).unwrap();
        let h = |x: &DenseMatrix| DenseMatrix::zeros(x.rows(), x.cols());
        let opts = RunOptions {
            record_every: 7,
            ..RunOptions::default()
        };
        let rec = run_retraction_sa(
            &m,
            &h,
            &mut NoiseModel::zero().stream(),
            &StepSchedule::default_slow(),
            &v(&[1.0, 0.0]),
            20,
            &opts,
        )
        .unwrap();
        assert_eq!(rec.steps, vec![0, 7, 14, 20]);
    }
}
