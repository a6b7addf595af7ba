//! Three interactive runs for the browser page. Each entry point returns a
//! JSON string; the plain `*_run` functions are what the wrappers call.

use riemann_sa::constraint_sets::{ApproxProjection, ConeQuery, Projector};
use riemann_sa::harness::experiments::{default_spectrum, OjaProblem};
use riemann_sa::harness::verify::{sphere_ascent_field, sphere_ascent_run};
use riemann_sa::manifolds::Manifold;
use riemann_sa::ode_flow::{compare_trajectories, ComparatorConfig, ConstraintRef, LimitProjector};
use riemann_sa::sa_core::{
    run_relaxed_sa, run_retraction_sa, A7Config, NoiseModel, RunOptions, StepSchedule, TwoRateSchedule,
};
use riemann_sa::{DenseMatrix, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest step count accepted from the page.
pub const MAX_STEPS: usize = 200_000;

#[derive(Debug, Serialize)]
pub struct SphereRun {
    /// Angle of the iterate from `e_1`, sampled along the run.
    pub angles: Vec<f64>,
    pub times: Vec<f64>,
    /// ODE time of each window start and the sup distance to the flow over it.
    pub window_starts: Vec<f64>,
    pub sup_distances: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct OjaRun {
    pub steps: Vec<usize>,
    pub subspace_error: Vec<f64>,
    pub residual: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct PolytopeRun {
    /// Iterates as `[x, y]` pairs.
    pub path: Vec<[f64; 2]>,
    /// Projection of the final iterate onto the polytope.
    pub limit: [f64; 2],
    pub kkt_residual: f64,
    pub window_sums: Vec<f64>,
}

fn clamp_steps(n: usize) -> usize {
    n.clamp(1, MAX_STEPS)
}

fn stride(n: usize, points: usize) -> usize {
    (n / points).max(1)
}

/// Retraction SA for ascent of `⟨x, e_2⟩` on the circle, compared with the
/// limit flow on unit windows starting at `t_100`, `t_1000`, `t_5000`.
pub fn sphere_run(a0: f64, sigma: f64, seed: u64, n_steps: usize) -> Result<SphereRun> {
    let n = clamp_steps(n_steps);
    let sched = StepSchedule::new(a0, 0.9, 10)?;
    let noise = if sigma > 0.0 { NoiseModel::gaussian(sigma, seed)? } else { NoiseModel::zero() };
    let rec = sphere_ascent_run(&sched, noise, n)?;
    let span = *rec.times.last().expect("non-empty run");
    let starts: Vec<f64> = [100, 1000, 5000]
        .iter()
        .map(|&k| sched.ode_time(k))
        .filter(|&t| t + 1.0 <= span)
        .collect();
    let m = Manifold::sphere(2)?;
    let report = compare_trajectories(
        &rec,
        ConstraintRef::Manifold(&m),
        &sphere_ascent_field,
        1.0,
        &starts,
        &ComparatorConfig::default(),
    )?;
    let every = stride(n, 500);
    let (mut angles, mut times) = (Vec::new(), Vec::new());
    for (i, p) in rec.points.iter().enumerate() {
        if i % every == 0 || i + 1 == rec.len() {
            angles.push(p[(1, 0)].atan2(p[(0, 0)]));
            times.push(rec.times[i]);
        }
    }
    Ok(SphereRun {
        angles,
        times,
        window_starts: report.window_starts,
        sup_distances: report.sup_distances,
    })
}

/// Oja subspace tracking with additive tangent noise.
pub fn oja_run(n: usize, r: usize, sigma: f64, seed: u64, n_steps: usize) -> Result<OjaRun> {
    let steps = clamp_steps(n_steps);
    let (problem, w0) = OjaProblem::with_seed(&default_spectrum(n), r, seed)?;
    let m = Manifold::stiefel(n, r)?;
    let noise = if sigma > 0.0 { NoiseModel::gaussian(sigma, seed)? } else { NoiseModel::zero() };
    let field = problem.field();
    let opts = RunOptions {
        record_every: stride(steps, 200),
        ..RunOptions::default()
    };
    let rec = run_retraction_sa(&m, &field, &mut noise.stream(), &StepSchedule::default_slow(), &w0, steps, &opts)?;
    Ok(OjaRun {
        steps: rec.steps.clone(),
        subspace_error: rec.points.iter().map(|w| problem.subspace_error(w)).collect(),
        residual: rec.points.iter().map(|w| problem.residual(w)).collect(),
    })
}

/// The unit square cut by `x + y ≤ 1.5`.
pub fn demo_polytope() -> Result<ConeQuery> {
    ConeQuery::new(
        DenseMatrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0]]),
        vec![1.0, 0.0, 1.0, 0.0, 1.5],
    )
}

/// Relaxed two-rate SA for `½‖x − target‖²` over [`demo_polytope`].
pub fn polytope_run(target: [f64; 2], sigma: f64, seed: u64, n_steps: usize) -> Result<PolytopeRun> {
    let n = clamp_steps(n_steps);
    let q = demo_polytope()?;
    let f = ApproxProjection::new(q.halfspace_stages()?)?;
    let t = DenseMatrix::column(&target);
    let field = |x: &DenseMatrix| &t - x;
    let noise = if sigma > 0.0 { NoiseModel::gaussian(sigma, seed)? } else { NoiseModel::zero() };
    let opts = RunOptions {
        record_every: stride(n, 400),
        ..RunOptions::default()
    };
    let rec = run_relaxed_sa(
        &f,
        &field,
        &mut noise.stream(),
        &TwoRateSchedule::defaults(),
        &DenseMatrix::column(&[0.25, 0.25]),
        n,
        &A7Config::with_budget(8),
        &opts,
    )?;
    let limit = LimitProjector::new(&f).project(rec.last())?;
    Ok(PolytopeRun {
        path: rec.points.iter().map(|p| [p[(0, 0)], p[(1, 0)]]).collect(),
        limit: [limit[(0, 0)], limit[(1, 0)]],
        kkt_residual: q.normal_cone_residual(&limit, &field(&limit))?,
        window_sums: rec.a7_windows.iter().map(|w| w.sum).collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    match r {
        Ok(v) => Ok(serde_json::to_string(&v).expect("demo output serialises")),
        Err(e) => Err(JsValue::from_str(&e.to_string())),
    }
}

#[wasm_bindgen]
pub fn sphere_tracking(a0: f64, sigma: f64, seed: u32, n_steps: u32) -> std::result::Result<String, JsValue> {
    to_js(sphere_run(a0, sigma, seed.into(), n_steps as usize))
}

#[wasm_bindgen]
pub fn oja_tracking(n: u32, r: u32, sigma: f64, seed: u32, n_steps: u32) -> std::result::Result<String, JsValue> {
    to_js(oja_run(n as usize, r as usize, sigma, seed.into(), n_steps as usize))
}

#[wasm_bindgen]
pub fn relaxed_polytope(tx: f64, ty: f64, sigma: f64, seed: u32, n_steps: u32) -> std::result::Result<String, JsValue> {
    to_js(polytope_run([tx, ty], sigma, seed.into(), n_steps as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_run_reaches_the_top() {
        let run = sphere_run(0.5, 0.0, 0, 20_000).unwrap();
        let last = *run.angles.last().unwrap();
        assert!((last - std::f64::consts::FRAC_PI_2).abs() < 1e-2);
        assert_eq!(run.sup_distances.len(), 3);
    }

    #[test]
    fn oja_error_drops() {
        let run = oja_run(6, 2, 0.0, 1, 20_000).unwrap();
        assert!(run.subspace_error.last().unwrap() < &1e-2);
        assert!(run.subspace_error[0] > 0.1);
    }

    #[test]
    fn polytope_limit_is_the_diagonal_projection() {
        let run = polytope_run([2.0, 2.0], 0.0, 0, 20_000).unwrap();
        assert!((run.limit[0] - 0.75).abs() < 1e-2 && (run.limit[1] - 0.75).abs() < 1e-2);
        assert!(run.kkt_residual < 1e-2);
    }

    #[test]
    fn errors_cross_as_strings() {
        assert!(sphere_run(-1.0, 0.0, 0, 10).is_err());
        assert!(oja_run(3, 5, 0.0, 0, 10).is_err());
    }
}
