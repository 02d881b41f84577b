//! Plane-to-plane residuals and the robust velocity solver.
//!
//! For two corresponding patches the residual is
//!
//! ```text
//! e = [ ½ (c_i - c_j)ᵀ (n_i + n_j) ;  n_j - n_i ]  ∈ R³
//! ```
//!
//! and the velocity minimizes `Σ ρ(‖e‖)` with ρ the Huber kernel. Each
//! association round runs damped Gauss-Newton with IRLS weights; steps that
//! increase the robust cost are rejected and the damping is raised, so the
//! cost trace of a round never goes up.

use nalgebra::{Matrix2, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::association::{find_correspondences, AssociationConfig, Correspondence};
use crate::error::{Error, Result};
use crate::motion_model::{
    deskew_scan, endpoint_with_jacobian, BodyVelocity, Point2, SweepScan, VelocityLimits,
};
use crate::scan_pipeline::{
    build_patches, chord_normal_matrix, regularize, PlanarPatch, RegularizationConfig,
};

/// Residual between two patches: projective offset (m) followed by the
/// normal difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorVector(pub Vector3<f64>);

impl ErrorVector {
    pub fn projective(&self) -> f64 {
        self.0[0]
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

pub fn patch_error(a: &PlanarPatch, b: &PlanarPatch) -> ErrorVector {
    let proj = 0.5 * (a.center - b.center).dot(&(a.normal + b.normal));
    let dn = b.normal - a.normal;
    ErrorVector(Vector3::new(proj, dn.x, dn.y))
}

/// IRLS weight of the Huber kernel.
pub fn huber_weight(residual_norm: f64, delta: f64) -> f64 {
    if residual_norm <= delta {
        1.0
    } else {
        delta / residual_norm
    }
}

/// Huber loss on a residual norm, scaled so that its IRLS weight is
/// [`huber_weight`]: `s²` inside `delta`, `2 delta s - delta²` outside.
pub fn huber_loss(residual_norm: f64, delta: f64) -> f64 {
    if residual_norm <= delta {
        residual_norm * residual_norm
    } else {
        2.0 * delta * residual_norm - delta * delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub huber_delta: f64,
    pub max_irls_iters: usize,
    pub max_icp_rounds: usize,
    /// Stop when the update norm (m/s and rad/s combined) drops below this.
    pub convergence_tol: f64,
    /// Additive diagonal on the normal equations.
    pub damping: f64,
    /// Diagonal weight on the three residual components.
    pub residual_weights: [f64; 3],
    /// Normal-equation condition number above which geometry is declared degenerate.
    pub max_condition: f64,
    /// Minimum correspondences required for a solve.
    pub min_correspondences: usize,
    /// Posterior standard deviations of `(v, w)` above which the estimate is
    /// flagged as unobservable.
    pub max_velocity_std: [f64; 2],
    pub limits: VelocityLimits,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            huber_delta: 0.1,
            max_irls_iters: 10,
            max_icp_rounds: 20,
            convergence_tol: 1e-6,
            damping: 1e-6,
            residual_weights: [1.0; 3],
            max_condition: 1e12,
            min_correspondences: 3,
            max_velocity_std: [0.5, 0.5],
            limits: VelocityLimits::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.huber_delta, self.convergence_tol, self.damping, self.max_condition];
        if positive.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::invalid("solver tolerances must be positive and finite"));
        }
        if self.max_irls_iters == 0 || self.max_icp_rounds == 0 || self.min_correspondences == 0 {
            return Err(Error::invalid("solver iteration caps must be positive"));
        }
        if self.residual_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("residual weights must be positive"));
        }
        if self.max_velocity_std.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::invalid("posterior std limits must be positive"));
        }
        Ok(())
    }
}

/// Full configuration of the estimation pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub regularization: RegularizationConfig,
    #[serde(default)]
    pub association: AssociationConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.regularization.validate()?;
        self.association.validate()?;
        self.solver.validate()
    }
}

/// Patch rebuilt from its source measurements together with the derivatives
/// of its center and normal with respect to `(v, w)`.
#[derive(Debug, Clone, Copy)]
struct PatchLinearization {
    center: Point2,
    normal: Point2,
    d_center: Matrix2<f64>,
    d_normal: Matrix2<f64>,
}

fn linearize_patch(v: f64, w: f64, scan: &SweepScan, src: (usize, usize)) -> Option<PatchLinearization> {
    let ms = scan.measurements();
    let t0 = scan.sweep_start();
    let (pa, dav, daw) = endpoint_with_jacobian(v, w, &ms[src.0], t0);
    let (pb, dbv, dbw) = endpoint_with_jacobian(v, w, &ms[src.1], t0);
    let chord = pb - pa;
    let len = chord.norm();
    if len < 1e-12 {
        return None;
    }
    let u = chord / len;
    let d_chord = Matrix2::from_columns(&[dbv - dav, dbw - daw]);
    let d_center = 0.5 * Matrix2::from_columns(&[dav + dbv, daw + dbw]);
    let projector = Matrix2::identity() - u * u.transpose();
    let rot = chord_normal_matrix();
    Some(PatchLinearization {
        center: 0.5 * (pa + pb),
        normal: rot * u,
        d_center,
        d_normal: rot * projector * d_chord / len,
    })
}

fn pair_error_and_jacobian(
    a: &PatchLinearization,
    b: &PatchLinearization,
) -> (Vector3<f64>, Matrix3x2<f64>) {
    let dc = a.center - b.center;
    let ns = a.normal + b.normal;
    let e0 = 0.5 * dc.dot(&ns);
    let dn = b.normal - a.normal;
    let row0 = 0.5 * ((a.d_center - b.d_center).transpose() * ns + (a.d_normal + b.d_normal).transpose() * dc);
    let rows12 = b.d_normal - a.d_normal;
    let jac = Matrix3x2::new(
        row0[0], row0[1],
        rows12[(0, 0)], rows12[(0, 1)],
        rows12[(1, 0)], rows12[(1, 1)],
    );
    (Vector3::new(e0, dn.x, dn.y), jac)
}

/// Residual of a correspondence and its analytic Jacobian `∂e/∂(v, w)`.
///
/// Both patches are rebuilt from their source measurements under `vel`;
/// the choice of source measurements stays fixed.
pub fn error_jacobian(
    vel: BodyVelocity,
    scan: &SweepScan,
    a: &PlanarPatch,
    b: &PlanarPatch,
) -> Result<(ErrorVector, Matrix3x2<f64>)> {
    let n = scan.len();
    if [a.src.0, a.src.1, b.src.0, b.src.1].iter().any(|&k| k >= n) {
        return Err(Error::invalid("patch source index outside the scan"));
    }
    let la = linearize_patch(vel.v, vel.w, scan, a.src)
        .ok_or_else(|| Error::invalid("degenerate patch chord"))?;
    let lb = linearize_patch(vel.v, vel.w, scan, b.src)
        .ok_or_else(|| Error::invalid("degenerate patch chord"))?;
    let (e, j) = pair_error_and_jacobian(&la, &lb);
    Ok((ErrorVector(e), j))
}

/// One residual term of the robust problem: source pairs of the two patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairTerm {
    pub src_i: (usize, usize),
    pub src_j: (usize, usize),
}

impl PairTerm {
    pub fn from_correspondences(patches: &[PlanarPatch], corrs: &[Correspondence]) -> Vec<PairTerm> {
        corrs
            .iter()
            .map(|c| PairTerm {
                src_i: patches[c.i].src,
                src_j: patches[c.j].src,
            })
            .collect()
    }
}

struct Linearized {
    cost: f64,
    hessian: Matrix2<f64>,
    gradient: Vector2<f64>,
    weighted_sq: f64,
    terms: usize,
}

fn weighted(e: Vector3<f64>, weights: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(e[0] * weights[0], e[1] * weights[1], e[2] * weights[2])
}

fn robust_cost(scan: &SweepScan, terms: &[PairTerm], v: f64, w: f64, cfg: &SolverConfig) -> f64 {
    terms
        .iter()
        .filter_map(|t| {
            let a = linearize_patch(v, w, scan, t.src_i)?;
            let b = linearize_patch(v, w, scan, t.src_j)?;
            let (e, _) = pair_error_and_jacobian(&a, &b);
            Some(huber_loss(weighted(e, &cfg.residual_weights).norm(), cfg.huber_delta))
        })
        .sum()
}

fn linearize(scan: &SweepScan, terms: &[PairTerm], v: f64, w: f64, cfg: &SolverConfig) -> Linearized {
    let mut out = Linearized {
        cost: 0.0,
        hessian: Matrix2::zeros(),
        gradient: Vector2::zeros(),
        weighted_sq: 0.0,
        terms: 0,
    };
    let wdiag = nalgebra::Matrix3::from_diagonal(&Vector3::from(cfg.residual_weights));
    for t in terms {
        let (Some(a), Some(b)) = (
            linearize_patch(v, w, scan, t.src_i),
            linearize_patch(v, w, scan, t.src_j),
        ) else {
            continue;
        };
        let (e, j) = pair_error_and_jacobian(&a, &b);
        let e = wdiag * e;
        let j = wdiag * j;
        let norm = e.norm();
        let weight = huber_weight(norm, cfg.huber_delta);
        out.cost += huber_loss(norm, cfg.huber_delta);
        out.hessian += weight * j.transpose() * j;
        out.gradient += weight * j.transpose() * e;
        out.weighted_sq += weight * norm * norm;
        out.terms += 1;
    }
    out
}

fn condition_number(h: &Matrix2<f64>) -> f64 {
    let tr = h[(0, 0)] + h[(1, 1)];
    let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
    let disc = ((0.5 * tr).powi(2) - det).max(0.0).sqrt();
    let hi = 0.5 * tr + disc;
    let lo = 0.5 * tr - disc;
    if lo <= 0.0 || !hi.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Result of one robust solve under fixed correspondences.
#[derive(Debug, Clone, PartialEq)]
pub struct IrlsOutcome {
    pub velocity: BodyVelocity,
    /// Robust cost before the first and after every accepted iteration.
    pub cost_trace: Vec<f64>,
    /// Undamped weighted normal matrix at the returned iterate.
    pub hessian: Matrix2<f64>,
    /// Weighted squared residual sum at the returned iterate.
    pub weighted_sq: f64,
    pub terms: usize,
    pub iterations: usize,
}

const MAX_DAMPING_RETRIES: usize = 12;

pub fn irls_solve(
    scan: &SweepScan,
    terms: &[PairTerm],
    x0: BodyVelocity,
    cfg: &SolverConfig,
) -> Result<IrlsOutcome> {
    if terms.len() < cfg.min_correspondences {
        return Err(Error::EstimationFailed(format!(
            "{} correspondences, at least {} required",
            terms.len(),
            cfg.min_correspondences
        )));
    }
    let mut x = x0.as_vector();
    let mut lin = linearize(scan, terms, x[0], x[1], cfg);
    let cond = condition_number(&lin.hessian);
    if cond > cfg.max_condition {
        return Err(Error::DegenerateGeometry(format!(
            "normal matrix condition number {cond:.3e} exceeds {:.1e}; \
             the scene does not constrain both velocity components",
            cfg.max_condition
        )));
    }
    let mut trace = vec![lin.cost];
    let mut iterations = 0;
    for _ in 0..cfg.max_irls_iters {
        if lin.cost == 0.0 {
            break;
        }
        let mut lambda = cfg.damping;
        let mut accepted = None;
        for _ in 0..MAX_DAMPING_RETRIES {
            let damped = lin.hessian + Matrix2::identity() * lambda;
            let Some(step) = damped.lu().solve(&(-lin.gradient)) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = x + step;
            let in_limits = candidate[0].abs() <= cfg.limits.max_v && candidate[1].abs() <= cfg.limits.max_w;
            if in_limits && candidate.iter().all(|c| c.is_finite()) {
                let cost = robust_cost(scan, terms, candidate[0], candidate[1], cfg);
                if cost <= lin.cost {
                    accepted = Some((candidate, step));
                    break;
                }
            }
            lambda *= 10.0;
        }
        let Some((candidate, step)) = accepted else {
            break;
        };
        x = candidate;
        lin = linearize(scan, terms, x[0], x[1], cfg);
        trace.push(lin.cost);
        iterations += 1;
        if step.norm() < cfg.convergence_tol {
            break;
        }
    }
    Ok(IrlsOutcome {
        velocity: BodyVelocity { v: x[0], w: x[1] },
        cost_trace: trace,
        hessian: lin.hessian,
        weighted_sq: lin.weighted_sq,
        terms: lin.terms,
        iterations,
    })
}

/// Summary of a velocity estimate over one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub velocity: BodyVelocity,
    pub rounds: usize,
    pub converged: bool,
    pub final_cost: f64,
    pub correspondence_count: usize,
    /// Mean absolute projective residual over the final correspondences, m.
    pub mean_abs_projective: f64,
    /// Approximate standard deviations of `(v, w)` from the final normal matrix.
    pub velocity_std: [f64; 2],
    /// The posterior is wider than the configured limits: the scene does not
    /// constrain the velocity.
    pub degenerate: bool,
    /// Robust cost trace of every association round.
    pub cost_trace: Vec<Vec<f64>>,
    /// Velocity after every round.
    pub velocity_trace: Vec<BodyVelocity>,
    pub correspondence_trace: Vec<usize>,
}

/// Patches of `scan` under `vel` after regularization.
pub fn scan_patches(scan: &SweepScan, vel: BodyVelocity, cfg: &RegularizationConfig) -> Result<Vec<PlanarPatch>> {
    let points = deskew_scan(scan, vel)?;
    let reg = regularize(&points, cfg);
    build_patches(&points, &scan.timestamps(), &reg)
}

/// Self-registration of a scan: alternates association under the current
/// velocity with a robust solve, starting from `x0`.
pub fn estimate_velocity(
    scan: &SweepScan,
    x0: BodyVelocity,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    cfg.validate()?;
    if scan.is_empty() {
        return Err(Error::invalid("cannot estimate velocity from an empty scan"));
    }
    let scfg = &cfg.solver;
    let mut x = x0;
    let mut report = EstimateReport {
        velocity: x0,
        rounds: 0,
        converged: false,
        final_cost: 0.0,
        correspondence_count: 0,
        mean_abs_projective: 0.0,
        velocity_std: [f64::INFINITY; 2],
        degenerate: false,
        cost_trace: Vec::new(),
        velocity_trace: Vec::new(),
        correspondence_trace: Vec::new(),
    };
    let mut last_terms: Vec<PairTerm> = Vec::new();
    let mut last: Option<IrlsOutcome> = None;
    for _ in 0..scfg.max_icp_rounds {
        let patches = scan_patches(scan, x, &cfg.regularization)?;
        let corrs = find_correspondences(&patches, &cfg.association);
        report.correspondence_trace.push(corrs.len());
        if corrs.len() < scfg.min_correspondences {
            if last.is_none() {
                return Err(Error::EstimationFailed(format!(
                    "only {} correspondences from {} patches; no solvable association round",
                    corrs.len(),
                    patches.len()
                )));
            }
            break;
        }
        let terms = PairTerm::from_correspondences(&patches, &corrs);
        let outcome = irls_solve(scan, &terms, x, scfg)?;
        let step = (outcome.velocity.as_vector() - x.as_vector()).norm();
        x = outcome.velocity;
        report.rounds += 1;
        report.cost_trace.push(outcome.cost_trace.clone());
        report.velocity_trace.push(x);
        last_terms = terms;
        last = Some(outcome);
        if step < scfg.convergence_tol {
            report.converged = true;
            break;
        }
    }
    let outcome = last.expect("at least one solved round");
    report.velocity = x;
    report.final_cost = *outcome.cost_trace.last().unwrap_or(&0.0);
    report.correspondence_count = last_terms.len();
    report.mean_abs_projective = mean_abs_projective(scan, x, &last_terms);
    let dof = (3 * outcome.terms).saturating_sub(2).max(1) as f64;
    let sigma2 = outcome.weighted_sq / dof;
    report.velocity_std = match (outcome.hessian + Matrix2::identity() * scfg.damping).try_inverse() {
        Some(cov) => [
            (sigma2 * cov[(0, 0)]).max(0.0).sqrt(),
            (sigma2 * cov[(1, 1)]).max(0.0).sqrt(),
        ],
        None => [f64::INFINITY; 2],
    };
    report.degenerate = report
        .velocity_std
        .iter()
        .zip(&scfg.max_velocity_std)
        .any(|(s, limit)| s.is_nan() || s > limit);
    Ok(report)
}

impl EstimateReport {
    /// Turns a flagged report into a [`Error::DegenerateGeometry`].
    pub fn require_observable(&self) -> Result<()> {
        if self.degenerate {
            return Err(Error::DegenerateGeometry(format!(
                "velocity posterior too wide (std v = {:.3} m/s, std w = {:.3} rad/s); \
                 the scene does not constrain both velocity components",
                self.velocity_std[0], self.velocity_std[1]
            )));
        }
        Ok(())
    }
}

fn mean_abs_projective(scan: &SweepScan, x: BodyVelocity, terms: &[PairTerm]) -> f64 {
    let vals: Vec<f64> = terms
        .iter()
        .filter_map(|t| {
            let a = linearize_patch(x.v, x.w, scan, t.src_i)?;
            let b = linearize_patch(x.v, x.w, scan, t.src_j)?;
            Some(pair_error_and_jacobian(&a, &b).0[0].abs())
        })
        .collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Estimate for one window of a longer stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEstimate {
    pub start: f64,
    pub end: f64,
    pub report: EstimateReport,
}

/// Runs the estimator over a stream in windows of two consecutive
/// revolutions, warm-starting each window from the previous estimate.
#[derive(Debug, Clone)]
pub struct StreamEstimator {
    cfg: EstimatorConfig,
    current: BodyVelocity,
}

impl StreamEstimator {
    pub fn new(cfg: EstimatorConfig) -> Self {
        Self::with_initial(cfg, BodyVelocity::ZERO)
    }

    /// Starts the first window from `x0` instead of rest.
    pub fn with_initial(cfg: EstimatorConfig, x0: BodyVelocity) -> Self {
        StreamEstimator { cfg, current: x0 }
    }

    pub fn current(&self) -> BodyVelocity {
        self.current
    }

    /// Estimates one window and keeps the result as the next warm start.
    pub fn push_window(&mut self, window: &SweepScan) -> Result<EstimateReport> {
        let report = estimate_velocity(window, self.current, &self.cfg)?;
        self.current = report.velocity;
        Ok(report)
    }

    pub fn run(&mut self, scan: &SweepScan) -> Result<Vec<WindowEstimate>> {
        let revs = scan.split_revolutions();
        let windows: Vec<SweepScan> = if revs.len() < 2 {
            vec![scan.clone()]
        } else {
            revs.windows(2)
                .map(SweepScan::concat)
                .collect::<Result<_>>()?
        };
        windows
            .iter()
            .map(|w| {
                let report = self.push_window(w)?;
                Ok(WindowEstimate {
                    start: w.sweep_start(),
                    end: w.measurements().last().map_or(w.sweep_start(), |m| m.timestamp),
                    report,
                })
            })
            .collect()
    }
}
