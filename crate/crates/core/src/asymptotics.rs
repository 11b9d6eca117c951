//! Monte Carlo validation of maximum-likelihood asymptotics against the
//! variance fields and information bounds the structures encode.
//!
//! The simulators draw replicated n-sample experiments, solve the
//! likelihood equation per replication, and compare scaled moments of
//! the estimates with their predicted limits: the inverse information,
//! the image field of a parameter map, and the Cramer-Rao bound.
//! Replications run on independent sub-streams of one seed, so reports
//! are identical for a fixed seed regardless of thread count.

use rayon::prelude::*;

use crate::branch::BranchMap;
use crate::error::{Error, Result};
use crate::fisher::{self, FisherMethod};
use crate::model::{Model, Sample};
use crate::rng;
use crate::special;
use crate::structure::{from_model, Functional, PriorMeasure};
use crate::transforms;

/// Relative margin by which the root bracket shrinks the domain bounds.
const BRACKET_MARGIN: f64 = 1e-6;

/// Estimates closer than this fraction of the domain width to a bound
/// count as boundary failures.
const BOUNDARY_MARGIN: f64 = 1e-5;

/// Fraction of failed replications above which a run fails.
const FAILURE_GATE: f64 = 0.01;

/// Acceptance rates below this fail windowed rejection sampling.
const MIN_ACCEPTANCE: f64 = 1e-4;

/// Draws used to estimate the acceptance rate before giving up.
const ACCEPTANCE_PROBE: usize = 2_000_000;

const MAX_SOLVER_ITERATIONS: usize = 500;

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// A known limit attached to a simulation, with the basis it comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceValue {
    pub value: f64,
    pub basis: String,
}

/// One simulated quantity: the estimate, its Monte Carlo standard error,
/// and the run parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub target: String,
    pub estimate: f64,
    pub std_err: f64,
    pub replications: usize,
    pub n_per_rep: usize,
    pub seed: u64,
    pub reference_value: Option<ReferenceValue>,
}

/// Scaled estimation errors sqrt(n) (theta_hat - theta) across
/// replications, with the failure counts of the excluded ones.
#[derive(Debug, Clone)]
pub struct ErrorSample {
    pub scaled: Vec<f64>,
    pub no_root_failures: usize,
    pub boundary_failures: usize,
    pub replications: usize,
}

/// Variance and bias of the maximum-likelihood estimator at scale
/// sqrt(n), against the inverse information.
#[derive(Debug, Clone)]
pub struct AsymptoticsReport {
    pub variance: SimulationReport,
    pub scaled_bias: SimulationReport,
    pub no_root_failures: usize,
    pub boundary_failures: usize,
}

/// Conditional risk of a mapped estimate near a point of the image, with
/// the windowed-rejection diagnostics that produced the conditioning.
#[derive(Debug, Clone)]
pub struct PsiVarianceReport {
    pub report: SimulationReport,
    pub kernel_window: f64,
    pub acceptance_rate: f64,
    pub no_root_failures: usize,
    pub boundary_failures: usize,
}

/// Simulated risk of an estimator against the information bound.
#[derive(Debug, Clone)]
pub struct CrlbReport {
    pub risk: SimulationReport,
    pub bound: f64,
    pub pass: bool,
    pub bias: f64,
    pub bias_std_err: f64,
    pub bias_warning: bool,
}

fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

// ---------------------------------------------------------------------------
// Likelihood equation solver
// ---------------------------------------------------------------------------

fn aggregate_score<M: Model + ?Sized>(model: &M, samples: &Sample, theta: f64) -> Result<f64> {
    let th = [theta];
    let mut total = 0.0;
    for row in samples.rows() {
        let s = match model.analytic_score(row, &th) {
            Some(g) => g[0],
            None => crate::model::fd_score(model, row, &th)?[0],
        };
        if !s.is_finite() {
            return Err(Error::NonFinite(format!(
                "score at theta = {theta} for observation {row:?}"
            )));
        }
        total += s;
    }
    Ok(total)
}

/// Root of the aggregate score equation for a one-parameter model, by
/// Newton steps safeguarded inside a sign-change bracket; steps leaving
/// the bracket fall back to bisection.
pub fn mle<M: Model + ?Sized>(model: &M, samples: &Sample) -> Result<f64> {
    if model.dim_param() != 1 {
        return Err(Error::Unsupported(
            "likelihood solving is one-parameter".into(),
        ));
    }
    if samples.is_empty() {
        return Err(Error::Domain("samples must be nonempty".into()));
    }
    let (mut lo, mut hi) = model.domain().bracket(BRACKET_MARGIN)?;
    let mut s_lo = aggregate_score(model, samples, lo)?;
    let s_hi = aggregate_score(model, samples, hi)?;
    if s_lo == 0.0 {
        return Ok(lo);
    }
    if s_hi == 0.0 {
        return Ok(hi);
    }
    if s_lo.signum() == s_hi.signum() {
        return Err(Error::NoRoot(format!(
            "aggregate score does not change sign on ({lo}, {hi}): {s_lo:.3e} and {s_hi:.3e}"
        )));
    }
    let tol = 1e-9 * (1.0 + s_lo.abs().max(s_hi.abs()));
    let mut theta = 0.5 * (lo + hi);
    for _ in 0..MAX_SOLVER_ITERATIONS {
        let s = aggregate_score(model, samples, theta)?;
        if s.abs() <= tol {
            return Ok(theta);
        }
        if s.signum() == s_lo.signum() {
            lo = theta;
            s_lo = s;
        } else {
            hi = theta;
        }
        let h = (f64::EPSILON.cbrt() * (1.0 + theta.abs()))
            .min(0.5 * (hi - theta))
            .min(0.5 * (theta - lo));
        let mut next = f64::NAN;
        if h > 0.0 {
            let up = aggregate_score(model, samples, theta + h)?;
            let down = aggregate_score(model, samples, theta - h)?;
            let slope = (up - down) / (2.0 * h);
            if slope != 0.0 {
                next = theta - s / slope;
            }
        }
        theta = if next.is_finite() && lo < next && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NonFinite(format!(
        "likelihood solver did not converge on ({lo}, {hi})"
    )))
}

enum RepOutcome {
    Estimate(f64),
    NoRoot,
    Boundary,
}

fn run_replication<M: Model>(
    model: &M,
    theta: f64,
    n: usize,
    seed: u64,
    rep: u64,
) -> Result<RepOutcome> {
    let mut r = rng::substream_rng(seed, rep);
    let draws = model.sample_raw(&[theta], n, &mut r);
    match mle(model, &draws) {
        Ok(est) => {
            let (lo, hi) = (model.domain().lower()[0], model.domain().upper()[0]);
            let margin = BOUNDARY_MARGIN * (hi - lo);
            if est - lo <= margin || hi - est <= margin {
                Ok(RepOutcome::Boundary)
            } else {
                Ok(RepOutcome::Estimate(est))
            }
        }
        Err(Error::NoRoot(_)) => Ok(RepOutcome::NoRoot),
        Err(e) => Err(e),
    }
}

fn gate_failures(no_root: usize, boundary: usize, reps: usize) -> Result<()> {
    let failed = no_root + boundary;
    if (failed as f64) > FAILURE_GATE * reps as f64 {
        return Err(Error::Simulation {
            failed,
            total: reps,
        });
    }
    Ok(())
}

/// Scaled errors sqrt(n) (theta_hat - theta) over `reps` independent
/// n-sample experiments at a fixed parameter.
pub fn mle_error_sample<M: Model>(
    model: &M,
    theta: &[f64],
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<ErrorSample> {
    if theta.len() != 1 {
        return Err(Error::Unsupported("error sampling is one-parameter".into()));
    }
    if n == 0 || reps == 0 {
        return Err(Error::Domain("n and reps must be positive".into()));
    }
    model.domain().check_contains(theta)?;
    let t = theta[0];
    let outcomes: Vec<RepOutcome> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| run_replication(model, t, n, seed, rep))
        .collect::<Result<Vec<_>>>()?;
    let scale = (n as f64).sqrt();
    let mut scaled = Vec::with_capacity(reps);
    let mut no_root = 0;
    let mut boundary = 0;
    for o in outcomes {
        match o {
            RepOutcome::Estimate(est) => scaled.push(scale * (est - t)),
            RepOutcome::NoRoot => no_root += 1,
            RepOutcome::Boundary => boundary += 1,
        }
    }
    gate_failures(no_root, boundary, reps)?;
    if scaled.is_empty() {
        return Err(Error::Simulation {
            failed: reps,
            total: reps,
        });
    }
    Ok(ErrorSample {
        scaled,
        no_root_failures: no_root,
        boundary_failures: boundary,
        replications: reps,
    })
}

/// Inverse information at theta, preferring the analytic matrix.
fn inverse_information<M: Model>(model: &M, theta: &[f64]) -> Result<f64> {
    let method = if model.analytic_fisher(theta).is_some() {
        FisherMethod::Analytic
    } else {
        FisherMethod::Quadrature
    };
    let fm = fisher::fisher(model, theta, method)?;
    let report = fisher::check_regularity(&fm)?;
    if !report.pass {
        return Err(Error::Regularity(format!(
            "information is singular at theta = {theta:?} (lambda_min = {:.3e})",
            report.lambda_min
        )));
    }
    Ok(1.0 / fm.matrix[(0, 0)])
}

/// Scaled variance and bias of the maximum-likelihood estimator over
/// replicated n-sample experiments, against the inverse information.
pub fn simulate_mle_asymptotics<M: Model>(
    model: &M,
    theta: &[f64],
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<AsymptoticsReport> {
    let reference = inverse_information(model, theta)?;
    let errors = mle_error_sample(model, theta, n, reps, seed)?;
    let squares: Vec<f64> = errors.scaled.iter().map(|e| e * e).collect();
    let (var_mean, var_se) = mean_and_std_err(&squares);
    let (bias_mean, bias_se) = mean_and_std_err(&errors.scaled);
    Ok(AsymptoticsReport {
        variance: SimulationReport {
            target: "n*mean((theta_hat-theta)^2)".into(),
            estimate: var_mean,
            std_err: var_se,
            replications: reps,
            n_per_rep: n,
            seed,
            reference_value: Some(ReferenceValue {
                value: reference,
                basis: "inverse information at theta".into(),
            }),
        },
        scaled_bias: SimulationReport {
            target: "sqrt(n)*mean(theta_hat-theta)".into(),
            estimate: bias_mean,
            std_err: bias_se,
            replications: reps,
            n_per_rep: n,
            seed,
            reference_value: Some(ReferenceValue {
                value: 0.0,
                basis: "asymptotic unbiasedness".into(),
            }),
        },
        no_root_failures: errors.no_root_failures,
        boundary_failures: errors.boundary_failures,
    })
}

/// Conditional risk n*mean((psi(theta_hat)-a)^2) given psi(V) near `a`,
/// with theta drawn from the prior by windowed rejection.
#[allow(clippy::too_many_arguments)]
pub fn simulate_psi_variance<M: Model + Clone + 'static>(
    model: &M,
    prior: &PriorMeasure,
    psi: &BranchMap,
    a: f64,
    n: usize,
    reps: usize,
    kernel_window: f64,
    seed: u64,
) -> Result<PsiVarianceReport> {
    if model.dim_param() != 1 {
        return Err(Error::Unsupported(
            "conditional risk simulation is one-parameter".into(),
        ));
    }
    if !(kernel_window > 0.0 && kernel_window.is_finite()) {
        return Err(Error::Domain(format!("kernel window = {kernel_window}")));
    }
    if n == 0 || reps == 0 {
        return Err(Error::Domain("n and reps must be positive".into()));
    }
    psi.antecedents(a)?;

    let method = if model
        .analytic_fisher(&[0.5 * (model.domain().lower()[0] + model.domain().upper()[0])])
        .is_some()
    {
        FisherMethod::Analytic
    } else {
        FisherMethod::Quadrature
    };
    let structure = from_model(model.clone(), prior.clone(), method)?;
    let reference = transforms::conditional_gamma_id(&structure, psi, a)?;

    let mut accepted = Vec::with_capacity(reps);
    let mut drawn = 0usize;
    let mut batch_index = 0u64;
    while accepted.len() < reps {
        let batch = prior.sample(1 << 16, rng::substream_seed(seed, 1_000_000 + batch_index));
        batch_index += 1;
        for row in batch.rows() {
            drawn += 1;
            let y = psi.forward(row[0])?;
            if (y - a).abs() <= kernel_window {
                accepted.push(row[0]);
                if accepted.len() == reps {
                    break;
                }
            }
        }
        if drawn >= ACCEPTANCE_PROBE {
            let rate = accepted.len() as f64 / drawn as f64;
            if rate < MIN_ACCEPTANCE {
                return Err(Error::Domain(format!(
                    "acceptance rate {rate:.2e} after {drawn} draws is below {MIN_ACCEPTANCE:.0e}; \
                     kernel window {kernel_window} is too small"
                )));
            }
        }
    }
    let acceptance_rate = accepted.len() as f64 / drawn as f64;

    let outcomes: Vec<Result<RepOutcome>> = accepted
        .par_iter()
        .enumerate()
        .map(|(rep, &t)| run_replication(model, t, n, seed, rep as u64))
        .collect();
    let mut values = Vec::with_capacity(reps);
    let mut no_root = 0;
    let mut boundary = 0;
    for o in outcomes {
        match o? {
            RepOutcome::Estimate(est) => {
                let mapped = psi.forward(est)?;
                values.push(n as f64 * (mapped - a) * (mapped - a));
            }
            RepOutcome::NoRoot => no_root += 1,
            RepOutcome::Boundary => boundary += 1,
        }
    }
    gate_failures(no_root, boundary, reps)?;
    let (mean, se) = mean_and_std_err(&values);
    Ok(PsiVarianceReport {
        report: SimulationReport {
            target: "n*mean((psi(theta_hat)-a)^2 | psi(V)=a)".into(),
            estimate: mean,
            std_err: se,
            replications: reps,
            n_per_rep: n,
            seed,
            reference_value: Some(ReferenceValue {
                value: reference,
                basis: "image field at a".into(),
            }),
        },
        kernel_window,
        acceptance_rate,
        no_root_failures: no_root,
        boundary_failures: boundary,
    })
}

// ---------------------------------------------------------------------------
// Limit law of the mapped estimate
// ---------------------------------------------------------------------------

/// Density at `x` of the limit law of sqrt(n) (psi(theta_hat) - a): the
/// antecedent-barycenter of centered normals with variance psi'^2 / J,
/// where branches with psi' = 0 contribute a zero density term.
pub fn limit_density<M: Model>(
    prior: &PriorMeasure,
    model: &M,
    psi: &BranchMap,
    a: f64,
    x: f64,
) -> Result<f64> {
    if model.dim_param() != 1 {
        return Err(Error::Unsupported("limit density is one-parameter".into()));
    }
    let ants = psi.antecedents(a)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for ant in &ants {
        let q = prior.density(&[ant.theta]);
        if q <= 0.0 {
            continue;
        }
        let t = ant.derivative.abs();
        if t == 0.0 {
            den = f64::INFINITY;
            continue;
        }
        let j = 1.0 / inverse_information(model, &[ant.theta])?;
        let sd = (t * t / j).sqrt();
        num += q / t * special::normal_pdf(x, 0.0, sd);
        den += q / t;
    }
    if den == 0.0 {
        return Err(Error::Domain(format!(
            "prior puts no mass on the antecedents of a = {a}"
        )));
    }
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// Information bound check
// ---------------------------------------------------------------------------

/// Simulated risk of an estimator of psi(theta) against the bound
/// psi'^2 / (n J); measured bias beyond four standard errors marks the
/// bound inapplicable.
pub fn crlb_check<M, E>(
    model: &M,
    estimator: E,
    psi: &Functional,
    theta: &[f64],
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<CrlbReport>
where
    M: Model,
    E: Fn(&Sample) -> f64 + Sync,
{
    if model.dim_param() != 1 || theta.len() != 1 {
        return Err(Error::Unsupported("bound checking is one-parameter".into()));
    }
    if n == 0 || reps == 0 {
        return Err(Error::Domain("n and reps must be positive".into()));
    }
    model.domain().check_contains(theta)?;
    let gamma = inverse_information(model, theta)?;
    let dpsi = psi.gradient_at(theta, model.domain())?[0];
    let bound = dpsi * dpsi * gamma / n as f64;
    let target = psi.scalar_at(theta)?;

    let diffs: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut r = rng::substream_rng(seed, rep);
            let draws = model.sample_raw(theta, n, &mut r);
            estimator(&draws) - target
        })
        .collect();
    let squares: Vec<f64> = diffs.iter().map(|d| d * d).collect();
    let (risk, risk_se) = mean_and_std_err(&squares);
    let (bias, bias_se) = mean_and_std_err(&diffs);
    let bias_warning = bias.abs() > 4.0 * bias_se;
    Ok(CrlbReport {
        risk: SimulationReport {
            target: "mean((T-psi(theta))^2)".into(),
            estimate: risk,
            std_err: risk_se,
            replications: reps,
            n_per_rep: n,
            seed,
            reference_value: Some(ReferenceValue {
                value: bound,
                basis: "information bound psi'^2/(n*J)".into(),
            }),
        },
        bound,
        pass: risk >= bound - 4.0 * risk_se,
        bias,
        bias_std_err: bias_se,
        bias_warning,
    })
}

/// The information bound of the image-parameter model against the image
/// field: (1/J at a by quadrature on `image_model`, field value at a).
pub fn fisher_vs_gamma<M: Model>(
    image_model: &M,
    structure: &crate::structure::ErrorStructure,
    psi: &BranchMap,
    a: f64,
) -> Result<(f64, f64)> {
    let fm = fisher::fisher_quadrature(image_model, &[a])?;
    let report = fisher::check_regularity(&fm)?;
    if !report.pass {
        return Err(Error::Regularity(format!(
            "image information is singular at a = {a} (lambda_min = {:.3e})",
            report.lambda_min
        )));
    }
    let left = 1.0 / fm.matrix[(0, 0)];
    let right = transforms::conditional_gamma_id(structure, psi, a)?;
    Ok((left, right))
}

/// Kolmogorov-Smirnov distance between `values` and a centered normal
/// law with the given variance.
pub fn ks_distance_to_normal(values: &[f64], variance: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("empty sample".into()));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::Domain(format!("variance = {variance}")));
    }
    let sd = variance.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mut dist = 0.0_f64;
    for (i, &v) in sorted.iter().enumerate() {
        let cdf = special::standard_normal_cdf(v / sd);
        dist = dist
            .max((cdf - i as f64 / m).abs())
            .max(((i + 1) as f64 / m - cdf).abs());
    }
    Ok(dist)
}
