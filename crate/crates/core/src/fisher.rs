//! Fisher information: quadrature and Monte Carlo estimators, regularity
//! diagnostics.
//!
//! J(theta) is the second moment of the score, J_ij = E[s_i s_j]. The
//! quadrature path integrates score_i * score_j * f over a scalar
//! observation support; the Monte Carlo path averages outer products of
//! scores over i.i.d. draws and works for any observation dimension.
//! [`check_regularity`] gates invertibility for everything downstream.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{self, Model};
use crate::quad::{self, QuadOptions};
use crate::rng;
use rayon::prelude::*;

/// Eigenvalue floor for the invertibility gate, relative to lambda_max.
pub const REGULARITY_FLOOR: f64 = 1e-10;

const MC_CHUNK: usize = 4096;
const MC_MIN_SAMPLES: usize = 100;

/// How to obtain J(theta).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FisherMethod {
    /// Closed form provided by the family.
    Analytic,
    /// Adaptive quadrature of the score second moment (scalar observations).
    Quadrature,
    /// Sample average of score outer products.
    MonteCarlo { n: usize, seed: u64 },
}

/// Fisher information at one parameter point.
#[derive(Debug, Clone)]
pub struct FisherMatrix {
    pub theta: Vec<f64>,
    pub matrix: Matrix,
    pub method: FisherMethod,
    pub mc_std_err: Option<Matrix>,
    pub sample_size: Option<usize>,
}

/// Eigenvalue diagnostics for a Fisher matrix.
#[derive(Debug, Clone, Copy)]
pub struct RegularityReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub condition: f64,
    pub pass: bool,
}

/// Dispatch on the requested method.
pub fn fisher<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    method: FisherMethod,
) -> Result<FisherMatrix> {
    match method {
        FisherMethod::Analytic => {
            model.domain().check_contains(theta)?;
            let matrix = model.analytic_fisher(theta).ok_or_else(|| {
                Error::Unsupported("family provides no closed-form information matrix".into())
            })?;
            gate_psd(&matrix, theta)?;
            Ok(FisherMatrix {
                theta: theta.to_vec(),
                matrix,
                method,
                mc_std_err: None,
                sample_size: None,
            })
        }
        FisherMethod::Quadrature => fisher_quadrature(model, theta),
        FisherMethod::MonteCarlo { n, seed } => fisher_monte_carlo(model, theta, n, seed),
    }
}

fn score_of<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    if let Some(s) = model.analytic_score(x, theta) {
        Ok(s)
    } else {
        model::fd_score(model, x, theta)
    }
}

fn gate_psd(matrix: &Matrix, theta: &[f64]) -> Result<()> {
    let (values, _) = linalg::sym_eigen(&matrix.symmetrized())?;
    let lambda_max = values.last().copied().unwrap_or(0.0);
    let lambda_min = values.first().copied().unwrap_or(0.0);
    if lambda_min < -REGULARITY_FLOOR * lambda_max.abs() {
        return Err(Error::Regularity(format!(
            "information matrix not positive semi-definite at theta = {theta:?} (lambda_min = {lambda_min:.3e})"
        )));
    }
    Ok(())
}

/// J by adaptive quadrature of the score second moment; scalar observations.
pub fn fisher_quadrature<M: Model + ?Sized>(model: &M, theta: &[f64]) -> Result<FisherMatrix> {
    model.domain().check_contains(theta)?;
    if model.dim_obs() != 1 {
        return Err(Error::Unsupported(
            "quadrature information needs scalar observations; use Monte Carlo".into(),
        ));
    }
    let d = model.dim_param();
    let (lo, hi) = model.support().interval(0);
    // Probe once so boundary problems surface as boundary errors, not as
    // non-finite integrands.
    let probe_x = if lo.is_finite() && hi.is_finite() {
        0.5 * (lo + hi)
    } else {
        0.0f64.max(lo + 1.0).min(hi - 1.0)
    };
    score_of(model, &[probe_x], theta)?;

    let opts = QuadOptions::default();
    let mut matrix = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let entry = quad::integrate_auto(
                |x| {
                    let obs = [x];
                    match score_of(model, &obs, theta) {
                        Ok(s) => s[i] * s[j] * model.log_density_raw(&obs, theta).exp(),
                        Err(_) => f64::NAN,
                    }
                },
                lo,
                hi,
                &opts,
            )?;
            matrix[(i, j)] = entry.value;
            matrix[(j, i)] = entry.value;
        }
    }
    gate_psd(&matrix, theta)?;
    Ok(FisherMatrix {
        theta: theta.to_vec(),
        matrix,
        method: FisherMethod::Quadrature,
        mc_std_err: None,
        sample_size: None,
    })
}

/// J as the sample mean of score outer products over n draws.
///
/// The draw stream is split into fixed-size chunks with derived sub-stream
/// seeds, so the estimate depends on (theta, n, seed) only, not on how the
/// chunks are scheduled across workers.
pub fn fisher_monte_carlo<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    n: usize,
    seed: u64,
) -> Result<FisherMatrix> {
    model.domain().check_contains(theta)?;
    if n < MC_MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "Monte Carlo information needs at least {MC_MIN_SAMPLES} draws, got {n}"
        )));
    }
    let d = model.dim_param();
    let chunks = n.div_ceil(MC_CHUNK);
    let stats: Vec<(Matrix, Matrix)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(n - c * MC_CHUNK);
            let mut rng = rng::substream_rng(seed, c as u64);
            let draws = model.sample_raw(theta, len, &mut rng);
            let mut sum = Matrix::zeros(d, d);
            let mut sum_sq = Matrix::zeros(d, d);
            for row in draws.rows() {
                let s = score_of(model, row, theta)?;
                for i in 0..d {
                    for j in 0..d {
                        let p = s[i] * s[j];
                        sum[(i, j)] += p;
                        sum_sq[(i, j)] += p * p;
                    }
                }
            }
            Ok((sum, sum_sq))
        })
        .collect::<Result<_>>()?;

    let mut total = Matrix::zeros(d, d);
    let mut total_sq = Matrix::zeros(d, d);
    for (sum, sum_sq) in stats {
        total = total.add(&sum);
        total_sq = total_sq.add(&sum_sq);
    }
    let nf = n as f64;
    let mean = total.scale(1.0 / nf);
    let mut std_err = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let m = mean[(i, j)];
            let var = (total_sq[(i, j)] / nf - m * m).max(0.0);
            std_err[(i, j)] = (var / nf).sqrt();
        }
    }
    Ok(FisherMatrix {
        theta: theta.to_vec(),
        matrix: mean.symmetrized(),
        method: FisherMethod::MonteCarlo { n, seed },
        mc_std_err: Some(std_err),
        sample_size: Some(n),
    })
}

/// Smallest/largest eigenvalue, condition number, and the invertibility
/// verdict lambda_min > 1e-10 * lambda_max.
pub fn check_regularity(fisher: &FisherMatrix) -> Result<RegularityReport> {
    let (values, _) = linalg::sym_eigen(&fisher.matrix.symmetrized())?;
    let lambda_min = values.first().copied().unwrap_or(0.0);
    let lambda_max = values.last().copied().unwrap_or(0.0);
    let condition = if lambda_min > 0.0 {
        lambda_max / lambda_min
    } else {
        f64::INFINITY
    };
    Ok(RegularityReport {
        lambda_min,
        lambda_max,
        condition,
        pass: lambda_min > REGULARITY_FLOOR * lambda_max,
    })
}
