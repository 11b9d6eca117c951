//! Parametric statistical models: densities, scores, samplers.
//!
//! A model is a family of positive densities f(x, theta) on a declared
//! observation support, indexed by theta in an open domain. The trait
//! exposes raw evaluations; the free functions ([`log_density`],
//! [`score`], [`sample`], [`hellinger_distance`]) add the precondition
//! checks every caller relies on. Scores fall back to central finite
//! differences when a family provides no analytic form.
//!
//! Built-in families: [`NormalLocation`] N(theta, 1), [`NormalScale`]
//! N(0, theta^2), [`LogisticLocation`], and [`Mixture`], the equal-weight
//! pair of unit normals at +-sqrt(a) that arises as the conditional law
//! of an observation given theta^2 = a. [`pushforward_model`] constructs
//! that kind of conditional model from any scalar model, prior, and
//! piecewise-monotone map. [`product_model`] joins two independent
//! observation blocks under a concatenated parameter.

use crate::branch::BranchMap;
use crate::domain::ParameterDomain;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::quad::{self, QuadOptions};
use crate::rng;
use crate::structure::PriorMeasure;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01, StandardNormal};

const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Observation support: one open interval per observation coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    intervals: Vec<(f64, f64)>,
}

impl Support {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::Domain(
                "support needs at least one coordinate".into(),
            ));
        }
        for &(lo, hi) in &intervals {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::Domain(format!(
                    "invalid support interval ({lo}, {hi})"
                )));
            }
        }
        Ok(Support { intervals })
    }

    pub fn real_line(dim: usize) -> Self {
        Support {
            intervals: vec![(f64::NEG_INFINITY, f64::INFINITY); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn interval(&self, i: usize) -> (f64, f64) {
        self.intervals[i]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.intervals)
                .all(|(&v, &(lo, hi))| lo < v && v < hi)
    }
}

/// n observations stored flat, row-major, `dim` values per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    dim: usize,
}

impl Sample {
    pub fn empty(dim: usize) -> Self {
        Sample {
            data: Vec::new(),
            dim,
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Sample {
            data: Vec::with_capacity(dim * n),
            dim,
        }
    }

    pub fn from_scalars(values: Vec<f64>) -> Self {
        Sample {
            data: values,
            dim: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    /// Direct view of the values when observations are scalar.
    pub fn scalars(&self) -> Option<&[f64]> {
        (self.dim == 1).then_some(&self.data[..])
    }
}

/// A parametric family of positive densities.
///
/// Implementations provide unchecked evaluations; use the module-level
/// functions for checked access. `analytic_score` and `analytic_fisher`
/// are optional fast paths that must match their numerical counterparts
/// (the test suite holds them to that).
pub trait Model: Send + Sync {
    fn dim_param(&self) -> usize;
    fn dim_obs(&self) -> usize;
    fn domain(&self) -> &ParameterDomain;
    fn support(&self) -> &Support;

    /// log f(x, theta), no precondition checks.
    fn log_density_raw(&self, x: &[f64], theta: &[f64]) -> f64;

    fn analytic_score(&self, x: &[f64], theta: &[f64]) -> Option<Vec<f64>> {
        let _ = (x, theta);
        None
    }

    fn analytic_fisher(&self, theta: &[f64]) -> Option<Matrix> {
        let _ = theta;
        None
    }

    /// n i.i.d. draws from P_theta using the supplied generator.
    fn sample_raw(&self, theta: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Sample;
}

impl<M: Model + ?Sized> Model for &M {
    fn dim_param(&self) -> usize {
        (**self).dim_param()
    }
    fn dim_obs(&self) -> usize {
        (**self).dim_obs()
    }
    fn domain(&self) -> &ParameterDomain {
        (**self).domain()
    }
    fn support(&self) -> &Support {
        (**self).support()
    }
    fn log_density_raw(&self, x: &[f64], theta: &[f64]) -> f64 {
        (**self).log_density_raw(x, theta)
    }
    fn analytic_score(&self, x: &[f64], theta: &[f64]) -> Option<Vec<f64>> {
        (**self).analytic_score(x, theta)
    }
    fn analytic_fisher(&self, theta: &[f64]) -> Option<Matrix> {
        (**self).analytic_fisher(theta)
    }
    fn sample_raw(&self, theta: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Sample {
        (**self).sample_raw(theta, n, rng)
    }
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn dim_param(&self) -> usize {
        (**self).dim_param()
    }
    fn dim_obs(&self) -> usize {
        (**self).dim_obs()
    }
    fn domain(&self) -> &ParameterDomain {
        (**self).domain()
    }
    fn support(&self) -> &Support {
        (**self).support()
    }
    fn log_density_raw(&self, x: &[f64], theta: &[f64]) -> f64 {
        (**self).log_density_raw(x, theta)
    }
    fn analytic_score(&self, x: &[f64], theta: &[f64]) -> Option<Vec<f64>> {
        (**self).analytic_score(x, theta)
    }
    fn analytic_fisher(&self, theta: &[f64]) -> Option<Matrix> {
        (**self).analytic_fisher(theta)
    }
    fn sample_raw(&self, theta: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Sample {
        (**self).sample_raw(theta, n, rng)
    }
}

// ---------------------------------------------------------------------------
// Checked operations
// ---------------------------------------------------------------------------

/// log f(x, theta) with domain, support, and finiteness checks.
pub fn log_density<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64]) -> Result<f64> {
    model.domain().check_contains(theta)?;
    if !model.support().contains(x) {
        return Err(Error::Domain(format!("x = {x:?} is outside the support")));
    }
    let v = model.log_density_raw(x, theta);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!(
            "log density {v} at x = {x:?}, theta = {theta:?}"
        )))
    }
}

/// Central finite-difference step per coordinate: cbrt(eps) * max(1, |t|).
pub fn fd_steps(theta: &[f64]) -> Vec<f64> {
    let c = f64::EPSILON.cbrt();
    theta.iter().map(|t| c * t.abs().max(1.0)).collect()
}

/// Score vector grad_theta log f(x, theta).
///
/// Uses the analytic score when the family has one, otherwise central
/// finite differences of the log density.
pub fn score<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    model.domain().check_contains(theta)?;
    if let Some(s) = model.analytic_score(x, theta) {
        return Ok(s);
    }
    fd_score(model, x, theta)
}

/// Finite-difference score, available even when an analytic one exists.
pub fn fd_score<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    model.domain().check_contains(theta)?;
    let steps = fd_steps(theta);
    for (i, (&t, &h)) in theta.iter().zip(&steps).enumerate() {
        let lo = model.domain().lower()[i];
        let hi = model.domain().upper()[i];
        if !(t - h > lo && t + h < hi) {
            return Err(Error::Boundary {
                index: i,
                value: t,
                step: h,
            });
        }
    }
    let mut grad = Vec::with_capacity(theta.len());
    let mut shifted = theta.to_vec();
    for i in 0..theta.len() {
        let h = steps[i];
        shifted[i] = theta[i] + h;
        let up = model.log_density_raw(x, &shifted);
        shifted[i] = theta[i] - h;
        let down = model.log_density_raw(x, &shifted);
        shifted[i] = theta[i];
        let g = (up - down) / (2.0 * h);
        if !g.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite-difference score at x = {x:?}, theta = {theta:?}"
            )));
        }
        grad.push(g);
    }
    Ok(grad)
}

/// n i.i.d. draws from P_theta, bit-identical for identical (theta, n, seed).
pub fn sample<M: Model + ?Sized>(model: &M, theta: &[f64], n: usize, seed: u64) -> Result<Sample> {
    model.domain().check_contains(theta)?;
    let mut rng = rng::seeded_rng(seed);
    Ok(model.sample_raw(theta, n, &mut rng))
}

/// Squared Hellinger-type identifiability distance
/// r(P_theta, P_theta') = integral (sqrt f - sqrt f')^2, in [0, 2].
pub fn hellinger_distance<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    theta2: &[f64],
) -> Result<f64> {
    model.domain().check_contains(theta)?;
    model.domain().check_contains(theta2)?;
    if model.dim_obs() != 1 {
        return Err(Error::Unsupported(
            "hellinger_distance integrates scalar observations only".into(),
        ));
    }
    let (lo, hi) = model.support().interval(0);
    let r = quad::integrate_auto(
        |x| {
            let a = (0.5 * model.log_density_raw(&[x], theta)).exp();
            let b = (0.5 * model.log_density_raw(&[x], theta2)).exp();
            (a - b) * (a - b)
        },
        lo,
        hi,
        &QuadOptions::default(),
    )?;
    Ok(r.value)
}

// ---------------------------------------------------------------------------
// Built-in families
// ---------------------------------------------------------------------------

fn scalar_domain(domain: &ParameterDomain) -> Result<()> {
    if domain.dim() != 1 {
        return Err(Error::Domain(format!(
            "family is one-parameter, domain has dimension {}",
            domain.dim()
        )));
    }
    Ok(())
}

/// N(theta, 1), the location family of the unit normal.
#[derive(Clone)]
pub struct NormalLocation {
    domain: ParameterDomain,
    support: Support,
}

impl NormalLocation {
    pub fn new(domain: ParameterDomain) -> Result<Self> {
        scalar_domain(&domain)?;
        Ok(NormalLocation {
            domain,
            support: Support::real_line(1),
        })
    }

    pub fn on(lo: f64, hi: f64) -> Result<Self> {
        NormalLocation::new(ParameterDomain::interval(lo, hi)?)
    }
}

impl Model for NormalLocation {
    fn dim_param(&self) -> usize {
        1
    }
    fn dim_obs(&self) -> usize {
        1
    }
    fn domain(&self) -> &ParameterDomain {
        &self.domain
    }
    fn support(&self) -> &Support {
        &self.support
    }
    fn log_density_raw(&self, x: &[f64], theta: &[f64]) -> f64 {
        let u = x[0] - theta[0];
        -0.5 * u * u - 0.5 * LN_2PI
    }
    fn analytic_score(&self, x: &[f64], theta: &[f64]) -> Option<Vec<f64>> {
        Some(vec![x[0] - theta[0]])
    }
    fn analytic_fisher(&self, _theta: &[f64]) -> Option<Matrix> {
        Some(Matrix::from_rows(&[&[1.0]]))
    }
    fn sample_raw(&self, theta: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Sample {
        let mut out = Sample::with_capacity(1, n);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(rng);
            out.push_row(&[theta[0] + z]);
        }
        out
    }
}

/// N(0, theta^2), the scale family of the unit normal; theta > 0.
#[derive(Clone)]
pub struct NormalScale {
    domain: ParameterDomain,
    support: Support,
}

impl NormalScale {
    pub fn new(domain: ParameterDomain) -> Result<Self> {
        scalar_domain(&domain)?;
        if domain.lower()[0] < 0.0 {
            return Err(Error::Domain(
                "scale family needs a nonnegative lower bound".into(),
            ));
        }
        Ok(NormalScale {
            domain,
            support: Support::real_line(1),
        })
    }

    pub fn on(lo: f64, hi: f64) -> Result<Self> {
        NormalScale::new(ParameterDomain::interval(lo, hi)?)
    }
}

impl Model for NormalScale {
    fn dim_param(&self) -> usize {
        1
    }
    fn dim_obs(&self) -> usize {
        1
    }
    fn domain(&self) -> &ParameterDomain {
        &self.domain
    }
    fn support(&self) -> &Support {
        &self.support
    }
    fn log_density_raw(&self, x: &[f64], theta: &[f64]) -> f64 {
        let t = theta[0];
        -0.5 * (x[0] / t) * (x[0] / t) - t.ln() - 0.5 * LN_2PI
    }
    fn analytic_score(&self, x: &[f64], theta: &[f64]) -> Option<Vec<f64>> {
        let t = theta[0];
        Some(vec![x[0] * x[0] / (t * t * t) - 1.0 / t])
    }
    fn analytic_fisher(&self, theta: &[f64]) -> Option<Matrix> {
        let t = theta[0];
        Some(Matrix::from_rows(&[&[2.0 / (t * t)]]))
    }
    fn sample_raw(&self, theta: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Sample {
        let mut out = Sample::with_capacity(1, n);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(rng);
            out.push_row(&[theta[0] * z]);
        }
        out
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Logistic location family with unit scale.
#[derive(Clone)]
pub struct LogisticLocation {
    domain: ParameterDomain,
    support: Support,
}

impl LogisticLocation {
    pub fn new(domain: ParameterDomain) -> Result<Self> {
        scalar_domain(&domain)?;
        Ok(LogisticLocation {
            domain,
            support: Support::real_line(1),
        })
    }

    pub fn on(lo: f64, hi: f64) -> Result<Self> {
        LogisticLocation::new(ParameterDomain::interval(lo, hi)?)
    }
}

impl Model for LogisticLocation {
    fn dim_param(&self) -> usize {
        1
    }
    fn dim_obs(&self) -> usize {
        1
    }
    fn domain(&self) -> &ParameterDomain {
        &self.domain
    }
    fn support(&self) -> &Support {
        &self.support
    }
    fn log_density_raw(&self, x: &[f64], theta: &[f64]) -> f64 {
        let u = x[0] - theta[0];
        -u - 2.0 * softplus(-u)
    }
    fn analytic_score(&self, x: &[f64], theta: &[f64]) -> Option<Vec<f64>> {
        Some(vec![(0.5 * (x[0] - theta[0])).tanh()])
    }
    fn analytic_fisher(&self, _theta: &[f64]) -> Option<Matrix> {
        Some(Matrix::from_rows(&[&[1.0 / 3.0]]))
    }
    fn sample_raw(&self, theta: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Sample {
        let mut out = Sample::with_capacity(1, n);
        for _ in 0..n {
            let p: f64 = Open01.sample(rng);
            out.push_row(&[theta[0] + (p / (1.0 - p)).ln()]);
        }
        out
    }
}

/// Equal-weight mixture of N(sqrt a, 1) and N(-sqrt a, 1), parameter a > 0.
///
/// This is the conditional law of one observation from N(theta, 1) given
/// theta^2 = a under a symmetric prior; the default domain ]0, 1[ mirrors
/// that construction.
#[derive(Clone)]
pub struct Mixture {
    domain: ParameterDomain,
    support: Support,
}

impl Mixture {
    pub fn new(domain: ParameterDomain) -> Result<Self> {
        scalar_domain(&domain)?;
        if domain.lower()[0] < 0.0 {
            return Err(Error::Domain(
                "mixture parameter a must stay positive; lower bound below 0".into(),
            ));
        }
        Ok(Mixture {
            domain,
            support: Support::real_line(1),
        })
    }

    pub fn standard() -> Self {
        Mixture::new(ParameterDomain::interval(0.0, 1.0).expect("static bounds")).expect("valid")
    }

    pub fn on(lo: f64, hi: f64) -> Result<Self> {
        Mixture::new(ParameterDomain::interval(lo, hi)?)
    }
}

impl Model for Mixture {
    fn dim_param(&self) -> usize {
        1
    }
    fn dim_obs(&self) -> usize {
        1
    }
    fn domain(&self) -> &ParameterDomain {
        &self.domain
    }
    fn support(&self) -> &Support {
        &self.support
    }
    fn log_density_raw(&self, x: &[f64], theta: &[f64]) -> f64 {
        let s = theta[0].sqrt();
        let u1 = x[0] - s;
        let u2 = x[0] + s;
        let e1 = -0.5 * u1 * u1;
        let e2 = -0.5 * u2 * u2;
        let m = e1.max(e2);
        m + ((e1 - m).exp() + (e2 - m).exp()).ln() - 0.5 * LN_2PI - std::f64::consts::LN_2
    }
    fn analytic_score(&self, x: &[f64], theta: &[f64]) -> Option<Vec<f64>> {
        let s = theta[0].sqrt();
        let u1 = x[0] - s;
        let u2 = x[0] + s;
        let e1 = -0.5 * u1 * u1;
        let e2 = -0.5 * u2 * u2;
        let m = e1.max(e2);
        let w1 = (e1 - m).exp();
        let w2 = (e2 - m).exp();
        Some(vec![(u1 * w1 - u2 * w2) / (2.0 * s * (w1 + w2))])
    }
    fn sample_raw(&self, theta: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Sample {
        let s = theta[0].sqrt();
        let mut out = Sample::with_capacity(1, n);
        for _ in 0..n {
            let center = if rng.gen_bool(0.5) { s } else { -s };
            let z: f64 = StandardNormal.sample(rng);
            out.push_row(&[center + z]);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Conditional pushforward model
// ---------------------------------------------------------------------------

/// Model over the image of a piecewise-monotone map: the observation law
/// given psi(theta) = a, a prior-weighted mixture over antecedents.
#[derive(Clone)]
pub struct PushforwardModel<M: Model> {
    base: M,
    prior: PriorMeasure,
    psi: BranchMap,
    domain: ParameterDomain,
}

/// Conditional model Q_a with density
/// h(x, a) = sum_b q(i_b(a)) |i_b'(a)| f(x, i_b(a)) / sum_b q(i_b(a)) |i_b'(a)|,
/// the change-of-variables form of E[f(x, .) | psi = a].
pub fn pushforward_model<M: Model>(
    base: M,
    prior: PriorMeasure,
    psi: BranchMap,
) -> Result<PushforwardModel<M>> {
    if base.dim_param() != 1 {
        return Err(Error::Unsupported(
            "pushforward models are built from one-parameter bases".into(),
        ));
    }
    if prior.domain().dim() != 1 {
        return Err(Error::Domain("prior must live on the scalar domain".into()));
    }
    let domain = psi.image_domain().clone();
    Ok(PushforwardModel {
        base,
        prior,
        psi,
        domain,
    })
}

impl<M: Model> PushforwardModel<M> {
    pub fn base(&self) -> &M {
        &self.base
    }

    pub fn map(&self) -> &BranchMap {
        &self.psi
    }

    /// Antecedents of `a` with their mixture weights q(theta_b)/|psi'|,
    /// unnormalized. NaN weight signals a critical antecedent.
    fn weighted_antecedents(&self, a: f64) -> Result<Vec<(f64, f64)>> {
        let ants = self.psi.antecedents(a)?;
        Ok(ants
            .iter()
            .map(|ant| {
                let q = self.prior.density(&[ant.theta]);
                (ant.theta, q / ant.derivative.abs())
            })
            .collect())
    }
}

impl<M: Model> Model for PushforwardModel<M> {
    fn dim_param(&self) -> usize {
        1
    }
    fn dim_obs(&self) -> usize {
        self.base.dim_obs()
    }
    fn domain(&self) -> &ParameterDomain {
        &self.domain
    }
    fn support(&self) -> &Support {
        self.base.support()
    }
    fn log_density_raw(&self, x: &[f64], theta: &[f64]) -> f64 {
        let weighted = match self.weighted_antecedents(theta[0]) {
            Ok(w) => w,
            Err(_) => return f64::NAN,
        };
        let total: f64 = weighted.iter().map(|&(_, w)| w).sum();
        if !total.is_finite() || total <= 0.0 {
            return f64::NAN;
        }
        let terms: Vec<f64> = weighted
            .iter()
            .map(|&(t, w)| (w / total).ln() + self.base.log_density_raw(x, &[t]))
            .collect();
        let m = terms.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
        m + terms.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
    }
    fn sample_raw(&self, theta: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Sample {
        let weighted = self
            .weighted_antecedents(theta[0])
            .expect("sampler called outside the image domain");
        let total: f64 = weighted.iter().map(|&(_, w)| w).sum();
        let mut counts = vec![0usize; weighted.len()];
        for _ in 0..n {
            let mut u: f64 = rng.gen::<f64>() * total;
            let mut pick = weighted.len() - 1;
            for (b, &(_, w)) in weighted.iter().enumerate() {
                if u < w {
                    pick = b;
                    break;
                }
                u -= w;
            }
            counts[pick] += 1;
        }
        let mut out = Sample::with_capacity(self.base.dim_obs(), n);
        for (b, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let part = self.base.sample_raw(&[weighted[b].0], count, rng);
            for row in part.rows() {
                out.push_row(row);
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Product model
// ---------------------------------------------------------------------------

/// Two independent observation blocks under the concatenated parameter:
/// (x1, x2) ~ P1_theta1 x P2_theta2 on the product rectangle.
#[derive(Clone)]
pub struct ProductModel<A: Model, B: Model> {
    left: A,
    right: B,
    domain: ParameterDomain,
    support: Support,
}

pub fn product_model<A: Model, B: Model>(left: A, right: B) -> Result<ProductModel<A, B>> {
    let domain = left.domain().product(right.domain());
    let mut intervals = Vec::with_capacity(left.dim_obs() + right.dim_obs());
    for i in 0..left.dim_obs() {
        intervals.push(left.support().interval(i));
    }
    for i in 0..right.dim_obs() {
        intervals.push(right.support().interval(i));
    }
    let support = Support::new(intervals)?;
    Ok(ProductModel {
        left,
        right,
        domain,
        support,
    })
}

impl<A: Model, B: Model> ProductModel<A, B> {
    pub fn left(&self) -> &A {
        &self.left
    }

    pub fn right(&self) -> &B {
        &self.right
    }

    fn split_param(&self) -> usize {
        self.left.dim_param()
    }

    fn split_obs(&self) -> usize {
        self.left.dim_obs()
    }
}

impl<A: Model, B: Model> Model for ProductModel<A, B> {
    fn dim_param(&self) -> usize {
        self.left.dim_param() + self.right.dim_param()
    }
    fn dim_obs(&self) -> usize {
        self.left.dim_obs() + self.right.dim_obs()
    }
    fn domain(&self) -> &ParameterDomain {
        &self.domain
    }
    fn support(&self) -> &Support {
        &self.support
    }
    fn log_density_raw(&self, x: &[f64], theta: &[f64]) -> f64 {
        let (sp, so) = (self.split_param(), self.split_obs());
        self.left.log_density_raw(&x[..so], &theta[..sp])
            + self.right.log_density_raw(&x[so..], &theta[sp..])
    }
    fn analytic_score(&self, x: &[f64], theta: &[f64]) -> Option<Vec<f64>> {
        let (sp, so) = (self.split_param(), self.split_obs());
        let mut s = self.left.analytic_score(&x[..so], &theta[..sp])?;
        s.extend(self.right.analytic_score(&x[so..], &theta[sp..])?);
        Some(s)
    }
    fn analytic_fisher(&self, theta: &[f64]) -> Option<Matrix> {
        let sp = self.split_param();
        let a = self.left.analytic_fisher(&theta[..sp])?;
        let b = self.right.analytic_fisher(&theta[sp..])?;
        Some(Matrix::block_diag(&a, &b))
    }
    fn sample_raw(&self, theta: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Sample {
        let sp = self.split_param();
        let lhs = self.left.sample_raw(&theta[..sp], n, rng);
        let rhs = self.right.sample_raw(&theta[sp..], n, rng);
        let mut out = Sample::with_capacity(self.dim_obs(), n);
        let mut row = Vec::with_capacity(self.dim_obs());
        for i in 0..n {
            row.clear();
            row.extend_from_slice(lhs.row(i));
            row.extend_from_slice(rhs.row(i));
            out.push_row(&row);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream_seed;
    use approx::assert_relative_eq;

    fn wide_normal() -> NormalLocation {
        NormalLocation::on(-10.0, 10.0).unwrap()
    }

    #[test]
    fn normal_log_density_at_mode() {
        let m = wide_normal();
        let v = log_density(&m, &[0.0], &[0.0]).unwrap();
        assert_relative_eq!(v, -0.918_938_533_204_672_7, epsilon = 1e-15);
        let shifted = log_density(&m, &[1.0], &[1.0]).unwrap();
        assert_eq!(v.to_bits(), shifted.to_bits());
    }

    #[test]
    fn mixture_log_density_reference_point() {
        let m = Mixture::on(0.0, 1.5).unwrap();
        let v = log_density(&m, &[0.0], &[1.0]).unwrap();
        assert_relative_eq!(v, -1.418_938_533_204_672_7, epsilon = 1e-12);
    }

    #[test]
    fn domain_violations_are_domain_errors() {
        let m = NormalLocation::on(-1.0, 1.0).unwrap();
        assert!(matches!(
            log_density(&m, &[0.0], &[2.0]),
            Err(Error::Domain(_))
        ));
        let excl = NormalLocation::new(
            ParameterDomain::interval(-1.0, 1.0)
                .unwrap()
                .exclude(vec![0.0])
                .unwrap(),
        )
        .unwrap();
        assert!(log_density(&excl, &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn normal_score_is_residual() {
        let m = wide_normal();
        let s = score(&m, &[2.0], &[0.5]).unwrap();
        assert_eq!(s, vec![1.5]);
    }

    #[test]
    fn score_vanishes_at_density_peak() {
        let logistic = LogisticLocation::on(-5.0, 5.0).unwrap();
        let s = score(&logistic, &[0.7], &[0.7]).unwrap();
        assert!(s[0].abs() < 1e-14);
        let mix = Mixture::standard();
        let fd = fd_score(&mix, &[0.0], &[0.25]).unwrap();
        let an = score(&mix, &[0.0], &[0.25]).unwrap();
        assert_relative_eq!(an[0], fd[0], max_relative = 1e-6);
    }

    #[test]
    fn analytic_scores_match_finite_differences() {
        let mut rng = crate::rng::seeded_rng(11);
        let normal = wide_normal();
        let scale = NormalScale::on(0.2, 3.0).unwrap();
        let logistic = LogisticLocation::on(-5.0, 5.0).unwrap();
        let mixture = Mixture::standard();
        let models: [(&dyn Model, f64, f64); 4] = [
            (&normal, -9.0, 9.0),
            (&scale, 0.3, 2.9),
            (&logistic, -4.0, 4.0),
            (&mixture, 0.05, 0.95),
        ];
        for (model, lo, hi) in models {
            for _ in 0..20 {
                let theta = [rng.gen_range(lo..hi)];
                let x = [rng.gen_range(-3.0..3.0)];
                let an = score(model, &x, &theta).unwrap();
                let fd = fd_score(model, &x, &theta).unwrap();
                assert_relative_eq!(an[0], fd[0], max_relative = 1e-6, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn score_near_boundary_reports_boundary_error() {
        // Strip the analytic score so the finite-difference path runs.
        struct NoScore(NormalLocation);
        impl Model for NoScore {
            fn dim_param(&self) -> usize {
                1
            }
            fn dim_obs(&self) -> usize {
                1
            }
            fn domain(&self) -> &ParameterDomain {
                self.0.domain()
            }
            fn support(&self) -> &Support {
                self.0.support()
            }
            fn log_density_raw(&self, x: &[f64], theta: &[f64]) -> f64 {
                self.0.log_density_raw(x, theta)
            }
            fn sample_raw(&self, theta: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Sample {
                self.0.sample_raw(theta, n, rng)
            }
        }
        let m = NoScore(NormalLocation::on(0.0, 1.0).unwrap());
        let err = score(&m, &[0.5], &[1e-9]).unwrap_err();
        assert!(matches!(err, Error::Boundary { index: 0, .. }));
    }

    #[test]
    fn sampler_is_deterministic_and_unbiased() {
        let m = wide_normal();
        let a = sample(&m, &[0.0], 1_000_000, 99).unwrap();
        let b = sample(&m, &[0.0], 1_000_000, 99).unwrap();
        assert_eq!(a, b);
        let mean: f64 = a.scalars().unwrap().iter().sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 4.0 / (a.len() as f64).sqrt());
        assert!(sample(&m, &[0.0], 0, 1).unwrap().is_empty());
    }

    #[test]
    fn normalization_of_all_builtins() {
        let normal = wide_normal();
        let scale = NormalScale::on(0.2, 3.0).unwrap();
        let logistic = LogisticLocation::on(-5.0, 5.0).unwrap();
        let mixture = Mixture::standard();
        let models: [(&dyn Model, f64, f64); 4] = [
            (&normal, -9.0, 9.0),
            (&scale, 0.3, 2.9),
            (&logistic, -4.0, 4.0),
            (&mixture, 0.05, 0.95),
        ];
        let mut rng = crate::rng::seeded_rng(5);
        for (model, lo, hi) in models {
            for _ in 0..5 {
                let theta = [rng.gen_range(lo..hi)];
                let (slo, shi) = model.support().interval(0);
                let mass = quad::integrate_auto(
                    |x| model.log_density_raw(&[x], &theta).exp(),
                    slo,
                    shi,
                    &QuadOptions::default(),
                )
                .unwrap();
                assert_relative_eq!(mass.value, 1.0, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn hellinger_reference_values() {
        let m = wide_normal();
        assert!(hellinger_distance(&m, &[0.3], &[0.3]).unwrap().abs() < 1e-12);
        let d = hellinger_distance(&m, &[0.0], &[1.0]).unwrap();
        assert_relative_eq!(d, 2.0 - 2.0 * (-0.125f64).exp(), epsilon = 1e-9);
        let swapped = hellinger_distance(&m, &[1.0], &[0.0]).unwrap();
        assert_relative_eq!(d, swapped, epsilon = 1e-12);
        let far = hellinger_distance(&m, &[-9.0], &[9.0]).unwrap();
        assert!(far > 1.99 && far <= 2.0 + 1e-9);
    }

    fn mixture_setup() -> PushforwardModel<NormalLocation> {
        let domain = ParameterDomain::interval(-1.0, 1.0)
            .unwrap()
            .exclude(vec![0.0])
            .unwrap();
        let base = NormalLocation::new(domain.clone()).unwrap();
        let prior = PriorMeasure::uniform(domain.clone()).unwrap();
        let psi = BranchMap::square(domain).unwrap();
        pushforward_model(base, prior, psi).unwrap()
    }

    #[test]
    fn pushforward_matches_symmetric_mixture_density() {
        let q = mixture_setup();
        let reference = Mixture::standard();
        for &a in &[0.1, 0.25, 0.5, 0.9] {
            for &x in &[-2.0, -0.3, 0.0, 0.7, 2.5] {
                let got = log_density(&q, &[x], &[a]).unwrap();
                let want = log_density(&reference, &[x], &[a]).unwrap();
                assert_relative_eq!(got, want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pushforward_of_injective_map_is_reparameterisation() {
        let domain = ParameterDomain::interval(-2.0, 2.0).unwrap();
        let base = NormalLocation::new(domain.clone()).unwrap();
        let prior = PriorMeasure::uniform(domain.clone()).unwrap();
        let psi = BranchMap::affine(2.0, 1.0, domain).unwrap();
        let q = pushforward_model(base, prior, psi).unwrap();
        let a = 2.0;
        let theta = (a - 1.0) / 2.0;
        for &x in &[-1.0, 0.0, 0.5, 2.0] {
            let got = log_density(&q, &[x], &[a]).unwrap();
            let want = -0.5 * (x - theta) * (x - theta) - 0.5 * LN_2PI;
            assert_relative_eq!(got, want, epsilon = 1e-13);
        }
    }

    #[test]
    fn pushforward_density_normalizes() {
        let q = mixture_setup();
        let mass = quad::integrate_auto(
            |x| q.log_density_raw(&[x], &[0.5]).exp(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &QuadOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(mass.value, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn pushforward_rejects_points_outside_image() {
        let q = mixture_setup();
        assert!(log_density(&q, &[0.0], &[1.2]).is_err());
        assert!(log_density(&q, &[0.0], &[-0.1]).is_err());
    }

    #[test]
    fn pushforward_sampler_tracks_density() {
        let q = mixture_setup();
        let a = 0.25;
        let s = sample(&q, &[a], 200_000, substream_seed(3, 0)).unwrap();
        let xs = s.scalars().unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let second = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        // Symmetric mixture: mean 0, variance 1 + a.
        assert!(mean.abs() < 0.01);
        assert!((second - (1.0 + a)).abs() < 0.02);
        let again = sample(&q, &[a], 200_000, substream_seed(3, 0)).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn product_model_concatenates_blocks() {
        let joint = product_model(
            NormalLocation::on(-1.0, 1.0).unwrap(),
            NormalScale::on(0.5, 2.0).unwrap(),
        )
        .unwrap();
        assert_eq!(joint.dim_param(), 2);
        assert_eq!(joint.dim_obs(), 2);
        let theta = [0.3, 1.2];
        let x = [0.1, -0.4];
        let want = NormalLocation::on(-1.0, 1.0)
            .unwrap()
            .log_density_raw(&[0.1], &[0.3])
            + NormalScale::on(0.5, 2.0)
                .unwrap()
                .log_density_raw(&[-0.4], &[1.2]);
        assert_relative_eq!(joint.log_density_raw(&x, &theta), want, epsilon = 1e-14);
        let j = joint.analytic_fisher(&theta).unwrap();
        assert_eq!(j[(0, 0)], 1.0);
        assert_relative_eq!(j[(1, 1)], 2.0 / (1.2_f64 * 1.2), epsilon = 1e-15);
        assert_eq!(j[(0, 1)], 0.0);
        let s = joint.analytic_score(&x, &theta).unwrap();
        assert_eq!(s.len(), 2);
        assert_relative_eq!(s[0], 0.1 - 0.3, epsilon = 1e-15);
        let draws = sample(&joint, &theta, 500, 11).unwrap();
        assert_eq!(draws.dim(), 2);
        assert_eq!(draws.len(), 500);
        let again = sample(&joint, &theta, 500, 11).unwrap();
        assert_eq!(draws, again);
    }
}
