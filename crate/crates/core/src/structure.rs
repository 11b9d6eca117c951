//! Error structures: a prior, a squared-error field Gamma, and the
//! first-order calculus on functionals.
//!
//! [`from_model`] realizes the central construction: Gamma(theta) is the
//! inverse Fisher information, so the structure carries exactly the
//! asymptotic error of efficient estimation. [`ErrorStructure::gamma`]
//! evaluates the carre-du-champ form on scalar functionals,
//! [`ErrorStructure::gradient`] the square-root gradient, and
//! [`propagate_bias`] the second-order bias transport.

use crate::domain::ParameterDomain;
use crate::error::{Error, Result};
use crate::fisher::{self, FisherMethod};
use crate::linalg::{self, Matrix};
use crate::model::{Model, Sample};
use crate::quad::{self, QuadOptions};
use crate::rng;
use rand::Rng;
use std::sync::Arc;

/// Grid resolution for tabulated inverse-CDF sampling.
pub const GRID_POINTS: usize = 2048;

/// Probe points drawn from the prior when a structure is constructed.
const PROBE_COUNT: usize = 8;
const PROBE_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

pub(crate) type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub(crate) type SamplerFn = Arc<dyn Fn(usize, u64) -> Sample + Send + Sync>;
pub(crate) type GammaField = Arc<dyn Fn(&[f64]) -> Result<Matrix> + Send + Sync>;

// ---------------------------------------------------------------------------
// Prior measures
// ---------------------------------------------------------------------------

/// A probability measure on a parameter domain: density, sampler, and the
/// numeric witness that the density integrates to one.
#[derive(Clone)]
pub struct PriorMeasure {
    domain: ParameterDomain,
    density: DensityFn,
    sampler: SamplerFn,
    normalization: f64,
}

impl std::fmt::Debug for PriorMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PriorMeasure")
            .field("domain", &self.domain)
            .field("normalization", &self.normalization)
            .finish()
    }
}

fn integrate_density(domain: &ParameterDomain, density: &DensityFn) -> Result<f64> {
    let opts = QuadOptions::default();
    match domain.dim() {
        1 => {
            let (lo, hi) = (domain.lower()[0], domain.upper()[0]);
            let d = Arc::clone(density);
            Ok(quad::integrate_auto(move |t| d(&[t]), lo, hi, &opts)?.value)
        }
        2 => {
            let (lo0, hi0) = (domain.lower()[0], domain.upper()[0]);
            let (lo1, hi1) = (domain.lower()[1], domain.upper()[1]);
            let d = Arc::clone(density);
            let outer = quad::integrate_auto(
                move |t0| {
                    let d_inner = Arc::clone(&d);
                    quad::integrate_auto(move |t1| d_inner(&[t0, t1]), lo1, hi1, &opts)
                        .map(|r| r.value)
                        .unwrap_or(f64::NAN)
                },
                lo0,
                hi0,
                &opts,
            )?;
            Ok(outer.value)
        }
        d => Err(Error::Unsupported(format!(
            "normalization witness implemented for dimension <= 2, got {d}"
        ))),
    }
}

impl PriorMeasure {
    /// Wrap a density and sampler, verifying nonnegativity on a probe grid
    /// and the normalization witness within 1e-8.
    pub fn new_raw(
        domain: ParameterDomain,
        density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        sampler: impl Fn(usize, u64) -> Sample + Send + Sync + 'static,
    ) -> Result<Self> {
        let density: DensityFn = Arc::new(density);
        probe_nonnegative(&domain, &density)?;
        let normalization = integrate_density(&domain, &density)?;
        if (normalization - 1.0).abs() > 1e-8 {
            return Err(Error::Domain(format!(
                "prior density does not normalize: integral = {normalization}"
            )));
        }
        Ok(PriorMeasure {
            domain,
            density,
            sampler: Arc::new(sampler),
            normalization,
        })
    }

    /// Uniform distribution on a bounded rectangle.
    pub fn uniform(domain: ParameterDomain) -> Result<Self> {
        let mut vol = 1.0;
        for (lo, hi) in domain.lower().iter().zip(domain.upper()) {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Domain(
                    "uniform prior needs a bounded rectangle".into(),
                ));
            }
            vol *= hi - lo;
        }
        let dens_domain = domain.clone();
        let sample_domain = domain.clone();
        let inv = 1.0 / vol;
        Ok(PriorMeasure {
            domain,
            density: Arc::new(move |t| if dens_domain.contains(t) { inv } else { 0.0 }),
            sampler: Arc::new(move |count, seed| {
                let mut rng = rng::seeded_rng(seed);
                let dim = sample_domain.dim();
                let mut out = Sample::with_capacity(dim, count);
                let mut row = vec![0.0; dim];
                for _ in 0..count {
                    loop {
                        for (v, (lo, hi)) in row
                            .iter_mut()
                            .zip(sample_domain.lower().iter().zip(sample_domain.upper()))
                        {
                            *v = rng.gen_range(*lo..*hi);
                        }
                        if sample_domain.contains(&row) {
                            break;
                        }
                    }
                    out.push_row(&row);
                }
                out
            }),
            normalization: 1.0,
        })
    }

    /// Normalize an unnormalized scalar density and equip it with a
    /// tabulated inverse-CDF sampler on a `GRID_POINTS`-interval grid.
    pub fn from_unnormalized(
        domain: ParameterDomain,
        raw: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if domain.dim() != 1 {
            return Err(Error::Unsupported(
                "grid-sampled priors are scalar; build products from factors".into(),
            ));
        }
        let (lo, hi) = (domain.lower()[0], domain.upper()[0]);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Domain(
                "grid-sampled priors need bounded domains".into(),
            ));
        }
        let step = (hi - lo) / GRID_POINTS as f64;
        let mut nodes = Vec::with_capacity(GRID_POINTS + 1);
        let mut values = Vec::with_capacity(GRID_POINTS + 1);
        for k in 0..=GRID_POINTS {
            let t = lo + step * k as f64;
            let v = raw(t);
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!(
                    "prior density must be finite and nonnegative; got {v} at {t}"
                )));
            }
            nodes.push(t);
            values.push(v);
        }
        let mut cdf = Vec::with_capacity(GRID_POINTS + 1);
        cdf.push(0.0);
        for k in 1..=GRID_POINTS {
            let inc = 0.5 * (values[k - 1] + values[k]) * step;
            cdf.push(cdf[k - 1] + inc);
        }
        let total = *cdf.last().expect("nonempty cdf");
        if total <= 0.0 {
            return Err(Error::Domain("prior density is identically zero".into()));
        }

        let raw = Arc::new(raw);
        let opts = QuadOptions::default();
        let mass = {
            let raw = Arc::clone(&raw);
            quad::integrate_auto(move |t| raw(t), lo, hi, &opts)?.value
        };
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::NonFinite(format!("prior mass integral = {mass}")));
        }

        let dens_domain = domain.clone();
        let dens_raw = Arc::clone(&raw);
        let density: DensityFn = Arc::new(move |t: &[f64]| {
            if dens_domain.contains(t) {
                dens_raw(t[0]) / mass
            } else {
                0.0
            }
        });
        let normalization = integrate_density(&domain, &density)?;
        if (normalization - 1.0).abs() > 1e-8 {
            return Err(Error::Domain(format!(
                "prior fails its normalization witness: {normalization}"
            )));
        }

        let sample_domain = domain.clone();
        let sampler: SamplerFn = Arc::new(move |count, seed| {
            let mut rng = rng::seeded_rng(seed);
            let mut out = Sample::with_capacity(1, count);
            for _ in 0..count {
                loop {
                    let target: f64 = rng.gen::<f64>() * total;
                    let k = match cdf.binary_search_by(|c| c.partial_cmp(&target).unwrap()) {
                        Ok(idx) => idx.min(GRID_POINTS - 1),
                        Err(idx) => idx.saturating_sub(1).min(GRID_POINTS - 1),
                    };
                    let w = target - cdf[k];
                    let d0 = values[k];
                    let slope = (values[k + 1] - values[k]) / step;
                    // Invert the trapezoid CDF within the cell.
                    let s = if slope.abs() < 1e-12 * (d0.abs() + 1.0) {
                        if d0 > 0.0 {
                            w / d0
                        } else {
                            0.5 * step
                        }
                    } else {
                        let disc = (d0 * d0 + 2.0 * slope * w).max(0.0);
                        (disc.sqrt() - d0) / slope
                    };
                    let t = nodes[k] + s.clamp(0.0, step);
                    if sample_domain.contains(&[t]) {
                        out.push_row(&[t]);
                        break;
                    }
                }
            }
            out
        });

        Ok(PriorMeasure {
            domain,
            density,
            sampler,
            normalization,
        })
    }

    /// Independent product of two priors on the product rectangle.
    pub fn product(a: &PriorMeasure, b: &PriorMeasure) -> Result<Self> {
        let domain = a.domain.product(&b.domain);
        let split = a.domain.dim();
        let da = Arc::clone(&a.density);
        let db = Arc::clone(&b.density);
        let sa = Arc::clone(&a.sampler);
        let sb = Arc::clone(&b.sampler);
        let dim = domain.dim();
        Ok(PriorMeasure {
            domain,
            density: Arc::new(move |t: &[f64]| da(&t[..split]) * db(&t[split..])),
            sampler: Arc::new(move |count, seed| {
                let left = sa(count, rng::substream_seed(seed, 1));
                let right = sb(count, rng::substream_seed(seed, 2));
                let mut out = Sample::with_capacity(dim, count);
                let mut row = Vec::with_capacity(dim);
                for i in 0..count {
                    row.clear();
                    row.extend_from_slice(left.row(i));
                    row.extend_from_slice(right.row(i));
                    out.push_row(&row);
                }
                out
            }),
            normalization: a.normalization * b.normalization,
        })
    }

    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    pub fn density(&self, theta: &[f64]) -> f64 {
        (self.density)(theta)
    }

    /// `count` draws, bit-identical for identical (count, seed).
    pub fn sample(&self, count: usize, seed: u64) -> Sample {
        (self.sampler)(count, seed)
    }

    /// Numeric value of the total-mass integral observed at construction.
    pub fn normalization_witness(&self) -> f64 {
        self.normalization
    }
}

fn probe_nonnegative(domain: &ParameterDomain, density: &DensityFn) -> Result<()> {
    let probes = match domain.dim() {
        1 => 257,
        2 => 17,
        _ => 9,
    };
    let mut point = vec![0.0; domain.dim()];
    let mut idx = vec![0usize; domain.dim()];
    loop {
        for (c, &i) in idx.iter().enumerate() {
            let (lo, hi) = (domain.lower()[c], domain.upper()[c]);
            let frac = (i as f64 + 0.5) / probes as f64;
            point[c] = lo + frac * (hi - lo);
        }
        if domain.contains(&point) {
            let v = (density)(&point);
            if v < 0.0 || v.is_nan() {
                return Err(Error::Domain(format!(
                    "prior density negative or undefined at {point:?}: {v}"
                )));
            }
        }
        let mut c = 0;
        loop {
            idx[c] += 1;
            if idx[c] < probes {
                break;
            }
            idx[c] = 0;
            c += 1;
            if c == idx.len() {
                return Ok(());
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Functionals
// ---------------------------------------------------------------------------

type ValueFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type JacobianFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

/// A C1 map on the parameter domain, optionally with an analytic jacobian
/// and a declared Lipschitz constant.
#[derive(Clone)]
pub struct Functional {
    dim_in: usize,
    dim_out: usize,
    value: ValueFn,
    jacobian: Option<JacobianFn>,
    lipschitz: Option<f64>,
}

impl std::fmt::Debug for Functional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Functional")
            .field("dim_in", &self.dim_in)
            .field("dim_out", &self.dim_out)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Functional {
    pub fn scalar(dim_in: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Functional {
            dim_in,
            dim_out: 1,
            value: Arc::new(move |t| vec![f(t)]),
            jacobian: None,
            lipschitz: None,
        }
    }

    pub fn scalar_with_gradient(
        dim_in: usize,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Functional {
            dim_in,
            dim_out: 1,
            value: Arc::new(move |t| vec![f(t)]),
            jacobian: Some(Arc::new(move |t| {
                let g = grad(t);
                Matrix::from_rows(&[&g])
            })),
            lipschitz: None,
        }
    }

    /// Projection theta -> theta_i; 1-Lipschitz.
    pub fn coordinate(dim_in: usize, i: usize) -> Self {
        assert!(i < dim_in);
        let mut grad = vec![0.0; dim_in];
        grad[i] = 1.0;
        Functional {
            dim_in,
            dim_out: 1,
            value: Arc::new(move |t| vec![t[i]]),
            jacobian: Some(Arc::new(move |_| Matrix::from_rows(&[&grad]))),
            lipschitz: Some(1.0),
        }
    }

    pub fn constant(dim_in: usize, c: f64) -> Self {
        Functional {
            dim_in,
            dim_out: 1,
            value: Arc::new(move |_| vec![c]),
            jacobian: Some(Arc::new(move |_| Matrix::zeros(1, dim_in))),
            lipschitz: Some(0.0),
        }
    }

    /// Univariate map for bias propagation.
    pub fn univariate(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
    ) -> Self {
        Functional {
            dim_in: 1,
            dim_out: 1,
            value: Arc::new(move |t| vec![f(t[0])]),
            jacobian: df.map(|d| -> JacobianFn {
                Arc::new(move |t: &[f64]| Matrix::from_rows(&[&[d(t[0])]]))
            }),
            lipschitz: None,
        }
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn value_at(&self, theta: &[f64]) -> Vec<f64> {
        (self.value)(theta)
    }

    pub fn scalar_at(&self, theta: &[f64]) -> Result<f64> {
        if self.dim_out != 1 {
            return Err(Error::Domain(format!(
                "expected scalar functional, output dimension is {}",
                self.dim_out
            )));
        }
        Ok((self.value)(theta)[0])
    }

    /// Analytic jacobian when present, else boundary-checked central
    /// differences with step cbrt(eps) * max(1, |t|).
    pub fn jacobian_at(&self, theta: &[f64], domain: &ParameterDomain) -> Result<Matrix> {
        if theta.len() != self.dim_in {
            return Err(Error::Domain(format!(
                "functional expects {} inputs, got {}",
                self.dim_in,
                theta.len()
            )));
        }
        if let Some(j) = &self.jacobian {
            return Ok(j(theta));
        }
        self.fd_jacobian(theta, domain)
    }

    pub fn fd_jacobian(&self, theta: &[f64], domain: &ParameterDomain) -> Result<Matrix> {
        let c = f64::EPSILON.cbrt();
        let mut out = Matrix::zeros(self.dim_out, self.dim_in);
        let mut shifted = theta.to_vec();
        for i in 0..self.dim_in {
            let h = c * theta[i].abs().max(1.0);
            if !(theta[i] - h > domain.lower()[i] && theta[i] + h < domain.upper()[i]) {
                return Err(Error::Boundary {
                    index: i,
                    value: theta[i],
                    step: h,
                });
            }
            shifted[i] = theta[i] + h;
            let up = (self.value)(&shifted);
            shifted[i] = theta[i] - h;
            let down = (self.value)(&shifted);
            shifted[i] = theta[i];
            for r in 0..self.dim_out {
                out[(r, i)] = (up[r] - down[r]) / (2.0 * h);
            }
        }
        Ok(out)
    }

    /// Gradient row of a scalar functional.
    pub fn gradient_at(&self, theta: &[f64], domain: &ParameterDomain) -> Result<Vec<f64>> {
        if self.dim_out != 1 {
            return Err(Error::Domain("gradient of a non-scalar functional".into()));
        }
        let j = self.jacobian_at(theta, domain)?;
        Ok((0..self.dim_in).map(|i| j[(0, i)]).collect())
    }

    /// Largest relative gap between the analytic jacobian and finite
    /// differences; zero when no analytic jacobian is declared.
    pub fn jacobian_gap(&self, theta: &[f64], domain: &ParameterDomain) -> Result<f64> {
        let Some(j) = &self.jacobian else {
            return Ok(0.0);
        };
        let analytic = j(theta);
        let fd = self.fd_jacobian(theta, domain)?;
        let mut gap: f64 = 0.0;
        for r in 0..self.dim_out {
            for c in 0..self.dim_in {
                let denom = analytic[(r, c)].abs().max(1.0);
                gap = gap.max((analytic[(r, c)] - fd[(r, c)]).abs() / denom);
            }
        }
        Ok(gap)
    }
}

// ---------------------------------------------------------------------------
// Error structures
// ---------------------------------------------------------------------------

/// Which construction produced a structure; the closability argument rides
/// on the construction, so this doubles as the asserted basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    FundamentalIdentification,
    Image,
    Product,
    Explicit,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Provenance::FundamentalIdentification => "fundamental-identification",
            Provenance::Image => "image",
            Provenance::Product => "product",
            Provenance::Explicit => "explicit",
        };
        f.write_str(s)
    }
}

/// (Theta, prior, Gamma): the squared-error calculus over a parameter
/// domain. Gamma evaluations return symmetric positive semi-definite
/// matrices; the square-root field satisfies R * R^T = Gamma.
#[derive(Clone)]
pub struct ErrorStructure {
    pub(crate) domain: ParameterDomain,
    pub(crate) prior: PriorMeasure,
    pub(crate) gamma_field: GammaField,
    pub(crate) provenance: Provenance,
}

impl std::fmt::Debug for ErrorStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ErrorStructure")
            .field("domain", &self.domain)
            .field("provenance", &self.provenance)
            .finish()
    }
}

/// Build the structure whose Gamma is the inverse Fisher information of
/// the model, probing regularity at prior-sampled points first.
pub fn from_model<M: Model + 'static>(
    model: M,
    prior: PriorMeasure,
    fisher_method: FisherMethod,
) -> Result<ErrorStructure> {
    if model.dim_param() != prior.domain().dim() {
        return Err(Error::Domain(format!(
            "model has {} parameters but the prior lives in dimension {}",
            model.dim_param(),
            prior.domain().dim()
        )));
    }
    let domain = model.domain().clone();
    let model = Arc::new(model);

    let probes = prior.sample(PROBE_COUNT, PROBE_SEED);
    for row in probes.rows() {
        let fm = fisher::fisher(&*model, row, fisher_method)?;
        let report = fisher::check_regularity(&fm)?;
        if !report.pass {
            return Err(Error::Regularity(format!(
                "information matrix is singular at theta = {row:?} (lambda_min = {:.3e})",
                report.lambda_min
            )));
        }
    }

    let field_model = Arc::clone(&model);
    let gamma_field: GammaField = Arc::new(move |theta: &[f64]| {
        let fm = fisher::fisher(&*field_model, theta, fisher_method)?;
        linalg::spd_inverse(&fm.matrix)
    });
    Ok(ErrorStructure {
        domain,
        prior,
        gamma_field,
        provenance: Provenance::FundamentalIdentification,
    })
}

impl ErrorStructure {
    /// Wrap a user-supplied Gamma field, probing symmetry and positive
    /// semi-definiteness at prior-sampled points.
    pub fn explicit(
        domain: ParameterDomain,
        prior: PriorMeasure,
        gamma: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Result<Self> {
        let gamma_field: GammaField = Arc::new(move |t: &[f64]| Ok(gamma(t)));
        let s = ErrorStructure {
            domain,
            prior,
            gamma_field,
            provenance: Provenance::Explicit,
        };
        s.probe_field()?;
        Ok(s)
    }

    pub(crate) fn assembled(
        domain: ParameterDomain,
        prior: PriorMeasure,
        gamma_field: GammaField,
        provenance: Provenance,
    ) -> Result<Self> {
        let s = ErrorStructure {
            domain,
            prior,
            gamma_field,
            provenance,
        };
        s.probe_field()?;
        Ok(s)
    }

    fn probe_field(&self) -> Result<()> {
        let probes = self.prior.sample(PROBE_COUNT, PROBE_SEED);
        for row in probes.rows() {
            let g = (self.gamma_field)(row)?;
            let (values, _) = linalg::sym_eigen(&g.symmetrized())?;
            let max = values.last().copied().unwrap_or(0.0);
            let min = values.first().copied().unwrap_or(0.0);
            if min < -1e-10 * max.abs().max(1e-300) {
                return Err(Error::Regularity(format!(
                    "squared-error field is not positive semi-definite at {row:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    pub fn prior(&self) -> &PriorMeasure {
        &self.prior
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Gamma(theta) as a matrix.
    pub fn gamma_matrix(&self, theta: &[f64]) -> Result<Matrix> {
        self.domain.check_contains(theta)?;
        (self.gamma_field)(theta)
    }

    /// R(theta) with R * R^T = Gamma(theta), the spectral square root.
    pub fn root_field(&self, theta: &[f64]) -> Result<Matrix> {
        let g = self.gamma_matrix(theta)?;
        linalg::sym_sqrt(&g.symmetrized())
    }

    /// The bilinear form Gamma[F, G](theta) = grad F . Gamma . grad G.
    pub fn gamma(&self, f: &Functional, g: &Functional, theta: &[f64]) -> Result<f64> {
        if f.dim_out() != 1 || g.dim_out() != 1 {
            return Err(Error::Domain("gamma takes scalar functionals".into()));
        }
        if f.dim_in() != self.dim() || g.dim_in() != self.dim() {
            return Err(Error::Domain(format!(
                "functional arity {} / {} does not match structure dimension {}",
                f.dim_in(),
                g.dim_in(),
                self.dim()
            )));
        }
        self.domain.check_contains(theta)?;
        let gf = f.gradient_at(theta, &self.domain)?;
        let gg = g.gradient_at(theta, &self.domain)?;
        let m = (self.gamma_field)(theta)?;
        Ok(m.quadratic_form(&gf, &gg))
    }

    /// Quadratic form Gamma[F, F](theta).
    pub fn gamma_quadratic(&self, f: &Functional, theta: &[f64]) -> Result<f64> {
        self.gamma(f, f, theta)
    }

    /// Gradient operator: R(theta)^T grad F, whose squared norm is
    /// Gamma[F, F](theta).
    pub fn gradient(&self, f: &Functional, theta: &[f64]) -> Result<Vec<f64>> {
        if f.dim_out() != 1 {
            return Err(Error::Domain("gradient takes scalar functionals".into()));
        }
        let grad = f.gradient_at(theta, &self.domain)?;
        let root = self.root_field(theta)?;
        Ok(root.transpose().matvec(&grad))
    }

    /// Does Gamma[F]^(1/2) <= sum_i Gamma[theta_i]^(1/2) hold at theta?
    ///
    /// F must be a contraction for the coordinate-sum metric,
    /// |F(x) - F(y)| <= sum_i |x_i - y_i|; that declaration is probed on
    /// prior-sampled pairs and a violation is a precondition error.
    pub fn check_contraction(&self, f: &Functional, theta: &[f64]) -> Result<bool> {
        let d = self.dim();
        if f.dim_in() != d || f.dim_out() != 1 {
            return Err(Error::Domain(
                "contraction check takes scalar functionals".into(),
            ));
        }
        let pairs = 50;
        let draws = self.prior.sample(2 * pairs, PROBE_SEED ^ 0xc0de);
        for p in 0..pairs {
            let x = draws.row(2 * p);
            let y = draws.row(2 * p + 1);
            let lhs = (f.scalar_at(x)? - f.scalar_at(y)?).abs();
            let rhs: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
            if lhs > rhs * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::Domain(format!(
                    "functional is not a coordinate-sum contraction: |dF| = {lhs} > {rhs}"
                )));
            }
        }
        let lhs = self.gamma_quadratic(f, theta)?.max(0.0).sqrt();
        let mut rhs = 0.0;
        for i in 0..d {
            let coord = Functional::coordinate(d, i);
            rhs += self.gamma_quadratic(&coord, theta)?.max(0.0).sqrt();
        }
        Ok(lhs <= rhs + 1e-10)
    }
}

/// Second-order bias transport: F'(u) * bias + F''(u)/2 * gamma.
///
/// F'' comes from the analytic jacobian when declared (differenced with
/// step cbrt(eps)), else from a second central difference of the value
/// with step eps^(1/4) * max(1, |u|).
pub fn propagate_bias(f: &Functional, u: f64, bias_u: f64, gamma_u: f64) -> Result<f64> {
    if f.dim_in() != 1 || f.dim_out() != 1 {
        return Err(Error::Domain("bias propagation is univariate".into()));
    }
    let point = [u];
    let (fp, fpp) = match &f.jacobian {
        Some(j) => {
            let h = f64::EPSILON.cbrt() * u.abs().max(1.0);
            let fp = j(&point)[(0, 0)];
            let fpp = (j(&[u + h])[(0, 0)] - j(&[u - h])[(0, 0)]) / (2.0 * h);
            (fp, fpp)
        }
        None => {
            let h = f64::EPSILON.powf(0.25) * u.abs().max(1.0);
            let fu = (f.value)(&point)[0];
            let up = (f.value)(&[u + h])[0];
            let down = (f.value)(&[u - h])[0];
            let fp = (up - down) / (2.0 * h);
            let fpp = (up - 2.0 * fu + down) / (h * h);
            (fp, fpp)
        }
    };
    let out = fp * bias_u + 0.5 * fpp * gamma_u;
    if !out.is_finite() {
        return Err(Error::NonFinite(format!("propagated bias = {out}")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample, LogisticLocation, Mixture, NormalLocation, NormalScale};
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn punctured() -> ParameterDomain {
        ParameterDomain::interval(-1.0, 1.0)
            .unwrap()
            .exclude(vec![0.0])
            .unwrap()
    }

    #[test]
    fn uniform_prior_witness_and_density() {
        let p = PriorMeasure::uniform(punctured()).unwrap();
        assert_eq!(p.normalization_witness(), 1.0);
        assert_eq!(p.density(&[0.3]), 0.5);
        assert_eq!(p.density(&[0.0]), 0.0);
        assert_eq!(p.density(&[2.0]), 0.0);
        let s = p.sample(10_000, 3);
        assert_eq!(s, p.sample(10_000, 3));
        let mean = s.scalars().unwrap().iter().sum::<f64>() / s.len() as f64;
        assert!(mean.abs() < 0.03);
    }

    #[test]
    fn tilted_prior_normalizes_and_samples() {
        let domain = ParameterDomain::interval(-1.0, 1.0).unwrap();
        let p = PriorMeasure::from_unnormalized(domain, |t| 1.0 + 0.5 * t).unwrap();
        assert_relative_eq!(p.normalization_witness(), 1.0, epsilon = 1e-8);
        // q(t) = (1 + t/2)/2 on ]-1,1[, so E[t] = 1/6.
        assert_relative_eq!(p.density(&[0.0]), 0.5, epsilon = 1e-12);
        let s = p.sample(40_000, 11);
        let mean = s.scalars().unwrap().iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 1.0 / 6.0).abs() < 0.012, "mean {mean}");
    }

    #[test]
    fn negative_prior_density_rejected() {
        let domain = ParameterDomain::interval(-1.0, 1.0).unwrap();
        assert!(PriorMeasure::from_unnormalized(domain, |t| t).is_err());
    }

    #[test]
    fn raw_prior_must_normalize() {
        let domain = ParameterDomain::interval(0.0, 1.0).unwrap();
        let result = PriorMeasure::new_raw(
            domain,
            |_| 2.0,
            |count, _| Sample::from_scalars(vec![0.5; count]),
        );
        assert!(matches!(result, Err(Error::Domain(_))));
    }

    #[test]
    fn product_prior_factorizes() {
        let a = PriorMeasure::uniform(ParameterDomain::interval(0.0, 2.0).unwrap()).unwrap();
        let b = PriorMeasure::uniform(ParameterDomain::interval(-1.0, 1.0).unwrap()).unwrap();
        let p = PriorMeasure::product(&a, &b).unwrap();
        assert_eq!(p.domain().dim(), 2);
        assert_relative_eq!(p.density(&[1.0, 0.0]), 0.25, epsilon = 1e-14);
        let s = p.sample(1000, 9);
        assert_eq!(s.dim(), 2);
        assert!(s.rows().all(|r| p.domain().contains(r)));
    }

    #[test]
    fn structure_from_location_model_has_unit_gamma() {
        let domain = punctured();
        let model = NormalLocation::new(domain.clone()).unwrap();
        let prior = PriorMeasure::uniform(domain).unwrap();
        let s = from_model(model, prior, FisherMethod::Quadrature).unwrap();
        assert_eq!(s.provenance(), Provenance::FundamentalIdentification);
        for t in [-0.7, -0.2, 0.4, 0.9] {
            let g = s.gamma_matrix(&[t]).unwrap();
            assert_relative_eq!(g[(0, 0)], 1.0, epsilon = 1e-9);
        }
        assert!(s.gamma_matrix(&[0.0]).is_err());
    }

    #[test]
    fn structure_from_scale_model() {
        let domain = ParameterDomain::interval(0.5, 2.0).unwrap();
        let model = NormalScale::new(domain.clone()).unwrap();
        let prior = PriorMeasure::uniform(domain).unwrap();
        let s = from_model(model, prior, FisherMethod::Quadrature).unwrap();
        let g = s.gamma_matrix(&[1.0]).unwrap();
        assert_relative_eq!(g[(0, 0)], 0.5, epsilon = 1e-9);
    }

    /// N(mu, sigma^2) with both parameters free; its information matrix is
    /// diag(1/sigma^2, 2/sigma^2).
    struct LocationScale {
        domain: ParameterDomain,
        support: crate::model::Support,
    }

    impl Model for LocationScale {
        fn dim_param(&self) -> usize {
            2
        }
        fn dim_obs(&self) -> usize {
            1
        }
        fn domain(&self) -> &ParameterDomain {
            &self.domain
        }
        fn support(&self) -> &crate::model::Support {
            &self.support
        }
        fn log_density_raw(&self, x: &[f64], theta: &[f64]) -> f64 {
            let z = (x[0] - theta[0]) / theta[1];
            -0.5 * z * z - theta[1].ln() - 0.918_938_533_204_672_7
        }
        fn analytic_score(&self, x: &[f64], theta: &[f64]) -> Option<Vec<f64>> {
            let (mu, sg) = (theta[0], theta[1]);
            let z = (x[0] - mu) / sg;
            Some(vec![z / sg, (z * z - 1.0) / sg])
        }
        fn sample_raw(&self, theta: &[f64], n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Sample {
            let mut out = Sample::with_capacity(1, n);
            for _ in 0..n {
                let z: f64 = StandardNormal.sample(rng);
                out.push_row(&[theta[0] + theta[1] * z]);
            }
            out
        }
    }

    #[test]
    fn two_parameter_structure_inverts_diagonal_information() {
        let domain = ParameterDomain::rectangle(vec![-1.0, 0.5], vec![1.0, 2.0]).unwrap();
        let model = LocationScale {
            domain: domain.clone(),
            support: crate::model::Support::real_line(1),
        };
        let prior = PriorMeasure::uniform(domain).unwrap();
        let s = from_model(model, prior, FisherMethod::Quadrature).unwrap();
        let sg = 1.3;
        let g = s.gamma_matrix(&[0.2, sg]).unwrap();
        assert_relative_eq!(g[(0, 0)], sg * sg, epsilon = 1e-7);
        assert_relative_eq!(g[(1, 1)], sg * sg / 2.0, epsilon = 1e-7);
        assert!(g[(0, 1)].abs() < 1e-8);
    }

    #[test]
    fn singular_information_is_rejected_by_name() {
        // Mixture family at a: J stays positive, so force singularity with
        // a constant-in-theta density.
        struct Flat(ParameterDomain, crate::model::Support);
        impl Model for Flat {
            fn dim_param(&self) -> usize {
                1
            }
            fn dim_obs(&self) -> usize {
                1
            }
            fn domain(&self) -> &ParameterDomain {
                &self.0
            }
            fn support(&self) -> &crate::model::Support {
                &self.1
            }
            fn log_density_raw(&self, x: &[f64], _theta: &[f64]) -> f64 {
                -0.5 * x[0] * x[0] - 0.918_938_533_204_672_7
            }
            fn sample_raw(
                &self,
                _theta: &[f64],
                n: usize,
                rng: &mut rand_chacha::ChaCha8Rng,
            ) -> Sample {
                let mut out = Sample::with_capacity(1, n);
                for _ in 0..n {
                    let z: f64 = StandardNormal.sample(rng);
                    out.push_row(&[z]);
                }
                out
            }
        }
        let domain = ParameterDomain::interval(-1.0, 1.0).unwrap();
        let model = Flat(domain.clone(), crate::model::Support::real_line(1));
        let prior = PriorMeasure::uniform(domain).unwrap();
        let err = from_model(model, prior, FisherMethod::Quadrature).unwrap_err();
        match err {
            Error::Regularity(msg) => assert!(msg.contains("theta"), "message: {msg}"),
            other => panic!("expected regularity error, got {other:?}"),
        }
    }

    fn identity_structure_2d() -> ErrorStructure {
        let domain = ParameterDomain::rectangle(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
        let prior = PriorMeasure::uniform(domain.clone()).unwrap();
        ErrorStructure::explicit(domain, prior, |_| Matrix::identity(2)).unwrap()
    }

    #[test]
    fn gamma_on_identity_field() {
        let s = identity_structure_2d();
        let sum = Functional::scalar_with_gradient(2, |t| t[0] + t[1], |_| vec![1.0, 1.0]);
        assert_relative_eq!(
            s.gamma(&sum, &sum, &[0.4, -1.0]).unwrap(),
            2.0,
            epsilon = 1e-12
        );

        let prod = Functional::scalar(2, |t| t[0] * t[1]);
        let theta = [0.7, -1.2];
        let got = s.gamma(&prod, &prod, &theta).unwrap();
        assert_relative_eq!(
            got,
            theta[1] * theta[1] + theta[0] * theta[0],
            epsilon = 1e-8
        );

        let c = Functional::constant(2, 5.0);
        assert_eq!(s.gamma(&c, &c, &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn gradient_examples() {
        let d1 = ParameterDomain::interval(-3.0, 3.0).unwrap();
        let prior = PriorMeasure::uniform(d1.clone()).unwrap();
        let s4 = ErrorStructure::explicit(d1, prior, |_| Matrix::from_rows(&[&[4.0]])).unwrap();
        let id = Functional::coordinate(1, 0);
        let g = s4.gradient(&id, &[0.3]).unwrap();
        assert_relative_eq!(g[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(
            g[0] * g[0],
            s4.gamma(&id, &id, &[0.3]).unwrap(),
            epsilon = 1e-12
        );

        let domain = ParameterDomain::rectangle(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
        let prior2 = PriorMeasure::uniform(domain.clone()).unwrap();
        let s =
            ErrorStructure::explicit(domain, prior2, |_| Matrix::diagonal(&[1.0, 0.25])).unwrap();
        let sum = Functional::scalar_with_gradient(2, |t| t[0] + t[1], |_| vec![1.0, 1.0]);
        let g = s.gradient(&sum, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(g[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(g[1], 0.5, epsilon = 1e-12);
        let norm2: f64 = g.iter().map(|x| x * x).sum();
        assert_relative_eq!(norm2, 1.25, epsilon = 1e-12);

        let c = Functional::constant(2, -2.0);
        assert_eq!(s.gradient(&c, &[0.1, 0.1]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn root_field_squares_to_gamma() {
        let domain = ParameterDomain::rectangle(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let prior = PriorMeasure::uniform(domain.clone()).unwrap();
        let s = ErrorStructure::explicit(domain, prior, |t| {
            Matrix::from_rows(&[&[1.0 + t[0] * t[0], 0.3], &[0.3, 2.0]])
        })
        .unwrap();
        for t in [[-1.5, 0.0], [0.2, 1.0], [1.9, -1.9]] {
            let g = s.gamma_matrix(&t).unwrap();
            let r = s.root_field(&t).unwrap();
            let sq = r.matmul(&r.transpose());
            for i in 0..2 {
                for j in 0..2 {
                    assert!((sq[(i, j)] - g[(i, j)]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn explicit_field_must_be_psd() {
        let domain = ParameterDomain::interval(-1.0, 1.0).unwrap();
        let prior = PriorMeasure::uniform(domain.clone()).unwrap();
        let err = ErrorStructure::explicit(domain, prior, |_| Matrix::from_rows(&[&[-1.0]]));
        assert!(matches!(err, Err(Error::Regularity(_))));
    }

    #[test]
    fn functional_jacobian_matches_finite_differences() {
        let domain = ParameterDomain::rectangle(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let f = Functional::scalar_with_gradient(
            2,
            |t| (t[0] * t[1]).sin() + t[0],
            |t| vec![t[1] * (t[0] * t[1]).cos() + 1.0, t[0] * (t[0] * t[1]).cos()],
        );
        for t in [[0.3, 0.8], [-1.1, 0.5], [1.4, -1.4]] {
            assert!(f.jacobian_gap(&t, &domain).unwrap() < 1e-5);
        }
    }

    #[test]
    fn bias_propagation_examples() {
        let linear = Functional::univariate(|u| 3.0 * u + 1.0, None);
        assert_relative_eq!(
            propagate_bias(&linear, 0.4, 0.7, 5.0).unwrap(),
            2.1,
            epsilon = 1e-6
        );

        let square = Functional::univariate(|u| u * u, Some(Box::new(|u| 2.0 * u)));
        assert_relative_eq!(
            propagate_bias(&square, 3.0, 0.0, 2.0).unwrap(),
            2.0,
            epsilon = 1e-9
        );

        let square_fd = Functional::univariate(|u| u * u, None);
        assert_relative_eq!(
            propagate_bias(&square_fd, 3.0, 0.0, 2.0).unwrap(),
            2.0,
            epsilon = 1e-6
        );

        let id = Functional::univariate(|u| u, Some(Box::new(|_| 1.0)));
        assert_relative_eq!(
            propagate_bias(&id, 1.7, 0.33, 9.0).unwrap(),
            0.33,
            epsilon = 1e-12
        );
    }

    #[test]
    fn bias_propagation_matches_noise_expansion() {
        // E[(F(u + eps Y) + F(u - eps Y))/2 - F(u)] / eps^2 estimates
        // F''(u)/2 * Var Y for centered Y.
        let square = Functional::univariate(|u| u * u, Some(Box::new(|u| 2.0 * u)));
        let u = 3.0;
        let gamma = 2.0;
        let predicted = propagate_bias(&square, u, 0.0, gamma).unwrap();

        let m = NormalLocation::on(-10.0, 10.0).unwrap();
        let draws = sample(&m, &[0.0], 100_000, 31).unwrap();
        let eps = 1e-3;
        let scale = gamma.sqrt();
        let mut acc = 0.0;
        for &z in draws.scalars().unwrap() {
            let y = scale * z;
            let up = (u + eps * y) * (u + eps * y);
            let down = (u - eps * y) * (u - eps * y);
            acc += 0.5 * (up + down) - u * u;
        }
        let estimate = acc / (draws.len() as f64 * eps * eps);
        let se = gamma * std::f64::consts::SQRT_2 / (draws.len() as f64).sqrt();
        assert!(
            (estimate - predicted).abs() <= 4.0 * se,
            "estimate {estimate} vs predicted {predicted}"
        );
    }

    #[test]
    fn contraction_check_examples() {
        let s = identity_structure_2d();
        let proj = Functional::coordinate(2, 0);
        assert!(s.check_contraction(&proj, &[0.5, 0.5]).unwrap());
        let lhs = s.gamma_quadratic(&proj, &[0.5, 0.5]).unwrap().sqrt();
        assert_relative_eq!(lhs, 1.0, epsilon = 1e-12);

        let smooth_max = Functional::scalar(2, |t| t[0].max(t[1])).with_lipschitz(1.0);
        // Off the diagonal the finite-difference gradient is clean.
        assert!(s.check_contraction(&smooth_max, &[0.5, -0.3]).unwrap());

        let doubled = Functional::scalar(2, |t| 2.0 * t[0]);
        assert!(matches!(
            s.check_contraction(&doubled, &[0.1, 0.1]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn contraction_holds_at_random_points() {
        let s = identity_structure_2d();
        let smooth_max = Functional::scalar(2, |t| t[0].max(t[1]));
        let pts = s.prior().sample(50, 77);
        for row in pts.rows() {
            if (row[0] - row[1]).abs() < 0.01 {
                continue;
            }
            assert!(s.check_contraction(&smooth_max, row).unwrap());
        }
    }

    #[test]
    fn gamma_checks_arity_and_interior() {
        let s = identity_structure_2d();
        let f1 = Functional::coordinate(1, 0);
        assert!(s.gamma(&f1, &f1, &[0.0, 0.0]).is_err());
        let f2 = Functional::coordinate(2, 0);
        assert!(s.gamma(&f2, &f2, &[5.0, 0.0]).is_err());
    }

    #[test]
    fn monte_carlo_backed_structure_is_usable() {
        let domain = ParameterDomain::interval(0.1, 0.9).unwrap();
        let model = Mixture::new(domain.clone()).unwrap();
        let prior = PriorMeasure::uniform(domain).unwrap();
        let s = from_model(
            model,
            prior,
            FisherMethod::MonteCarlo { n: 20_000, seed: 4 },
        )
        .unwrap();
        let g = s.gamma_matrix(&[0.5]).unwrap();
        assert!(g[(0, 0)].is_finite() && g[(0, 0)] > 0.0);
        let again = s.gamma_matrix(&[0.5]).unwrap();
        assert_eq!(g[(0, 0)].to_bits(), again[(0, 0)].to_bits());
    }

    #[test]
    fn logistic_structure_gamma_is_three() {
        let domain = ParameterDomain::interval(-2.0, 2.0).unwrap();
        let model = LogisticLocation::new(domain.clone()).unwrap();
        let prior = PriorMeasure::uniform(domain).unwrap();
        let s = from_model(model, prior, FisherMethod::Quadrature).unwrap();
        let g = s.gamma_matrix(&[0.5]).unwrap();
        assert_relative_eq!(g[(0, 0)], 3.0, epsilon = 1e-8);
    }
}
