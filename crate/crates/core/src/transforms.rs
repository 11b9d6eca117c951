//! Images of error structures under parameter maps, and products of
//! independent structures.
//!
//! For an injective map the image field is the Jacobian sandwich
//! psi' Gamma psi'^t evaluated at the unique antecedent. For a
//! non-injective piecewise-monotone map the image field at `a` is the
//! prior-weighted barycenter of the per-branch sandwiches over the
//! antecedents of `a`, available in closed form branch by branch or as
//! a kernel-regression Monte Carlo estimate.

use std::ops::Deref;
use std::sync::Arc;

use rand_distr::{Distribution, Poisson};

use crate::branch::BranchMap;
use crate::domain::ParameterDomain;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;
use crate::structure::{
    DensityFn, ErrorStructure, Functional, GammaField, PriorMeasure, Provenance, SamplerFn,
};

/// Minimum Monte Carlo sample size for the kernel estimator.
pub const KERNEL_MC_MIN_SAMPLES: usize = 10_000;

/// Minimum effective sample size inside the kernel window.
pub const KERNEL_MIN_ESS: f64 = 50.0;

/// Kernel evaluations are cut off beyond this many bandwidths; the
/// Gaussian weight there is below 1e-12.
const KERNEL_CUTOFF: f64 = 8.0;

/// Bootstrap resamples behind the kernel standard error.
const BOOTSTRAP_RESAMPLES: usize = 100;

// ---------------------------------------------------------------------------
// Image structures
// ---------------------------------------------------------------------------

/// How the image field of a structure is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaMode {
    /// Injective map: one antecedent, exact Jacobian sandwich.
    ClosedForm,
    /// Non-injective map: exact barycenter over the antecedent branches.
    BranchExact,
    /// Non-injective map with sampled prior: kernel-regression estimate.
    KernelMc,
}

impl std::fmt::Display for GammaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            GammaMode::ClosedForm => "closed-form",
            GammaMode::BranchExact => "branch-exact",
            GammaMode::KernelMc => "kernel-mc",
        };
        f.write_str(s)
    }
}

/// An error structure obtained as the image of another one, keeping the
/// source structure and the map used to push it forward.
#[derive(Clone)]
pub struct ImageStructure {
    structure: ErrorStructure,
    gamma_mode: GammaMode,
    source: ErrorStructure,
    maps: Vec<BranchMap>,
}

impl std::fmt::Debug for ImageStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageStructure")
            .field("structure", &self.structure)
            .field("gamma_mode", &self.gamma_mode)
            .field("maps", &self.maps.len())
            .finish()
    }
}

impl Deref for ImageStructure {
    type Target = ErrorStructure;

    fn deref(&self) -> &ErrorStructure {
        &self.structure
    }
}

impl ImageStructure {
    pub fn gamma_mode(&self) -> GammaMode {
        self.gamma_mode
    }

    pub fn source(&self) -> &ErrorStructure {
        &self.source
    }

    /// The map behind a one-dimensional image.
    pub fn map(&self) -> &BranchMap {
        &self.maps[0]
    }

    /// One map per coordinate for componentwise images.
    pub fn maps(&self) -> &[BranchMap] {
        &self.maps
    }

    pub fn structure(&self) -> &ErrorStructure {
        &self.structure
    }

    pub fn into_structure(self) -> ErrorStructure {
        self.structure
    }
}

fn same_interval(a: &ParameterDomain, b: &ParameterDomain) -> bool {
    a.lower() == b.lower() && a.upper() == b.upper()
}

/// Image rectangle plus the source's excluded points pushed through the
/// maps; mapped points landing on the image boundary are dropped.
fn mapped_image_domain(source: &ParameterDomain, maps: &[BranchMap]) -> Result<ParameterDomain> {
    let mut domain = maps[0].image_domain().clone();
    for m in &maps[1..] {
        domain = domain.product(m.image_domain());
    }
    let image_rect = ParameterDomain::rectangle(domain.lower().to_vec(), domain.upper().to_vec())?;
    let offsets: Vec<usize> = maps
        .iter()
        .scan(0usize, |acc, m| {
            let o = *acc;
            *acc += m.theta_domain().dim();
            Some(o)
        })
        .collect();
    let mut out = image_rect;
    'points: for e in source.excluded_points() {
        let mut coords = Vec::with_capacity(e.coords.len());
        for (k, &t) in e.coords.iter().enumerate() {
            let axis = match offsets.iter().rposition(|&o| o <= e.offset + k) {
                Some(i) => i,
                None => continue 'points,
            };
            let a = match maps[axis].forward(t) {
                Ok(a) => a,
                Err(_) => continue 'points,
            };
            let (lo, hi) = (out.lower()[e.offset + k], out.upper()[e.offset + k]);
            if !(a.is_finite() && lo < a && a < hi) {
                continue 'points;
            }
            coords.push(a);
        }
        out = out.exclude_slice(e.offset, coords)?;
    }
    Ok(out)
}

/// Prior of the image: density through the change of variables, sampler
/// by pushing source draws through the maps.
fn image_prior(
    source: &ErrorStructure,
    maps: Arc<Vec<BranchMap>>,
    domain: ParameterDomain,
) -> Result<PriorMeasure> {
    let src_prior = source.prior().clone();
    let maps_d = Arc::clone(&maps);
    let density: DensityFn = Arc::new(move |a: &[f64]| {
        let mut total = 0.0;
        if maps_d.len() == 1 {
            let ants = match maps_d[0].antecedents(a[0]) {
                Ok(v) => v,
                Err(_) => return 0.0,
            };
            for ant in ants {
                let w = src_prior.density(&[ant.theta]) / ant.derivative.abs();
                if w.is_finite() {
                    total += w;
                }
            }
        } else {
            let mut theta = Vec::with_capacity(maps_d.len());
            let mut jac = 1.0;
            for (m, &ai) in maps_d.iter().zip(a) {
                let ants = match m.antecedents(ai) {
                    Ok(v) => v,
                    Err(_) => return 0.0,
                };
                theta.push(ants[0].theta);
                jac *= ants[0].derivative.abs();
            }
            let w = src_prior.density(&theta) / jac;
            if w.is_finite() {
                total = w;
            }
        }
        total
    });
    let src_sampler = source.prior().clone();
    let maps_s = Arc::clone(&maps);
    let sampler: SamplerFn = Arc::new(move |count: usize, seed: u64| {
        let draws = src_sampler.sample(count, seed);
        let dim: usize = maps_s.len();
        let mut out = crate::model::Sample::with_capacity(dim, count);
        for row in draws.rows() {
            let mut image = Vec::with_capacity(dim);
            let mut offset = 0;
            for m in maps_s.iter() {
                let d = m.theta_domain().dim();
                let a = m
                    .forward(row[offset])
                    .expect("prior draw lies inside the map domain");
                image.push(a);
                offset += d;
            }
            out.push_row(&image);
        }
        out
    });
    PriorMeasure::new_raw(
        domain,
        move |a: &[f64]| density(a),
        move |count, seed| sampler(count, seed),
    )
}

/// Image of a one-dimensional structure under an injective map.
///
/// The image field is Gamma_img(a) = psi'(theta)^2 Gamma(theta) at the
/// unique antecedent theta = psi^{-1}(a), zero wherever psi' vanishes.
pub fn image_injective(structure: &ErrorStructure, psi: &BranchMap) -> Result<ImageStructure> {
    if structure.dim() != 1 {
        return Err(Error::Unsupported(
            "injective images are one-dimensional; use product plus componentwise images".into(),
        ));
    }
    if !psi.is_injective() {
        return Err(Error::Unsupported(format!(
            "map has {} branches; use image_conditional for non-injective maps",
            psi.branches()
        )));
    }
    if !same_interval(structure.domain(), psi.theta_domain()) {
        return Err(Error::Domain(format!(
            "map domain {:?} does not match structure domain {:?}",
            psi.theta_domain(),
            structure.domain()
        )));
    }
    let maps = Arc::new(vec![psi.clone()]);
    let domain = mapped_image_domain(structure.domain(), &maps)?;
    let prior = image_prior(structure, Arc::clone(&maps), domain.clone())?;
    let src = structure.clone();
    let psi_g = psi.clone();
    let gamma_field: GammaField = Arc::new(move |a: &[f64]| {
        let ants = psi_g.antecedents(a[0])?;
        let ant = ants[0];
        let g = src.gamma_matrix(&[ant.theta])?;
        Ok(Matrix::from_rows(&[&[ant.derivative
            * ant.derivative
            * g[(0, 0)]]]))
    });
    let image = ErrorStructure::assembled(domain, prior, gamma_field, Provenance::Image)?;
    Ok(ImageStructure {
        structure: image,
        gamma_mode: GammaMode::ClosedForm,
        source: structure.clone(),
        maps: vec![psi.clone()],
    })
}

/// Componentwise image of a product structure under one injective map
/// per coordinate.
pub fn image_componentwise(
    structure: &ErrorStructure,
    maps: &[BranchMap],
) -> Result<ImageStructure> {
    if maps.is_empty() || maps.len() != structure.dim() {
        return Err(Error::Domain(format!(
            "{} maps for a structure of dimension {}",
            maps.len(),
            structure.dim()
        )));
    }
    for (i, m) in maps.iter().enumerate() {
        if !m.is_injective() {
            return Err(Error::Unsupported(format!(
                "componentwise images need injective maps, coordinate {i} has {} branches",
                m.branches()
            )));
        }
        if m.theta_domain().dim() != 1 {
            return Err(Error::Unsupported(
                "componentwise images act coordinate by coordinate".into(),
            ));
        }
        let (lo, hi) = (structure.domain().lower()[i], structure.domain().upper()[i]);
        if m.theta_domain().lower()[0] != lo || m.theta_domain().upper()[0] != hi {
            return Err(Error::Domain(format!(
                "map {i} domain does not match structure coordinate {i} range ({lo}, {hi})"
            )));
        }
    }
    let maps_arc = Arc::new(maps.to_vec());
    let domain = mapped_image_domain(structure.domain(), &maps_arc)?;
    let prior = image_prior(structure, Arc::clone(&maps_arc), domain.clone())?;
    let src = structure.clone();
    let maps_g = Arc::clone(&maps_arc);
    let gamma_field: GammaField = Arc::new(move |a: &[f64]| {
        let k = maps_g.len();
        let mut theta = Vec::with_capacity(k);
        let mut scale = Vec::with_capacity(k);
        for (m, &ai) in maps_g.iter().zip(a) {
            let ants = m.antecedents(ai)?;
            theta.push(ants[0].theta);
            scale.push(ants[0].derivative);
        }
        let g = src.gamma_matrix(&theta)?;
        let mut out = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                out[(i, j)] = scale[i] * scale[j] * g[(i, j)];
            }
        }
        Ok(out)
    });
    let image = ErrorStructure::assembled(domain, prior, gamma_field, Provenance::Image)?;
    Ok(ImageStructure {
        structure: image,
        gamma_mode: GammaMode::ClosedForm,
        source: structure.clone(),
        maps: maps.to_vec(),
    })
}

/// Exact barycenter field of a non-injective image at `a`, before the
/// functional sandwich: sum of prior-weighted psi'^2 Gamma over the
/// antecedent branches, divided by the total weight.
pub(crate) fn conditional_gamma_id(
    structure: &ErrorStructure,
    psi: &BranchMap,
    a: f64,
) -> Result<f64> {
    let ants = psi.antecedents(a)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for ant in &ants {
        let q = structure.prior().density(&[ant.theta]);
        if q <= 0.0 {
            continue;
        }
        let t = ant.derivative.abs();
        if t == 0.0 {
            den = f64::INFINITY;
            continue;
        }
        let g = structure.gamma_matrix(&[ant.theta])?;
        num += q * t * g[(0, 0)];
        den += q / t;
    }
    if den == 0.0 {
        return Err(Error::Domain(format!(
            "prior puts no mass on the antecedents of a = {a}"
        )));
    }
    Ok(num / den)
}

/// Image of a one-dimensional structure under a piecewise-monotone map,
/// with the exact branch-barycenter field.
pub fn image_conditional(structure: &ErrorStructure, psi: &BranchMap) -> Result<ImageStructure> {
    if structure.dim() != 1 {
        return Err(Error::Unsupported(
            "conditional images are one-dimensional".into(),
        ));
    }
    if !same_interval(structure.domain(), psi.theta_domain()) {
        return Err(Error::Domain(format!(
            "map domain {:?} does not match structure domain {:?}",
            psi.theta_domain(),
            structure.domain()
        )));
    }
    let maps = Arc::new(vec![psi.clone()]);
    let domain = mapped_image_domain(structure.domain(), &maps)?;
    let prior = image_prior(structure, Arc::clone(&maps), domain.clone())?;
    let src = structure.clone();
    let psi_g = psi.clone();
    let gamma_field: GammaField = Arc::new(move |a: &[f64]| {
        let v = conditional_gamma_id(&src, &psi_g, a[0])?;
        Ok(Matrix::from_rows(&[&[v]]))
    });
    let mode = if psi.is_injective() {
        GammaMode::ClosedForm
    } else {
        GammaMode::BranchExact
    };
    let image = ErrorStructure::assembled(domain, prior, gamma_field, Provenance::Image)?;
    Ok(ImageStructure {
        structure: image,
        gamma_mode: mode,
        source: structure.clone(),
        maps: vec![psi.clone()],
    })
}

fn scalar_derivative(f: &Functional, y: f64, domain: Option<&ParameterDomain>) -> Result<f64> {
    if f.dim_in() != 1 || f.dim_out() != 1 {
        return Err(Error::Domain(
            "image functionals are scalar maps of the image variable".into(),
        ));
    }
    match domain {
        Some(d) => Ok(f.gradient_at(&[y], d)?[0]),
        None => {
            let unbounded = ParameterDomain::interval(f64::NEG_INFINITY, f64::INFINITY)?;
            Ok(f.jacobian_at(&[y], &unbounded)?[(0, 0)])
        }
    }
}

/// Exact image field applied to a functional: Gamma_psi[F](a).
pub fn image_conditional_exact(
    structure: &ErrorStructure,
    psi: &BranchMap,
    f: &Functional,
    a: f64,
) -> Result<f64> {
    if structure.dim() != 1 {
        return Err(Error::Unsupported(
            "conditional images are one-dimensional".into(),
        ));
    }
    let fp = scalar_derivative(f, a, Some(psi.image_domain()))?;
    let id = conditional_gamma_id(structure, psi, a)?;
    Ok(fp * fp * id)
}

// ---------------------------------------------------------------------------
// Kernel Monte Carlo estimator
// ---------------------------------------------------------------------------

/// Kernel-regression estimate of an image field value, with a bootstrap
/// standard error.
#[derive(Debug, Clone, Copy)]
pub struct KernelEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub bandwidth: f64,
    pub effective_sample_size: f64,
    pub n: usize,
    pub seed: u64,
}

fn silverman_bandwidth(ys: &[f64]) -> Result<f64> {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let mut sorted = ys.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |p: f64| {
        let idx = (p * (n - 1.0)).round() as usize;
        sorted[idx.min(sorted.len() - 1)]
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::Domain(
            "pushforward sample is degenerate, no bandwidth".into(),
        ));
    }
    Ok(0.9 * spread * n.powf(-0.2))
}

#[allow(clippy::too_many_arguments)]
fn kernel_mc_core(
    structure: &ErrorStructure,
    forward: &dyn Fn(f64) -> Result<f64>,
    derivative: &dyn Fn(f64) -> Result<f64>,
    f: &Functional,
    a: f64,
    n: usize,
    bandwidth: Option<f64>,
    image_domain: Option<&ParameterDomain>,
    seed: u64,
) -> Result<KernelEstimate> {
    if structure.dim() != 1 {
        return Err(Error::Unsupported(
            "kernel estimation is one-dimensional".into(),
        ));
    }
    if n < KERNEL_MC_MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "kernel estimation needs at least {KERNEL_MC_MIN_SAMPLES} draws, got {n}"
        )));
    }
    if !a.is_finite() {
        return Err(Error::Domain(format!("target point a = {a}")));
    }
    let draws = structure.prior().sample(n, rng::substream_seed(seed, 0));
    let thetas = draws
        .scalars()
        .ok_or_else(|| Error::Domain("prior sample is not scalar".into()))?;
    let mut ys = Vec::with_capacity(n);
    for &t in thetas {
        ys.push(forward(t)?);
    }
    let h = match bandwidth {
        Some(h) => h,
        None => silverman_bandwidth(&ys)?,
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("bandwidth = {h}")));
    }
    let cut = KERNEL_CUTOFF * h;
    let mut weights = Vec::new();
    let mut values = Vec::new();
    for (i, &y) in ys.iter().enumerate() {
        if (y - a).abs() > cut {
            continue;
        }
        let z = (y - a) / h;
        let k = (-0.5 * z * z).exp();
        let fp = scalar_derivative(f, y, image_domain)?;
        let dpsi = derivative(thetas[i])?;
        let g = structure.gamma_matrix(&[thetas[i]])?;
        weights.push(k);
        values.push(fp * fp * dpsi * dpsi * g[(0, 0)]);
    }
    let wsum: f64 = weights.iter().sum();
    let wsq: f64 = weights.iter().map(|w| w * w).sum();
    let ess = if wsq > 0.0 { wsum * wsum / wsq } else { 0.0 };
    if ess < KERNEL_MIN_ESS {
        return Err(Error::InsufficientData(format!(
            "effective sample size {ess:.1} near a = {a} is below {KERNEL_MIN_ESS}; \
             increase n or the bandwidth"
        )));
    }
    let num: f64 = weights.iter().zip(&values).map(|(w, v)| w * v).sum();
    let estimate = num / wsum;
    let poisson = Poisson::new(1.0).expect("unit rate is valid");
    let mut resamples = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for b in 0..BOOTSTRAP_RESAMPLES {
        let mut r = rng::substream_rng(seed, 1 + b as u64);
        let mut bn = 0.0;
        let mut bw = 0.0;
        for (w, v) in weights.iter().zip(&values) {
            let m: f64 = poisson.sample(&mut r);
            bn += m * w * v;
            bw += m * w;
        }
        if bw > 0.0 {
            resamples.push(bn / bw);
        }
    }
    let bm = resamples.iter().sum::<f64>() / resamples.len() as f64;
    let bv =
        resamples.iter().map(|r| (r - bm) * (r - bm)).sum::<f64>() / (resamples.len() - 1) as f64;
    Ok(KernelEstimate {
        estimate,
        std_err: bv.sqrt(),
        bandwidth: h,
        effective_sample_size: ess,
        n,
        seed,
    })
}

/// Monte Carlo estimate of the image field Gamma_psi[F](a) by kernel
/// regression of the pushed-forward field on psi(theta) near `a`.
pub fn image_conditional_mc(
    structure: &ErrorStructure,
    psi: &BranchMap,
    f: &Functional,
    a: f64,
    n: usize,
    bandwidth: Option<f64>,
    seed: u64,
) -> Result<KernelEstimate> {
    kernel_mc_core(
        structure,
        &|t| psi.forward(t),
        &|t| psi.derivative(t),
        f,
        a,
        n,
        bandwidth,
        Some(psi.image_domain()),
        seed,
    )
}

/// Kernel estimate for a black-box forward map; the map derivative is
/// taken by central difference, so the map must evaluate in a
/// neighborhood of each prior draw.
pub fn image_conditional_mc_fn(
    structure: &ErrorStructure,
    forward: impl Fn(f64) -> f64,
    f: &Functional,
    a: f64,
    n: usize,
    bandwidth: Option<f64>,
    seed: u64,
) -> Result<KernelEstimate> {
    let eps = f64::EPSILON.cbrt();
    let d = |t: f64| -> Result<f64> {
        let h = eps * t.abs().max(1.0);
        Ok((forward(t + h) - forward(t - h)) / (2.0 * h))
    };
    kernel_mc_core(
        structure,
        &|t| Ok(forward(t)),
        &d,
        f,
        a,
        n,
        bandwidth,
        None,
        seed,
    )
}

// ---------------------------------------------------------------------------
// Products
// ---------------------------------------------------------------------------

/// Product of two independent structures: priors multiply and the field
/// is block diagonal.
pub fn product(s1: &ErrorStructure, s2: &ErrorStructure) -> Result<ErrorStructure> {
    let prior = PriorMeasure::product(s1.prior(), s2.prior())?;
    let domain = prior.domain().clone();
    let left = s1.clone();
    let right = s2.clone();
    let split = s1.dim();
    let gamma_field: GammaField = Arc::new(move |t: &[f64]| {
        let g1 = left.gamma_matrix(&t[..split])?;
        let g2 = right.gamma_matrix(&t[split..])?;
        Ok(Matrix::block_diag(&g1, &g2))
    });
    ErrorStructure::assembled(domain, prior, gamma_field, Provenance::Product)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher::FisherMethod;
    use crate::model::NormalLocation;
    use crate::structure::from_model;
    use approx::assert_abs_diff_eq;

    fn unit_location(domain: ParameterDomain) -> ErrorStructure {
        let prior = PriorMeasure::uniform(domain.clone()).unwrap();
        let model = NormalLocation::new(domain).unwrap();
        from_model(model, prior, FisherMethod::Analytic).unwrap()
    }

    fn punctured_interval() -> ParameterDomain {
        ParameterDomain::interval(-1.0, 1.0)
            .unwrap()
            .exclude(vec![0.0])
            .unwrap()
    }

    #[test]
    fn affine_image_has_constant_field() {
        let domain = ParameterDomain::interval(-1.0, 1.0).unwrap();
        let src = unit_location(domain.clone());
        let psi = BranchMap::affine(2.0, 1.0, domain).unwrap();
        let img = image_injective(&src, &psi).unwrap();
        assert_eq!(img.gamma_mode(), GammaMode::ClosedForm);
        assert_eq!(img.provenance(), Provenance::Image);
        let f = Functional::coordinate(1, 0);
        for k in 0..9 {
            let a = -0.9 + 3.6 * k as f64 / 8.0;
            let g = img.gamma_matrix(&[a]).unwrap();
            assert_abs_diff_eq!(g[(0, 0)], 4.0, epsilon = 1e-12);
            let exact = image_conditional_exact(&src, &psi, &f, a).unwrap();
            assert_abs_diff_eq!(exact, 4.0, epsilon = 1e-12);
        }
        // Uniform on (-1, 1) pushed through 2 theta + 1 is uniform on (-1, 3).
        assert_abs_diff_eq!(img.prior().density(&[0.5]), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(img.prior().density(&[-0.5]), 0.25, epsilon = 1e-12);
        assert_eq!(img.prior().density(&[3.5]), 0.0);
    }

    #[test]
    fn identity_image_reproduces_the_source() {
        let domain = ParameterDomain::interval(-1.0, 1.0).unwrap();
        let src = unit_location(domain.clone());
        let psi = BranchMap::identity(domain).unwrap();
        let img = image_injective(&src, &psi).unwrap();
        for k in 0..7 {
            let t = -0.9 + 1.8 * k as f64 / 6.0;
            let g_img = img.gamma_matrix(&[t]).unwrap();
            let g_src = src.gamma_matrix(&[t]).unwrap();
            assert_abs_diff_eq!(g_img[(0, 0)], g_src[(0, 0)], epsilon = 1e-12);
            assert_abs_diff_eq!(
                img.prior().density(&[t]),
                src.prior().density(&[t]),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn cube_image_vanishes_at_the_critical_point() {
        let domain = ParameterDomain::interval(-1.0, 1.0).unwrap();
        let src = unit_location(domain.clone());
        let psi = BranchMap::cube(domain).unwrap();
        let img = image_injective(&src, &psi).unwrap();
        assert_eq!(img.gamma_matrix(&[0.0]).unwrap()[(0, 0)], 0.0);
        let g = img.gamma_matrix(&[0.125]).unwrap();
        assert_abs_diff_eq!(g[(0, 0)], 0.5625, epsilon = 1e-12);
        // Image density is q(a^(1/3)) / (3 a^(2/3)); singular yet integrable.
        let a: f64 = 0.125;
        let expected = 0.5 / (3.0 * a.powf(2.0 / 3.0));
        assert_abs_diff_eq!(img.prior().density(&[a]), expected, epsilon = 1e-12);
        assert_eq!(img.prior().density(&[0.0]), 0.0);
        assert_abs_diff_eq!(img.prior().normalization_witness(), 1.0, epsilon = 1e-7);
    }

    #[test]
    fn square_image_needs_the_conditional_path() {
        let src = unit_location(punctured_interval());
        let psi = BranchMap::square(punctured_interval()).unwrap();
        let err = image_injective(&src, &psi).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        assert!(err.to_string().contains("image_conditional"));
    }

    #[test]
    fn square_image_of_uniform_prior_is_linear() {
        let src = unit_location(punctured_interval());
        let psi = BranchMap::square(punctured_interval()).unwrap();
        let img = image_conditional(&src, &psi).unwrap();
        assert_eq!(img.gamma_mode(), GammaMode::BranchExact);
        let f = Functional::coordinate(1, 0);
        for k in 0..9 {
            let a = 0.1 + 0.8 * k as f64 / 8.0;
            let g = img.gamma_matrix(&[a]).unwrap();
            assert_abs_diff_eq!(g[(0, 0)], 4.0 * a, epsilon = 1e-12);
            let exact = image_conditional_exact(&src, &psi, &f, a).unwrap();
            assert_abs_diff_eq!(exact, 4.0 * a, epsilon = 1e-12);
        }
        // Both antecedents carry weight 1/(2 sqrt(a)); the image density is
        // their sum times the uniform density.
        let a: f64 = 0.25;
        assert_abs_diff_eq!(
            img.prior().density(&[a]),
            1.0 / (2.0 * a.sqrt()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn branch_sum_weights_by_prior_and_field() {
        // Tilted prior (2 + theta)/4 and field e^theta: both branches of
        // theta^2 contribute with different weights, so the barycenter is
        // a [(2+s) e^s + (2-s) e^{-s}] at s = sqrt(a), derived by summing
        // q t gamma over branches and dividing by the weight q / t.
        let domain = punctured_interval();
        let prior = PriorMeasure::from_unnormalized(domain.clone(), |t: f64| 2.0 + t).unwrap();
        let src = ErrorStructure::explicit(domain.clone(), prior, |t: &[f64]| {
            Matrix::from_rows(&[&[t[0].exp()]])
        })
        .unwrap();
        let psi = BranchMap::square(domain).unwrap();
        let img = image_conditional(&src, &psi).unwrap();
        for k in 0..9 {
            let a = 0.1 + 0.8 * k as f64 / 8.0;
            let s = f64::sqrt(a);
            let expected = a * ((2.0 + s) * s.exp() + (2.0 - s) * (-s).exp());
            let g = img.gamma_matrix(&[a]).unwrap();
            assert_abs_diff_eq!(g[(0, 0)], expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn kernel_estimate_matches_the_branch_sum() {
        let src = unit_location(punctured_interval());
        let psi = BranchMap::square(punctured_interval()).unwrap();
        let f = Functional::coordinate(1, 0);
        let a = 0.25;
        let est = image_conditional_mc(&src, &psi, &f, a, 100_000, None, 7).unwrap();
        assert!(est.std_err > 0.0);
        assert!(est.bandwidth > 0.0);
        assert!(est.effective_sample_size >= KERNEL_MIN_ESS);
        assert!(
            (est.estimate - 1.0).abs() <= (3.0 * est.std_err).max(0.02),
            "estimate {} +- {}",
            est.estimate,
            est.std_err
        );
    }

    #[test]
    fn kernel_estimate_is_deterministic() {
        let src = unit_location(punctured_interval());
        let psi = BranchMap::square(punctured_interval()).unwrap();
        let f = Functional::coordinate(1, 0);
        let e1 = image_conditional_mc(&src, &psi, &f, 0.5, 20_000, None, 11).unwrap();
        let e2 = image_conditional_mc(&src, &psi, &f, 0.5, 20_000, None, 11).unwrap();
        assert_eq!(e1.estimate.to_bits(), e2.estimate.to_bits());
        assert_eq!(e1.std_err.to_bits(), e2.std_err.to_bits());
        let e3 = image_conditional_mc(&src, &psi, &f, 0.5, 20_000, None, 12).unwrap();
        assert_ne!(e1.estimate.to_bits(), e3.estimate.to_bits());
    }

    #[test]
    fn kernel_estimate_guards_sample_size() {
        let src = unit_location(punctured_interval());
        let psi = BranchMap::square(punctured_interval()).unwrap();
        let f = Functional::coordinate(1, 0);
        let too_few = image_conditional_mc(&src, &psi, &f, 0.25, 100, None, 3);
        assert!(matches!(too_few, Err(Error::InsufficientData(_))));
        let narrow = image_conditional_mc(&src, &psi, &f, 0.25, 10_000, Some(1e-9), 3);
        assert!(matches!(narrow, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn black_box_map_agrees_with_the_branch_map() {
        let src = unit_location(punctured_interval());
        let psi = BranchMap::square(punctured_interval()).unwrap();
        let f = Functional::coordinate(1, 0);
        let a = 0.3;
        let e1 = image_conditional_mc(&src, &psi, &f, a, 20_000, None, 5).unwrap();
        let e2 = image_conditional_mc_fn(&src, |t| t * t, &f, a, 20_000, None, 5).unwrap();
        assert_abs_diff_eq!(e1.estimate, e2.estimate, epsilon = 1e-6);
    }

    #[test]
    fn injective_images_agree_between_both_evaluations() {
        let domain = ParameterDomain::interval(0.2, 1.5).unwrap();
        let src = unit_location(domain.clone());
        let maps = vec![
            BranchMap::affine(1.5, -0.3, domain.clone()).unwrap(),
            BranchMap::exp_map(domain.clone()).unwrap(),
        ];
        let basket = vec![
            Functional::coordinate(1, 0),
            Functional::univariate(|a| a * a, Some(Box::new(|a| 2.0 * a))),
            Functional::univariate(f64::sin, None),
        ];
        for psi in &maps {
            let img = image_injective(&src, psi).unwrap();
            let (lo, hi) = (img.domain().lower()[0], img.domain().upper()[0]);
            for f in &basket {
                for k in 0..7 {
                    let a = lo + (hi - lo) * (k as f64 + 1.0) / 8.0;
                    let sandwich = img.gamma(f, f, &[a]).unwrap();
                    let exact = image_conditional_exact(&src, psi, f, a).unwrap();
                    assert_abs_diff_eq!(sandwich, exact, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn composing_maps_commutes_with_taking_images() {
        let domain = ParameterDomain::interval(0.1, 1.0).unwrap();
        let src = unit_location(domain.clone());
        let psi1 = BranchMap::affine(2.0, 1.0, domain).unwrap();
        let mid = image_injective(&src, &psi1).unwrap();
        let psi2 = BranchMap::exp_map(mid.domain().clone()).unwrap();
        let two_step = image_injective(mid.structure(), &psi2).unwrap();
        let composite = psi1.compose_injective(&psi2).unwrap();
        let one_step = image_injective(&src, &composite).unwrap();
        let (lo, hi) = (one_step.domain().lower()[0], one_step.domain().upper()[0]);
        for k in 0..9 {
            let a = lo + (hi - lo) * (k as f64 + 1.0) / 10.0;
            let g2 = two_step.gamma_matrix(&[a]).unwrap()[(0, 0)];
            let g1 = one_step.gamma_matrix(&[a]).unwrap()[(0, 0)];
            assert_abs_diff_eq!(g1, g2, epsilon = 1e-8 * (1.0 + g1.abs()));
            assert_abs_diff_eq!(g1, 4.0 * a * a, epsilon = 1e-8 * (1.0 + g1.abs()));
            let q2 = two_step.prior().density(&[a]);
            let q1 = one_step.prior().density(&[a]);
            assert_abs_diff_eq!(q1, q2, epsilon = 1e-8 * (1.0 + q1.abs()));
        }
    }

    #[test]
    fn product_field_is_block_diagonal() {
        let d1 = ParameterDomain::interval(-1.0, 1.0).unwrap();
        let s1 = unit_location(d1.clone());
        let d2 = ParameterDomain::interval(0.5, 2.0).unwrap();
        let prior2 = PriorMeasure::uniform(d2.clone()).unwrap();
        let model2 = crate::model::NormalScale::new(d2).unwrap();
        let s2 = from_model(model2, prior2, FisherMethod::Analytic).unwrap();
        let p = product(&s1, &s2).unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.provenance(), Provenance::Product);
        let t = [0.3, 1.25];
        let g = p.gamma_matrix(&t).unwrap();
        assert_abs_diff_eq!(g[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[(1, 1)], 1.25 * 1.25 / 2.0, epsilon = 1e-12);
        assert_eq!(g[(0, 1)], 0.0);
        assert_eq!(g[(1, 0)], 0.0);
        // Coordinates of independent factors are uncorrelated under the field.
        let f0 = Functional::coordinate(2, 0);
        let f1 = Functional::coordinate(2, 1);
        assert_eq!(p.gamma(&f0, &f1, &t).unwrap(), 0.0);
        assert_abs_diff_eq!(p.prior().density(&t), 0.5 * (1.0 / 1.5), epsilon = 1e-12);
    }

    #[test]
    fn componentwise_image_commutes_with_the_product() {
        let d1 = ParameterDomain::interval(-1.0, 1.0).unwrap();
        let s1 = unit_location(d1.clone());
        let d2 = ParameterDomain::interval(0.5, 2.0).unwrap();
        let prior2 = PriorMeasure::uniform(d2.clone()).unwrap();
        let s2 = from_model(
            crate::model::NormalScale::new(d2.clone()).unwrap(),
            prior2,
            FisherMethod::Analytic,
        )
        .unwrap();
        let psi1 = BranchMap::affine(2.0, 0.0, d1).unwrap();
        let psi2 = BranchMap::log_map(d2).unwrap();

        let image_of_product =
            image_componentwise(&product(&s1, &s2).unwrap(), &[psi1.clone(), psi2.clone()])
                .unwrap();
        let product_of_images = product(
            image_injective(&s1, &psi1).unwrap().structure(),
            image_injective(&s2, &psi2).unwrap().structure(),
        )
        .unwrap();

        for i in 0..4 {
            for j in 0..4 {
                let a1 = -1.8 + 3.6 * (i as f64 + 0.5) / 4.0;
                let a2 = 0.5_f64.ln() + (2.0_f64.ln() - 0.5_f64.ln()) * (j as f64 + 0.5) / 4.0;
                let ga = image_of_product.gamma_matrix(&[a1, a2]).unwrap();
                let gb = product_of_images.gamma_matrix(&[a1, a2]).unwrap();
                for r in 0..2 {
                    for c in 0..2 {
                        assert_abs_diff_eq!(ga[(r, c)], gb[(r, c)], epsilon = 1e-8);
                    }
                }
                let qa = image_of_product.prior().density(&[a1, a2]);
                let qb = product_of_images.prior().density(&[a1, a2]);
                assert_abs_diff_eq!(qa, qb, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn excluded_points_map_through_the_image() {
        let src = unit_location(punctured_interval());
        let psi = BranchMap::affine(2.0, 0.0, punctured_interval()).unwrap();
        let img = image_injective(&src, &psi).unwrap();
        assert_eq!(img.domain().excluded_points().len(), 1);
        assert!(matches!(img.gamma_matrix(&[0.0]), Err(Error::Domain(_))));
        assert!(img.gamma_matrix(&[0.5]).is_ok());

        // The squared image of the puncture lands on the image boundary
        // and is dropped rather than excluded.
        let sq = BranchMap::square(punctured_interval()).unwrap();
        let img2 = image_conditional(&src, &sq).unwrap();
        assert!(img2.domain().excluded_points().is_empty());
    }

    #[test]
    fn image_sampler_pushes_the_source_prior() {
        let src = unit_location(punctured_interval());
        let psi = BranchMap::square(punctured_interval()).unwrap();
        let img = image_conditional(&src, &psi).unwrap();
        let draws = img.prior().sample(20_000, 42);
        let values = draws.scalars().unwrap();
        assert!(values.iter().all(|&a| (0.0..1.0).contains(&a)));
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert_abs_diff_eq!(mean, 1.0 / 3.0, epsilon = 0.02);
        let again = img.prior().sample(5, 42);
        assert_eq!(draws.row(0), again.row(0));
    }

    #[test]
    fn dimension_and_domain_mismatches_are_rejected() {
        let d = ParameterDomain::interval(-1.0, 1.0).unwrap();
        let src = unit_location(d);
        let other = ParameterDomain::interval(-2.0, 2.0).unwrap();
        let psi = BranchMap::affine(1.0, 0.0, other).unwrap();
        assert!(matches!(image_injective(&src, &psi), Err(Error::Domain(_))));
        assert!(matches!(
            image_componentwise(&src, &[]),
            Err(Error::Domain(_))
        ));
    }
}
