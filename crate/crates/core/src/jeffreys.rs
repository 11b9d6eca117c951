//! The information-volume prior of a parametric model.
//!
//! A regular model carries a natural reference measure with density
//! proportional to sqrt(det J(theta)), J the Fisher information. Provided
//! the normalizer K = integral sqrt(det J) is finite, [`jeffreys_prior`]
//! returns it as a [`PriorMeasure`]: tabulated inverse-CDF sampling for a
//! scalar parameter, rejection sampling on the rectangle for two.
//!
//! The construction commutes with smooth reparameterization and with
//! model products. [`verify_jeffreys_invariance`] measures the first
//! property numerically: it pushes the prior forward through an injective
//! map and compares against the prior built from the reparameterized
//! information J(psi^{-1}(a)) / psi'(psi^{-1}(a))^2.

use std::sync::Arc;

use crate::branch::BranchMap;
use crate::domain::ParameterDomain;
use crate::error::{Error, Result};
use crate::fisher::{self, FisherMethod};
use crate::linalg;
use crate::model::{Model, Sample};
use crate::quad::{self, QuadOptions};
use crate::rng;
use crate::structure::PriorMeasure;
use rand::Rng;

/// Probe points for the invariance gap scan.
const GAP_GRID: usize = 256;

/// Probe points per axis when bounding the rejection-sampler envelope.
const ENVELOPE_GRID: usize = 128;

/// Headroom multiplier on the probed density supremum.
const ENVELOPE_MARGIN: f64 = 1.5;

/// Reparameterization diagnostic: the largest pointwise gap between the
/// pushforward of the prior and the prior of the reparameterized model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceReport {
    pub max_gap: f64,
    /// Image point where the gap peaks.
    pub at: f64,
    /// Probe points actually compared.
    pub points: usize,
}

/// sqrt(det J(theta)), eigenvalue product of the symmetrized information.
/// Closed-form information when the family has one, quadrature otherwise.
fn root_det_information<M: Model + ?Sized>(model: &M, theta: &[f64]) -> Result<f64> {
    let method = if model.analytic_fisher(theta).is_some() {
        FisherMethod::Analytic
    } else {
        FisherMethod::Quadrature
    };
    let info = fisher::fisher(model, theta, method)?;
    let det = linalg::sym_det(&info.matrix.symmetrized())?;
    if !det.is_finite() {
        return Err(Error::NonFinite(format!(
            "det J = {det} at theta = {theta:?}"
        )));
    }
    Ok(det.max(0.0).sqrt())
}

fn normalizer_or_divergence(value: Result<f64>) -> Result<f64> {
    match value {
        Ok(mass) if mass.is_finite() && mass > 0.0 => Ok(mass),
        Ok(mass) => Err(Error::NonFinite(format!(
            "jeffreys prior does not normalize: integral sqrt(det J) = {mass}"
        ))),
        Err(Error::NonFinite(msg)) => Err(Error::NonFinite(format!(
            "jeffreys prior does not normalize: {msg}"
        ))),
        Err(e) => Err(Error::NonFinite(format!(
            "jeffreys prior does not normalize: {e}"
        ))),
    }
}

/// Jeffreys prior of `model`: density sqrt(det J(theta)) / K on the
/// parameter domain, K the total sqrt-information mass computed with
/// `opts`. Supports one- and two-parameter models.
pub fn jeffreys_prior<M: Model + 'static>(model: M, opts: &QuadOptions) -> Result<PriorMeasure> {
    let domain = model.domain().clone();
    let model = Arc::new(model);
    let weight_domain = domain.clone();
    let weight_model = Arc::clone(&model);
    // Excluded points carry no mass; elsewhere a non-finite evaluation
    // must surface, so it is left as NaN for the construction to reject.
    let weight = move |theta: &[f64]| -> f64 {
        if !weight_domain.contains(theta) {
            return 0.0;
        }
        root_det_information(&*weight_model, theta).unwrap_or(f64::NAN)
    };
    match domain.dim() {
        1 => {
            let (lo, hi) = (domain.lower()[0], domain.upper()[0]);
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::Domain(
                    "jeffreys priors need a bounded parameter rectangle".into(),
                ));
            }
            normalizer_or_divergence(
                quad::integrate(|t| weight(&[t]), lo, hi, opts).map(|r| r.value),
            )?;
            PriorMeasure::from_unnormalized(domain, move |t| weight(&[t]))
        }
        2 => jeffreys_rejection(domain, weight, opts),
        d => Err(Error::Unsupported(format!(
            "jeffreys priors are implemented for at most two parameters, got {d}"
        ))),
    }
}

/// Two-parameter path: normalize by iterated quadrature, sample by
/// rejection under a probed envelope.
fn jeffreys_rejection(
    domain: ParameterDomain,
    weight: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    opts: &QuadOptions,
) -> Result<PriorMeasure> {
    let (lo0, hi0) = (domain.lower()[0], domain.upper()[0]);
    let (lo1, hi1) = (domain.lower()[1], domain.upper()[1]);
    if ![lo0, hi0, lo1, hi1].iter().all(|v| v.is_finite()) {
        return Err(Error::Domain(
            "rejection sampling needs a bounded rectangle".into(),
        ));
    }
    let weight = Arc::new(weight);
    let mass = {
        let w = Arc::clone(&weight);
        normalizer_or_divergence(
            quad::integrate_auto(
                move |t0| {
                    let w = Arc::clone(&w);
                    quad::integrate_auto(move |t1| w(&[t0, t1]), lo1, hi1, opts)
                        .map(|r| r.value)
                        .unwrap_or(f64::NAN)
                },
                lo0,
                hi0,
                opts,
            )
            .map(|r| r.value),
        )?
    };

    let density = {
        let w = Arc::clone(&weight);
        move |theta: &[f64]| w(theta) / mass
    };
    let mut sup = 0.0_f64;
    for i in 0..ENVELOPE_GRID {
        let t0 = lo0 + (hi0 - lo0) * (i as f64 + 0.5) / ENVELOPE_GRID as f64;
        for j in 0..ENVELOPE_GRID {
            let t1 = lo1 + (hi1 - lo1) * (j as f64 + 0.5) / ENVELOPE_GRID as f64;
            let v = density(&[t0, t1]);
            if v.is_finite() {
                sup = sup.max(v);
            }
        }
    }
    if sup <= 0.0 {
        return Err(Error::Domain(
            "jeffreys density vanishes on the probe grid".into(),
        ));
    }
    let envelope = ENVELOPE_MARGIN * sup;

    let sample_domain = domain.clone();
    let sample_density = {
        let w = Arc::clone(&weight);
        move |theta: &[f64]| w(theta) / mass
    };
    let sampler = move |count: usize, seed: u64| -> Sample {
        let mut rng = rng::seeded_rng(seed);
        let mut out = Sample::with_capacity(2, count);
        let mut row = [0.0; 2];
        for _ in 0..count {
            loop {
                row[0] = rng.gen_range(lo0..hi0);
                row[1] = rng.gen_range(lo1..hi1);
                if !sample_domain.contains(&row) {
                    continue;
                }
                let u: f64 = rng.gen();
                if u * envelope < sample_density(&row) {
                    out.push_row(&row);
                    break;
                }
            }
        }
        out
    };
    PriorMeasure::new_raw(domain, density, sampler)
}

/// Compare the pushforward of the Jeffreys prior under an injective map
/// with the Jeffreys prior of the reparameterized model, whose
/// information is J(psi^{-1}(a)) / psi'(psi^{-1}(a))^2.
pub fn verify_jeffreys_invariance<M: Model + Clone + 'static>(
    model: &M,
    psi: &BranchMap,
    opts: &QuadOptions,
) -> Result<InvarianceReport> {
    if model.dim_param() != 1 {
        return Err(Error::Unsupported(
            "the invariance check runs on scalar parameters".into(),
        ));
    }
    if !psi.is_injective() {
        return Err(Error::Unsupported(
            "the invariance check needs an injective map".into(),
        ));
    }
    let source = jeffreys_prior(model.clone(), opts)?;

    // Image-side sqrt-information at a, zero off the model domain.
    let image_weight = |a: f64| -> Result<Option<(f64, f64)>> {
        let ants = psi.antecedents(a)?;
        let ant = &ants[0];
        if !model.domain().contains(&[ant.theta]) || ant.derivative == 0.0 {
            return Ok(None);
        }
        let w = root_det_information(model, &[ant.theta])? / ant.derivative.abs();
        Ok(Some((ant.theta, w)))
    };

    let (img_lo, img_hi) = {
        let d = psi.image_domain();
        (d.lower()[0], d.upper()[0])
    };
    let image_mass = normalizer_or_divergence(
        quad::integrate_auto(
            |a| match image_weight(a) {
                Ok(Some((_, w))) => w,
                Ok(None) => 0.0,
                Err(_) => 0.0,
            },
            img_lo,
            img_hi,
            opts,
        )
        .map(|r| r.value),
    )?;

    let mut max_gap = 0.0_f64;
    let mut at = f64::NAN;
    let mut points = 0usize;
    for k in 0..GAP_GRID {
        let a = img_lo + (img_hi - img_lo) * (k as f64 + 0.5) / GAP_GRID as f64;
        let Some((theta, w)) = image_weight(a).unwrap_or(None) else {
            continue;
        };
        let pushed = source.density(&[theta]) / psi.derivative(theta)?.abs();
        let reparameterized = w / image_mass;
        let gap = (pushed - reparameterized).abs();
        points += 1;
        if gap > max_gap || at.is_nan() {
            max_gap = gap;
            at = a;
        }
    }
    if points == 0 {
        return Err(Error::Domain(
            "no probe point had an antecedent inside the model domain".into(),
        ));
    }
    Ok(InvarianceReport {
        max_gap,
        at,
        points,
    })
}
