//! Turns parsed config blocks into live objects: models, priors, maps,
//! structures, and functionals.

use errstruct::branch::Branch;
use errstruct::jeffreys::jeffreys_prior;
use errstruct::model::{LogisticLocation, Mixture, NormalLocation, NormalScale, Support};
use errstruct::quad::QuadOptions;
use errstruct::rng::ChaCha8Rng;
use errstruct::structure::from_model;
use errstruct::{
    BranchMap, Error, ErrorStructure, FisherMethod, Functional, Matrix, Model, ParameterDomain,
    PriorMeasure, Result, Sample,
};

use crate::config::{
    EstimatorKey, ExperimentConfig, Family, MethodKey, ModelBlock, NamedMap, PriorBlock, PsiBlock,
    PsiSpec,
};
use crate::expr::{self, Expr};

/// One observation model per config family, all cloneable so simulation
/// entry points that need owned models can take them.
#[derive(Clone)]
pub enum FamilyModel {
    Logistic(LogisticLocation),
    Mixture(Mixture),
    NormalLocation(NormalLocation),
    NormalScale(NormalScale),
}

macro_rules! delegate {
    ($self:ident, $m:ident, $call:expr) => {
        match $self {
            FamilyModel::Logistic($m) => $call,
            FamilyModel::Mixture($m) => $call,
            FamilyModel::NormalLocation($m) => $call,
            FamilyModel::NormalScale($m) => $call,
        }
    };
}

impl Model for FamilyModel {
    fn dim_param(&self) -> usize {
        delegate!(self, m, m.dim_param())
    }

    fn dim_obs(&self) -> usize {
        delegate!(self, m, m.dim_obs())
    }

    fn domain(&self) -> &ParameterDomain {
        delegate!(self, m, m.domain())
    }

    fn support(&self) -> &Support {
        delegate!(self, m, m.support())
    }

    fn log_density_raw(&self, x: &[f64], theta: &[f64]) -> f64 {
        delegate!(self, m, m.log_density_raw(x, theta))
    }

    fn analytic_score(&self, x: &[f64], theta: &[f64]) -> Option<Vec<f64>> {
        delegate!(self, m, m.analytic_score(x, theta))
    }

    fn analytic_fisher(&self, theta: &[f64]) -> Option<Matrix> {
        delegate!(self, m, m.analytic_fisher(theta))
    }

    fn sample_raw(&self, theta: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Sample {
        delegate!(self, m, m.sample_raw(theta, n, rng))
    }
}

pub fn build_domain(block: &ModelBlock) -> Result<ParameterDomain> {
    let base = ParameterDomain::interval(block.lower, block.upper)?;
    if block.exclude.is_empty() {
        Ok(base)
    } else {
        base.exclude(block.exclude.clone())
    }
}

pub fn build_model(block: &ModelBlock) -> Result<FamilyModel> {
    let domain = build_domain(block)?;
    Ok(match block.family {
        Family::Logistic => FamilyModel::Logistic(LogisticLocation::new(domain)?),
        Family::Mixture => FamilyModel::Mixture(Mixture::new(domain)?),
        Family::NormalLocation => FamilyModel::NormalLocation(NormalLocation::new(domain)?),
        Family::NormalScale => FamilyModel::NormalScale(NormalScale::new(domain)?),
    })
}

pub fn build_prior(
    config: &ExperimentConfig,
    model: &FamilyModel,
    opts: &QuadOptions,
) -> Result<PriorMeasure> {
    let domain = build_domain(&config.model)?;
    match &config.prior {
        PriorBlock::Uniform => PriorMeasure::uniform(domain),
        PriorBlock::Density(source) => {
            let parsed =
                expr::parse(source).map_err(|e| Error::Domain(format!("prior.density: {e}")))?;
            PriorMeasure::from_unnormalized(domain, move |t| parsed.eval(t))
        }
        PriorBlock::Jeffreys => jeffreys_prior(model.clone(), opts),
    }
}

fn branch_from_expressions(
    lower: f64,
    upper: f64,
    forward_src: &str,
    inverse_src: &str,
    derivative_src: Option<&str>,
) -> Result<(Branch, Expr)> {
    let bad = |key: &str, e: String| Error::Domain(format!("{key}: {e}"));
    let forward = expr::parse(forward_src).map_err(|e| bad("psi.branch forward", e))?;
    let inverse = expr::parse(inverse_src).map_err(|e| bad("psi.branch inverse", e))?;
    let derivative = match derivative_src {
        Some(src) => expr::parse(src).map_err(|e| bad("psi.branch derivative", e))?,
        None => forward.clone(),
    };
    let differentiate = derivative_src.is_none();
    let fwd = forward.clone();
    let branch = Branch::new(
        (lower, upper),
        move |t| fwd.eval(t),
        move |a| inverse.eval(a),
        move |t| {
            if differentiate {
                expr::central_derivative(&derivative, t)
            } else {
                derivative.eval(t)
            }
        },
    );
    Ok((branch, forward))
}

pub fn build_psi(block: &PsiBlock, domain: &ParameterDomain) -> Result<BranchMap> {
    match &block.spec {
        PsiSpec::Named(map) => match map {
            NamedMap::Identity => BranchMap::identity(domain.clone()),
            NamedMap::Square => BranchMap::square(domain.clone()),
            NamedMap::Cube => BranchMap::cube(domain.clone()),
            NamedMap::Exp => BranchMap::exp_map(domain.clone()),
            NamedMap::Log => BranchMap::log_map(domain.clone()),
            NamedMap::Affine(scale, offset) => BranchMap::affine(*scale, *offset, domain.clone()),
        },
        PsiSpec::Branches(specs) => {
            let mut branches = Vec::with_capacity(specs.len());
            let mut image_lo = f64::INFINITY;
            let mut image_hi = f64::NEG_INFINITY;
            let mut slope_sup = 0.0f64;
            for spec in specs {
                let (branch, forward) = branch_from_expressions(
                    spec.lower,
                    spec.upper,
                    &spec.forward,
                    &spec.inverse,
                    spec.derivative.as_deref(),
                )?;
                let probes = 129;
                for k in 0..=probes {
                    let t = spec.lower + (spec.upper - spec.lower) * k as f64 / probes as f64;
                    let v = forward.eval(t);
                    image_lo = image_lo.min(v);
                    image_hi = image_hi.max(v);
                    slope_sup = slope_sup.max(expr::central_derivative(&forward, t).abs());
                }
                branches.push(branch);
            }
            let theta_domain = domain.clone();
            let image_domain = ParameterDomain::interval(image_lo, image_hi)?;
            let lipschitz = match block.lipschitz {
                Some(l) => l,
                None => slope_sup * 1.05,
            };
            BranchMap::new(branches, theta_domain, image_domain, lipschitz)
        }
    }
}

/// Error structure of the configured model via the inverse information.
pub fn build_structure(config: &ExperimentConfig, opts: &QuadOptions) -> Result<ErrorStructure> {
    let model = build_model(&config.model)?;
    let prior = build_prior(config, &model, opts)?;
    let method = fisher_method(config);
    from_model(model, prior, method)
}

/// Quadrature unless the config explicitly asks for the analytic matrix.
pub fn fisher_method(config: &ExperimentConfig) -> FisherMethod {
    match config.run.method {
        Some(MethodKey::Analytic) => FisherMethod::Analytic,
        _ => FisherMethod::Quadrature,
    }
}

/// Scalar functional of one parameter from `run.functional`, the
/// identity when the key is absent.
pub fn build_functional(source: Option<&str>) -> Result<Functional> {
    match source {
        None => Ok(Functional::coordinate(1, 0)),
        Some(src) => {
            let parsed =
                expr::parse(src).map_err(|e| Error::Domain(format!("run.functional: {e}")))?;
            let value = parsed.clone();
            Ok(Functional::scalar_with_gradient(
                1,
                move |t| value.eval(t[0]),
                move |t| vec![expr::central_derivative(&parsed, t[0])],
            ))
        }
    }
}

pub fn build_estimator(key: EstimatorKey) -> impl Fn(&Sample) -> f64 + Sync {
    move |sample: &Sample| {
        let values = sample.scalars().expect("estimators act on scalar samples");
        match key {
            EstimatorKey::Mean => values.iter().sum::<f64>() / values.len() as f64,
            EstimatorKey::Median => {
                let mut v = values.to_vec();
                let n = v.len();
                let (left, mid, _) = v.select_nth_unstable_by(n / 2, |a, b| a.total_cmp(b));
                if n % 2 == 1 {
                    *mid
                } else {
                    let below = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    0.5 * (below + *mid)
                }
            }
        }
    }
}
