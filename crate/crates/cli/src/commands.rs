//! One function per subcommand: build objects from the config, run the
//! mapped library operation, return a report for the writer.

use errstruct::asymptotics::{
    crlb_check, fisher_vs_gamma, simulate_mle_asymptotics, simulate_psi_variance,
};
use errstruct::fisher;
use errstruct::jeffreys::jeffreys_prior;
use errstruct::model::pushforward_model;
use errstruct::quad::QuadOptions;
use errstruct::structure::from_model;
use errstruct::transforms::{image_conditional, image_injective, product};
use errstruct::{Error, Model, Result};

use crate::config::{EstimatorKey, ExperimentConfig, MethodKey, PriorBlock};
use crate::report::Report;
use crate::setup;

pub struct Invocation {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub opts: QuadOptions,
}

fn missing(key: &str) -> Error {
    Error::Domain(format!("missing required key '{key}'"))
}

fn require_scalar_theta(config: &ExperimentConfig) -> Result<f64> {
    let theta = config.run.theta.as_ref().ok_or(missing("run.theta"))?;
    if theta.len() != 1 {
        return Err(Error::Domain(format!(
            "run.theta must hold exactly one value here, got {}",
            theta.len()
        )));
    }
    Ok(theta[0])
}

fn require_psi(config: &ExperimentConfig) -> Result<(setup::FamilyModel, errstruct::BranchMap)> {
    let model = setup::build_model(&config.model)?;
    let block = config.psi.as_ref().ok_or(missing("psi.named"))?;
    let psi = setup::build_psi(block, model.domain())?;
    Ok((model, psi))
}

fn grid_points(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| lo + (k as f64 + 0.5) * (hi - lo) / count as f64)
        .collect()
}

pub fn fisher_info(inv: &Invocation) -> Result<Report> {
    let theta = require_scalar_theta(&inv.config)?;
    let model = setup::build_model(&inv.config.model)?;
    let method = setup::fisher_method(&inv.config);
    let fm = fisher::fisher(&model, &[theta], method)?;
    let name = match inv.config.run.method {
        Some(MethodKey::Analytic) => "analytic",
        _ => "quadrature",
    };
    let mut report = Report::new("fisher-information", name);
    report
        .set_f64("J", fm.matrix[(0, 0)])
        .set_str("method", name)
        .set_f64("estimate", fm.matrix[(0, 0)])
        .set_null("std_err")
        .set_null("reference")
        .set_f64("theta", theta)
        .set_u64("seed", inv.seed);
    Ok(report)
}

pub fn propagate(inv: &Invocation) -> Result<Report> {
    let theta = require_scalar_theta(&inv.config)?;
    let structure = setup::build_structure(&inv.config, &inv.opts)?;
    let f = setup::build_functional(inv.config.run.functional.as_deref())?;
    let value = structure.gamma_quadratic(&f, &[theta])?;
    let mut report = Report::new("squared-error of f", "inverse information + chain rule");
    report
        .set_f64("estimate", value)
        .set_null("std_err")
        .set_null("reference")
        .set_f64("theta", theta)
        .set_str(
            "functional",
            inv.config.run.functional.as_deref().unwrap_or("theta"),
        )
        .set_u64("seed", inv.seed);
    Ok(report)
}

pub fn image(inv: &Invocation) -> Result<Report> {
    let structure = setup::build_structure(&inv.config, &inv.opts)?;
    let block = inv.config.psi.as_ref().ok_or(missing("psi.named"))?;
    let psi = setup::build_psi(block, structure.domain())?;
    let (mapped, provenance) = if psi.is_injective() {
        (image_injective(&structure, &psi)?, "injective pushforward")
    } else {
        (
            image_conditional(&structure, &psi)?,
            "antecedent barycenter",
        )
    };
    let count = inv.config.run.grid.unwrap_or(101).max(1);
    let lo = psi.image_domain().lower()[0];
    let hi = psi.image_domain().upper()[0];
    let mut rows = Vec::with_capacity(count);
    for a in grid_points(lo, hi, count) {
        let gamma = mapped.structure().gamma_matrix(&[a])?[(0, 0)];
        rows.push(vec![a, gamma]);
    }
    let mut report = Report::new("image field on a grid", provenance);
    report
        .set_u64("points", count as u64)
        .set_f64("image_lower", lo)
        .set_f64("image_upper", hi)
        .set_u64("seed", inv.seed)
        .set_grid(&["a", "gamma"], rows);
    Ok(report)
}

pub fn product_structure(inv: &Invocation) -> Result<Report> {
    let config = &inv.config;
    if matches!(config.prior, PriorBlock::Density(_)) {
        return Err(Error::Unsupported(
            "prior.kind = density is not supported for product configs; \
             use uniform or jeffreys"
                .into(),
        ));
    }
    let block2 = config.model2.as_ref().ok_or(missing("model2.family"))?;
    let theta = config.run.theta.as_ref().ok_or(missing("run.theta"))?;
    if theta.len() != 2 {
        return Err(Error::Domain(format!(
            "run.theta must list one value per factor, got {}",
            theta.len()
        )));
    }

    let build_factor = |block: &crate::config::ModelBlock| -> Result<errstruct::ErrorStructure> {
        let model = setup::build_model(block)?;
        let prior = match &config.prior {
            PriorBlock::Uniform => errstruct::PriorMeasure::uniform(model.domain().clone())?,
            PriorBlock::Jeffreys => jeffreys_prior(model.clone(), &inv.opts)?,
            PriorBlock::Density(_) => unreachable!("rejected above"),
        };
        from_model(model, prior, setup::fisher_method(config))
    };
    let s1 = build_factor(&config.model)?;
    let s2 = build_factor(block2)?;
    let joint = product(&s1, &s2)?;
    let gamma = joint.gamma_matrix(theta)?;
    let mut report = Report::new("product structure at theta", "blockwise product");
    report
        .set_f64("gamma_00", gamma[(0, 0)])
        .set_f64("gamma_01", gamma[(0, 1)])
        .set_f64("gamma_10", gamma[(1, 0)])
        .set_f64("gamma_11", gamma[(1, 1)])
        .set_f64("prior_density", joint.prior().density(theta))
        .set_f64("theta_0", theta[0])
        .set_f64("theta_1", theta[1])
        .set_u64("seed", inv.seed);
    Ok(report)
}

pub fn simulate(inv: &Invocation) -> Result<Report> {
    let config = &inv.config;
    let n = config.run.n.ok_or(missing("run.n"))?;
    let reps = config.run.reps.ok_or(missing("run.reps"))?;
    if let Some(a) = config.run.a.filter(|_| config.psi.is_some()) {
        let (model, psi) = require_psi(config)?;
        let prior = setup::build_prior(config, &model, &inv.opts)?;
        let window = match config.run.bandwidth {
            Some(w) => w,
            None => {
                let lo = psi.image_domain().lower()[0];
                let hi = psi.image_domain().upper()[0];
                0.01 * (hi - lo)
            }
        };
        let out = simulate_psi_variance(&model, &prior, &psi, a, n, reps, window, inv.seed)?;
        let mut report = Report::new(&out.report.target, "windowed conditional simulation");
        report
            .set_f64("estimate", out.report.estimate)
            .set_f64("std_err", out.report.std_err)
            .set_f64(
                "reference",
                out.report
                    .reference_value
                    .as_ref()
                    .map(|r| r.value)
                    .unwrap_or(f64::NAN),
            )
            .set_f64("a", a)
            .set_f64("kernel_window", out.kernel_window)
            .set_f64("acceptance_rate", out.acceptance_rate)
            .set_u64("no_root_failures", out.no_root_failures as u64)
            .set_u64("boundary_failures", out.boundary_failures as u64)
            .set_u64("n", n as u64)
            .set_u64("reps", reps as u64)
            .set_u64("seed", inv.seed);
        return Ok(report);
    }
    let theta = require_scalar_theta(config)?;
    let model = setup::build_model(&config.model)?;
    let out = simulate_mle_asymptotics(&model, &[theta], n, reps, inv.seed)?;
    let mut report = Report::new(&out.variance.target, "simulated maximum likelihood");
    report
        .set_f64("estimate", out.variance.estimate)
        .set_f64("std_err", out.variance.std_err)
        .set_f64(
            "reference",
            out.variance
                .reference_value
                .as_ref()
                .map(|r| r.value)
                .unwrap_or(f64::NAN),
        )
        .set_f64("scaled_bias", out.scaled_bias.estimate)
        .set_f64("scaled_bias_std_err", out.scaled_bias.std_err)
        .set_u64("no_root_failures", out.no_root_failures as u64)
        .set_u64("boundary_failures", out.boundary_failures as u64)
        .set_f64("theta", theta)
        .set_u64("n", n as u64)
        .set_u64("reps", reps as u64)
        .set_u64("seed", inv.seed);
    Ok(report)
}

pub fn crlb(inv: &Invocation) -> Result<Report> {
    let config = &inv.config;
    let theta = require_scalar_theta(config)?;
    let n = config.run.n.ok_or(missing("run.n"))?;
    let reps = config.run.reps.ok_or(missing("run.reps"))?;
    let key = config.run.estimator.ok_or(missing("run.estimator"))?;
    let model = setup::build_model(&config.model)?;
    let psi = setup::build_functional(config.run.functional.as_deref())?;
    let estimator = setup::build_estimator(key);
    let out = crlb_check(&model, estimator, &psi, &[theta], n, reps, inv.seed)?;
    let name = match key {
        EstimatorKey::Mean => "mean",
        EstimatorKey::Median => "median",
    };
    let mut report = Report::new(&out.risk.target, "simulated risk vs inverse information");
    report
        .set_f64("estimate", out.risk.estimate)
        .set_f64("std_err", out.risk.std_err)
        .set_f64("reference", out.bound)
        .set_f64("bound", out.bound)
        .set_bool("exceeds_bound", out.pass)
        .set_f64("bias", out.bias)
        .set_f64("bias_std_err", out.bias_std_err)
        .set_bool("bias_warning", out.bias_warning)
        .set_str("estimator", name)
        .set_f64("theta", theta)
        .set_u64("n", n as u64)
        .set_u64("reps", reps as u64)
        .set_u64("seed", inv.seed);
    Ok(report)
}

pub fn compare_bounds(inv: &Invocation, a_flag: Option<f64>) -> Result<Report> {
    let config = &inv.config;
    let a = a_flag.or(config.run.a).ok_or(missing("run.a"))?;
    let (model, psi) = require_psi(config)?;
    let prior = setup::build_prior(config, &model, &inv.opts)?;
    let structure = from_model(model.clone(), prior.clone(), setup::fisher_method(config))?;
    let image_model = pushforward_model(model, prior, psi.clone())?;
    let (inv_fisher, gamma_psi) = fisher_vs_gamma(&image_model, &structure, &psi, a)?;
    let mut report = Report::new(
        "image information bound vs image field",
        "quadrature information of the mixture",
    );
    report
        .set_f64("gamma_psi", gamma_psi)
        .set_f64("inv_fisher_Q", inv_fisher)
        .set_bool("strict", inv_fisher > gamma_psi)
        .set_f64("a", a)
        .set_u64("seed", inv.seed);
    Ok(report)
}

pub fn jeffreys(inv: &Invocation) -> Result<Report> {
    let model = setup::build_model(&inv.config.model)?;
    let lo = model.domain().lower()[0];
    let hi = model.domain().upper()[0];
    let prior = jeffreys_prior(model, &inv.opts)?;
    let count = inv.config.run.grid.unwrap_or(101).max(1);
    let mut rows = Vec::with_capacity(count);
    for t in grid_points(lo, hi, count) {
        rows.push(vec![t, prior.density(&[t])]);
    }
    let mut report = Report::new("information-volume prior density", "root determinant");
    report
        .set_f64("normalization_witness", prior.normalization_witness())
        .set_u64("points", count as u64)
        .set_u64("seed", inv.seed)
        .set_grid(&["theta", "density"], rows);
    Ok(report)
}
