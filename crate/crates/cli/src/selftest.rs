//! Built-in verification: every shipping check at full scale, reported
//! one line per check. Mirrors the acceptance test suite so a deployed
//! binary can re-verify itself without the source tree.

use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;

use errstruct::asymptotics::{
    crlb_check, fisher_vs_gamma, ks_distance_to_normal, mle_error_sample, simulate_psi_variance,
};
use errstruct::jeffreys::{jeffreys_prior, verify_jeffreys_invariance};
use errstruct::model::{product_model, pushforward_model, NormalLocation, NormalScale};
use errstruct::quad::{integrate_auto, QuadOptions};
use errstruct::rng::seeded_rng;
use errstruct::structure::from_model;
use errstruct::transforms::{
    image_componentwise, image_conditional, image_conditional_exact, image_conditional_mc,
    image_injective, product,
};
use errstruct::{
    BranchMap, ErrorStructure, FisherMethod, Functional, Matrix, ParameterDomain, PriorMeasure,
    Sample,
};

pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

type Check = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if $cond {
        } else {
            return Err(format!($($arg)*));
        }
    };
}

fn punctured_interval() -> ParameterDomain {
    ParameterDomain::interval(-1.0, 1.0)
        .expect("static bounds")
        .exclude(vec![0.0])
        .expect("interior point")
}

fn punctured_square_setup() -> (ErrorStructure, BranchMap) {
    let domain = punctured_interval();
    let model = NormalLocation::new(domain.clone()).expect("valid domain");
    let prior = PriorMeasure::uniform(domain.clone()).expect("bounded domain");
    let structure = from_model(model, prior, FisherMethod::Analytic).expect("regular model");
    let psi = BranchMap::square(domain).expect("valid map");
    (structure, psi)
}

fn explicit_scalar(lo: f64, hi: f64, base: f64) -> ErrorStructure {
    let domain = ParameterDomain::interval(lo, hi).expect("static bounds");
    let prior = PriorMeasure::uniform(domain.clone()).expect("bounded domain");
    ErrorStructure::explicit(domain, prior, move |t| {
        Matrix::from_rows(&[&[base + 0.5 * t[0] * t[0]]])
    })
    .expect("positive field")
}

fn check_image_field() -> Check {
    let start = Instant::now();
    let (structure, psi) = punctured_square_setup();
    let image = image_conditional(&structure, &psi).map_err(|e| e.to_string())?;
    for i in 1..=9 {
        let a = i as f64 / 10.0;
        let got = image
            .structure()
            .gamma_matrix(&[a])
            .map_err(|e| e.to_string())?[(0, 0)];
        ensure!((got - 4.0 * a).abs() <= 1e-12, "field at a = {a}: {got}");
    }
    let identity = Functional::coordinate(1, 0);
    for (k, &a) in [0.25, 0.5, 0.75].iter().enumerate() {
        let est = image_conditional_mc(
            &structure,
            &psi,
            &identity,
            a,
            1_000_000,
            None,
            100 + k as u64,
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            (est.estimate - 4.0 * a).abs() <= 0.02 * 4.0 * a,
            "kernel estimate at a = {a}: {} vs {}",
            est.estimate,
            4.0 * a
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure!(elapsed < 60.0, "took {elapsed:.1}s, limit 60s");
    Ok(format!(
        "closed form 1e-12, kernel within 2 percent, {elapsed:.1}s"
    ))
}

fn check_conditional_risk() -> Check {
    let start = Instant::now();
    let domain = punctured_interval();
    let model = NormalLocation::new(domain.clone()).expect("valid domain");
    let prior = PriorMeasure::uniform(domain.clone()).expect("bounded domain");
    let psi = BranchMap::square(domain).expect("valid map");
    let report = simulate_psi_variance(&model, &prior, &psi, 0.25, 10_000, 10_000, 1e-3, 202)
        .map_err(|e| e.to_string())?;
    let got = report.report.estimate;
    ensure!(
        (got - 1.0).abs() <= 0.05,
        "risk {got} off 1 by more than 5 percent"
    );
    let elapsed = start.elapsed().as_secs_f64();
    ensure!(elapsed < 600.0, "took {elapsed:.1}s, limit 600s");
    Ok(format!(
        "risk {got:.4} within 5 percent of 1, {elapsed:.1}s"
    ))
}

fn check_information_bound() -> Check {
    let (structure, psi) = punctured_square_setup();
    let domain = punctured_interval();
    let base = NormalLocation::new(domain.clone()).expect("valid domain");
    let prior = PriorMeasure::uniform(domain).expect("bounded domain");
    let image_model = pushforward_model(base, prior, psi.clone()).map_err(|e| e.to_string())?;
    let mut min_margin = f64::INFINITY;
    for i in 1..=9 {
        let a = i as f64 / 10.0;
        let (inv_info, field) =
            fisher_vs_gamma(&image_model, &structure, &psi, a).map_err(|e| e.to_string())?;
        ensure!(
            inv_info > field + 1e-6,
            "bound not strict at a = {a}: {inv_info} vs {field}"
        );
        min_margin = min_margin.min(inv_info - field);
    }
    let a: f64 = 0.25;
    let s = a.sqrt();
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let p = move |x: f64| 0.5 * pdf(x - s);
    let r = move |x: f64| 0.5 * pdf(x + s);
    let dp = move |x: f64| p(x) * (x - s) / (2.0 * s);
    let dr = move |x: f64| -r(x) * (x + s) / (2.0 * s);
    let opts = QuadOptions::default();
    let quad = |f: &dyn Fn(f64) -> f64| {
        integrate_auto(f, f64::NEG_INFINITY, f64::INFINITY, &opts).map(|q| q.value)
    };
    let lhs = quad(&|x| {
        let d = dp(x) + dr(x);
        d * d / (p(x) + r(x))
    })
    .map_err(|e| e.to_string())?;
    let rhs_p = quad(&|x| dp(x) * dp(x) / p(x)).map_err(|e| e.to_string())?;
    let rhs_r = quad(&|x| dr(x) * dr(x) / r(x)).map_err(|e| e.to_string())?;
    let closed = 1.0 / (8.0 * a);
    ensure!(
        (rhs_p - closed).abs() <= 1e-8,
        "branch integral {rhs_p} vs {closed}"
    );
    ensure!(
        (rhs_r - closed).abs() <= 1e-8,
        "branch integral {rhs_r} vs {closed}"
    );
    ensure!(
        lhs <= rhs_p + rhs_r + 1e-8 && rhs_p + rhs_r - lhs > 1e-3,
        "splitting inequality: lhs {lhs}, rhs {}",
        rhs_p + rhs_r
    );
    Ok(format!(
        "min bound margin {min_margin:.3e}, splitting gap {:.3e}",
        rhs_p + rhs_r - lhs
    ))
}

fn check_error_normality() -> Check {
    let model = NormalLocation::on(-2.0, 2.0).expect("static bounds");
    let errors =
        mle_error_sample(&model, &[0.2], 10_000, 10_000, 404).map_err(|e| e.to_string())?;
    let ks = ks_distance_to_normal(&errors.scaled, 1.0).map_err(|e| e.to_string())?;
    ensure!(ks < 0.02, "ks distance {ks}");
    let squares: Vec<f64> = errors.scaled.iter().map(|e| e * e).collect();
    let mean = squares.iter().sum::<f64>() / squares.len() as f64;
    let var =
        squares.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / (squares.len() as f64 - 1.0);
    let se = (var / squares.len() as f64).sqrt();
    ensure!(
        (mean - 1.0).abs() <= 4.0 * se,
        "scaled risk {mean}, se {se}"
    );
    Ok(format!("ks {ks:.4}, scaled risk {mean:.4}"))
}

fn check_median_risk() -> Check {
    let model = NormalLocation::on(-2.0, 2.0).expect("static bounds");
    let median = |sample: &Sample| {
        let mut v = sample.scalars().expect("scalar model").to_vec();
        let n = v.len();
        let (left, mid, _) = v.select_nth_unstable_by(n / 2, |a, b| a.total_cmp(b));
        let below = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + *mid)
    };
    let n = 10_000;
    let report = crlb_check(
        &model,
        median,
        &Functional::coordinate(1, 0),
        &[0.2],
        n,
        10_000,
        505,
    )
    .map_err(|e| e.to_string())?;
    let risk = report.risk.estimate;
    ensure!(
        risk > report.bound,
        "risk {risk} under bound {}",
        report.bound
    );
    let asymptotic = PI / (2.0 * n as f64);
    ensure!(
        (risk - asymptotic).abs() <= 0.1 * asymptotic,
        "risk {risk} vs pi/(2n) {asymptotic}"
    );
    Ok(format!(
        "risk {risk:.4e} > bound, near pi/(2n) {asymptotic:.4e}"
    ))
}

fn check_image_coherence() -> Check {
    let identity = Functional::coordinate(1, 0);
    let cases: Vec<(&str, ErrorStructure, BranchMap)> = vec![
        (
            "affine",
            explicit_scalar(-2.0, 2.0, 1.0),
            BranchMap::affine(
                1.7,
                -0.4,
                ParameterDomain::interval(-2.0, 2.0).expect("static"),
            )
            .expect("valid map"),
        ),
        (
            "cube",
            explicit_scalar(0.1, 1.2, 1.0),
            BranchMap::cube(ParameterDomain::interval(0.1, 1.2).expect("static"))
                .expect("valid map"),
        ),
        (
            "exp",
            explicit_scalar(-1.0, 1.0, 1.0),
            BranchMap::exp_map(ParameterDomain::interval(-1.0, 1.0).expect("static"))
                .expect("valid map"),
        ),
    ];
    for (name, structure, psi) in &cases {
        let direct = image_injective(structure, psi).map_err(|e| e.to_string())?;
        let lo = psi.image_domain().lower()[0];
        let hi = psi.image_domain().upper()[0];
        for i in 0..100 {
            let a = lo + (i as f64 + 0.5) * (hi - lo) / 100.0;
            let matrix = direct
                .structure()
                .gamma_matrix(&[a])
                .map_err(|e| e.to_string())?[(0, 0)];
            let branch =
                image_conditional_exact(structure, psi, &identity, a).map_err(|e| e.to_string())?;
            ensure!(
                (matrix - branch).abs() <= 1e-8,
                "{name} disagrees at a = {a}: {matrix} vs {branch}"
            );
        }
    }
    let structure = explicit_scalar(-2.0, 2.0, 1.0);
    let inner = BranchMap::affine(
        1.7,
        -0.4,
        ParameterDomain::interval(-2.0, 2.0).expect("static"),
    )
    .expect("valid map");
    let first = image_injective(&structure, &inner).map_err(|e| e.to_string())?;
    let outer =
        BranchMap::exp_map(first.structure().domain().clone()).map_err(|e| e.to_string())?;
    let two_step = image_injective(first.structure(), &outer).map_err(|e| e.to_string())?;
    let composed = inner.compose_injective(&outer).map_err(|e| e.to_string())?;
    let one_step = image_injective(&structure, &composed).map_err(|e| e.to_string())?;
    let lo = composed.image_domain().lower()[0];
    let hi = composed.image_domain().upper()[0];
    for i in 0..100 {
        let a = lo + (i as f64 + 0.5) * (hi - lo) / 100.0;
        let twice = two_step
            .structure()
            .gamma_matrix(&[a])
            .map_err(|e| e.to_string())?[(0, 0)];
        let once = one_step
            .structure()
            .gamma_matrix(&[a])
            .map_err(|e| e.to_string())?[(0, 0)];
        ensure!(
            (twice - once).abs() <= 1e-8,
            "composite at a = {a}: {twice} vs {once}"
        );
    }
    Ok("three maps and the composite agree to 1e-8 on 100-point grids".into())
}

fn check_product_laws() -> Check {
    let s1 = explicit_scalar(-2.0, 2.0, 1.0);
    let s2 = explicit_scalar(-1.0, 1.0, 2.0);
    let joint = product(&s1, &s2).map_err(|e| e.to_string())?;
    let (f0, f1, f2, g0, g1, g2) = (0.3, 0.7, -0.4, -0.2, 0.5, 0.9);
    let f = Functional::scalar_with_gradient(
        1,
        move |t: &[f64]| f0 + f1 * t[0] + f2 * t[0] * t[0],
        move |t: &[f64]| vec![f1 + 2.0 * f2 * t[0]],
    );
    let g = Functional::scalar_with_gradient(
        1,
        move |t: &[f64]| g0 + g1 * t[0] + g2 * t[0] * t[0],
        move |t: &[f64]| vec![g1 + 2.0 * g2 * t[0]],
    );
    let lifted = Functional::scalar_with_gradient(
        2,
        move |t: &[f64]| f0 + f1 * t[0] + f2 * t[0] * t[0] + g0 + g1 * t[1] + g2 * t[1] * t[1],
        move |t: &[f64]| vec![f1 + 2.0 * f2 * t[0], g1 + 2.0 * g2 * t[1]],
    );
    for i in 0..5 {
        for j in 0..5 {
            let t0 = -1.6 + 0.8 * i as f64;
            let t1 = -0.8 + 0.4 * j as f64;
            let whole = joint
                .gamma_quadratic(&lifted, &[t0, t1])
                .map_err(|e| e.to_string())?;
            let parts = s1.gamma_quadratic(&f, &[t0]).map_err(|e| e.to_string())?
                + s2.gamma_quadratic(&g, &[t1]).map_err(|e| e.to_string())?;
            ensure!((whole - parts).abs() <= 1e-12, "additivity at ({t0}, {t1})");
        }
    }

    let psi1 = BranchMap::affine(
        2.0,
        1.0,
        ParameterDomain::interval(-2.0, 2.0).expect("static"),
    )
    .expect("valid map");
    let psi2 = BranchMap::exp_map(ParameterDomain::interval(-1.0, 1.0).expect("static"))
        .expect("valid map");
    let mapped_joint =
        image_componentwise(&joint, &[psi1.clone(), psi2.clone()]).map_err(|e| e.to_string())?;
    let product_of_images = product(
        image_injective(&s1, &psi1)
            .map_err(|e| e.to_string())?
            .structure(),
        image_injective(&s2, &psi2)
            .map_err(|e| e.to_string())?
            .structure(),
    )
    .map_err(|e| e.to_string())?;
    for i in 0..5 {
        for j in 0..5 {
            let a = [
                psi1.image_domain().lower()[0] + (i as f64 + 0.5) * 8.0 / 5.0,
                psi2.image_domain().lower()[0]
                    + (j as f64 + 0.5)
                        * (psi2.image_domain().upper()[0] - psi2.image_domain().lower()[0])
                        / 5.0,
            ];
            let left = mapped_joint
                .structure()
                .gamma_matrix(&a)
                .map_err(|e| e.to_string())?;
            let right = product_of_images
                .gamma_matrix(&a)
                .map_err(|e| e.to_string())?;
            for r in 0..2 {
                for c in 0..2 {
                    ensure!(
                        (left[(r, c)] - right[(r, c)]).abs() <= 1e-8,
                        "commutation at {a:?} entry ({r}, {c})"
                    );
                }
            }
        }
    }

    let opts = QuadOptions::default();
    let location = NormalLocation::on(0.0, 1.0).expect("static bounds");
    let square =
        BranchMap::square(ParameterDomain::interval(0.0, 1.0).expect("static")).expect("valid map");
    let loc_gap = verify_jeffreys_invariance(&location, &square, &opts)
        .map_err(|e| e.to_string())?
        .max_gap;
    ensure!(loc_gap < 1e-6, "location invariance gap {loc_gap}");
    let scale = NormalScale::on(1.0, 2.0).expect("static bounds");
    let log = BranchMap::log_map(ParameterDomain::interval(1.0, 2.0).expect("static"))
        .expect("valid map");
    let scale_gap = verify_jeffreys_invariance(&scale, &log, &opts)
        .map_err(|e| e.to_string())?
        .max_gap;
    ensure!(scale_gap < 1e-6, "scale invariance gap {scale_gap}");
    let joint_model = product_model(
        NormalLocation::on(0.0, 1.0).expect("static bounds"),
        NormalScale::on(1.0, 2.0).expect("static bounds"),
    )
    .map_err(|e| e.to_string())?;
    let joint_prior = jeffreys_prior(joint_model, &opts).map_err(|e| e.to_string())?;
    let first = jeffreys_prior(NormalLocation::on(0.0, 1.0).expect("static"), &opts)
        .map_err(|e| e.to_string())?;
    let second = jeffreys_prior(NormalScale::on(1.0, 2.0).expect("static"), &opts)
        .map_err(|e| e.to_string())?;
    for i in 0..8 {
        for j in 0..8 {
            let a = (i as f64 + 0.5) / 8.0;
            let b = 1.0 + (j as f64 + 0.5) / 8.0;
            let gap =
                (joint_prior.density(&[a, b]) - first.density(&[a]) * second.density(&[b])).abs();
            ensure!(gap <= 1e-6, "factorization gap {gap} at ({a}, {b})");
        }
    }
    Ok(format!(
        "additivity 1e-12, commutation 1e-8, invariance gaps {loc_gap:.2e} and {scale_gap:.2e}, \
         factorization 1e-6"
    ))
}

fn planar_structure() -> ErrorStructure {
    let domain = ParameterDomain::rectangle(vec![-1.5, -1.5], vec![1.5, 1.5]).expect("static");
    let prior = PriorMeasure::uniform(domain.clone()).expect("bounded domain");
    ErrorStructure::explicit(domain, prior, |t| {
        let cross = 0.3 * t[0] * t[1];
        Matrix::from_rows(&[&[1.0 + t[0] * t[0], cross], &[cross, 2.0 + t[1] * t[1]]])
    })
    .expect("positive field")
}

#[derive(Clone)]
struct Quad2 {
    c: [f64; 6],
}

impl Quad2 {
    fn draw(rng: &mut impl Rng) -> Quad2 {
        let mut c = [0.0; 6];
        for v in &mut c {
            *v = rng.gen_range(-1.0..1.0);
        }
        Quad2 { c }
    }

    fn eval(&self, t: &[f64]) -> f64 {
        self.c[0]
            + self.c[1] * t[0]
            + self.c[2] * t[1]
            + self.c[3] * t[0] * t[0]
            + self.c[4] * t[0] * t[1]
            + self.c[5] * t[1] * t[1]
    }

    fn grad(&self, t: &[f64]) -> Vec<f64> {
        vec![
            self.c[1] + 2.0 * self.c[3] * t[0] + self.c[4] * t[1],
            self.c[2] + self.c[4] * t[0] + 2.0 * self.c[5] * t[1],
        ]
    }

    fn functional(&self) -> Functional {
        let value = self.clone();
        let gradient = self.clone();
        Functional::scalar_with_gradient(2, move |t| value.eval(t), move |t| gradient.grad(t))
    }

    fn combine(a: f64, f: &Quad2, b: f64, g: &Quad2) -> Quad2 {
        Quad2 {
            c: std::array::from_fn(|i| a * f.c[i] + b * g.c[i]),
        }
    }
}

fn draw_theta(rng: &mut impl Rng) -> [f64; 2] {
    [rng.gen_range(-1.4..1.4), rng.gen_range(-1.4..1.4)]
}

fn check_property_suites() -> Check {
    let s = planar_structure();
    let cases = 50;

    let mut rng = seeded_rng(801);
    for _ in 0..cases {
        let (f, g, h) = (
            Quad2::draw(&mut rng),
            Quad2::draw(&mut rng),
            Quad2::draw(&mut rng),
        );
        let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let t = draw_theta(&mut rng);
        let combined = Quad2::combine(a, &f, b, &g).functional();
        let lhs = s
            .gamma(&combined, &h.functional(), &t)
            .map_err(|e| e.to_string())?;
        let rhs = a * s
            .gamma(&f.functional(), &h.functional(), &t)
            .map_err(|e| e.to_string())?
            + b * s
                .gamma(&g.functional(), &h.functional(), &t)
                .map_err(|e| e.to_string())?;
        ensure!((lhs - rhs).abs() <= 1e-9, "bilinearity: {lhs} vs {rhs}");
    }

    let mut rng = seeded_rng(802);
    for _ in 0..cases {
        let f = Quad2::draw(&mut rng);
        let (o1, o2): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let t = draw_theta(&mut rng);
        let inner_v = f.clone();
        let inner_g = f.clone();
        let composite = Functional::scalar_with_gradient(
            2,
            move |t: &[f64]| {
                let u = inner_v.eval(t);
                o1 * u + o2 * u * u
            },
            move |t: &[f64]| {
                let u = inner_g.eval(t);
                let du = o1 + 2.0 * o2 * u;
                inner_g.grad(t).into_iter().map(|gi| du * gi).collect()
            },
        );
        let u = f.eval(&t);
        let du = o1 + 2.0 * o2 * u;
        let lhs = s
            .gamma_quadratic(&composite, &t)
            .map_err(|e| e.to_string())?;
        let rhs = du
            * du
            * s.gamma_quadratic(&f.functional(), &t)
                .map_err(|e| e.to_string())?;
        ensure!((lhs - rhs).abs() <= 1e-8, "propagation: {lhs} vs {rhs}");
    }

    let mut rng = seeded_rng(803);
    for _ in 0..cases {
        let (f, g) = (Quad2::draw(&mut rng), Quad2::draw(&mut rng));
        let t = draw_theta(&mut rng);
        let cross = s
            .gamma(&f.functional(), &g.functional(), &t)
            .map_err(|e| e.to_string())?;
        let ff = s
            .gamma_quadratic(&f.functional(), &t)
            .map_err(|e| e.to_string())?;
        let gg = s
            .gamma_quadratic(&g.functional(), &t)
            .map_err(|e| e.to_string())?;
        ensure!(
            cross * cross <= ff * gg + 1e-12 && ff >= -1e-12,
            "cauchy-schwarz"
        );
    }

    let mut rng = seeded_rng(804);
    for _ in 0..cases {
        let f = Quad2::draw(&mut rng);
        let t = draw_theta(&mut rng);
        let form = s
            .gamma_quadratic(&f.functional(), &t)
            .map_err(|e| e.to_string())?;
        let gamma = s.gamma_matrix(&t).map_err(|e| e.to_string())?;
        let grad = f.grad(&t);
        let mut manual = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                manual += grad[i] * gamma[(i, j)] * grad[j];
            }
        }
        ensure!(
            (form - manual).abs() <= 1e-10,
            "gradient norm: {form} vs {manual}"
        );
    }

    let mut rng = seeded_rng(805);
    for _ in 0..cases {
        let c = rng.gen_range(-3.0..3.0);
        let f = Quad2::draw(&mut rng);
        let t = draw_theta(&mut rng);
        let constant = Functional::constant(2, c);
        ensure!(
            s.gamma_quadratic(&constant, &t)
                .map_err(|e| e.to_string())?
                == 0.0,
            "constant has energy"
        );
        ensure!(
            s.gamma(&constant, &f.functional(), &t)
                .map_err(|e| e.to_string())?
                == 0.0,
            "constant couples"
        );
    }

    let mut rng = seeded_rng(806);
    for _ in 0..cases {
        let (w0, w1): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let shrink: f64 = rng.gen_range(0.2..1.0);
        let scale = shrink / (w0.abs() + w1.abs()).max(1e-3);
        let weights = Quad2 {
            c: [0.0, w0 * scale, w1 * scale, 0.0, 0.0, 0.0],
        };
        let t = draw_theta(&mut rng);
        let contraction = weights.functional().with_lipschitz(1.0);
        ensure!(
            s.check_contraction(&contraction, &t)
                .map_err(|e| e.to_string())?,
            "contraction bound failed"
        );
    }

    Ok(format!("six suites, {cases} randomized cases each"))
}

type NamedCheck = (&'static str, fn() -> Check);

pub fn run_all() -> Vec<CheckOutcome> {
    let checks: [NamedCheck; 8] = [
        (
            "image field closed form and kernel estimate",
            check_image_field,
        ),
        ("conditional risk simulation", check_conditional_risk),
        ("information bound strictness", check_information_bound),
        ("estimator error normality and risk", check_error_normality),
        ("median risk versus the bound", check_median_risk),
        ("injective image coherence", check_image_coherence),
        ("product and prior laws", check_product_laws),
        ("randomized property suites", check_property_suites),
    ];
    checks
        .into_iter()
        .map(|(name, run)| match run() {
            Ok(detail) => CheckOutcome {
                name,
                pass: true,
                detail,
            },
            Err(detail) => CheckOutcome {
                name,
                pass: false,
                detail,
            },
        })
        .collect()
}
