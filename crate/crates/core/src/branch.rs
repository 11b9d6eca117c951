//! Piecewise-monotone changes of variables on a one-dimensional domain.
//!
//! A [`BranchMap`] describes a Lipschitz map psi on an interval domain as a
//! finite list of strictly monotone pieces, each carrying its own inverse
//! and derivative. Injective maps have one piece; the square map on a
//! sign-symmetric interval has two. Construction checks the declared data
//! against sampled evaluations, so a mismatched inverse or an optimistic
//! Lipschitz constant fails early instead of corrupting downstream sums.

use crate::domain::ParameterDomain;
use crate::error::{Error, Result};
use std::sync::Arc;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Branch {
    interval: (f64, f64),
    forward: ScalarFn,
    inverse: ScalarFn,
    derivative: ScalarFn,
}

impl Branch {
    pub fn new(
        interval: (f64, f64),
        forward: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inverse: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Branch {
            interval,
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
            derivative: Arc::new(derivative),
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    fn contains(&self, theta: f64) -> bool {
        let (lo, hi) = self.interval;
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        theta > lo - slack && theta < hi + slack
    }
}

/// One antecedent of a point in the image: the branch index, the
/// pre-image theta, and the map's derivative there.
#[derive(Debug, Clone, Copy)]
pub struct Antecedent {
    pub branch: usize,
    pub theta: f64,
    pub derivative: f64,
}

#[derive(Clone)]
pub struct BranchMap {
    branches: Vec<Branch>,
    theta_domain: ParameterDomain,
    image_domain: ParameterDomain,
    lipschitz_constant: f64,
}

const PROBE_POINTS: usize = 65;

impl BranchMap {
    /// Build and validate a piecewise map over `theta_domain`.
    ///
    /// Checks, on sampled points per piece: strict monotonicity of
    /// `forward`, inverse-of-forward returning the argument, the Lipschitz
    /// bound, and that the pieces tile the domain without gaps.
    pub fn new(
        branches: Vec<Branch>,
        theta_domain: ParameterDomain,
        image_domain: ParameterDomain,
        lipschitz_constant: f64,
    ) -> Result<Self> {
        if theta_domain.dim() != 1 || image_domain.dim() != 1 {
            return Err(Error::Unsupported(
                "branch maps are one-dimensional on both sides".into(),
            ));
        }
        if branches.is_empty() {
            return Err(Error::Domain(
                "a branch map needs at least one piece".into(),
            ));
        }
        if !(lipschitz_constant.is_finite() && lipschitz_constant > 0.0) {
            return Err(Error::Domain(format!(
                "invalid Lipschitz constant {lipschitz_constant}"
            )));
        }

        let mut sorted: Vec<&Branch> = branches.iter().collect();
        sorted.sort_by(|a, b| a.interval.0.total_cmp(&b.interval.0));
        let (dom_lo, dom_hi) = (theta_domain.lower()[0], theta_domain.upper()[0]);
        let scale = 1.0 + dom_lo.abs().max(dom_hi.abs());
        let gap_tol = 1e-9 * scale;
        if (sorted[0].interval.0 - dom_lo).abs() > gap_tol
            || (sorted[sorted.len() - 1].interval.1 - dom_hi).abs() > gap_tol
        {
            return Err(Error::Domain(
                "branch intervals do not cover the domain ends".into(),
            ));
        }
        for pair in sorted.windows(2) {
            if (pair[1].interval.0 - pair[0].interval.1).abs() > gap_tol {
                return Err(Error::Domain(format!(
                    "gap between branch intervals at {} .. {}",
                    pair[0].interval.1, pair[1].interval.0
                )));
            }
        }

        for (b_idx, branch) in branches.iter().enumerate() {
            let (lo, hi) = branch.interval;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Unsupported(format!(
                    "branch {b_idx} needs a finite interval, got ({lo}, {hi})"
                )));
            }
            let mut prev: Option<(f64, f64)> = None;
            let mut direction = 0.0_f64;
            for k in 0..PROBE_POINTS {
                let t = lo + (hi - lo) * (k as f64 + 1.0) / (PROBE_POINTS as f64 + 1.0);
                let v = (branch.forward)(t);
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "branch {b_idx} forward value at theta = {t}"
                    )));
                }
                let back = (branch.inverse)(v);
                if (back - t).abs() > 1e-8 * (1.0 + t.abs()) {
                    return Err(Error::Domain(format!(
                        "branch {b_idx} inverse mismatch: theta = {t}, round trip {back}"
                    )));
                }
                if let Some((pt, pv)) = prev {
                    let dv = v - pv;
                    let dt = t - pt;
                    if dv == 0.0 {
                        return Err(Error::Domain(format!(
                            "branch {b_idx} is not strictly monotone near theta = {t}"
                        )));
                    }
                    if direction == 0.0 {
                        direction = dv.signum();
                    } else if dv.signum() != direction {
                        return Err(Error::Domain(format!(
                            "branch {b_idx} changes direction near theta = {t}"
                        )));
                    }
                    if dv.abs() > lipschitz_constant * dt.abs() * (1.0 + 1e-9) {
                        return Err(Error::Domain(format!(
                            "Lipschitz constant {lipschitz_constant} violated on branch {b_idx} near theta = {t}"
                        )));
                    }
                }
                prev = Some((t, v));
            }
        }

        Ok(BranchMap {
            branches,
            theta_domain,
            image_domain,
            lipschitz_constant,
        })
    }

    /// Injective map from a single branch covering the whole domain.
    pub fn single(
        theta_domain: ParameterDomain,
        image_domain: ParameterDomain,
        lipschitz_constant: f64,
        forward: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inverse: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let interval = (theta_domain.lower()[0], theta_domain.upper()[0]);
        BranchMap::new(
            vec![Branch::new(interval, forward, inverse, derivative)],
            theta_domain,
            image_domain,
            lipschitz_constant,
        )
    }

    pub fn identity(theta_domain: ParameterDomain) -> Result<Self> {
        let image = ParameterDomain::interval(theta_domain.lower()[0], theta_domain.upper()[0])?;
        BranchMap::single(theta_domain, image, 1.0, |t| t, |a| a, |_| 1.0)
    }

    pub fn affine(scale: f64, offset: f64, theta_domain: ParameterDomain) -> Result<Self> {
        if scale == 0.0 || !scale.is_finite() || !offset.is_finite() {
            return Err(Error::Domain(format!(
                "affine map needs finite nonzero scale, got {scale}*theta + {offset}"
            )));
        }
        let (lo, hi) = (theta_domain.lower()[0], theta_domain.upper()[0]);
        let (a0, a1) = (scale * lo + offset, scale * hi + offset);
        let image = ParameterDomain::interval(a0.min(a1), a0.max(a1))?;
        BranchMap::single(
            theta_domain,
            image,
            scale.abs(),
            move |t| scale * t + offset,
            move |a| (a - offset) / scale,
            move |_| scale,
        )
    }

    /// theta^2. Splits into two monotone pieces when the domain straddles 0.
    pub fn square(theta_domain: ParameterDomain) -> Result<Self> {
        let (lo, hi) = bounded(&theta_domain)?;
        let top = lo.abs().max(hi.abs());
        let lipschitz = 2.0 * top;
        let image_hi = top * top;
        if lo >= 0.0 {
            let image = ParameterDomain::interval(lo * lo, image_hi)?;
            return BranchMap::single(
                theta_domain,
                image,
                lipschitz,
                |t| t * t,
                |a| a.sqrt(),
                |t| 2.0 * t,
            );
        }
        if hi <= 0.0 {
            let image = ParameterDomain::interval(hi * hi, image_hi)?;
            return BranchMap::single(
                theta_domain,
                image,
                lipschitz,
                |t| t * t,
                |a| -a.sqrt(),
                |t| 2.0 * t,
            );
        }
        let image = ParameterDomain::interval(0.0, image_hi)?;
        let neg = Branch::new((lo, 0.0), |t| t * t, |a: f64| -a.sqrt(), |t| 2.0 * t);
        let pos = Branch::new((0.0, hi), |t| t * t, |a: f64| a.sqrt(), |t| 2.0 * t);
        BranchMap::new(vec![neg, pos], theta_domain, image, lipschitz)
    }

    /// theta^3, injective with a critical point at 0.
    pub fn cube(theta_domain: ParameterDomain) -> Result<Self> {
        let (lo, hi) = bounded(&theta_domain)?;
        let top = lo.abs().max(hi.abs());
        let image = ParameterDomain::interval(lo * lo * lo, hi * hi * hi)?;
        BranchMap::single(
            theta_domain,
            image,
            3.0 * top * top,
            |t| t * t * t,
            |a: f64| a.cbrt(),
            |t| 3.0 * t * t,
        )
    }

    pub fn exp_map(theta_domain: ParameterDomain) -> Result<Self> {
        let (lo, hi) = bounded(&theta_domain)?;
        let image = ParameterDomain::interval(lo.exp(), hi.exp())?;
        BranchMap::single(
            theta_domain,
            image,
            hi.exp(),
            |t| t.exp(),
            |a: f64| a.ln(),
            |t| t.exp(),
        )
    }

    /// log theta on a positive domain.
    pub fn log_map(theta_domain: ParameterDomain) -> Result<Self> {
        let (lo, hi) = bounded(&theta_domain)?;
        if lo <= 0.0 {
            return Err(Error::Domain(format!(
                "log map needs a positive domain, got ({lo}, {hi})"
            )));
        }
        let image = ParameterDomain::interval(lo.ln(), hi.ln())?;
        BranchMap::single(
            theta_domain,
            image,
            1.0 / lo,
            |t| t.ln(),
            |a: f64| a.exp(),
            |t| 1.0 / t,
        )
    }

    pub fn branches(&self) -> usize {
        self.branches.len()
    }

    pub fn is_injective(&self) -> bool {
        self.branches.len() == 1
    }

    pub fn theta_domain(&self) -> &ParameterDomain {
        &self.theta_domain
    }

    pub fn image_domain(&self) -> &ParameterDomain {
        &self.image_domain
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.lipschitz_constant
    }

    /// psi(theta). The pieces tile the domain, so the containing branch is
    /// unique up to shared endpoints where the forward values agree.
    pub fn forward(&self, theta: f64) -> Result<f64> {
        let b = self.branch_at(theta)?;
        Ok((b.forward)(theta))
    }

    /// psi'(theta).
    pub fn derivative(&self, theta: f64) -> Result<f64> {
        let b = self.branch_at(theta)?;
        Ok((b.derivative)(theta))
    }

    fn branch_at(&self, theta: f64) -> Result<&Branch> {
        self.branches
            .iter()
            .find(|b| b.contains(theta))
            .ok_or_else(|| Error::Domain(format!("theta = {theta} is outside every branch")))
    }

    /// All pre-images of `a`, one per branch whose image contains it.
    pub fn antecedents(&self, a: f64) -> Result<Vec<Antecedent>> {
        if !self.image_domain.contains(&[a]) {
            return Err(Error::Domain(format!(
                "a = {a} is outside the image domain"
            )));
        }
        let mut out = Vec::new();
        for (i, b) in self.branches.iter().enumerate() {
            let theta = (b.inverse)(a);
            if !theta.is_finite() || !b.contains(theta) {
                continue;
            }
            let round_trip = (b.forward)(theta);
            if (round_trip - a).abs() > 1e-9 * (1.0 + a.abs()) {
                continue;
            }
            out.push(Antecedent {
                branch: i,
                theta,
                derivative: (b.derivative)(theta),
            });
        }
        if out.is_empty() {
            return Err(Error::Domain(format!(
                "no branch contains an antecedent of a = {a}"
            )));
        }
        Ok(out)
    }

    /// Composite outer(self(theta)) for injective maps.
    pub fn compose_injective(&self, outer: &BranchMap) -> Result<BranchMap> {
        if !self.is_injective() || !outer.is_injective() {
            return Err(Error::Unsupported(
                "composition is implemented for injective maps".into(),
            ));
        }
        let inner_b = self.branches[0].clone();
        let outer_b = outer.branches[0].clone();
        let f_in = inner_b.forward.clone();
        let f_out = outer_b.forward.clone();
        let i_in = inner_b.inverse.clone();
        let i_out = outer_b.inverse.clone();
        let d_in = inner_b.derivative.clone();
        let d_out = outer_b.derivative.clone();
        let lipschitz = self.lipschitz_constant * outer.lipschitz_constant;
        let (lo, hi) = (self.theta_domain.lower()[0], self.theta_domain.upper()[0]);
        let ends = ((f_out)((f_in)(lo)), (f_out)((f_in)(hi)));
        let image = ParameterDomain::interval(ends.0.min(ends.1), ends.0.max(ends.1))?;
        let f_in_fwd = f_in.clone();
        BranchMap::single(
            self.theta_domain.clone(),
            image,
            lipschitz,
            move |t| f_out(f_in_fwd(t)),
            move |a| i_in(i_out(a)),
            move |t| d_out(f_in(t)) * d_in(t),
        )
    }
}

fn bounded(domain: &ParameterDomain) -> Result<(f64, f64)> {
    let (lo, hi) = (domain.lower()[0], domain.upper()[0]);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Unsupported(format!(
            "named maps need a bounded domain, got ({lo}, {hi})"
        )));
    }
    Ok((lo, hi))
}
