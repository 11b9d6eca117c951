//! Flat line-oriented experiment configs: one `section.key = value` pair
//! per line, strict vocabulary, and a canonical serialization so that
//! parse, serialize, parse round-trips to the identical structure.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Logistic,
    Mixture,
    NormalLocation,
    NormalScale,
}

pub const FAMILY_NAMES: [&str; 4] = ["logistic", "mixture", "normal-location", "normal-scale"];

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Logistic => "logistic",
            Family::Mixture => "mixture",
            Family::NormalLocation => "normal-location",
            Family::NormalScale => "normal-scale",
        }
    }

    fn parse(text: &str) -> Result<Self, String> {
        match text {
            "logistic" => Ok(Family::Logistic),
            "mixture" => Ok(Family::Mixture),
            "normal-location" => Ok(Family::NormalLocation),
            "normal-scale" => Ok(Family::NormalScale),
            other => Err(format!(
                "unknown model family '{other}'; valid families: {}",
                FAMILY_NAMES.join(", ")
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBlock {
    pub family: Family,
    pub lower: f64,
    pub upper: f64,
    pub exclude: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorBlock {
    Uniform,
    /// Unnormalized Lipschitz density, an expression in theta.
    Density(String),
    Jeffreys,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NamedMap {
    Identity,
    Square,
    Cube,
    Exp,
    Log,
    Affine(f64, f64),
}

pub const NAMED_MAPS: [&str; 6] = ["affine(a,b)", "cube", "exp", "identity", "log", "square"];

impl NamedMap {
    fn parse(text: &str) -> Result<Self, String> {
        match text {
            "identity" => return Ok(NamedMap::Identity),
            "square" => return Ok(NamedMap::Square),
            "cube" => return Ok(NamedMap::Cube),
            "exp" => return Ok(NamedMap::Exp),
            "log" => return Ok(NamedMap::Log),
            _ => {}
        }
        if let Some(args) = text
            .strip_prefix("affine(")
            .and_then(|rest| rest.strip_suffix(')'))
        {
            let parts: Vec<&str> = args.split(',').collect();
            if parts.len() == 2 {
                let a = parse_float("psi.named", parts[0].trim())?;
                let b = parse_float("psi.named", parts[1].trim())?;
                return Ok(NamedMap::Affine(a, b));
            }
            return Err(format!(
                "affine takes two arguments, got '{text}'; write affine(scale,offset)"
            ));
        }
        Err(format!(
            "unknown map '{text}'; valid named maps: {}",
            NAMED_MAPS.join(", ")
        ))
    }

    fn serialize(&self) -> String {
        match self {
            NamedMap::Identity => "identity".into(),
            NamedMap::Square => "square".into(),
            NamedMap::Cube => "cube".into(),
            NamedMap::Exp => "exp".into(),
            NamedMap::Log => "log".into(),
            NamedMap::Affine(a, b) => format!("affine({a},{b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchSpec {
    pub lower: f64,
    pub upper: f64,
    pub forward: String,
    pub inverse: String,
    pub derivative: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PsiSpec {
    Named(NamedMap),
    Branches(Vec<BranchSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiBlock {
    pub spec: PsiSpec,
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKey {
    Analytic,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKey {
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunBlock {
    pub theta: Option<Vec<f64>>,
    pub a: Option<f64>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub bandwidth: Option<f64>,
    pub tolerance: Option<f64>,
    pub method: Option<MethodKey>,
    pub estimator: Option<EstimatorKey>,
    pub functional: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn as_str(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputBlock {
    pub path: Option<String>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub model2: Option<ModelBlock>,
    pub prior: PriorBlock,
    pub psi: Option<PsiBlock>,
    pub run: RunBlock,
    pub output: OutputBlock,
}

fn parse_float(key: &str, text: &str) -> Result<f64, String> {
    let v = text
        .parse::<f64>()
        .map_err(|_| format!("value '{text}' for '{key}' is not a number"))?;
    if v.is_nan() {
        return Err(format!("value for '{key}' must not be NaN"));
    }
    Ok(v)
}

fn parse_count(key: &str, text: &str) -> Result<usize, String> {
    text.parse::<usize>()
        .map_err(|_| format!("value '{text}' for '{key}' is not a nonnegative integer"))
}

fn parse_float_list(key: &str, text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|part| parse_float(key, part.trim()))
        .collect()
}

fn parse_expression(key: &str, text: &str) -> Result<String, String> {
    expr::parse(text).map_err(|e| format!("bad expression for '{key}': {e}"))?;
    Ok(text.to_string())
}

fn model_from_pairs(
    section: &str,
    pairs: &BTreeMap<String, String>,
    present: bool,
) -> Result<Option<ModelBlock>, String> {
    let get = |field: &str| pairs.get(&format!("{section}.{field}"));
    if !present {
        return Ok(None);
    }
    let family_key = format!("{section}.family");
    let family_text = get("family").ok_or(format!("missing required key '{family_key}'"))?;
    let family = Family::parse(family_text).map_err(|e| format!("{family_key}: {e}"))?;
    let lower_key = format!("{section}.domain.lower");
    let upper_key = format!("{section}.domain.upper");
    let lower = parse_float(
        &lower_key,
        get("domain.lower").ok_or(format!("missing required key '{lower_key}'"))?,
    )?;
    let upper = parse_float(
        &upper_key,
        get("domain.upper").ok_or(format!("missing required key '{upper_key}'"))?,
    )?;
    let exclude = match get("domain.exclude") {
        Some(text) => parse_float_list(&format!("{section}.domain.exclude"), text)?,
        None => Vec::new(),
    };
    Ok(Some(ModelBlock {
        family,
        lower,
        upper,
        exclude,
    }))
}

fn psi_from_pairs(pairs: &BTreeMap<String, String>) -> Result<Option<PsiBlock>, String> {
    let any_psi = pairs.keys().any(|k| k.starts_with("psi."));
    if !any_psi {
        return Ok(None);
    }
    let named = pairs.get("psi.named");
    let branch_keys: Vec<&String> = pairs
        .keys()
        .filter(|k| k.starts_with("psi.branch."))
        .collect();
    if named.is_some() && !branch_keys.is_empty() {
        return Err("psi.named and psi.branch.* keys cannot be combined".into());
    }
    let lipschitz = match pairs.get("psi.lipschitz") {
        Some(text) => Some(parse_float("psi.lipschitz", text)?),
        None => None,
    };
    if let Some(text) = named {
        if lipschitz.is_some() {
            return Err("psi.lipschitz only applies to branch-list maps".into());
        }
        let map = NamedMap::parse(text).map_err(|e| format!("psi.named: {e}"))?;
        return Ok(Some(PsiBlock {
            spec: PsiSpec::Named(map),
            lipschitz: None,
        }));
    }
    if branch_keys.is_empty() {
        return Err("missing required key 'psi.named' (or psi.branch.* keys)".into());
    }
    let mut indices: Vec<usize> = Vec::new();
    for key in &branch_keys {
        let rest = key.strip_prefix("psi.branch.").unwrap();
        let index_text = rest.split('.').next().unwrap_or("");
        let index: usize = index_text
            .parse()
            .map_err(|_| format!("bad branch index in '{key}'"))?;
        if index == 0 {
            return Err(format!("branch indices start at 1, got '{key}'"));
        }
        if !indices.contains(&index) {
            indices.push(index);
        }
    }
    indices.sort_unstable();
    let count = indices.len();
    if indices != (1..=count).collect::<Vec<_>>() {
        return Err(format!(
            "branch indices must be contiguous from 1, got {indices:?}"
        ));
    }
    let mut branches = Vec::with_capacity(count);
    for i in 1..=count {
        let get = |field: &str| pairs.get(&format!("psi.branch.{i}.{field}"));
        let need = |field: &str| {
            get(field).ok_or(format!("missing required key 'psi.branch.{i}.{field}'"))
        };
        let lower = parse_float(&format!("psi.branch.{i}.lower"), need("lower")?)?;
        let upper = parse_float(&format!("psi.branch.{i}.upper"), need("upper")?)?;
        let forward = parse_expression(&format!("psi.branch.{i}.forward"), need("forward")?)?;
        let inverse = parse_expression(&format!("psi.branch.{i}.inverse"), need("inverse")?)?;
        let derivative = match get("derivative") {
            Some(text) => Some(parse_expression(
                &format!("psi.branch.{i}.derivative"),
                text,
            )?),
            None => None,
        };
        branches.push(BranchSpec {
            lower,
            upper,
            forward,
            inverse,
            derivative,
        });
    }
    Ok(Some(PsiBlock {
        spec: PsiSpec::Branches(branches),
        lipschitz,
    }))
}

/// Every key the schema accepts, used to reject unknown keys up front.
fn key_is_known(key: &str) -> bool {
    const FIXED: [&str; 25] = [
        "model.family",
        "model.domain.lower",
        "model.domain.upper",
        "model.domain.exclude",
        "model2.family",
        "model2.domain.lower",
        "model2.domain.upper",
        "model2.domain.exclude",
        "prior.kind",
        "prior.density",
        "psi.named",
        "psi.lipschitz",
        "run.theta",
        "run.a",
        "run.n",
        "run.reps",
        "run.seed",
        "run.grid",
        "run.bandwidth",
        "run.tolerance",
        "run.method",
        "run.estimator",
        "run.functional",
        "output.path",
        "output.format",
    ];
    if FIXED.contains(&key) {
        return true;
    }
    if let Some(rest) = key.strip_prefix("psi.branch.") {
        let mut parts = rest.splitn(2, '.');
        let index_ok = parts
            .next()
            .map(|p| p.parse::<usize>().is_ok())
            .unwrap_or(false);
        let field_ok = matches!(
            parts.next(),
            Some("lower" | "upper" | "forward" | "inverse" | "derivative")
        );
        return index_ok && field_ok;
    }
    false
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, String> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (line_no, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(format!(
                "{origin} line {}: expected key = value, got '{line}'",
                line_no + 1
            ))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !key_is_known(&key) {
                return Err(format!(
                    "{origin} line {}: unknown key '{key}'",
                    line_no + 1
                ));
            }
            if value.is_empty() {
                return Err(format!(
                    "{origin} line {}: empty value for '{key}'",
                    line_no + 1
                ));
            }
            if pairs.insert(key.clone(), value).is_some() {
                return Err(format!(
                    "{origin} line {}: duplicate key '{key}'",
                    line_no + 1
                ));
            }
        }
        ExperimentConfig::from_pairs(&pairs).map_err(|e| format!("{origin}: {e}"))
    }

    fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, String> {
        let model = model_from_pairs("model", pairs, true)?
            .expect("model block is always built when present is true");
        let model2_present = pairs.keys().any(|k| k.starts_with("model2."));
        let model2 = model_from_pairs("model2", pairs, model2_present)?;

        let prior = match pairs.get("prior.kind").map(String::as_str) {
            None | Some("uniform") => {
                if pairs.contains_key("prior.density") {
                    return Err("prior.density is only valid with prior.kind = density".into());
                }
                PriorBlock::Uniform
            }
            Some("density") => {
                let text = pairs
                    .get("prior.density")
                    .ok_or("missing required key 'prior.density'")?;
                PriorBlock::Density(parse_expression("prior.density", text)?)
            }
            Some("jeffreys") => {
                if pairs.contains_key("prior.density") {
                    return Err("prior.density is only valid with prior.kind = density".into());
                }
                PriorBlock::Jeffreys
            }
            Some(other) => {
                return Err(format!(
                    "prior.kind: unknown kind '{other}'; valid kinds: density, jeffreys, uniform"
                ))
            }
        };

        let psi = psi_from_pairs(pairs)?;

        let mut run = RunBlock::default();
        if let Some(text) = pairs.get("run.theta") {
            run.theta = Some(parse_float_list("run.theta", text)?);
        }
        if let Some(text) = pairs.get("run.a") {
            run.a = Some(parse_float("run.a", text)?);
        }
        if let Some(text) = pairs.get("run.n") {
            run.n = Some(parse_count("run.n", text)?);
        }
        if let Some(text) = pairs.get("run.reps") {
            run.reps = Some(parse_count("run.reps", text)?);
        }
        if let Some(text) = pairs.get("run.seed") {
            run.seed = Some(
                text.parse::<u64>()
                    .map_err(|_| format!("value '{text}' for 'run.seed' is not an integer"))?,
            );
        }
        if let Some(text) = pairs.get("run.grid") {
            run.grid = Some(parse_count("run.grid", text)?);
        }
        if let Some(text) = pairs.get("run.bandwidth") {
            run.bandwidth = Some(parse_float("run.bandwidth", text)?);
        }
        if let Some(text) = pairs.get("run.tolerance") {
            run.tolerance = Some(parse_float("run.tolerance", text)?);
        }
        if let Some(text) = pairs.get("run.method") {
            run.method = Some(match text.as_str() {
                "analytic" => MethodKey::Analytic,
                "quadrature" => MethodKey::Quadrature,
                other => {
                    return Err(format!(
                        "run.method: unknown method '{other}'; valid methods: analytic, quadrature"
                    ))
                }
            });
        }
        if let Some(text) = pairs.get("run.estimator") {
            run.estimator = Some(match text.as_str() {
                "mean" => EstimatorKey::Mean,
                "median" => EstimatorKey::Median,
                other => {
                    return Err(format!(
                        "run.estimator: unknown estimator '{other}'; valid estimators: mean, median"
                    ))
                }
            });
        }
        if let Some(text) = pairs.get("run.functional") {
            run.functional = Some(parse_expression("run.functional", text)?);
        }

        let format = match pairs.get("output.format").map(String::as_str) {
            None | Some("json") => Format::Json,
            Some("csv") => Format::Csv,
            Some(other) => {
                return Err(format!(
                    "output.format: unknown format '{other}'; valid formats: csv, json"
                ))
            }
        };
        let output = OutputBlock {
            path: pairs.get("output.path").cloned(),
            format,
        };

        Ok(ExperimentConfig {
            model,
            model2,
            prior,
            psi,
            run,
            output,
        })
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let model_block = |kv: &mut dyn FnMut(&str, String), section: &str, m: &ModelBlock| {
            kv(&format!("{section}.family"), m.family.as_str().into());
            kv(&format!("{section}.domain.lower"), format!("{}", m.lower));
            kv(&format!("{section}.domain.upper"), format!("{}", m.upper));
            if !m.exclude.is_empty() {
                let list: Vec<String> = m.exclude.iter().map(|v| format!("{v}")).collect();
                kv(&format!("{section}.domain.exclude"), list.join(","));
            }
        };
        model_block(&mut kv, "model", &self.model);
        if let Some(m2) = &self.model2 {
            model_block(&mut kv, "model2", m2);
        }
        match &self.prior {
            PriorBlock::Uniform => kv("prior.kind", "uniform".into()),
            PriorBlock::Density(text) => {
                kv("prior.kind", "density".into());
                kv("prior.density", text.clone());
            }
            PriorBlock::Jeffreys => kv("prior.kind", "jeffreys".into()),
        }
        if let Some(psi) = &self.psi {
            match &psi.spec {
                PsiSpec::Named(map) => kv("psi.named", map.serialize()),
                PsiSpec::Branches(branches) => {
                    for (i, b) in branches.iter().enumerate() {
                        let n = i + 1;
                        kv(&format!("psi.branch.{n}.lower"), format!("{}", b.lower));
                        kv(&format!("psi.branch.{n}.upper"), format!("{}", b.upper));
                        kv(&format!("psi.branch.{n}.forward"), b.forward.clone());
                        kv(&format!("psi.branch.{n}.inverse"), b.inverse.clone());
                        if let Some(d) = &b.derivative {
                            kv(&format!("psi.branch.{n}.derivative"), d.clone());
                        }
                    }
                }
            }
            if let Some(l) = psi.lipschitz {
                kv("psi.lipschitz", format!("{l}"));
            }
        }
        if let Some(theta) = &self.run.theta {
            let list: Vec<String> = theta.iter().map(|v| format!("{v}")).collect();
            kv("run.theta", list.join(","));
        }
        if let Some(a) = self.run.a {
            kv("run.a", format!("{a}"));
        }
        if let Some(n) = self.run.n {
            kv("run.n", format!("{n}"));
        }
        if let Some(reps) = self.run.reps {
            kv("run.reps", format!("{reps}"));
        }
        if let Some(seed) = self.run.seed {
            kv("run.seed", format!("{seed}"));
        }
        if let Some(grid) = self.run.grid {
            kv("run.grid", format!("{grid}"));
        }
        if let Some(bandwidth) = self.run.bandwidth {
            kv("run.bandwidth", format!("{bandwidth}"));
        }
        if let Some(tolerance) = self.run.tolerance {
            kv("run.tolerance", format!("{tolerance}"));
        }
        if let Some(method) = self.run.method {
            let name = match method {
                MethodKey::Analytic => "analytic",
                MethodKey::Quadrature => "quadrature",
            };
            kv("run.method", name.into());
        }
        if let Some(estimator) = self.run.estimator {
            let name = match estimator {
                EstimatorKey::Mean => "mean",
                EstimatorKey::Median => "median",
            };
            kv("run.estimator", name.into());
        }
        if let Some(f) = &self.run.functional {
            kv("run.functional", f.clone());
        }
        if let Some(path) = &self.output.path {
            kv("output.path", path.clone());
        }
        kv("output.format", self.output.format.as_str().into());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "
        # squared location scenario
        model.family = normal-location
        model.domain.lower = -1
        model.domain.upper = 1
        model.domain.exclude = 0
        prior.kind = uniform
        psi.named = square
        run.a = 0.25
        run.n = 1000
        run.reps = 200
        run.seed = 7
        output.format = json
    ";

    #[test]
    fn parse_serialize_parse_is_identity() {
        let first = ExperimentConfig::parse(FULL, "test.cfg").unwrap();
        let text = first.serialize();
        let second = ExperimentConfig::parse(&text, "roundtrip.cfg").unwrap();
        assert_eq!(first, second);
        assert_eq!(text, second.serialize());
    }

    #[test]
    fn branch_lists_round_trip() {
        let cfg = "
            model.family = mixture
            model.domain.lower = 0
            model.domain.upper = 1
            psi.branch.1.lower = 0
            psi.branch.1.upper = 1
            psi.branch.1.forward = theta ^ 2
            psi.branch.1.inverse = sqrt(a)
            psi.branch.1.derivative = 2 * theta
            psi.lipschitz = 2
            output.format = csv
        ";
        let first = ExperimentConfig::parse(cfg, "test.cfg").unwrap();
        let second = ExperimentConfig::parse(&first.serialize(), "roundtrip.cfg").unwrap();
        assert_eq!(first, second);
        match &second.psi.as_ref().unwrap().spec {
            PsiSpec::Branches(branches) => assert_eq!(branches.len(), 1),
            other => panic!("expected branches, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_the_key_name() {
        let cfg = "model.family = normal-location\nmodel.sigma = 2\n";
        let err = ExperimentConfig::parse(cfg, "bad.cfg").unwrap_err();
        assert!(err.contains("unknown key 'model.sigma'"), "{err}");
        assert!(err.contains("bad.cfg line 2"), "{err}");
    }

    #[test]
    fn unknown_family_lists_the_valid_ones() {
        let cfg = "model.family = gamma\nmodel.domain.lower = 0\nmodel.domain.upper = 1\n";
        let err = ExperimentConfig::parse(cfg, "bad.cfg").unwrap_err();
        for name in FAMILY_NAMES {
            assert!(err.contains(name), "{err} missing {name}");
        }
    }

    #[test]
    fn missing_model_block_names_the_key() {
        let err = ExperimentConfig::parse("output.format = json\n", "bad.cfg").unwrap_err();
        assert!(err.contains("model.family"), "{err}");
    }

    #[test]
    fn malformed_values_name_the_key() {
        let cfg =
            "model.family = normal-location\nmodel.domain.lower = wide\nmodel.domain.upper = 1\n";
        let err = ExperimentConfig::parse(cfg, "bad.cfg").unwrap_err();
        assert!(err.contains("model.domain.lower"), "{err}");

        let cfg = "model.family = normal-location\nmodel.domain.lower = 0\nmodel.domain.upper = 1\nrun.functional = theta +\n";
        let err = ExperimentConfig::parse(cfg, "bad.cfg").unwrap_err();
        assert!(err.contains("run.functional"), "{err}");

        let cfg = "model.family = normal-location\nmodel.domain.lower = 0\nmodel.domain.upper = 1\npsi.named = spiral\n";
        let err = ExperimentConfig::parse(cfg, "bad.cfg").unwrap_err();
        assert!(err.contains("psi.named"), "{err}");
        assert!(err.contains("square"), "{err}");
    }

    #[test]
    fn duplicate_and_mixed_psi_keys_are_rejected() {
        let cfg = "model.family = mixture\nmodel.family = mixture\n";
        let err = ExperimentConfig::parse(cfg, "bad.cfg").unwrap_err();
        assert!(err.contains("duplicate key 'model.family'"), "{err}");

        let cfg = "
            model.family = mixture
            model.domain.lower = 0
            model.domain.upper = 1
            psi.named = square
            psi.branch.1.lower = 0
            psi.branch.1.upper = 1
            psi.branch.1.forward = theta
            psi.branch.1.inverse = a
        ";
        let err = ExperimentConfig::parse(cfg, "bad.cfg").unwrap_err();
        assert!(err.contains("cannot be combined"), "{err}");
    }

    #[test]
    fn affine_arguments_parse() {
        let cfg = "
            model.family = normal-location
            model.domain.lower = -2
            model.domain.upper = 2
            psi.named = affine(2,1)
        ";
        let parsed = ExperimentConfig::parse(cfg, "test.cfg").unwrap();
        match parsed.psi.unwrap().spec {
            PsiSpec::Named(NamedMap::Affine(a, b)) => {
                assert_eq!(a, 2.0);
                assert_eq!(b, 1.0);
            }
            other => panic!("expected affine, got {other:?}"),
        }
    }
}
