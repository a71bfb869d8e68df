//! Run configuration: one JSON document drives the CLI, the service and sweeps.
//!
//! Every field has a default, so `{}` is a complete configuration. Unknown keys
//! are rejected. The resolved document (defaults filled in) is hashed into a
//! fingerprint that every artifact carries.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::abm::{init_near_equilibrium, init_random, AbmState};
use crate::economy::{random_preferences, uniform_substitution, DynParams, Economy, Elasticity, Household};
use crate::equilibrium::{self, Equilibrium};
use crate::error::{Error, Result};
use crate::naive::NaiveParams;
use crate::network::regular_links;
use crate::phase::Thresholds;
use crate::seeds::{Seeds, Stream};
use crate::spectral::calibrate_epsilon;

/// A number that may also be written `"inf"` (JSON has no infinity).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 > 0.0 {
            s.serialize_str("inf")
        } else if self.0 < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::F(x) => Ok(Num(x)),
            Raw::S(s) => match s.to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "+inf" => Ok(Num(f64::INFINITY)),
                "-inf" | "-infinity" => Ok(Num(f64::NEG_INFINITY)),
                "nan" => Ok(Num(f64::NAN)),
                _ => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got \"{s}\""))),
            },
        }
    }
}

/// Serde adapter writing non-finite `f64` fields as strings.
pub mod num_f64 {
    use super::Num;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        Num(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Num::deserialize(d).map(|n| n.0)
    }
}

/// [`num_f64`] for vectors.
pub mod num_vec {
    use super::Num;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| Num(*x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Num>::deserialize(d).map(|v| v.into_iter().map(|n| n.0).collect())
    }
}

/// Per-firm parameter: a value, a uniform interval drawn independently per
/// firm, or a multiple of each firm's alpha.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSpec {
    Value(Num),
    Interval([Num; 2]),
    Scaled { times_alpha: f64 },
}

impl ParamSpec {
    fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            ParamSpec::Value(x) => Some((x.0, x.0)),
            ParamSpec::Interval([a, b]) => Some((a.0, b.0)),
            ParamSpec::Scaled { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EconomyConfig {
    pub n: usize,
    pub d: usize,
    pub weight: f64,
    /// Returns to scale.
    pub b: f64,
    /// CES elasticity parameter: 0 is Leontief, "inf" is Cobb-Douglas.
    pub q: Num,
    /// Explicit `n x (n+1)` links (column 0 is labour). Overrides `n`, `d`, `weight`.
    pub links: Option<Vec<Vec<f64>>>,
    /// Explicit substitution weights; uniform over inputs when absent.
    pub substitution: Option<Vec<Vec<f64>>>,
    /// Productivities before calibration; all ones when absent.
    pub z: Option<Vec<f64>>,
    /// Consumption preferences; iid uniform, normalised, when absent.
    pub theta0: Option<Vec<f64>>,
}

impl Default for EconomyConfig {
    fn default() -> Self {
        EconomyConfig { n: 100, d: 15, weight: 1.0, b: 0.95, q: Num(0.0), links: None, substitution: None, z: None, theta0: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HouseholdConfig {
    pub frisch: Num,
    pub l0: f64,
    pub work_aversion: f64,
}

impl Default for HouseholdConfig {
    fn default() -> Self {
        HouseholdConfig { frisch: Num(1.0), l0: 1.0, work_aversion: 1.0 }
    }
}

/// Behavioural parameters. `alpha_p`, `beta`, `beta_p` default to each firm's
/// alpha; `omega_p` defaults to `omega`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub alpha: ParamSpec,
    pub alpha_p: Option<ParamSpec>,
    pub beta: Option<ParamSpec>,
    pub beta_p: Option<ParamSpec>,
    pub sigma: ParamSpec,
    pub omega: f64,
    pub omega_p: Option<f64>,
    pub lambda: f64,
    pub update_factor: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            alpha: ParamSpec::Value(Num(0.6)),
            alpha_p: None,
            beta: None,
            beta_p: None,
            sigma: ParamSpec::Value(Num(0.5)),
            omega: 0.1,
            omega_p: None,
            lambda: 1.0,
            update_factor: crate::economy::DEFAULT_UPDATE_FACTOR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBlock {
    pub steps: usize,
    /// Relative size of the initial perturbation around equilibrium.
    pub delta: f64,
    /// Master seeds; sweeps vote over all of them, `simulate` uses the first.
    pub seeds: Vec<u64>,
    /// Classification window; half the run when absent.
    pub window: Option<usize>,
    /// Range for random initial prices and production levels when no equilibrium exists.
    pub init_range: [f64; 2],
    /// Run the twin trajectory for the chaos proxy when the spectrum is not peaked.
    pub twin: bool,
}

impl Default for RunBlock {
    fn default() -> Self {
        RunBlock { steps: 5000, delta: 1e-3, seeds: vec![1], window: None, init_range: [1.0, 2.0], twin: true }
    }
}

impl RunBlock {
    pub fn window(&self) -> usize {
        self.window.unwrap_or(self.steps / 2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Alpha,
    Sigma,
    Omega,
    Eps,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Sigma => "sigma",
            SweepParam::Omega => "omega",
            SweepParam::Eps => "eps",
        }
    }
}

/// Grid axis: explicit `values`, or `n` points evenly spaced on `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub param: SweepParam,
    #[serde(default)]
    pub values: Option<Vec<Num>>,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
}

impl AxisSpec {
    pub fn linspace(param: SweepParam, lo: f64, hi: f64, n: usize) -> Self {
        AxisSpec { param, values: None, lo: Some(lo), hi: Some(hi), n: Some(n) }
    }

    pub fn resolve(&self) -> Result<Vec<f64>> {
        let path = format!("sweep.{}", self.param.name());
        if let Some(v) = &self.values {
            if v.is_empty() {
                return Err(cfg_err(&path, "axis has no values"));
            }
            return Ok(v.iter().map(|x| x.0).collect());
        }
        match (self.lo, self.hi, self.n) {
            (Some(lo), Some(hi), Some(n)) if n >= 1 && lo.is_finite() && hi.is_finite() => {
                if n == 1 {
                    return Ok(vec![lo]);
                }
                Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
            }
            _ => Err(cfg_err(&path, "axis needs `values` or finite `lo`, `hi` and `n >= 1`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub x: AxisSpec,
    pub y: AxisSpec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { x: AxisSpec::linspace(SweepParam::Alpha, 0.1, 1.0, 10), y: AxisSpec::linspace(SweepParam::Sigma, 0.0, 1.0, 10) }
    }
}

/// Naive (continuous-time) model runs and linear shock analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NaiveConfig {
    /// Integration horizon; ten analytic relaxation times when absent.
    pub t_end: Option<f64>,
    /// RK4 step; `min(0.01, 0.01 / max speed)` when absent.
    pub dt: Option<f64>,
    /// Record every `stride`-th integration step.
    pub stride: usize,
    /// Productivity shock amplitude for `volatility`.
    pub shock_sigma: f64,
    /// Shock correlation time; 0 is white noise.
    pub correlation_time: f64,
}

impl Default for NaiveConfig {
    fn default() -> Self {
        NaiveConfig { t_end: None, dt: None, stride: 10, shock_sigma: 1e-8, correlation_time: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub stride: usize,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { stride: 1, format: Format::Csv }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub economy: EconomyConfig,
    /// Target smallest eigenvalue of `diag(z) - J`; no calibration when null.
    pub eps: Option<f64>,
    pub household: HouseholdConfig,
    pub dynamics: DynamicsConfig,
    pub run: RunBlock,
    pub sweep: Option<SweepConfig>,
    pub naive: NaiveConfig,
    pub classifier: Thresholds,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            economy: EconomyConfig::default(),
            eps: Some(10.0),
            household: HouseholdConfig::default(),
            dynamics: DynamicsConfig::default(),
            run: RunBlock::default(),
            sweep: None,
            naive: NaiveConfig::default(),
            classifier: Thresholds::default(),
            output: OutputConfig::default(),
        }
    }
}

fn cfg_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), message: message.into() }
}

/// Parses and validates a JSON document.
pub fn parse_config(doc: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(doc);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        cfg_err(if path.is_empty() { "." } else { &path }, e.inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Economy, behavioural parameters and initial state for one seed.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub seed: u64,
    pub econ: Economy,
    pub eq: Option<Equilibrium>,
    pub params: DynParams,
    pub state: AbmState,
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the resolved document, hex encoded.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn n(&self) -> usize {
        self.economy.links.as_ref().map(|l| l.len()).unwrap_or(self.economy.n)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.economy;
        let n = self.n();
        if let Some(links) = &e.links {
            if links.is_empty() || links.iter().any(|r| r.len() != n + 1) {
                return Err(cfg_err("economy.links", format!("expected {n} rows of {} entries", n + 1)));
            }
            if let Some(a) = &e.substitution {
                if a.len() != n || a.iter().any(|r| r.len() != n + 1) {
                    return Err(cfg_err("economy.substitution", "shape must match links"));
                }
            }
        } else {
            if e.substitution.is_some() {
                return Err(cfg_err("economy.substitution", "requires explicit links"));
            }
            if n == 0 {
                return Err(cfg_err("economy.n", "at least one firm is required"));
            }
            if e.d == 0 || e.d >= n {
                return Err(cfg_err("economy.d", format!("degree must satisfy 1 <= d < n = {n}, got {}", e.d)));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(cfg_err("economy.weight", "must be positive"));
            }
        }
        if !(e.b.is_finite() && e.b > 0.0) {
            return Err(cfg_err("economy.b", "must be positive"));
        }
        if e.q.0.is_nan() || e.q.0 < 0.0 {
            return Err(cfg_err("economy.q", "must be >= 0"));
        }
        for (name, v) in [("economy.z", &e.z), ("economy.theta0", &e.theta0)] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(cfg_err(name, format!("expected {n} entries")));
                }
                if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(cfg_err(name, "entries must be positive"));
                }
            }
        }
        if let Some(eps) = self.eps {
            if !eps.is_finite() {
                return Err(cfg_err("eps", "must be finite"));
            }
        }
        let h = &self.household;
        if !(h.frisch.0 > 0.0) {
            return Err(cfg_err("household.frisch", "must be positive"));
        }
        if !(h.l0.is_finite() && h.l0 > 0.0) {
            return Err(cfg_err("household.l0", "must be positive"));
        }
        if !(h.work_aversion.is_finite() && h.work_aversion > 0.0) {
            return Err(cfg_err("household.work_aversion", "must be positive"));
        }
        let dy = &self.dynamics;
        check_param("dynamics.alpha", &dy.alpha, false)?;
        if matches!(dy.alpha, ParamSpec::Scaled { .. }) {
            return Err(cfg_err("dynamics.alpha", "alpha cannot be a multiple of itself"));
        }
        for (name, p) in [("dynamics.alpha_p", &dy.alpha_p), ("dynamics.beta", &dy.beta), ("dynamics.beta_p", &dy.beta_p)] {
            if let Some(p) = p {
                check_param(name, p, false)?;
            }
        }
        check_param("dynamics.sigma", &dy.sigma, true)?;
        if matches!(dy.sigma, ParamSpec::Scaled { .. }) {
            return Err(cfg_err("dynamics.sigma", "sigma cannot be a multiple of alpha"));
        }
        if !(dy.omega.is_finite() && dy.omega >= 0.0) {
            return Err(cfg_err("dynamics.omega", "must be finite and >= 0"));
        }
        if let Some(w) = dy.omega_p {
            if !(w.is_finite() && w >= 0.0) {
                return Err(cfg_err("dynamics.omega_p", "must be finite and >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&dy.lambda) {
            return Err(cfg_err("dynamics.lambda", "must lie in [0, 1]"));
        }
        if !(dy.update_factor.is_finite() && dy.update_factor > 0.0) {
            return Err(cfg_err("dynamics.update_factor", "must be positive"));
        }
        let r = &self.run;
        if r.steps == 0 {
            return Err(cfg_err("run.steps", "must be positive"));
        }
        if !(r.delta.is_finite() && r.delta >= 0.0 && r.delta < 1.0) {
            return Err(cfg_err("run.delta", "must lie in [0, 1)"));
        }
        if r.seeds.is_empty() {
            return Err(cfg_err("run.seeds", "at least one seed is required"));
        }
        if let Some(w) = r.window {
            if w == 0 || 2 * w > r.steps {
                return Err(cfg_err("run.window", format!("must satisfy 1 <= 2 window <= steps = {}", r.steps)));
            }
        } else if r.steps < 2 {
            return Err(cfg_err("run.steps", "default window needs at least 2 steps"));
        }
        let [lo, hi] = r.init_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(cfg_err("run.init_range", "must be a positive interval"));
        }
        if let Some(s) = &self.sweep {
            if s.x.param == s.y.param {
                return Err(cfg_err("sweep", "axes must vary different parameters"));
            }
            for ax in [&s.x, &s.y] {
                for v in ax.resolve()? {
                    let path = format!("sweep.{}", ax.param.name());
                    let ok = match ax.param {
                        SweepParam::Sigma => v >= 0.0,
                        SweepParam::Eps => v.is_finite(),
                        _ => v.is_finite() && v >= 0.0,
                    };
                    if !ok {
                        return Err(cfg_err(&path, format!("invalid value {v}")));
                    }
                }
            }
        }
        let nv = &self.naive;
        if let Some(t) = nv.t_end {
            if !(t.is_finite() && t > 0.0) {
                return Err(cfg_err("naive.t_end", "must be positive"));
            }
        }
        if let Some(dt) = nv.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(cfg_err("naive.dt", "must be positive"));
            }
        }
        if nv.stride == 0 {
            return Err(cfg_err("naive.stride", "must be positive"));
        }
        if !(nv.shock_sigma.is_finite() && nv.shock_sigma >= 0.0) {
            return Err(cfg_err("naive.shock_sigma", "must be finite and >= 0"));
        }
        if !(nv.correlation_time.is_finite() && nv.correlation_time >= 0.0) {
            return Err(cfg_err("naive.correlation_time", "must be finite and >= 0"));
        }
        self.classifier.validate().map_err(|m| cfg_err("classifier", m))?;
        if self.output.stride == 0 {
            return Err(cfg_err("output.stride", "must be positive"));
        }
        Ok(())
    }

    /// Copy with one swept parameter set to `value` (tied parameters follow).
    pub fn with_param(&self, param: SweepParam, value: f64) -> RunConfig {
        let mut c = self.clone();
        match param {
            SweepParam::Alpha => c.dynamics.alpha = ParamSpec::Value(Num(value)),
            SweepParam::Sigma => c.dynamics.sigma = ParamSpec::Value(Num(value)),
            SweepParam::Omega => c.dynamics.omega = value,
            SweepParam::Eps => c.eps = Some(value),
        }
        c
    }

    pub fn household(&self) -> Household {
        let h = &self.household;
        Household { frisch: h.frisch.0, l0: h.l0, work_aversion: h.work_aversion }
    }

    /// Network, preferences and technology for `seed`, before calibration.
    pub fn base_economy(&self, seed: u64) -> Result<Economy> {
        let seeds = Seeds::new(seed);
        let e = &self.economy;
        let n = self.n();
        let links = match &e.links {
            Some(rows) => DMatrix::from_fn(n, n + 1, |i, j| rows[i][j]),
            None => regular_links(n, e.d, seeds.sub_seed(Stream::Network), e.weight)?,
        };
        let substitution = match &e.substitution {
            Some(rows) => DMatrix::from_fn(n, n + 1, |i, j| rows[i][j]),
            None => uniform_substitution(&links),
        };
        let z = e.z.as_ref().map(|v| DVector::from_column_slice(v)).unwrap_or_else(|| DVector::from_element(n, 1.0));
        let theta0 = match &e.theta0 {
            Some(v) => {
                let s: f64 = v.iter().sum();
                DVector::from_iterator(n, v.iter().map(|x| x / s))
            }
            None => random_preferences(n, &mut seeds.rng(Stream::Preferences)),
        };
        Economy::new(links, substitution, z, Elasticity::from_q(e.q.0)?, e.b, theta0, self.household())
    }

    /// Calibrated economy for `seed`.
    pub fn economy(&self, seed: u64) -> Result<Economy> {
        self.calibrate(&self.base_economy(seed)?)
    }

    pub fn calibrate(&self, base: &Economy) -> Result<Economy> {
        match self.eps {
            Some(eps) => calibrate_epsilon(base, eps),
            None => Ok(base.clone()),
        }
    }

    /// Calibrated economy for the naive model, which is defined for
    /// constant-returns Leontief firms only: `economy.q` and `economy.b` are ignored.
    pub fn naive_economy(&self, seed: u64) -> Result<Economy> {
        let base = self.base_economy(seed)?.with_technology(Elasticity::Leontief, 1.0)?;
        self.calibrate(&base)
    }

    /// Per-firm behavioural parameters. Interval draws use one uniform per firm
    /// and parameter from the `Params` stream, so they do not depend on the grid cell.
    pub fn dyn_params(&self, n: usize, seed: u64) -> DynParams {
        let seeds = Seeds::new(seed);
        let dy = &self.dynamics;
        let draw = |spec: &ParamSpec, index: u32, alpha: Option<&[f64]>| -> Vec<f64> {
            let mut rng = seeds.rng_indexed(Stream::Params, index);
            match spec {
                ParamSpec::Value(x) => vec![x.0; n],
                ParamSpec::Interval([a, b]) => (0..n).map(|_| a.0 + (b.0 - a.0) * rng.gen::<f64>()).collect(),
                ParamSpec::Scaled { times_alpha } => alpha.expect("alpha drawn first").iter().map(|a| a * times_alpha).collect(),
            }
        };
        let alpha = draw(&dy.alpha, 0, None);
        let tied = |spec: &Option<ParamSpec>, index: u32| match spec {
            Some(s) => draw(s, index, Some(&alpha)),
            None => alpha.clone(),
        };
        let alpha_p = tied(&dy.alpha_p, 1);
        let beta = tied(&dy.beta, 2);
        let beta_p = tied(&dy.beta_p, 3);
        let sigma = draw(&dy.sigma, 4, None);
        DynParams {
            alpha,
            alpha_p,
            beta,
            beta_p,
            omega: dy.omega,
            omega_p: dy.omega_p.unwrap_or(dy.omega),
            sigma,
            lambda: dy.lambda,
            update_factor: dy.update_factor,
        }
    }

    /// Speeds of the naive model: interval parameters enter through their midpoint.
    pub fn naive_params(&self) -> NaiveParams {
        let dy = &self.dynamics;
        let mid = |p: &ParamSpec, alpha: f64| match p {
            ParamSpec::Value(x) => x.0,
            ParamSpec::Interval([a, b]) => 0.5 * (a.0 + b.0),
            ParamSpec::Scaled { times_alpha } => times_alpha * alpha,
        };
        let alpha = mid(&dy.alpha, 0.0);
        let tied = |p: &Option<ParamSpec>| p.as_ref().map(|p| mid(p, alpha)).unwrap_or(alpha);
        NaiveParams { alpha, alpha_p: tied(&dy.alpha_p), beta: tied(&dy.beta), beta_p: tied(&dy.beta_p) }
    }

    /// Equilibrium of a calibrated economy; `None` when it is not realisable.
    pub fn equilibrium(econ: &Economy) -> Result<Option<Equilibrium>> {
        match equilibrium::solve(econ) {
            Ok(eq) => Ok(Some(eq)),
            Err(Error::NotRealisable { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Initial state: perturbed equilibrium when one exists, random otherwise.
    pub fn initial_state(&self, econ: &Economy, eq: Option<&Equilibrium>, seed: u64) -> Result<AbmState> {
        let mut rng = Seeds::new(seed).rng(Stream::Perturbation);
        match eq {
            Some(eq) => init_near_equilibrium(econ, eq, self.run.delta, &mut rng),
            None => init_random(econ, self.run.init_range[0], self.run.init_range[1], &mut rng),
        }
    }

    /// Scenario on an already calibrated economy.
    pub fn scenario_on(&self, econ: Economy, eq: Option<Equilibrium>, seed: u64) -> Result<Scenario> {
        let params = self.dyn_params(econ.n(), seed);
        params.validate(econ.n())?;
        let state = self.initial_state(&econ, eq.as_ref(), seed)?;
        Ok(Scenario { seed, econ, eq, params, state })
    }

    pub fn scenario(&self, seed: u64) -> Result<Scenario> {
        let econ = self.economy(seed)?;
        let eq = Self::equilibrium(&econ)?;
        self.scenario_on(econ, eq, seed)
    }
}

fn check_param(path: &str, p: &ParamSpec, allow_inf: bool) -> Result<()> {
    if let ParamSpec::Scaled { times_alpha } = p {
        if !(times_alpha.is_finite() && *times_alpha >= 0.0) {
            return Err(cfg_err(path, "times_alpha must be finite and >= 0"));
        }
        return Ok(());
    }
    let (lo, hi) = p.bounds().expect("value or interval");
    let ok = |x: f64| !x.is_nan() && x >= 0.0 && (allow_inf || x.is_finite());
    if !ok(lo) || !ok(hi) {
        return Err(cfg_err(path, format!("values must be >= 0{}", if allow_inf { "" } else { " and finite" })));
    }
    if hi < lo {
        return Err(cfg_err(path, format!("interval [{lo}, {hi}] is reversed")));
    }
    if lo.is_infinite() != hi.is_infinite() {
        return Err(cfg_err(path, "an interval cannot mix finite and infinite ends"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.economy.n, c.economy.d, c.economy.b), (100, 15, 0.95));
        assert_eq!((c.household.frisch.0, c.household.l0, c.dynamics.lambda), (1.0, 1.0, 1.0));
        assert!(c.economy.theta0.is_none());
    }

    #[test]
    fn interval_draws_per_firm_and_ties() {
        let c = parse_config(
            r#"{"economy": {"n": 20, "d": 3}, "dynamics": {"alpha": [0.6, 0.7], "beta_p": {"times_alpha": 1.3}, "sigma": "inf"}}"#,
        )
        .unwrap();
        let p = c.dyn_params(20, 5);
        assert!(p.alpha.iter().all(|a| (0.6..=0.7).contains(a)));
        assert!(p.alpha.iter().any(|a| (a - p.alpha[0]).abs() > 1e-6));
        assert_eq!(p.alpha, p.alpha_p);
        assert_eq!(p.alpha, p.beta);
        for (a, b) in p.alpha.iter().zip(&p.beta_p) {
            assert!((1.3 * a - b).abs() < 1e-15);
        }
        assert!(p.sigma.iter().all(|s| s.is_infinite()));
        assert_eq!(p.omega_p, p.omega);
    }

    #[test]
    fn errors_carry_field_paths() {
        match parse_config(r#"{"economy": {"n": 10, "d": 10}}"#) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "economy.d"),
            other => panic!("{other:?}"),
        }
        match parse_config(r#"{"dynamics": {"alpha": -0.5}}"#) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "dynamics.alpha"),
            other => panic!("{other:?}"),
        }
        match parse_config(r#"{"run": {"steps": "many"}}"#) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "run.steps"),
            other => panic!("{other:?}"),
        }
        match parse_config(r#"{"run": {"stepz": 3}}"#) {
            Err(Error::Config { path, .. }) => assert!(path.starts_with("run"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = parse_config("{}").unwrap();
        let b = parse_config(r#"{"eps": 10.0}"#).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = parse_config(r#"{"eps": 9.0}"#).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
        let back = parse_config(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn sigma_infinity_round_trips() {
        let c = parse_config(r#"{"dynamics": {"sigma": "inf"}}"#).unwrap();
        let back = parse_config(&c.to_json()).unwrap();
        assert_eq!(back.dynamics.sigma, ParamSpec::Value(Num(f64::INFINITY)));
    }

    #[test]
    fn negative_eps_scenario_starts_at_random_state() {
        let c = parse_config(r#"{"economy": {"n": 12, "d": 3}, "eps": -0.5}"#).unwrap();
        let s = c.scenario(2).unwrap();
        assert!(s.eq.is_none());
        assert!(s.state.prices.iter().all(|p| (1.0..=2.0).contains(p)));
    }
}
