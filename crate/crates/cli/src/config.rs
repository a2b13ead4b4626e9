//! Versioned JSON run configuration and its translation into core models.
//!
//! The schema is strict: unknown keys are rejected, the `version` field must
//! match [`SCHEMA_VERSION`], and every model-level invariant is checked here
//! or by the core constructors before any data is read. Command-line flags
//! override file values; defaults fill whatever remains, so the *effective*
//! configuration serialized by [`RunConfig::canonical_json`] pins down a run
//! completely (it is what the report's `config_hash` digests).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use recouple_core::ddnm::SeriesModel;
use recouple_core::dglm::DglmState;
use recouple_core::dlm::{DlmSpec, NigPosterior};
use recouple_core::netflow::{MonitorThresholds, NetworkConfig};
use recouple_core::regression::{BlockDiscounts, RegressionLayout, Term};
use recouple_core::sgdlm::{HotspotConfig, SgdlmConfig};
use recouple_core::structure::ParentalStructure;

use crate::error::{CliError, Result};

/// The one schema version this binary reads.
pub const SCHEMA_VERSION: u32 = 1;

/// Default Monte Carlo sample count N.
pub const DEFAULT_SAMPLES: usize = 5000;
/// Default forecast horizon k.
pub const DEFAULT_HORIZON: usize = 12;
/// Default model power-discount α.
pub const DEFAULT_ALPHA: f64 = 0.99;

fn default_trend() -> Option<usize> {
    Some(0)
}

/// Model family a run drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kind {
    /// Ordered (triangular) dynamic network of Gaussian series.
    #[serde(rename = "ddnm")]
    Ddnm,
    /// Simultaneous parental sets with importance-sample recoupling.
    #[serde(rename = "sgdlm")]
    Sgdlm,
    /// Independent count-valued series (log-link conjugate filters).
    #[serde(rename = "dglm-panel")]
    DglmPanel,
    /// Network-flow monitor over a long-format flow table.
    #[serde(rename = "netflow")]
    Netflow,
}

/// One Fourier seasonal block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeasonalConfig {
    pub period: usize,
    pub harmonics: usize,
}

/// One lagged-outcome predictor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagConfig {
    /// Name of the series whose past outcome enters the regression.
    pub series: String,
    /// Steps back (≥ 1).
    pub lag: usize,
}

/// Per-block state discounts; omitted blocks use 0.98.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trend: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parental: Option<f64>,
}

impl DiscountsConfig {
    fn to_core(&self) -> BlockDiscounts {
        let base = BlockDiscounts::default();
        BlockDiscounts {
            trend: self.trend.unwrap_or(base.trend),
            regression: self.regression.unwrap_or(base.regression),
            parental: self.parental.unwrap_or(base.parental),
        }
    }
}

/// Normal-inverse-gamma prior block. With `mean`/`scale_diag` absent the
/// prior is diffuse: zero mean, `c0`·I scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_diag: Option<Vec<f64>>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { c0: None, dof: None, s: None, mean: None, scale_diag: None }
    }
}

/// One series' state specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    /// Column name in the data panel.
    pub name: String,
    /// Polynomial trend order (0 = local level). `null` drops the trend
    /// block entirely; omitting the key keeps the default local level.
    #[serde(default = "default_trend")]
    pub trend: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seasonal: Vec<SeasonalConfig>,
    /// Contemporaneous parental series, by name, in slot order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lags: Vec<LagConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discounts: Option<DiscountsConfig>,
    /// Volatility discount β.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorConfig>,
}

/// Monitor thresholds for the netflow kind; omitted fields keep the
/// calibrated defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_exceptional: Option<f64>,
}

/// Network section, required when `kind` is `netflow`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Number of real nodes (node 0 in the data is the outside world).
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_intervene: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor_warmup: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor: Option<MonitorConfig>,
}

impl NetworkSection {
    pub fn to_core(&self) -> Result<NetworkConfig> {
        let mut cfg = NetworkConfig::new(self.nodes);
        if let Some(d) = self.delta {
            cfg.delta = d;
        }
        if let Some(c0) = self.c0 {
            cfg.c0 = c0;
        }
        if let Some(a) = self.auto_intervene {
            cfg.auto_intervene = a;
        }
        if let Some(w) = self.monitor_warmup {
            cfg.monitor_warmup = w;
        }
        if let Some(m) = &self.monitor {
            let base = MonitorThresholds::default();
            cfg.thresholds = MonitorThresholds {
                k: m.k.unwrap_or(base.k),
                tau: m.tau.unwrap_or(base.tau),
                l_min: m.l_min.unwrap_or(base.l_min),
                delta_exceptional: m.delta_exceptional.unwrap_or(base.delta_exceptional),
            };
        }
        cfg.thresholds.validate().map_err(CliError::from)?;
        Ok(cfg)
    }
}

/// The full run configuration. Flag overrides are applied by
/// [`RunConfig::apply_overrides`]; fields left `None` afterwards take the
/// documented defaults at the point of use.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<SeriesConfig>,
    /// Evaluation order for the ddnm kind (series names); data order when
    /// absent. Parents must precede their children in this order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<String>>,
    /// Monte Carlo sample count N (forecast ensembles and importance
    /// sampling).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Forecast horizon k.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Model power-discount α for comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Master seed; every random stream in a run derives from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Effective-sample-size floor, as a fraction of N (sgdlm).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ess_floor: Option<f64>,
    /// Discount for the cross-series side model feeding hot-spot entry
    /// scores (sgdlm).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side_discount: Option<f64>,
    /// Parent-slot budget per series; enables hot-spot adaptation (sgdlm).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hotspot_budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSection>,
}

impl RunConfig {
    /// Parse and validate a config file's bytes.
    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_slice(bytes)
            .map_err(|e| CliError::config(format!("{path}: {e}")))?;
        if cfg.version != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "{path}: schema version {} unsupported (this build reads version {SCHEMA_VERSION})",
                cfg.version
            )));
        }
        cfg.validate(path)?;
        Ok(cfg)
    }

    fn validate(&self, path: &str) -> Result<()> {
        match self.kind {
            Kind::Netflow => {
                if self.network.is_none() {
                    return Err(CliError::config(format!(
                        "{path}: kind \"netflow\" needs a \"network\" section"
                    )));
                }
                if !self.series.is_empty() {
                    return Err(CliError::config(format!(
                        "{path}: kind \"netflow\" takes no \"series\" blocks"
                    )));
                }
            }
            _ => {
                if self.series.is_empty() {
                    return Err(CliError::config(format!(
                        "{path}: at least one series block is required"
                    )));
                }
                if self.network.is_some() {
                    return Err(CliError::config(format!(
                        "{path}: \"network\" only applies to kind \"netflow\""
                    )));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.series {
            if !seen.insert(s.name.as_str()) {
                return Err(CliError::config(format!(
                    "{path}: duplicate series name \"{}\"",
                    s.name
                )));
            }
        }
        if self.kind == Kind::DglmPanel {
            for s in &self.series {
                if !s.parents.is_empty() || !s.lags.is_empty() {
                    return Err(CliError::config(format!(
                        "{path}: series \"{}\": dglm-panel series are filtered independently; parents and lags are not supported",
                        s.name
                    )));
                }
                if let Some(p) = &s.prior {
                    if p.dof.is_some() || p.s.is_some() {
                        return Err(CliError::config(format!(
                            "{path}: series \"{}\": count models carry no observational dof/s prior",
                            s.name
                        )));
                    }
                }
            }
        }
        if self.kind != Kind::Ddnm && self.order.is_some() {
            return Err(CliError::config(format!(
                "{path}: \"order\" only applies to kind \"ddnm\""
            )));
        }
        if self.kind != Kind::Sgdlm
            && (self.ess_floor.is_some()
                || self.side_discount.is_some()
                || self.hotspot_budget.is_some())
        {
            return Err(CliError::config(format!(
                "{path}: ess_floor/side_discount/hotspot_budget only apply to kind \"sgdlm\""
            )));
        }
        Ok(())
    }

    /// Fold command-line overrides into the file values.
    pub fn apply_overrides(
        &mut self,
        samples: Option<usize>,
        horizon: Option<usize>,
        alpha: Option<f64>,
        seed: Option<u64>,
    ) {
        if samples.is_some() {
            self.samples = samples;
        }
        if horizon.is_some() {
            self.horizon = horizon;
        }
        if alpha.is_some() {
            self.alpha = alpha;
        }
        if seed.is_some() {
            self.seed = seed;
        }
    }

    pub fn samples(&self) -> usize {
        self.samples.unwrap_or(DEFAULT_SAMPLES)
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(DEFAULT_HORIZON)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(DEFAULT_ALPHA)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// The effective configuration as canonical JSON (struct field order,
    /// no insignificant whitespace). Reruns with equal canonical JSON and
    /// equal data are byte-identical.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialization cannot fail")
    }

    /// First 12 hex digits of the canonical configuration's SHA-256.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical_json().as_bytes());
        let digest = h.finalize();
        hex_prefix(&digest, 12)
    }

    /// Index of each series name.
    pub fn series_index(&self) -> std::collections::HashMap<&str, usize> {
        self.series
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.as_str(), i))
            .collect()
    }

    /// Series names in config order.
    pub fn series_names(&self) -> Vec<String> {
        self.series.iter().map(|s| s.name.clone()).collect()
    }

    /// Resolve every series' parents to indices.
    pub fn parent_indices(&self) -> Result<Vec<Vec<usize>>> {
        let index = self.series_index();
        self.series
            .iter()
            .map(|s| {
                s.parents
                    .iter()
                    .map(|p| {
                        index.get(p.as_str()).copied().ok_or_else(|| {
                            CliError::config(format!(
                                "series \"{}\": parent \"{p}\" is not a configured series",
                                s.name
                            ))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Build the regression layout for one series (Gaussian kinds).
    fn layout(&self, s: &SeriesConfig) -> Result<RegressionLayout> {
        let index = self.series_index();
        let mut terms = Vec::new();
        if let Some(order) = s.trend {
            terms.push(Term::Trend { order });
        }
        for block in &s.seasonal {
            terms.push(Term::Seasonal { period: block.period, harmonics: block.harmonics });
        }
        for lag in &s.lags {
            let series = *index.get(lag.series.as_str()).ok_or_else(|| {
                CliError::config(format!(
                    "series \"{}\": lagged series \"{}\" is not a configured series",
                    s.name, lag.series
                ))
            })?;
            terms.push(Term::Lag { series, lag: lag.lag });
        }
        for parent in &s.parents {
            let series = *index.get(parent.as_str()).ok_or_else(|| {
                CliError::config(format!(
                    "series \"{}\": parent \"{parent}\" is not a configured series",
                    s.name
                ))
            })?;
            terms.push(Term::Parent { series });
        }
        RegressionLayout::new(terms).map_err(CliError::from)
    }

    fn posterior(&self, s: &SeriesConfig, state_dim: usize) -> Result<NigPosterior> {
        let prior = s.prior.clone().unwrap_or_default();
        let c0 = prior.c0.unwrap_or(1.0);
        let dof = prior.dof.unwrap_or(6.0);
        let scale_s = prior.s.unwrap_or(1.0);
        match (&prior.mean, &prior.scale_diag) {
            (None, None) => {
                NigPosterior::diffuse(state_dim, c0, dof, scale_s).map_err(CliError::from)
            }
            (mean, diag) => {
                let mean = mean.clone().unwrap_or_else(|| vec![0.0; state_dim]);
                let diag = diag.clone().unwrap_or_else(|| vec![c0; state_dim]);
                if mean.len() != state_dim || diag.len() != state_dim {
                    return Err(CliError::config(format!(
                        "series \"{}\": prior mean/scale_diag must have {state_dim} entries (state dimension)",
                        s.name
                    )));
                }
                let scale = ndarray::Array2::from_diag(&ndarray::Array1::from(diag));
                NigPosterior::new(ndarray::Array1::from(mean), scale, dof, scale_s)
                    .map_err(CliError::from)
            }
        }
    }

    /// Build the Gaussian series models (ddnm and sgdlm kinds).
    pub fn build_series_models(&self) -> Result<Vec<SeriesModel>> {
        self.series
            .iter()
            .map(|s| {
                let layout = self.layout(s)?;
                let discounts =
                    s.discounts.as_ref().map_or_else(BlockDiscounts::default, |d| d.to_core());
                let beta = s.beta.unwrap_or(0.98);
                let spec = DlmSpec::new(layout, &discounts, beta).map_err(CliError::from)?;
                let state_dim = spec.state_dim();
                let posterior = self.posterior(s, state_dim)?;
                Ok(SeriesModel { spec, posterior })
            })
            .collect()
    }

    /// Per-series block discounts (sgdlm needs them for hot-spot surgery).
    pub fn block_discounts(&self) -> Vec<BlockDiscounts> {
        self.series
            .iter()
            .map(|s| s.discounts.as_ref().map_or_else(BlockDiscounts::default, |d| d.to_core()))
            .collect()
    }

    /// Parental structure for the ddnm kind, honoring `order`.
    pub fn ddnm_structure(&self) -> Result<ParentalStructure> {
        let parents = self.parent_indices()?;
        match &self.order {
            None => ParentalStructure::identity_ordered(parents).map_err(CliError::from),
            Some(names) => {
                let index = self.series_index();
                if names.len() != self.series.len() {
                    return Err(CliError::config(format!(
                        "\"order\" lists {} names for {} series",
                        names.len(),
                        self.series.len()
                    )));
                }
                let order = names
                    .iter()
                    .map(|n| {
                        index.get(n.as_str()).copied().ok_or_else(|| {
                            CliError::config(format!(
                                "\"order\" names unknown series \"{n}\""
                            ))
                        })
                    })
                    .collect::<Result<Vec<usize>>>()?;
                ParentalStructure::ordered(order, parents).map_err(CliError::from)
            }
        }
    }

    /// Driver configuration for the sgdlm kind.
    pub fn sgdlm_config(&self) -> SgdlmConfig {
        let mut cfg = SgdlmConfig {
            i_samples: self.samples(),
            seed: self.seed(),
            ..SgdlmConfig::default()
        };
        if let Some(f) = self.ess_floor {
            cfg.ess_floor = f;
        }
        if let Some(d) = self.side_discount {
            cfg.side_discount = d;
        }
        cfg.hotspot = self.hotspot_budget.map(HotspotConfig::new);
        cfg
    }

    /// Build the count-model states for the dglm-panel kind.
    pub fn build_count_models(&self) -> Result<Vec<DglmState>> {
        self.series
            .iter()
            .map(|s| {
                let layout = self.layout(s)?;
                let discounts =
                    s.discounts.as_ref().map_or_else(BlockDiscounts::default, |d| d.to_core());
                let beta = s.beta.unwrap_or(1.0);
                let spec = DlmSpec::new(layout, &discounts, beta).map_err(CliError::from)?;
                let prior = s.prior.clone().unwrap_or_default();
                let c0 = prior.c0.unwrap_or(1.0);
                match (&prior.mean, &prior.scale_diag) {
                    (None, None) => DglmState::diffuse(spec, c0).map_err(CliError::from),
                    (mean, diag) => {
                        let state_dim = spec.state_dim();
                        let mean = mean.clone().unwrap_or_else(|| vec![0.0; state_dim]);
                        let diag = diag.clone().unwrap_or_else(|| vec![c0; state_dim]);
                        if mean.len() != state_dim || diag.len() != state_dim {
                            return Err(CliError::config(format!(
                                "series \"{}\": prior mean/scale_diag must have {state_dim} entries (state dimension)",
                                s.name
                            )));
                        }
                        let scale =
                            ndarray::Array2::from_diag(&ndarray::Array1::from(diag));
                        DglmState::new(spec, ndarray::Array1::from(mean), scale)
                            .map_err(CliError::from)
                    }
                }
            })
            .collect()
    }
}

/// First `n` hex digits of a digest.
pub fn hex_prefix(digest: &[u8], n: usize) -> String {
    let mut out = String::with_capacity(n);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
        if out.len() >= n {
            break;
        }
    }
    out.truncate(n);
    out
}
