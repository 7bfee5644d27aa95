//! Experiment configuration: a TOML document with one section per concern.
//!
//! Every section has defaults, so a config only needs the keys it changes.
//! Overrides use dotted paths (`frame.payload_bits=100`) and are applied to the
//! parsed document before it is turned into an [`ExperimentConfig`], so they
//! take precedence over the file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ArrayConfig, ClusterModel};
use crate::error::{Error, Result};
use crate::estimation::{LinkBudget, LsSynthesis};
use crate::mc::Workers;
use crate::mmtc::{Annulus, CodedRaConfig, DecodeModel, HoppingPattern, PilotPool, RaProtocol, SucreMode};
use crate::urllc::{ChannelConfig, FrameConfig, LinkScheme, SubcarrierSpacing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SnrTraining,
    OutageTraining,
    TdmVsSdm,
    FddNsSweep,
    LatencyReliability,
    RaCrowded,
    CodedRa,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SnrTraining => "snr-training",
            ExperimentKind::OutageTraining => "outage-training",
            ExperimentKind::TdmVsSdm => "tdm-vs-sdm",
            ExperimentKind::FddNsSweep => "fdd-ns-sweep",
            ExperimentKind::LatencyReliability => "latency-reliability",
            ExperimentKind::RaCrowded => "ra-crowded",
            ExperimentKind::CodedRa => "coded-ra",
        }
    }

    fn is_link(self) -> bool {
        !matches!(self, ExperimentKind::RaCrowded | ExperimentKind::CodedRa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    Iid,
    Cluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub model: ChannelKind,
    pub num_paths: usize,
    pub decay_db: f64,
    /// Path angles are drawn uniformly from this interval (radians).
    pub angle_range: [f64; 2],
    /// Draw one path set for the whole run instead of one per trial.
    pub freeze_paths: bool,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            model: ChannelKind::Cluster,
            num_paths: 20,
            decay_db: 10.0,
            angle_range: [-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2],
            freeze_paths: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    /// Pre-processing SNR `ρ/σ_n²`.
    pub snr_db: f64,
    pub synthesis: LsSynthesis,
}

impl Default for LinkSection {
    fn default() -> Self {
        LinkSection {
            snr_db: 4.5,
            synthesis: LsSynthesis::NoiseShortcut,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSection {
    pub total_symbols: usize,
    pub payload_bits: u32,
    pub scs_khz: u32,
    pub guard_symbols: usize,
}

impl Default for FrameSection {
    fn default() -> Self {
        FrameSection {
            total_symbols: 28,
            payload_bits: 136,
            scs_khz: 60,
            guard_symbols: 1,
        }
    }
}

/// What to sweep; each experiment reads the keys it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub schemes: Vec<LinkScheme>,
    /// Training lengths `t` (TDD) or singular-vector counts `N_s` (FDD).
    pub training: Vec<usize>,
    /// Frame lengths `N` in symbols.
    pub lengths: Vec<usize>,
    /// Path counts `N_P` compared by `fdd-ns-sweep`.
    pub num_paths: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            schemes: vec![LinkScheme::TddMrt, LinkScheme::TddSv],
            training: (1..=8).collect(),
            lengths: vec![28],
            num_paths: vec![4, 16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSection {
    pub total_devices: usize,
    pub pilots: usize,
    /// Offered loads `K₀·P_a/P_p`; each sets `P_a` for the fixed `K₀`.
    pub loads: Vec<f64>,
    /// Received SNR of a cell-edge device.
    pub edge_snr_db: f64,
    pub inner_radius_m: f64,
    pub outer_radius_m: f64,
    pub pathloss_exponent: f64,
}

impl Default for PopulationSection {
    fn default() -> Self {
        let a = Annulus::default();
        PopulationSection {
            total_devices: 10_000,
            pilots: 10,
            loads: vec![1.0, 1.3, 1.6],
            edge_snr_db: 0.0,
            inner_radius_m: a.inner_m,
            outer_radius_m: a.outer_m,
            pathloss_exponent: a.pathloss_exponent,
        }
    }
}

impl PopulationSection {
    pub fn annulus(&self) -> Annulus {
        Annulus {
            inner_m: self.inner_radius_m,
            outer_m: self.outer_radius_m,
            pathloss_exponent: self.pathloss_exponent,
        }
    }

    pub fn activation_prob(&self, load: f64) -> f64 {
        load * self.pilots as f64 / self.total_devices as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RaSection {
    pub protocols: Vec<RaProtocol>,
    pub mode: SucreMode,
    pub max_attempts: u32,
    pub blocks: u64,
    pub warmup_blocks: u64,
    pub batches: u64,
    pub soft_eta: f64,
    /// SNR of the DL precoded pilot, used by the finite-M power estimate.
    pub dl_snr_db: f64,
}

impl Default for RaSection {
    fn default() -> Self {
        RaSection {
            protocols: vec![RaProtocol::Baseline, RaProtocol::SucreHard, RaProtocol::SucreSoft],
            mode: SucreMode::Asymptotic,
            max_attempts: 10,
            blocks: 2000,
            warmup_blocks: 100,
            batches: 20,
            soft_eta: 3.0,
            dl_snr_db: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodedSection {
    /// Frame lengths `L` to compare.
    pub slots: Vec<usize>,
    pub slot_activation_prob: f64,
    pub decode_model: CodedDecode,
    /// SINR threshold of the `sinr-threshold` model (dB).
    pub gamma_th_db: f64,
    pub pattern: HoppingPattern,
    /// Mean number of active devices per frame.
    pub active_devices: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodedDecode {
    GenieSingleton,
    SinrThreshold,
}

impl Default for CodedSection {
    fn default() -> Self {
        CodedSection {
            slots: vec![2, 4, 8, 16],
            slot_activation_prob: 0.5,
            decode_model: CodedDecode::GenieSingleton,
            gamma_th_db: 0.0,
            pattern: HoppingPattern::PerSlot,
            active_devices: 10.0,
        }
    }
}

impl CodedSection {
    pub fn config(&self, num_slots: usize) -> CodedRaConfig {
        CodedRaConfig {
            num_slots,
            slot_activation_prob: self.slot_activation_prob,
            decode_model: match self.decode_model {
                CodedDecode::GenieSingleton => DecodeModel::GenieSingleton,
                CodedDecode::SinrThreshold => DecodeModel::SinrThreshold {
                    gamma_th: crate::stats::db_to_linear(self.gamma_th_db),
                },
            },
            pattern: self.pattern,
        }
    }
}

/// A complete, self-describing experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Monte-Carlo trials (frames for `coded-ra`; ignored by `ra-crowded`, which uses `ra.blocks`).
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// Upper bound for automatic trial escalation; no escalation when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_trials: Option<u64>,
    #[serde(default)]
    pub workers: Workers,
    #[serde(default = "default_antennas")]
    pub num_antennas: usize,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub frame: FrameSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub population: PopulationSection,
    #[serde(default)]
    pub ra: RaSection,
    #[serde(default)]
    pub coded: CodedSection,
}

fn default_seed() -> u64 {
    1
}

fn default_trials() -> u64 {
    10_000
}

fn default_antennas() -> usize {
    64
}

fn field(path: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field: path.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| field("<document>", e.to_string()))?;
        Self::from_table(value)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        table.try_into().map_err(|e: toml::de::Error| field("<document>", e.to_string()))
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serialises to TOML")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    /// Applies `key=value` overrides; values are read as TOML and fall back to strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = self.to_table();
        for o in overrides {
            apply_override(&mut table, o.as_ref())?;
        }
        Self::from_table(table)
    }

    /// Compact JSON form with the worker count reset, so it does not depend on
    /// how the run was parallelised.
    pub fn canonical_json(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = Workers::Auto;
        serde_json::to_string(&canonical).expect("config serialises to JSON")
    }

    /// SHA-256 of [`canonical_json`](Self::canonical_json).
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn array(&self) -> Result<ArrayConfig> {
        ArrayConfig::ula(self.num_antennas).map_err(|_| field("num_antennas", "must be at least 1"))
    }

    pub fn cluster_model(&self, num_paths: usize) -> Result<ClusterModel> {
        let c = &self.channel;
        ClusterModel::with_angle_range(num_paths, c.decay_db, (c.angle_range[0], c.angle_range[1])).map_err(|e| relabel(e, "channel"))
    }

    pub fn channel_config(&self, num_paths: usize) -> Result<ChannelConfig> {
        let array = self.array()?;
        let mut cfg = match self.channel.model {
            ChannelKind::Iid => ChannelConfig::iid(array),
            ChannelKind::Cluster => ChannelConfig::cluster(array, self.cluster_model(num_paths)?),
        };
        cfg.freeze_paths = self.channel.freeze_paths;
        Ok(cfg)
    }

    pub fn budget(&self) -> Result<LinkBudget> {
        LinkBudget::from_snr_db(self.link.snr_db).map_err(|_| field("link.snr_db", "must be finite"))
    }

    pub fn frame_config(&self, total_symbols: usize) -> Result<FrameConfig> {
        let f = &self.frame;
        let scs = SubcarrierSpacing::try_from(f.scs_khz).map_err(|e| field("frame.scs_khz", e))?;
        FrameConfig::new(total_symbols, f.payload_bits, scs, f.guard_symbols).map_err(|e| relabel(e, ""))
    }

    pub fn pool(&self) -> Result<PilotPool> {
        PilotPool::new(self.population.pilots).map_err(|_| field("population.pilots", "must be at least 1"))
    }

    /// Checks everything the selected experiment will use, before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(field("trials", "must be at least 1"));
        }
        if let Some(max) = self.max_trials {
            if max < self.trials {
                return Err(field("max_trials", format!("must be at least trials ({})", self.trials)));
            }
        }
        if let Workers::Fixed(0) = self.workers {
            return Err(field("workers", "must be positive or \"auto\""));
        }
        self.array()?;
        let kind = self.experiment;
        if kind.is_link() {
            self.budget()?;
            let ch = &self.channel;
            if !(ch.decay_db >= 0.0 && ch.decay_db.is_finite()) {
                return Err(field("channel.decay_db", "must be non-negative"));
            }
            if ch.model == ChannelKind::Cluster {
                self.cluster_model(ch.num_paths)?;
            }
            self.frame_config(self.frame.total_symbols)?;
        }
        let sweep = &self.sweep;
        match kind {
            ExperimentKind::SnrTraining | ExperimentKind::OutageTraining => {
                nonempty("sweep.schemes", &sweep.schemes)?;
                nonempty("sweep.training", &sweep.training)?;
                let n = self.frame.total_symbols;
                for &s in &sweep.schemes {
                    for &t in &sweep.training {
                        if s != LinkScheme::PerfectCsi && t < 1 {
                            return Err(field("sweep.training", "training lengths start at 1"));
                        }
                        if s.overhead(t, self.frame.guard_symbols) >= n {
                            return Err(field(
                                "sweep.training",
                                format!("{} with training {t} leaves no data symbols in a {n}-symbol frame", s.name()),
                            ));
                        }
                        if s == LinkScheme::Fdd && ch_rank(self) < t {
                            return Err(field("sweep.training", format!("N_s = {t} exceeds the channel rank {}", ch_rank(self))));
                        }
                    }
                }
            }
            ExperimentKind::FddNsSweep => {
                nonempty("sweep.num_paths", &sweep.num_paths)?;
                if self.channel.model != ChannelKind::Cluster {
                    return Err(field("channel.model", "fdd-ns-sweep needs the cluster model"));
                }
                for &np in &sweep.num_paths {
                    self.cluster_model(np).map_err(|e| relabel(e, "sweep.num_paths"))?;
                    if 2 * np.min(self.num_antennas) >= self.frame.total_symbols {
                        return Err(field(
                            "frame.total_symbols",
                            format!("too short to train all {np} singular vectors (needs more than {})", 2 * np),
                        ));
                    }
                }
            }
            ExperimentKind::LatencyReliability => {
                nonempty("sweep.schemes", &sweep.schemes)?;
                nonempty("sweep.lengths", &sweep.lengths)?;
                let min_n = if sweep.schemes.contains(&LinkScheme::Fdd) { 3 } else { 2 + self.frame.guard_symbols };
                for &n in &sweep.lengths {
                    if n < min_n {
                        return Err(field("sweep.lengths", format!("frame length {n} leaves no room for training and data")));
                    }
                }
            }
            ExperimentKind::TdmVsSdm => {
                nonempty("sweep.lengths", &sweep.lengths)?;
                nonempty("sweep.training", &sweep.training)?;
                if sweep.training.len() != 1 || sweep.training[0] < 1 {
                    return Err(field("sweep.training", "tdm-vs-sdm takes a single training length >= 1"));
                }
                if self.num_antennas < 2 {
                    return Err(field("num_antennas", "zero-forcing two devices needs at least 2 antennas"));
                }
            }
            ExperimentKind::RaCrowded => {
                self.validate_population()?;
                nonempty("ra.protocols", &self.ra.protocols)?;
                let r = &self.ra;
                if r.max_attempts < 1 {
                    return Err(field("ra.max_attempts", "must be at least 1"));
                }
                if r.batches < 2 {
                    return Err(field("ra.batches", "need at least two batches"));
                }
                if r.blocks < r.batches {
                    return Err(field("ra.blocks", format!("need at least ra.batches ({}) blocks", r.batches)));
                }
                if !(r.soft_eta > 0.0 && r.soft_eta.is_finite()) {
                    return Err(field("ra.soft_eta", "must be positive"));
                }
                if !r.dl_snr_db.is_finite() {
                    return Err(field("ra.dl_snr_db", "must be finite"));
                }
            }
            ExperimentKind::CodedRa => {
                self.validate_population()?;
                let c = &self.coded;
                nonempty("coded.slots", &c.slots)?;
                if c.slots.contains(&0) {
                    return Err(field("coded.slots", "frames need at least one slot"));
                }
                if !(0.0..=1.0).contains(&c.slot_activation_prob) {
                    return Err(field("coded.slot_activation_prob", "must lie in [0, 1]"));
                }
                if !(c.active_devices >= 0.0 && c.active_devices <= self.population.total_devices as f64) {
                    return Err(field("coded.active_devices", "must lie between 0 and population.total_devices"));
                }
                if !c.gamma_th_db.is_finite() {
                    return Err(field("coded.gamma_th_db", "must be finite"));
                }
            }
        }
        Ok(())
    }

    fn validate_population(&self) -> Result<()> {
        let p = &self.population;
        if p.total_devices < 1 {
            return Err(field("population.total_devices", "must be at least 1"));
        }
        self.pool()?;
        p.annulus().validate().map_err(|e| relabel(e, ""))?;
        if !p.edge_snr_db.is_finite() {
            return Err(field("population.edge_snr_db", "must be finite"));
        }
        if self.experiment == ExperimentKind::RaCrowded {
            nonempty("population.loads", &p.loads)?;
            for &l in &p.loads {
                let pa = p.activation_prob(l);
                if !(0.0..=1.0).contains(&pa) {
                    return Err(field("population.loads", format!("load {l} gives activation probability {pa} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

fn ch_rank(cfg: &ExperimentConfig) -> usize {
    match cfg.channel.model {
        ChannelKind::Iid => cfg.num_antennas,
        ChannelKind::Cluster => cfg.channel.num_paths.min(cfg.num_antennas),
    }
}

fn nonempty<T>(path: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(field(path, "must not be empty"));
    }
    Ok(())
}

/// Prefixes the field path of a module-level error with its config section.
fn relabel(e: Error, section: &str) -> Error {
    match e {
        Error::InvalidConfig { field: f, reason } if !section.is_empty() && !f.starts_with(section) => Error::InvalidConfig {
            field: format!("{section}.{f}"),
            reason,
        },
        other => other,
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| field(assignment, "override must look like key=value"))?;
    let path = path.trim();
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(field(path, "empty key in override path"));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cur = table;
    for k in parents {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| field(path, format!("`{k}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
