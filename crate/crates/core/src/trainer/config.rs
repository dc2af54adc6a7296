use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::pseudo::GatePolicy;
use super::step::{BaseSupervision, OptimConfig};
use crate::damods::{default_loss_weights, LossWeights, ModuleConfig, ModuleEntry, ModuleKind, Placement};
use crate::datapipe::{Layout, SyntheticCounts, SyntheticSceneSpec, ERFNET_K, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::evalkit::EvalHead;
use crate::segnet::SegNetConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Holds `source/` and `target/` dataset trees.
    pub root: PathBuf,
    /// Render the synthetic benchmark into `root` when it does not exist.
    pub generate_if_missing: bool,
    pub source_dir: String,
    pub target_dir: String,
    pub source_layout: Layout,
    pub target_layout: Layout,
    pub source_size: [usize; 2],
    pub target_size: [usize; 2],
    pub class_weights: bool,
    pub class_weight_k: f64,
    pub augment: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("data/synthetic"),
            generate_if_missing: true,
            source_dir: "source".into(),
            target_dir: "target".into(),
            source_layout: Layout::Synthetic,
            target_layout: Layout::Densepass,
            source_size: [64, 64],
            target_size: [64, 256],
            class_weights: true,
            class_weight_k: ERFNET_K,
            augment: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub scene: SyntheticSceneSpec,
    pub counts: SyntheticCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulesConfig {
    /// Active modules as `KIND:PLACEMENT`, e.g. `S:os`, `A:fs`.
    pub list: Vec<String>,
    /// First-stage width of every discriminator.
    pub ndf: usize,
    pub region_interaction: bool,
    pub base: BaseSupervision,
}

impl Default for ModulesConfig {
    fn default() -> Self {
        Self {
            list: vec!["S:os".into(), "A:os".into()],
            ndf: 8,
            region_interaction: true,
            base: BaseSupervision::default(),
        }
    }
}

pub fn parse_module(s: &str) -> std::result::Result<ModuleEntry, String> {
    let (k, p) = s.split_once(':').ok_or_else(|| format!("module {s:?} is not KIND:PLACEMENT"))?;
    let kind = ModuleKind::parse(k).ok_or_else(|| format!("unknown module kind {k:?} in {s:?}"))?;
    let placement = match p {
        "os" => Placement::Output,
        "fs" => Placement::Feature,
        _ => return Err(format!("unknown placement {p:?} in {s:?} (expected os or fs)")),
    };
    Ok(ModuleEntry { kind, placement })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub max_iter: usize,
    pub batch_size: usize,
    /// Metrics record every this many steps.
    pub log_every: usize,
    /// Validation every this many steps; 0 disables periodic validation.
    pub eval_every: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            max_iter: 200_000,
            batch_size: 2,
            log_every: 1,
            eval_every: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SslInit {
    BestVal,
    Final,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SslConfig {
    pub enabled: bool,
    pub iterations: usize,
    /// Consecutive runs, each regenerating pseudo labels first.
    pub runs: usize,
    pub gate: GatePolicy,
    /// Keep the adversarial terms during self-supervised training.
    pub adversarial: bool,
    pub init: SslInit,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            iterations: 500,
            runs: 1,
            gate: GatePolicy::default(),
            adversarial: true,
            init: SslInit::BestVal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub head: EvalHead,
    pub val_split: String,
    pub test_split: String,
    pub sectors: usize,
    /// Classes shown in the directional table.
    pub classes: Vec<u8>,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            head: EvalHead::C1,
            val_split: "val".into(),
            test_split: "test".into(),
            sectors: 8,
            classes: vec![0, 1, 11, 13],
            batch_size: 4,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub value: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub model: SegNetConfig,
    pub modules: ModulesConfig,
    pub lambdas: LossWeights,
    pub optim: OptimConfig,
    pub schedule: ScheduleConfig,
    pub ssl: SslConfig,
    pub eval: EvalConfig,
    pub seed: SeedConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            model: SegNetConfig::default(),
            modules: ModulesConfig::default(),
            lambdas: default_loss_weights(),
            optim: OptimConfig::default(),
            schedule: ScheduleConfig::default(),
            ssl: SslConfig::default(),
            eval: EvalConfig::default(),
            seed: SeedConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Settings sized for the synthetic benchmark on one CPU core.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.schedule.max_iter = 3000;
        c.schedule.eval_every = 500;
        c.optim.g_lr = 0.01;
        c.optim.d_lr = 1e-4;
        c.optim.ssl_g_lr = 1e-3;
        c.optim.ssl_d_lr = 1e-5;
        c
    }

    pub fn module_config(&self) -> Result<ModuleConfig> {
        let modules = self
            .modules
            .list
            .iter()
            .map(|s| parse_module(s))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(vec![e]))?;
        Ok(ModuleConfig {
            modules,
            lambdas: self.lambdas.clone(),
        })
    }

    /// Every semantic problem, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut entries = Vec::new();
        for s in &self.modules.list {
            match parse_module(s) {
                Ok(e) => entries.push(e),
                Err(e) => errs.push(format!("modules.list: {e}")),
            }
        }
        errs.extend(
            ModuleConfig {
                modules: entries.clone(),
                lambdas: self.lambdas.clone(),
            }
            .validate()
            .into_iter()
            .map(|e| format!("modules.list: {e}")),
        );
        if entries.iter().any(|e| e.kind == ModuleKind::R) && !self.model.region_head {
            errs.push("modules.list: R needs model.region_head = true".into());
        }
        if self.modules.ndf == 0 {
            errs.push("modules.ndf must be positive".into());
        }
        for (k, l) in &self.lambdas {
            for (name, v) in [("seg", l.seg), ("seg_pre", l.seg_pre), ("adv", l.adv), ("d", l.d), ("ent_s", l.ent_s), ("ent_t", l.ent_t)] {
                if !(v >= 0.0 && v.is_finite()) {
                    errs.push(format!("lambdas.{k}.{name} must be a non-negative number, got {v}"));
                }
            }
        }
        errs.extend(self.optim.validate());
        if self.schedule.batch_size == 0 {
            errs.push("schedule.batch_size must be positive".into());
        }
        if self.schedule.log_every == 0 {
            errs.push("schedule.log_every must be positive".into());
        }
        for (name, [h, w]) in [("source_size", self.data.source_size), ("target_size", self.data.target_size)] {
            if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
                errs.push(format!("data.{name} {h}x{w} must be positive multiples of 16"));
            }
        }
        if self.data.class_weight_k <= 1.0 {
            errs.push(format!("data.class_weight_k must exceed 1, got {}", self.data.class_weight_k));
        }
        if self.model.num_classes != NUM_CLASSES {
            errs.push(format!("model.num_classes must be {NUM_CLASSES}"));
        }
        if self.model.channels.iter().any(|&c| c == 0) || self.model.head_channels == 0 {
            errs.push("model.channels and model.head_channels must be positive".into());
        }
        errs.extend(self.synth.scene.validate().into_iter().map(|e| format!("synth.scene: {e}")));
        match self.ssl.gate {
            GatePolicy::Quantile { q } if !(0.0..=1.0).contains(&q) => errs.push(format!("ssl.gate.q must be in [0, 1], got {q}")),
            GatePolicy::Threshold { tau } if tau < 0.0 => errs.push(format!("ssl.gate.tau must be non-negative, got {tau}")),
            _ => {}
        }
        if self.ssl.enabled && self.ssl.runs == 0 {
            errs.push("ssl.runs must be positive when ssl is enabled".into());
        }
        if self.eval.sectors == 0 {
            errs.push("eval.sectors must be positive".into());
        }
        if self.eval.batch_size == 0 {
            errs.push("eval.batch_size must be positive".into());
        }
        if let Some(c) = self.eval.classes.iter().find(|&&c| c as usize >= NUM_CLASSES) {
            errs.push(format!("eval.classes: {c} is not a class id"));
        }
        if self.eval.head == EvalHead::Region && !self.model.region_head {
            errs.push("eval.head = region needs model.region_head = true".into());
        }
        errs
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Short hash of the resolved configuration.
    pub fn run_id(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

fn kind_name(v: &toml::Value) -> &'static str {
    match v {
        toml::Value::String(_) => "string",
        toml::Value::Integer(_) => "integer",
        toml::Value::Float(_) => "float",
        toml::Value::Boolean(_) => "boolean",
        toml::Value::Datetime(_) => "datetime",
        toml::Value::Array(_) => "array",
        toml::Value::Table(_) => "table",
    }
}

/// Keys of `given` absent from `reference` and values whose kind differs.
/// Maps keyed by module kind and tagged gate policies are checked against
/// the first matching entry.
fn schema_errors(given: &toml::Table, reference: &toml::Table, path: &str, errs: &mut Vec<String>) {
    for (k, v) in given {
        let full = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        let Some(r) = reference.get(k) else {
            errs.push(format!("unknown key {full}"));
            continue;
        };
        match (v, r) {
            (toml::Value::Table(a), toml::Value::Table(b)) => {
                // Variant-tagged tables carry variant-specific fields.
                if b.contains_key("kind") {
                    continue;
                }
                schema_errors(a, b, &full, errs)
            }
            (toml::Value::Integer(_), toml::Value::Float(_)) => {}
            (toml::Value::Array(a), toml::Value::Array(b)) => {
                if let Some(proto) = b.first() {
                    for (i, item) in a.iter().enumerate() {
                        let ok = kind_name(item) == kind_name(proto)
                            || matches!((item, proto), (toml::Value::Integer(_), toml::Value::Float(_)));
                        if !ok {
                            errs.push(format!("{full}[{i}]: expected {}, got {}", kind_name(proto), kind_name(item)));
                        }
                    }
                }
            }
            _ if kind_name(v) != kind_name(r) => {
                errs.push(format!("{full}: expected {}, got {}", kind_name(r), kind_name(v)));
            }
            _ => {}
        }
    }
}

/// Sets `dotted.key = value` in a table; the value is parsed as TOML and
/// falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> std::result::Result<(), String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override {assignment:?} is not key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key {key:?} is malformed"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("override {key:?}: {p} is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn apply_overrides(table: &mut toml::Table, assignments: &[String]) -> Result<()> {
    let errs: Vec<String> = assignments.iter().filter_map(|a| apply_override(table, a).err()).collect();
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errs))
    }
}

/// Parses, checks and validates a configuration table, reporting every
/// problem found.
pub fn config_from_table(table: toml::Table) -> Result<ExperimentConfig> {
    let reference = toml::Table::try_from(ExperimentConfig::default()).expect("default config serializes");
    let mut errs = Vec::new();
    schema_errors(&table, &reference, "", &mut errs);
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(vec![e.message().trim().to_string()]))?;
    let errs = cfg.validate();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs))
    }
}

pub fn parse_table(text: &str) -> Result<toml::Table> {
    toml::from_str(text).map_err(|e: toml::de::Error| Error::Config(vec![e.message().trim().to_string()]))
}

/// Reads a TOML file, applies `key=value` overrides in order, validates.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io("read config", path, e))?;
    let mut table = parse_table(&text)?;
    apply_overrides(&mut table, overrides)?;
    config_from_table(table)
}
