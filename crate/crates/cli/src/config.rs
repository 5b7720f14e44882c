//! TOML run configuration and its merge with command-line overrides.

use anyhow::{bail, Context, Result};
use minseek::controller::{
    GenerationOptions, MaxRc, Method, ScalingPolicy, TokenSource, Variant,
    DEFAULT_SEGMENT_CAP, DEFAULT_TOKEN_LIMIT,
};
use minseek::{Model, ModelConfig, SampleMode, ScriptSpec};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub version: u32,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub policy: PolicySection,
    pub script: Option<ScriptSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Weight initialization seed.
    pub seed: u64,
    pub max_context_length: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { seed: 7, max_context_length: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub prompt_len: usize,
    /// Sampling seed, unused by scripted runs.
    pub seed: u64,
    pub checked: bool,
    /// "script" or "sampled"; defaults to "script" when a script is given.
    pub source: Option<String>,
    /// "nucleus" or "argmax".
    pub mode: Option<String>,
    pub temperature: Option<f32>,
    pub top_p: Option<f32>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            prompt_len: 4,
            seed: 0,
            checked: true,
            source: None,
            mode: None,
            temperature: None,
            top_p: None,
        }
    }
}

/// An integer in TOML, or the string "unbounded".
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MaxRcField {
    Bounded(usize),
    Named(String),
}

impl MaxRcField {
    pub fn resolve(&self) -> Result<MaxRc> {
        match self {
            MaxRcField::Bounded(n) => Ok(MaxRc::Bounded(*n)),
            MaxRcField::Named(s) if s == "unbounded" => Ok(MaxRc::Unbounded),
            MaxRcField::Named(s) => bail!("max_rc must be a count or \"unbounded\", got {:?}", s),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub method: String,
    pub variant: u8,
    pub max_rc: MaxRcField,
    pub token_limit: usize,
    pub segment_cap: usize,
    pub retained_cycle_max: usize,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            method: "min-seek".into(),
            variant: 2,
            max_rc: MaxRcField::Bounded(4),
            token_limit: DEFAULT_TOKEN_LIMIT,
            segment_cap: DEFAULT_SEGMENT_CAP,
            retained_cycle_max: 1,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSection {
    pub text: Option<String>,
    pub path: Option<PathBuf>,
}

pub fn parse_method(s: &str) -> Result<Method> {
    match s {
        "min-seek" | "minseek" | "ms" => Ok(Method::MinSeek),
        "budget-forcing" | "bf" => Ok(Method::BudgetForcing),
        "standard" | "std" => Ok(Method::Standard),
        other => bail!("unknown method {:?} (min-seek, budget-forcing, standard)", other),
    }
}

pub fn parse_variant(v: u8) -> Result<Variant> {
    match v {
        1 => Ok(Variant::One),
        2 => Ok(Variant::Two),
        other => bail!("variant must be 1 or 2, got {}", other),
    }
}

pub fn parse_max_rc(s: &str) -> Result<MaxRc> {
    if s == "unbounded" {
        return Ok(MaxRc::Unbounded);
    }
    let n: usize = s.parse().with_context(|| format!("max_rc {:?} is not a count", s))?;
    Ok(MaxRc::Bounded(n))
}

/// Command-line overrides layered on top of the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub method: Option<String>,
    pub variant: Option<u8>,
    pub max_rc: Option<String>,
    pub token_limit: Option<usize>,
    pub segment_cap: Option<usize>,
    pub seed: Option<u64>,
    pub script: Option<PathBuf>,
    pub checked: Option<bool>,
    pub fault: bool,
}

/// Everything a command needs to run, resolved and validated.
pub struct Resolved {
    pub model: Model,
    pub prompt: Vec<u32>,
    pub policy: ScalingPolicy,
    pub options: GenerationOptions,
    /// Short name carrying the policy, for filenames: msv2_m4_script.
    pub tag: String,
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg: FileConfig =
        toml::from_str(&text).with_context(|| format!("bad config {}", path.display()))?;
    if cfg.version != 1 {
        bail!("unsupported config version {} (this build reads version 1)", cfg.version);
    }
    Ok(cfg)
}

fn load_script(section: &ScriptSection, flag: Option<&Path>) -> Result<ScriptSpec> {
    if let Some(p) = flag {
        let text = std::fs::read_to_string(p)
            .with_context(|| format!("cannot read script {}", p.display()))?;
        return ScriptSpec::parse(&text).context("script file does not parse");
    }
    match (&section.text, &section.path) {
        (Some(text), None) => ScriptSpec::parse(text).context("inline script does not parse"),
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read script {}", p.display()))?;
            ScriptSpec::parse(&text).context("script file does not parse")
        }
        (Some(_), Some(_)) => bail!("give script.text or script.path, not both"),
        (None, None) => bail!("the script section needs either text or path"),
    }
}

pub fn resolve(cfg: &FileConfig, over: &Overrides) -> Result<Resolved> {
    let mut model_config = ModelConfig::toy();
    if let Some(ctx) = cfg.model.max_context_length {
        model_config.max_context_length = ctx;
    }
    let model = Model::from_seed(model_config, cfg.model.seed)
        .context("model configuration rejected")?;

    let method = parse_method(over.method.as_deref().unwrap_or(&cfg.policy.method))?;
    let variant = match over.variant {
        Some(v) => parse_variant(v)?,
        None => parse_variant(cfg.policy.variant)?,
    };
    let max_rc = match &over.max_rc {
        Some(s) => parse_max_rc(s)?,
        None => cfg.policy.max_rc.resolve()?,
    };
    let policy = ScalingPolicy {
        method,
        variant,
        max_rc,
        token_limit: over.token_limit.unwrap_or(cfg.policy.token_limit),
        segment_cap: over.segment_cap.unwrap_or(cfg.policy.segment_cap),
    };

    let scripted = match cfg.run.source.as_deref() {
        Some("script") => true,
        Some("sampled") => false,
        Some(other) => bail!("run.source must be \"script\" or \"sampled\", got {:?}", other),
        None => cfg.script.is_some() || over.script.is_some(),
    };
    let sample_seed = over.seed.unwrap_or(cfg.run.seed);
    let source = if scripted {
        let empty = ScriptSection { text: None, path: None };
        let section = cfg.script.as_ref().unwrap_or(&empty);
        TokenSource::Scripted(load_script(section, over.script.as_deref())?)
    } else {
        let mode = match cfg.run.mode.as_deref() {
            Some("argmax") => SampleMode::Argmax,
            Some("nucleus") | None => match SampleMode::default_nucleus() {
                SampleMode::Nucleus { temperature, top_p } => SampleMode::Nucleus {
                    temperature: cfg.run.temperature.unwrap_or(temperature),
                    top_p: cfg.run.top_p.unwrap_or(top_p),
                },
                other => other,
            },
            Some(other) => bail!("run.mode must be \"argmax\" or \"nucleus\", got {:?}", other),
        };
        TokenSource::Sampled(mode)
    };

    let options = GenerationOptions {
        source,
        seed: sample_seed,
        checked: over.checked.unwrap_or(cfg.run.checked),
        stale_position_fault: over.fault,
        retained_cycle_max: cfg.policy.retained_cycle_max,
    };

    if cfg.run.prompt_len == 0 {
        bail!("run.prompt_len must be at least 1");
    }
    let prompt = minseek::controller::default_prompt(&model.config, cfg.run.prompt_len);

    let tag = format!("{}_{}", policy_tag(&policy), source_tag(&options));
    Ok(Resolved { model, prompt, policy, options, tag })
}

pub fn method_tag(policy: &ScalingPolicy) -> &'static str {
    match (policy.method, policy.variant) {
        (Method::MinSeek, Variant::One) => "msv1",
        (Method::MinSeek, Variant::Two) => "msv2",
        (Method::BudgetForcing, _) => "bf",
        (Method::Standard, _) => "std",
    }
}

/// Filename-safe policy name like msv2_m4 or bf_munb.
pub fn policy_tag(policy: &ScalingPolicy) -> String {
    let m = match policy.effective_max_rc() {
        MaxRc::Bounded(m) => format!("m{}", m),
        MaxRc::Unbounded => "munb".to_string(),
    };
    format!("{}_{}", method_tag(policy), m)
}

pub fn source_tag(options: &GenerationOptions) -> String {
    match options.source {
        TokenSource::Scripted(_) => "script".to_string(),
        TokenSource::Sampled(_) => format!("s{}", options.seed),
    }
}
