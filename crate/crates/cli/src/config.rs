//! Run configuration: one TOML file, overridden field by field by flags.
//!
//! ```toml
//! mode = "binary"          # or "per_class"
//! workers = 4
//! seed = 0
//! class_aware_nms = true
//! # taxonomy = ["vertebra_lumbar", "vertebra_sacral", "cage", "screw", "instrumentation"]
//!
//! [instancing]
//! iou_threshold = 0.5
//! min_area = 32
//! max_erosions = 10
//! max_gap_factor = 2.0
//!
//! [morphometry]
//! kernel = 5
//! min_osteophyte_area = 6
//! min_area = 32
//!
//! [synth]                  # generator spec, see `SynthSpec`
//! lumbar_count = 5
//!
//! [perturb]                # simulated prediction errors, see `PerturbSpec`
//! jitter = 1.5
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;
use spineseg::instancing::InstancingParams;
use spineseg::metrics::EvalMode;
use spineseg::morphometry::MorphometryParams;
use spineseg::synth::{PerturbSpec, SynthSpec};
use spineseg::LabelTaxonomy;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub taxonomy: LabelTaxonomy,
    pub mode: EvalMode,
    pub workers: usize,
    pub seed: u64,
    pub class_aware_nms: bool,
    pub instancing: InstancingParams,
    pub morphometry: MorphometryParams,
    pub synth: SynthSpec,
    pub perturb: PerturbSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            taxonomy: LabelTaxonomy::default(),
            mode: EvalMode::Binary,
            workers: 1,
            seed: 0,
            class_aware_nms: true,
            instancing: InstancingParams::default(),
            morphometry: MorphometryParams::default(),
            synth: SynthSpec::default(),
            perturb: PerturbSpec::identity(),
        }
    }
}

/// Flags that override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    /// Comma-separated class names, in class-index order.
    #[arg(long, global = true)]
    pub taxonomy: Option<String>,
    /// binary or per_class.
    #[arg(long, global = true)]
    pub mode: Option<EvalMode>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub nms_iou: Option<f64>,
    /// Minimum instance area, for both instancing and morphometry.
    #[arg(long, global = true)]
    pub min_area: Option<usize>,
    #[arg(long, global = true)]
    pub max_erosions: Option<usize>,
    #[arg(long, global = true)]
    pub max_gap_factor: Option<f64>,
    /// Osteophyte opening kernel (odd).
    #[arg(long, global = true)]
    pub kernel: Option<usize>,
    #[arg(long, global = true)]
    pub min_osteophyte_area: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Config file (if any) with flags applied on top.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut cfg = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(t) = &o.taxonomy {
            cfg.taxonomy = LabelTaxonomy::new(t.split(',').map(str::trim))?;
        }
        if let Some(m) = o.mode {
            cfg.mode = m;
        }
        if let Some(w) = o.workers {
            cfg.workers = w;
        }
        if let Some(s) = o.seed {
            cfg.seed = s;
        }
        if let Some(v) = o.nms_iou {
            cfg.instancing.iou_threshold = v;
        }
        if let Some(v) = o.min_area {
            cfg.instancing.min_area = v;
            cfg.morphometry.min_area = v;
        }
        if let Some(v) = o.max_erosions {
            cfg.instancing.max_erosions = v;
        }
        if let Some(v) = o.max_gap_factor {
            cfg.instancing.max_gap_factor = v;
        }
        if let Some(v) = o.kernel {
            cfg.morphometry.kernel = v;
        }
        if let Some(v) = o.min_osteophyte_area {
            cfg.morphometry.min_osteophyte_area = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let i = &self.instancing;
        if !(0.0..=1.0).contains(&i.iou_threshold) {
            bail!("iou_threshold {} outside [0, 1]", i.iou_threshold);
        }
        if !(i.max_gap_factor > 0.0) {
            bail!("max_gap_factor must be positive");
        }
        let k = self.morphometry.kernel;
        if k == 0 || k % 2 == 0 {
            bail!("kernel {k} must be odd and positive");
        }
        if self.workers == 0 || self.workers > 256 {
            bail!("workers must be between 1 and 256");
        }
        self.synth.validate()?;
        self.perturb.validate()?;
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        match self.mode {
            EvalMode::Binary => 2,
            EvalMode::PerClass => self.taxonomy.n_classes(),
        }
    }

    /// Names for the per-class IoU columns of the metrics CSV.
    pub fn class_columns(&self) -> Vec<String> {
        match self.mode {
            EvalMode::Binary => vec!["background".into(), "foreground".into()],
            EvalMode::PerClass => std::iter::once("background".to_string()).chain(self.taxonomy.names().iter().cloned()).collect(),
        }
    }
}
