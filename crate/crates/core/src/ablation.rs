//! Ablation grids over variants, fusion modes and modulation stages.
//!
//! Every cell runs once per seed on the same dataset. Stage-1 branch models
//! depend only on the branch architecture and the seed, so cells that share
//! them (for example `spatial_only`, `both_concat` and `both_lgfs`) train
//! each branch once.

use std::collections::HashMap;
use std::fmt::Write;
use std::str::FromStr;

use crate::config::ExperimentConfig;
use crate::error::{ModelError, Result};
use crate::metrics::EvalReport;
use crate::model::{Architecture, Model};
use crate::train::{evaluate, train, train_branch, train_decoder, Dataset, EpochHook, EpochLog, TrainLog};
use crate::visual::{FeatureKind, STAGES};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grid {
    /// One row per model variant.
    Components,
    /// Add, max and lgfs fusion of the two branches.
    Fusion,
    /// Modulation inserted from stage k upward, k = 5..1.
    Positions,
}

impl Grid {
    pub const ALL: [Grid; 3] = [Grid::Components, Grid::Fusion, Grid::Positions];

    pub fn name(self) -> &'static str {
        match self {
            Grid::Components => "components",
            Grid::Fusion => "fusion",
            Grid::Positions => "positions",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Grid::Components => "component analysis",
            Grid::Fusion => "fusion strategy",
            Grid::Positions => "modulation positions",
        }
    }

    pub fn cells(self) -> Vec<Cell> {
        match self {
            Grid::Components => ["spatial_only", "temporal_only", "both_concat", "both_lgfs", "full"]
                .iter()
                .map(|v| Cell::new(v, &[("variant", v)]))
                .collect(),
            Grid::Fusion => vec![
                Cell::new("add", &[("variant", "both_concat"), ("fusion", "add")]),
                Cell::new("max", &[("variant", "both_concat"), ("fusion", "max")]),
                Cell::new("lgfs", &[("variant", "both_lgfs")]),
            ],
            Grid::Positions => (1..=STAGES)
                .rev()
                .map(|k| {
                    let stages: Vec<String> = (k..=STAGES).map(|s| s.to_string()).collect();
                    let label = format!("{{{}}}", (k..=STAGES).rev().map(|s| format!("I{s}")).collect::<Vec<_>>().join(","));
                    Cell::new(&label, &[("variant", "full"), ("cmam_stages", &stages.join(","))])
                })
                .collect(),
        }
    }
}

impl FromStr for Grid {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| ModelError::Validation(format!("unknown grid {s:?} (components, fusion, positions)")))
    }
}

/// One row of an ablation table: a label and the config keys it sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cell {
    pub label: String,
    pub overrides: Vec<(String, String)>,
}

impl Cell {
    pub fn new(label: &str, overrides: &[(&str, &str)]) -> Self {
        Self {
            label: label.to_string(),
            overrides: overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn config(&self, base: &ExperimentConfig, seed: u64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        cfg.fusion = None;
        cfg.cmam_stages = None;
        for (k, v) in &self.overrides {
            cfg.set(k, v)?;
        }
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub cell: Cell,
    pub arch: Architecture,
    pub seeds: Vec<u64>,
    /// Test-split report per seed.
    pub reports: Vec<EvalReport>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

impl CellResult {
    fn metric(&self, f: impl Fn(&EvalReport) -> f64) -> f64 {
        median(&self.reports.iter().map(f).collect::<Vec<_>>())
    }

    pub fn median_mean_iou(&self) -> f64 {
        self.metric(|r| r.mean_iou)
    }

    pub fn median_ap(&self) -> f64 {
        self.metric(|r| r.ap)
    }

    pub fn median_overall_iou(&self) -> f64 {
        self.metric(|r| r.overall_iou)
    }

    pub fn median_p_at(&self, k: usize) -> f64 {
        self.metric(|r| r.p_at[k])
    }
}

type StageOneKey = (FeatureKind, Vec<usize>, bool, u64);

/// Trains shared stage-1 branch models on demand.
#[derive(Default)]
pub struct StageOneCache {
    models: HashMap<StageOneKey, Model>,
}

impl StageOneCache {
    fn key(cfg: &ExperimentConfig, arch: &Architecture, kind: FeatureKind) -> StageOneKey {
        (kind, arch.cmam_stages.clone(), arch.language_concat, cfg.seed)
    }

    fn ensure(&mut self, cfg: &ExperimentConfig, data: &Dataset, hook: EpochHook<'_>) -> Result<()> {
        let arch = cfg.architecture()?;
        for kind in arch.kinds() {
            let key = Self::key(cfg, &arch, kind);
            if !self.models.contains_key(&key) {
                let model = train_branch(cfg, data, kind, &mut TrainLog::default(), &mut *hook)?;
                self.models.insert(key, model);
            }
        }
        Ok(())
    }

    fn get(&self, cfg: &ExperimentConfig, arch: &Architecture, kind: FeatureKind) -> &Model {
        &self.models[&Self::key(cfg, arch, kind)]
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Runs one cell for one seed and scores it on the test split.
pub fn run_cell(cfg: &ExperimentConfig, data: &Dataset, cache: &mut StageOneCache, hook: EpochHook<'_>) -> Result<EvalReport> {
    if data.test.is_empty() {
        return Err(ModelError::Validation("ablation needs a non-empty test split".into()));
    }
    if cfg.joint {
        let (_, log) = train(cfg, data, hook)?;
        return Ok(log.final_test.expect("test split is non-empty"));
    }
    cache.ensure(cfg, data, &mut *hook)?;
    let arch = cfg.architecture()?;
    let branches: Vec<&Model> = arch.kinds().into_iter().map(|k| cache.get(cfg, &arch, k)).collect();
    match branches.as_slice() {
        [single] => evaluate(single, &data.test),
        _ => evaluate(&train_decoder(cfg, data, &branches, &mut TrainLog::default(), hook)?, &data.test),
    }
}

/// Progress callback: cell label, seed and the epoch just finished.
pub type AblationHook<'a> = &'a mut dyn FnMut(&str, u64, &EpochLog);

/// Runs every cell for every seed. Stage-1 models in `cache` are reused, so
/// passing the same cache to several grids trains each branch once.
pub fn ablate(
    base: &ExperimentConfig,
    cells: &[Cell],
    seeds: &[u64],
    data: &Dataset,
    cache: &mut StageOneCache,
    hook: AblationHook<'_>,
) -> Result<Vec<CellResult>> {
    if seeds.is_empty() {
        return Err(ModelError::Validation("ablation needs at least one seed".into()));
    }
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let arch = cell.config(base, seeds[0])?.architecture()?;
        let mut reports = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = cell.config(base, seed)?;
            let mut inner = |e: &EpochLog| hook(&cell.label, seed, e);
            reports.push(run_cell(&cfg, data, cache, &mut inner)?);
        }
        out.push(CellResult {
            cell: cell.clone(),
            arch,
            seeds: seeds.to_vec(),
            reports,
        });
    }
    Ok(out)
}

fn mark(on: bool) -> &'static str {
    if on {
        "x"
    } else {
        "-"
    }
}

/// Median test metrics per cell as an aligned table in percent, with the
/// components each cell contains.
pub fn format_table(title: &str, results: &[CellResult]) -> String {
    let width = results.iter().map(|r| r.cell.label.len()).max().unwrap_or(0).max(10);
    let seeds = results.first().map_or(0, |r| r.seeds.len());
    let mut s = format!("{title} (median over {seeds} seeds, test split, %)\n");
    let _ = writeln!(
        s,
        "{:<width$} {:>3} {:>3} {:>6} {:>6} {:>11}{:>7}{:>7}{:>7}{:>7}{:>7}{:>7}{:>9}{:>7}",
        "cell", "S", "T", "concat", "fusion", "cmam", "P@0.5", "P@0.6", "P@0.7", "P@0.8", "P@0.9", "AP", "Overall", "Mean"
    );
    for r in results {
        let a = &r.arch;
        let both = a.spatial && a.temporal;
        let cmam = if a.cmam_stages.is_empty() {
            "-".to_string()
        } else {
            a.cmam_stages.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        };
        let _ = write!(
            s,
            "{:<width$} {:>3} {:>3} {:>6} {:>6} {:>11}",
            r.cell.label,
            mark(a.spatial),
            mark(a.temporal),
            mark(a.language_concat),
            if both { a.fusion.name() } else { "-" },
            cmam
        );
        for k in 0..5 {
            let _ = write!(s, "{:>7.1}", 100.0 * r.median_p_at(k));
        }
        let _ = writeln!(
            s,
            "{:>7.1}{:>9.1}{:>7.1}",
            100.0 * r.median_ap(),
            100.0 * r.median_overall_iou(),
            100.0 * r.median_mean_iou()
        );
    }
    s
}

/// `ablation.<cell>.<metric>=<median>` lines plus per-seed Mean IoU.
pub fn key_values(results: &[CellResult]) -> String {
    let mut s = String::new();
    for r in results {
        let l = &r.cell.label;
        let _ = writeln!(s, "ablation.{l}.median_mean_iou={}", r.median_mean_iou());
        let _ = writeln!(s, "ablation.{l}.median_ap={}", r.median_ap());
        let _ = writeln!(s, "ablation.{l}.median_overall_iou={}", r.median_overall_iou());
        for (seed, rep) in r.seeds.iter().zip(&r.reports) {
            let _ = writeln!(s, "ablation.{l}.seed{seed}.mean_iou={}", rep.mean_iou);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn grids_validate_against_defaults() {
        let base = ExperimentConfig::default();
        for g in Grid::ALL {
            for c in g.cells() {
                c.config(&base, 0).unwrap();
            }
        }
        assert_eq!(Grid::Positions.cells()[0].label, "{I5}");
        assert_eq!(Grid::Positions.cells()[4].label, "{I5,I4,I3,I2,I1}");
    }
}
