//! Per-sample IoU and the aggregate segmentation metrics: Overall IoU,
//! Mean IoU, precision at IoU thresholds, and AP.

use std::fmt::Write as _;

use actorseg_tensor::sigmoid_scalar;

use crate::error::{ModelError, Result};
use crate::pnm::Image;

/// Whether "IoU higher than the threshold" is strict. Flip to `false` for
/// `>=` everywhere.
pub const STRICT_THRESHOLD: bool = true;

pub const PRECISION_THRESHOLDS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

/// 0.50, 0.55, …, 0.95, each the correctly rounded `k/20`.
pub fn ap_thresholds() -> [f64; 10] {
    std::array::from_fn(|k| (10 + k) as f64 / 20.0)
}

pub fn exceeds(iou: f64, threshold: f64) -> bool {
    if STRICT_THRESHOLD {
        iou > threshold
    } else {
        iou >= threshold
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn count(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }

    /// Values must be exactly 0 or 1.
    pub fn from_values(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        if values.len() != width * height {
            return Err(ModelError::Validation(format!("{} values for a {width}x{height} mask", values.len())));
        }
        let data = values
            .iter()
            .map(|&v| {
                if v == 0.0 || v == 1.0 {
                    Ok(v == 1.0)
                } else {
                    Err(ModelError::Validation(format!("mask value {v} is not binary")))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { width, height, data })
    }

    /// Foreground where `σ(logit) > 0.5`.
    pub fn from_logits(width: usize, height: usize, logits: &[f64]) -> Result<Self> {
        if logits.len() != width * height {
            return Err(ModelError::Validation(format!("{} logits for a {width}x{height} mask", logits.len())));
        }
        Ok(Self {
            width,
            height,
            data: logits.iter().map(|&z| sigmoid_scalar(z) > 0.5).collect(),
        })
    }

    /// Accepts single-channel images holding only 0 and 255.
    pub fn from_image(img: &Image) -> Result<Self> {
        if img.channels != 1 {
            return Err(ModelError::Validation("mask image must be single-channel".into()));
        }
        let data = img
            .data
            .iter()
            .map(|&v| match v {
                0 => Ok(false),
                255 => Ok(true),
                _ => Err(ModelError::Validation(format!("mask pixel {v} is not 0 or 255"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            width: img.width,
            height: img.height,
            data,
        })
    }

    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    pub fn to_values(&self) -> Vec<f64> {
        self.data.iter().map(|&b| b as u8 as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleScore {
    pub intersection: u64,
    pub union: u64,
    pub iou: f64,
}

pub fn score(pred: &BinaryMask, gt: &BinaryMask) -> Result<SampleScore> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(ModelError::Validation(format!(
            "mask shapes differ: {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let mut intersection = 0;
    let mut union = 0;
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        intersection += (p && g) as u64;
        union += (p || g) as u64;
    }
    // both empty: absence predicted correctly
    let iou = if union == 0 { 1.0 } else { intersection as f64 / union as f64 };
    Ok(SampleScore { intersection, union, iou })
}

pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(score(pred, gt)?.iou)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub samples: Vec<SampleScore>,
    pub overall_iou: f64,
    pub mean_iou: f64,
    /// Precision at each of [`PRECISION_THRESHOLDS`].
    pub p_at: [f64; 5],
    pub ap: f64,
}

fn precision(samples: &[SampleScore], threshold: f64) -> f64 {
    samples.iter().filter(|s| exceeds(s.iou, threshold)).count() as f64 / samples.len() as f64
}

pub fn aggregate_scores(samples: Vec<SampleScore>) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(ModelError::Validation("cannot aggregate an empty sample list".into()));
    }
    let inter: u64 = samples.iter().map(|s| s.intersection).sum();
    let union: u64 = samples.iter().map(|s| s.union).sum();
    let overall_iou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    let mean_iou = samples.iter().map(|s| s.iou).sum::<f64>() / samples.len() as f64;
    let p_at = PRECISION_THRESHOLDS.map(|x| precision(&samples, x));
    let ap = ap_thresholds().iter().map(|&x| precision(&samples, x)).sum::<f64>() / 10.0;
    Ok(EvalReport {
        samples,
        overall_iou,
        mean_iou,
        p_at,
        ap,
    })
}

pub fn aggregate(pairs: &[(BinaryMask, BinaryMask)]) -> Result<EvalReport> {
    aggregate_scores(pairs.iter().map(|(p, g)| score(p, g)).collect::<Result<_>>()?)
}

impl EvalReport {
    pub fn table_header() -> String {
        let mut s = String::new();
        for x in PRECISION_THRESHOLDS {
            write!(s, "{:>7}", format!("P@{x:.1}")).unwrap();
        }
        write!(s, "{:>7}{:>9}{:>7}", "AP", "Overall", "Mean").unwrap();
        s
    }

    /// Percentages in the column order of [`EvalReport::table_header`].
    pub fn table_row(&self) -> String {
        let mut s = String::new();
        for p in self.p_at {
            write!(s, "{:>7.1}", 100.0 * p).unwrap();
        }
        write!(s, "{:>7.1}{:>9.1}{:>7.1}", 100.0 * self.ap, 100.0 * self.overall_iou, 100.0 * self.mean_iou).unwrap();
        s
    }

    pub fn table(&self, label: &str) -> String {
        format!("{:<10}{}\n{:<10}{}\n", "split", Self::table_header(), label, self.table_row())
    }

    /// `<prefix>.<metric>=<value>` lines with full precision.
    pub fn key_values(&self, prefix: &str) -> String {
        let mut s = String::new();
        writeln!(s, "{prefix}.samples={}", self.samples.len()).unwrap();
        writeln!(s, "{prefix}.overall_iou={}", self.overall_iou).unwrap();
        writeln!(s, "{prefix}.mean_iou={}", self.mean_iou).unwrap();
        for (x, p) in PRECISION_THRESHOLDS.iter().zip(self.p_at) {
            writeln!(s, "{prefix}.p@{x:.1}={p}").unwrap();
        }
        writeln!(s, "{prefix}.ap={}", self.ap).unwrap();
        s
    }
}
