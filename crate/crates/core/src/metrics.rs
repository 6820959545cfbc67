//! DICE overlap, PSNR, and matching predicted regions to ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::{MultiChannelImage, Segmentation};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionMask {
    rows: usize,
    cols: usize,
    mask: Vec<bool>,
}

impl RegionMask {
    pub fn new(rows: usize, cols: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != rows * cols {
            return Err(Error::Dimension {
                expected: (rows, cols),
                found: (mask.len() / cols.max(1), cols),
            });
        }
        Ok(Self { rows, cols, mask })
    }

    /// Pixels of `seg` carrying `label`.
    pub fn of_label(seg: &Segmentation, label: usize) -> Self {
        let (rows, cols) = seg.dims();
        Self {
            rows,
            cols,
            mask: seg.labels().iter().map(|&l| l == label).collect(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }
}

/// `2|S ∩ S'| / (|S| + |S'|)`, and 1 when both are empty.
pub fn dice(s: &RegionMask, t: &RegionMask) -> Result<f64> {
    if s.dims() != t.dims() {
        return Err(Error::Dimension {
            expected: s.dims(),
            found: t.dims(),
        });
    }
    let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in s.mask.iter().zip(&t.mask) {
        a += x as usize;
        b += y as usize;
        both += (x && y) as usize;
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (a + b) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsnrVariant {
    /// `20 log₁₀(n·P / Σ(f − f̃)²)`, with `n` the number of samples.
    Paper,
    /// `20 log₁₀(P / √MSE)`.
    Standard,
}

/// PSNR over all channels. Identical inputs give `+∞`.
pub fn psnr(f: &MultiChannelImage, g: &MultiChannelImage, peak: f64, variant: PsnrVariant) -> Result<f64> {
    if f.depth() != g.depth() {
        return Err(Error::Data(format!(
            "channel counts differ: {} vs {}",
            f.depth(),
            g.depth()
        )));
    }
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::parameter("peak", peak, "peak > 0"));
    }
    let mut sse = 0.0;
    let mut n = 0usize;
    for (a, b) in f.channels().iter().zip(g.channels()) {
        a.check_dims(b.dims())?;
        sse += a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
        n += a.len();
    }
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(match variant {
        PsnrVariant::Paper => 20.0 * (n as f64 * peak / sse).log10(),
        PsnrVariant::Standard => 20.0 * (peak / (sse / n as f64).sqrt()).log10(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Labels already agree (grayscale, ordered by intensity).
    Identity,
    /// Repeatedly pair the unmatched (predicted, true) regions with the
    /// highest DICE; ties go to the lowest predicted, then true, label.
    GreedyDice,
}

/// `perm[l]` is the ground-truth label matched to predicted label `l`.
pub fn match_labels(pred: &Segmentation, truth: &Segmentation, mode: MatchMode) -> Result<Vec<usize>> {
    let k = pred.k();
    if truth.k() != k {
        return Err(Error::Data(format!(
            "region counts differ: {k} predicted vs {} in ground truth",
            truth.k()
        )));
    }
    if pred.dims() != truth.dims() {
        return Err(Error::Dimension {
            expected: truth.dims(),
            found: pred.dims(),
        });
    }
    if mode == MatchMode::Identity {
        return Ok((0..k).collect());
    }
    let table = dice_table(pred, truth);
    let mut perm = vec![usize::MAX; k];
    let mut taken = vec![false; k];
    for _ in 0..k {
        let mut best: Option<(usize, usize, f64)> = None;
        for (p, row) in table.iter().enumerate() {
            if perm[p] != usize::MAX {
                continue;
            }
            for (t, &d) in row.iter().enumerate() {
                if !taken[t] && best.is_none_or(|b| d > b.2) {
                    best = Some((p, t, d));
                }
            }
        }
        let (p, t, _) = best.expect("an unmatched pair remains");
        perm[p] = t;
        taken[t] = true;
    }
    Ok(perm)
}

/// `table[p][t] = DICE(pred == p, truth == t)`.
pub fn dice_table(pred: &Segmentation, truth: &Segmentation) -> Vec<Vec<f64>> {
    let (kp, kt) = (pred.k(), truth.k());
    let mut both = vec![vec![0usize; kt]; kp];
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        both[p][t] += 1;
    }
    let (sp, st) = (pred.sizes(), truth.sizes());
    (0..kp)
        .map(|p| {
            (0..kt)
                .map(|t| {
                    let denom = sp[p] + st[t];
                    if denom == 0 {
                        1.0
                    } else {
                        2.0 * both[p][t] as f64 / denom as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// DICE per ground-truth region after matching, indexed by true label.
pub fn region_dice(pred: &Segmentation, truth: &Segmentation, mode: MatchMode) -> Result<Vec<f64>> {
    let perm = match_labels(pred, truth, mode)?;
    let matched = pred.relabel(&perm)?;
    (0..truth.k())
        .map(|t| dice(&RegionMask::of_label(&matched, t), &RegionMask::of_label(truth, t)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ImageGrid;

    fn mask(bits: &[u8]) -> RegionMask {
        RegionMask::new(1, bits.len(), bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn dice_examples() {
        let s = mask(&[1, 1, 0, 0]);
        assert_eq!(dice(&s, &s).unwrap(), 1.0);
        assert_eq!(dice(&s, &mask(&[0, 0, 1, 1])).unwrap(), 0.0);
        assert_eq!(dice(&mask(&[0, 0]), &mask(&[0, 0])).unwrap(), 1.0);
        let a = mask(&[1, 1, 1, 1, 0, 0, 0]);
        let b = mask(&[0, 1, 1, 1, 1, 1, 1]);
        assert!((dice(&a, &b).unwrap() - 0.6).abs() < 1e-15);
        assert!(dice(&a, &mask(&[1])).is_err());
    }

    #[test]
    fn psnr_examples() {
        let f = MultiChannelImage::gray(ImageGrid::zeros(2, 2));
        let g = MultiChannelImage::gray(ImageGrid::new(2, 2, vec![0.1, 0.1, 0.1, 0.1]).unwrap());
        assert!((psnr(&f, &g, 1.0, PsnrVariant::Paper).unwrap() - 40.0).abs() < 1e-9);
        assert!((psnr(&f, &g, 1.0, PsnrVariant::Standard).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&f, &f, 1.0, PsnrVariant::Paper).unwrap(), f64::INFINITY);
        let small = MultiChannelImage::gray(ImageGrid::zeros(1, 2));
        assert!(psnr(&f, &small, 1.0, PsnrVariant::Paper).is_err());
    }

    #[test]
    fn swapped_labels_are_matched() {
        let truth = Segmentation::from_labels(1, 4, vec![0, 0, 1, 1], 2).unwrap();
        let pred = Segmentation::from_labels(1, 4, vec![1, 1, 0, 0], 2).unwrap();
        assert_eq!(match_labels(&truth, &truth, MatchMode::GreedyDice).unwrap(), vec![0, 1]);
        assert_eq!(match_labels(&pred, &truth, MatchMode::GreedyDice).unwrap(), vec![1, 0]);
        let d = region_dice(&pred, &truth, MatchMode::GreedyDice).unwrap();
        assert_eq!(d.iter().sum::<f64>(), 2.0);
        assert_eq!(match_labels(&pred, &truth, MatchMode::Identity).unwrap(), vec![0, 1]);
    }

    #[test]
    fn k_mismatch_is_an_error() {
        let a = Segmentation::from_labels(1, 2, vec![0, 1], 2).unwrap();
        let b = Segmentation::from_labels(1, 2, vec![0, 1], 3).unwrap();
        assert!(match_labels(&a, &b, MatchMode::GreedyDice).is_err());
    }
}
