//! Overlap and agreement kernels: box IoU, mask IoU, Dice, Fleiss' kappa.

use thiserror::Error;

use crate::corpus::{BBox, MaskError, RleMask};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("both masks are empty")]
    BothEmpty,
    #[error("agreement table has no items")]
    NoItems,
    #[error("agreement table needs at least 2 raters per item, got {0}")]
    TooFewRaters(u64),
    #[error("row {row} sums to {sum}, expected {raters} raters")]
    RowSum { row: usize, sum: u64, raters: u64 },
    #[error("row {row} has {got} categories, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("chance agreement is 1 but observed agreement is {0}")]
    UndefinedKappa(f64),
}

/// Box intersection over union with the continuous area convention.
///
/// `BBox` cannot be degenerate, so the union is always positive.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2().min(b.x2()) - a.x1().max(b.x1())).max(0.0);
    let ih = (a.y2().min(b.y2()) - a.y1().max(b.y1())).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Number of pixels set in both masks, computed on the runs directly.
pub fn mask_intersection(a: &RleMask, b: &RleMask) -> Result<u64, MetricError> {
    a.check_same_canvas(b)?;
    let mut ra = a.one_runs().peekable();
    let mut rb = b.one_runs().peekable();
    let mut inter = 0;
    while let (Some(&(s1, e1)), Some(&(s2, e2))) = (ra.peek(), rb.peek()) {
        let lo = s1.max(s2);
        let hi = e1.min(e2);
        if hi > lo {
            inter += hi - lo;
        }
        if e1 <= e2 {
            ra.next();
        } else {
            rb.next();
        }
    }
    Ok(inter)
}

/// Returns `(intersection, |a|, |b|)` pixel counts.
fn overlap_counts(a: &RleMask, b: &RleMask) -> Result<(u64, u64, u64), MetricError> {
    let inter = mask_intersection(a, b)?;
    let (na, nb) = (a.area(), b.area());
    if na == 0 && nb == 0 {
        return Err(MetricError::BothEmpty);
    }
    Ok((inter, na, nb))
}

/// Pixel IoU of two masks on the same canvas.
pub fn mask_iou(a: &RleMask, b: &RleMask) -> Result<f64, MetricError> {
    let (inter, na, nb) = overlap_counts(a, b)?;
    Ok(inter as f64 / (na + nb - inter) as f64)
}

/// `2|A∩B| / (|A| + |B|)`.
pub fn dice_coefficient(a: &RleMask, b: &RleMask) -> Result<f64, MetricError> {
    let (inter, na, nb) = overlap_counts(a, b)?;
    Ok((2 * inter) as f64 / (na + nb) as f64)
}

/// Items x categories rating counts with a constant number of raters per item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgreementTable {
    rows: Vec<Vec<u64>>,
    raters: u64,
}

impl AgreementTable {
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self, MetricError> {
        let first = rows.first().ok_or(MetricError::NoItems)?;
        let width = first.len();
        let raters: u64 = first.iter().sum();
        if raters < 2 {
            return Err(MetricError::TooFewRaters(raters));
        }
        for (row, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(MetricError::RaggedRow {
                    row,
                    got: r.len(),
                    expected: width,
                });
            }
            let sum = r.iter().sum();
            if sum != raters {
                return Err(MetricError::RowSum { row, sum, raters });
            }
        }
        Ok(Self { rows, raters })
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    pub fn raters(&self) -> u64 {
        self.raters
    }

    pub fn n_items(&self) -> usize {
        self.rows.len()
    }
}

/// Fleiss' kappa, `(P̄ - P̄e) / (1 - P̄e)`.
///
/// When every rating falls in one category chance agreement is 1; that table
/// is perfect agreement and yields 1.0.
pub fn fleiss_kappa(t: &AgreementTable) -> Result<f64, MetricError> {
    let r = t.raters as f64;
    let n = t.n_items() as f64;
    let categories = t.rows[0].len();

    let mut p_bar = 0.0;
    let mut col_totals = vec![0u64; categories];
    for row in &t.rows {
        let sq: u64 = row.iter().map(|&c| c * c).sum();
        p_bar += (sq as f64 - r) / (r * (r - 1.0));
        for (tot, &c) in col_totals.iter_mut().zip(row) {
            *tot += c;
        }
    }
    p_bar /= n;

    let total = n * r;
    let p_e: f64 = col_totals
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            p * p
        })
        .sum();

    // chance agreement is exactly 1 only when a single column holds all ratings
    if col_totals.iter().filter(|&&c| c > 0).count() <= 1 {
        return if p_bar == 1.0 {
            Ok(1.0)
        } else {
            Err(MetricError::UndefinedKappa(p_bar))
        };
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}
