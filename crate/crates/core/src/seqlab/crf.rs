//! Linear-chain CRF inference over dense scores.
//!
//! The score of a label path `y` for emissions `e` is
//! `start[y0] + Σ e[i][yi] + Σ transition[y(i-1)][yi] + end[y(n-1)]`,
//! and `P(y) = exp(score(y)) / Z`. Everything is computed in log space.

use serde::{Deserialize, Serialize};

use super::SeqError;

/// Per-token label scores, row-major `tokens x labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    rows: usize,
    labels: usize,
    data: Vec<f64>,
}

impl EmissionMatrix {
    pub fn new(rows: usize, labels: usize, data: Vec<f64>) -> Result<Self, SeqError> {
        if rows == 0 {
            return Err(SeqError::EmptySequence);
        }
        if labels == 0 || data.len() != rows * labels {
            return Err(SeqError::Shape(format!(
                "emission data has {} values, expected {rows}x{labels}",
                data.len()
            )));
        }
        Ok(Self { rows, labels, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SeqError> {
        let labels = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != labels) {
            return Err(SeqError::Shape(format!(
                "emission row {bad} has {} labels, expected {labels}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), labels, rows.concat())
    }

    pub fn zeros(rows: usize, labels: usize) -> Self {
        Self {
            rows,
            labels,
            data: vec![0.0; rows * labels],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.labels + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.labels + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.labels..(i + 1) * self.labels]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.labels).map(<[f64]>::to_vec).collect()
    }
}

/// Transition, start and end scores for `labels` labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    /// `transition[from][to]`
    pub transition: Vec<Vec<f64>>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl CrfParams {
    pub fn zeros(labels: usize) -> Self {
        Self {
            transition: vec![vec![0.0; labels]; labels],
            start: vec![0.0; labels],
            end: vec![0.0; labels],
        }
    }

    pub fn labels(&self) -> usize {
        self.start.len()
    }

    fn check(&self, e: &EmissionMatrix) -> Result<(), SeqError> {
        let l = self.labels();
        if l == 0
            || self.end.len() != l
            || self.transition.len() != l
            || self.transition.iter().any(|r| r.len() != l)
        {
            return Err(SeqError::Shape(format!(
                "CRF parameters are not consistent with {l} labels"
            )));
        }
        if e.labels != l {
            return Err(SeqError::Shape(format!(
                "emissions have {} labels, parameters have {l}",
                e.labels
            )));
        }
        let finite = self.start.iter().chain(&self.end).all(|v| v.is_finite())
            && self.transition.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(SeqError::NonFinite("CRF parameters"));
        }
        if !e.data.iter().all(|v| v.is_finite()) {
            return Err(SeqError::NonFinite("emissions"));
        }
        Ok(())
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Unnormalized log score of one label path.
pub fn sequence_score(e: &EmissionMatrix, p: &CrfParams, path: &[usize]) -> Result<f64, SeqError> {
    p.check(e)?;
    check_path(e, path)?;
    let mut score = p.start[path[0]] + p.end[path[path.len() - 1]];
    for (i, &y) in path.iter().enumerate() {
        score += e.get(i, y);
        if i > 0 {
            score += p.transition[path[i - 1]][y];
        }
    }
    Ok(score)
}

fn check_path(e: &EmissionMatrix, path: &[usize]) -> Result<(), SeqError> {
    if path.len() != e.rows {
        return Err(SeqError::Shape(format!(
            "label path has length {}, emissions have {} rows",
            path.len(),
            e.rows
        )));
    }
    if let Some(&bad) = path.iter().find(|&&y| y >= e.labels) {
        return Err(SeqError::LabelOutOfRange(bad, e.labels));
    }
    Ok(())
}

/// Highest-scoring label path and its score. Ties go to the lower label index
/// both for the final label and at every backtrack step.
pub fn viterbi_decode(e: &EmissionMatrix, p: &CrfParams) -> Result<(Vec<usize>, f64), SeqError> {
    p.check(e)?;
    let (n, l) = (e.rows, e.labels);
    let mut delta: Vec<f64> = (0..l).map(|j| p.start[j] + e.get(0, j)).collect();
    let mut back = vec![0usize; n * l];
    let mut next = vec![0.0; l];
    for i in 1..n {
        for (j, slot) in next.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_score = delta[0] + p.transition[0][j];
            for (k, &d) in delta.iter().enumerate().skip(1) {
                let s = d + p.transition[k][j];
                if s > best_score {
                    best = k;
                    best_score = s;
                }
            }
            back[i * l + j] = best;
            *slot = best_score + e.get(i, j);
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut last = 0;
    let mut best_score = delta[0] + p.end[0];
    for (j, &d) in delta.iter().enumerate().skip(1) {
        if d + p.end[j] > best_score {
            last = j;
            best_score = d + p.end[j];
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for i in (1..n).rev() {
        path[i - 1] = back[i * l + path[i]];
    }
    Ok((path, best_score))
}

/// `alpha[i][j]`: log-sum of scores of all prefixes ending in label `j` at `i`,
/// including the start score and emission `i`.
fn forward(e: &EmissionMatrix, p: &CrfParams) -> Vec<Vec<f64>> {
    let (n, l) = (e.rows, e.labels);
    let mut alpha = Vec::with_capacity(n);
    alpha.push((0..l).map(|j| p.start[j] + e.get(0, j)).collect::<Vec<_>>());
    for i in 1..n {
        let prev = &alpha[i - 1];
        let row = (0..l)
            .map(|j| log_sum_exp((0..l).map(|k| prev[k] + p.transition[k][j])) + e.get(i, j))
            .collect();
        alpha.push(row);
    }
    alpha
}

/// `beta[i][j]`: log-sum of scores of all suffixes after position `i` given
/// label `j` there, including the end score.
fn backward(e: &EmissionMatrix, p: &CrfParams) -> Vec<Vec<f64>> {
    let (n, l) = (e.rows, e.labels);
    let mut beta = vec![vec![0.0; l]; n];
    beta[n - 1].clone_from(&p.end);
    for i in (0..n - 1).rev() {
        for j in 0..l {
            beta[i][j] =
                log_sum_exp((0..l).map(|k| p.transition[j][k] + e.get(i + 1, k) + beta[i + 1][k]));
        }
    }
    beta
}

/// `log Σ_y exp(score(y))` over all `L^n` label paths.
pub fn log_partition(e: &EmissionMatrix, p: &CrfParams) -> Result<f64, SeqError> {
    p.check(e)?;
    let alpha = forward(e, p);
    let last = &alpha[e.rows - 1];
    Ok(log_sum_exp((0..e.labels).map(|j| last[j] + p.end[j])))
}

/// Gradients of the negative log-likelihood, shaped like the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGradient {
    pub emissions: EmissionMatrix,
    pub params: CrfParams,
}

/// Negative log-likelihood of `gold` and its gradient (expected minus
/// observed feature counts).
pub fn crf_nll_and_grad(
    e: &EmissionMatrix,
    p: &CrfParams,
    gold: &[usize],
) -> Result<(f64, CrfGradient), SeqError> {
    p.check(e)?;
    check_path(e, gold)?;
    let (n, l) = (e.rows, e.labels);
    let alpha = forward(e, p);
    let beta = backward(e, p);
    let log_z = log_sum_exp((0..l).map(|j| alpha[n - 1][j] + p.end[j]));
    let gold_score = sequence_score(e, p, gold)?;
    // rounding can push a near-deterministic nll a hair below zero
    let nll = (log_z - gold_score).max(0.0);

    let mut ge = EmissionMatrix::zeros(n, l);
    let mut gp = CrfParams::zeros(l);
    for i in 0..n {
        for j in 0..l {
            let m = (alpha[i][j] + beta[i][j] - log_z).exp();
            ge.set(i, j, m);
            if i == 0 {
                gp.start[j] = m;
            }
            if i == n - 1 {
                gp.end[j] = m;
            }
        }
        if i > 0 {
            for j in 0..l {
                for k in 0..l {
                    gp.transition[j][k] +=
                        (alpha[i - 1][j] + p.transition[j][k] + e.get(i, k) + beta[i][k] - log_z)
                            .exp();
                }
            }
        }
    }
    for (i, &y) in gold.iter().enumerate() {
        ge.set(i, y, ge.get(i, y) - 1.0);
        if i > 0 {
            gp.transition[gold[i - 1]][y] -= 1.0;
        }
    }
    gp.start[gold[0]] -= 1.0;
    gp.end[gold[n - 1]] -= 1.0;
    Ok((
        nll,
        CrfGradient {
            emissions: ge,
            params: gp,
        },
    ))
}
