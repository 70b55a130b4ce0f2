//! Next-state retrieval: rank a gallery by cosine similarity, report Top1
//! and mean average precision with one relevant item per query.

use crate::error::{input_err, CoreError, Result};

/// Row-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Features {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(input_err(format!("{} values do not form rows of width {dim}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(input_err("features must be finite"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(input_err("feature rows differ in width"));
        }
        Self::new(dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Every row rescaled to unit norm.
    pub fn normalized(&self) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for i in 0..self.len() {
            let row = self.row(i);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 1e-12) {
                return Err(CoreError::Degenerate(format!("feature row {i} has zero norm")));
            }
            data.extend(row.iter().map(|v| v / norm));
        }
        Ok(Self { dim: self.dim, data })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExclusionRule {
    /// Every gallery item competes, including the query's current frame.
    KeepCurrent,
    /// The query's current frame is removed from its gallery.
    ExcludeCurrent,
}

#[derive(Clone, Debug)]
pub struct RetrievalSpec {
    pub queries: Features,
    pub gallery: Features,
    /// Gallery index of the true next state of every query.
    pub ground_truth: Vec<usize>,
    /// Gallery index of the frame each query was made from.
    pub current: Vec<usize>,
    pub rule: ExclusionRule,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetrievalScore {
    pub top1: f64,
    pub map: f64,
}

/// 1-based rank of the ground truth; items tying with it count as ranked ahead.
pub fn query_rank(query: &[f64], gallery: &Features, truth: usize, skip: Option<usize>) -> usize {
    let target = dot(query, gallery.row(truth));
    1 + (0..gallery.len())
        .filter(|&i| i != truth && Some(i) != skip)
        .filter(|&i| dot(query, gallery.row(i)) >= target)
        .count()
}

pub fn retrieval_eval(spec: &RetrievalSpec) -> Result<RetrievalScore> {
    let n = spec.queries.len();
    if n == 0 || spec.gallery.is_empty() {
        return Err(input_err("retrieval needs at least one query and one gallery item"));
    }
    if spec.queries.dim != spec.gallery.dim {
        return Err(input_err("query and gallery features differ in width"));
    }
    if spec.ground_truth.len() != n || spec.current.len() != n {
        return Err(input_err("one ground truth and one current index per query are required"));
    }
    let (mut hits, mut ap_sum) = (0usize, 0.0);
    for q in 0..n {
        let truth = spec.ground_truth[q];
        if truth >= spec.gallery.len() || spec.current[q] >= spec.gallery.len() {
            return Err(CoreError::Protocol(format!("query {q} refers outside the gallery")));
        }
        let skip = match spec.rule {
            ExclusionRule::KeepCurrent => None,
            ExclusionRule::ExcludeCurrent => Some(spec.current[q]),
        };
        if skip == Some(truth) {
            return Err(CoreError::Protocol(format!(
                "query {q}: ground truth {truth} is removed by the exclusion rule"
            )));
        }
        let rank = query_rank(spec.queries.row(q), &spec.gallery, truth, skip);
        hits += usize::from(rank == 1);
        ap_sum += 1.0 / rank as f64;
    }
    Ok(RetrievalScore {
        top1: hits as f64 / n as f64,
        map: ap_sum / n as f64,
    })
}
