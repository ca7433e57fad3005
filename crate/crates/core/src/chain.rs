//! Linear-chain model: feature map, scoring, exact max-product decoding and
//! Hamming-loss-augmented decoding.
//!
//! The weight vector is laid out as `d·m` state weights followed by `m²`
//! transition weights. State weight `(k, c)` multiplies `x[l][k]` whenever
//! `y[l] == c` and lives at index `c·d + k`; transition weight `(c, c')`
//! fires on every adjacent pair `(y[l], y[l+1]) == (c, c')` and lives at
//! `d·m + c·m + c'`.

use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, Result};

/// Dense `L × d` input matrix, row-major (one row per sequence position).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Features {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(dim(format!("feature matrix must be non-empty, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(dim(format!("expected {} feature values for {rows}x{cols}, got {}", rows * cols, data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("feature values must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(dim("ragged feature rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Sequence length `L`.
    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// Input dimension `d`.
    pub fn dim(&self) -> usize {
        self.cols
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.data[l * self.cols..(l + 1) * self.cols]
    }

    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.data[l * self.cols + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }
}

/// A labeling of a sequence, one dense label index per position.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSeq(pub Vec<usize>);

impl LabelSeq {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Iterates over all `m^len` labelings in lexicographic order.
    pub fn enumerate(len: usize, m: usize) -> impl Iterator<Item = LabelSeq> {
        let total = m.checked_pow(len as u32).expect("labeling space too large");
        (0..total).map(move |mut code| {
            let mut labels = vec![0; len];
            for slot in labels.iter_mut().rev() {
                *slot = code % m;
                code /= m;
            }
            LabelSeq(labels)
        })
    }
}

impl From<Vec<usize>> for LabelSeq {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Feature geometry: input dimension `d` and label arity `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub d: usize,
    pub m: usize,
}

impl FeatureSpec {
    pub fn new(d: usize, m: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("input dimension d must be >= 1"));
        }
        if m < 2 {
            return Err(invalid("label arity m must be >= 2"));
        }
        Ok(Self { d, m })
    }

    /// Total weight dimension `K = d·m + m²`.
    pub fn num_weights(&self) -> usize {
        self.d * self.m + self.m * self.m
    }

    pub fn num_state(&self) -> usize {
        self.d * self.m
    }

    pub fn state_index(&self, k: usize, c: usize) -> usize {
        c * self.d + k
    }

    pub fn transition_index(&self, c: usize, next: usize) -> usize {
        self.num_state() + c * self.m + next
    }

    /// Index of the input feature a weight coordinate reads, `None` for transitions.
    pub fn input_feature_of(&self, idx: usize) -> Option<usize> {
        (idx < self.num_state()).then_some(idx % self.d)
    }

    pub(crate) fn check(&self, x: &Features, y: Option<&LabelSeq>) -> Result<()> {
        if x.dim() != self.d {
            return Err(dim(format!("input has {} features, spec expects {}", x.dim(), self.d)));
        }
        if let Some(y) = y {
            if y.len() != x.len() {
                return Err(dim(format!("labeling has length {}, input has {} positions", y.len(), x.len())));
            }
            if let Some(&bad) = y.as_slice().iter().find(|&&c| c >= self.m) {
                return Err(invalid(format!("label {bad} out of range for arity {}", self.m)));
            }
        }
        Ok(())
    }

    /// Computes `f(x, y)`.
    pub fn feature_vector(&self, x: &Features, y: &LabelSeq) -> Result<Vec<f64>> {
        self.check(x, Some(y))?;
        let mut out = vec![0.0; self.num_weights()];
        self.accumulate(x, y, 1.0, &mut out);
        Ok(out)
    }

    /// `out += scale · f(x, y)`; shapes must already be validated.
    pub(crate) fn accumulate(&self, x: &Features, y: &LabelSeq, scale: f64, out: &mut [f64]) {
        let labels = y.as_slice();
        for (l, &c) in labels.iter().enumerate() {
            let base = c * self.d;
            for (o, &v) in out[base..base + self.d].iter_mut().zip(x.row(l)) {
                *o += scale * v;
            }
        }
        for pair in labels.windows(2) {
            out[self.transition_index(pair[0], pair[1])] += scale;
        }
    }
}

/// One observed sequence with its gold labeling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceInstance {
    pub x: Features,
    pub y: LabelSeq,
}

impl SequenceInstance {
    pub fn new(x: Features, y: LabelSeq, m: usize) -> Result<Self> {
        if y.len() != x.len() {
            return Err(dim(format!("{} labels for {} positions", y.len(), x.len())));
        }
        if let Some(&bad) = y.as_slice().iter().find(|&&c| c >= m) {
            return Err(invalid(format!("label {bad} out of range for arity {m}")));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Feature spec plus a weight vector; `F(x, y; w) = wᵀ f(x, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainModel {
    pub spec: FeatureSpec,
    pub weights: Vec<f64>,
}

impl ChainModel {
    pub fn new(spec: FeatureSpec, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != spec.num_weights() {
            return Err(dim(format!("weight vector has length {}, spec needs {}", weights.len(), spec.num_weights())));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(invalid("weights must be finite"));
        }
        Ok(Self { spec, weights })
    }

    pub fn zeros(spec: FeatureSpec) -> Self {
        Self { spec, weights: vec![0.0; spec.num_weights()] }
    }

    pub fn score(&self, x: &Features, y: &LabelSeq) -> Result<f64> {
        self.spec.check(x, Some(y))?;
        Ok(score_unchecked(&self.spec, &self.weights, x, y))
    }

    /// `argmax_y wᵀ f(x, y)`.
    pub fn decode(&self, x: &Features) -> Result<LabelSeq> {
        self.spec.check(x, None)?;
        Ok(viterbi(&self.spec, &self.weights, x, None).0)
    }

    /// `argmax_y [wᵀ f(x, y) + hamming(y, gold)]` and its value.
    pub fn loss_augmented_decode(&self, instance: &SequenceInstance) -> Result<(LabelSeq, f64)> {
        self.spec.check(&instance.x, Some(&instance.y))?;
        Ok(viterbi(&self.spec, &self.weights, &instance.x, Some(&instance.y)))
    }
}

pub(crate) fn score_unchecked(spec: &FeatureSpec, w: &[f64], x: &Features, y: &LabelSeq) -> f64 {
    let labels = y.as_slice();
    let mut s = 0.0;
    for (l, &c) in labels.iter().enumerate() {
        let base = c * spec.d;
        s += dot(&w[base..base + spec.d], x.row(l));
    }
    for pair in labels.windows(2) {
        s += w[spec.transition_index(pair[0], pair[1])];
    }
    s
}

/// Per-position label potentials `wᵀ f_state`, plus `1(c != gold_l)` when loss-augmented.
fn node_potentials(spec: &FeatureSpec, w: &[f64], x: &Features, gold: Option<&LabelSeq>) -> Vec<f64> {
    let m = spec.m;
    let mut node = vec![0.0; x.len() * m];
    for l in 0..x.len() {
        let row = x.row(l);
        for c in 0..m {
            let base = c * spec.d;
            let mut v = dot(&w[base..base + spec.d], row);
            if let Some(g) = gold {
                if g.0[l] != c {
                    v += 1.0;
                }
            }
            node[l * m + c] = v;
        }
    }
    node
}

/// Max-product over the chain. Ties resolve to the lowest label index, both at
/// each backpointer and at the final position.
pub(crate) fn viterbi(spec: &FeatureSpec, w: &[f64], x: &Features, gold: Option<&LabelSeq>) -> (LabelSeq, f64) {
    let m = spec.m;
    let len = x.len();
    let node = node_potentials(spec, w, x, gold);
    let trans = &w[spec.num_state()..];

    let mut delta = node[..m].to_vec();
    let mut back = vec![0usize; len * m];
    let mut next = vec![0.0; m];
    for l in 1..len {
        for c2 in 0..m {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for c in 0..m {
                let v = delta[c] + trans[c * m + c2];
                if v > best {
                    best = v;
                    arg = c;
                }
            }
            next[c2] = best + node[l * m + c2];
            back[l * m + c2] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }

    let (mut cur, mut best) = (0, delta[0]);
    for (c, &v) in delta.iter().enumerate().skip(1) {
        if v > best {
            best = v;
            cur = c;
        }
    }
    let mut labels = vec![0; len];
    for l in (0..len).rev() {
        labels[l] = cur;
        if l > 0 {
            cur = back[l * m + cur];
        }
    }
    (LabelSeq(labels), best)
}

/// Number of positions where two labelings differ.
pub fn hamming_loss(a: &LabelSeq, b: &LabelSeq) -> Result<usize> {
    if a.len() != b.len() {
        return Err(dim(format!("labelings of length {} and {}", a.len(), b.len())));
    }
    Ok(a.0.iter().zip(&b.0).filter(|(p, q)| p != q).count())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}
