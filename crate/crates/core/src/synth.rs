//! Synthetic sequence data drawn from a random linear-chain CRF.
//!
//! A true model is sampled with standard-normal weights on the relevant
//! state features and on every transition; inputs are standard normal (or
//! grouped copies of a shared draw plus small noise); labels come from a
//! systematic-scan Gibbs sampler run against the true model's conditional.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chain::{dot, ChainModel, FeatureSpec, Features, LabelSeq, SequenceInstance};
use crate::error::{invalid, Result};

const CRF_STREAM: u64 = 0;
const FEATURE_STREAM: u64 = 1;
const LABEL_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Total input features.
    pub d: usize,
    /// Relevant input features; these are indices `0..d_rel`.
    pub d_rel: usize,
    /// Sequence length.
    pub len: usize,
    /// Label arity.
    pub m: usize,
    pub n_samples: usize,
    pub gibbs_sweeps: usize,
    pub correlated: bool,
    pub group_size: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    /// Desk-scale variant of the i.i.d.-feature protocol.
    fn default() -> Self {
        Self {
            d: 20,
            d_rel: 5,
            len: 8,
            m: 2,
            n_samples: 250,
            gibbs_sweeps: 500,
            correlated: false,
            group_size: 3,
            noise_sd: 0.05,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        FeatureSpec::new(self.d, self.m)?;
        if self.d_rel > self.d {
            return Err(invalid(format!("d_rel = {} exceeds d = {}", self.d_rel, self.d)));
        }
        if self.len == 0 {
            return Err(invalid("sequence length must be >= 1"));
        }
        if self.gibbs_sweeps == 0 {
            return Err(invalid("gibbs_sweeps must be >= 1"));
        }
        if self.correlated {
            if self.group_size == 0 || !self.d_rel.is_multiple_of(self.group_size) {
                return Err(invalid(format!("group size {} must divide d_rel = {}", self.group_size, self.d_rel)));
            }
            if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
                return Err(invalid("noise_sd must be positive in correlated mode"));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<FeatureSpec> {
        FeatureSpec::new(self.d, self.m)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// The generating model and the input features it actually reads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueCrf {
    pub model: ChainModel,
    pub relevant: Vec<usize>,
}

impl TrueCrf {
    pub fn is_relevant(&self, feature: usize) -> bool {
        self.relevant.binary_search(&feature).is_ok()
    }
}

pub fn gen_crf(cfg: &GeneratorConfig) -> Result<TrueCrf> {
    cfg.validate()?;
    let spec = cfg.spec()?;
    let mut rng = cfg.rng(CRF_STREAM);
    let mut weights = vec![0.0; spec.num_weights()];
    for c in 0..cfg.m {
        for k in 0..cfg.d_rel {
            weights[spec.state_index(k, c)] = StandardNormal.sample(&mut rng);
        }
    }
    for w in &mut weights[spec.num_state()..] {
        *w = StandardNormal.sample(&mut rng);
    }
    Ok(TrueCrf { model: ChainModel::new(spec, weights)?, relevant: (0..cfg.d_rel).collect() })
}

/// One `L × d` input matrix.
pub fn gen_features<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> Result<Features> {
    cfg.validate()?;
    let mut data = vec![0.0; cfg.len * cfg.d];
    for row in data.chunks_mut(cfg.d) {
        if cfg.correlated {
            let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| invalid(e.to_string()))?;
            for group in row[..cfg.d_rel].chunks_mut(cfg.group_size) {
                let base: f64 = StandardNormal.sample(rng);
                for v in group {
                    *v = base + noise.sample(rng);
                }
            }
            for v in &mut row[cfg.d_rel..] {
                *v = StandardNormal.sample(rng);
            }
        } else {
            for v in row.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
        }
    }
    Features::new(cfg.len, cfg.d, data)
}

/// Single-site systematic-scan Gibbs sampler for `p(y | x) ∝ exp(wᵀ f(x, y))`.
#[derive(Clone, Debug)]
pub struct GibbsSampler<'a> {
    spec: FeatureSpec,
    node: Vec<f64>,
    trans: &'a [f64],
    state: Vec<usize>,
    scratch: Vec<f64>,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(model: &'a ChainModel, x: &Features, init: LabelSeq) -> Result<Self> {
        let spec = model.spec;
        spec.check(x, Some(&init))?;
        let m = spec.m;
        let mut node = vec![0.0; x.len() * m];
        for l in 0..x.len() {
            for c in 0..m {
                let base = spec.state_index(0, c);
                node[l * m + c] = dot(&model.weights[base..base + spec.d], x.row(l));
            }
        }
        Ok(Self { spec, node, trans: &model.weights[spec.num_state()..], state: init.0, scratch: vec![0.0; m] })
    }

    /// Starts from a labeling drawn uniformly at random.
    pub fn with_random_start<R: Rng + ?Sized>(model: &'a ChainModel, x: &Features, rng: &mut R) -> Result<Self> {
        let init = LabelSeq((0..x.len()).map(|_| rng.random_range(0..model.spec.m)).collect());
        Self::new(model, x, init)
    }

    /// Resamples positions `0..L` in order, each from its exact conditional.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let m = self.spec.m;
        let len = self.state.len();
        for l in 0..len {
            let mut max = f64::NEG_INFINITY;
            for c in 0..m {
                let mut v = self.node[l * m + c];
                if l > 0 {
                    v += self.trans[self.state[l - 1] * m + c];
                }
                if l + 1 < len {
                    v += self.trans[c * m + self.state[l + 1]];
                }
                self.scratch[c] = v;
                max = max.max(v);
            }
            let mut total = 0.0;
            for v in &mut self.scratch {
                *v = (*v - max).exp();
                total += *v;
            }
            let mut u = rng.random::<f64>() * total;
            let mut pick = m - 1;
            for (c, &p) in self.scratch.iter().enumerate() {
                if u < p {
                    pick = c;
                    break;
                }
                u -= p;
            }
            self.state[l] = pick;
        }
    }

    pub fn state(&self) -> &[usize] {
        &self.state
    }

    pub fn labels(&self) -> LabelSeq {
        LabelSeq(self.state.clone())
    }
}

/// Labels `x` by `sweeps` Gibbs sweeps from a random start; deterministic per seed.
pub fn gibbs_label(model: &ChainModel, x: &Features, sweeps: usize, seed: u64) -> Result<LabelSeq> {
    if sweeps == 0 {
        return Err(invalid("sweeps must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_chain(model, x, sweeps, &mut rng)
}

fn run_chain<R: Rng + ?Sized>(model: &ChainModel, x: &Features, sweeps: usize, rng: &mut R) -> Result<LabelSeq> {
    let mut sampler = GibbsSampler::with_random_start(model, x, rng)?;
    for _ in 0..sweeps {
        sampler.sweep(rng);
    }
    Ok(sampler.labels())
}

/// A generated dataset together with the model that labeled it.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub config: GeneratorConfig,
    pub crf: TrueCrf,
    pub instances: Vec<SequenceInstance>,
}

pub fn gen_dataset(cfg: &GeneratorConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let crf = gen_crf(cfg)?;
    let mut feature_rng = cfg.rng(FEATURE_STREAM);
    let mut label_rng = cfg.rng(LABEL_STREAM);
    let instances = (0..cfg.n_samples)
        .map(|_| {
            let x = gen_features(cfg, &mut feature_rng)?;
            let y = run_chain(&crf.model, &x, cfg.gibbs_sweeps, &mut label_rng)?;
            SequenceInstance::new(x, y, cfg.m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticData { config: *cfg, crf, instances })
}
