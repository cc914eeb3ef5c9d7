//! Synthetic tunable programs with analytically known surfaces.
//!
//! Cost is piecewise linear in knob values (two regimes split on one knob)
//! plus a linear feature term shared by both regimes. Distance for input `i`
//! at a setting with per-knob quality positions `q_j` is
//! `d0_i + s_i * sum_j w_j * (1 - q_j)^g_ij` with `g_ij = b_j * exp(sens * z_ij)`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::domain::{InputFeatures, KnobSetting, KnobSpace, RunRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CostBlock<F: Scalar> {
    pub intercept: F,
    pub knob_coefs: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CostForm<F: Scalar> {
    pub feature_coefs: Vec<F>,
    /// Knob whose value selects the regime.
    pub regime_knob: usize,
    /// Values `<= threshold` use `blocks[0]`.
    pub threshold: F,
    pub blocks: [CostBlock<F>; 2],
}

impl<F: Scalar> CostForm<F> {
    pub fn eval(&self, features: &[F], values: &[F]) -> F {
        let block = &self.blocks[usize::from(values[self.regime_knob] > self.threshold)];
        let f: F = self.feature_coefs.iter().zip(features).map(|(&c, &x)| c * x).sum();
        let k: F = block.knob_coefs.iter().zip(values).map(|(&c, &v)| c * v).sum();
        block.intercept + f + k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ErrorForm<F: Scalar> {
    pub weights: Vec<F>,
    pub base_exponents: Vec<F>,
    /// Spread of per-input exponents; 0 makes every input respond alike.
    pub sensitivity: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SurfaceSpec<F: Scalar> {
    pub space: KnobSpace<F>,
    pub feature_dim: usize,
    pub cost: CostForm<F>,
    pub error: ErrorForm<F>,
    /// Log-normal sigma on cost; additive distance noise is `noise * s_i`.
    pub noise: F,
    pub seed: u64,
}

/// Per-input parameters drawn from the surface seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthInput<F: Scalar> {
    pub id: String,
    pub features: Vec<F>,
    pub base_distance: F,
    pub scale: F,
    pub exponents: Vec<F>,
}

/// Which settings each input is profiled at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SettingSelection {
    All,
    /// This many distinct settings per input, always including the accurate one.
    Sampled(usize),
}

/// Quality position of every knob: 1 at the accurate level, 0 at the level
/// farthest from it.
pub fn quality<F: Scalar>(space: &KnobSpace<F>, setting: &KnobSetting) -> Vec<F> {
    space
        .knobs()
        .iter()
        .zip(&setting.0)
        .map(|(k, &l)| {
            let acc = k.accurate_level();
            let span = acc.max(k.len() - 1 - acc);
            if span == 0 {
                F::one()
            } else {
                F::one() - F::of_usize(l.abs_diff(acc)) / F::of_usize(span)
            }
        })
        .collect()
}

impl<F: Scalar> SurfaceSpec<F> {
    /// A two-regime surface where cost rises with quality on every knob.
    pub fn standard(space: KnobSpace<F>, feature_dim: usize, noise: F, sensitivity: F, seed: u64) -> Self {
        let n = space.arity();
        let block = |base: f64, slope: f64| {
            let mut intercept = F::of(base);
            let mut coefs = Vec::with_capacity(n);
            for (j, k) in space.knobs().iter().enumerate() {
                let lo = k.levels().iter().copied().fold(F::infinity(), F::min);
                let hi = k.levels().iter().copied().fold(F::neg_infinity(), F::max);
                let range = if hi > lo { hi - lo } else { F::one() };
                // anchor each term at the least-accurate value so it is >= 0
                let worst = k.value(farthest_level(k.len(), k.accurate_level()));
                let sign = if k.value(k.accurate_level()) >= worst { F::one() } else { -F::one() };
                let c = sign * F::of(slope * (j + 1) as f64) / range;
                intercept = intercept - c * worst;
                coefs.push(c);
            }
            CostBlock {
                intercept,
                knob_coefs: coefs,
            }
        };
        let k0 = &space.knobs()[0];
        let lo = k0.levels().iter().copied().fold(F::infinity(), F::min);
        let hi = k0.levels().iter().copied().fold(F::neg_infinity(), F::max);
        let cost = CostForm {
            feature_coefs: (0..feature_dim).map(|j| F::of(2.0 / (j + 1) as f64)).collect(),
            regime_knob: 0,
            threshold: (lo + hi) / F::of(2.0),
            blocks: [block(1.0, 1.0), block(2.0, 4.0)],
        };
        let error = ErrorForm {
            weights: vec![F::one() / F::of_usize(n); n],
            base_exponents: (0..n).map(|j| F::of(1.5 + 0.5 * j as f64)).collect(),
            sensitivity,
        };
        SurfaceSpec {
            space,
            feature_dim,
            cost,
            error,
            noise,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.space.arity();
        let bad = |m: &str| Err(Error::InvalidSpace(format!("synthetic surface: {m}")));
        if self.cost.feature_coefs.len() != self.feature_dim {
            return bad("feature coefficient count differs from feature_dim");
        }
        if self.cost.regime_knob >= n || self.cost.blocks.iter().any(|b| b.knob_coefs.len() != n) {
            return bad("cost blocks do not match the knob space");
        }
        if self.error.weights.len() != n || self.error.base_exponents.len() != n {
            return bad("error form does not match the knob space");
        }
        if self.error.weights.iter().any(|&w| !(w >= F::zero()))
            || self.error.base_exponents.iter().any(|&g| !(g > F::zero()))
            || !(self.error.sensitivity >= F::zero())
            || !(self.noise >= F::zero())
        {
            return bad("weights, noise and sensitivity must be >= 0 and exponents > 0");
        }
        // features lie in [0, 1]; the cost is separable, so its minimum is the
        // sum of per-term minima
        let fmin: F = self.cost.feature_coefs.iter().map(|&c| c.min(F::zero())).sum();
        for (b, block) in self.cost.blocks.iter().enumerate() {
            let mut min = block.intercept + fmin;
            for (j, k) in self.space.knobs().iter().enumerate() {
                let in_regime = |v: F| {
                    j != self.cost.regime_knob || (usize::from(v > self.cost.threshold) == b)
                };
                let term = k
                    .levels()
                    .iter()
                    .filter(|&&v| in_regime(v))
                    .map(|&v| block.knob_coefs[j] * v)
                    .fold(F::infinity(), F::min);
                min = min + term;
            }
            if min.is_finite() && !(min > F::zero()) {
                return bad("cost can reach a non-positive value");
            }
        }
        Ok(())
    }

    /// Draws the per-input parameters; identical for identical seeds.
    pub fn inputs(&self, n_inputs: usize) -> Vec<SynthInput<F>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..n_inputs)
            .map(|i| {
                let features = (0..self.feature_dim).map(|_| F::of(rng.random::<f64>())).collect();
                let base_distance = F::of(rng.random_range(1.0..2.0));
                let scale = F::of(rng.random_range(0.5..2.0));
                let exponents = self
                    .error
                    .base_exponents
                    .iter()
                    .map(|&b| {
                        let z: f64 = rng.sample(StandardNormal);
                        b * (self.error.sensitivity * F::of(z)).exp()
                    })
                    .collect();
                SynthInput {
                    id: format!("in{i:03}"),
                    features,
                    base_distance,
                    scale,
                    exponents,
                }
            })
            .collect()
    }

    /// Noise-free cost.
    pub fn cost_at(&self, features: &[F], setting: &KnobSetting) -> F {
        self.cost.eval(features, &self.space.values(setting))
    }
}

fn farthest_level(len: usize, acc: usize) -> usize {
    if acc >= len - 1 - acc {
        0
    } else {
        len - 1
    }
}

impl<F: Scalar> SynthInput<F> {
    fn response(&self, spec: &SurfaceSpec<F>, setting: &KnobSetting) -> F {
        quality(&spec.space, setting)
            .into_iter()
            .zip(&spec.error.weights)
            .zip(&self.exponents)
            .map(|((q, &w), &g)| w * (F::one() - q).powf(g))
            .sum()
    }

    /// Noise-free raw distance.
    pub fn distance_at(&self, spec: &SurfaceSpec<F>, setting: &KnobSetting) -> F {
        self.base_distance + self.scale * self.response(spec, setting)
    }

    /// Noise-free normalized error when every setting is profiled, or `None`
    /// when the input is degenerate.
    pub fn exact_error(&self, spec: &SurfaceSpec<F>, setting: &KnobSetting) -> Option<F> {
        let total: F = spec
            .space
            .knobs()
            .iter()
            .zip(&spec.error.weights)
            .filter(|(k, _)| k.len() > 1)
            .map(|(_, &w)| w)
            .sum();
        (total > F::zero()).then(|| self.response(spec, setting) / total)
    }
}

/// Profiles every input of `spec` at the selected settings.
pub fn generate_dataset<F: Scalar>(
    spec: &SurfaceSpec<F>,
    n_inputs: usize,
    selection: SettingSelection,
) -> Result<Dataset<F>> {
    spec.validate()?;
    let all: Vec<KnobSetting> = spec.space.settings().collect();
    let accurate = spec.space.accurate_setting();
    let names = (0..spec.feature_dim).map(|j| format!("f{j}")).collect();
    let mut ds = Dataset::new(spec.space.clone(), names);
    let mut pick = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let mut noise = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(2));
    for input in spec.inputs(n_inputs) {
        let chosen: Vec<&KnobSetting> = match selection {
            SettingSelection::All => all.iter().collect(),
            SettingSelection::Sampled(count) => {
                let count = count.clamp(1, all.len());
                let mut picked: Vec<&KnobSetting> = vec![&accurate];
                for idx in sample(&mut pick, all.len(), all.len()).into_iter() {
                    if picked.len() == count {
                        break;
                    }
                    if all[idx] != accurate {
                        picked.push(&all[idx]);
                    }
                }
                picked.sort();
                picked
            }
        };
        for setting in chosen {
            let mut cost = spec.cost_at(&input.features, setting);
            let mut distance = input.distance_at(spec, setting);
            if spec.noise > F::zero() {
                let zc: f64 = noise.sample(StandardNormal);
                let zd: f64 = noise.sample(StandardNormal);
                cost = cost * (spec.noise * F::of(zc)).exp();
                distance = (distance + spec.noise * input.scale * F::of(zd)).max(F::zero());
            }
            ds.push(RunRecord::new(
                input.id.clone(),
                InputFeatures(input.features.clone()),
                setting.clone(),
                distance,
                cost,
            ))?;
        }
    }
    Ok(ds)
}
