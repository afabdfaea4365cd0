//! Seeded multi-view test data with a known class-conditional Gaussian model.
//!
//! For view `v` with signal `s_v` and a random unit direction `u_v`, a claim
//! with label `c` gets `x_v ~ N((c - 1) · s_v · u_v, I)`. Views are
//! conditionally independent given the label, so each view carries only part
//! of the evidence and pooling views sharpens the class posterior.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{AudioSpan, Claim, Dataset, FeatureView, Label, Split};
use crate::error::{Result, VeriflowError};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthView {
    pub name: String,
    pub dim: usize,
    pub signal: f64,
}

impl SynthView {
    pub fn new(name: impl Into<String>, dim: usize, signal: f64) -> Self {
        SynthView {
            name: name.into(),
            dim,
            signal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_claims: usize,
    pub n_debates: usize,
    pub views: Vec<SynthView>,
    /// Probability that each cue word in a claim's text comes from its class's cue list.
    pub text_signal: f64,
    pub n_speakers: usize,
    pub seed: u64,
}

/// The generating distribution, exposed for Bayes-rule oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    /// `class_means[v][c]` is the mean of view `v` under class `c`; covariance is identity.
    pub class_means: Vec<[Vec<f64>; 3]>,
    pub class_prior: [f64; 3],
}

const NEUTRAL_WORDS: &[&str] = &[
    "we", "the", "people", "country", "tax", "jobs", "plan", "said", "will", "have", "year",
    "million", "america", "policy", "government", "our", "they", "going", "very", "money",
];

const CUE_WORDS: [&[&str]; 3] = [
    &["never", "disaster", "worst", "collapse", "nobody"],
    &["partly", "some", "roughly", "maybe", "almost"],
    &["record", "exactly", "confirmed", "doubled", "percent"],
];

const NEUTRAL_PER_CLAIM: usize = 6;
const CUES_PER_CLAIM: usize = 3;

impl SynthSpec {
    pub fn new(n_claims: usize, n_debates: usize, views: Vec<SynthView>, seed: u64) -> Self {
        SynthSpec {
            n_claims,
            n_debates,
            views,
            text_signal: 0.5,
            n_speakers: 4,
            seed,
        }
    }

    pub fn with_text_signal(mut self, text_signal: f64) -> Self {
        self.text_signal = text_signal;
        self
    }

    fn check(&self) -> Result<()> {
        if self.n_debates < 2 || self.n_claims < self.n_debates {
            return Err(VeriflowError::invalid(format!(
                "need n_claims >= n_debates >= 2, got {} claims over {} debates",
                self.n_claims, self.n_debates
            )));
        }
        if self.n_speakers == 0 {
            return Err(VeriflowError::invalid("need at least one speaker"));
        }
        if !(0.0..=1.0).contains(&self.text_signal) {
            return Err(VeriflowError::invalid("text_signal must lie in [0, 1]"));
        }
        for view in &self.views {
            if view.dim == 0 || !view.signal.is_finite() || view.signal < 0.0 {
                return Err(VeriflowError::invalid(format!(
                    "view {}: need dim >= 1 and finite signal >= 0",
                    view.name
                )));
            }
        }
        Ok(())
    }

    /// Claims in debate `d` alternate train, train, test by their position
    /// inside the debate, so every debate appears in the train split.
    pub fn generate(&self) -> Result<(Dataset, SynthTruth)> {
        self.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);

        let class_means: Vec<[Vec<f64>; 3]> = self
            .views
            .iter()
            .map(|view| {
                let mut dir: Vec<f64> = (0..view.dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                dir.iter_mut().for_each(|x| *x /= norm);
                let mean = |offset: f64| dir.iter().map(|u| offset * view.signal * u).collect();
                [mean(-1.0), mean(0.0), mean(1.0)]
            })
            .collect();

        let mut views: Vec<FeatureView> = self
            .views
            .iter()
            .map(|v| FeatureView::new(v.name.clone(), v.dim))
            .collect();
        let mut claims = Vec::with_capacity(self.n_claims);
        let mut per_debate = vec![0usize; self.n_debates];

        for i in 0..self.n_claims {
            let label = Label::ALL[rng.random_range(0..3)];
            let debate = i % self.n_debates;
            let split = if per_debate[debate] % 3 == 2 {
                Split::Test
            } else {
                Split::Train
            };
            per_debate[debate] += 1;
            let speaker = format!("speaker-{}", rng.random_range(0..self.n_speakers));
            let text = self.synth_text(label, &mut rng);
            let start = rng.random_range(0.0..600.0);
            let length = rng.random_range(2.0..12.0);
            let claim_id = format!("c{i:05}");

            for (view, means) in views.iter_mut().zip(&class_means) {
                let row = means[label.index()]
                    .iter()
                    .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                    .collect();
                view.rows.insert(claim_id.clone(), row);
            }
            claims.push(Claim {
                claim_id,
                debate_id: format!("debate-{debate:02}"),
                speaker,
                text,
                label,
                split,
                audio_span: Some(AudioSpan {
                    start_s: start,
                    end_s: start + length,
                }),
            });
        }

        let truth = SynthTruth {
            class_means,
            class_prior: [1.0 / 3.0; 3],
        };
        Ok((Dataset::new(claims, views), truth))
    }

    fn synth_text(&self, label: Label, rng: &mut ChaCha8Rng) -> String {
        let mut words: Vec<&str> = (0..NEUTRAL_PER_CLAIM)
            .map(|_| NEUTRAL_WORDS[rng.random_range(0..NEUTRAL_WORDS.len())])
            .collect();
        for _ in 0..CUES_PER_CLAIM {
            let class = if rng.random::<f64>() < self.text_signal {
                label.index()
            } else {
                rng.random_range(0..3)
            };
            let cues = CUE_WORDS[class];
            let at = rng.random_range(0..=words.len());
            words.insert(at, cues[rng.random_range(0..cues.len())]);
        }
        let mut text = words.join(" ");
        if let Some(first) = text.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        text.push('.');
        text
    }
}

/// Convenience wrapper with default text signal and speaker count.
pub fn synth_multiview(
    n_claims: usize,
    n_debates: usize,
    views: &[SynthView],
    seed: u64,
) -> Result<Dataset> {
    SynthSpec::new(n_claims, n_debates, views.to_vec(), seed)
        .generate()
        .map(|(ds, _)| ds)
}
