#![allow(dead_code)]

use std::path::{Path, PathBuf};

use veriflow::corpus::load_dataset;
use veriflow::{Dataset, Label};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub const FIXTURE_VIEWS: [&str; 3] = ["embedding_stub.json", "compare_stub.json", "ivector_stub.json"];

/// Claims shaped like the released corpus (94 train / 192 test claims)
/// with small stub views.
pub fn fixture_dataset() -> Dataset {
    let views: Vec<PathBuf> = FIXTURE_VIEWS.iter().map(|v| fixture(v)).collect();
    load_dataset(&fixture("claims.jsonl"), &views).expect("fixture loads")
}

pub fn labels_from_counts(counts: [usize; 3]) -> Vec<Label> {
    Label::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&l, n)| std::iter::repeat_n(l, n))
        .collect()
}

/// Brute-force metrics straight from the definitions, one example at a time.
pub struct OracleMetrics {
    pub mae: f64,
    pub mmae: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub mar: f64,
}

pub fn oracle_metrics(truth: &[Label], pred: &[Label]) -> OracleMetrics {
    let n = truth.len() as f64;
    let dist = |a: Label, b: Label| (a.index() as f64 - b.index() as f64).abs();
    let mae = truth.iter().zip(pred).map(|(&t, &p)| dist(t, p)).sum::<f64>() / n;
    let mut class_maes = Vec::new();
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    for c in Label::ALL {
        let members: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == c).collect();
        let predicted_c = pred.iter().filter(|&&p| p == c).count() as f64;
        let hits = members.iter().filter(|&&i| pred[i] == c).count() as f64;
        let recall = if members.is_empty() { 0.0 } else { hits / members.len() as f64 };
        let precision = if predicted_c == 0.0 { 0.0 } else { hits / predicted_c };
        if !members.is_empty() {
            class_maes.push(members.iter().map(|&i| dist(truth[i], pred[i])).sum::<f64>() / members.len() as f64);
        }
        recall_sum += recall;
        f1_sum += if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
    }
    OracleMetrics {
        mae,
        mmae: class_maes.iter().sum::<f64>() / class_maes.len() as f64,
        accuracy: 100.0 * truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64 / n,
        macro_f1: 100.0 * f1_sum / 3.0,
        mar: 100.0 * recall_sum / 3.0,
    }
}

/// A tiny 1-d multinomial LR problem.
pub struct TinyProblem {
    pub x: Vec<f64>,
    pub y: Vec<Label>,
    pub sample_weights: Vec<f64>,
    pub l2: f64,
}

impl TinyProblem {
    /// Six points in [-2, 2], every class twice, sample weights in
    /// [0.5, 2] and l2 log-uniform in [0.01, 1].
    pub fn random(seed: u64) -> TinyProblem {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut y = vec![Label::False, Label::False, Label::HalfTrue, Label::HalfTrue, Label::True, Label::True];
        for i in (1..6).rev() {
            y.swap(i, rng.random_range(0..=i));
        }
        let sample_weights = (0..6).map(|_| rng.random_range(0.5..2.0)).collect();
        TinyProblem {
            x,
            y,
            sample_weights,
            l2: 10f64.powf(rng.random_range(-2.0..0.0)),
        }
    }

    pub fn design(&self) -> ndarray::Array2<f64> {
        ndarray::Array2::from_shape_vec((self.x.len(), 1), self.x.clone()).unwrap()
    }

    pub fn theta(model: &veriflow::linmodel::LinearModel) -> [f64; 6] {
        let (w, b) = (&model.weights, &model.bias);
        [w[[0, 0]], w[[1, 0]], w[[2, 0]], b[0], b[1], b[2]]
    }

    /// Trained loss and oracle minimum.
    pub fn compare_with_oracle(&self, seed: u64) -> (f64, f64) {
        use veriflow::linmodel::{train_logreg_weighted, OptConfig};
        let model = train_logreg_weighted(
            self.design().view(),
            &self.y,
            &self.sample_weights,
            self.l2,
            &OptConfig::default(),
            seed,
        )
        .unwrap();
        (self.loss(&Self::theta(&model)), self.oracle_minimum().1)
    }

    /// Weighted mean cross-entropy plus `l2/2 · Σ w_c²`, for
    /// `theta = [w_0, w_1, w_2, b_0, b_1, b_2]`. Written from the definition,
    /// without any library code.
    pub fn loss(&self, theta: &[f64; 6]) -> f64 {
        let mut total = 0.0;
        let mut mass = 0.0;
        for ((&x, &y), &s) in self.x.iter().zip(&self.y).zip(&self.sample_weights) {
            let z: Vec<f64> = (0..3).map(|c| theta[c] * x + theta[3 + c]).collect();
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += s * (lse - z[y.index()]);
            mass += s;
        }
        total / mass + 0.5 * self.l2 * (theta[0].powi(2) + theta[1].powi(2) + theta[2].powi(2))
    }

    /// Coordinate-wise golden-section search swept to a fixed point. The
    /// objective is convex and smooth, so exact coordinate minimization
    /// converges to the global minimum value.
    pub fn oracle_minimum(&self) -> ([f64; 6], f64) {
        let mut theta = [0.0; 6];
        let mut best = self.loss(&theta);
        let mut radius = 16.0;
        for _ in 0..20_000 {
            for k in 0..6 {
                let center = theta[k];
                let f = |v: f64| {
                    let mut t = theta;
                    t[k] = v;
                    self.loss(&t)
                };
                theta[k] = golden_section(f, center - radius, center + radius, 1e-13);
            }
            let value = self.loss(&theta);
            let gain = best - value;
            best = value;
            if gain < 1e-17 {
                break;
            }
            radius = (radius * 0.9).max(1.0);
        }
        (theta, best)
    }
}

pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        }
    }
    (lo + hi) / 2.0
}

pub fn normal_cdf(x: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().cdf(x)
}

/// `[data]` section over the fixture claims and stub views, absolute paths.
pub fn fixture_data_toml() -> String {
    let views: Vec<String> = FIXTURE_VIEWS
        .iter()
        .map(|v| format!("{:?}", fixture(v).display().to_string()))
        .collect();
    format!(
        "[data]\nclaims = {:?}\nviews = [{}]\n",
        fixture("claims.jsonl").display().to_string(),
        views.join(", ")
    )
}

/// One small configuration per runner subcommand.
pub fn subcommand_cases() -> Vec<(veriflow::runner::Command, String)> {
    use veriflow::runner::Command;
    let data = fixture_data_toml();
    let net = "[model]\nfamily = \"fusion_net\"\n[hyper]\nepochs = 2\n";
    vec![
        (Command::Validate, format!("seed = 1\n{data}")),
        (Command::FeaturizeText, format!("seed = 1\n{data}")),
        (
            Command::Train,
            format!("seed = 1\n{data}[model]\nfamily = \"concat_lr\"\nl2_grid = [0.1, 1.0]\n"),
        ),
        (Command::Evaluate, format!("seed = 2\n{data}{net}")),
        (
            Command::CvTune,
            format!("seed = 1\n{data}[model]\nfamily = \"lr\"\ninputs = [\"embedding_stub\"]\nl2_grid = [0.01, 1.0]\n"),
        ),
        (Command::Ablate, format!("seed = 3\n{data}{net}")),
        (
            Command::Ensemble,
            format!("seed = 1\n{data}[model]\nfamily = \"stacked\"\nl2 = 1.0\nmeta_grid = [0.1, 1.0]\n"),
        ),
        (Command::Synth, "seed = 4\n[synth]\nn_claims = 60\n".to_string()),
        (
            Command::Report,
            format!(
                "seed = 1\n{data}[report]\nbaselines = true\nrandom_trials = 50\n\
                 [[report.references]]\nname = \"Copenhagen\"\nmae = 0.7050\nmmae = 0.6746\nacc = 43.17\n"
            ),
        ),
    ]
}

/// Runs `command` twice from scratch and compares every output file byte by
/// byte. Returns the number of files compared.
pub fn run_twice(command: veriflow::runner::Command, toml: &str) -> Result<usize, String> {
    use veriflow::runner::{execute, ExperimentConfig};
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = ExperimentConfig::parse(toml, root.path()).map_err(|e| e.to_string())?;
    let a = execute(command, &config, &root.path().join("a")).map_err(|e| format!("first run: {e}"))?;
    let b = execute(command, &config, &root.path().join("b")).map_err(|e| format!("second run: {e}"))?;
    if a.files != b.files {
        return Err(format!("file lists differ: {:?} vs {:?}", a.files, b.files));
    }
    for file in &a.files {
        let x = std::fs::read(a.dir.join(file)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.dir.join(file)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{} differs between runs", file));
        }
    }
    Ok(a.files.len())
}

/// A random small network with a 4-example batch and random class weights.
pub fn random_net_case(
    seed: u64,
) -> (veriflow::neurofusion::FusionNet, Vec<veriflow::neurofusion::Example>, veriflow::ClassWeights) {
    use rand::{Rng, SeedableRng};
    use veriflow::neurofusion::{init_net, Hyper};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n_views = rng.random_range(1..=3);
    let views: Vec<(String, usize)> = (0..n_views).map(|v| (format!("v{v}"), rng.random_range(1..=4))).collect();
    let hyper = Hyper {
        per_view_hidden: 4,
        fusion_hidden: 5,
        seed,
        ..Hyper::default()
    };
    let mut net = init_net(&views, &hyper).unwrap();
    // Nonzero biases so every parameter is exercised.
    net.params_mut().for_each(|p| *p += rng.random_range(-0.1..0.1));
    let batch = (0..4)
        .map(|_| {
            let x = views
                .iter()
                .map(|(_, d)| (0..*d).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            (x, Label::ALL[rng.random_range(0..3)])
        })
        .collect();
    let weights = veriflow::ClassWeights([
        rng.random_range(0.5..2.0),
        rng.random_range(0.5..2.0),
        rng.random_range(0.5..2.0),
    ]);
    (net, batch, weights)
}

/// Weighted mean cross-entropy through the public eval-mode forward pass.
pub fn net_loss(
    net: &veriflow::neurofusion::FusionNet,
    batch: &[veriflow::neurofusion::Example],
    weights: &veriflow::ClassWeights,
) -> f64 {
    use veriflow::neurofusion::{forward, Mode};
    batch
        .iter()
        .map(|(x, y)| {
            let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
            let p = forward(net, &refs, Mode::Eval).unwrap();
            -weights.get(*y) * p[y.index()].ln()
        })
        .sum::<f64>()
        / batch.len() as f64
}

/// Largest relative gap between backprop and central differences of
/// [`net_loss`], denominator `max(|a|, |n|, 1e-6)`.
pub fn net_gradient_error(
    net: &veriflow::neurofusion::FusionNet,
    batch: &[veriflow::neurofusion::Example],
    weights: &veriflow::ClassWeights,
) -> f64 {
    let (_, grads) = veriflow::neurofusion::batch_gradient(net, batch, weights).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (k, &g) in grads.params().enumerate() {
        let mut up = net.clone();
        *up.params_mut().nth(k).unwrap() += h;
        let mut down = net.clone();
        *down.params_mut().nth(k).unwrap() -= h;
        let numeric = (net_loss(&up, batch, weights) - net_loss(&down, batch, weights)) / (2.0 * h);
        worst = worst.max((g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6));
    }
    worst
}
