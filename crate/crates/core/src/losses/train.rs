//! Least-quantile regression: fit a predictor by minimizing the
//! `tau`-quantile of absolute residuals over minibatches.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::quantile::{hard_quantile, soft_quantile_with_grad, QuantileSpec};
use crate::error::{Error, Result};

/// Rows of features with a scalar response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    response: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, response: Vec<f64>) -> Result<Self> {
        if features.len() != response.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} responses",
                features.len(),
                response.len()
            )));
        }
        if let Some(first) = features.first() {
            let d = first.len();
            if features.iter().any(|f| f.len() != d) {
                return Err(Error::invalid("feature rows have different lengths"));
            }
        }
        if features
            .iter()
            .flatten()
            .chain(&response)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite(
                "dataset contains non-finite values".into(),
            ));
        }
        Ok(Self { features, response })
    }

    /// Whitespace- or comma-separated rows: features then response.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut features = Vec::new();
        let mut response = Vec::new();
        let mut width = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut values = Vec::new();
            for tok in line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
            {
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("not a number: {tok:?}"),
                })?;
                values.push(v);
            }
            if values.len() < 2 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "need at least one feature and a response".into(),
                });
            }
            match width {
                None => width = Some(values.len()),
                Some(w) if w != values.len() => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("expected {w} columns, found {}", values.len()),
                    })
                }
                _ => {}
            }
            response.push(values.pop().unwrap());
            features.push(values);
        }
        Self::new(features, response)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Inverse of [`Dataset::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (f, z) in self.features.iter().zip(&self.response) {
            for v in f {
                let _ = write!(out, "{v} ");
            }
            let _ = writeln!(out, "{z}");
        }
        out
    }

    /// `z = <w, x> + 0.1 noise`, with a fraction of responses replaced by
    /// large outliers. Features are standard normal.
    pub fn synthetic_linear(
        n: usize,
        dim: usize,
        outlier_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !(0.0..1.0).contains(&outlier_fraction) {
            return Err(Error::invalid(format!(
                "outlier fraction must lie in [0, 1), got {outlier_fraction}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Unit-norm slope so no seed yields a near-flat response.
        let mut w: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        w.iter_mut().for_each(|v| *v /= norm);
        let n_out = (outlier_fraction * n as f64).round() as usize;
        let mut features = Vec::with_capacity(n);
        let mut response = Vec::with_capacity(n);
        for i in 0..n {
            let x: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
            let clean: f64 =
                x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.1 * gaussian(&mut rng);
            let z = if i < n_out {
                clean + rng.random_range(10.0..30.0) * if rng.random::<bool>() { 1.0 } else { -1.0 }
            } else {
                clean
            };
            features.push(x);
            response.push(z);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self::new(
            order.iter().map(|&i| features[i].clone()).collect(),
            order.iter().map(|&i| response[i]).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            response: idx.iter().map(|&i| self.response[i]).collect(),
        }
    }

    /// Shuffled split; the second part holds `test_fraction` of the rows.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::invalid(format!(
                "test fraction must lie in [0, 1), got {test_fraction}"
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (test_fraction * self.len() as f64).round() as usize;
        let (test, train) = idx.split_at(n_test);
        Ok((self.subset(train), self.subset(test)))
    }
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Linear,
    /// One hidden `tanh` layer.
    Mlp {
        hidden: usize,
    },
}

impl FromStr for Architecture {
    type Err = Error;

    /// `linear` or `mlp:<hidden>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "linear" => Ok(Self::Linear),
            None if s == "mlp" => Ok(Self::Mlp { hidden: 16 }),
            Some(("mlp", h)) => match h.parse() {
                Ok(hidden) if hidden > 0 => Ok(Self::Mlp { hidden }),
                _ => Err(Error::invalid(format!("bad hidden width {h:?}"))),
            },
            _ => Err(Error::invalid(format!("unknown architecture {s:?}"))),
        }
    }
}

/// A predictor with a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    arch: Architecture,
    dim: usize,
    params: Vec<f64>,
}

impl Predictor {
    /// Linear weights start at zero; MLP weights are drawn from the seed.
    pub fn new(arch: Architecture, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        let params = match arch {
            Architecture::Linear => vec![0.0; dim + 1],
            Architecture::Mlp { hidden } => {
                if hidden == 0 {
                    return Err(Error::invalid("hidden width must be positive"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s_in = 1.0 / (dim as f64).sqrt();
                let s_out = 1.0 / (hidden as f64).sqrt();
                let mut p = Vec::with_capacity(hidden * (dim + 2) + 1);
                p.extend((0..hidden * dim).map(|_| s_in * gaussian(&mut rng)));
                p.extend(std::iter::repeat_n(0.0, hidden));
                p.extend((0..hidden).map(|_| s_out * gaussian(&mut rng)));
                p.push(0.0);
                p
            }
        };
        Ok(Self { arch, dim, params })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.forward(x, None)
    }

    /// Adds `scale * d f(x) / d params` into `grad`.
    pub fn accumulate_grad(&self, x: &[f64], scale: f64, grad: &mut [f64]) {
        self.forward(x, Some((scale, grad)));
    }

    fn forward(&self, x: &[f64], back: Option<(f64, &mut [f64])>) -> f64 {
        let d = self.dim;
        let p = &self.params;
        match self.arch {
            Architecture::Linear => {
                let f = p[d] + x.iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
                if let Some((s, g)) = back {
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi += s * xi;
                    }
                    g[d] += s;
                }
                f
            }
            Architecture::Mlp { hidden } => {
                let (w1, rest) = p.split_at(hidden * d);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let act: Vec<f64> = (0..hidden)
                    .map(|k| {
                        (b1[k]
                            + w1[k * d..(k + 1) * d]
                                .iter()
                                .zip(x)
                                .map(|(a, b)| a * b)
                                .sum::<f64>())
                        .tanh()
                    })
                    .collect();
                let f = b2[0] + act.iter().zip(w2).map(|(a, b)| a * b).sum::<f64>();
                if let Some((s, g)) = back {
                    let (g1, rest) = g.split_at_mut(hidden * d);
                    let (gb1, rest) = rest.split_at_mut(hidden);
                    let (gw2, gb2) = rest.split_at_mut(hidden);
                    gb2[0] += s;
                    for k in 0..hidden {
                        gw2[k] += s * act[k];
                        let dz = s * w2[k] * (1.0 - act[k] * act[k]);
                        gb1[k] += dz;
                        for (gi, xi) in g1[k * d..(k + 1) * d].iter_mut().zip(x) {
                            *gi += dz * xi;
                        }
                    }
                }
                f
            }
        }
    }

    pub fn residuals(&self, data: &Dataset) -> Vec<f64> {
        data.features
            .iter()
            .zip(&data.response)
            .map(|(x, z)| (z - self.predict(x)).abs())
            .collect()
    }

    pub fn mse(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return f64::NAN;
        }
        self.residuals(data).iter().map(|r| r * r).sum::<f64>() / data.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Self::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::adam()),
            _ => Err(Error::invalid(format!("unknown optimizer {s:?}"))),
        }
    }
}

/// How the minibatch quantile is differentiated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantileMode {
    /// Soft quantile at the given regularization.
    Soft { epsilon: f64 },
    /// Subgradient through the single residual at the empirical quantile.
    Hard,
}

impl QuantileMode {
    /// `epsilon = 0` selects the hard baseline.
    pub fn from_epsilon(epsilon: f64) -> Result<Self> {
        if epsilon == 0.0 {
            Ok(Self::Hard)
        } else if epsilon.is_finite() && epsilon > 0.0 {
            Ok(Self::Soft { epsilon })
        } else {
            Err(Error::invalid(format!(
                "epsilon must be nonnegative, got {epsilon}"
            )))
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            Self::Soft { epsilon } => *epsilon,
            Self::Hard => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub tau: f64,
    pub mode: QuantileMode,
    /// Middle target mass; `None` means `1 / batch length`.
    pub filler: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub eta: f64,
    pub max_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            mode: QuantileMode::Soft { epsilon: 1e-2 },
            filler: None,
            batch_size: 512,
            epochs: 100,
            learning_rate: 1e-4,
            optimizer: Optimizer::adam(),
            seed: 0,
            eta: 1e-3,
            max_iters: 5000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be at least 2"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        QuantileMode::from_epsilon(self.mode.epsilon())?;
        Ok(())
    }
}

/// Quantiles are of absolute residuals; `mse` is on the test split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub train_quantile: f64,
    pub test_quantile: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
    /// Set when training stopped on a non-finite loss or gradient.
    pub aborted: Option<String>,
    pub predictor: Predictor,
}

impl TrainingTrace {
    pub fn initial(&self) -> &TraceRow {
        &self.rows[0]
    }

    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("trace has an epoch-0 row")
    }

    /// Whitespace-separated table with a header line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("epoch train_quantile test_quantile mse\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{} {:.12e} {:.12e} {:.12e}",
                r.epoch, r.train_quantile, r.test_quantile, r.mse
            );
        }
        if let Some(msg) = &self.aborted {
            let _ = writeln!(out, "# aborted: {msg}");
        }
        out
    }
}

struct OptState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptState {
    fn step(&mut self, opt: Optimizer, lr: f64, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        match opt {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for i in 0..params.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
                }
            }
        }
    }
}

fn evaluate(
    predictor: &Predictor,
    train: &Dataset,
    test: &Dataset,
    tau: f64,
    epoch: usize,
) -> Result<TraceRow> {
    let test_quantile = if test.is_empty() {
        f64::NAN
    } else {
        hard_quantile(&predictor.residuals(test), tau)?
    };
    Ok(TraceRow {
        epoch,
        train_quantile: hard_quantile(&predictor.residuals(train), tau)?,
        test_quantile,
        mse: predictor.mse(test),
    })
}

/// Quantile loss of one minibatch and its gradient with respect to the
/// residuals.
fn batch_loss(residuals: &[f64], cfg: &TrainConfig) -> Result<(f64, Vec<f64>)> {
    match cfg.mode {
        QuantileMode::Hard => {
            let q = hard_quantile(residuals, cfg.tau)?;
            let at = residuals
                .iter()
                .position(|r| *r == q)
                .expect("quantile is a sample value");
            let mut g = vec![0.0; residuals.len()];
            g[at] = 1.0;
            Ok((q, g))
        }
        QuantileMode::Soft { epsilon } => {
            let filler = cfg.filler.unwrap_or(1.0 / residuals.len() as f64);
            let spec = QuantileSpec::new(cfg.tau, filler, epsilon)?
                .with_eta(cfg.eta)
                .with_max_iters(cfg.max_iters);
            soft_quantile_with_grad(residuals, &spec)
        }
    }
}

/// Minibatch training of `predictor` on the `tau`-quantile of absolute
/// residuals. The trace starts with an epoch-0 row before any update.
pub fn train_least_quantile(
    train: &Dataset,
    test: &Dataset,
    mut predictor: Predictor,
    cfg: &TrainConfig,
) -> Result<TrainingTrace> {
    cfg.validate()?;
    if train.len() < 2 {
        return Err(Error::invalid("training set needs at least two rows"));
    }
    if train.dim() != predictor.dim || (!test.is_empty() && test.dim() != predictor.dim) {
        return Err(Error::invalid(
            "dataset dimension does not match the predictor",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let np = predictor.params.len();
    let mut opt = OptState {
        m: vec![0.0; np],
        v: vec![0.0; np],
        t: 0,
    };
    let mut rows = vec![evaluate(&predictor, train, test, cfg.tau, 0)?];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = vec![0.0; np];

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size).filter(|b| b.len() >= 2) {
            let signed: Vec<f64> = batch
                .iter()
                .map(|&i| train.response[i] - predictor.predict(&train.features[i]))
                .collect();
            let residuals: Vec<f64> = signed.iter().map(|r| r.abs()).collect();
            let (loss, dres) = match batch_loss(&residuals, cfg) {
                Ok(v) => v,
                Err(e) if e.is_numerical() => {
                    return Ok(TrainingTrace {
                        rows,
                        aborted: Some(format!("epoch {epoch}: {e}")),
                        predictor,
                    });
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || dres.iter().any(|g| !g.is_finite()) {
                return Ok(TrainingTrace {
                    rows,
                    aborted: Some(format!("epoch {epoch}: non-finite loss {loss}")),
                    predictor,
                });
            }
            grad.fill(0.0);
            for ((&i, r), g) in batch.iter().zip(&signed).zip(&dres) {
                // d|z - f| / df = -sign(z - f)
                let s = if *r > 0.0 {
                    -1.0
                } else if *r < 0.0 {
                    1.0
                } else {
                    0.0
                };
                if s * g != 0.0 {
                    predictor.accumulate_grad(&train.features[i], s * g, &mut grad);
                }
            }
            opt.step(
                cfg.optimizer,
                cfg.learning_rate,
                &mut predictor.params,
                &grad,
            );
            if predictor.params.iter().any(|p| !p.is_finite()) {
                return Ok(TrainingTrace {
                    rows,
                    aborted: Some(format!("epoch {epoch}: parameters became non-finite")),
                    predictor,
                });
            }
        }
        rows.push(evaluate(&predictor, train, test, cfg.tau, epoch)?);
    }
    Ok(TrainingTrace {
        rows,
        aborted: None,
        predictor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::differentiation::finite_diff_check;

    #[test]
    fn parse_round_trip() {
        let text = "# header\n1 2 3\n4,5,6  # trailing\n\n7 8 9\n";
        let d = Dataset::parse(text).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.response(), &[3.0, 6.0, 9.0]);
        assert_eq!(Dataset::parse(&d.to_text()).unwrap(), d);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match Dataset::parse("1 2\n3 x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match Dataset::parse("1 2\n3 4 5\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = Dataset::synthetic_linear(50, 3, 0.1, 7).unwrap();
        let b = Dataset::synthetic_linear(50, 3, 0.1, 7).unwrap();
        assert_eq!(a, b);
        let (tr, te) = a.split(0.2, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (40, 10));
    }

    #[test]
    fn predictor_gradients_match_finite_differences() {
        let x = [0.3, -1.2, 0.8];
        for arch in [Architecture::Linear, Architecture::Mlp { hidden: 4 }] {
            let mut p = Predictor::new(arch, 3, 5).unwrap();
            for (i, v) in p.params_mut().iter_mut().enumerate() {
                *v += 0.1 * (i as f64).sin();
            }
            let mut g = vec![0.0; p.params().len()];
            p.accumulate_grad(&x, 1.0, &mut g);
            let fd = finite_diff_check(
                |theta| {
                    let mut q = p.clone();
                    q.params_mut().copy_from_slice(theta);
                    q.predict(&x)
                },
                p.params(),
                1e-6,
            )
            .unwrap();
            for (a, b) in g.iter().zip(&fd.gradient) {
                assert!((a - b).abs() < 1e-7, "{arch:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn architecture_parsing() {
        assert_eq!(
            "linear".parse::<Architecture>().unwrap(),
            Architecture::Linear
        );
        assert_eq!(
            "mlp:8".parse::<Architecture>().unwrap(),
            Architecture::Mlp { hidden: 8 }
        );
        assert!("mlp:0".parse::<Architecture>().is_err());
        assert!("tree".parse::<Architecture>().is_err());
    }

    #[test]
    fn short_training_reduces_quantile() {
        let data = Dataset::synthetic_linear(400, 3, 0.1, 3).unwrap();
        let (train, test) = data.split(0.2, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 5e-2,
            ..TrainConfig::default()
        };
        let p = Predictor::new(Architecture::Linear, 3, 0).unwrap();
        let trace = train_least_quantile(&train, &test, p, &cfg).unwrap();
        assert!(trace.aborted.is_none());
        assert_eq!(trace.rows.len(), 31);
        assert_eq!(trace.rows[0].epoch, 0);
        assert!(trace.last().train_quantile < 0.5 * trace.initial().train_quantile);

        let hard = TrainConfig {
            mode: QuantileMode::Hard,
            ..cfg
        };
        let p = Predictor::new(Architecture::Linear, 3, 0).unwrap();
        let trace = train_least_quantile(&train, &test, p, &hard).unwrap();
        assert!(trace.last().train_quantile < trace.initial().train_quantile);
    }

    #[test]
    fn rejects_bad_config() {
        let data = Dataset::synthetic_linear(20, 2, 0.0, 1).unwrap();
        let p = Predictor::new(Architecture::Linear, 2, 0).unwrap();
        let bad = TrainConfig {
            tau: 1.0,
            ..TrainConfig::default()
        };
        assert!(train_least_quantile(&data, &data, p.clone(), &bad).is_err());
        let p3 = Predictor::new(Architecture::Linear, 3, 0).unwrap();
        assert!(train_least_quantile(&data, &data, p3, &TrainConfig::default()).is_err());
        assert!(QuantileMode::from_epsilon(-1.0).is_err());
        assert_eq!(QuantileMode::from_epsilon(0.0).unwrap(), QuantileMode::Hard);
    }
}
