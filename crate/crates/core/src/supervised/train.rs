use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::objective::{regularizer, regularizer_grad, Objective, RegularizerKind};
use super::params::TrainableParams;
use crate::error::{ensure_dim, Error, Result};
use crate::io::LossRecord;
use crate::model::{ForwardOperator, MixtureModel, NoiseModel};
use crate::rng::SeededRng;
use crate::unsupervised::kmeans;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub regularizer: RegularizerKind,
    pub reg_lambda: f64,
    /// Box bound on every parameter; `None` means unbounded.
    pub clamp: Option<f64>,
    /// Factor rank; `None` uses `min(n, 32)`.
    pub rank: Option<usize>,
    /// Component count used when no initial parameters are supplied.
    pub components: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            regularizer: RegularizerKind::None,
            reg_lambda: 0.0,
            clamp: None,
            rank: None,
            components: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.components == 0 {
            return Err(Error::Config(
                "epochs, batch_size and components must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.reg_lambda >= 0.0) {
            return Err(Error::Config(format!(
                "reg_lambda must be >= 0, got {}",
                self.reg_lambda
            )));
        }
        if let Some(c) = self.clamp {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clamp must be positive, got {c}")));
            }
        }
        if let Some(r) = self.rank {
            if r == 0 || r > n {
                return Err(Error::Config(format!("rank must lie in 1..={n}, got {r}")));
            }
        }
        Ok(())
    }

    pub fn effective_rank(&self, n: usize) -> usize {
        self.rank.unwrap_or(n.min(32))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: MixtureModel,
    pub params: TrainableParams,
    /// Epoch 0 holds the risk at initialization.
    pub history: Vec<LossRecord>,
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, len: usize) -> Self {
        Self {
            kind,
            lr,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn apply(&mut self, theta: &mut [f64], g: &[f64]) {
        self.step += 1;
        match self.kind {
            Optimizer::Sgd => {
                for (t, gi) in theta.iter_mut().zip(g) {
                    *t -= self.lr * gi;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                for k in 0..theta.len() {
                    self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * g[k];
                    self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * g[k] * g[k];
                    let m_hat = self.m[k] / c1;
                    let v_hat = self.v[k] / c2;
                    theta[k] -= self.lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Default starting point: k-means centers as means, `c·[I_r; 0]` factors
/// with `c` the root mean within-cluster variance, uniform weights.
pub fn default_init(
    x: &DMatrix<f64>,
    components: usize,
    rank: usize,
    seed: u64,
) -> Result<TrainableParams> {
    let (count, n) = x.shape();
    let k = components.min(count);
    let res = kmeans(x, k, 4, &SeededRng::with_stream(seed, 0x1a))?;
    let spread = (res.inertia / (count * n) as f64).sqrt().max(1e-3);
    let rank = rank.min(n);
    let factor = DMatrix::from_fn(n, rank, |i, j| if i == j { spread } else { 0.0 });
    TrainableParams::new(
        DVector::zeros(k),
        (0..k).map(|c| res.centers.row(c).transpose()).collect(),
        vec![factor; k],
    )
}

fn checked(value: f64, epoch: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Divergence(format!(
            "loss became {value} in epoch {epoch}"
        )))
    }
}

/// Mini-batch minimization of the empirical risk (plus penalty) over the
/// pairs `(x_j, y_j)`, given as rows.
pub fn train(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    operator: &ForwardOperator,
    noise: &NoiseModel,
    config: &TrainConfig,
    init: Option<TrainableParams>,
) -> Result<TrainOutcome> {
    let n = operator.input_dim();
    ensure_dim(n, x.ncols())?;
    ensure_dim(x.nrows(), y.nrows())?;
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    config.validate(n)?;
    let objective = Objective::new(operator, noise)?;
    let y_white = objective.whiten(y)?;
    let mut params = match init {
        Some(p) => {
            ensure_dim(n, p.dim())?;
            p
        }
        None => default_init(x, config.components, config.effective_rank(n), config.seed)?,
    };
    if let Some(c) = config.clamp {
        params.clamp(c);
    }

    let reg_term = |p: &TrainableParams| config.reg_lambda * regularizer(p, config.regularizer);
    let mut history = vec![LossRecord {
        epoch: 0,
        train_risk: checked(objective.risk(&params, x, &y_white)?, 0)?,
        reg_term: reg_term(&params),
    }];

    let mut rng = SeededRng::with_stream(config.seed, 0x7a);
    let mut flat = params.flatten();
    let mut opt = OptimizerState::new(config.optimizer, config.learning_rate, flat.len());
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            let xb = x.select_rows(batch);
            let yb = y_white.select_rows(batch);
            let (risk, mut g) = objective.risk_and_grad(&params, &xb, &yb)?;
            checked(risk, epoch)?;
            if config.reg_lambda != 0.0 {
                for (gb, rb) in g
                    .factors
                    .iter_mut()
                    .zip(regularizer_grad(&params, config.regularizer))
                {
                    *gb += rb * config.reg_lambda;
                }
            }
            opt.apply(&mut flat, &g.flatten());
            params = params.unflatten(&flat);
            if let Some(c) = config.clamp {
                params.clamp(c);
                flat = params.flatten();
            }
        }
        history.push(LossRecord {
            epoch,
            train_risk: checked(objective.risk(&params, x, &y_white)?, epoch)?,
            reg_term: reg_term(&params),
        });
    }
    Ok(TrainOutcome {
        model: params.to_model()?,
        params,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::PreparedEstimator;
    use crate::model::{sample_mixture, sample_noise};

    fn task(seed: u64, count: usize) -> (MixtureModel, DMatrix<f64>, DMatrix<f64>, NoiseModel) {
        let n = 6;
        let supports = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        let model = MixtureModel::from_coordinate_supports(n, 2, &supports).unwrap();
        let noise = NoiseModel::iso(0.3).unwrap();
        let mut rng = SeededRng::new(seed);
        let (x, _) = sample_mixture(&model, &mut rng, count);
        let y = &x + sample_noise(&noise, n, &mut rng, count).unwrap();
        (model, x, y, noise)
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let (model, x, y, noise) = task(1, 50);
        let init = TrainableParams::from_model(&model, 2);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 16,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let out = train(
            &x,
            &y,
            &ForwardOperator::identity(6),
            &noise,
            &cfg,
            Some(init.clone()),
        )
        .unwrap();
        assert_eq!(out.params, init);
        assert_eq!(out.history.len(), 3);
        assert_eq!(out.history[0].train_risk, out.history[2].train_risk);
    }

    #[test]
    fn clamp_bounds_parameters() {
        let (_, x, y, noise) = task(2, 40);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            learning_rate: 0.05,
            clamp: Some(0.4),
            components: 3,
            rank: Some(2),
            ..TrainConfig::default()
        };
        let out = train(&x, &y, &ForwardOperator::identity(6), &noise, &cfg, None).unwrap();
        assert!(out.params.max_abs() <= 0.4);
    }

    #[test]
    fn training_is_deterministic() {
        let (_, x, y, noise) = task(3, 60);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            learning_rate: 0.01,
            components: 2,
            rank: Some(2),
            seed: 9,
            ..TrainConfig::default()
        };
        let op = ForwardOperator::identity(6);
        let a = train(&x, &y, &op, &noise, &cfg, None).unwrap();
        let b = train(&x, &y, &op, &noise, &cfg, None).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn training_reduces_risk() {
        let (_, x, y, noise) = task(4, 200);
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.02,
            components: 3,
            rank: Some(2),
            ..TrainConfig::default()
        };
        let out = train(&x, &y, &ForwardOperator::identity(6), &noise, &cfg, None).unwrap();
        let first = out.history[0].train_risk;
        let last = out.history.last().unwrap().train_risk;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn near_stationary_start_does_not_climb() {
        let (model, x, y, noise) = task(5, 400);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 64,
            learning_rate: 1e-4,
            ..TrainConfig::default()
        };
        let init = TrainableParams::from_model(&model, 2);
        let out = train(
            &x,
            &y,
            &ForwardOperator::identity(6),
            &noise,
            &cfg,
            Some(init),
        )
        .unwrap();
        let first = out.history[0].train_risk;
        for rec in &out.history {
            assert!(
                rec.train_risk <= first * 1.01,
                "{} vs {first}",
                rec.train_risk
            );
        }
        let prep = PreparedEstimator::new(&model, &ForwardOperator::identity(6), &noise).unwrap();
        let est = prep.estimate_batch(&y).unwrap();
        let direct = (&x - est).norm_squared() / x.nrows() as f64;
        assert!((direct - first).abs() < 1e-9 * direct.max(1.0));
    }

    #[test]
    fn nan_data_reports_divergence() {
        let (_, mut x, y, noise) = task(6, 20);
        x[(0, 0)] = f64::NAN;
        let init = TrainableParams::new(
            DVector::zeros(1),
            vec![DVector::zeros(6)],
            vec![DMatrix::identity(6, 2)],
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let err = train(
            &x,
            &y,
            &ForwardOperator::identity(6),
            &noise,
            &cfg,
            Some(init),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        }
        .validate(4)
        .is_err());
        assert!(TrainConfig {
            rank: Some(5),
            ..TrainConfig::default()
        }
        .validate(4)
        .is_err());
        assert!(TrainConfig {
            clamp: Some(0.0),
            ..TrainConfig::default()
        }
        .validate(4)
        .is_err());
        assert!(TrainConfig::default().validate(4).is_ok());
        let json = serde_json::to_string(&TrainConfig::default()).unwrap();
        assert!(json.contains("\"kind\":\"adam\""));
    }
}
