//! A learnt linear projection from raw pixels into a low-dimensional latent
//! space, trained so that one attention read in the latent space (keys are
//! projected images, values are raw pixels) reconstructs the clean image from
//! a noisy one.  The trained projection is then used to run the continuous
//! engines on image data.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, mean_std};
use crate::engines::{build_engine, update_query, Engine, EngineKind, PatternSet, Query};
use crate::error::{Result, SdmError};
use crate::vectorspace::{perturb_continuous, DenseVector, PatternStore};
use crate::weighting::{fit_beta, FitSource};

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    pub n_latent: usize,
    /// Hamming radius whose fitted β the softmax uses.
    pub d: usize,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Training perturbations are drawn uniformly from this range of
    /// Hamming-equivalent magnitudes in the raw dimension.
    pub perturb_min: usize,
    pub perturb_max: usize,
    /// Half-width of the uniform initialization; `None` uses `1/√n_raw`.
    pub init_scale: Option<f64>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            n_latent: 64,
            d: 11,
            epochs: 10,
            batch: 128,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            perturb_min: 10,
            perturb_max: 100,
            init_scale: None,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(SdmError::Config(m.to_string()));
        if self.n_latent == 0 || self.batch == 0 {
            return fail("n_latent and batch must be positive");
        }
        if self.perturb_min > self.perturb_max {
            return fail("perturb_min exceeds perturb_max");
        }
        if !(self.learning_rate > 0.0) || !(self.adam_eps > 0.0) {
            return fail("learning rate and eps must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("Adam decay rates must lie in [0, 1)");
        }
        Ok(())
    }
}

/// The projection `W` (latent × raw) and the softmax β it was trained with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub weights: Array2<f64>,
    pub beta: f64,
    pub n_latent: usize,
    pub d: usize,
}

impl ProjectionModel {
    /// Random model with entries uniform in `±scale` (default `1/√n_raw`).
    pub fn random<R: Rng + ?Sized>(n_raw: usize, config: &ProjectionConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let beta = fit_beta(config.d, config.n_latent, FitSource::Binary)?.beta;
        let s = config.init_scale.unwrap_or(1.0 / (n_raw as f64).sqrt());
        let weights = Array2::from_shape_simple_fn((config.n_latent, n_raw), || rng.random_range(-s..=s));
        Ok(ProjectionModel {
            weights,
            beta,
            n_latent: config.n_latent,
            d: config.d,
        })
    }

    pub fn n_raw(&self) -> usize {
        self.weights.ncols()
    }

    /// Unit-normalized latent codes of the rows of `x`.
    pub fn project(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut z = x.dot(&self.weights.t());
        normalize_rows(&mut z)?;
        Ok(z)
    }
}

/// Normalizes rows in place and returns their original norms.
fn normalize_rows(z: &mut Array2<f64>) -> Result<Array1<f64>> {
    let norms = z.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if norms.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
        return Err(SdmError::Numeric("projection produced a zero or non-finite latent vector".into()));
    }
    Zip::from(z.rows_mut()).and(&norms).for_each(|mut row, &n| row /= n);
    Ok(norms)
}

fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Backpropagates through `u = v/|v|`: `dv = (du − u(u·du)) / |v|`.
fn normalize_backward(u: &Array2<f64>, du: &Array2<f64>, norms: &Array1<f64>) -> Array2<f64> {
    let dots = (u * du).sum_axis(Axis(1));
    let mut dv = du.clone();
    Zip::from(dv.rows_mut())
        .and(u.rows())
        .and(&dots)
        .and(norms)
        .for_each(|mut row, u, &d, &n| {
            row.scaled_add(-d, &u);
            row /= n;
        });
    dv
}

/// Mean squared reconstruction error of one attention read and its gradient
/// with respect to `weights`.
///
/// Queries (`queries`, raw) and keys (`keys`, raw) are both projected by
/// `weights` and unit-normalized; the read is `softmax(β q̂·k̂) · values`, and
/// the loss is the mean over batch and output dimensions of the squared error
/// to `targets`.
pub fn loss_and_gradient(
    weights: &Array2<f64>,
    beta: f64,
    queries: ArrayView2<'_, f64>,
    keys: ArrayView2<'_, f64>,
    values: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
) -> Result<(f64, Array2<f64>)> {
    let b = queries.nrows();
    let out_dim = values.ncols();
    let mut qn = queries.dot(&weights.t());
    let q_norms = normalize_rows(&mut qn)?;
    let mut kn = keys.dot(&weights.t());
    let k_norms = normalize_rows(&mut kn)?;
    let mut a = qn.dot(&kn.t());
    a *= beta;
    softmax_rows(&mut a);
    let out = a.dot(&values);
    let diff = &out - &targets;
    let scale = (b * out_dim) as f64;
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / scale;
    if !loss.is_finite() {
        return Err(SdmError::Numeric(format!("non-finite training loss {loss}")));
    }

    let g = diff * (2.0 / scale);
    let da = g.dot(&values.t());
    let row_dots = (&a * &da).sum_axis(Axis(1));
    let mut ds = da;
    Zip::from(ds.rows_mut())
        .and(a.rows())
        .and(&row_dots)
        .for_each(|mut row, a_row, &rd| {
            Zip::from(&mut row).and(&a_row).for_each(|x, &ai| *x = ai * (*x - rd));
        });
    let dqn = ds.dot(&kn) * beta;
    let dkn = ds.t().dot(&qn) * beta;
    let dq = normalize_backward(&qn, &dqn, &q_norms);
    let dk = normalize_backward(&kn, &dkn, &k_norms);
    let grad = dq.t().dot(&queries) + dk.t().dot(&keys);
    Ok((loss, grad))
}

/// Perturbs a raw vector to cosine `1 − 2k/n_raw` with its original norm.
pub fn perturb_raw<R: Rng + ?Sized>(target: &[f64], k: usize, rng: &mut R) -> Result<Vec<f64>> {
    let n = target.len();
    let v = DenseVector::new(target.to_vec());
    let norm = v.norm();
    if !(norm > 0.0) {
        return Err(SdmError::domain("cannot perturb an all-zero pattern"));
    }
    let cos = 1.0 - 2.0 * k as f64 / n as f64;
    let p = perturb_continuous(&v.normalized(), cos, rng)?;
    Ok(p.as_slice().iter().map(|x| x * norm).collect())
}

struct Adam {
    m: Array2<f64>,
    v: Array2<f64>,
    t: i32,
}

impl Adam {
    fn new(shape: (usize, usize)) -> Self {
        Adam {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
            t: 0,
        }
    }

    fn step(&mut self, w: &mut Array2<f64>, g: &Array2<f64>, c: &ProjectionConfig) {
        self.t += 1;
        let (b1, b2) = (c.adam_beta1, c.adam_beta2);
        let bc1 = 1.0 - b1.powi(self.t);
        let bc2 = 1.0 - b2.powi(self.t);
        Zip::from(w)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(g)
            .for_each(|w, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= c.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + c.adam_eps);
            });
    }
}

/// Per-epoch training statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
}

/// Trains a projection on `data` (one raw pattern per row; every row is both
/// a key and a value).  Each step draws a batch of targets without
/// replacement, perturbs each by a uniform Hamming-equivalent magnitude in
/// the configured range, runs one attention read and takes an Adam step on
/// the mean squared error to the clean targets.
pub fn train_projection<R: Rng + ?Sized>(
    data: &Array2<f64>,
    config: &ProjectionConfig,
    rng: &mut R,
) -> Result<(ProjectionModel, Vec<EpochStats>)> {
    train_from(ProjectionModel::random(data.ncols(), config, rng)?, data, config, rng)
}

/// As [`train_projection`], continuing from an existing model.
pub fn train_from<R: Rng + ?Sized>(
    mut model: ProjectionModel,
    data: &Array2<f64>,
    config: &ProjectionConfig,
    rng: &mut R,
) -> Result<(ProjectionModel, Vec<EpochStats>)> {
    config.validate()?;
    if data.nrows() == 0 {
        return Err(SdmError::domain("cannot train on an empty dataset"));
    }
    let n_raw = data.ncols();
    if config.perturb_max * 2 > n_raw {
        return Err(SdmError::Config("perturb_max exceeds half the raw dimension".into()));
    }
    let mut adam = Adam::new(model.weights.dim());
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut stats = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(config.batch) {
            let targets = data.select(Axis(0), chunk);
            let mut queries = Array2::zeros(targets.dim());
            for (mut q, t) in queries.rows_mut().into_iter().zip(targets.rows()) {
                let k = rng.random_range(config.perturb_min..=config.perturb_max);
                let p = perturb_raw(t.as_slice().expect("rows are contiguous"), k, rng)?;
                q.assign(&Array1::from(p));
            }
            let (loss, grad) =
                loss_and_gradient(&model.weights, model.beta, queries.view(), data.view(), data.view(), targets.view())?;
            adam.step(&mut model.weights, &grad, config);
            total += loss;
            steps += 1;
        }
        stats.push(EpochStats {
            epoch,
            mean_loss: total / steps as f64,
            steps,
        });
    }
    Ok((model, stats))
}

/// Evaluation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub engines: Vec<EngineKind>,
    pub ds: Vec<usize>,
    /// Hamming-equivalent perturbation magnitudes in the raw dimension.
    pub magnitudes: Vec<usize>,
    pub max_steps: usize,
    /// Number of stored patterns used as targets.
    pub queries: usize,
    /// Neuron counts; `inf` is the unbounded case.
    pub rs: Vec<f64>,
    pub seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            engines: EngineKind::CONTINUOUS.to_vec(),
            ds: vec![5, 11],
            magnitudes: (0..=300).step_by(25).collect(),
            max_steps: 10,
            queries: 100,
            rs: vec![f64::INFINITY],
            seed: 0,
        }
    }
}

impl EvaluationConfig {
    /// Neuron counts with the unbounded case as `None`.
    pub fn neuron_counts(&self) -> Vec<Option<f64>> {
        self.rs.iter().map(|&r| r.is_finite().then_some(r)).collect()
    }
}

/// One evaluated image query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionTrial {
    pub engine: EngineKind,
    pub d: usize,
    pub r: Option<f64>,
    pub magnitude: usize,
    pub pattern: usize,
    pub baseline_cosine: f64,
    pub final_cosine: f64,
    pub steps: usize,
    pub no_intersection: bool,
    pub seed: u64,
}

/// Mean final cosine per `(engine, d, r, magnitude)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub engine: EngineKind,
    pub d: usize,
    pub r: Option<f64>,
    pub magnitude: usize,
    pub mean_final_cosine: f64,
    pub std_final_cosine: f64,
    pub baseline: f64,
    pub trials: usize,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = crate::vectorspace::dot(a, b);
    d / (crate::vectorspace::dot(a, a).sqrt() * crate::vectorspace::dot(b, b).sqrt())
}

/// Runs the continuous engines in the latent space of `model` over the
/// patterns of `data`, with raw pixels as pointers.  Each step projects the
/// current raw estimate, reads, and replaces the estimate by the read; a read
/// with no intersecting pattern keeps the current estimate.
///
/// All engines and neuron counts see the same perturbed queries and the same
/// random stream, so sweeps over `r` compare like with like.
pub fn evaluate_projection(
    model: &ProjectionModel,
    data: &Array2<f64>,
    config: &EvaluationConfig,
) -> Result<Vec<ProjectionTrial>> {
    if data.ncols() != model.n_raw() {
        return Err(SdmError::Dimension {
            expected: model.n_raw(),
            actual: data.ncols(),
        });
    }
    if config.queries == 0 || config.queries > data.nrows() || config.max_steps == 0 {
        return Err(SdmError::Config("queries must lie in [1, rows] and max_steps ≥ 1".into()));
    }
    if let Some(k) = config.engines.iter().find(|k| k.is_binary()) {
        return Err(SdmError::Config(format!("{k} does not read from the unit sphere")));
    }
    let latent = model.project(data.view())?;
    let store = Arc::new(PatternStore::heteroassociative(
        latent.rows().into_iter().map(|r| DenseVector::new(r.to_vec())).collect(),
        data.rows().into_iter().map(|r| DenseVector::new(r.to_vec())).collect(),
    )?);
    let mut engines: Vec<(EngineKind, usize, Option<f64>, Engine)> = Vec::new();
    for &d in &config.ds {
        for &kind in &config.engines {
            let mut unused = ChaCha8Rng::seed_from_u64(0);
            let base = build_engine(kind, model.n_latent, d, None, PatternSet::Dense(store.clone()), &mut unused)?;
            for r in config.neuron_counts() {
                let e = match r {
                    Some(r) => base.clone().with_neuron_budget(r)?,
                    None => base.clone(),
                };
                engines.push((kind, d, r, e));
            }
        }
    }
    let mut pick = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0x7069_636b]));
    let targets = rand::seq::index::sample(&mut pick, data.nrows(), config.queries).into_vec();

    let items: Vec<(usize, usize)> = targets
        .iter()
        .flat_map(|&t| config.magnitudes.iter().map(move |&k| (t, k)))
        .collect();
    let per_item: Vec<Result<Vec<ProjectionTrial>>> = items
        .par_iter()
        .map(|&(t, k)| {
            let seed = derive_seed(config.seed, &[t as u64, k as u64]);
            let target = data.row(t).to_vec();
            let mut qrng = ChaCha8Rng::seed_from_u64(seed);
            let query = perturb_raw(&target, k, &mut qrng)?;
            let baseline = cosine(&query, &target);
            let mut out = Vec::with_capacity(engines.len());
            for (kind, d, r, engine) in &engines {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[*kind as u64, *d as u64]));
                let mut current = query.clone();
                let mut steps = 0;
                let mut no_intersection = false;
                while steps < config.max_steps {
                    let z = model.project(ArrayView2::from_shape((1, current.len()), &current).expect("row view"))?;
                    let q = Query::Dense(DenseVector::new(z.row(0).to_vec()));
                    let update = update_query(engine, &q, &mut rng)?;
                    steps += 1;
                    if update.no_intersection {
                        no_intersection = true;
                        break;
                    }
                    let Query::Dense(next) = update.query else {
                        unreachable!("continuous engines return dense reads")
                    };
                    let next = next.as_slice().to_vec();
                    let done = cosine(&next, &current) >= crate::engines::CONTINUOUS_FIXED_POINT;
                    current = next;
                    if done {
                        break;
                    }
                }
                out.push(ProjectionTrial {
                    engine: *kind,
                    d: *d,
                    r: *r,
                    magnitude: k,
                    pattern: t,
                    baseline_cosine: baseline,
                    final_cosine: cosine(&current, &target),
                    steps,
                    no_intersection,
                    seed,
                });
            }
            Ok(out)
        })
        .collect();
    let mut trials = Vec::new();
    for r in per_item {
        trials.extend(r?);
    }
    Ok(trials)
}

/// Aggregates in configuration order: engine, d, r, magnitude.
pub fn aggregate_projection(config: &EvaluationConfig, trials: &[ProjectionTrial]) -> Vec<ProjectionRow> {
    let mut rows = Vec::new();
    for &engine in &config.engines {
        for &d in &config.ds {
            for r in config.neuron_counts() {
                for &magnitude in &config.magnitudes {
                    let cell: Vec<&ProjectionTrial> = trials
                        .iter()
                        .filter(|t| t.engine == engine && t.d == d && t.r == r && t.magnitude == magnitude)
                        .collect();
                    if cell.is_empty() {
                        continue;
                    }
                    let finals: Vec<f64> = cell.iter().map(|t| t.final_cosine).collect();
                    let baselines: Vec<f64> = cell.iter().map(|t| t.baseline_cosine).collect();
                    let (mean, std) = mean_std(&finals);
                    rows.push(ProjectionRow {
                        engine,
                        d,
                        r,
                        magnitude,
                        mean_final_cosine: mean,
                        std_final_cosine: std,
                        baseline: mean_std(&baselines).0,
                        trials: cell.len(),
                    });
                }
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(0.0..1.0))
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = toy(12, 20, 1);
        let queries = toy(4, 20, 2);
        let targets = data.slice(ndarray::s![..4, ..]).to_owned();
        let w = Array2::from_shape_simple_fn((6, 20), || rng.random_range(-0.3..0.3));
        let beta = 7.0;
        let (_, grad) = loss_and_gradient(&w, beta, queries.view(), data.view(), data.view(), targets.view()).unwrap();
        let h = 1e-6;
        for _ in 0..20 {
            let (i, j) = (rng.random_range(0..6), rng.random_range(0..20));
            let mut wp = w.clone();
            wp[[i, j]] += h;
            let mut wm = w.clone();
            wm[[i, j]] -= h;
            let lp = loss_and_gradient(&wp, beta, queries.view(), data.view(), data.view(), targets.view()).unwrap().0;
            let lm = loss_and_gradient(&wm, beta, queries.view(), data.view(), data.view(), targets.view()).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grad[[i, j]]).abs() / fd.abs().max(grad[[i, j]].abs()).max(1e-10);
            assert!(rel < 1e-5, "({i},{j}) fd {fd} analytic {}", grad[[i, j]]);
        }
    }

    #[test]
    fn projected_codes_are_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = ProjectionConfig {
            n_latent: 8,
            d: 2,
            ..Default::default()
        };
        let model = ProjectionModel::random(30, &cfg, &mut rng).unwrap();
        let z = model.project(toy(5, 30, 5).view()).unwrap();
        for row in z.rows() {
            assert!((row.dot(&row) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_perturbation_step_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = toy(16, 24, 7);
        let cfg = ProjectionConfig {
            n_latent: 8,
            d: 2,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let model = ProjectionModel::random(24, &cfg, &mut rng).unwrap();
        let (l0, g) = loss_and_gradient(&model.weights, model.beta, data.view(), data.view(), data.view(), data.view()).unwrap();
        let w1 = &model.weights - &(g * 1e-2);
        let (l1, _) = loss_and_gradient(&w1, model.beta, data.view(), data.view(), data.view(), data.view()).unwrap();
        assert!(l1 < l0, "{l1} !< {l0}");
    }

    #[test]
    fn perturbation_preserves_norm_and_sets_cosine() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t: Vec<f64> = (0..784).map(|i| (i % 7) as f64 / 7.0).collect();
        let p = perturb_raw(&t, 100, &mut rng).unwrap();
        let nt = crate::vectorspace::dot(&t, &t).sqrt();
        let np = crate::vectorspace::dot(&p, &p).sqrt();
        assert!((nt - np).abs() < 1e-9 * nt);
        assert!((cosine(&t, &p) - (1.0 - 200.0 / 784.0)).abs() < 1e-9);
    }

    #[test]
    fn evaluation_fixed_point_at_zero_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = toy(20, 40, 10);
        let cfg = ProjectionConfig {
            n_latent: 16,
            d: 3,
            ..Default::default()
        };
        let model = ProjectionModel::random(40, &cfg, &mut rng).unwrap();
        let eval = EvaluationConfig {
            ds: vec![3],
            magnitudes: vec![0, 4],
            queries: 5,
            rs: vec![f64::INFINITY, 1e6],
            ..Default::default()
        };
        let trials = evaluate_projection(&model, &data, &eval).unwrap();
        assert_eq!(trials.len(), 5 * 2 * 4 * 2);
        for t in trials.iter().filter(|t| t.magnitude == 0) {
            assert!((t.baseline_cosine - 1.0).abs() < 1e-12);
        }
        let rows = aggregate_projection(&eval, &trials);
        assert_eq!(rows.len(), 4 * 2 * 2);
    }

    #[test]
    fn training_lowers_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = toy(64, 50, 12);
        let cfg = ProjectionConfig {
            n_latent: 16,
            d: 3,
            epochs: 15,
            batch: 16,
            learning_rate: 1e-2,
            perturb_min: 2,
            perturb_max: 10,
            ..Default::default()
        };
        let (_, stats) = train_projection(&data, &cfg, &mut rng).unwrap();
        assert!(stats.last().unwrap().mean_loss < stats[0].mean_loss);
    }
}
