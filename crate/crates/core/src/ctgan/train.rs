//! Adversarial training and sampling.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::gmm::DEFAULT_K_MODES;
use super::layout::{argmax, CondChoice, EncodedLayout, FrequencyTable};
use crate::error::{Error, Result};
use crate::neural::{gradient_penalty, Activation, AdamConfig, AdamState, Mlp, MlpGrads};
use crate::tabular::{Dataset, Schema};

pub const GUMBEL_TAU: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CtganConfig {
    pub epochs: usize,
    pub batch: usize,
    pub z_dim: usize,
    pub critic_steps: usize,
    pub gp_coeff: f64,
    pub k_modes: usize,
    pub hidden: Vec<usize>,
    pub tau: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for CtganConfig {
    fn default() -> Self {
        CtganConfig {
            epochs: 300,
            batch: 50,
            z_dim: 32,
            critic_steps: 5,
            gp_coeff: 10.0,
            k_modes: DEFAULT_K_MODES,
            hidden: vec![64, 64],
            tau: GUMBEL_TAU,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl CtganConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 || self.z_dim == 0 || self.critic_steps == 0 {
            return Err(Error::Config("epochs, batch, z_dim and critic_steps must be positive".into()));
        }
        if self.tau.is_nan() || self.tau <= 0.0 || self.gp_coeff.is_nan() || self.gp_coeff < 0.0 {
            return Err(Error::Config("tau must be positive and gp_coeff non-negative".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub critic: f64,
    pub generator: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtganModel {
    pub schema: Schema,
    pub layout: EncodedLayout,
    pub frequencies: FrequencyTable,
    pub generator: Mlp<f64>,
    pub critic: Mlp<f64>,
    pub config: CtganConfig,
    pub losses: Vec<EpochLosses>,
}

fn mlp_dims(input: usize, hidden: &[usize], output: usize) -> (Vec<usize>, Vec<Activation>) {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(output);
    let mut acts = vec![Activation::Relu; hidden.len()];
    acts.push(Activation::Linear);
    (dims, acts)
}

/// Output head: `tanh` on α slots, Gumbel-softmax on every block.
struct Head<'a> {
    alpha: Vec<usize>,
    blocks: Vec<(usize, usize)>,
    tau: f64,
    layout: &'a EncodedLayout,
}

impl<'a> Head<'a> {
    fn new(layout: &'a EncodedLayout, tau: f64) -> Self {
        Head { alpha: layout.alpha_slots(), blocks: layout.softmax_blocks(), tau, layout }
    }

    fn forward<R: Rng + ?Sized>(&self, logits: &Array2<f64>, rng: &mut R) -> Array2<f64> {
        debug_assert_eq!(logits.ncols(), self.layout.width);
        let mut out = logits.clone();
        for mut row in out.rows_mut() {
            for &a in &self.alpha {
                row[a] = row[a].tanh();
            }
            for &(off, w) in &self.blocks {
                let mut block = row.slice_mut(s![off..off + w]);
                block.mapv_inplace(|v| (v + gumbel(rng)) / self.tau);
                crate::neural::softmax_in_place(block.as_slice_mut().unwrap());
            }
        }
        out
    }

    fn backward(&self, out: &Array2<f64>, grad_out: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut grad = grad_out.to_owned();
        for (mut g, o) in grad.rows_mut().into_iter().zip(out.rows()) {
            for &a in &self.alpha {
                g[a] *= 1.0 - o[a] * o[a];
            }
            for &(off, w) in &self.blocks {
                let dot: f64 = (off..off + w).map(|j| g[j] * o[j]).sum();
                for j in off..off + w {
                    g[j] = o[j] * (g[j] - dot) / self.tau;
                }
            }
        }
        grad
    }
}

fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    -(-u.ln()).ln()
}

fn noise<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

fn hstack(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a.view(), b.view()]).expect("row counts agree")
}

struct Batcher<'a> {
    table: &'a FrequencyTable,
    /// Row indices per categorical column and category.
    rows_by_category: Vec<Vec<Vec<usize>>>,
    n_rows: usize,
}

impl<'a> Batcher<'a> {
    fn new(table: &'a FrequencyTable, data: &Dataset) -> Self {
        let rows_by_category = table
            .columns
            .iter()
            .map(|c| {
                let mut by = vec![Vec::new(); c.counts.len()];
                for (i, &v) in data.cells.column(c.column).iter().enumerate() {
                    by[v as usize].push(i);
                }
                by
            })
            .collect();
        Batcher { table, rows_by_category, n_rows: data.n_rows() }
    }

    fn conditions<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> (Vec<Option<CondChoice>>, Array2<f64>) {
        let choices: Vec<Option<CondChoice>> = (0..batch).map(|_| self.table.sample(true, rng)).collect();
        let cond = cond_matrix(self.table, &choices);
        (choices, cond)
    }

    fn real_rows<R: Rng + ?Sized>(&self, choices: &[Option<CondChoice>], rng: &mut R) -> Vec<usize> {
        choices
            .iter()
            .map(|c| match c {
                Some(c) => {
                    let pool = &self.rows_by_category[c.table_index][c.category];
                    pool[rng.random_range(0..pool.len())]
                }
                None => rng.random_range(0..self.n_rows),
            })
            .collect()
    }
}

fn cond_matrix(table: &FrequencyTable, choices: &[Option<CondChoice>]) -> Array2<f64> {
    let mut m = Array2::zeros((choices.len(), table.width()));
    for (mut row, &c) in m.rows_mut().into_iter().zip(choices) {
        row.assign(&table.vector(c));
    }
    m
}

/// Cross-entropy of the raw logits of each conditioned categorical block
/// against its conditioned category, averaged over the batch. Adds the
/// gradient into `grad`.
fn conditional_cross_entropy(
    logits: &Array2<f64>,
    choices: &[Option<CondChoice>],
    table: &FrequencyTable,
    layout: &EncodedLayout,
    grad: &mut Array2<f64>,
) -> f64 {
    let n = choices.len() as f64;
    let mut total = 0.0;
    for (i, c) in choices.iter().enumerate() {
        let Some(c) = c else { continue };
        let column = table.columns[c.table_index].column;
        let Some(seg) = layout.segments.iter().find(|s| s.column() == column) else { continue };
        let super::layout::Segment::Categorical { offset, width, .. } = seg else { continue };
        let mut p: Vec<f64> = logits.row(i).slice(s![*offset..offset + width]).to_vec();
        crate::neural::softmax_in_place(&mut p);
        total -= p[c.category].max(f64::MIN_POSITIVE).ln();
        for k in 0..*width {
            let target = f64::from(u8::from(k == c.category));
            grad[[i, offset + k]] += (p[k] - target) / n;
        }
    }
    total / n
}

/// Trains a conditional tabular GAN on `data` (already in model space: numeric
/// cells transformed, categorical cells as indices).
pub fn train_ctgan(data: &Dataset, config: &CtganConfig) -> Result<CtganModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training rows"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let layout = EncodedLayout::fit(data, config.k_modes)?;
    let table = FrequencyTable::from_dataset(data);
    let encoded = layout.encode(data, &mut rng);
    let (w, c) = (layout.width, table.width());

    let (gd, ga) = mlp_dims(config.z_dim + c, &config.hidden, w);
    let mut generator = Mlp::init_with_rng(&gd, ga, &mut rng)?;
    let (dd, da) = mlp_dims(w + c, &config.hidden, 1);
    let mut critic = Mlp::init_with_rng(&dd, da, &mut rng)?;
    let mut opt_g = AdamState::for_mlp(&generator, config.adam);
    let mut opt_d = AdamState::for_mlp(&critic, config.adam);

    let head = Head::new(&layout, config.tau);
    let batcher = Batcher::new(&table, data);
    let batch = config.batch.min(data.n_rows());
    let bf = batch as f64;
    let steps = (data.n_rows() / batch).max(1);
    let mut losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let (mut sum_d, mut sum_g) = (0.0, 0.0);
        for step in 0..steps {
            let mut loss_d = 0.0;
            for _ in 0..config.critic_steps {
                let (choices, cond) = batcher.conditions(batch, &mut rng);
                let real_idx = batcher.real_rows(&choices, &mut rng);
                let real = hstack(&encoded.select(Axis(0), &real_idx), &cond);
                let z = hstack(&noise(batch, config.z_dim, &mut rng), &cond);
                let fake = hstack(&head.forward(&generator.predict(z.view())?, &mut rng), &cond);

                let cache_fake = critic.forward(fake.view())?;
                let cache_real = critic.forward(real.view())?;
                let (gp, gp_grads) = gradient_penalty(&critic, real.view(), fake.view(), &mut rng)?;
                loss_d = cache_fake.output().mean().unwrap() - cache_real.output().mean().unwrap() + config.gp_coeff * gp;

                let (mut grads, _) = critic.backward(&cache_fake, Array2::from_elem((batch, 1), 1.0 / bf).view())?;
                let (g_real, _) = critic.backward(&cache_real, Array2::from_elem((batch, 1), -1.0 / bf).view())?;
                grads.add_scaled(&g_real, 1.0);
                grads.add_scaled(&gp_grads, config.gp_coeff);
                check_finite(epoch, step, loss_d, 0.0, &grads)?;
                opt_d.update_mlp(&mut critic, &grads)?;
            }

            let (choices, cond) = batcher.conditions(batch, &mut rng);
            let z = hstack(&noise(batch, config.z_dim, &mut rng), &cond);
            let (loss_g, grads) = generator_step(&generator, &critic, &head, &table, z.view(), &choices, &mut rng)?;
            check_finite(epoch, step, loss_d, loss_g, &grads)?;
            opt_g.update_mlp(&mut generator, &grads)?;

            sum_d += loss_d;
            sum_g += loss_g;
        }
        losses.push(EpochLosses { critic: sum_d / steps as f64, generator: sum_g / steps as f64 });
    }

    Ok(CtganModel { schema: data.schema.clone(), layout, frequencies: table, generator, critic, config: config.clone(), losses })
}

/// Generator loss `−mean critic(fake ⊕ cond) + conditional cross-entropy`
/// and its gradient with respect to the generator parameters.
fn generator_step<R: Rng + ?Sized>(
    generator: &Mlp<f64>,
    critic: &Mlp<f64>,
    head: &Head<'_>,
    table: &FrequencyTable,
    z: ArrayView2<'_, f64>,
    choices: &[Option<CondChoice>],
    rng: &mut R,
) -> Result<(f64, MlpGrads<f64>)> {
    let batch = z.nrows();
    let w = head.layout.width;
    let cond = cond_matrix(table, choices);
    let cache_g = generator.forward(z)?;
    let logits = cache_g.output();
    let out = head.forward(logits, rng);
    let fake = hstack(&out, &cond);
    let cache_d = critic.forward(fake.view())?;
    let (_, dx) = critic.backward(&cache_d, Array2::from_elem((batch, 1), -1.0 / batch as f64).view())?;
    let mut grad_logits = head.backward(&out, dx.slice(s![.., ..w]));
    let ce = conditional_cross_entropy(logits, choices, table, head.layout, &mut grad_logits);
    let loss = -cache_d.output().mean().unwrap() + ce;
    let (grads, _) = generator.backward(&cache_g, grad_logits.view())?;
    Ok((loss, grads))
}

fn check_finite(epoch: usize, step: usize, critic_loss: f64, generator_loss: f64, grads: &MlpGrads<f64>) -> Result<()> {
    if critic_loss.is_finite() && generator_loss.is_finite() && grads.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { epoch, step, critic_loss, generator_loss })
    }
}

impl CtganModel {
    /// Draws `n` rows in model space. Conditions follow the training
    /// category frequencies; softmax blocks are hardened by argmax.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let choices: Vec<Option<CondChoice>> = (0..n).map(|_| self.frequencies.sample(false, &mut rng)).collect();
        self.sample_with(&choices, &mut rng)
    }

    /// Draws one row per given condition.
    pub fn sample_with<R: Rng + ?Sized>(&self, choices: &[Option<CondChoice>], rng: &mut R) -> Result<Dataset> {
        let n = choices.len();
        if n == 0 {
            return Err(Error::invalid("sample size must be at least 1"));
        }
        let cond = cond_matrix(&self.frequencies, choices);
        let z = hstack(&noise(n, self.config.z_dim, rng), &cond);
        let head = Head::new(&self.layout, self.config.tau);
        let out = head.forward(&self.generator.predict(z.view())?, rng);
        let mut cells = Array2::zeros((n, self.schema.len()));
        for (i, row) in out.rows().into_iter().enumerate() {
            let decoded = self.layout.decode_row(row.as_slice().unwrap(), self.schema.len())?;
            cells.row_mut(i).assign(&ndarray::Array1::from(decoded));
        }
        Dataset::new(self.schema.clone(), cells)
    }

    /// Fraction of `n_batches` batches, each conditioned on one random
    /// category, whose most frequent generated category is that category.
    /// `None` without categorical columns.
    pub fn conditional_consistency(&self, n_batches: usize, batch: usize, seed: u64) -> Result<Option<f64>> {
        if self.frequencies.columns.is_empty() {
            return Ok(None);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0;
        for _ in 0..n_batches {
            let Some(choice) = self.frequencies.sample(true, &mut rng) else { return Ok(None) };
            let rows = self.sample_with(&vec![Some(choice); batch], &mut rng)?;
            let column = self.frequencies.columns[choice.table_index].column;
            let mut counts = vec![0.0; self.frequencies.columns[choice.table_index].counts.len()];
            for &v in rows.cells.column(column) {
                counts[v as usize] += 1.0;
            }
            hits += usize::from(argmax(&counts) == choice.category);
        }
        Ok(Some(hits as f64 / n_batches as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::Column;

    #[test]
    fn generator_gradient_matches_finite_differences() {
        let schema = Schema::new(vec![Column::numerical("x"), Column::categorical("c", ["a", "b", "c"])]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> =
            (0..40).map(|i| vec![if i % 2 == 0 { rng.random_range(0.0..1.0) } else { rng.random_range(5.0..6.0) }, (i % 3) as f64]).collect();
        let data = Dataset::from_rows(schema, &rows).unwrap();
        let layout = EncodedLayout::fit(&data, 5).unwrap();
        let table = FrequencyTable::from_dataset(&data);
        let (w, c) = (layout.width, table.width());
        let (gd, ga) = mlp_dims(4 + c, &[6], w);
        let generator = Mlp::init_with_rng(&gd, ga, &mut rng).unwrap();
        let (dd, da) = mlp_dims(w + c, &[5], 1);
        let mut critic = Mlp::init_with_rng(&dd, da, &mut rng).unwrap();
        for l in &mut critic.layers {
            l.activation = Activation::Tanh;
        }
        critic.layers.last_mut().unwrap().activation = Activation::Linear;
        let head = Head::new(&layout, 0.7);
        let choices: Vec<Option<CondChoice>> = (0..5).map(|_| table.sample(true, &mut rng)).collect();
        let z = hstack(&noise(5, 4, &mut rng), &cond_matrix(&table, &choices));
        let loss = |g: &Mlp<f64>| {
            generator_step(g, &critic, &head, &table, z.view(), &choices, &mut ChaCha8Rng::seed_from_u64(7)).unwrap()
        };
        let analytic = loss(&generator).1.flatten();
        let base = generator.flatten_params();
        let mut probe = generator.clone();
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] += 1e-6;
            probe.set_flat_params(&p).unwrap();
            let up = loss(&probe).0;
            p[k] -= 2e-6;
            probe.set_flat_params(&p).unwrap();
            let fd = (up - loss(&probe).0) / 2e-6;
            assert!((fd - analytic[k]).abs() <= 1e-5 * fd.abs().max(1.0), "param {k}: {fd} vs {}", analytic[k]);
        }
    }
}
