//! Auxiliary-classifier GAN over 28x28 segment grids.
//!
//! The generator conditions on a class label and emits grids in code
//! space [0, 9]; the discriminator scores source authenticity (sigmoid)
//! and class membership (softmax) from one shared trunk. Training
//! alternates one discriminator ascent step and one generator ascent
//! step per mini-batch:
//!
//! * discriminator: maximize L_C + L_Y
//! * generator:     maximize L_Y - L_C
//!
//! where L_C is the source log-likelihood and L_Y the class
//! log-likelihood, both in probability space.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logmodel::{segment, ExecutionLog, Label, Provenance, Segment, GRID, SEGMENT_LEN};
use crate::nncore::{
    layer_from_spec, Adam, AdamConfig, Cache, Layer, LayerSpec, NnError, Tensor, LOG_EPS,
};
use crate::rng::{self, stream};

/// Code-space amplitude: tanh output in [-1, 1] maps to [0, 9].
pub const CODE_HALF_RANGE: f64 = 4.5;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("empty training set")]
    EmptySet,
    #[error("training set must contain both classes")]
    DegenerateLabels,
    #[error("segment has {0} codes, expected {SEGMENT_LEN}")]
    BadSegment(usize),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs to run before the early-stop window may trigger.
    pub min_epochs: usize,
    /// Threshold on the smoothed per-epoch discriminator objective delta.
    pub early_stop_tol: f64,
    pub adam: AdamConfig,
    /// Generator deconvolution channels, 7x7 then 14x14 stage.
    pub gen_channels: (usize, usize),
    /// Discriminator convolution channels, 14x14 then 7x7 stage.
    pub disc_channels: (usize, usize),
    pub leak: f64,
    pub dropout: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            latent_dim: 100,
            batch_size: 100,
            max_epochs: 80,
            min_epochs: 10,
            early_stop_tol: 5e-3,
            adam: AdamConfig { lr: 2e-4, beta1: 0.5, ..Default::default() },
            gen_channels: (32, 16),
            disc_channels: (8, 16),
            leak: 0.2,
            dropout: 0.3,
        }
    }
}

const SEED_GRID: usize = GRID / 4;

fn reshape(t: Tensor, shape: Vec<usize>) -> Tensor {
    Tensor::new(shape, t.data).expect("same element count")
}

/// z and label embedding combine by elementwise product before the
/// dense projection to the 7x7 seed grid.
#[derive(Debug, Clone)]
pub struct Generator {
    pub latent_dim: usize,
    pub label_embed: Layer,
    pub project: Layer,
    pub deconv1: Layer,
    pub bn: Layer,
    pub deconv2: Layer,
    pub leak: f64,
}

pub struct GenCaches {
    z: Tensor,
    emb: Cache,
    project: Cache,
    act1: Cache,
    deconv1: Cache,
    bn: Cache,
    act2: Cache,
    deconv2: Cache,
    tanh: Cache,
}

impl Generator {
    fn init(config: &GanConfig, rng: &mut ChaCha8Rng) -> Self {
        let (c1, c2) = config.gen_channels;
        Self {
            latent_dim: config.latent_dim,
            label_embed: Layer::embedding_init(2, config.latent_dim, rng),
            project: Layer::dense_init(config.latent_dim, SEED_GRID * SEED_GRID * c1, rng),
            deconv1: Layer::convt2d_init(c1, 4, c2, 2, 1, rng),
            bn: Layer::batchnorm(c2),
            deconv2: Layer::convt2d_init(c2, 4, 1, 2, 1, rng),
            leak: config.leak,
        }
    }

    fn act(&self) -> Layer {
        Layer::LeakyRelu { alpha: self.leak }
    }

    /// Normalized grids in [-1, 1] plus everything backward needs.
    /// Batch statistics are used and folded into the caches; the caller
    /// decides whether to commit them to the running estimates.
    fn forward_train(
        &self,
        z: &Tensor,
        labels: &Tensor,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, GenCaches), NnError> {
        let batch = z.shape[0];
        let c1 = match &self.project {
            Layer::Dense { bias, .. } => bias.len() / (SEED_GRID * SEED_GRID),
            _ => unreachable!("project is dense"),
        };
        let (emb_raw, emb) = self.label_embed.forward_train(labels, rng)?;
        let emb_out = reshape(emb_raw, vec![batch, self.latent_dim]);
        let mixed = Tensor::new(
            vec![batch, self.latent_dim],
            z.data.iter().zip(&emb_out.data).map(|(a, b)| a * b).collect(),
        )?;
        let (proj, project) = self.project.forward_train(&mixed, rng)?;
        let (a1, act1) = self.act().forward_train(&proj, rng)?;
        let seed = reshape(a1, vec![batch, SEED_GRID, SEED_GRID, c1]);
        let (d1, deconv1) = self.deconv1.forward_train(&seed, rng)?;
        let (b1, bn) = self.bn.forward_train(&d1, rng)?;
        let (a2, act2) = self.act().forward_train(&b1, rng)?;
        let (d2, deconv2) = self.deconv2.forward_train(&a2, rng)?;
        let (out, tanh) = Layer::Tanh.forward_train(&d2, rng)?;
        let caches = GenCaches {
            z: z.clone(),
            emb,
            project,
            act1,
            deconv1,
            bn,
            act2,
            deconv2,
            tanh,
        };
        Ok((out, caches))
    }

    /// Gradients in [`params_mut`] order from the upstream gradient on
    /// the tanh output.
    fn backward(&self, caches: &GenCaches, upstream: &Tensor) -> Result<Vec<Tensor>, NnError> {
        let (d_d2, _) = Layer::Tanh.backward(&caches.tanh, upstream)?;
        let (d_a2, deconv2_grads) = self.deconv2.backward(&caches.deconv2, &d_d2)?;
        let (d_b1, _) = self.act().backward(&caches.act2, &d_a2)?;
        let (d_d1, bn_grads) = self.bn.backward(&caches.bn, &d_b1)?;
        let (d_seed, deconv1_grads) = self.deconv1.backward(&caches.deconv1, &d_d1)?;
        let batch = d_seed.shape[0];
        let flat: usize = d_seed.shape[1..].iter().product();
        let d_a1 = reshape(d_seed, vec![batch, flat]);
        let (d_proj, _) = self.act().backward(&caches.act1, &d_a1)?;
        let (d_mixed, project_grads) = self.project.backward(&caches.project, &d_proj)?;
        let d_emb_flat = Tensor::new(
            vec![batch, self.latent_dim],
            d_mixed.data.iter().zip(&caches.z.data).map(|(g, z)| g * z).collect(),
        )?;
        let d_emb = reshape(d_emb_flat, vec![batch, 1, self.latent_dim]);
        let (_, emb_grads) = self.label_embed.backward(&caches.emb, &d_emb)?;
        let mut grads = emb_grads;
        grads.extend(project_grads);
        grads.extend(deconv1_grads);
        grads.extend(bn_grads);
        grads.extend(deconv2_grads);
        Ok(grads)
    }

    fn commit_bn(&mut self, caches: &GenCaches) {
        self.bn.apply_bn_update(&caches.bn);
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut ps = self.label_embed.params_mut();
        ps.extend(self.project.params_mut());
        ps.extend(self.deconv1.params_mut());
        ps.extend(self.bn.params_mut());
        ps.extend(self.deconv2.params_mut());
        ps
    }

    fn layers(&self) -> [&Layer; 5] {
        [&self.label_embed, &self.project, &self.deconv1, &self.bn, &self.deconv2]
    }

    fn layers_mut(&mut self) -> [&mut Layer; 5] {
        [
            &mut self.label_embed,
            &mut self.project,
            &mut self.deconv1,
            &mut self.bn,
            &mut self.deconv2,
        ]
    }

    /// Running-statistics forward; grids in [-1, 1].
    fn forward_eval(&self, z: &Tensor, labels: &Tensor) -> Result<Tensor, NnError> {
        let batch = z.shape[0];
        let c1 = match &self.project {
            Layer::Dense { bias, .. } => bias.len() / (SEED_GRID * SEED_GRID),
            _ => unreachable!("project is dense"),
        };
        let emb_raw = self.label_embed.forward_eval(labels)?;
        let emb_out = reshape(emb_raw, vec![batch, self.latent_dim]);
        let mixed = Tensor::new(
            vec![batch, self.latent_dim],
            z.data.iter().zip(&emb_out.data).map(|(a, b)| a * b).collect(),
        )?;
        let proj = self.project.forward_eval(&mixed)?;
        let a1 = self.act().forward_eval(&proj)?;
        let seed = reshape(a1, vec![batch, SEED_GRID, SEED_GRID, c1]);
        let d1 = self.deconv1.forward_eval(&seed)?;
        let b1 = self.bn.forward_eval(&d1)?;
        let a2 = self.act().forward_eval(&b1)?;
        let d2 = self.deconv2.forward_eval(&a2)?;
        Layer::Tanh.forward_eval(&d2)
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    pub conv1: Layer,
    pub conv2: Layer,
    pub src_head: Layer,
    pub cls_head: Layer,
    pub leak: f64,
    pub dropout: f64,
}

pub struct DiscCaches {
    conv1: Cache,
    act1: Cache,
    drop1: Cache,
    conv2: Cache,
    act2: Cache,
    drop2: Cache,
    trunk_shape: Vec<usize>,
    src_dense: Cache,
    src_sig: Cache,
    cls_dense: Cache,
    cls_soft: Cache,
}

impl Discriminator {
    fn init(config: &GanConfig, rng: &mut ChaCha8Rng) -> Self {
        let (d1, d2) = config.disc_channels;
        let flat = SEED_GRID * SEED_GRID * d2;
        Self {
            conv1: Layer::conv2d_init(5, 1, d1, 2, 2, rng),
            conv2: Layer::conv2d_init(5, d1, d2, 2, 2, rng),
            src_head: Layer::dense_init(flat, 1, rng),
            cls_head: Layer::dense_init(flat, 2, rng),
            leak: config.leak,
            dropout: config.dropout,
        }
    }

    fn act(&self) -> Layer {
        Layer::LeakyRelu { alpha: self.leak }
    }

    fn drop(&self) -> Layer {
        Layer::Dropout { rate: self.dropout }
    }

    /// Source probability [B,1] and class probabilities [B,2].
    fn forward_train(
        &self,
        x: &Tensor,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Tensor, DiscCaches), NnError> {
        let (c1, conv1) = self.conv1.forward_train(x, rng)?;
        let (a1, act1) = self.act().forward_train(&c1, rng)?;
        let (h1, drop1) = self.drop().forward_train(&a1, rng)?;
        let (c2, conv2) = self.conv2.forward_train(&h1, rng)?;
        let (a2, act2) = self.act().forward_train(&c2, rng)?;
        let (h2, drop2) = self.drop().forward_train(&a2, rng)?;
        let trunk_shape = h2.shape.clone();
        let batch = trunk_shape[0];
        let flat_len: usize = trunk_shape[1..].iter().product();
        let flat = reshape(h2, vec![batch, flat_len]);
        let (src_raw, src_dense) = self.src_head.forward_train(&flat, rng)?;
        let (src, src_sig) = Layer::Sigmoid.forward_train(&src_raw, rng)?;
        let (cls_raw, cls_dense) = self.cls_head.forward_train(&flat, rng)?;
        let (cls, cls_soft) = Layer::Softmax.forward_train(&cls_raw, rng)?;
        let caches = DiscCaches {
            conv1,
            act1,
            drop1,
            conv2,
            act2,
            drop2,
            trunk_shape,
            src_dense,
            src_sig,
            cls_dense,
            cls_soft,
        };
        Ok((src, cls, caches))
    }

    /// Input gradient plus parameter gradients in [`params_mut`] order,
    /// from upstream gradients on the two heads' probabilities.
    fn backward(
        &self,
        caches: &DiscCaches,
        d_src: &Tensor,
        d_cls: &Tensor,
    ) -> Result<(Tensor, Vec<Tensor>), NnError> {
        let (d_src_raw, _) = Layer::Sigmoid.backward(&caches.src_sig, d_src)?;
        let (d_flat_src, src_grads) = self.src_head.backward(&caches.src_dense, &d_src_raw)?;
        let (d_cls_raw, _) = Layer::Softmax.backward(&caches.cls_soft, d_cls)?;
        let (d_flat_cls, cls_grads) = self.cls_head.backward(&caches.cls_dense, &d_cls_raw)?;
        let d_flat = Tensor::new(
            d_flat_src.shape.clone(),
            d_flat_src.data.iter().zip(&d_flat_cls.data).map(|(a, b)| a + b).collect(),
        )?;
        let d_h2 = reshape(d_flat, caches.trunk_shape.clone());
        let (d_a2, _) = self.drop().backward(&caches.drop2, &d_h2)?;
        let (d_c2, _) = self.act().backward(&caches.act2, &d_a2)?;
        let (d_h1, conv2_grads) = self.conv2.backward(&caches.conv2, &d_c2)?;
        let (d_a1, _) = self.drop().backward(&caches.drop1, &d_h1)?;
        let (d_c1, _) = self.act().backward(&caches.act1, &d_a1)?;
        let (d_x, conv1_grads) = self.conv1.backward(&caches.conv1, &d_c1)?;
        let mut grads = conv1_grads;
        grads.extend(conv2_grads);
        grads.extend(src_grads);
        grads.extend(cls_grads);
        Ok((d_x, grads))
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut ps = self.conv1.params_mut();
        ps.extend(self.conv2.params_mut());
        ps.extend(self.src_head.params_mut());
        ps.extend(self.cls_head.params_mut());
        ps
    }

    fn layers(&self) -> [&Layer; 4] {
        [&self.conv1, &self.conv2, &self.src_head, &self.cls_head]
    }

    fn layers_mut(&mut self) -> [&mut Layer; 4] {
        [&mut self.conv1, &mut self.conv2, &mut self.src_head, &mut self.cls_head]
    }
}

/// Source log-likelihood: E[ln P(real|X_real)] + E[ln P(fake|X_fake)],
/// with gradients for both probability tensors.
pub fn source_log_likelihood(
    s_real: &Tensor,
    s_fake: &Tensor,
) -> (f64, Tensor, Tensor) {
    let nr = s_real.data.len() as f64;
    let nf = s_fake.data.len() as f64;
    let mut g_real = Tensor::zeros(&s_real.shape);
    let mut g_fake = Tensor::zeros(&s_fake.shape);
    let mut total = 0.0;
    for (i, &s) in s_real.data.iter().enumerate() {
        total += (s + LOG_EPS).ln() / nr;
        g_real.data[i] = 1.0 / ((s + LOG_EPS) * nr);
    }
    for (i, &s) in s_fake.data.iter().enumerate() {
        total += (1.0 - s + LOG_EPS).ln() / nf;
        g_fake.data[i] = -1.0 / ((1.0 - s + LOG_EPS) * nf);
    }
    (total, g_real, g_fake)
}

/// Class log-likelihood: E[ln P(y|X_real)] + E[ln P(y|X_fake)].
pub fn class_log_likelihood(
    p_real: &Tensor,
    y_real: &[usize],
    p_fake: &Tensor,
    y_fake: &[usize],
) -> (f64, Tensor, Tensor) {
    let (lr, gr) = crate::nncore::mean_log_prob(p_real, y_real);
    let (lf, gf) = crate::nncore::mean_log_prob(p_fake, y_fake);
    (lr + lf, gr, gf)
}

/// Generator objective L_Y - L_C restricted to the fake terms it can
/// influence; gradients are for ascent.
pub fn gen_objective(
    s_fake: &Tensor,
    p_fake: &Tensor,
    y_fake: &[usize],
) -> (f64, Tensor, Tensor) {
    let n = s_fake.data.len() as f64;
    let mut g_src = Tensor::zeros(&s_fake.shape);
    let mut value = 0.0;
    for (i, &s) in s_fake.data.iter().enumerate() {
        value -= (1.0 - s + LOG_EPS).ln() / n;
        g_src.data[i] = 1.0 / ((1.0 - s + LOG_EPS) * n);
    }
    let (ly, g_cls) = crate::nncore::mean_log_prob(p_fake, y_fake);
    (value + ly, g_src, g_cls)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub source_ll: f64,
    pub class_ll: f64,
    pub gen_objective: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
    pub stopped_early: Option<usize>,
    /// Fewer than half of 100 probe samples were distinct after rounding.
    pub collapsed: bool,
}

pub struct Acgan {
    pub config: GanConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GanCheckpoint {
    pub config: GanConfig,
    pub generator: Vec<LayerSpec>,
    pub discriminator: Vec<LayerSpec>,
}

/// Segments of every log, each tagged with the log's label.
pub fn segments_with_labels(logs: &[ExecutionLog]) -> Vec<(Segment, Label)> {
    logs.iter()
        .flat_map(|log| segment(log).into_iter().map(move |s| (s, log.label)))
        .collect()
}

fn grids_tensor(segments: &[&Segment]) -> Result<Tensor, GanError> {
    let mut data = Vec::with_capacity(segments.len() * SEGMENT_LEN);
    for s in segments {
        if s.codes.len() != SEGMENT_LEN {
            return Err(GanError::BadSegment(s.codes.len()));
        }
        data.extend(s.codes.iter().map(|&c| c / CODE_HALF_RANGE - 1.0));
    }
    Ok(Tensor::new(vec![segments.len(), GRID, GRID, 1], data)?)
}

fn sample_noise(rng: &mut ChaCha8Rng, batch: usize, latent: usize) -> Tensor {
    let data = (0..batch * latent).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(vec![batch, latent], data).expect("noise shape")
}

fn labels_tensor(labels: &[usize]) -> Tensor {
    Tensor::new(vec![labels.len(), 1], labels.iter().map(|&l| l as f64).collect())
        .expect("labels shape")
}

pub fn train_gan(
    data: &[(Segment, Label)],
    config: &GanConfig,
    seed: u64,
) -> Result<(Acgan, TrainTrace), GanError> {
    use rand::seq::SliceRandom;
    if data.is_empty() {
        return Err(GanError::EmptySet);
    }
    if data.iter().all(|(_, l)| *l == data[0].1) {
        return Err(GanError::DegenerateLabels);
    }
    let mut init_rng = rng::substream(seed, stream::MODEL_INIT);
    let mut generator = Generator::init(config, &mut init_rng);
    let mut discriminator = Discriminator::init(config, &mut init_rng);
    let mut g_adam = Adam::new(config.adam);
    let mut d_adam = Adam::new(config.adam);
    let mut shuffle_rng = rng::substream(seed, stream::TRAIN_SHUFFLE);
    let mut noise_rng = rng::substream(seed, stream::GAN_NOISE);
    let mut drop_rng = rng::substream(seed, stream::DROPOUT);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epochs: Vec<EpochStats> = Vec::new();
    let mut d_objectives: Vec<f64> = Vec::new();
    let mut stopped_early = None;
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = (0.0, 0.0, 0.0);
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = chunk.len();
            if batch < 2 {
                continue;
            }
            let real_refs: Vec<&Segment> = chunk.iter().map(|&i| &data[i].0).collect();
            let real_x = grids_tensor(&real_refs)?;
            let real_y: Vec<usize> = chunk.iter().map(|&i| data[i].1 as usize).collect();

            // Discriminator ascent on L_C + L_Y.
            let fake_y: Vec<usize> =
                (0..batch).map(|_| noise_rng.random_range(0..2usize)).collect();
            let z = sample_noise(&mut noise_rng, batch, config.latent_dim);
            let (fake_x, g_caches) =
                generator.forward_train(&z, &labels_tensor(&fake_y), &mut drop_rng)?;
            generator.commit_bn(&g_caches);
            let (s_real, p_real, d_real_caches) =
                discriminator.forward_train(&real_x, &mut drop_rng)?;
            let (s_fake, p_fake, d_fake_caches) =
                discriminator.forward_train(&fake_x, &mut drop_rng)?;
            let (l_c, gs_real, gs_fake) = source_log_likelihood(&s_real, &s_fake);
            let (l_y, gp_real, gp_fake) =
                class_log_likelihood(&p_real, &real_y, &p_fake, &fake_y);
            if !(l_c + l_y).is_finite() {
                return Err(GanError::Diverged { epoch });
            }
            let (_, d_grads_real) = discriminator.backward(&d_real_caches, &gs_real, &gp_real)?;
            let (_, d_grads_fake) = discriminator.backward(&d_fake_caches, &gs_fake, &gp_fake)?;
            let d_grads: Vec<Tensor> = d_grads_real
                .into_iter()
                .zip(d_grads_fake)
                .map(|(mut a, b)| {
                    // Ascent via a minimizer: negate the summed gradient.
                    for (x, y) in a.data.iter_mut().zip(&b.data) {
                        *x = -(*x + y);
                    }
                    a
                })
                .collect();
            d_adam.step(&mut discriminator.params_mut(), &d_grads);

            // Generator ascent on L_Y - L_C.
            let gen_y: Vec<usize> =
                (0..batch).map(|_| noise_rng.random_range(0..2usize)).collect();
            let z2 = sample_noise(&mut noise_rng, batch, config.latent_dim);
            let (gen_x, gen_caches) =
                generator.forward_train(&z2, &labels_tensor(&gen_y), &mut drop_rng)?;
            generator.commit_bn(&gen_caches);
            let (s_gen, p_gen, d_gen_caches) =
                discriminator.forward_train(&gen_x, &mut drop_rng)?;
            let (j_g, gs_gen, gp_gen) = gen_objective(&s_gen, &p_gen, &gen_y);
            if !j_g.is_finite() {
                return Err(GanError::Diverged { epoch });
            }
            let (d_gen_x, _) = discriminator.backward(&d_gen_caches, &gs_gen, &gp_gen)?;
            let mut g_grads = generator.backward(&gen_caches, &d_gen_x)?;
            for g in &mut g_grads {
                for x in &mut g.data {
                    *x = -*x;
                }
            }
            g_adam.step(&mut generator.params_mut(), &g_grads);

            sums.0 += l_c;
            sums.1 += l_y;
            sums.2 += j_g;
            steps += 1;
        }
        let steps = steps.max(1) as f64;
        epochs.push(EpochStats {
            source_ll: sums.0 / steps,
            class_ll: sums.1 / steps,
            gen_objective: sums.2 / steps,
        });
        d_objectives.push(sums.0 / steps + sums.1 / steps);
        if epoch + 1 >= config.min_epochs && d_objectives.len() >= 6 {
            let smooth = |win: &[f64]| win.iter().sum::<f64>() / win.len() as f64;
            let last = smooth(&d_objectives[d_objectives.len() - 5..]);
            let prev = smooth(&d_objectives[d_objectives.len() - 6..d_objectives.len() - 1]);
            if (last - prev).abs() < config.early_stop_tol {
                stopped_early = Some(epoch);
                break;
            }
        }
    }
    let gan = Acgan { config: config.clone(), generator, discriminator };
    let collapsed = {
        let probe = gan.generate(Label::Malicious, 100, seed ^ 0xFFFF)?;
        let distinct: std::collections::HashSet<Vec<u8>> = probe
            .iter()
            .map(|s| s.rounded_codes().iter().map(|c| c.0).collect())
            .collect();
        distinct.len() < 50
    };
    Ok((gan, TrainTrace { epochs, stopped_early, collapsed }))
}

impl Acgan {
    /// Deterministic batch of synthetic segments in code space [0, 9].
    pub fn generate(
        &self,
        label: Label,
        count: usize,
        seed: u64,
    ) -> Result<Vec<Segment>, GanError> {
        let mut noise_rng = rng::substream(seed, stream::GAN_NOISE);
        let mut out = Vec::with_capacity(count);
        for chunk in (0..count).collect::<Vec<_>>().chunks(128) {
            let batch = chunk.len();
            let z = sample_noise(&mut noise_rng, batch, self.config.latent_dim);
            let labels = labels_tensor(&vec![label as usize; batch]);
            let grids = self.generator.forward_eval(&z, &labels)?;
            for sample in grids.data.chunks(SEGMENT_LEN) {
                out.push(Segment {
                    codes: sample.iter().map(|&v| (v + 1.0) * CODE_HALF_RANGE).collect(),
                    provenance: Provenance::Generated,
                });
            }
        }
        Ok(out)
    }

    pub fn checkpoint(&self) -> (GanCheckpoint, Vec<f64>) {
        let header = GanCheckpoint {
            config: self.config.clone(),
            generator: self.generator.layers().iter().map(|l| l.spec()).collect(),
            discriminator: self.discriminator.layers().iter().map(|l| l.spec()).collect(),
        };
        let mut blob = Vec::new();
        for layer in self.generator.layers().into_iter().chain(self.discriminator.layers()) {
            for t in layer.state() {
                blob.extend_from_slice(&t.data);
            }
        }
        (header, blob)
    }

    pub fn restore(header: GanCheckpoint, blob: &[f64]) -> Result<Self, GanError> {
        let mut init_rng = rng::substream(0, stream::MODEL_INIT);
        let mut generator = Generator::init(&header.config, &mut init_rng);
        let mut discriminator = Discriminator::init(&header.config, &mut init_rng);
        {
            let mut gen_layers = generator.layers_mut();
            for (layer, spec) in gen_layers.iter_mut().zip(&header.generator) {
                **layer = layer_from_spec(spec);
            }
            let mut disc_layers = discriminator.layers_mut();
            for (layer, spec) in disc_layers.iter_mut().zip(&header.discriminator) {
                **layer = layer_from_spec(spec);
            }
        }
        let mut cursor = 0;
        for layer in generator.layers_mut().into_iter().chain(discriminator.layers_mut()) {
            for t in layer.state_mut() {
                let end = cursor + t.data.len();
                if end > blob.len() {
                    return Err(NnError::Checkpoint("blob too short".into()).into());
                }
                t.data.copy_from_slice(&blob[cursor..end]);
                cursor = end;
            }
        }
        if cursor != blob.len() {
            return Err(NnError::Checkpoint("blob too long".into()).into());
        }
        Ok(Self { config: header.config, generator, discriminator })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::finite_diff_check_fn;

    fn tiny_config() -> GanConfig {
        GanConfig {
            latent_dim: 12,
            batch_size: 8,
            max_epochs: 2,
            min_epochs: 2,
            gen_channels: (6, 4),
            disc_channels: (3, 4),
            ..Default::default()
        }
    }

    fn toy_segments(n_per: usize, seed: u64) -> Vec<(Segment, Label)> {
        use rand::Rng;
        let mut rng = rng::substream(seed, stream::CORPUS);
        let mut out = Vec::new();
        for _ in 0..n_per {
            let mal: Vec<f64> = (0..SEGMENT_LEN)
                .map(|_| if rng.random::<f64>() < 0.7 { 2.0 } else { 7.0 })
                .collect();
            out.push((Segment::new(mal, Provenance::Generated), Label::Malicious));
            let ben: Vec<f64> =
                (0..SEGMENT_LEN).map(|_| rng.random_range(3..=5) as f64).collect();
            out.push((Segment::new(ben, Provenance::Generated), Label::Benign));
        }
        out
    }

    #[test]
    fn objective_gradients_match_finite_differences() {
        use rand::Rng;
        let mut rng = rng::substream(9, stream::MODEL_INIT);
        let squash = |t: &Tensor| {
            Tensor::new(
                t.shape.clone(),
                t.data.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
            )
            .unwrap()
        };
        let s_real = squash(&Tensor::uniform(&[6, 1], 2.0, &mut rng));
        let s_fake = squash(&Tensor::uniform(&[6, 1], 2.0, &mut rng));
        let softmaxed = |t: &Tensor| {
            let mut out = t.clone();
            for row in out.data.chunks_mut(2) {
                let m = row[0].max(row[1]);
                let (a, b) = ((row[0] - m).exp(), (row[1] - m).exp());
                row[0] = a / (a + b);
                row[1] = b / (a + b);
            }
            out
        };
        let p_real = softmaxed(&Tensor::uniform(&[6, 2], 1.5, &mut rng));
        let p_fake = softmaxed(&Tensor::uniform(&[6, 2], 1.5, &mut rng));
        let y_real: Vec<usize> = (0..6).map(|_| rng.random_range(0..2)).collect();
        let y_fake: Vec<usize> = (0..6).map(|_| rng.random_range(0..2)).collect();

        let e1 = finite_diff_check_fn(
            |s| {
                let (v, g, _) = source_log_likelihood(s, &s_fake);
                (v, g)
            },
            &s_real,
        );
        let e2 = finite_diff_check_fn(
            |s| {
                let (v, _, g) = source_log_likelihood(&s_real, s);
                (v, g)
            },
            &s_fake,
        );
        let e3 = finite_diff_check_fn(
            |p| {
                let (v, g, _) = class_log_likelihood(p, &y_real, &p_fake, &y_fake);
                (v, g)
            },
            &p_real,
        );
        let e4 = finite_diff_check_fn(
            |s| {
                let (v, g, _) = gen_objective(s, &p_fake, &y_fake);
                (v, g)
            },
            &s_fake,
        );
        let e5 = finite_diff_check_fn(
            |p| {
                let (v, _, g) = gen_objective(&s_fake, p, &y_fake);
                (v, g)
            },
            &p_fake,
        );
        for (name, e) in [("lc/real", e1), ("lc/fake", e2), ("ly", e3), ("g/src", e4), ("g/cls", e5)] {
            assert!(e < 1e-4, "{name} rel err {e}");
        }
    }

    #[test]
    fn generated_segments_live_in_code_space() {
        let data = toy_segments(12, 3);
        let (gan, _) = train_gan(&data, &tiny_config(), 1).unwrap();
        let segs = gan.generate(Label::Malicious, 5, 42).unwrap();
        assert_eq!(segs.len(), 5);
        for s in &segs {
            assert_eq!(s.codes.len(), SEGMENT_LEN);
            assert!(s.codes.iter().all(|&c| (0.0..=9.0).contains(&c)));
            assert!(s.rounded_codes().iter().all(|c| c.0 < 10));
            assert_eq!(s.provenance, Provenance::Generated);
        }
    }

    #[test]
    fn training_is_deterministic_for_a_seed() {
        let data = toy_segments(10, 4);
        let cfg = tiny_config();
        let (gan_a, trace_a) = train_gan(&data, &cfg, 7).unwrap();
        let (gan_b, trace_b) = train_gan(&data, &cfg, 7).unwrap();
        assert_eq!(
            serde_json::to_string(&trace_a.epochs).unwrap(),
            serde_json::to_string(&trace_b.epochs).unwrap()
        );
        let (_, blob_a) = gan_a.checkpoint();
        let (_, blob_b) = gan_b.checkpoint();
        assert_eq!(blob_a, blob_b);
    }

    #[test]
    fn checkpoint_round_trip_reproduces_generation() {
        let data = toy_segments(10, 5);
        let (gan, _) = train_gan(&data, &tiny_config(), 2).unwrap();
        let (header, blob) = gan.checkpoint();
        let json = serde_json::to_string(&header).unwrap();
        let restored = Acgan::restore(serde_json::from_str(&json).unwrap(), &blob).unwrap();
        let a = gan.generate(Label::Malicious, 3, 11).unwrap();
        let b = restored.generate(Label::Malicious, 3, 11).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.codes, y.codes);
        }
    }

    #[test]
    fn label_conditioning_changes_the_output() {
        let data = toy_segments(10, 6);
        let (gan, _) = train_gan(&data, &tiny_config(), 3).unwrap();
        let mal = gan.generate(Label::Malicious, 4, 13).unwrap();
        let ben = gan.generate(Label::Benign, 4, 13).unwrap();
        // Same noise stream, different label embedding.
        assert!(mal.iter().zip(&ben).any(|(a, b)| a.codes != b.codes));
    }

    #[test]
    fn one_class_data_is_rejected() {
        let data: Vec<(Segment, Label)> = toy_segments(6, 7)
            .into_iter()
            .filter(|(_, l)| *l == Label::Malicious)
            .collect();
        assert!(matches!(
            train_gan(&data, &tiny_config(), 1),
            Err(GanError::DegenerateLabels)
        ));
        assert!(matches!(train_gan(&[], &tiny_config(), 1), Err(GanError::EmptySet)));
    }

    #[test]
    fn segment_labelling_follows_the_source_log() {
        use crate::logmodel::{EventCode, ExecutionLog, Origin, LOG_LEN, SEGMENTS_PER_LOG};
        let log = ExecutionLog::new(
            vec![EventCode(2); LOG_LEN],
            Label::Malicious,
            Origin::Real,
        )
        .unwrap();
        let pairs = segments_with_labels(&[log]);
        assert_eq!(pairs.len(), SEGMENTS_PER_LOG);
        assert!(pairs.iter().all(|(_, l)| *l == Label::Malicious));
    }
}
