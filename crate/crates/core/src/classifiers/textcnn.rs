//! Convolutional sequence classifier: code embedding, parallel banks of
//! width-3/4/5 convolutions, max-over-time pooling, and a dense softmax
//! head. The 32-value pooled vector doubles as the latent representation
//! consumed by the downstream classical detectors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::logmodel::{EventCode, ExecutionLog, ALPHABET};
use crate::nncore::{
    layer_from_spec, softmax_cross_entropy, Adam, AdamConfig, Cache, Layer, LayerSpec, NnError,
    Tensor,
};
use crate::par;
use crate::rng::{self, stream};

use super::ClfError;

pub const LATENT_DIM: usize = 32;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextCnnConfig {
    pub embed_dim: usize,
    /// (window width, filter count) per convolution bank.
    pub banks: Vec<(usize, usize)>,
    pub leak: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TextCnnConfig {
    fn default() -> Self {
        Self {
            embed_dim: 8,
            banks: vec![(3, 11), (4, 11), (5, 10)],
            leak: 0.1,
            epochs: 10,
            batch_size: 64,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TextCnn {
    pub config: TextCnnConfig,
    pub embedding: Layer,
    pub convs: Vec<Layer>,
    pub head: Layer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextCnnCheckpoint {
    pub config: TextCnnConfig,
    pub layers: Vec<LayerSpec>,
}

/// Per-epoch mean training loss, in epoch order.
pub type LossTrace = Vec<f64>;

fn inert_rng() -> ChaCha8Rng {
    // The network has no stochastic layers; any fixed rng satisfies the
    // forward signature.
    ChaCha8Rng::seed_from_u64(0)
}

fn codes_tensor(batch: &[&[EventCode]]) -> Result<Tensor, ClfError> {
    let t = batch[0].len();
    if batch.iter().any(|row| row.len() != t) {
        return Err(ClfError::Dimension { expected: t, got: 0 });
    }
    let mut data = Vec::with_capacity(batch.len() * t);
    for row in batch {
        data.extend(row.iter().map(|c| c.0 as f64));
    }
    Ok(Tensor::new(vec![batch.len(), t], data)?)
}

struct ForwardTrain {
    latent: Tensor,
    logits: Tensor,
    emb: Cache,
    banks: Vec<(Cache, Cache, Cache)>,
    head: Cache,
}

impl TextCnn {
    pub fn init(config: TextCnnConfig, seed: u64) -> Self {
        let mut rng = rng::substream(seed, stream::MODEL_INIT);
        let embedding = Layer::embedding_init(ALPHABET, config.embed_dim, &mut rng);
        let convs = config
            .banks
            .iter()
            .map(|&(w, c)| Layer::conv1d_init(w, config.embed_dim, c, &mut rng))
            .collect();
        let latent_dim: usize = config.banks.iter().map(|&(_, c)| c).sum();
        let head = Layer::dense_init(latent_dim, 2, &mut rng);
        Self { config, embedding, convs, head }
    }

    pub fn latent_dim(&self) -> usize {
        self.config.banks.iter().map(|&(_, c)| c).sum()
    }

    fn act(&self) -> Layer {
        Layer::LeakyRelu { alpha: self.config.leak }
    }

    fn forward_train(&self, input: &Tensor) -> Result<ForwardTrain, ClfError> {
        let mut inert = inert_rng();
        let act = self.act();
        let pool = Layer::MaxOverTime;
        let (embedded, emb_cache) = self.embedding.forward_train(input, &mut inert)?;
        let batch = input.shape[0];
        let mut pooled: Vec<Tensor> = Vec::with_capacity(self.convs.len());
        let mut banks = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let (c_out, c_cache) = conv.forward_train(&embedded, &mut inert)?;
            let (a_out, a_cache) = act.forward_train(&c_out, &mut inert)?;
            let (p_out, p_cache) = pool.forward_train(&a_out, &mut inert)?;
            pooled.push(p_out);
            banks.push((c_cache, a_cache, p_cache));
        }
        let mut latent_data = Vec::with_capacity(batch * self.latent_dim());
        for b in 0..batch {
            for p in &pooled {
                let c = p.shape[1];
                latent_data.extend_from_slice(&p.data[b * c..(b + 1) * c]);
            }
        }
        let latent = Tensor::new(vec![batch, self.latent_dim()], latent_data)?;
        let (logits, head_cache) = self.head.forward_train(&latent, &mut inert)?;
        Ok(ForwardTrain { latent, logits, emb: emb_cache, banks, head: head_cache })
    }

    /// Gradients aligned with `params_mut` order; returns the batch loss.
    fn backward(
        &self,
        fwd: &ForwardTrain,
        targets: &[usize],
    ) -> Result<(f64, Vec<Tensor>), ClfError> {
        let (loss, dlogits) = softmax_cross_entropy(&fwd.logits, targets);
        let (dlatent, head_grads) = self.head.backward(&fwd.head, &dlogits)?;
        let act = self.act();
        let pool = Layer::MaxOverTime;
        let batch = fwd.latent.shape[0];
        let mut demb: Option<Tensor> = None;
        let mut conv_grads = Vec::new();
        let mut offset = 0;
        for (conv, (c_cache, a_cache, p_cache)) in self.convs.iter().zip(&fwd.banks) {
            let channels = match conv {
                Layer::Conv1d { bias, .. } => bias.len(),
                _ => unreachable!("bank layers are Conv1d"),
            };
            let mut slice = Vec::with_capacity(batch * channels);
            for b in 0..batch {
                let start = b * self.latent_dim() + offset;
                slice.extend_from_slice(&dlatent.data[start..start + channels]);
            }
            offset += channels;
            let dpool = Tensor::new(vec![batch, channels], slice)?;
            let (dact, _) = pool.backward(p_cache, &dpool)?;
            let (dconv, _) = act.backward(a_cache, &dact)?;
            let (dembedded, grads) = conv.backward(c_cache, &dconv)?;
            conv_grads.extend(grads);
            match &mut demb {
                None => demb = Some(dembedded),
                Some(acc) => {
                    for (a, g) in acc.data.iter_mut().zip(&dembedded.data) {
                        *a += g;
                    }
                }
            }
        }
        let demb = demb.expect("at least one bank");
        let (_, emb_grads) = self.embedding.backward(&fwd.emb, &demb)?;
        let mut all = emb_grads;
        all.extend(conv_grads);
        all.extend(head_grads);
        Ok((loss, all))
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut ps = self.embedding.params_mut();
        for conv in &mut self.convs {
            ps.extend(conv.params_mut());
        }
        ps.extend(self.head.params_mut());
        ps
    }

    /// Pooled pre-head features for a batch of equal-length code rows.
    pub fn latent_batch(&self, rows: &[&[EventCode]]) -> Result<Vec<Vec<f64>>, ClfError> {
        let fwd = self.forward_train(&codes_tensor(rows)?)?;
        let d = self.latent_dim();
        Ok(fwd.latent.data.chunks(d).map(|c| c.to_vec()).collect())
    }

    pub fn latent(&self, codes: &[EventCode]) -> Result<Vec<f64>, ClfError> {
        Ok(self.latent_batch(&[codes])?.remove(0))
    }

    /// Malicious-class probability.
    pub fn score(&self, codes: &[EventCode]) -> Result<f64, ClfError> {
        Ok(self.score_batch(&[codes])?[0])
    }

    pub fn score_batch(&self, rows: &[&[EventCode]]) -> Result<Vec<f64>, ClfError> {
        let fwd = self.forward_train(&codes_tensor(rows)?)?;
        let probs = Layer::Softmax.forward_eval(&fwd.logits)?;
        Ok(probs.data.chunks(2).map(|p| p[1]).collect())
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        std::iter::once(&self.embedding)
            .chain(self.convs.iter())
            .chain(std::iter::once(&self.head))
    }

    pub fn checkpoint(&self) -> (TextCnnCheckpoint, Vec<f64>) {
        let specs = self.layers().map(Layer::spec).collect();
        let mut blob = Vec::new();
        for layer in self.layers() {
            for t in layer.state() {
                blob.extend_from_slice(&t.data);
            }
        }
        (TextCnnCheckpoint { config: self.config.clone(), layers: specs }, blob)
    }

    pub fn restore(header: TextCnnCheckpoint, blob: &[f64]) -> Result<Self, ClfError> {
        let n_banks = header.config.banks.len();
        if header.layers.len() != n_banks + 2 {
            return Err(NnError::Checkpoint("layer count mismatch".into()).into());
        }
        let mut layers: Vec<Layer> = header.layers.iter().map(layer_from_spec).collect();
        let mut cursor = 0;
        for layer in &mut layers {
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
        let head = layers.pop().expect("head layer");
        let embedding = layers.remove(0);
        Ok(Self { config: header.config, embedding, convs: layers, head })
    }
}

/// Adam training over shuffled mini-batches. Epoch losses are appended to
/// the returned trace; a non-finite loss aborts with the failing epoch.
pub fn train_textcnn(
    logs: &[ExecutionLog],
    config: TextCnnConfig,
    seed: u64,
) -> Result<(TextCnn, LossTrace), ClfError> {
    use rand::seq::SliceRandom;
    if logs.is_empty() {
        return Err(ClfError::EmptySet);
    }
    let mut model = TextCnn::init(config.clone(), seed);
    let mut adam = Adam::new(config.adam);
    let mut shuffle_rng = rng::substream(seed, stream::TRAIN_SHUFFLE);
    let mut order: Vec<usize> = (0..logs.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let rows: Vec<&[EventCode]> =
                chunk.iter().map(|&i| logs[i].codes.as_slice()).collect();
            let targets: Vec<usize> = chunk.iter().map(|&i| logs[i].label as usize).collect();
            let fwd = model.forward_train(&codes_tensor(&rows)?)?;
            let (loss, grads) = model.backward(&fwd, &targets)?;
            if !loss.is_finite() {
                return Err(ClfError::Diverged { epoch });
            }
            adam.step(&mut model.params_mut(), &grads);
            epoch_loss += loss;
            batches += 1;
        }
        trace.push(epoch_loss / batches as f64);
    }
    Ok((model, trace))
}

/// Latents for many logs, fanned out in fixed-size batches.
pub fn extract_latents(model: &TextCnn, logs: &[ExecutionLog]) -> Result<Vec<Vec<f64>>, ClfError> {
    let chunks: Vec<&[ExecutionLog]> = logs.chunks(128).collect();
    let results = par::map_vec(&chunks, |chunk| {
        let rows: Vec<&[EventCode]> = chunk.iter().map(|l| l.codes.as_slice()).collect();
        model.latent_batch(&rows)
    });
    let mut out = Vec::with_capacity(logs.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
