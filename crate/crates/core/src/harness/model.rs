//! Small transducer with hand-written backpropagation.
//!
//! Encoder: spliced frames through a stack of affine+tanh layers; one layer
//! is the distillation tap. Predictor: embeddings of the last two labels
//! (blank pads the start) through affine+tanh. Joiner:
//! `log_softmax(W_o tanh(W_e enc_t + W_p pred_u + b) + b_o)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nn::{axpy, log_softmax_backward, tanh_backward, tanh_in_place, Affine};
use super::task::{splice, FRAME_DIM};
use super::HarnessError;
use crate::kd::{kd_loss, kd_loss_and_grad, KdBatch, KdConfig, LossNetParams};
use crate::mvq::io::{read_file, to_u32, write_file, Reader};
use crate::mvq::{CodebookIndexes, FormatError, CODEBOOK_SIZE};
use crate::numeric::log_softmax_in_place;
use crate::transducer::{rnnt_log_posterior, rnnt_loss_and_grad, Lattice, StepScorer, TokenInventory, BLANK};

/// Labels of history the predictor sees.
pub const PREDICTOR_CONTEXT: usize = 2;
/// Neighbouring frames on each side stacked into the encoder input.
pub const SPLICE_RADIUS: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub frame_dim: usize,
    pub encoder_dims: Vec<usize>,
    /// Encoder layer whose output feeds the LossNet.
    pub tap_layer: usize,
    pub embed_dim: usize,
    pub predictor_dim: usize,
    pub joiner_dim: usize,
    pub n_codebooks: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frame_dim: FRAME_DIM,
            encoder_dims: vec![48, 12, 48],
            tap_layer: 1,
            embed_dim: 8,
            predictor_dim: 32,
            joiner_dim: 192,
            n_codebooks: 2,
        }
    }
}

impl ModelConfig {
    fn validate(&self) -> Result<(), HarnessError> {
        let ok = self.frame_dim > 0
            && !self.encoder_dims.is_empty()
            && self.encoder_dims.iter().all(|&d| d > 0)
            && self.tap_layer < self.encoder_dims.len()
            && self.embed_dim > 0
            && self.predictor_dim > 0
            && self.joiner_dim > 0
            && (1..=255).contains(&self.n_codebooks);
        if ok {
            Ok(())
        } else {
            Err(HarnessError::Config(format!("invalid model configuration {self:?}")))
        }
    }

    pub fn input_dim(&self) -> usize {
        self.frame_dim * (2 * SPLICE_RADIUS + 1)
    }

    pub fn tap_dim(&self) -> usize {
        self.encoder_dims[self.tap_layer]
    }

    fn encoder_out(&self) -> usize {
        *self.encoder_dims.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    config: ModelConfig,
    inventory: TokenInventory,
    pub encoder: Vec<Affine>,
    /// `V x embed_dim`; row 0 (blank) pads short histories.
    pub embedding: Vec<f64>,
    pub predictor: Affine,
    pub joiner_enc: Affine,
    pub joiner_pred: Affine,
    pub output: Affine,
    pub lossnet: LossNetParams,
}

/// Per-utterance losses; `kd` is 0 when no targets were given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtteranceLoss {
    pub rnnt: f64,
    pub kd: f64,
}

/// Distillation targets and weight for one utterance.
#[derive(Debug, Clone, Copy)]
pub struct KdTerm<'a> {
    pub targets: &'a CodebookIndexes,
    pub alpha: f64,
    pub config: KdConfig,
}

impl ToyModel {
    pub fn new(config: ModelConfig, inventory: TokenInventory, seed: u64) -> Result<Self, HarnessError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = inventory.size();
        let mut inp = config.input_dim();
        let mut encoder = Vec::new();
        for &d in &config.encoder_dims {
            encoder.push(Affine::random(d, inp, &mut rng));
            inp = d;
        }
        let embedding = Affine::random(v, config.embed_dim, &mut rng).weight;
        let predictor = Affine::random(config.predictor_dim, PREDICTOR_CONTEXT * config.embed_dim, &mut rng);
        let joiner_enc = Affine::random(config.joiner_dim, config.encoder_out(), &mut rng);
        let joiner_pred = Affine::random(config.joiner_dim, config.predictor_dim, &mut rng);
        let output = Affine::random(v, config.joiner_dim, &mut rng);
        let lossnet = LossNetParams::zeros(config.n_codebooks, config.tap_dim());
        Ok(Self {
            config,
            inventory,
            encoder,
            embedding,
            predictor,
            joiner_enc,
            joiner_pred,
            output,
            lossnet,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn inventory(&self) -> &TokenInventory {
        &self.inventory
    }

    pub fn vocab(&self) -> usize {
        self.inventory.size()
    }

    /// Same shapes, all zeros: a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Every parameter tensor with its name and shape, in file order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{i}.weight"), vec![l.out, l.inp], l.weight.as_slice()));
            out.push((format!("encoder.{i}.bias"), vec![l.out], l.bias.as_slice()));
        }
        out.push((
            "embedding".into(),
            vec![self.vocab(), self.config.embed_dim],
            self.embedding.as_slice(),
        ));
        for (name, l) in [
            ("predictor", &self.predictor),
            ("joiner_enc", &self.joiner_enc),
            ("joiner_pred", &self.joiner_pred),
            ("output", &self.output),
        ] {
            out.push((format!("{name}.weight"), vec![l.out, l.inp], l.weight.as_slice()));
            out.push((format!("{name}.bias"), vec![l.out], l.bias.as_slice()));
        }
        let (n, d) = (self.lossnet.n_heads(), self.lossnet.dim());
        out.push(("lossnet.weight".into(), vec![n, CODEBOOK_SIZE, d], self.lossnet.weights()));
        out.push(("lossnet.bias".into(), vec![n, CODEBOOK_SIZE], self.lossnet.biases()));
        out
    }

    /// Mutable views in the same order as [`ToyModel::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.encoder {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.embedding);
        for l in [&mut self.predictor, &mut self.joiner_enc, &mut self.joiner_pred, &mut self.output] {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        let (w, b) = self.lossnet.parts_mut();
        out.push(w);
        out.push(b);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, t)| t.iter().all(|x| x.is_finite()))
    }

    fn check_frames(&self, frames: &[f64]) -> Result<usize, HarnessError> {
        let f = self.config.frame_dim;
        if frames.is_empty() || frames.len() % f != 0 {
            return Err(HarnessError::Config(format!(
                "{} feature values do not form frames of {f}",
                frames.len()
            )));
        }
        Ok(frames.len() / f)
    }

    /// Spliced input and the output of every encoder layer, each `T x d`.
    fn encode(&self, frames: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let spliced = splice(frames, self.config.frame_dim, SPLICE_RADIUS);
        let t_len = frames.len() / self.config.frame_dim;
        let mut layers: Vec<Vec<f64>> = Vec::with_capacity(self.encoder.len());
        for (i, layer) in self.encoder.iter().enumerate() {
            let input = if i == 0 { &spliced } else { &layers[i - 1] };
            let mut out = vec![0.0; t_len * layer.out];
            for (x, y) in input.chunks_exact(layer.inp).zip(out.chunks_exact_mut(layer.out)) {
                layer.forward(x, y);
            }
            tanh_in_place(&mut out);
            layers.push(out);
        }
        (spliced, layers)
    }

    fn encoder_projection(&self, enc: &[f64]) -> Vec<f64> {
        let j = &self.joiner_enc;
        let mut out = vec![0.0; enc.len() / j.inp * j.out];
        for (x, y) in enc.chunks_exact(j.inp).zip(out.chunks_exact_mut(j.out)) {
            j.forward(x, y);
        }
        out
    }

    fn context_input(&self, context: &[usize]) -> Vec<f64> {
        let e = self.config.embed_dim;
        let mut input = vec![0.0; PREDICTOR_CONTEXT * e];
        for k in 0..PREDICTOR_CONTEXT {
            let label = context.len().checked_sub(k + 1).map_or(BLANK, |i| context[i]);
            input[k * e..(k + 1) * e].copy_from_slice(&self.embedding[label * e..(label + 1) * e]);
        }
        input
    }

    /// Predictor state and its joiner projection for a label history.
    fn predict(&self, context: &[usize]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let input = self.context_input(context);
        let mut pred = vec![0.0; self.config.predictor_dim];
        self.predictor.forward(&input, &mut pred);
        tanh_in_place(&mut pred);
        let mut proj = vec![0.0; self.config.joiner_dim];
        self.joiner_pred.forward(&pred, &mut proj);
        (input, pred, proj)
    }

    /// Fills the joiner hidden state and returns nothing; `log_probs` gets the
    /// normalized output distribution.
    fn joint(&self, enc_proj: &[f64], pred_proj: &[f64], hidden: &mut [f64], log_probs: &mut [f64]) {
        for ((h, a), b) in hidden.iter_mut().zip(enc_proj).zip(pred_proj) {
            *h = (a + b).tanh();
        }
        self.output.forward(hidden, log_probs);
        log_softmax_in_place(log_probs);
    }

    /// The full lattice of output distributions for a label sequence.
    pub fn lattice(&self, frames: &[f64], labels: &[usize]) -> Result<Lattice, HarnessError> {
        self.check_frames(frames)?;
        let (_, layers) = self.encode(frames);
        let ep = self.encoder_projection(layers.last().unwrap());
        let (jd, v) = (self.config.joiner_dim, self.vocab());
        let pps: Vec<Vec<f64>> = (0..=labels.len()).map(|u| self.predict(&labels[..u]).2).collect();
        let mut lp = vec![0.0; ep.len() / jd * pps.len() * v];
        let mut hidden = vec![0.0; jd];
        for (t, e) in ep.chunks_exact(jd).enumerate() {
            for (u, p) in pps.iter().enumerate() {
                let c = t * pps.len() + u;
                self.joint(e, p, &mut hidden, &mut lp[c * v..(c + 1) * v]);
            }
        }
        Ok(Lattice::new(ep.len() / jd, labels.len(), v, lp)?)
    }

    /// Transducer and distillation losses for one utterance, without gradients.
    pub fn loss(&self, frames: &[f64], labels: &[usize], kd: Option<KdTerm>) -> Result<UtteranceLoss, HarnessError> {
        let lat = self.lattice(frames, labels)?;
        let rnnt = -rnnt_log_posterior(&lat, labels)?;
        let kd = match kd {
            Some(term) => {
                let (_, layers) = self.encode(frames);
                let batch = KdBatch::new(self.config.tap_dim(), layers[self.config.tap_layer].clone(), term.targets.clone())?;
                kd_loss(&self.lossnet, &batch, &term.config)?
            }
            None => 0.0,
        };
        Ok(UtteranceLoss { rnnt, kd })
    }

    /// Losses for one utterance; accumulates the gradient of
    /// `rnnt + alpha * kd` into `grad`. A zero `alpha` adds no distillation
    /// gradient at all.
    pub fn loss_and_grad(
        &self,
        frames: &[f64],
        labels: &[usize],
        kd: Option<KdTerm>,
        grad: &mut ToyModel,
    ) -> Result<UtteranceLoss, HarnessError> {
        let t_len = self.check_frames(frames)?;
        let (jd, v, u_len) = (self.config.joiner_dim, self.vocab(), labels.len() + 1);
        let (spliced, layers) = self.encode(frames);
        let enc = layers.last().unwrap();
        let ep = self.encoder_projection(enc);
        let preds: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..u_len).map(|u| self.predict(&labels[..u])).collect();

        let mut hidden = vec![0.0; t_len * u_len * jd];
        let mut lp = vec![0.0; t_len * u_len * v];
        for t in 0..t_len {
            for (u, (_, _, pp)) in preds.iter().enumerate() {
                let c = t * u_len + u;
                self.joint(
                    &ep[t * jd..(t + 1) * jd],
                    pp,
                    &mut hidden[c * jd..(c + 1) * jd],
                    &mut lp[c * v..(c + 1) * v],
                );
            }
        }
        let lat = Lattice::new(t_len, labels.len(), v, lp)?;
        let out = rnnt_loss_and_grad(&lat, labels)?;

        // joiner
        let mut d_ep = vec![0.0; t_len * jd];
        let mut d_pp = vec![0.0; u_len * jd];
        let mut dz = vec![0.0; v];
        let mut dh = vec![0.0; jd];
        for t in 0..t_len {
            for u in 0..u_len {
                let c = t * u_len + u;
                let g = &out.grad[c * v..(c + 1) * v];
                if g.iter().all(|&x| x == 0.0) {
                    continue;
                }
                log_softmax_backward(lat.cell(t, u), g, &mut dz);
                let h = &hidden[c * jd..(c + 1) * jd];
                dh.fill(0.0);
                self.output.backward(h, &dz, &mut grad.output, Some(&mut dh));
                tanh_backward(h, &mut dh);
                axpy(1.0, &dh, &mut d_ep[t * jd..(t + 1) * jd]);
                axpy(1.0, &dh, &mut d_pp[u * jd..(u + 1) * jd]);
            }
        }

        // predictor
        let e = self.config.embed_dim;
        let mut d_ctx = vec![0.0; PREDICTOR_CONTEXT * e];
        for (u, (input, pred, _)) in preds.iter().enumerate() {
            let mut d_pred = vec![0.0; self.config.predictor_dim];
            self.joiner_pred
                .backward(pred, &d_pp[u * jd..(u + 1) * jd], &mut grad.joiner_pred, Some(&mut d_pred));
            tanh_backward(pred, &mut d_pred);
            d_ctx.fill(0.0);
            self.predictor.backward(input, &d_pred, &mut grad.predictor, Some(&mut d_ctx));
            for k in 0..PREDICTOR_CONTEXT {
                let label = u.checked_sub(k + 1).map_or(BLANK, |i| labels[i]);
                axpy(1.0, &d_ctx[k * e..(k + 1) * e], &mut grad.embedding[label * e..(label + 1) * e]);
            }
        }

        // distillation at the tap
        let tap = self.config.tap_layer;
        let mut kd_value = 0.0;
        let mut d_tap = None;
        if let Some(term) = kd {
            let batch = KdBatch::new(self.config.tap_dim(), layers[tap].clone(), term.targets.clone())?;
            if term.alpha == 0.0 {
                kd_value = kd_loss(&self.lossnet, &batch, &term.config)?;
            } else {
                let k = kd_loss_and_grad(&self.lossnet, &batch, &term.config)?;
                kd_value = k.loss;
                axpy(term.alpha, &k.grad.weights, grad.lossnet.weights_mut());
                axpy(term.alpha, &k.grad.biases, grad.lossnet.biases_mut());
                d_tap = Some((term.alpha, k.grad.embeddings));
            }
        }

        // encoder
        let j = &self.joiner_enc;
        let mut d_act = vec![0.0; enc.len()];
        for t in 0..t_len {
            j.backward(
                &enc[t * j.inp..(t + 1) * j.inp],
                &d_ep[t * jd..(t + 1) * jd],
                &mut grad.joiner_enc,
                Some(&mut d_act[t * j.inp..(t + 1) * j.inp]),
            );
        }
        for l in (0..self.encoder.len()).rev() {
            if l == tap {
                if let Some((alpha, ds)) = &d_tap {
                    axpy(*alpha, ds, &mut d_act);
                }
            }
            tanh_backward(&layers[l], &mut d_act);
            let layer = &self.encoder[l];
            let input = if l == 0 { &spliced } else { &layers[l - 1] };
            let mut d_in = if l > 0 { vec![0.0; t_len * layer.inp] } else { Vec::new() };
            for t in 0..t_len {
                let dx = if l > 0 {
                    Some(&mut d_in[t * layer.inp..(t + 1) * layer.inp])
                } else {
                    None
                };
                layer.backward(
                    &input[t * layer.inp..(t + 1) * layer.inp],
                    &d_act[t * layer.out..(t + 1) * layer.out],
                    &mut grad.encoder[l],
                    dx,
                );
            }
            d_act = d_in;
        }

        Ok(UtteranceLoss {
            rnnt: out.loss,
            kd: kd_value,
        })
    }

    /// Decoding view of one utterance.
    pub fn scorer(&self, frames: &[f64]) -> Result<ModelScorer<'_>, HarnessError> {
        let frames_n = self.check_frames(frames)?;
        let (_, layers) = self.encode(frames);
        Ok(ModelScorer {
            model: self,
            frames: frames_n,
            enc_proj: self.encoder_projection(layers.last().unwrap()),
        })
    }
}

pub struct ModelScorer<'a> {
    model: &'a ToyModel,
    frames: usize,
    enc_proj: Vec<f64>,
}

impl StepScorer for ModelScorer<'_> {
    fn frames(&self) -> usize {
        self.frames
    }

    fn vocab(&self) -> usize {
        self.model.vocab()
    }

    fn log_probs(&self, frame: usize, context: &[usize]) -> Vec<f64> {
        let jd = self.model.config.joiner_dim;
        let (_, _, pp) = self.model.predict(context);
        let mut hidden = vec![0.0; jd];
        let mut lp = vec![0.0; self.model.vocab()];
        self.model
            .joint(&self.enc_proj[frame * jd..(frame + 1) * jd], &pp, &mut hidden, &mut lp);
        lp
    }
}

// Model file (`TOY1`), little-endian:
// magic[4] | frame_dim | layers | dims[layers] | tap | embed | predictor |
// joiner | codebooks | tokens | { len | utf8 }* | tensors |
// { name_len | name | rank | shape[rank] | f64 data }*
// with every integer a u32.
const MODEL_MAGIC: &[u8; 4] = b"TOY1";

impl ToyModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        let mut buf = MODEL_MAGIC.to_vec();
        let put = |buf: &mut Vec<u8>, x: usize, what: &str| -> Result<(), FormatError> {
            buf.extend_from_slice(&to_u32(x, what)?.to_le_bytes());
            Ok(())
        };
        let c = &self.config;
        put(&mut buf, c.frame_dim, "frame dimension")?;
        put(&mut buf, c.encoder_dims.len(), "layer count")?;
        for &d in &c.encoder_dims {
            put(&mut buf, d, "layer width")?;
        }
        for (x, what) in [
            (c.tap_layer, "tap layer"),
            (c.embed_dim, "embedding width"),
            (c.predictor_dim, "predictor width"),
            (c.joiner_dim, "joiner width"),
            (c.n_codebooks, "codebook count"),
            (self.inventory.tokens().len(), "token count"),
        ] {
            put(&mut buf, x, what)?;
        }
        for tok in self.inventory.tokens() {
            put(&mut buf, tok.len(), "token length")?;
            buf.extend_from_slice(tok.as_bytes());
        }
        let tensors = self.tensors();
        put(&mut buf, tensors.len(), "tensor count")?;
        for (name, shape, data) in tensors {
            put(&mut buf, name.len(), "name length")?;
            buf.extend_from_slice(name.as_bytes());
            put(&mut buf, shape.len(), "rank")?;
            for d in shape {
                put(&mut buf, d, "extent")?;
            }
            for x in data {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        r.magic(MODEL_MAGIC)?;
        let get = |r: &mut Reader| r.u32().map(|x| x as usize);
        let frame_dim = get(&mut r)?;
        let layers = get(&mut r)?;
        if layers > bytes.len() {
            return Err(FormatError::HeaderMismatch(format!("{layers} encoder layers")));
        }
        let encoder_dims = (0..layers).map(|_| get(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let config = ModelConfig {
            frame_dim,
            encoder_dims,
            tap_layer: get(&mut r)?,
            embed_dim: get(&mut r)?,
            predictor_dim: get(&mut r)?,
            joiner_dim: get(&mut r)?,
            n_codebooks: get(&mut r)?,
        };
        let n_tokens = get(&mut r)?;
        if n_tokens > bytes.len() {
            return Err(FormatError::HeaderMismatch(format!("{n_tokens} tokens")));
        }
        let mut tokens = Vec::with_capacity(n_tokens);
        for _ in 0..n_tokens {
            let len = get(&mut r)?;
            let raw = r.take(len)?;
            tokens.push(
                String::from_utf8(raw.to_vec()).map_err(|_| FormatError::HeaderMismatch("token is not UTF-8".into()))?,
            );
        }
        let inventory = TokenInventory::new(tokens).map_err(|e| FormatError::HeaderMismatch(e.to_string()))?;
        let mut model =
            ToyModel::new(config, inventory, 0).map_err(|e| FormatError::HeaderMismatch(e.to_string()))?;
        let expected: Vec<(String, Vec<usize>)> = model.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        let count = get(&mut r)?;
        if count != expected.len() {
            return Err(FormatError::HeaderMismatch(format!(
                "{count} tensors, architecture has {}",
                expected.len()
            )));
        }
        let mut values = Vec::with_capacity(count);
        for (name, shape) in &expected {
            let len = get(&mut r)?;
            let found = r.take(len)?;
            if found != name.as_bytes() {
                return Err(FormatError::HeaderMismatch(format!(
                    "expected tensor {name}, found {}",
                    String::from_utf8_lossy(found)
                )));
            }
            let rank = get(&mut r)?;
            let dims = (0..rank.min(8)).map(|_| get(&mut r)).collect::<Result<Vec<_>, _>>()?;
            if rank != shape.len() || dims != *shape {
                return Err(FormatError::HeaderMismatch(format!("tensor {name} has shape {dims:?}, expected {shape:?}")));
            }
            values.push(r.f64s(shape.iter().product())?);
        }
        r.finish()?;
        for (dst, src) in model.tensors_mut().into_iter().zip(values) {
            dst.copy_from_slice(&src);
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), FormatError> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, FormatError> {
        Self::from_bytes(&read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::task::{generate_dataset, TaskConfig};
    use crate::transducer::build_lattice;
    use rand::Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            frame_dim: FRAME_DIM,
            encoder_dims: vec![5, 3, 4],
            tap_layer: 1,
            embed_dim: 2,
            predictor_dim: 3,
            joiner_dim: 4,
            n_codebooks: 2,
        }
    }

    fn tiny_model(seed: u64) -> ToyModel {
        let inv = TaskConfig::default().inventory().unwrap();
        let mut m = ToyModel::new(tiny_config(), inv, seed).unwrap();
        // non-zero everywhere, including biases and the LossNet
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for t in m.tensors_mut() {
            for x in t.iter_mut() {
                *x += rng.random_range(-0.3..0.3);
            }
        }
        m
    }

    #[test]
    fn joiner_rows_are_normalized_and_match_the_scorer() {
        let data = generate_dataset(3, 0, &TaskConfig::default()).unwrap();
        let m = tiny_model(1);
        for u in &data {
            let lat = m.lattice(&u.frames, &u.target).unwrap();
            assert!(lat.normalization_error() < 1e-9);
            let via_scorer = build_lattice(&m.scorer(&u.frames).unwrap(), &u.target).unwrap();
            assert_eq!(lat, via_scorer);
        }
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let data = generate_dataset(2, 7, &TaskConfig::default()).unwrap();
        let m = tiny_model(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let targets: Vec<CodebookIndexes> = data
            .iter()
            .map(|u| CodebookIndexes::new(2, (0..2 * u.n_frames()).map(|_| rng.random()).collect()).unwrap())
            .collect();
        let alpha = 0.3;
        let term = |i: usize| {
            Some(KdTerm {
                targets: &targets[i],
                alpha,
                config: KdConfig::default(),
            })
        };
        let total = |m: &ToyModel| -> f64 {
            data.iter()
                .enumerate()
                .map(|(i, u)| {
                    let l = m.loss(&u.frames, &u.target, term(i)).unwrap();
                    l.rnnt + alpha * l.kd
                })
                .sum()
        };
        let mut grad = m.zeros_like();
        for (i, u) in data.iter().enumerate() {
            m.loss_and_grad(&u.frames, &u.target, term(i), &mut grad).unwrap();
        }
        let analytic: Vec<Vec<f64>> = grad.tensors().into_iter().map(|(_, _, t)| t.to_vec()).collect();
        let names: Vec<String> = m.tensors().into_iter().map(|(n, _, _)| n).collect();
        let h = 1e-6;
        let mut checked = 0;
        for (k, name) in names.iter().enumerate() {
            let len = analytic[k].len();
            // the LossNet is large; sample it, check everything else entirely
            let stride = if name.starts_with("lossnet") { 23 } else { 1 };
            for i in (0..len).step_by(stride) {
                let mut plus = m.clone();
                plus.tensors_mut()[k][i] += h;
                let mut minus = m.clone();
                minus.tensors_mut()[k][i] -= h;
                let fd = (total(&plus) - total(&minus)) / (2.0 * h);
                let a = analytic[k][i];
                let err = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-3);
                assert!(err < 1e-4, "{name}[{i}]: fd {fd} analytic {a}");
                checked += 1;
            }
        }
        assert!(checked > 300);
    }

    #[test]
    fn zero_alpha_adds_no_gradient() {
        let data = generate_dataset(1, 9, &TaskConfig::default()).unwrap();
        let u = &data[0];
        let m = tiny_model(4);
        let targets = CodebookIndexes::new(2, vec![7; 2 * u.n_frames()]).unwrap();
        let mut plain = m.zeros_like();
        let a = m.loss_and_grad(&u.frames, &u.target, None, &mut plain).unwrap();
        let mut with = m.zeros_like();
        let b = m
            .loss_and_grad(
                &u.frames,
                &u.target,
                Some(KdTerm {
                    targets: &targets,
                    alpha: 0.0,
                    config: KdConfig::default(),
                }),
                &mut with,
            )
            .unwrap();
        assert_eq!(a.rnnt.to_bits(), b.rnnt.to_bits());
        assert!(b.kd > 0.0);
        assert_eq!(plain, with);
    }

    #[test]
    fn file_round_trip() {
        let m = tiny_model(5);
        let bytes = m.to_bytes().unwrap();
        let back = ToyModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes().unwrap(), bytes);

        assert!(matches!(ToyModel::from_bytes(&bytes[..bytes.len() - 3]), Err(FormatError::Truncated { .. })));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(ToyModel::from_bytes(&longer), Err(FormatError::TrailingBytes(1))));
        let mut v2 = bytes.clone();
        v2[3] = b'2';
        assert!(matches!(ToyModel::from_bytes(&v2), Err(FormatError::UnsupportedVersion('2'))));
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(ToyModel::from_bytes(&bad), Err(FormatError::BadMagic { .. })));
    }
}
