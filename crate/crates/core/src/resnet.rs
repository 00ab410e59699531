//! The residual time-series classifier: three residual blocks of three
//! conv-BN(-ReLU) units each, global average pooling, a two-class linear
//! head, and class activation maps over the last block's feature maps.
//!
//! Inside a residual block the first two conv units end in ReLU, the third
//! ends after batch norm; the shortcut (identity, or 1×1 conv + BN when the
//! channel count changes) is added and the sum goes through a final ReLU.
//!
//! # Serialized layout
//!
//! ```text
//! "CAMALRN\0"                 8-byte magic
//! u32 (LE)                    header length in bytes
//! header                      UTF-8 JSON, see `FileHeader`
//! payload                     raw little-endian arrays, in header order
//! ```
//!
//! Arrays are written per block `i` as `block{i}.conv{j}.weight`, `.bias`,
//! `block{i}.bn{j}.gamma`, `.beta`, `.running_mean`, `.running_var` for
//! `j = 1..=3`, then the optional `block{i}.shortcut.conv.*` and
//! `block{i}.shortcut.bn.*`, and finally `head.weight`, `head.bias`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, validation_err, Error, Result};
use crate::gradcore::{
    global_average_pool, seeded_rng, Adam, BatchNorm1d, Conv1d, GlobalAvgPool, LayerParams, LinearSoftmax, Matrix,
    Mode, Real, Relu, Tensor3,
};
use crate::localizer::CamMap;

/// Filters of the three residual blocks.
pub const FILTERS: [usize; 3] = [64, 128, 128];
/// Kernel sizes of the default ensemble candidates.
pub const KERNEL_SET: [usize; 5] = [5, 7, 9, 15, 25];
pub const CONVS_PER_BLOCK: usize = 3;
pub const NUM_CLASSES: usize = 2;

const MAGIC: &[u8; 8] = b"CAMALRN\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResNetSpec {
    pub kernel_size: usize,
    pub filters: [usize; 3],
    pub convs_per_block: usize,
    pub num_classes: usize,
    pub input_channels: usize,
}

impl ResNetSpec {
    pub fn new(kernel_size: usize) -> Self {
        Self {
            kernel_size,
            filters: FILTERS,
            convs_per_block: CONVS_PER_BLOCK,
            num_classes: NUM_CLASSES,
            input_channels: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 {
            return Err(validation_err!("kernel size must be at least 1"));
        }
        if self.filters != FILTERS || self.convs_per_block != CONVS_PER_BLOCK {
            return Err(validation_err!(
                "architecture is fixed to filters {:?} with {} convs per block",
                FILTERS,
                CONVS_PER_BLOCK
            ));
        }
        if self.num_classes != NUM_CLASSES || self.input_channels != 1 {
            return Err(validation_err!("classifier is univariate and binary"));
        }
        Ok(())
    }
}

/// What training left behind on a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs_run: usize,
    /// Best loss on the internal validation split, at the restored weights.
    pub best_val_sub_loss: Option<f64>,
    /// Loss on the held-out validation set used for ensemble selection.
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone)]
struct ConvBn<T: Real> {
    conv: Conv1d<T>,
    bn: BatchNorm1d<T>,
}

impl<T: Real> ConvBn<T> {
    fn new(cin: usize, cout: usize, k: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        let mut conv = Conv1d::new(cin, cout, k)?;
        conv.init(rng);
        Ok(Self { conv, bn: BatchNorm1d::new(cout).with_default_running_stats() })
    }

    fn eval(&self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        self.bn.eval(&self.conv.eval(x)?)
    }

    fn forward(&mut self, x: &Tensor3<T>, mode: Mode) -> Result<Tensor3<T>> {
        let h = self.conv.forward(x)?;
        self.bn.forward(&h, mode)
    }

    fn backward(&mut self, d: &Tensor3<T>) -> Result<Tensor3<T>> {
        let d = self.bn.backward(d)?;
        self.conv.backward(&d)
    }

    fn clear(&mut self) {
        self.conv.clear_cache();
        self.bn.clear_cache();
    }
}

#[derive(Debug, Clone)]
struct ResidualBlock<T: Real> {
    units: [ConvBn<T>; 3],
    relus: [Relu; 2],
    shortcut: Option<ConvBn<T>>,
    out_relu: Relu,
}

impl<T: Real> ResidualBlock<T> {
    fn new(cin: usize, cout: usize, k: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        let units = [ConvBn::new(cin, cout, k, rng)?, ConvBn::new(cout, cout, k, rng)?, ConvBn::new(cout, cout, k, rng)?];
        let shortcut = if cin != cout { Some(ConvBn::new(cin, cout, 1, rng)?) } else { None };
        Ok(Self { units, relus: [Relu::new(), Relu::new()], shortcut, out_relu: Relu::new() })
    }

    fn eval_shortcut(&self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        match &self.shortcut {
            Some(s) => s.eval(x),
            None => Ok(x.clone()),
        }
    }

    fn eval(&self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        let h = crate::gradcore::relu(&self.units[0].eval(x)?);
        let h = crate::gradcore::relu(&self.units[1].eval(&h)?);
        let h = self.units[2].eval(&h)?;
        Ok(crate::gradcore::relu(&h.add(&self.eval_shortcut(x)?)?))
    }

    fn forward(&mut self, x: &Tensor3<T>, mode: Mode) -> Result<Tensor3<T>> {
        let h = self.units[0].forward(x, mode)?;
        let h = self.relus[0].forward(&h);
        let h = self.units[1].forward(&h, mode)?;
        let h = self.relus[1].forward(&h);
        let h = self.units[2].forward(&h, mode)?;
        let s = match &mut self.shortcut {
            Some(s) => s.forward(x, mode)?,
            None => x.clone(),
        };
        Ok(self.out_relu.forward(&h.add(&s)?))
    }

    fn backward(&mut self, dy: &Tensor3<T>) -> Result<Tensor3<T>> {
        let dsum = self.out_relu.backward(dy)?;
        let d = self.units[2].backward(&dsum)?;
        let d = self.relus[1].backward(&d)?;
        let d = self.units[1].backward(&d)?;
        let d = self.relus[0].backward(&d)?;
        let dx = self.units[0].backward(&d)?;
        let dsc = match &mut self.shortcut {
            Some(s) => s.backward(&dsum)?,
            None => dsum,
        };
        dx.add(&dsc)
    }

    fn clear(&mut self) {
        self.units.iter_mut().for_each(ConvBn::clear);
        self.relus.iter_mut().for_each(Relu::clear_cache);
        self.out_relu.clear_cache();
        if let Some(s) = &mut self.shortcut {
            s.clear();
        }
    }

    fn conv_bns(&self) -> impl Iterator<Item = (String, &ConvBn<T>)> {
        let units = self.units.iter().enumerate().map(|(j, u)| (format!("{}", j + 1), u));
        units.chain(self.shortcut.iter().map(|s| ("shortcut".to_string(), s)))
    }

    fn conv_bns_mut(&mut self) -> impl Iterator<Item = &mut ConvBn<T>> {
        self.units.iter_mut().chain(self.shortcut.iter_mut())
    }
}

/// Output of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub logits: Matrix<T>,
    /// `(batch, 2)` softmax probabilities.
    pub probs: Matrix<T>,
    /// Last residual block output, `(batch, 128, len)`.
    pub features: Tensor3<T>,
    pub loss: Option<f64>,
}

/// One member of the ensemble.
#[derive(Debug, Clone)]
pub struct ResNet<T: Real = f32> {
    spec: ResNetSpec,
    blocks: Vec<ResidualBlock<T>>,
    pool: GlobalAvgPool,
    head: LinearSoftmax<T>,
    pub meta: TrainingMeta,
}

impl<T: Real> ResNet<T> {
    /// Builds a freshly initialised network; all randomness comes from `seed`.
    pub fn build(spec: ResNetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = seeded_rng(seed);
        let mut blocks = Vec::with_capacity(3);
        let mut cin = spec.input_channels;
        for &cout in &spec.filters {
            blocks.push(ResidualBlock::new(cin, cout, spec.kernel_size, &mut rng)?);
            cin = cout;
        }
        let mut head = LinearSoftmax::new(cin, spec.num_classes);
        head.init(&mut rng);
        Ok(Self {
            spec,
            blocks,
            pool: GlobalAvgPool::default(),
            head,
            meta: TrainingMeta { seed, ..TrainingMeta::default() },
        })
    }

    pub fn spec(&self) -> &ResNetSpec {
        &self.spec
    }

    pub fn kernel_size(&self) -> usize {
        self.spec.kernel_size
    }

    pub fn param_count(&self) -> usize {
        let body: usize = self
            .blocks
            .iter()
            .flat_map(|b| b.conv_bns())
            .map(|(_, u)| u.conv.params.param_count() + u.bn.params.param_count())
            .sum();
        body + self.head.params.param_count()
    }

    /// Classifier weights `(classes, 128)` and bias, the `w_c^k` of the CAM.
    pub fn head_params(&self) -> &LayerParams<T> {
        &self.head.params
    }

    pub fn head_params_mut(&mut self) -> &mut LayerParams<T> {
        &mut self.head.params
    }

    fn check_input(&self, x: &Tensor3<T>) -> Result<()> {
        if x.channels() != self.spec.input_channels {
            return Err(shape_err!("expected {} input channel, got {}", self.spec.input_channels, x.channels()));
        }
        if x.len_t() == 0 || x.batch() == 0 {
            return Err(shape_err!("input {:?} has no samples", x.shape()));
        }
        Ok(())
    }

    /// Eval-mode inference through `&self`; safe to share across threads.
    pub fn infer(&self, x: &Tensor3<T>) -> Result<ForwardOutput<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.eval(&h)?;
        }
        let pooled = global_average_pool(&h)?;
        let out = self.head.eval(&pooled, None)?;
        Ok(ForwardOutput { logits: out.logits, probs: out.probs, features: h, loss: None })
    }

    /// Forward pass in the given mode. Train mode normalizes with batch
    /// statistics, updates running statistics and caches what `backward` needs.
    pub fn forward(&mut self, x: &Tensor3<T>, mode: Mode) -> Result<ForwardOutput<T>> {
        match mode {
            Mode::Eval => self.infer(x),
            Mode::Train => self.forward_train(x, None),
        }
    }

    fn forward_train(&mut self, x: &Tensor3<T>, labels: Option<&[usize]>) -> Result<ForwardOutput<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for b in &mut self.blocks {
            h = b.forward(&h, Mode::Train)?;
        }
        let pooled = self.pool.forward(&h)?;
        let out = match labels {
            Some(y) => self.head.forward(&pooled, y)?,
            None => self.head.eval(&pooled, None)?,
        };
        Ok(ForwardOutput { logits: out.logits, probs: out.probs, features: h, loss: out.loss })
    }

    /// Train-mode forward and backward on one batch, accumulating gradients.
    /// Returns the batch's mean cross-entropy.
    pub fn forward_backward(&mut self, x: &Tensor3<T>, labels: &[usize]) -> Result<f64> {
        let out = self.forward_train(x, Some(labels))?;
        let dpooled = self.head.backward()?;
        let mut d = self.pool.backward(&dpooled)?;
        for b in self.blocks.iter_mut().rev() {
            d = b.backward(&d)?;
        }
        Ok(out.loss.expect("labels were given"))
    }

    /// One optimisation step on a batch; returns the pre-update batch loss.
    pub fn train_step(&mut self, x: &Tensor3<T>, labels: &[usize], opt: &mut Adam<T>) -> Result<f64> {
        let loss = self.forward_backward(x, labels)?;
        opt.step(&mut self.params_mut());
        Ok(loss)
    }

    /// Eval-mode mean cross-entropy.
    pub fn loss(&self, x: &Tensor3<T>, labels: &[usize]) -> Result<f64> {
        let out = self.infer(x)?;
        let pooled = global_average_pool(&out.features)?;
        Ok(self.head.eval(&pooled, Some(labels))?.loss.expect("labels were given"))
    }

    /// Every trainable parameter block in serialization order.
    pub fn params_mut(&mut self) -> Vec<&mut LayerParams<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            for u in b.conv_bns_mut() {
                out.push(&mut u.conv.params);
                out.push(&mut u.bn.params);
            }
        }
        out.push(&mut self.head.params);
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(LayerParams::zero_grad);
    }

    /// Drops cached activations from the last training pass.
    pub fn clear_caches(&mut self) {
        self.blocks.iter_mut().for_each(ResidualBlock::clear);
        self.head.clear_cache();
        self.pool = GlobalAvgPool::default();
    }

    /// Class activation map `CAM_c(t) = Σ_k w_c^k · f^k(t)` for every batch
    /// item; the classifier bias is not included.
    pub fn cam(&self, features: &Tensor3<T>, class_id: usize) -> Result<Vec<CamMap>> {
        let width = self.head.in_features();
        if class_id >= self.head.classes() {
            return Err(validation_err!("class {class_id} outside 0..{}", self.head.classes()));
        }
        if features.channels() != width {
            return Err(shape_err!("CAM needs {width} feature maps, got {}", features.channels()));
        }
        let w = &self.head.params.weight[class_id * width..(class_id + 1) * width];
        let l = features.len_t();
        let source = format!("k{}", self.spec.kernel_size);
        Ok((0..features.batch())
            .map(|b| {
                let mut values = vec![0.0f64; l];
                for (k, wk) in w.iter().enumerate() {
                    let wk = wk.as_f64();
                    for (v, f) in values.iter_mut().zip(features.row(b, k)) {
                        *v += wk * f.as_f64();
                    }
                }
                CamMap { values, source: source.clone() }
            })
            .collect())
    }

    // ------------------------------------------------------------ io

    fn tensors(&self) -> Vec<(String, Vec<usize>, Vec<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            for (tag, u) in b.conv_bns() {
                let (conv, bn) = if tag == "shortcut" {
                    (format!("block{i}.shortcut.conv"), format!("block{i}.shortcut.bn"))
                } else {
                    (format!("block{i}.conv{tag}"), format!("block{i}.bn{tag}"))
                };
                let c = &u.conv.params;
                out.push((format!("{conv}.weight"), c.shape.clone(), c.weight.clone()));
                out.push((format!("{conv}.bias"), vec![c.bias.len()], c.bias.clone()));
                let ch = u.bn.channels();
                let (rm, rv) = u.bn.running_stats().expect("network batch norms always carry running stats");
                out.push((format!("{bn}.gamma"), vec![ch], u.bn.params.weight.clone()));
                out.push((format!("{bn}.beta"), vec![ch], u.bn.params.bias.clone()));
                out.push((format!("{bn}.running_mean"), vec![ch], rm.to_vec()));
                out.push((format!("{bn}.running_var"), vec![ch], rv.to_vec()));
            }
        }
        let h = &self.head.params;
        out.push(("head.weight".into(), h.shape.clone(), h.weight.clone()));
        out.push(("head.bias".into(), vec![h.bias.len()], h.bias.clone()));
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.tensors();
        let header = FileHeader {
            format_version: MODEL_FORMAT_VERSION,
            spec: self.spec.clone(),
            training: self.meta.clone(),
            byte_order: "little".into(),
            dtype: T::DTYPE.into(),
            tensors: tensors.iter().map(|(n, s, _)| TensorEntry { name: n.clone(), shape: s.clone() }).collect(),
        };
        let header = serde_json::to_vec(&header).expect("header is plain data");
        let mut out = Vec::with_capacity(header.len() + 12 + self.param_count() * T::BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, _, data) in &tensors {
            for &v in data {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| Error::Format(format!("model container: {m}"));
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(fmt("bad magic"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(12..12 + hlen).ok_or_else(|| fmt("truncated header"))?;
        let header: FileHeader = serde_json::from_slice(body).map_err(|e| fmt(&e.to_string()))?;
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(fmt(&format!("unsupported version {}", header.format_version)));
        }
        if header.byte_order != "little" || header.dtype != T::DTYPE {
            return Err(fmt(&format!("expected little-endian {}, found {} {}", T::DTYPE, header.byte_order, header.dtype)));
        }
        let mut model = Self::build(header.spec.clone(), header.training.seed)?;
        model.meta = header.training.clone();
        let expected = model.tensors();
        if expected.len() != header.tensors.len() {
            return Err(fmt("tensor list does not match the architecture"));
        }
        let mut cursor = 12 + hlen;
        let mut arrays = Vec::with_capacity(expected.len());
        for ((name, shape, _), entry) in expected.iter().zip(&header.tensors) {
            if *name != entry.name || *shape != entry.shape {
                return Err(fmt(&format!("unexpected tensor {} {:?}", entry.name, entry.shape)));
            }
            let n: usize = shape.iter().product();
            let raw = bytes.get(cursor..cursor + n * T::BYTES).ok_or_else(|| fmt("truncated payload"))?;
            arrays.push(raw.chunks_exact(T::BYTES).map(T::read_le).collect::<Vec<T>>());
            cursor += n * T::BYTES;
        }
        if cursor != bytes.len() {
            return Err(fmt("trailing bytes after payload"));
        }
        let mut it = arrays.into_iter();
        for b in &mut model.blocks {
            for u in b.conv_bns_mut() {
                u.conv.params.weight = it.next().expect("counted");
                u.conv.params.bias = it.next().expect("counted");
                u.bn.params.weight = it.next().expect("counted");
                u.bn.params.bias = it.next().expect("counted");
                let (rm, rv) = (it.next().expect("counted"), it.next().expect("counted"));
                u.bn.set_running_stats(rm, rv)?;
            }
        }
        model.head.params.weight = it.next().expect("counted");
        model.head.params.bias = it.next().expect("counted");
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileHeader {
    format_version: u32,
    spec: ResNetSpec,
    training: TrainingMeta,
    byte_order: String,
    dtype: String,
    tensors: Vec<TensorEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::AdamConfig;
    use rand::Rng;

    fn input(len: usize, seed: u64) -> Tensor3<f32> {
        let mut rng = seeded_rng(seed);
        Tensor3::from_vec([1, 1, len], (0..len).map(|_| rng.random_range(0.0..3.0)).collect()).unwrap()
    }

    #[test]
    fn parameter_count_depends_only_on_spec() {
        let a = ResNet::<f32>::build(ResNetSpec::new(7), 1).unwrap();
        let b = ResNet::<f32>::build(ResNetSpec::new(7), 2).unwrap();
        assert_eq!(a.param_count(), b.param_count());
        let small = ResNet::<f32>::build(ResNetSpec::new(5), 1).unwrap();
        let large = ResNet::<f32>::build(ResNetSpec::new(25), 1).unwrap();
        assert!(small.param_count() < large.param_count());
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        // conv: out*in*k + out, bn: 2*ch, shortcut: in*out + out + 2*out, head: 2*128 + 2
        let count = |k: usize| {
            let conv = |i: usize, o: usize, k: usize| o * i * k + o + 2 * o;
            conv(1, 64, k) + 2 * conv(64, 64, k) + conv(1, 64, 1)
                + conv(64, 128, k) + 2 * conv(128, 128, k) + conv(64, 128, 1)
                + 3 * conv(128, 128, k)
                + 258
        };
        for k in KERNEL_SET {
            assert_eq!(ResNet::<f32>::build(ResNetSpec::new(k), 0).unwrap().param_count(), count(k));
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(ResNet::<f32>::build(ResNetSpec::new(0), 0).is_err());
        let mut spec = ResNetSpec::new(5);
        spec.filters = [32, 64, 64];
        assert!(matches!(ResNet::<f32>::build(spec, 0), Err(Error::Validation(_))));
    }

    #[test]
    fn forward_shapes_and_probabilities() {
        let m = ResNet::<f32>::build(ResNetSpec::new(7), 3).unwrap();
        let out = m.infer(&input(510, 1)).unwrap();
        assert_eq!(out.features.shape(), [1, 128, 510]);
        assert_eq!((out.probs.rows(), out.probs.cols()), (1, 2));
        assert!((out.probs.row(0).iter().map(|&p| p as f64).sum::<f64>() - 1.0).abs() < 1e-6);
        let again = m.infer(&input(510, 1)).unwrap();
        assert_eq!(out.probs, again.probs);
        assert_eq!(out.features, again.features);
    }

    #[test]
    fn cam_of_one_hot_weights_is_that_feature_map() {
        let mut m = ResNet::<f64>::build(ResNetSpec::new(5), 4).unwrap();
        m.head.params.weight.fill(0.0);
        let out = m.infer(&input(40, 2).cast()).unwrap();
        assert!(m.cam(&out.features, 1).unwrap()[0].values.iter().all(|&v| v == 0.0));
        m.head.params.weight[128 + 17] = 1.0;
        let cam = m.cam(&out.features, 1).unwrap();
        assert_eq!(cam[0].values, out.features.row(0, 17).to_vec());
    }

    #[test]
    fn cam_mean_plus_bias_is_the_logit() {
        let m = ResNet::<f32>::build(ResNetSpec::new(9), 5).unwrap();
        let out = m.infer(&input(128, 3)).unwrap();
        for c in 0..2 {
            let cam = &m.cam(&out.features, c).unwrap()[0];
            let mean = cam.values.iter().sum::<f64>() / cam.values.len() as f64;
            let logit = out.logits.get(0, c) as f64;
            let recon = mean + m.head.params.bias[c] as f64;
            assert!((recon - logit).abs() <= 1e-4 * logit.abs().max(1.0), "{recon} vs {logit}");
        }
    }

    #[test]
    fn zeroed_block_computes_its_shortcut() {
        let mut m = ResNet::<f64>::build(ResNetSpec::new(5), 6).unwrap();
        let x = input(30, 4).cast::<f64>();
        for block in &mut m.blocks {
            for u in &mut block.units {
                u.conv.params.weight.fill(0.0);
                u.conv.params.bias.fill(0.0);
                u.bn.params.weight.fill(0.0);
            }
        }
        let mut h = x.clone();
        for block in &m.blocks {
            let expected = crate::gradcore::relu(&block.eval_shortcut(&h).unwrap());
            let got = block.eval(&h).unwrap();
            assert_eq!(got, expected);
            h = got;
        }
    }

    #[test]
    fn repeated_steps_reduce_loss_on_a_mislabeled_example() {
        let mut m = ResNet::<f32>::build(ResNetSpec::new(5), 7).unwrap();
        let x = input(64, 5);
        let before = m.infer(&x).unwrap();
        // label it with the class the fresh network considers less likely
        let wrong = if before.probs.get(0, 0) > before.probs.get(0, 1) { 1 } else { 0 };
        let mut opt = Adam::new(AdamConfig::default());
        let first = m.forward_backward(&x, &[wrong]).unwrap();
        opt.step(&mut m.params_mut());
        let mut last = first;
        for _ in 0..9 {
            last = m.train_step(&x, &[wrong], &mut opt).unwrap();
        }
        assert!(last < first, "loss {first} -> {last}");
    }

    #[test]
    fn serialization_round_trip_is_exact() {
        let mut m = ResNet::<f32>::build(ResNetSpec::new(7), 8).unwrap();
        let x = input(50, 6);
        // move running statistics away from their defaults
        m.forward(&x, Mode::Train).unwrap();
        m.meta.epochs_run = 4;
        m.meta.best_val_sub_loss = Some(0.123_456_789);
        let bytes = m.to_bytes();
        let back = ResNet::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.meta, m.meta);
        assert_eq!(back.infer(&x).unwrap().probs, m.infer(&x).unwrap().probs);
        assert!(ResNet::<f64>::from_bytes(&bytes).is_err());
        assert!(ResNet::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut m = ResNet::<f32>::build(ResNetSpec::new(5), 9).unwrap();
        assert!(matches!(m.head.backward(), Err(Error::State(_))));
    }
}
