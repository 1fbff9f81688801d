//! Checkpoint container.
//!
//! Framed by [`crate::io::seal`] with magic `DONCKPT\0`, version 1. Payload:
//!
//! ```text
//! str   config_hash
//! u8    kind (1 = DeepONet, 2 = FCN, 3 = CNN)
//! norm  (same layout as in the dataset container)
//! kind 1: mlp branch; mlp trunk; f64 output bias
//! kind 2: u32 spec_id; mlp net
//! kind 3: conv conv1; conv conv2; mlp head
//! u8    has_optimizer; if 1: f64 lr, beta1, beta2, eps; u64 steps;
//!         u64 tensor count; per tensor f64[] m; then per tensor f64[] v
//!
//! mlp:  u64[] layer sizes; u8 hidden tag; u8 output tag;
//!       per layer f64[] weight (in x out, row-major); f64[] bias
//! conv: u64 out_ch, in_ch, kernel, stride; f64[] weight; f64[] bias
//! ```

use std::path::Path;

use ndarray::{Array1, Array2, Array3};

use super::{CnnBaseline, DeepONet, FcnBaseline, SurrogateModel};
use crate::dataset::format::{get_norm, put_norm};
use crate::dataset::NormMeta;
use crate::error::{Error, FormatError, Result};
use crate::io::{seal, unseal, write_atomic, Decoder, Encoder};
use crate::nn::{Activation, AdamState, Conv1d, Dense, MLPParams};

pub const MAGIC: [u8; 8] = *b"DONCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    DeepONet(DeepONet),
    Fcn(FcnBaseline),
    Cnn(CnnBaseline),
}

impl AnyModel {
    pub fn as_surrogate(&self) -> &dyn SurrogateModel {
        match self {
            AnyModel::DeepONet(m) => m,
            AnyModel::Fcn(m) => m,
            AnyModel::Cnn(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: AnyModel,
    pub optimizer: Option<AdamState>,
    pub config_hash: String,
}

fn put_mlp(e: &mut Encoder, m: &MLPParams) {
    let sizes: Vec<u64> = m.layer_sizes.iter().map(|&s| s as u64).collect();
    e.u64s(&sizes);
    e.u8(m.hidden_activation.tag());
    e.u8(m.output_activation.tag());
    for l in &m.layers {
        e.f64s(&l.weight.iter().copied().collect::<Vec<_>>());
        e.f64s(&l.bias.to_vec());
    }
}

fn bad(msg: impl Into<String>) -> FormatError {
    FormatError::Malformed(msg.into())
}

fn activation(tag: u8) -> std::result::Result<Activation, FormatError> {
    Activation::from_tag(tag).ok_or_else(|| bad(format!("unknown activation tag {tag}")))
}

fn get_mlp(d: &mut Decoder<'_>) -> std::result::Result<MLPParams, FormatError> {
    let sizes: Vec<usize> = d.u64s()?.into_iter().map(|s| s as usize).collect();
    if sizes.len() < 2 {
        return Err(bad("network needs at least two layer sizes"));
    }
    let hidden = activation(d.u8()?)?;
    let output = activation(d.u8()?)?;
    let mut layers = Vec::with_capacity(sizes.len() - 1);
    for w in sizes.windows(2) {
        let weight = Array2::from_shape_vec((w[0], w[1]), d.f64s()?).map_err(|e| bad(e.to_string()))?;
        let bias = d.f64s()?;
        if bias.len() != w[1] {
            return Err(bad("bias length differs from layer width"));
        }
        layers.push(Dense {
            weight,
            bias: Array1::from(bias),
        });
    }
    MLPParams::from_layers(layers, hidden, output).map_err(|e| bad(e.to_string()))
}

fn put_conv(e: &mut Encoder, c: &Conv1d) {
    let (o, i, k) = c.weight.dim();
    for v in [o, i, k, c.stride] {
        e.u64(v as u64);
    }
    e.f64s(&c.weight.iter().copied().collect::<Vec<_>>());
    e.f64s(&c.bias.to_vec());
}

fn get_conv(d: &mut Decoder<'_>) -> std::result::Result<Conv1d, FormatError> {
    let (o, i, k, stride) = (
        d.u64()? as usize,
        d.u64()? as usize,
        d.u64()? as usize,
        d.u64()? as usize,
    );
    let weight = Array3::from_shape_vec((o, i, k), d.f64s()?).map_err(|e| bad(e.to_string()))?;
    let bias = Array1::from(d.f64s()?);
    Conv1d::from_parts(weight, bias, stride).map_err(|e| bad(e.to_string()))
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut e = Encoder::default();
    e.str(&ck.config_hash);
    match &ck.model {
        AnyModel::DeepONet(m) => {
            e.u8(1);
            put_norm(&mut e, &m.norm);
            put_mlp(&mut e, &m.branch);
            put_mlp(&mut e, &m.trunk);
            e.f64(m.output_bias);
        }
        AnyModel::Fcn(m) => {
            e.u8(2);
            put_norm(&mut e, &m.norm);
            e.u32(m.spec_id);
            put_mlp(&mut e, &m.net);
        }
        AnyModel::Cnn(m) => {
            e.u8(3);
            put_norm(&mut e, &m.norm);
            put_conv(&mut e, &m.conv1);
            put_conv(&mut e, &m.conv2);
            put_mlp(&mut e, &m.head);
        }
    }
    match &ck.optimizer {
        None => e.u8(0),
        Some(o) => {
            e.u8(1);
            for v in [o.lr, o.beta1, o.beta2, o.eps_hat] {
                e.f64(v);
            }
            e.u64(o.step_count);
            e.u64(o.m.len() as u64);
            for t in o.m.iter().chain(&o.v) {
                e.f64s(t);
            }
        }
    }
    seal(MAGIC, VERSION, &e.buf)
}

fn get_model(d: &mut Decoder<'_>) -> Result<AnyModel> {
    let kind = d.u8()?;
    let norm: NormMeta = get_norm(d)?;
    Ok(match kind {
        1 => {
            let branch = get_mlp(d)?;
            let trunk = get_mlp(d)?;
            let bias = d.f64()?;
            AnyModel::DeepONet(DeepONet::from_parts(branch, trunk, bias, norm)?)
        }
        2 => {
            let spec_id = d.u32()?;
            let net = get_mlp(d)?;
            if net.input_width() != 2 || net.output_width() != 1 {
                return Err(bad("FCN must map 2 inputs to 1 output").into());
            }
            AnyModel::Fcn(FcnBaseline { net, norm, spec_id })
        }
        3 => {
            let c1 = get_conv(d)?;
            let c2 = get_conv(d)?;
            let head = get_mlp(d)?;
            AnyModel::Cnn(CnnBaseline::from_parts(c1, c2, head, norm)?)
        }
        k => return Err(bad(format!("unknown model kind {k}")).into()),
    })
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let payload = unseal(MAGIC, VERSION, bytes)?;
    let mut d = Decoder::new(payload);
    let config_hash = d.str()?;
    let model = get_model(&mut d)?;
    let optimizer = match d.u8()? {
        0 => None,
        1 => {
            let (lr, beta1, beta2, eps_hat) = (d.f64()?, d.f64()?, d.f64()?, d.f64()?);
            let step_count = d.u64()?;
            let n = d.u64()? as usize;
            let tensors = match &model {
                AnyModel::DeepONet(m) => crate::nn::ParamSet::tensors(m).len(),
                AnyModel::Fcn(m) => crate::nn::ParamSet::tensors(m).len(),
                AnyModel::Cnn(m) => crate::nn::ParamSet::tensors(m).len(),
            };
            if n != tensors {
                return Err(bad("optimizer state does not mirror the model").into());
            }
            let mut m = Vec::with_capacity(n);
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                m.push(d.f64s()?);
            }
            for _ in 0..n {
                v.push(d.f64s()?);
            }
            Some(AdamState {
                lr,
                beta1,
                beta2,
                eps_hat,
                step_count,
                m,
                v,
            })
        }
        t => return Err(bad(format!("bad optimizer flag {t}")).into()),
    };
    d.finish()?;
    Ok(Checkpoint {
        model,
        optimizer,
        config_hash,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ck))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::tiny_corpus;
    use crate::dataset::{split_functions, TrainingSet};
    use crate::models::{train_cnn, train_deeponet, train_fcn, TrainConfig};

    fn trained() -> (crate::dataset::Corpus, Vec<Checkpoint>) {
        let corpus = tiny_corpus(5, 6);
        let split = split_functions(&corpus, 2).unwrap();
        let norm = NormMeta::fit(&corpus, &split.train).unwrap();
        let set = TrainingSet::build(&corpus, &split.train, None, &norm).unwrap();
        let cfg = TrainConfig {
            iterations: 5,
            batch_functions: 2,
            points_per_function: 8,
            seed: 3,
            log_every: 1,
            ..TrainConfig::default()
        };
        let d = train_deeponet(&set, &norm, &cfg).unwrap();
        let f = train_fcn(&set.single(0), &norm, &cfg).unwrap();
        let c = train_cnn(&set, &norm, &cfg).unwrap();
        let cks = vec![
            Checkpoint {
                model: AnyModel::DeepONet(d.model),
                optimizer: Some(d.optimizer),
                config_hash: "abc".into(),
            },
            Checkpoint {
                model: AnyModel::Fcn(f.model),
                optimizer: Some(f.optimizer),
                config_hash: String::new(),
            },
            Checkpoint {
                model: AnyModel::Cnn(c.model),
                optimizer: None,
                config_hash: "x".into(),
            },
        ];
        (corpus, cks)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (corpus, cks) = trained();
        let dir = tempfile::tempdir().unwrap();
        for (i, ck) in cks.iter().enumerate() {
            let path = dir.path().join(format!("m{i}.ckpt"));
            save_checkpoint(ck, &path).unwrap();
            let back = load_checkpoint(&path).unwrap();
            assert_eq!(&back, ck);
            assert_eq!(encode_checkpoint(&back), std::fs::read(&path).unwrap());
            let e = &corpus.entries[0];
            let a = ck.model.as_surrogate().predict_field(&e.sensors.values, &corpus.tally_grid).unwrap();
            let b = back.model.as_surrogate().predict_field(&e.sensors.values, &corpus.tally_grid).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn corruption_is_detected() {
        let (_, cks) = trained();
        let mut bytes = encode_checkpoint(&cks[0]);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Format(FormatError::Checksum))));
        let bytes = encode_checkpoint(&cks[1]);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong = bytes.clone();
        wrong[..8].copy_from_slice(b"DONDSET\0");
        assert!(matches!(decode_checkpoint(&wrong), Err(Error::Format(FormatError::BadMagic { .. }))));
    }
}
