//! The attention encoder-decoder network and its multilingual variants:
//! joint, multitask with a language-ID head, and language-conditioned
//! (encoder, decoder, or both).

mod checkpoint;
mod net;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use net::{
    attend, decoder_step, encode, las_loss, las_loss_over_states, lid_loss, mtl_loss,
    mtl_weights, output_distribution, precompute_attention, training_loss, Attend,
    DecoderState, EncoderStates, LossBreakdown,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, LstmParamIds, NamedTensors, Shape, Tensor, ValueId};
use crate::rng::Rng;

/// Which multilingual variant a model is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Joint,
    Mtl,
    CondEnc,
    CondDec,
    CondEncDec,
}

impl Variant {
    pub fn conditions_encoder(self) -> bool {
        matches!(self, Variant::CondEnc | Variant::CondEncDec)
    }

    pub fn conditions_decoder(self) -> bool {
        matches!(self, Variant::CondDec | Variant::CondEncDec)
    }

    pub fn is_conditioned(self) -> bool {
        self.conditions_encoder() || self.conditions_decoder()
    }

    pub fn has_lid_head(self) -> bool {
        matches!(self, Variant::Mtl)
    }

    pub const ALL: [Variant; 5] = [
        Variant::Joint,
        Variant::Mtl,
        Variant::CondEnc,
        Variant::CondDec,
        Variant::CondEncDec,
    ];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Joint => "joint",
            Variant::Mtl => "mtl",
            Variant::CondEnc => "cond-enc",
            Variant::CondDec => "cond-dec",
            Variant::CondEncDec => "cond-enc-dec",
        };
        write!(f, "{s}")
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Variant::Joint),
            "mtl" => Ok(Variant::Mtl),
            "cond-enc" => Ok(Variant::CondEnc),
            "cond-dec" => Ok(Variant::CondDec),
            "cond-enc-dec" => Ok(Variant::CondEncDec),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Stacked feature dimension fed to the encoder.
    pub input_dim: usize,
    pub encoder_layers: usize,
    /// LSTM cells per direction in each encoder layer.
    pub encoder_width: usize,
    pub decoder_layers: usize,
    pub decoder_width: usize,
    pub attention_width: usize,
    pub char_embedding_dim: usize,
    pub lang_embedding_dim: usize,
    /// Multitask loss weight; only read by the mtl variant.
    pub lambda: f64,
    pub vocab_size: usize,
    pub num_languages: usize,
}

impl ModelConfig {
    /// Desk-scale default dimensions, calibrated so a full training run
    /// converges in minutes on one core (the language-embedding width
    /// keeps its full-scale value of 5).
    pub fn desk_default(
        variant: Variant,
        input_dim: usize,
        vocab_size: usize,
        num_languages: usize,
    ) -> Self {
        ModelConfig {
            variant,
            input_dim,
            encoder_layers: 2,
            encoder_width: 24,
            decoder_layers: 1,
            decoder_width: 32,
            attention_width: 24,
            char_embedding_dim: 12,
            lang_embedding_dim: 5,
            lambda: 0.01,
            vocab_size,
            num_languages,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("encoder_layers", self.encoder_layers),
            ("encoder_width", self.encoder_width),
            ("decoder_layers", self.decoder_layers),
            ("decoder_width", self.decoder_width),
            ("attention_width", self.attention_width),
            ("char_embedding_dim", self.char_embedding_dim),
            ("lang_embedding_dim", self.lang_embedding_dim),
            ("vocab_size", self.vocab_size),
            ("num_languages", self.num_languages),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.lambda < 0.0 {
            return Err(Error::Config(format!("lambda {} is negative", self.lambda)));
        }
        Ok(())
    }

    /// Width of one encoder output frame (both directions).
    pub fn encoder_output_dim(&self) -> usize {
        2 * self.encoder_width
    }

    fn encoder_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            // The language embedding, when the encoder is conditioned, is
            // concatenated after the feature dims of the first layer only.
            self.input_dim
                + if self.variant.conditions_encoder() {
                    self.lang_embedding_dim
                } else {
                    0
                }
        } else {
            self.encoder_output_dim()
        }
    }

    fn decoder_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.char_embedding_dim
                + self.encoder_output_dim()
                + if self.variant.conditions_decoder() {
                    self.lang_embedding_dim
                } else {
                    0
                }
        } else {
            self.decoder_width
        }
    }
}

/// All learnable parameters, named for checkpointing, plus the config and
/// the fingerprint of the vocabulary they were built against.
#[derive(Clone, Debug, PartialEq)]
pub struct LasParams {
    pub config: ModelConfig,
    pub tensors: NamedTensors,
    pub vocab_fingerprint: u64,
}

fn uniform_tensor(rng: &mut Rng, shape: Shape) -> Tensor {
    let data: Vec<f64> = (0..shape.len()).map(|_| rng.uniform_in(-0.05, 0.05)).collect();
    Tensor { shape, data }
}

fn lstm_bias(width: usize) -> Tensor {
    // Zero biases, except the forget gate starts at 1.0.
    let mut data = vec![0.0; 4 * width];
    for v in data[width..2 * width].iter_mut() {
        *v = 1.0;
    }
    Tensor::vector(data)
}

impl LasParams {
    /// Initialize all weights uniformly on [-0.05, 0.05], biases at zero
    /// with forget-gate biases at 1.0.
    pub fn init(config: ModelConfig, vocab_fingerprint: u64, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::for_label(seed, "params");
        let mut t = NamedTensors::new();
        let w = config.encoder_width;
        for layer in 0..config.encoder_layers {
            let in_dim = config.encoder_input_dim(layer);
            for dir in ["fwd", "bwd"] {
                t.insert(
                    &format!("enc{layer}.{dir}.w_x"),
                    uniform_tensor(&mut rng, Shape::Matrix(4 * w, in_dim)),
                )?;
                t.insert(
                    &format!("enc{layer}.{dir}.w_h"),
                    uniform_tensor(&mut rng, Shape::Matrix(4 * w, w)),
                )?;
                t.insert(&format!("enc{layer}.{dir}.b"), lstm_bias(w))?;
            }
        }
        let h_dim = config.encoder_output_dim();
        t.insert(
            "att.w_h",
            uniform_tensor(&mut rng, Shape::Matrix(config.attention_width, h_dim)),
        )?;
        t.insert(
            "att.w_d",
            uniform_tensor(
                &mut rng,
                Shape::Matrix(config.attention_width, config.decoder_width),
            ),
        )?;
        t.insert(
            "att.v",
            uniform_tensor(&mut rng, Shape::Vector(config.attention_width)),
        )?;
        t.insert("att.b_a", Tensor::zeros(Shape::Vector(config.attention_width)))?;
        let dw = config.decoder_width;
        for layer in 0..config.decoder_layers {
            let in_dim = config.decoder_input_dim(layer);
            t.insert(
                &format!("dec{layer}.w_x"),
                uniform_tensor(&mut rng, Shape::Matrix(4 * dw, in_dim)),
            )?;
            t.insert(
                &format!("dec{layer}.w_h"),
                uniform_tensor(&mut rng, Shape::Matrix(4 * dw, dw)),
            )?;
            t.insert(&format!("dec{layer}.b"), lstm_bias(dw))?;
        }
        t.insert(
            "embed.char",
            uniform_tensor(
                &mut rng,
                Shape::Matrix(config.vocab_size, config.char_embedding_dim),
            ),
        )?;
        t.insert(
            "out.w",
            uniform_tensor(
                &mut rng,
                Shape::Matrix(config.vocab_size, h_dim + config.decoder_width),
            ),
        )?;
        t.insert("out.b", Tensor::zeros(Shape::Vector(config.vocab_size)))?;
        if config.variant.has_lid_head() {
            t.insert(
                "lid.w",
                uniform_tensor(&mut rng, Shape::Matrix(config.num_languages, h_dim)),
            )?;
            t.insert("lid.b", Tensor::zeros(Shape::Vector(config.num_languages)))?;
        }
        if config.variant.conditions_encoder() {
            t.insert(
                "lang_embed.enc",
                uniform_tensor(
                    &mut rng,
                    Shape::Matrix(config.num_languages, config.lang_embedding_dim),
                ),
            )?;
        }
        if config.variant.conditions_decoder() {
            t.insert(
                "lang_embed.dec",
                uniform_tensor(
                    &mut rng,
                    Shape::Matrix(config.num_languages, config.lang_embedding_dim),
                ),
            )?;
        }
        Ok(LasParams {
            config,
            tensors: t,
            vocab_fingerprint,
        })
    }
}

/// Graph-bound parameter handles for one forward/backward pass, aligned
/// with the `NamedTensors` entry order for gradient extraction.
pub struct Bound {
    pub leaf_ids: Vec<ValueId>,
    pub enc: Vec<[LstmParamIds; 2]>,
    pub att_w_h: ValueId,
    pub att_w_d: ValueId,
    pub att_v: ValueId,
    pub att_b_a: ValueId,
    pub dec: Vec<LstmParamIds>,
    pub char_embed: ValueId,
    pub out_w: ValueId,
    pub out_b: ValueId,
    pub lid: Option<(ValueId, ValueId)>,
    pub lang_enc: Option<ValueId>,
    pub lang_dec: Option<ValueId>,
}

/// Insert every parameter as a graph leaf and collect typed handles.
pub fn bind(g: &mut Graph, params: &LasParams) -> Result<Bound> {
    bind_parts(g, &params.config, &params.tensors)
}

/// As `bind`, over a borrowed tensor set (the trainer evaluates noisy
/// parameter snapshots without building a full `LasParams`).
pub fn bind_parts(g: &mut Graph, cfg: &ModelConfig, tensors: &NamedTensors) -> Result<Bound> {
    let leaf_ids: Vec<ValueId> = tensors.iter().map(|(_, t)| g.tensor(t)).collect();
    bind_leaves(cfg, tensors, leaf_ids)
}

/// Resolve typed parameter handles over leaves that already live in a
/// graph (the gradient checker owns its leaves; `tensors` only supplies
/// the name-to-position mapping).
pub fn bind_leaves(
    cfg: &ModelConfig,
    tensors: &NamedTensors,
    leaf_ids: Vec<ValueId>,
) -> Result<Bound> {
    let id_of = |name: &str| -> Result<ValueId> {
        tensors
            .position(name)
            .map(|i| leaf_ids[i])
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
    };
    let mut enc = Vec::with_capacity(cfg.encoder_layers);
    for layer in 0..cfg.encoder_layers {
        let mut pair = Vec::with_capacity(2);
        for dir in ["fwd", "bwd"] {
            pair.push(LstmParamIds {
                w_x: id_of(&format!("enc{layer}.{dir}.w_x"))?,
                w_h: id_of(&format!("enc{layer}.{dir}.w_h"))?,
                bias: id_of(&format!("enc{layer}.{dir}.b"))?,
            });
        }
        enc.push([pair[0], pair[1]]);
    }
    let mut dec = Vec::with_capacity(cfg.decoder_layers);
    for layer in 0..cfg.decoder_layers {
        dec.push(LstmParamIds {
            w_x: id_of(&format!("dec{layer}.w_x"))?,
            w_h: id_of(&format!("dec{layer}.w_h"))?,
            bias: id_of(&format!("dec{layer}.b"))?,
        });
    }
    Ok(Bound {
        enc,
        att_w_h: id_of("att.w_h")?,
        att_w_d: id_of("att.w_d")?,
        att_v: id_of("att.v")?,
        att_b_a: id_of("att.b_a")?,
        dec,
        char_embed: id_of("embed.char")?,
        out_w: id_of("out.w")?,
        out_b: id_of("out.b")?,
        lid: if cfg.variant.has_lid_head() {
            Some((id_of("lid.w")?, id_of("lid.b")?))
        } else {
            None
        },
        lang_enc: if cfg.variant.conditions_encoder() {
            Some(id_of("lang_embed.enc")?)
        } else {
            None
        },
        lang_dec: if cfg.variant.conditions_decoder() {
            Some(id_of("lang_embed.dec")?)
        } else {
            None
        },
        leaf_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_shaped() {
        let cfg = ModelConfig::desk_default(Variant::Mtl, 16, 20, 3);
        let a = LasParams::init(cfg.clone(), 7, 1).unwrap();
        let b = LasParams::init(cfg, 7, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.tensors.get("lid.w").is_some());
        assert!(a.tensors.get("lang_embed.enc").is_none());
        let out_w = a.tensors.get("out.w").unwrap();
        assert_eq!(out_w.shape, Shape::Matrix(20, 48 + 32));
    }

    #[test]
    fn conditioned_variants_carry_embedding_tables() {
        let cfg = ModelConfig::desk_default(Variant::CondEncDec, 16, 20, 3);
        let p = LasParams::init(cfg, 7, 1).unwrap();
        assert!(p.tensors.get("lang_embed.enc").is_some());
        assert!(p.tensors.get("lang_embed.dec").is_some());
        assert!(p.tensors.get("lid.w").is_none());
        // Layer-1 inputs grow by the language-embedding width.
        let enc_wx = p.tensors.get("enc0.fwd.w_x").unwrap();
        assert_eq!(enc_wx.shape, Shape::Matrix(4 * 24, 16 + 5));
        let dec_wx = p.tensors.get("dec0.w_x").unwrap();
        assert_eq!(dec_wx.shape, Shape::Matrix(4 * 32, 12 + 48 + 5));
    }

    #[test]
    fn forget_gate_bias_starts_at_one() {
        let cfg = ModelConfig::desk_default(Variant::Joint, 16, 20, 3);
        let p = LasParams::init(cfg, 7, 1).unwrap();
        let b = p.tensors.get("enc0.fwd.b").unwrap();
        let w = 24;
        assert!(b.data[..w].iter().all(|&v| v == 0.0));
        assert!(b.data[w..2 * w].iter().all(|&v| v == 1.0));
        assert!(b.data[2 * w..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn variant_strings_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("bogus".parse::<Variant>().is_err());
    }

    #[test]
    fn config_validation_rejects_zero_dims() {
        let mut cfg = ModelConfig::desk_default(Variant::Joint, 16, 20, 3);
        cfg.encoder_width = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
