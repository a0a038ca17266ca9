//! Network forward passes as graph-building functions. Building a node
//! computes its value eagerly, so the same code serves training (with
//! `backward`) and inference (forward only).

use crate::corpus::FeatureSequence;
use crate::error::{Error, Result};
use crate::langpack::{EOS, SOS};
use crate::model::{Bound, ModelConfig};
use crate::numerics::{lstm_step, Graph, LstmState, ValueId};

/// Encoder output: one hidden vector per stacked input frame, each the
/// concatenation of the forward and backward states at that frame.
pub struct EncoderStates {
    pub h: Vec<ValueId>,
}

impl EncoderStates {
    pub fn valid_length(&self) -> usize {
        self.h.len()
    }
}

fn check_conditioning(
    what: &str,
    conditioned: bool,
    lang: Option<usize>,
    num_languages: usize,
) -> Result<()> {
    match (conditioned, lang) {
        (true, None) => Err(Error::Config(format!(
            "{what}: language id required for a conditioned variant"
        ))),
        (false, Some(_)) => Err(Error::Config(format!(
            "{what}: language id given to a non-conditioned variant"
        ))),
        (true, Some(ix)) if ix >= num_languages => Err(Error::Config(format!(
            "{what}: language index {ix} out of range for {num_languages} languages"
        ))),
        _ => Ok(()),
    }
}

/// Run the stacked bidirectional encoder over stacked features.
///
/// `lang` must be present exactly when the variant conditions the encoder;
/// the language embedding is then concatenated to every input frame of the
/// first layer only.
pub fn encode(
    g: &mut Graph,
    bound: &Bound,
    config: &ModelConfig,
    feats: &FeatureSequence,
    lang: Option<usize>,
) -> Result<EncoderStates> {
    check_conditioning(
        "encode",
        config.variant.conditions_encoder(),
        lang,
        config.num_languages,
    )?;
    if feats.dim() != config.input_dim {
        return Err(Error::Shape(format!(
            "encode: feature dim {} does not match configured input dim {}",
            feats.dim(),
            config.input_dim
        )));
    }
    let lang_row = match (lang, bound.lang_enc) {
        (Some(ix), Some(table)) => Some(g.row(table, ix)?),
        _ => None,
    };
    let mut inputs: Vec<ValueId> = Vec::with_capacity(feats.num_frames());
    for frame in feats.frames() {
        let x = g.vector(frame.to_vec());
        let x = match lang_row {
            Some(embed) => g.concat(&[x, embed])?,
            None => x,
        };
        inputs.push(x);
    }

    let width = config.encoder_width;
    for layer_params in &bound.enc {
        let k = inputs.len();
        let mut forward = Vec::with_capacity(k);
        let mut state = LstmState::zeros(g, width);
        for &x in &inputs {
            state = lstm_step(g, x, &state, &layer_params[0])?;
            forward.push(state.hidden);
        }
        let mut backward = vec![None; k];
        let mut state = LstmState::zeros(g, width);
        for t in (0..k).rev() {
            state = lstm_step(g, inputs[t], &state, &layer_params[1])?;
            backward[t] = Some(state.hidden);
        }
        let mut outputs = Vec::with_capacity(k);
        for t in 0..k {
            outputs.push(g.concat(&[forward[t], backward[t].unwrap()])?);
        }
        inputs = outputs;
    }
    Ok(EncoderStates { h: inputs })
}

/// Result of one attention query.
pub struct Attend {
    /// Pre-softmax scores, retained for inspection and plotting.
    pub scores: ValueId,
    pub alpha: ValueId,
    pub context: ValueId,
}

/// Project every encoder state through the attention's encoder matrix
/// once per utterance; the projections are reused at every decode step.
pub fn precompute_attention(
    g: &mut Graph,
    bound: &Bound,
    states: &EncoderStates,
) -> Result<Vec<ValueId>> {
    states
        .h
        .iter()
        .map(|&h| g.matvec(bound.att_w_h, h))
        .collect()
}

/// Additive attention: `u_i = v . tanh(W_h h_i + W_d d_t + b_a)`,
/// `alpha = softmax(u)`, `context = sum_i alpha_i h_i`.
pub fn attend(
    g: &mut Graph,
    bound: &Bound,
    d_t: ValueId,
    states: &EncoderStates,
    projected: &[ValueId],
) -> Result<Attend> {
    if projected.len() != states.h.len() {
        return Err(Error::Shape(format!(
            "attend: {} projections for {} states",
            projected.len(),
            states.h.len()
        )));
    }
    let query = g.matvec(bound.att_w_d, d_t)?;
    let mut scores = Vec::with_capacity(states.h.len());
    for &proj in projected {
        let pre = g.add_n(&[proj, query, bound.att_b_a])?;
        let act = g.tanh(pre);
        scores.push(g.dot(bound.att_v, act)?);
    }
    let scores = g.concat(&scores)?;
    let alpha = g.softmax(scores)?;
    let context = g.weighted_sum(alpha, &states.h)?;
    Ok(Attend {
        scores,
        alpha,
        context,
    })
}

/// Decoder recurrence state, one LSTM state per layer.
pub struct DecoderState {
    pub layers: Vec<LstmState>,
}

impl DecoderState {
    pub fn zeros(g: &mut Graph, config: &ModelConfig) -> Self {
        DecoderState {
            layers: (0..config.decoder_layers)
                .map(|_| LstmState::zeros(g, config.decoder_width))
                .collect(),
        }
    }
}

/// One decoder step: layer-1 input is the concatenation of the previous
/// token's character embedding, the previous context vector, and (for
/// decoder-conditioned variants) the language embedding. Returns the
/// top-layer hidden state and the new recurrence state.
pub fn decoder_step(
    g: &mut Graph,
    bound: &Bound,
    config: &ModelConfig,
    prev_token: usize,
    prev_state: &DecoderState,
    prev_context: ValueId,
    lang: Option<usize>,
) -> Result<(ValueId, DecoderState)> {
    check_conditioning(
        "decoder_step",
        config.variant.conditions_decoder(),
        lang,
        config.num_languages,
    )?;
    let embed = g.row(bound.char_embed, prev_token)?;
    let mut parts = vec![embed, prev_context];
    if let (Some(ix), Some(table)) = (lang, bound.lang_dec) {
        parts.push(g.row(table, ix)?);
    }
    let mut x = g.concat(&parts)?;
    let mut layers = Vec::with_capacity(prev_state.layers.len());
    for (state, params) in prev_state.layers.iter().zip(&bound.dec) {
        let next = lstm_step(g, x, state, params)?;
        x = next.hidden;
        layers.push(next);
    }
    Ok((x, DecoderState { layers }))
}

/// Posterior over the vocabulary: `softmax(W_s [c_t; d_t] + b_s)`.
pub fn output_distribution(
    g: &mut Graph,
    bound: &Bound,
    context: ValueId,
    d_t: ValueId,
) -> Result<ValueId> {
    let joined = g.concat(&[context, d_t])?;
    let logits = g.matvec(bound.out_w, joined)?;
    let logits = g.add(logits, bound.out_b)?;
    g.softmax(logits)
}

/// Teacher-forced sequence loss: the sum over positions of the
/// cross-entropy of each target token, with the target sequence being the
/// transcript tokens followed by eos. The first decoder input is sos, the
/// initial context and decoder state are zero.
pub fn las_loss(
    g: &mut Graph,
    bound: &Bound,
    config: &ModelConfig,
    feats: &FeatureSequence,
    targets: &[usize],
    lang: Option<usize>,
) -> Result<ValueId> {
    check_conditioning(
        "las_loss",
        config.variant.is_conditioned(),
        lang,
        config.num_languages,
    )?;
    let enc_lang = config.variant.conditions_encoder().then_some(lang).flatten();
    let states = encode(g, bound, config, feats, enc_lang)?;
    las_loss_over_states(g, bound, config, &states, targets, lang)
}

/// As `las_loss`, reusing already-computed encoder states.
pub fn las_loss_over_states(
    g: &mut Graph,
    bound: &Bound,
    config: &ModelConfig,
    states: &EncoderStates,
    targets: &[usize],
    lang: Option<usize>,
) -> Result<ValueId> {
    let dec_lang = config.variant.conditions_decoder().then_some(lang).flatten();
    let projected = precompute_attention(g, bound, states)?;
    let mut labels: Vec<usize> = targets.to_vec();
    labels.push(EOS);

    let mut state = DecoderState::zeros(g, config);
    let mut context = g.zeros(config.encoder_output_dim());
    let mut prev_token = SOS;
    let mut terms = Vec::with_capacity(labels.len());
    for &label in &labels {
        let (d_t, next_state) =
            decoder_step(g, bound, config, prev_token, &state, context, dec_lang)?;
        let att = attend(g, bound, d_t, states, &projected)?;
        let dist = output_distribution(g, bound, att.context, d_t)?;
        terms.push(g.cross_entropy(dist, label)?);
        state = next_state;
        context = att.context;
        prev_token = label;
    }
    g.add_n(&terms)
}

/// Language-identification loss for the multitask variant: the encoder
/// output is averaged over the valid frames, passed through the LID head
/// and scored against the true language. Returns the loss and the
/// predicted distribution.
pub fn lid_loss(
    g: &mut Graph,
    bound: &Bound,
    states: &EncoderStates,
    true_language: usize,
) -> Result<(ValueId, ValueId)> {
    let (w, b) = bound
        .lid
        .ok_or_else(|| Error::Config("lid_loss called on a variant without a LID head".into()))?;
    let mean = g.mean(&states.h)?;
    let logits = g.matvec(w, mean)?;
    let logits = g.add(logits, b)?;
    let dist = g.softmax(logits)?;
    let loss = g.cross_entropy(dist, true_language)?;
    Ok((loss, dist))
}

/// Convex combination weights `(1/(1+lambda), lambda/(1+lambda))`. The
/// second coefficient is computed as the complement of the first so the
/// pair sums to exactly 1.0 in floating point.
pub fn mtl_weights(lambda: f64) -> Result<(f64, f64)> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda {lambda}")));
    }
    let a = 1.0 / (1.0 + lambda);
    Ok((a, 1.0 - a))
}

/// Combined multitask loss.
pub fn mtl_loss(g: &mut Graph, las: ValueId, lid: ValueId, lambda: f64) -> Result<ValueId> {
    let (a, b) = mtl_weights(lambda)?;
    let sa = g.scale(las, a);
    let sb = g.scale(lid, b);
    g.add(sa, sb)
}

/// Per-utterance training loss with its components.
pub struct LossBreakdown {
    pub total: ValueId,
    pub las: ValueId,
    pub lid: Option<ValueId>,
}

/// The full training objective for one utterance. `lang_index` is the
/// ground-truth language: it conditions the model when the variant calls
/// for it and is the LID target for the multitask variant; the joint
/// variant ignores it.
pub fn training_loss(
    g: &mut Graph,
    bound: &Bound,
    config: &ModelConfig,
    feats: &FeatureSequence,
    targets: &[usize],
    lang_index: usize,
) -> Result<LossBreakdown> {
    let lang = config.variant.is_conditioned().then_some(lang_index);
    let enc_lang = config.variant.conditions_encoder().then_some(lang_index);
    let states = encode(g, bound, config, feats, enc_lang)?;
    let las = las_loss_over_states(g, bound, config, &states, targets, lang)?;
    if config.variant.has_lid_head() {
        let (lid, _) = lid_loss(g, bound, &states, lang_index)?;
        let total = mtl_loss(g, las, lid, config.lambda)?;
        Ok(LossBreakdown {
            total,
            las,
            lid: Some(lid),
        })
    } else {
        Ok(LossBreakdown {
            total: las,
            las,
            lid: None,
        })
    }
}
