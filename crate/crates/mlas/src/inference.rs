//! Greedy and beam-search decoding over a trained model.

use crate::corpus::{stack_frames, FeatureSequence, Utterance};
use crate::error::{Error, Result};
use crate::langpack::{UnionVocab, EOS, PAD, SOS};
use crate::model::{
    attend, bind, decoder_step, encode, output_distribution, precompute_attention, Bound,
    DecoderState, EncoderStates, LasParams, ModelConfig,
};
use crate::numerics::{Graph, ValueId};

/// A decoded token sequence (excluding sos; ending at eos when the search
/// finished) with its accumulated log-probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    /// Set when the hypothesis hit the decode-length cap without emitting
    /// eos; such hypotheses are kept and flagged, not discarded.
    pub reached_max_length: bool,
    /// Attention weights per emitted token, retained on request.
    pub alignment: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug)]
pub struct BeamConfig {
    pub beam_width: usize,
    /// Decode-length cap; `None` applies `2 * stacked length + 10`.
    pub max_decode_length: Option<usize>,
    pub retain_alignment: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_width: 1,
            max_decode_length: None,
            retain_alignment: false,
        }
    }
}

/// Token conventions for decoding. The defaults follow the union-vocab
/// layout; the blocked list is the set of tokens the search may never
/// emit (pad and sos).
#[derive(Clone, Debug)]
pub struct TokenSemantics {
    pub sos: usize,
    pub eos: usize,
    pub blocked: Vec<usize>,
}

impl Default for TokenSemantics {
    fn default() -> Self {
        TokenSemantics {
            sos: SOS,
            eos: EOS,
            blocked: vec![PAD, SOS],
        }
    }
}

fn token_log_prob(p: f64) -> f64 {
    p.max(f64::MIN_POSITIVE).ln()
}

/// Per-utterance decode context: encoder ran once, attention projections
/// cached, decoder stepped on demand.
struct DecodeRun<'a> {
    g: Graph,
    bound: Bound,
    config: &'a ModelConfig,
    states: EncoderStates,
    projected: Vec<ValueId>,
    dec_lang: Option<usize>,
    zero_context: ValueId,
}

impl<'a> DecodeRun<'a> {
    fn start(
        params: &'a LasParams,
        feats: &FeatureSequence,
        lang: Option<usize>,
    ) -> Result<Self> {
        let config = &params.config;
        if config.variant.is_conditioned() != lang.is_some() {
            return Err(Error::Config(if lang.is_some() {
                "decode: language id given to a non-conditioned variant".into()
            } else {
                "decode: language id required for a conditioned variant".into()
            }));
        }
        let mut g = Graph::new();
        let bound = bind(&mut g, params)?;
        let enc_lang = config.variant.conditions_encoder().then_some(lang).flatten();
        let states = encode(&mut g, &bound, config, feats, enc_lang)?;
        let projected = precompute_attention(&mut g, &bound, &states)?;
        let zero_context = g.zeros(config.encoder_output_dim());
        Ok(DecodeRun {
            g,
            bound,
            config,
            states,
            projected,
            dec_lang: config.variant.conditions_decoder().then_some(lang).flatten(),
            zero_context,
        })
    }

    fn initial_state(&mut self) -> DecoderState {
        DecoderState::zeros(&mut self.g, self.config)
    }

    /// Advance one step: returns the posterior, attention weights, and the
    /// new recurrence state and context handle.
    fn step(
        &mut self,
        prev_token: usize,
        state: &DecoderState,
        context: ValueId,
    ) -> Result<(Vec<f64>, Vec<f64>, DecoderState, ValueId)> {
        let (d_t, next_state) = decoder_step(
            &mut self.g,
            &self.bound,
            self.config,
            prev_token,
            state,
            context,
            self.dec_lang,
        )?;
        let att = attend(&mut self.g, &self.bound, d_t, &self.states, &self.projected)?;
        let dist = output_distribution(&mut self.g, &self.bound, att.context, d_t)?;
        Ok((
            self.g.value(dist).to_vec(),
            self.g.value(att.alpha).to_vec(),
            next_state,
            att.context,
        ))
    }
}

fn default_max_len(stacked_frames: usize) -> usize {
    2 * stacked_frames + 10
}

fn argmax_allowed(probs: &[f64], blocked: &[usize]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &p) in probs.iter().enumerate() {
        if blocked.contains(&i) {
            continue;
        }
        // Strict comparison keeps the lowest index on exact ties.
        if best.map(|(_, bp)| p > bp).unwrap_or(true) {
            best = Some((i, p));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidArgument("all tokens blocked".into()))
}

/// Greedy decoding: the argmax token at each step, stopping at eos or the
/// length cap. Equivalent to beam search with width 1.
pub fn greedy_decode(
    params: &LasParams,
    feats: &FeatureSequence,
    lang: Option<usize>,
    semantics: &TokenSemantics,
    cfg: &BeamConfig,
) -> Result<Hypothesis> {
    let mut run = DecodeRun::start(params, feats, lang)?;
    let max_len = cfg.max_decode_length.unwrap_or_else(|| default_max_len(feats.num_frames()));
    let mut state = run.initial_state();
    let mut context = run.zero_context;
    let mut prev = semantics.sos;
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    let mut alignment = cfg.retain_alignment.then(Vec::new);
    let mut finished = false;
    for _ in 0..max_len {
        let (probs, alpha, next_state, next_context) = run.step(prev, &state, context)?;
        let tok = argmax_allowed(&probs, &semantics.blocked)?;
        log_prob += token_log_prob(probs[tok]);
        tokens.push(tok);
        if let Some(a) = alignment.as_mut() {
            a.push(alpha);
        }
        if tok == semantics.eos {
            finished = true;
            break;
        }
        state = next_state;
        context = next_context;
        prev = tok;
    }
    Ok(Hypothesis {
        tokens,
        log_prob,
        reached_max_length: !finished,
        alignment,
    })
}

struct LiveHyp {
    tokens: Vec<usize>,
    log_prob: f64,
    state: DecoderState,
    context: ValueId,
}

/// Standard beam expansion over the token posterior. Finished hypotheses
/// are retired; the result is ranked by total log-probability with ties
/// broken by token-index lexicographic order. No length normalization is
/// applied, so the ranking is exactly comparable with exhaustive
/// enumeration.
pub fn beam_search(
    params: &LasParams,
    feats: &FeatureSequence,
    lang: Option<usize>,
    semantics: &TokenSemantics,
    cfg: &BeamConfig,
) -> Result<Vec<Hypothesis>> {
    if cfg.beam_width < 1 {
        return Err(Error::InvalidArgument("beam width must be at least 1".into()));
    }
    let mut run = DecodeRun::start(params, feats, lang)?;
    let max_len = cfg.max_decode_length.unwrap_or_else(|| default_max_len(feats.num_frames()));
    let initial_state = run.initial_state();
    let mut live = vec![LiveHyp {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: initial_state,
        context: run.zero_context,
    }];
    let mut retired: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        // Expand every live hypothesis once, then rank all children.
        struct Child {
            parent: usize,
            token: usize,
            log_prob: f64,
        }
        let mut steps = Vec::with_capacity(live.len());
        let mut children: Vec<Child> = Vec::new();
        for (ix, hyp) in live.iter().enumerate() {
            let prev = *hyp.tokens.last().unwrap_or(&semantics.sos);
            let (probs, _alpha, next_state, next_context) =
                run.step(prev, &hyp.state, hyp.context)?;
            for (tok, &p) in probs.iter().enumerate() {
                if semantics.blocked.contains(&tok) {
                    continue;
                }
                children.push(Child {
                    parent: ix,
                    token: tok,
                    log_prob: hyp.log_prob + token_log_prob(p),
                });
            }
            steps.push((next_state, next_context));
        }
        children.sort_by(|a, b| {
            b.log_prob
                .partial_cmp(&a.log_prob)
                .unwrap()
                .then_with(|| {
                    let ta = (&live[a.parent].tokens, a.token);
                    let tb = (&live[b.parent].tokens, b.token);
                    ta.0.iter().chain(std::iter::once(&ta.1))
                        .cmp(tb.0.iter().chain(std::iter::once(&tb.1)))
                })
        });
        children.truncate(cfg.beam_width);

        let mut next_live = Vec::with_capacity(children.len());
        for child in children {
            let mut tokens = live[child.parent].tokens.clone();
            tokens.push(child.token);
            if child.token == semantics.eos {
                retired.push(Hypothesis {
                    tokens,
                    log_prob: child.log_prob,
                    reached_max_length: false,
                    alignment: None,
                });
            } else {
                let (state, context) = (
                    DecoderState {
                        layers: steps[child.parent].0.layers.clone(),
                    },
                    steps[child.parent].1,
                );
                next_live.push(LiveHyp {
                    tokens,
                    log_prob: child.log_prob,
                    state,
                    context,
                });
            }
        }
        live = next_live;
    }

    let mut pool = retired;
    for hyp in live {
        pool.push(Hypothesis {
            tokens: hyp.tokens,
            log_prob: hyp.log_prob,
            reached_max_length: true,
            alignment: None,
        });
    }
    pool.sort_by(|a, b| {
        b.log_prob
            .partial_cmp(&a.log_prob)
            .unwrap()
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    pool.truncate(cfg.beam_width);
    if pool.is_empty() {
        return Err(Error::InvalidArgument(
            "beam search produced no hypotheses (max decode length 0?)".into(),
        ));
    }
    Ok(pool)
}

/// Teacher-force a token sequence through the model and return its total
/// log-probability, mirroring the computation the searches accumulate.
pub fn score_tokens(
    params: &LasParams,
    feats: &FeatureSequence,
    lang: Option<usize>,
    semantics: &TokenSemantics,
    tokens: &[usize],
) -> Result<f64> {
    let mut run = DecodeRun::start(params, feats, lang)?;
    let mut state = run.initial_state();
    let mut context = run.zero_context;
    let mut prev = semantics.sos;
    let mut log_prob = 0.0;
    for &tok in tokens {
        let (probs, _alpha, next_state, next_context) = run.step(prev, &state, context)?;
        if tok >= probs.len() {
            return Err(Error::InvalidArgument(format!(
                "token {tok} out of range for vocab of {}",
                probs.len()
            )));
        }
        log_prob += token_log_prob(probs[tok]);
        state = next_state;
        context = next_context;
        prev = tok;
    }
    Ok(log_prob)
}

/// Convenience bundle for decoding utterances against a vocabulary.
pub struct DecodeSession<'a> {
    pub params: &'a LasParams,
    pub vocab: &'a UnionVocab,
    pub stack_window: usize,
    pub stack_stride: usize,
    pub beam: BeamConfig,
}

impl<'a> DecodeSession<'a> {
    pub fn new(params: &'a LasParams, vocab: &'a UnionVocab) -> Self {
        DecodeSession {
            params,
            vocab,
            stack_window: crate::trainer::STACK_WINDOW,
            stack_stride: crate::trainer::STACK_STRIDE,
            beam: BeamConfig::default(),
        }
    }

    /// Stack, decode, and render the top hypothesis as text.
    /// `lang_id` must name a registered language for conditioned variants
    /// and be absent otherwise.
    pub fn decode_utterance(
        &self,
        utt: &Utterance,
        lang_id: Option<&str>,
    ) -> Result<(String, Hypothesis)> {
        let stacked = stack_frames(&utt.features, self.stack_window, self.stack_stride)?;
        let lang = match lang_id {
            Some(id) => Some(self.vocab.language_index(id).ok_or_else(|| {
                Error::Registry(format!("unknown language {id:?}"))
            })?),
            None => None,
        };
        let semantics = TokenSemantics::default();
        let hyp = if self.beam.beam_width == 1 {
            greedy_decode(self.params, &stacked, lang, &semantics, &self.beam)?
        } else {
            beam_search(self.params, &stacked, lang, &semantics, &self.beam)?
                .into_iter()
                .next()
                .unwrap()
        };
        let text = self.vocab.decode_tokens(&hyp.tokens)?;
        Ok((text, hyp))
    }
}
