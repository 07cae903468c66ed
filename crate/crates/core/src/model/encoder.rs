//! Forward and backward passes of the CNN encoder and both output heads.
//!
//! A query's six context parts are each embedded, zero-padded up to the
//! filter width, convolved by the shared entity or context CNN and k-max
//! pooled. Entity 1 is classified from parts 0-2, entity 2 from parts 3-5
//! and the relation from all six; the pooled features of a part are
//! computed once and shared by every task that reads them.

use crate::corpus::LabelSpace;
use crate::crf::{self, LabelSequence};
use crate::error::{Error, Result};
use crate::math::ops::{Affine, Conv1d, KMaxPool, Tanh};
use crate::math::{pad_to_width, softmax, Matrix, ParamTensor};
use crate::querygen::{split_context, ContextSplit, Query};

use super::params::{slot, ModelParams, OutputLayer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Ec,
    Re,
}

/// Tokens of one query, already mapped to embedding rows.
#[derive(Debug, Clone, Copy)]
pub struct QueryInput<'a> {
    pub token_ids: &'a [usize],
    pub split: ContextSplit,
}

impl<'a> QueryInput<'a> {
    pub fn new(token_ids: &'a [usize], query: &Query) -> Result<Self> {
        Ok(QueryInput {
            token_ids,
            split: split_context(token_ids.len(), query.span_i, query.span_j)?,
        })
    }

    fn part(&self, p: usize) -> &'a [usize] {
        let s = self.split.parts()[p];
        &self.token_ids[s.start..s.end]
    }
}

/// Whether context part `p` (0..6) is an entity span.
fn is_entity_part(p: usize) -> bool {
    p == 1 || p == 4
}

/// Context and entity part indices read by each output position.
const POSITION_PARTS: [(&[usize], &[usize]); 3] = [(&[0, 2], &[1]), (&[0, 2, 3, 5], &[1, 4]), (&[3, 5], &[4])];

/// Deliberate corruptions of backward passes, used to verify that the
/// gradient checker catches them.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Uses `1 - h` instead of `1 - h^2` in every tanh backward.
    TanhBackward,
}

#[derive(Debug, Clone)]
struct PartTape {
    tokens: Vec<usize>,
    conv: Conv1d,
    pool: KMaxPool,
}

#[derive(Debug, Clone, Default)]
struct HiddenTape {
    ctx: Affine,
    ctx_act: Tanh,
    ent: Affine,
    ent_act: Tanh,
    out: Affine,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    parts: Vec<PartTape>,
    pooled: Vec<Vec<f64>>,
    positions: Vec<HiddenTape>,
    hidden: Vec<Vec<f64>>,
    /// The score sequence `[v_EC(e1); v_RE(r); v_EC(e2)]`, `3 x N`.
    pub scores: Matrix,
}

impl Tape {
    /// Hidden representation `h_z` feeding output row `position`.
    pub fn hidden(&self, position: usize) -> &[f64] {
        &self.hidden[position]
    }

    /// Flattened k-max pooled features of context part `p`.
    pub fn pooled(&self, p: usize) -> &[f64] {
        &self.pooled[p]
    }
}

fn embed(params: &ModelParams, tokens: &[usize]) -> Matrix {
    let table = params.value(slot::EMBEDDINGS);
    let dim = table.cols();
    let mut m = Matrix::zeros(tokens.len(), dim);
    for (r, &t) in tokens.iter().enumerate() {
        m.row_mut(r).copy_from_slice(table.row(t));
    }
    m
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn task_slots(task: Task) -> (usize, usize, usize, usize, usize) {
    match task {
        Task::Ec => (
            slot::EC_CONTEXT_W,
            slot::EC_CONTEXT_B,
            slot::EC_ENTITY_W,
            slot::EC_ENTITY_B,
            slot::EC_OUTPUT,
        ),
        Task::Re => (
            slot::RE_CONTEXT_W,
            slot::RE_CONTEXT_B,
            slot::RE_ENTITY_W,
            slot::RE_ENTITY_B,
            slot::RE_OUTPUT,
        ),
    }
}

fn position_task(position: usize) -> Task {
    if position == 1 {
        Task::Re
    } else {
        Task::Ec
    }
}

/// Embeds, pads, convolves and pools one token sequence with the entity or
/// context CNN; returns the flattened `k x nk` features.
pub fn encode_part(params: &ModelParams, tokens: &[usize], entity: bool) -> Result<Vec<f64>> {
    Ok(run_part(params, tokens, entity)?.1)
}

fn run_part(params: &ModelParams, tokens: &[usize], entity: bool) -> Result<(PartTape, Vec<f64>)> {
    let h = &params.hyper;
    let (width, fslot, bslot) = if entity {
        (h.entity_width, slot::ENTITY_FILTERS, slot::ENTITY_BIAS)
    } else {
        (h.context_width, slot::CONTEXT_FILTERS, slot::CONTEXT_BIAS)
    };
    let seq = pad_to_width(&embed(params, tokens), width);
    let mut conv = Conv1d::new(width);
    let conved = conv.forward(&seq, params.value(fslot), params.value(bslot).as_slice())?;
    let mut pool = KMaxPool::new(h.k);
    let pooled = pool.forward(&conved).into_vec();
    Ok((
        PartTape {
            tokens: tokens.to_vec(),
            conv,
            pool,
        },
        pooled,
    ))
}

/// `h_z` for a task from pooled part features: context group and entity
/// group each pass through their own tanh layer; the outputs concatenate.
fn run_hidden(params: &ModelParams, task: Task, ctx_in: &[f64], ent_in: &[f64]) -> Result<(HiddenTape, Vec<f64>)> {
    let (cw, cb, ew, eb, _) = task_slots(task);
    let mut tape = HiddenTape::default();
    let c = tape.ctx.forward(params.value(cw), Some(params.value(cb).as_slice()), ctx_in)?;
    let c = tape.ctx_act.forward(&c);
    let e = tape.ent.forward(params.value(ew), Some(params.value(eb).as_slice()), ent_in)?;
    let e = tape.ent_act.forward(&e);
    Ok((tape, concat(&[&c, &e])))
}

/// Hidden representation of one task from its parts: 3 parts
/// (left, entity, right) for EC, the 6-part split for RE.
pub fn encode_task(params: &ModelParams, parts: &[&[usize]], task: Task) -> Result<Vec<f64>> {
    let expected = match task {
        Task::Ec => 3,
        Task::Re => 6,
    };
    if parts.len() != expected {
        return Err(Error::Contract(format!(
            "{task:?} expects {expected} parts, got {}",
            parts.len()
        )));
    }
    let pooled: Vec<Vec<f64>> = parts
        .iter()
        .enumerate()
        .map(|(p, toks)| encode_part(params, toks, p % 3 == 1))
        .collect::<Result<_>>()?;
    let (ctx, ent): (Vec<&[f64]>, Vec<&[f64]>) = match task {
        Task::Ec => (vec![&pooled[0], &pooled[2]], vec![&pooled[1]]),
        Task::Re => (
            vec![&pooled[0], &pooled[2], &pooled[3], &pooled[5]],
            vec![&pooled[1], &pooled[4]],
        ),
    };
    Ok(run_hidden(params, task, &concat(&ctx), &concat(&ent))?.1)
}

/// `v_z = W_z h_z` over the unified label space.
pub fn score_task(params: &ModelParams, hidden: &[f64], task: Task) -> Result<Vec<f64>> {
    let (.., out) = task_slots(task);
    crate::math::matvec(params.value(out), hidden)
}

/// Runs the encoder on one query and records the tape.
pub fn forward(params: &ModelParams, input: &QueryInput<'_>) -> Result<Tape> {
    let mut parts = Vec::with_capacity(6);
    let mut pooled = Vec::with_capacity(6);
    for p in 0..6 {
        let (tape, feats) = run_part(params, input.part(p), is_entity_part(p))?;
        parts.push(tape);
        pooled.push(feats);
    }
    let mut positions = Vec::with_capacity(3);
    let mut hidden = Vec::with_capacity(3);
    let mut scores = Matrix::zeros(3, LabelSpace::N);
    for (pos, (ctx_parts, ent_parts)) in POSITION_PARTS.iter().enumerate() {
        let task = position_task(pos);
        let ctx: Vec<&[f64]> = ctx_parts.iter().map(|&p| pooled[p].as_slice()).collect();
        let ent: Vec<&[f64]> = ent_parts.iter().map(|&p| pooled[p].as_slice()).collect();
        let (mut tape, h) = run_hidden(params, task, &concat(&ctx), &concat(&ent))?;
        let (.., out) = task_slots(task);
        let v = tape.out.forward(params.value(out), None, &h)?;
        scores.row_mut(pos).copy_from_slice(&v);
        positions.push(tape);
        hidden.push(h);
    }
    Ok(Tape {
        parts,
        pooled,
        positions,
        hidden,
        scores,
    })
}

/// The `3 x N` score sequence of one query.
pub fn forward_query(params: &ModelParams, input: &QueryInput<'_>) -> Result<Matrix> {
    Ok(forward(params, input)?.scores)
}

fn tanh_backward(act: &Tanh, upstream: &[f64], fault: Option<Fault>) -> Result<Vec<f64>> {
    match fault {
        Some(Fault::TanhBackward) => {
            let h = act.output().ok_or(Error::State("tanh"))?;
            Ok(h.iter().zip(upstream).map(|(h, g)| (1.0 - h) * g).collect())
        }
        None => act.backward(upstream),
    }
}

fn split_tensor(tensors: &mut [ParamTensor], slot: usize) -> (&Matrix, &mut Matrix) {
    let t = &mut tensors[slot];
    (&t.value, &mut t.grad)
}

/// Back-propagates `grad_scores` (`3 x N`) through the tape, accumulating
/// into the parameter gradient buffers.
pub fn backward(params: &mut ModelParams, tape: &Tape, grad_scores: &Matrix) -> Result<()> {
    backward_impl(params, tape, grad_scores, None)
}

#[doc(hidden)]
pub fn backward_impl(params: &mut ModelParams, tape: &Tape, grad_scores: &Matrix, fault: Option<Fault>) -> Result<()> {
    if grad_scores.shape() != tape.scores.shape() {
        return Err(Error::shape("encoder backward", tape.scores.shape_str(), grad_scores.shape_str()));
    }
    let h = params.hyper;
    let k = h.k;
    let mut dpooled: Vec<Vec<f64>> = tape.pooled.iter().map(|p| vec![0.0; p.len()]).collect();

    for (pos, (ctx_parts, ent_parts)) in POSITION_PARTS.iter().enumerate() {
        let task = position_task(pos);
        let (cw, cb, ew, eb, out) = task_slots(task);
        let pt = &tape.positions[pos];
        let tensors = &mut params.tensors;

        let (w, dw) = split_tensor(tensors, out);
        let dh = pt.out.backward_into(w, grad_scores.row(pos), dw, None)?;
        let (dc, de) = dh.split_at(h.h_c);

        let dc = tanh_backward(&pt.ctx_act, dc, fault)?;
        let mut bias_grad = vec![0.0; h.h_c];
        let (w, dw) = split_tensor(tensors, cw);
        let dctx = pt.ctx.backward_into(w, &dc, dw, Some(&mut bias_grad))?;
        add_into(tensors[cb].grad.as_mut_slice(), &bias_grad);

        let de = tanh_backward(&pt.ent_act, de, fault)?;
        let mut bias_grad = vec![0.0; h.h_e];
        let (w, dw) = split_tensor(tensors, ew);
        let dent = pt.ent.backward_into(w, &de, dw, Some(&mut bias_grad))?;
        add_into(tensors[eb].grad.as_mut_slice(), &bias_grad);

        for (chunk, &p) in dctx.chunks(k * h.nk_c).zip(ctx_parts.iter()) {
            add_into(&mut dpooled[p], chunk);
        }
        for (chunk, &p) in dent.chunks(k * h.nk_e).zip(ent_parts.iter()) {
            add_into(&mut dpooled[p], chunk);
        }
    }

    for (p, part) in tape.parts.iter().enumerate() {
        let (nk, fslot, bslot) = if is_entity_part(p) {
            (h.nk_e, slot::ENTITY_FILTERS, slot::ENTITY_BIAS)
        } else {
            (h.nk_c, slot::CONTEXT_FILTERS, slot::CONTEXT_BIAS)
        };
        let up = Matrix::from_vec(k, nk, std::mem::take(&mut dpooled[p]))?;
        let dconv = part.pool.backward(&up)?;
        let mut bias_grad = vec![0.0; nk];
        let (f, df) = split_tensor(&mut params.tensors, fslot);
        let dseq = part.conv.backward_into(f, &dconv, df, &mut bias_grad)?;
        add_into(params.tensors[bslot].grad.as_mut_slice(), &bias_grad);

        if params.embeddings_trainable {
            let demb = &mut params.tensors[slot::EMBEDDINGS].grad;
            // padding rows past the real tokens carry no parameters
            for (r, &tok) in part.tokens.iter().enumerate() {
                add_into(demb.row_mut(tok), dseq.row(r));
            }
        }
    }
    Ok(())
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// Per-task class distributions of the softmax baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxOutput {
    pub p1: Vec<f64>,
    pub pr: Vec<f64>,
    pub p2: Vec<f64>,
}

/// Normalizes the entity slice of rows 0 and 2 and the relation slice of
/// row 1 independently.
pub fn softmax_from_scores(scores: &Matrix) -> SoftmaxOutput {
    let ec = LabelSpace::ec_range();
    let re = LabelSpace::re_range();
    SoftmaxOutput {
        p1: softmax(&scores.row(0)[ec.clone()]),
        pr: softmax(&scores.row(1)[re]),
        p2: softmax(&scores.row(2)[ec]),
    }
}

pub fn softmax_forward(params: &ModelParams, input: &QueryInput<'_>) -> Result<SoftmaxOutput> {
    Ok(softmax_from_scores(&forward(params, input)?.scores))
}

/// Loss, gradient w.r.t. the score sequence, and (CRF only) gradient
/// w.r.t. the transitions for the configured head.
pub fn head_loss(params: &ModelParams, scores: &Matrix, gold: &LabelSequence) -> Result<(f64, Matrix, Option<Matrix>)> {
    match params.hyper.output {
        OutputLayer::Crf => {
            let out = crf::nll_and_gradients(scores, params.transitions(), gold)?;
            Ok((out.loss, out.grad_d, Some(out.grad_q)))
        }
        OutputLayer::Softmax => {
            let probs = softmax_from_scores(scores);
            let mut grad = Matrix::zeros(3, LabelSpace::N);
            let mut loss = 0.0;
            let slices = [
                (&probs.p1, LabelSpace::ec_range()),
                (&probs.pr, LabelSpace::re_range()),
                (&probs.p2, LabelSpace::ec_range()),
            ];
            for (pos, (p, range)) in slices.into_iter().enumerate() {
                let target = gold[pos]
                    .checked_sub(range.start)
                    .filter(|&t| t < p.len())
                    .ok_or_else(|| Error::Contract(format!("gold class {} invalid at position {pos}", gold[pos])))?;
                loss -= p[target].max(f64::MIN_POSITIVE).ln();
                for (i, &pi) in p.iter().enumerate() {
                    grad[(pos, range.start + i)] = pi - if i == target { 1.0 } else { 0.0 };
                }
            }
            Ok((loss, grad, None))
        }
    }
}

/// Forward, loss and backward for one query; gradients accumulate into
/// `params`. Returns the loss.
pub fn accumulate_gradients(params: &mut ModelParams, input: &QueryInput<'_>, gold: &LabelSequence) -> Result<f64> {
    accumulate_gradients_impl(params, input, gold, None)
}

#[doc(hidden)]
pub fn accumulate_gradients_impl(
    params: &mut ModelParams,
    input: &QueryInput<'_>,
    gold: &LabelSequence,
    fault: Option<Fault>,
) -> Result<f64> {
    let tape = forward(params, input)?;
    let (loss, grad, grad_q) = head_loss(params, &tape.scores, gold)?;
    if let Some(gq) = grad_q {
        params.tensors[slot::TRANSITIONS].grad.axpy(1.0, &gq)?;
    }
    backward_impl(params, &tape, &grad, fault)?;
    Ok(loss)
}

pub fn query_loss(params: &ModelParams, input: &QueryInput<'_>, gold: &LabelSequence) -> Result<f64> {
    let tape = forward(params, input)?;
    Ok(head_loss(params, &tape.scores, gold)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: LabelSequence,
    /// Path score under the CRF, summed log-probabilities for softmax.
    pub score: f64,
    pub scores: Matrix,
}

/// Decodes one query: Viterbi for the CRF head (optionally restricted to
/// position-valid classes), per-slice argmax for softmax.
pub fn predict(params: &ModelParams, input: &QueryInput<'_>, masked: bool) -> Result<Prediction> {
    let tape = forward(params, input)?;
    let scores = tape.scores;
    match params.hyper.output {
        OutputLayer::Crf => {
            let (labels, score) = if masked {
                crf::viterbi_masked(&scores, params.transitions(), LabelSpace::N_EC)?
            } else {
                crf::viterbi(&scores, params.transitions())?
            };
            Ok(Prediction { labels, score, scores })
        }
        OutputLayer::Softmax => {
            let probs = softmax_from_scores(&scores);
            let argmax = |p: &[f64]| {
                p.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            };
            let (a, pa) = argmax(&probs.p1);
            let (r, pr) = argmax(&probs.pr);
            let (b, pb) = argmax(&probs.p2);
            Ok(Prediction {
                labels: [a, LabelSpace::N_EC + r, b],
                score: pa.ln() + pr.ln() + pb.ln(),
                scores,
            })
        }
    }
}
