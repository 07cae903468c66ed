use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{EcLabel, EmbeddingTable, ReLabel, Span};
use crate::error::Result;
use crate::model::encoder::{accumulate_gradients_impl, Fault};
use crate::model::{init_params, query_loss, HyperParams, ModelParams, OutputLayer, QueryInput};
use crate::querygen::{Query, Setup};

/// Something with a flat parameter vector, grouped into named tensors.
pub trait Differentiable {
    /// `(name, entries)` per group, in flat order.
    fn groups(&self) -> Vec<(String, usize)>;
    fn get(&self, i: usize) -> f64;
    fn set(&mut self, i: usize, v: f64);
    fn loss(&mut self) -> Result<f64>;
    fn gradient(&mut self) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &TensorCheck> {
        self.tensors.iter().filter(|t| !t.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tensors {
            writeln!(
                f,
                "{:<20} {:>6} entries  max rel {:.3e}  max abs {:.3e}  {}",
                t.name,
                t.entries,
                t.max_rel_error,
                t.max_abs_error,
                if t.passed { "ok" } else { "FAIL" }
            )?;
        }
        write!(
            f,
            "gradient check {} at tolerance {:e}",
            if self.passed { "passed" } else { "FAILED" },
            self.tolerance
        )
    }
}

/// Relative error. The denominator is floored at 1e-4 because central
/// differences of a summed loss carry about 1e-9 of roundoff; entries with
/// smaller gradients are effectively held to an absolute error of 1e-8.
fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

/// Compares `gradient()` with central differences of `loss()` for every
/// entry. A target without parameters passes.
pub fn check_gradients<D: Differentiable>(target: &mut D, epsilon: f64, tolerance: f64) -> Result<GradCheckReport> {
    let analytic = target.gradient()?;
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, entries) in target.groups() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for (i, &a) in analytic.iter().enumerate().skip(offset).take(entries) {
            let orig = target.get(i);
            target.set(i, orig + epsilon);
            let plus = target.loss()?;
            target.set(i, orig - epsilon);
            let minus = target.loss()?;
            target.set(i, orig);
            let numeric = (plus - minus) / (2.0 * epsilon);
            max_rel = max_rel.max(rel_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        offset += entries;
        tensors.push(TensorCheck {
            name,
            entries,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            passed: max_rel < tolerance,
        });
    }
    let passed = tensors.iter().all(|t| t.passed);
    Ok(GradCheckReport {
        tolerance,
        tensors,
        passed,
    })
}

/// Summed query loss plus `l2 / 2 * ||theta||^2` over trainable tensors.
struct ModelObjective<'a> {
    params: &'a mut ModelParams,
    queries: &'a [(Vec<usize>, Query)],
    l2: f64,
    fault: Option<Fault>,
    /// `(tensor slot, entries)` of the tensors under test.
    layout: Vec<(usize, usize)>,
}

impl<'a> ModelObjective<'a> {
    fn new(params: &'a mut ModelParams, queries: &'a [(Vec<usize>, Query)], l2: f64, fault: Option<Fault>) -> Self {
        let layout = (0..params.tensors.len())
            .filter(|&s| params.is_trainable(s))
            .map(|s| (s, params.tensors[s].value.len()))
            .collect();
        ModelObjective {
            params,
            queries,
            l2,
            fault,
            layout,
        }
    }

    fn locate(&self, mut i: usize) -> (usize, usize) {
        for &(slot, n) in &self.layout {
            if i < n {
                return (slot, i);
            }
            i -= n;
        }
        panic!("parameter index out of range")
    }
}

impl Differentiable for ModelObjective<'_> {
    fn groups(&self) -> Vec<(String, usize)> {
        self.layout
            .iter()
            .map(|&(s, n)| (self.params.tensors[s].name.clone(), n))
            .collect()
    }

    fn get(&self, i: usize) -> f64 {
        let (s, j) = self.locate(i);
        self.params.tensors[s].value.as_slice()[j]
    }

    fn set(&mut self, i: usize, v: f64) {
        let (s, j) = self.locate(i);
        self.params.tensors[s].value.as_mut_slice()[j] = v;
    }

    fn loss(&mut self) -> Result<f64> {
        let mut total = 0.0;
        for (ids, q) in self.queries {
            total += query_loss(self.params, &QueryInput::new(ids, q)?, &q.gold_sequence())?;
        }
        let reg: f64 = self
            .layout
            .iter()
            .map(|&(s, _)| self.params.tensors[s].value.as_slice().iter().map(|v| v * v).sum::<f64>())
            .sum();
        Ok(total + 0.5 * self.l2 * reg)
    }

    fn gradient(&mut self) -> Result<Vec<f64>> {
        self.params.zero_grads();
        for (ids, q) in self.queries {
            accumulate_gradients_impl(self.params, &QueryInput::new(ids, q)?, &q.gold_sequence(), self.fault)?;
        }
        let mut g = Vec::new();
        for &(s, _) in &self.layout {
            let t = &self.params.tensors[s];
            g.extend(t.grad.as_slice().iter().zip(t.value.as_slice()).map(|(g, v)| g + self.l2 * v));
        }
        self.params.zero_grads();
        Ok(g)
    }
}

/// Checks every trainable tensor of `params` on the given queries.
pub fn grad_check_model(
    params: &mut ModelParams,
    queries: &[(Vec<usize>, Query)],
    l2: f64,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    check_gradients(&mut ModelObjective::new(params, queries, l2, None), epsilon, tolerance)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub hyper: HyperParams,
    pub vocab: usize,
    pub n_queries: usize,
    pub l2: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub seed: u64,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

impl GradCheckConfig {
    pub fn tiny(output: OutputLayer) -> Self {
        GradCheckConfig {
            hyper: HyperParams {
                nk_c: 3,
                nk_e: 2,
                h_c: 3,
                h_e: 2,
                k: 3,
                emb_dim: 4,
                context_width: 3,
                entity_width: 2,
                output,
            },
            vocab: 12,
            n_queries: 5,
            l2: 1e-3,
            epsilon: 1e-5,
            tolerance: 1e-4,
            seed: 7,
            fault: None,
        }
    }
}

/// Random sentence with two ordered, disjoint spans and a random gold
/// triple.
fn random_query(rng: &mut ChaCha8Rng, vocab: usize) -> (Vec<usize>, Query) {
    let len = rng.gen_range(2..=9);
    let ids = (0..len).map(|_| rng.gen_range(0..vocab)).collect();
    let a = rng.gen_range(0..len - 1);
    let a_end = rng.gen_range(a + 1..len);
    let b = rng.gen_range(a_end..len);
    let b_end = rng.gen_range(b + 1..=len);
    let q = Query {
        sentence: 0,
        row_i: 0,
        row_j: 1,
        span_i: Span::new(a, a_end),
        span_j: Span::new(b, b_end),
        gold_t1: EcLabel::ALL[rng.gen_range(0..EcLabel::ALL.len())],
        gold_rel: ReLabel::ALL[rng.gen_range(0..ReLabel::ALL.len())],
        gold_t2: EcLabel::ALL[rng.gen_range(0..EcLabel::ALL.len())],
        inverse: false,
        setup: Setup::EntityPairs,
    };
    (ids, q)
}

/// Fresh random model and queries, every trainable tensor checked.
pub fn grad_check(config: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let words: Vec<String> = (1..config.vocab).map(|i| format!("w{i}")).collect();
    let emb = EmbeddingTable::random(&words, config.hyper.emb_dim, 0.5, config.seed);
    let mut params = init_params(config.hyper, emb, config.seed.wrapping_add(1))?;
    // random transitions so the CRF terms are not symmetric
    for v in params.tensors[crate::model::slot::TRANSITIONS].value.as_mut_slice() {
        *v = rng.gen_range(-0.5..0.5);
    }
    let queries: Vec<_> = (0..config.n_queries)
        .map(|_| random_query(&mut rng, params.vocab.len()))
        .collect();
    let mut objective = ModelObjective::new(&mut params, &queries, config.l2, config.fault);
    check_gradients(&mut objective, config.epsilon, config.tolerance)
}
