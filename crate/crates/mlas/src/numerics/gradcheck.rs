//! Finite-difference gradient checker.
//!
//! The checker rebuilds the loss graph from scratch for every evaluation,
//! so the loss builder must be deterministic (noise disabled); a pair of
//! identical evaluations is used to detect nondeterminism before any
//! comparison is attempted.

use crate::error::{Error, Result};
use crate::numerics::{Graph, NamedTensors, ValueId};

/// Outcome of a gradient check over a named parameter set.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    /// Per-parameter maximum relative error, in parameter order.
    pub per_parameter: Vec<(String, f64)>,
}

/// Relative error between analytic and numeric gradients of one named
/// parameter: `|g_a - g_n| / max(|g_a|, |g_n|, 1e-8)` with `|.|` the
/// Euclidean norm over the parameter's components. The norm-level
/// comparison is what f64 supports: central differences carry forward
/// rounding noise of roughly `eps / (2h)` per component regardless of the
/// gradient's size, so individual near-zero components cannot be
/// certified, while a whole parameter's gradient can.
fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-8)
}

fn eval_loss<F>(params: &NamedTensors, build: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[ValueId]) -> Result<ValueId>,
{
    let mut g = Graph::new();
    let ids: Vec<ValueId> = params.iter().map(|(_, t)| g.tensor(t)).collect();
    let loss = build(&mut g, &ids)?;
    if !g.shape(loss).is_scalar() {
        return Err(Error::InvalidArgument(
            "grad_check loss builder must produce a scalar".into(),
        ));
    }
    Ok(g.scalar(loss))
}

/// Compare analytic gradients of `build`'s loss against central finite
/// differences with step `h`, perturbing one component at a time.
///
/// The report carries, per named parameter,
/// `|g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|, 1e-8)`
/// with `|.|` the Euclidean norm over that parameter.
pub fn grad_check<F>(params: &NamedTensors, h: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[ValueId]) -> Result<ValueId>,
{
    if h <= 0.0 {
        return Err(Error::InvalidArgument(format!("grad_check: h = {h}")));
    }
    if params.is_empty() {
        return Err(Error::InvalidArgument("grad_check: no parameters".into()));
    }

    let first = eval_loss(params, &build)?;
    let second = eval_loss(params, &build)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Nondeterminism(first, second));
    }

    // Analytic pass.
    let mut g = Graph::new();
    let ids: Vec<ValueId> = params.iter().map(|(_, t)| g.tensor(t)).collect();
    let loss = build(&mut g, &ids)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| g.grad(id).to_vec()).collect();

    let mut per_parameter = Vec::with_capacity(params.len());
    let mut work = params.clone();
    for p in 0..params.len() {
        let (name, tensor) = params.at(p);
        let mut numeric = Vec::with_capacity(tensor.len());
        for k in 0..tensor.len() {
            let original = tensor.data[k];
            work.at_mut(p).1.data[k] = original + h;
            let plus = eval_loss(&work, &build)?;
            work.at_mut(p).1.data[k] = original - h;
            let minus = eval_loss(&work, &build)?;
            work.at_mut(p).1.data[k] = original;
            numeric.push((plus - minus) / (2.0 * h));
        }
        per_parameter.push((name.to_string(), relative_error(&analytic[p], &numeric)));
    }

    let (worst_parameter, max_relative_error) = per_parameter
        .iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(n, e)| (n.clone(), *e))
        .unwrap();

    Ok(GradCheckReport {
        max_relative_error,
        worst_parameter,
        per_parameter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use crate::rng::Rng;

    fn random_params(spec: &[(&str, usize)], seed: u64) -> NamedTensors {
        let mut rng = Rng::new(seed);
        let mut params = NamedTensors::new();
        for (name, len) in spec {
            let data: Vec<f64> = (0..*len).map(|_| rng.uniform_in(-0.8, 0.8)).collect();
            params.insert(name, Tensor::vector(data)).unwrap();
        }
        params
    }

    #[test]
    fn quadratic_loss_is_exact_up_to_roundoff() {
        let params = random_params(&[("w", 5)], 3);
        let report = grad_check(&params, 1e-5, |g, ids| g.dot(ids[0], ids[0])).unwrap();
        assert!(
            report.max_relative_error < 1e-7,
            "max rel err {}",
            report.max_relative_error
        );
        assert_eq!(report.worst_parameter, "w");
    }

    #[test]
    fn softmax_cross_entropy_head() {
        let params = random_params(&[("logits", 6)], 11);
        let report = grad_check(&params, 1e-5, |g, ids| {
            let p = g.softmax(ids[0])?;
            g.cross_entropy(p, 2)
        })
        .unwrap();
        assert!(
            report.max_relative_error < 1e-6,
            "max rel err {}",
            report.max_relative_error
        );
    }

    #[test]
    fn attention_style_chain() {
        // u_i = v.tanh(W h_i + W_d d + b), alpha = softmax(u), c = sum alpha_i h_i,
        // loss = sum(c): exercises the full score/weight/context chain.
        let mut rng = Rng::new(21);
        let dim = 3;
        let frames = 4;
        let mut params = NamedTensors::new();
        params
            .insert(
                "w_h",
                Tensor::matrix(
                    dim,
                    dim,
                    (0..dim * dim).map(|_| rng.uniform_in(-0.7, 0.7)).collect(),
                )
                .unwrap(),
            )
            .unwrap();
        params
            .insert(
                "w_d",
                Tensor::matrix(
                    dim,
                    dim,
                    (0..dim * dim).map(|_| rng.uniform_in(-0.7, 0.7)).collect(),
                )
                .unwrap(),
            )
            .unwrap();
        params
            .insert(
                "v",
                Tensor::vector((0..dim).map(|_| rng.uniform_in(-0.7, 0.7)).collect()),
            )
            .unwrap();
        params
            .insert(
                "b_a",
                Tensor::vector((0..dim).map(|_| rng.uniform_in(-0.7, 0.7)).collect()),
            )
            .unwrap();
        for i in 0..frames {
            params
                .insert(
                    &format!("h{i}"),
                    Tensor::vector((0..dim).map(|_| rng.uniform_in(-0.9, 0.9)).collect()),
                )
                .unwrap();
        }
        params
            .insert(
                "d",
                Tensor::vector((0..dim).map(|_| rng.uniform_in(-0.9, 0.9)).collect()),
            )
            .unwrap();

        let report = grad_check(&params, 1e-5, |g, ids| {
            let (w_h, w_d, v, b_a) = (ids[0], ids[1], ids[2], ids[3]);
            let hs = &ids[4..4 + frames];
            let d = ids[4 + frames];
            let wd_d = g.matvec(w_d, d)?;
            let mut scores = Vec::new();
            for &h in hs {
                let wh_h = g.matvec(w_h, h)?;
                let pre = g.add_n(&[wh_h, wd_d, b_a])?;
                let act = g.tanh(pre);
                scores.push(g.dot(v, act)?);
            }
            let u = g.concat(&scores)?;
            let alpha = g.softmax(u)?;
            let context = g.weighted_sum(alpha, hs)?;
            g.sum(context)
        })
        .unwrap();
        assert!(
            report.max_relative_error < 1e-4,
            "max rel err {}",
            report.max_relative_error
        );
    }

    #[test]
    fn fused_lstm_cell_gradients() {
        use crate::numerics::{lstm_step, LstmParamIds, LstmState};
        let width = 3;
        let in_dim = 4;
        let mut rng = Rng::new(77);
        let mut params = NamedTensors::new();
        let mut mat = |name: &str, r: usize, c: usize, rng: &mut Rng| {
            let t = Tensor::matrix(r, c, (0..r * c).map(|_| rng.uniform_in(-0.6, 0.6)).collect())
                .unwrap();
            params.insert(name, t).unwrap();
        };
        mat("w_x", 4 * width, in_dim, &mut rng);
        mat("w_h", 4 * width, width, &mut rng);
        for (name, len) in [("b", 4 * width), ("x", in_dim), ("h0", width), ("c0", width)] {
            params
                .insert(
                    name,
                    Tensor::vector((0..len).map(|_| rng.uniform_in(-0.6, 0.6)).collect()),
                )
                .unwrap();
        }
        // Two chained steps so gradients flow through both state paths.
        let report = grad_check(&params, 1e-5, |g, ids| {
            let p = LstmParamIds {
                w_x: ids[0],
                w_h: ids[1],
                bias: ids[2],
            };
            let state = LstmState {
                hidden: ids[4],
                cell: ids[5],
                width,
            };
            let s1 = lstm_step(g, ids[3], &state, &p)?;
            let s2 = lstm_step(g, ids[3], &s1, &p)?;
            let joined = g.concat(&[s2.hidden, s2.cell])?;
            g.sum(joined)
        })
        .unwrap();
        assert!(
            report.max_relative_error < 1e-6,
            "max rel err {} at {}",
            report.max_relative_error,
            report.worst_parameter
        );
    }

    #[test]
    fn detects_nondeterministic_builder() {
        use std::cell::Cell;
        let params = random_params(&[("w", 2)], 5);
        let calls = Cell::new(0.0);
        let result = grad_check(&params, 1e-5, |g, ids| {
            calls.set(calls.get() + 1.0);
            let noise = g.vector(vec![calls.get(), 0.0]);
            let shifted = g.add(ids[0], noise)?;
            g.dot(shifted, shifted)
        });
        assert!(matches!(result, Err(Error::Nondeterminism(_, _))));
    }

    #[test]
    fn rejects_nonpositive_step() {
        let params = random_params(&[("w", 2)], 5);
        assert!(matches!(
            grad_check(&params, 0.0, |g, ids| g.dot(ids[0], ids[0])),
            Err(Error::InvalidArgument(_))
        ));
    }
}
