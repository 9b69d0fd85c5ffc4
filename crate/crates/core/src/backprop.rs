//! Exact gradients of the mean BCE loss over a set of bags, plus a
//! central-difference oracle.
//!
//! Conventions at non-differentiable points: the ReLU derivative at exactly
//! zero is zero, and max pooling routes each coordinate's gradient to the
//! lowest-index instance attaining the maximum.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::milhead::{
    bce_loss, forward_traced, sigmoid, AggTrace, AttnGrad, BagFeatures, Grad, HeadParams, StreamGrad, StreamId,
    StreamRef, StreamTrace,
};
use crate::par::Exec;

/// Bags per work unit. Partial sums are formed per chunk and then added in
/// chunk order, so results do not depend on the thread count.
pub const GRAD_CHUNK: usize = 8;

fn relu_mask(pre: &Array2<f64>, upstream: &mut Array2<f64>) {
    Zip::from(upstream).and(pre).for_each(|g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
}

/// Backpropagates `d_summary` through one stream's aggregator and MLP.
fn stream_backward(
    x: ArrayView2<'_, f64>,
    s: &StreamRef<'_>,
    t: &StreamTrace,
    d_summary: ArrayView1<'_, f64>,
) -> StreamGrad {
    let u = &t.mlp.u;
    let (n, h2) = (u.nrows(), u.ncols());

    let (mut du, attn) = match &t.agg {
        AggTrace::Mean => {
            let row = d_summary.to_owned() / n as f64;
            (row.broadcast((n, h2)).unwrap().to_owned(), None)
        }
        AggTrace::Max { argmax } => {
            let mut du = Array2::zeros((n, h2));
            for (c, &j) in argmax.iter().enumerate() {
                du[(j, c)] = d_summary[c];
            }
            (du, None)
        }
        AggTrace::Attention { keys, values, alpha } => {
            let a = s.attn.as_ref().expect("attention trace implies attention params");
            let scale = 1.0 / (h2 as f64).sqrt();
            // summary = Σ_j α_j v_j with v_j = Wv u_j.
            let pooled_u = u.t().dot(alpha);
            let d_wv = outer(d_summary, pooled_u.view());
            let d_alpha = values.dot(&d_summary);
            let mean_d = alpha.dot(&d_alpha);
            let d_score = alpha * &(d_alpha - mean_d);
            // score_j = z · k_j / √h2 with k_j = Wk u_j.
            let d_z = keys.t().dot(&d_score) * scale;
            let d_keys = outer(d_score.view(), a.z) * scale;
            let d_wk = d_keys.t().dot(u);
            let d_values = outer(alpha.view(), d_summary);
            let du = d_keys.dot(&a.wk) + d_values.dot(&a.wv);
            (
                du,
                Some(AttnGrad {
                    z: d_z,
                    wk: d_wk,
                    wv: d_wv,
                }),
            )
        }
    };

    relu_mask(&t.mlp.a2, &mut du);
    let d_w2 = du.t().dot(&t.mlp.h1);
    let d_b2 = du.sum_axis(Axis(0));
    let mut d_h1 = du.dot(&s.w2);
    relu_mask(&t.mlp.a1, &mut d_h1);
    let d_w1 = d_h1.t().dot(&x);
    let d_b1 = d_h1.sum_axis(Axis(0));
    StreamGrad {
        w1: d_w1,
        b1: d_b1,
        w2: d_w2,
        b2: d_b2,
        attn,
    }
}

fn outer(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    let col = a.insert_axis(Axis(1));
    let row = b.insert_axis(Axis(0));
    &col * &row
}

/// Adds `weight · ∂bce/∂θ` for one bag into `grad`; returns the bag's loss.
pub fn accumulate_bag(bag: &BagFeatures, p: &HeadParams, grad: &mut Grad, weight: f64) -> Result<f64> {
    let trace = forward_traced(bag, p)?;
    let loss = bce_loss(trace.logit, bag.label);
    let g = (sigmoid(trace.logit) - bag.label) * weight;
    let h2 = p.dims().hidden2;
    let w = p.head_weights();

    let mut d_head = vec![0.0; 2 * h2];
    for (id, x, st, block) in [
        (StreamId::Global, bag.global.view(), &trace.global, 0..h2),
        (StreamId::Local, bag.tiles.view(), &trace.local, h2..2 * h2),
    ] {
        let (Some(s), Some(t)) = (p.stream(id), st.as_ref()) else {
            continue;
        };
        for (c, v) in t.summary.iter().enumerate() {
            d_head[block.start + c] = g * v;
        }
        let d_summary: Array1<f64> = w[block].iter().map(|wc| g * wc).collect();
        let sg = stream_backward(x, &s, t, d_summary.view());
        grad.add_stream(id, &sg);
    }
    grad.add_head(&d_head, g);
    Ok(loss)
}

fn check_dims(bags: &[BagFeatures], p: &HeadParams) -> Result<()> {
    if bags.is_empty() {
        return Err(Error::invalid("loss over an empty bag list"));
    }
    let d = p.dims().embed_dim;
    if let Some(b) = bags.iter().find(|b| b.dim() != d) {
        return Err(Error::Dimension(format!("bag dimension {} vs head dimension {d}", b.dim())));
    }
    Ok(())
}

/// Mean BCE loss over `bags` and its exact gradient.
pub fn loss_and_grad(bags: &[BagFeatures], p: &HeadParams, exec: Exec) -> Result<(f64, Grad)> {
    check_dims(bags, p)?;
    let partials = exec.map_chunks(bags, GRAD_CHUNK, |chunk| -> Result<(f64, Grad)> {
        let mut g = Grad::zeros(p.layout().clone());
        let mut loss = 0.0;
        for bag in chunk {
            loss += accumulate_bag(bag, p, &mut g, 1.0)?;
        }
        Ok((loss, g))
    });
    let mut total = 0.0;
    let mut grad = Grad::zeros(p.layout().clone());
    for part in partials {
        let (l, g) = part?;
        total += l;
        grad.add_scaled(&g, 1.0);
    }
    let n = bags.len() as f64;
    grad.scale(1.0 / n);
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFiniteParam { path: "loss".into() });
    }
    grad.check_finite()?;
    Ok((loss, grad))
}

/// Mean BCE loss over `bags`.
pub fn mean_loss(bags: &[BagFeatures], p: &HeadParams, exec: Exec) -> Result<f64> {
    check_dims(bags, p)?;
    let partials = exec.map_chunks(bags, GRAD_CHUNK, |chunk| -> Result<f64> {
        let mut loss = 0.0;
        for bag in chunk {
            loss += bce_loss(forward_traced(bag, p)?.logit, bag.label);
        }
        Ok(loss)
    });
    let mut total = 0.0;
    for part in partials {
        total += part?;
    }
    Ok(total / bags.len() as f64)
}

/// Central differences `(f(x + h_k e_k) − f(x − h_k e_k)) / 2h_k`.
pub fn central_differences<F>(mut f: F, x: &[f64], step: impl Fn(f64) -> f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = step(x[k]);
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Finite-difference gradient of the mean loss with per-parameter step
/// `rel_step · (1 + |θ_k|)`.
pub fn fd_grad(bags: &[BagFeatures], p: &HeadParams, rel_step: f64) -> Result<Grad> {
    if rel_step <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    check_dims(bags, p)?;
    let mut probe = p.clone();
    let values = central_differences(
        |x| {
            probe.values_mut().copy_from_slice(x);
            mean_loss(bags, &probe, Exec::Sequential).expect("dimensions checked")
        },
        p.values(),
        |v| rel_step * (1.0 + v.abs()),
    );
    Grad::from_values(p.layout().clone(), values)
}

/// Every discrete choice the forward pass makes: ReLU on/off for each
/// pre-activation and the argmax row of each max-pooled coordinate. Two
/// parameter vectors with equal patterns lie in the same smooth piece.
pub fn kink_pattern(bags: &[BagFeatures], p: &HeadParams) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for bag in bags {
        let t = forward_traced(bag, p)?;
        for st in [&t.global, &t.local].into_iter().flatten() {
            out.extend(st.mlp.a1.iter().map(|&a| u32::from(a > 0.0)));
            out.extend(st.mlp.a2.iter().map(|&a| u32::from(a > 0.0)));
            if let AggTrace::Max { argmax } = &st.agg {
                out.extend(argmax.iter().map(|&j| j as u32));
            }
        }
    }
    Ok(out)
}

/// Default denominator floor for [`grad_check`]. Central differences with
/// `h ≈ 1e-6` resolve a derivative only to about `1e-10` absolute, so entries
/// smaller than this are effectively compared on an absolute scale.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Outcome of comparing analytic and finite-difference gradients.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst_path: String,
    /// Analytic and finite-difference values at `worst_path`.
    pub worst_pair: (f64, f64),
    pub checked: usize,
    pub skipped_near_kink: usize,
}

/// Compares [`loss_and_grad`] with central differences, skipping coordinates
/// whose ±h probes change the [`kink_pattern`]. Relative error is
/// `|a − f| / max(|a|, |f|, floor)`.
pub fn grad_check(bags: &[BagFeatures], p: &HeadParams, rel_step: f64, floor: f64) -> Result<GradCheck> {
    let (_, analytic) = loss_and_grad(bags, p, Exec::Sequential)?;
    let base = kink_pattern(bags, p)?;
    let mut probe = p.clone();
    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst_path: String::new(),
        worst_pair: (0.0, 0.0),
        checked: 0,
        skipped_near_kink: 0,
    };
    for k in 0..p.values().len() {
        let x = p.values()[k];
        let h = rel_step * (1.0 + x.abs());
        probe.values_mut()[k] = x + h;
        let up = mean_loss(bags, &probe, Exec::Sequential)?;
        let up_kinks = kink_pattern(bags, &probe)?;
        probe.values_mut()[k] = x - h;
        let down = mean_loss(bags, &probe, Exec::Sequential)?;
        let down_kinks = kink_pattern(bags, &probe)?;
        probe.values_mut()[k] = x;
        if up_kinks != base || down_kinks != base {
            report.skipped_near_kink += 1;
            continue;
        }
        let fd = (up - down) / (2.0 * h);
        let a = analytic.values()[k];
        let err = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
        report.checked += 1;
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_path = p.layout().path(k);
            report.worst_pair = (a, fd);
        }
    }
    Ok(report)
}
