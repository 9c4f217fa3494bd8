use super::adam::Adam;
use super::agent::Policy;
use super::buffer::Transition;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::yann::{Network, Op};

fn rows<'a>(batch: &[&'a Transition], f: impl Fn(&'a Transition) -> &'a [f64]) -> Result<Matrix> {
    Matrix::from_rows(&batch.iter().map(|t| f(t)).collect::<Vec<_>>())
}

fn hcat(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.hstack(b)
}

fn saturate(raw: &Matrix, lo: &[f64], hi: &[f64]) -> Matrix {
    let mut u = raw.clone();
    for r in 0..u.rows() {
        for (v, (l, h)) in u.row_mut(r).iter_mut().zip(lo.iter().zip(hi)) {
            *v = v.clamp(*l, *h);
        }
    }
    u
}

fn clamp_inputs(policy: &Policy, s: &Matrix) -> Matrix {
    match &policy.clamp {
        Some((lo, hi)) => saturate(s, lo, hi),
        None => s.clone(),
    }
}

/// Batched targets `y_i`.
fn td_targets(
    batch: &[&Transition],
    target_actor: &Policy,
    target_critic: &Network,
    gamma: f64,
) -> Result<Vec<f64>> {
    let sn = rows(batch, |t| &t.s_next)?;
    let raw = target_actor
        .net
        .forward_batch(&clamp_inputs(target_actor, &sn))?;
    let un = saturate(&raw, &target_actor.u_low, &target_actor.u_high);
    let qn = target_critic.forward_batch(&hcat(&sn, &un)?)?;
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.terminal {
                t.cost
            } else {
                t.cost + gamma * qn[(i, 0)]
            }
        })
        .collect())
}

/// `y = C + γ Q'(s', π'(s'))`, without the bootstrap on terminal steps.
pub fn td_target(
    t: &Transition,
    target_actor: &Policy,
    target_critic: &Network,
    gamma: f64,
) -> Result<f64> {
    if t.terminal {
        return Ok(t.cost);
    }
    let u = target_actor.act(&t.s_next)?;
    Ok(t.cost
        + gamma
            * target_critic.forward(&t.s_next.iter().chain(&u).copied().collect::<Vec<f64>>())?[0])
}

/// One Adam step on the mean squared TD error; returns the loss before the
/// step.
pub fn critic_update(
    critic: &mut Network,
    opt: &mut Adam,
    target_actor: &Policy,
    target_critic: &Network,
    batch: &[&Transition],
    gamma: f64,
    lr: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    let y = td_targets(batch, target_actor, target_critic, gamma)?;
    let z = hcat(&rows(batch, |t| &t.s)?, &rows(batch, |t| &t.u)?)?;
    let scale = 2.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut g = critic.zero_gradients();
    critic.accumulate_batch_with(
        &z,
        |q| {
            let mut up = Matrix::zeros(q.rows(), 1);
            for i in 0..q.rows() {
                let err = q[(i, 0)] - y[i];
                loss += err * err;
                up[(i, 0)] = scale * err;
            }
            Ok(up)
        },
        &mut g,
    )?;
    opt.step_network(critic, &g, lr)?;
    Ok(loss / batch.len() as f64)
}

/// One Adam step lowering the mean of `Q(s, π(s))` over the batch states;
/// returns the mean before the step. Saturated action components pass no
/// gradient.
pub fn actor_update(
    actor: &mut Policy,
    opt: &mut Adam,
    critic: &Network,
    batch: &[&Transition],
    lr: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    let inv = 1.0 / batch.len() as f64;
    let st = rows(batch, |t| &t.s)?;
    let n = st.cols();
    let mut mean_q = 0.0;
    let mut g = actor.net.zero_gradients();
    let pol: &Policy = actor;
    pol.net.accumulate_batch_with(
        &clamp_inputs(pol, &st),
        |raw| {
            let u = saturate(raw, &pol.u_low, &pol.u_high);
            let ones = Matrix::from_vec(raw.rows(), 1, vec![inv; raw.rows()])?;
            let (q, dz) = critic.forward_with_input_gradient_batch(&hcat(&st, &u)?, &ones)?;
            mean_q = q.as_slice().iter().sum::<f64>() * inv;
            let mut du = Matrix::zeros(raw.rows(), raw.cols());
            for i in 0..raw.rows() {
                for j in 0..raw.cols() {
                    let v = raw[(i, j)];
                    if v >= pol.u_low[j] && v <= pol.u_high[j] {
                        du[(i, j)] = dz[(i, n + j)];
                    }
                }
            }
            Ok(du)
        },
        &mut g,
    )?;
    opt.step_network(&mut actor.net, &g, lr)?;
    Ok(mean_q)
}

/// `θ' ← τθ + (1−τ)θ'` over every parameter, trainable or not.
pub fn polyak(target: &mut Network, online: &Network, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::arg("tau must be in [0, 1]"));
    }
    if target.nodes.len() != online.nodes.len() || target.output != online.output {
        return Err(Error::arg("target and online networks differ in topology"));
    }
    for (tn, on) in target.nodes.iter_mut().zip(&online.nodes) {
        if tn.inputs != on.inputs {
            return Err(Error::arg("target and online networks differ in topology"));
        }
        match (&mut tn.op, &on.op) {
            (Op::Affine(ta), Op::Affine(oa)) => {
                if ta.weight.shape() != oa.weight.shape()
                    || ta.bias.as_ref().map(Vec::len) != oa.bias.as_ref().map(Vec::len)
                {
                    return Err(Error::arg(format!("layer '{}' differs in shape", tn.label)));
                }
                let blend = |t: &mut f64, o: f64| *t = tau * o + (1.0 - tau) * *t;
                for (t, o) in ta
                    .weight
                    .as_mut_slice()
                    .iter_mut()
                    .zip(oa.weight.as_slice())
                {
                    blend(t, *o);
                }
                if let (Some(tb), Some(ob)) = (&mut ta.bias, &oa.bias) {
                    for (t, o) in tb.iter_mut().zip(ob) {
                        blend(t, *o);
                    }
                }
            }
            (a, b) if std::mem::discriminant(a) == std::mem::discriminant(b) => {}
            _ => return Err(Error::arg("target and online networks differ in topology")),
        }
    }
    Ok(())
}
