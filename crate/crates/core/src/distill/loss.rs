//! Distillation objective: temperature-softened KL to the teacher plus
//! cross-entropy to the ground truth, mixed by `alpha`.

use crate::error::{Error, Result};
use crate::labels::{check_tau, log_softmax, LogitVector, OneHotVector};

fn same_space(a: &LogitVector, b_len: usize) -> Result<()> {
    if a.values().len() != b_len {
        return Err(Error::Shape(format!(
            "logit lengths differ: {} vs {b_len}",
            a.values().len()
        )));
    }
    Ok(())
}

/// `tau^2 * KL(softmax(t / tau) || softmax(s / tau))`, computed from log-softmax.
pub fn kd_loss(student: &LogitVector, teacher: &LogitVector, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    same_space(student, teacher.values().len())?;
    Ok(kd_term(student.values(), teacher.values(), tau))
}

pub(crate) fn kd_term(student: &[f64], teacher: &[f64], tau: f64) -> f64 {
    let ls = log_softmax(student, tau);
    let lt = log_softmax(teacher, tau);
    let kl: f64 = lt.iter().zip(&ls).map(|(t, s)| t.exp() * (t - s)).sum();
    (tau * tau * kl).max(0.0)
}

/// `-ln softmax(s)[true]`.
pub fn ce_loss(student: &LogitVector, target: &OneHotVector) -> Result<f64> {
    same_space(student, target.space().len())?;
    Ok(ce_term(student.values(), target.hot_index()))
}

pub(crate) fn ce_term(student: &[f64], target: usize) -> f64 {
    -log_softmax(student, 1.0)[target]
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidAlpha(alpha));
    }
    Ok(())
}

pub fn total_loss(l_kd: f64, l_ce: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(l_kd.is_finite() && l_ce.is_finite()) {
        return Err(Error::InvalidInput("loss terms must be finite".into()));
    }
    Ok(alpha * l_kd + (1.0 - alpha) * l_ce)
}

/// Per-sample loss terms plus the gradient of the mixed loss w.r.t. the student logits.
pub(crate) struct SampleLoss {
    pub kd: f64,
    pub ce: f64,
    pub total: f64,
}

/// Writes `d total / d student` into `grad` (scaled by `scale`) and returns the loss terms.
///
/// `d kd / d s = tau * (softmax(s/tau) - softmax(t/tau))`,
/// `d ce / d s = softmax(s) - onehot`.
pub(crate) fn loss_and_grad(
    student: &[f64],
    teacher: &[f64],
    target: usize,
    alpha: f64,
    tau: f64,
    scale: f64,
    grad: &mut [f64],
) -> SampleLoss {
    let ls_tau = log_softmax(student, tau);
    let lt_tau = log_softmax(teacher, tau);
    let ls = log_softmax(student, 1.0);
    let kl: f64 = lt_tau
        .iter()
        .zip(&ls_tau)
        .map(|(t, s)| t.exp() * (t - s))
        .sum();
    let kd = (tau * tau * kl).max(0.0);
    let ce = -ls[target];
    for (k, g) in grad.iter_mut().enumerate() {
        let d_kd = tau * (ls_tau[k].exp() - lt_tau[k].exp());
        let d_ce = ls[k].exp() - if k == target { 1.0 } else { 0.0 };
        *g = scale * (alpha * d_kd + (1.0 - alpha) * d_ce);
    }
    SampleLoss {
        kd,
        ce,
        total: alpha * kd + (1.0 - alpha) * ce,
    }
}
