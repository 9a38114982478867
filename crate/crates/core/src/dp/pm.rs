//! Piecewise Mechanism for numeric slots, randomized response for
//! categorical slots, and their composition over an attribute vector.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{AttributeSchema, AttributeVector, SlotKind, SlotValue};
use crate::Real;

/// Closed-form constants of the Piecewise Mechanism at budget `eps`.
///
/// Outputs live in `[-c, c]` with `c = (e^{eps/2}+1)/(e^{eps/2}-1)`; for an
/// input `t` the sub-interval `[lo(t), lo(t) + c - 1]` receives probability
/// mass `e^{eps/2}/(e^{eps/2}+1)` and the rest of `[-c, c]` the remainder.
/// The mechanism is exactly unbiased.
#[derive(Debug, Clone, Copy)]
pub struct PmParams {
    pub eps: f64,
    pub c: f64,
    pub p_inside: f64,
}

impl PmParams {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!("PM budget {eps} must be positive")));
        }
        // Written in terms of e^{-eps/2} so huge budgets degrade to c = 1,
        // p_inside = 1 instead of inf/inf.
        let w = (-eps / 2.0).exp();
        let c = (1.0 + w) / (1.0 - w);
        let p_inside = 1.0 / (1.0 + w);
        Ok(PmParams { eps, c, p_inside })
    }

    /// Left end of the high-probability sub-interval for input `t`.
    pub fn lo(&self, t: f64) -> f64 {
        (self.c + 1.0) / 2.0 * t - (self.c - 1.0) / 2.0
    }
}

/// One draw of the Piecewise Mechanism. `t` must lie in `[-1, 1]`.
pub fn pm_perturb<R: Rng>(t: f64, params: &PmParams, rng: &mut R) -> Result<Real> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("PM input {t} outside [-1, 1]")));
    }
    let c = params.c;
    let lo = params.lo(t);
    let hi = lo + (c - 1.0);
    let y = if rng.gen::<f64>() < params.p_inside {
        lo + rng.gen::<f64>() * (c - 1.0)
    } else {
        // The two side intervals [-c, lo] and [hi, c] have total length c+1;
        // pick a point uniformly across both.
        let u = rng.gen::<f64>() * (c + 1.0);
        let left_len = lo + c;
        if u < left_len {
            -c + u
        } else {
            hi + (u - left_len)
        }
    };
    Ok(y.clamp(-c, c))
}

/// Keep/flip probabilities of randomized response over `c` categories:
/// `(p_keep, p_other)` with `p_keep = e^eps / (e^eps + c - 1)` and the rest
/// spread uniformly over the other `c - 1` categories.
pub fn rr_probabilities(eps: f64, categories: usize) -> Result<(f64, f64)> {
    if categories == 0 {
        return Err(Error::InvalidArgument("randomized response over 0 categories".into()));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("RR budget {eps} must be non-negative")));
    }
    // e^eps / (e^eps + c - 1) rewritten with e^{-eps} so huge budgets give
    // (1, 0) instead of inf/inf.
    let w = (-eps).exp();
    let denom = 1.0 + (categories as f64 - 1.0) * w;
    Ok((1.0 / denom, w / denom))
}

/// One draw of randomized response. `value` must lie in `0..categories`.
pub fn rr_perturb<R: Rng>(value: usize, categories: usize, eps: f64, rng: &mut R) -> Result<usize> {
    if value >= categories {
        return Err(Error::InvalidArgument(format!("category {value} out of range 0..{categories}")));
    }
    let (p_keep, _) = rr_probabilities(eps, categories)?;
    if categories == 1 || rng.gen::<f64>() < p_keep {
        return Ok(value);
    }
    // Uniform over the other c-1 categories.
    let mut other = rng.gen_range(0..categories - 1);
    if other >= value {
        other += 1;
    }
    Ok(other)
}

/// Perturbs every slot independently, splitting `eps_a` evenly across the
/// `m` slots. Numeric slots go through the Piecewise Mechanism (output in
/// `[-C, C]`), categorical slots through randomized response.
pub fn perturb_attributes<R: Rng>(
    x: &AttributeVector,
    schema: &AttributeSchema,
    eps_a: f64,
    rng: &mut R,
) -> Result<AttributeVector> {
    if !(eps_a > 0.0) || !eps_a.is_finite() {
        return Err(Error::InvalidArgument(format!("attribute budget {eps_a} must be positive")));
    }
    if x.slots.len() != schema.len() {
        return Err(Error::DimMismatch(format!(
            "attribute vector has {} slots, schema {}",
            x.slots.len(),
            schema.len()
        )));
    }
    if schema.is_empty() {
        return Ok(x.clone());
    }
    let eps_slot = eps_a / schema.len() as f64;
    let pm = PmParams::new(eps_slot)?;
    let mut out = Vec::with_capacity(x.slots.len());
    for (slot, kind) in x.slots.iter().zip(&schema.kinds) {
        out.push(match (slot, kind) {
            (SlotValue::Numeric(t), SlotKind::Numeric) => {
                SlotValue::Numeric(pm_perturb(*t, &pm, rng)?)
            }
            (SlotValue::Categorical(v), SlotKind::Categorical { cardinality }) => {
                SlotValue::Categorical(rr_perturb(*v, *cardinality, eps_slot, rng)?)
            }
            _ => {
                return Err(Error::SchemaMismatch {
                    id: String::new(),
                    msg: "slot value kind does not match schema".into(),
                })
            }
        });
    }
    Ok(AttributeVector { slots: out })
}
