//! Emotion label spaces and the class-indexed vectors every loss and gate consumes.
//!
//! A [`LabelSpace`] fixes the order of classes; index `i` of every
//! [`LogitVector`], [`ProbVector`] and [`OneHotVector`] refers to
//! `space.labels()[i]`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a probability vector.
pub const PROB_SUM_TOL: f64 = 1e-6;

#[derive(Clone, PartialEq, Eq)]
pub struct LabelSpace {
    name: Arc<str>,
    labels: Arc<[String]>,
}

impl LabelSpace {
    pub fn new(name: &str, labels: &[&str]) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "label space `{name}` needs at least two labels"
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() || l.chars().any(|c| c.is_uppercase() || c.is_whitespace()) {
                return Err(Error::InvalidInput(format!(
                    "label `{l}` must be non-empty, lowercase and without whitespace"
                )));
            }
            if labels[..i].contains(l) {
                return Err(Error::InvalidInput(format!("duplicate label `{l}`")));
            }
        }
        Ok(Self {
            name: Arc::from(name),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Mikels' eight categories in alphabetical order.
    pub fn mikels8() -> Self {
        Self::new(
            "mikels8",
            &[
                "amusement",
                "anger",
                "awe",
                "contentment",
                "disgust",
                "excitement",
                "fear",
                "sadness",
            ],
        )
        .expect("static label space")
    }

    /// Ekman's six basic emotions.
    pub fn ekman6() -> Self {
        Self::new(
            "ekman6",
            &["anger", "surprise", "disgust", "joy", "fear", "sadness"],
        )
        .expect("static label space")
    }

    pub fn binary() -> Self {
        Self::new("binary", &["positive", "negative"]).expect("static label space")
    }

    /// Looks up one of the built-in spaces by name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "mikels8" => Ok(Self::mikels8()),
            "ekman6" => Ok(Self::ekman6()),
            "binary" => Ok(Self::binary()),
            other => Err(Error::InvalidInput(format!(
                "unknown label space `{other}`"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.len() {
            return Err(Error::Shape(format!(
                "vector of length {n} does not match space `{}` with {} classes",
                self.name,
                self.len()
            )));
        }
        Ok(())
    }
}

impl fmt::Debug for LabelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LabelSpace({}: {:?})", self.name, &self.labels[..])
    }
}

impl Serialize for LabelSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name)
    }
}

impl<'de> Deserialize<'de> for LabelSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        LabelSpace::by_name(&name).map_err(serde::de::Error::custom)
    }
}

/// Unconstrained pre-softmax scores.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitVector {
    space: LabelSpace,
    values: Vec<f64>,
}

impl LogitVector {
    pub fn new(space: LabelSpace, values: Vec<f64>) -> Result<Self> {
        space.check_len(values.len())?;
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite logit {v}")));
        }
        Ok(Self { space, values })
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector {
    space: LabelSpace,
    values: Vec<f64>,
}

impl ProbVector {
    pub fn new(space: LabelSpace, values: Vec<f64>) -> Result<Self> {
        space.check_len(values.len())?;
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self { space, values })
    }

    pub fn uniform(space: LabelSpace) -> Self {
        let c = space.len();
        Self {
            space,
            values: vec![1.0 / c as f64; c],
        }
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OneHotVector {
    space: LabelSpace,
    hot_index: usize,
}

impl OneHotVector {
    pub fn from_index(space: LabelSpace, hot_index: usize) -> Result<Self> {
        if hot_index >= space.len() {
            return Err(Error::Shape(format!(
                "hot index {hot_index} out of range for {} classes",
                space.len()
            )));
        }
        Ok(Self { space, hot_index })
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn hot_index(&self) -> usize {
        self.hot_index
    }

    pub fn label(&self) -> &str {
        self.space.label(self.hot_index)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.space.len()];
        v[self.hot_index] = 1.0;
        v
    }

    /// Materializes as a probability vector (a one-hot is a point mass).
    pub fn to_prob(&self) -> ProbVector {
        ProbVector {
            space: self.space.clone(),
            values: self.to_vec(),
        }
    }
}

/// `softmax(values / tau)`, stabilized by subtracting the max before exponentiation.
pub fn softened_softmax(logits: &LogitVector, tau: f64) -> Result<ProbVector> {
    check_tau(tau)?;
    let mut values = logits.values.clone();
    softmax_in_place(&mut values, tau);
    Ok(ProbVector {
        space: logits.space.clone(),
        values,
    })
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidTemperature(tau));
    }
    Ok(())
}

/// In-place `softmax(z / tau)` over a raw slice.
pub fn softmax_in_place(z: &mut [f64], tau: f64) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = ((*v - max) / tau).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// `log softmax(z / tau)` over a raw slice.
pub fn log_softmax(z: &[f64], tau: f64) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = z.iter().map(|v| (v - max) / tau).collect();
    let lse = shifted.iter().map(|v| v.exp()).sum::<f64>().ln();
    shifted.into_iter().map(|v| v - lse).collect()
}

pub fn one_hot(label: &str, space: &LabelSpace) -> Result<OneHotVector> {
    match space.index_of(label) {
        Some(hot_index) => Ok(OneHotVector {
            space: space.clone(),
            hot_index,
        }),
        None => Err(Error::OutOfVocabulary {
            label: label.to_string(),
            space: space.name().to_string(),
        }),
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_label(probs: &ProbVector) -> &str {
    probs.space.label(argmax(&probs.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn logits(space: &LabelSpace, v: &[f64]) -> LogitVector {
        LogitVector::new(space.clone(), v.to_vec()).unwrap()
    }

    fn space_of(n: usize) -> LabelSpace {
        let names: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        LabelSpace::new("test", &refs).unwrap()
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let s = space_of(4);
        let p = softened_softmax(&logits(&s, &[0.0; 4]), 1.0).unwrap();
        for v in p.values() {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_ln2_gives_two_thirds() {
        let p = softened_softmax(&logits(&LabelSpace::binary(), &[2f64.ln(), 0.0]), 1.0).unwrap();
        assert_abs_diff_eq!(p.values()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.values()[1], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn temperature_rescales_logits() {
        let s = LabelSpace::binary();
        let a = softened_softmax(&logits(&s, &[6.0, 2.0]), 2.0).unwrap();
        let b = softened_softmax(&logits(&s, &[3.0, 1.0]), 1.0).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn bad_temperature_and_logits_rejected() {
        let s = LabelSpace::binary();
        let z = logits(&s, &[1.0, 0.0]);
        assert!(matches!(
            softened_softmax(&z, 0.0),
            Err(Error::InvalidTemperature(_))
        ));
        assert!(matches!(
            softened_softmax(&z, -1.0),
            Err(Error::InvalidTemperature(_))
        ));
        assert!(matches!(
            softened_softmax(&z, f64::NAN),
            Err(Error::InvalidTemperature(_))
        ));
        assert!(matches!(
            LogitVector::new(s, vec![f64::INFINITY, 0.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn one_hot_examples() {
        let m = LabelSpace::mikels8();
        let awe = one_hot("awe", &m).unwrap();
        assert_eq!(awe.to_vec(), vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            one_hot("positive", &LabelSpace::binary()).unwrap().to_vec(),
            vec![1.0, 0.0]
        );
        assert!(matches!(
            one_hot("joy", &m),
            Err(Error::OutOfVocabulary { .. })
        ));
        assert!(one_hot("joy", &LabelSpace::ekman6()).is_ok());
    }

    #[test]
    fn argmax_examples() {
        let s = space_of(3);
        let p = ProbVector::new(s, vec![0.1, 0.7, 0.2]).unwrap();
        assert_eq!(argmax_label(&p), "c1");
        let tie = ProbVector::new(LabelSpace::binary(), vec![0.5, 0.5]).unwrap();
        assert_eq!(argmax_label(&tie), "positive");
    }

    #[test]
    fn label_space_validation() {
        assert!(LabelSpace::new("x", &["a"]).is_err());
        assert!(LabelSpace::new("x", &["a", "a"]).is_err());
        assert!(LabelSpace::new("x", &["a", "B"]).is_err());
        assert!(LabelSpace::new("x", &["a", ""]).is_err());
        assert_eq!(LabelSpace::by_name("ekman6").unwrap().len(), 6);
    }

    #[test]
    fn prob_vector_rejects_bad_sums() {
        assert!(ProbVector::new(LabelSpace::binary(), vec![0.6, 0.6]).is_err());
        assert!(ProbVector::new(LabelSpace::binary(), vec![1.5, -0.5]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(z in prop::collection::vec(-50.0f64..50.0, 2..10), tau in 0.1f64..100.0) {
            let s = space_of(z.len());
            let p = softened_softmax(&logits(&s, &z), tau).unwrap();
            let sum: f64 = p.values().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            prop_assert!(p.values().iter().all(|v| *v > 0.0));
        }

        #[test]
        fn temperature_identity(z in prop::collection::vec(-20.0f64..20.0, 2..10), tau in 0.1f64..100.0) {
            let s = space_of(z.len());
            let scaled: Vec<f64> = z.iter().map(|v| v / tau).collect();
            let a = softened_softmax(&logits(&s, &z), tau).unwrap();
            let b = softened_softmax(&logits(&s, &scaled), 1.0).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn shift_invariance(z in prop::collection::vec(-20.0f64..20.0, 2..10), shift in -100.0f64..100.0, tau in 0.1f64..10.0) {
            let s = space_of(z.len());
            let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
            let a = softened_softmax(&logits(&s, &z), tau).unwrap();
            let b = softened_softmax(&logits(&s, &shifted), tau).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn argmax_invariant_under_temperature(z in prop::collection::vec(-20.0f64..20.0, 2..10), t1 in 0.1f64..100.0, t2 in 0.1f64..100.0) {
            let s = space_of(z.len());
            let a = softened_softmax(&logits(&s, &z), t1).unwrap();
            let b = softened_softmax(&logits(&s, &z), t2).unwrap();
            // Near-ties can flip under rounding; compare against the raw logits' argmax instead.
            let zi = argmax(&z);
            let sorted_gap = {
                let mut v = z.clone();
                v.sort_by(|a, b| b.partial_cmp(a).unwrap());
                v[0] - v[1]
            };
            prop_assume!(sorted_gap > 1e-9);
            prop_assert_eq!(argmax_label(&a), s.label(zi));
            prop_assert_eq!(argmax_label(&b), s.label(zi));
        }

        #[test]
        fn one_hot_argmax_roundtrip(idx in 0usize..8) {
            let m = LabelSpace::mikels8();
            let label = m.label(idx).to_string();
            let oh = one_hot(&label, &m).unwrap();
            let p = oh.to_prob();
            prop_assert_eq!(argmax_label(&p), label.as_str());
        }
    }
}
