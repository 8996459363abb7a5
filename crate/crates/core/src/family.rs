//! Indexed families of operators: the common currency of D-POVMs,
//! assemblages, single elements and process matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{LabeledOperator, SpaceLabel};

/// Outcome and classical-input indices of one element. Unused slots are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutcomeKey {
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub f: Option<usize>,
    pub y: Option<usize>,
    pub z: Option<usize>,
}

impl OutcomeKey {
    pub fn ab(a: usize, b: usize) -> Self {
        OutcomeKey { a: Some(a), b: Some(b), ..Default::default() }
    }

    pub fn abf(a: usize, b: usize, f: usize) -> Self {
        OutcomeKey { a: Some(a), b: Some(b), f: Some(f), ..Default::default() }
    }
}

/// Elements with their keys, all on the same factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorFamily {
    pub keys: Vec<OutcomeKey>,
    pub elements: Vec<LabeledOperator>,
}

impl OperatorFamily {
    pub fn new(keys: Vec<OutcomeKey>, elements: Vec<LabeledOperator>) -> Result<Self> {
        if keys.len() != elements.len() || keys.is_empty() {
            return Err(Error::InvalidParam("family needs one key per element and at least one element".into()));
        }
        let factors = elements[0].factors();
        if elements.iter().any(|e| e.factors() != factors) {
            return Err(Error::InvalidParam("family elements act on different factors".into()));
        }
        let mut sorted = keys.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != keys.len() {
            return Err(Error::InvalidParam("duplicate outcome key".into()));
        }
        Ok(OperatorFamily { keys, elements })
    }

    pub fn single(element: LabeledOperator) -> Self {
        OperatorFamily { keys: vec![OutcomeKey::default()], elements: vec![element] }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn factors(&self) -> &[SpaceLabel] {
        self.elements[0].factors()
    }

    pub fn get(&self, key: &OutcomeKey) -> Option<&LabeledOperator> {
        self.keys.iter().position(|k| k == key).map(|i| &self.elements[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OutcomeKey, &LabeledOperator)> {
        self.keys.iter().zip(&self.elements)
    }

    /// Same index structure on both sides.
    pub fn check_same_shape(&self, other: &OperatorFamily) -> Result<()> {
        if self.keys != other.keys {
            return Err(Error::InvalidParam("families have different index structures".into()));
        }
        if self.factors() != other.factors() {
            return Err(Error::InvalidParam("families act on different factors".into()));
        }
        Ok(())
    }

    /// Σ_k Tr[A_kᵀ B_k]; real part (both families Hermitian).
    pub fn pairing(&self, other: &OperatorFamily) -> Result<f64> {
        self.check_same_shape(other)?;
        let mut acc = 0.0;
        for (a, b) in self.elements.iter().zip(&other.elements) {
            acc += a.pairing(b)?.re;
        }
        Ok(acc)
    }

    /// Elementwise `self + c·other`.
    pub fn add_scaled(&self, other: &OperatorFamily, c: f64) -> Result<OperatorFamily> {
        self.check_same_shape(other)?;
        let elements = self
            .elements
            .iter()
            .zip(&other.elements)
            .map(|(a, b)| a.add(&b.scale(c)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(OperatorFamily { keys: self.keys.clone(), elements })
    }

    pub fn map(&self, f: impl Fn(&LabeledOperator) -> LabeledOperator) -> OperatorFamily {
        OperatorFamily { keys: self.keys.clone(), elements: self.elements.iter().map(f).collect() }
    }

    pub fn scale(&self, c: f64) -> OperatorFamily {
        self.map(|e| e.scale(c))
    }

    pub fn max_abs_diff(&self, other: &OperatorFamily) -> Result<f64> {
        self.check_same_shape(other)?;
        let mut m: f64 = 0.0;
        for (a, b) in self.elements.iter().zip(&other.elements) {
            m = m.max(a.max_abs_diff(b)?);
        }
        Ok(m)
    }

    /// Sum of the elements whose key satisfies `pred`.
    pub fn sum_where(&self, pred: impl Fn(&OutcomeKey) -> bool) -> Result<LabeledOperator> {
        let mut acc = LabeledOperator::zeros(self.factors().to_vec())?;
        for (k, e) in self.iter() {
            if pred(k) {
                acc = acc.add(e)?;
            }
        }
        Ok(acc)
    }

    /// Distinct values of one key slot, sorted.
    pub fn distinct(&self, slot: impl Fn(&OutcomeKey) -> Option<usize>) -> Vec<Option<usize>> {
        let mut v: Vec<Option<usize>> = self.keys.iter().map(slot).collect();
        v.sort();
        v.dedup();
        v
    }
}

/// Anything that can be handed to the certification layer.
pub trait Certifiable {
    fn family(&self) -> OperatorFamily;
}

impl Certifiable for OperatorFamily {
    fn family(&self) -> OperatorFamily {
        self.clone()
    }
}

impl Certifiable for LabeledOperator {
    fn family(&self) -> OperatorFamily {
        OperatorFamily::single(self.clone())
    }
}
