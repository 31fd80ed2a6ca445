//! Reference implementations of segmentation loss functions and activations
//! with analytic gradients, intended as a numeric oracle for external
//! training code.
//!
//! All losses are means over pixels, not sums, so values are
//! resolution-independent. Log arguments are clamped away from 0 and 1;
//! the clamp is configurable and not part of the underlying formulas.

use crate::error::{Error, Result};

/// Per-pixel per-class probabilities in [0,1], row-major, class-minor:
/// index = (y*width + x)*classes + c. Multi-class maps must sum to 1 per
/// pixel within 1e-6.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    width: u32,
    height: u32,
    classes: u32,
    probs: Vec<f64>,
}

/// Per-pixel binary (m=1) or one-hot (m>1) targets, same layout as
/// [`ProbabilityMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMap {
    width: u32,
    height: u32,
    classes: u32,
    targets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Smoothing term of the Dice loss denominator and numerator.
    pub epsilon: f64,
    /// Log arguments clip to [clamp, 1-clamp].
    pub clamp: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            epsilon: 1e-6,
            clamp: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid("epsilon must be in (0, 1)"));
        }
        if !(self.clamp > 0.0 && self.clamp < 0.5) {
            return Err(Error::invalid("clamp must be in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Which cross-entropy form `dice_entropy` combines with the Dice loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossEntropyKind {
    /// Binary when the maps are single-class, categorical otherwise.
    #[default]
    Auto,
    Binary,
    Categorical,
}

/// A loss value together with its analytic gradient with respect to the
/// probability map, same layout as the map.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(width: u32, height: u32, classes: u32, probs: Vec<f64>) -> Result<Self> {
        let expect = (width as usize) * (height as usize) * (classes as usize);
        if probs.len() != expect {
            return Err(Error::invalid(format!(
                "probability count {} does not match {}x{}x{}",
                probs.len(),
                width,
                height,
                classes
            )));
        }
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        if classes > 1 {
            let m = classes as usize;
            for (i, px) in probs.chunks(m).enumerate() {
                let s: f64 = px.iter().sum();
                if (s - 1.0).abs() > 1e-6 {
                    return Err(Error::invalid(format!(
                        "pixel {i} class probabilities sum to {s}, expected 1"
                    )));
                }
            }
        }
        Ok(ProbabilityMap {
            width,
            height,
            classes,
            probs,
        })
    }

    /// Like [`ProbabilityMap::new`] but without the per-pixel sum-to-one
    /// check for multi-class maps. Intended for numerical work such as
    /// finite-difference gradient checks, where individual entries are
    /// perturbed independently.
    pub fn new_unnormalized(width: u32, height: u32, classes: u32, probs: Vec<f64>) -> Result<Self> {
        let expect = (width as usize) * (height as usize) * (classes as usize);
        if probs.len() != expect {
            return Err(Error::invalid(format!(
                "probability count {} does not match {}x{}x{}",
                probs.len(),
                width,
                height,
                classes
            )));
        }
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        Ok(ProbabilityMap {
            width,
            height,
            classes,
            probs,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn classes(&self) -> u32 {
        self.classes
    }

    pub fn values(&self) -> &[f64] {
        &self.probs
    }
}

impl GroundTruthMap {
    pub fn new(width: u32, height: u32, classes: u32, targets: Vec<f64>) -> Result<Self> {
        let expect = (width as usize) * (height as usize) * (classes as usize);
        if targets.len() != expect {
            return Err(Error::invalid(format!(
                "target count {} does not match {}x{}x{}",
                targets.len(),
                width,
                height,
                classes
            )));
        }
        if targets.iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(Error::invalid("targets must be 0 or 1"));
        }
        if classes > 1 {
            let m = classes as usize;
            for (i, px) in targets.chunks(m).enumerate() {
                let active = px.iter().filter(|&&t| t == 1.0).count();
                if active != 1 {
                    return Err(Error::invalid(format!(
                        "pixel {i} has {active} active classes, expected one-hot"
                    )));
                }
            }
        }
        Ok(GroundTruthMap {
            width,
            height,
            classes,
            targets,
        })
    }

    pub fn classes(&self) -> u32 {
        self.classes
    }

    pub fn values(&self) -> &[f64] {
        &self.targets
    }
}

fn check_shapes(p: &ProbabilityMap, t: &GroundTruthMap) -> Result<()> {
    if p.width != t.width || p.height != t.height {
        return Err(Error::DimensionMismatch(
            p.width, p.height, t.width, t.height,
        ));
    }
    if p.classes != t.classes {
        return Err(Error::invalid(format!(
            "class count mismatch: {} vs {}",
            p.classes, t.classes
        )));
    }
    Ok(())
}

/// Soft Dice loss: 1 - (2*overlap + eps) / (sum_t + sum_p + eps), with
/// overlap = Σ t·p over all entries.
pub fn dice_loss(p: &ProbabilityMap, t: &GroundTruthMap, cfg: &LossConfig) -> Result<LossValue> {
    check_shapes(p, t)?;
    cfg.validate()?;
    let overlap: f64 = p.probs.iter().zip(&t.targets).map(|(&a, &b)| a * b).sum();
    let sum_p: f64 = p.probs.iter().sum();
    let sum_t: f64 = t.targets.iter().sum();
    let denom = sum_t + sum_p + cfg.epsilon;
    let numer = 2.0 * overlap + cfg.epsilon;
    let value = 1.0 - numer / denom;
    let grad = t
        .targets
        .iter()
        .map(|&ti| -(2.0 * ti * denom - numer) / (denom * denom))
        .collect();
    Ok(LossValue { value, grad })
}

/// Mean binary cross-entropy over pixels; requires single-class maps.
/// Predictions clamp to [clamp, 1-clamp]; gradient is 0 where the clamp is
/// active.
pub fn binary_crossentropy(
    p: &ProbabilityMap,
    t: &GroundTruthMap,
    cfg: &LossConfig,
) -> Result<LossValue> {
    check_shapes(p, t)?;
    cfg.validate()?;
    let prob_channel: Box<dyn Fn(usize) -> f64> = match p.classes {
        1 => Box::new(|i| p.probs[i]),
        // two-class softmax collapses to its second channel
        2 => Box::new(|i| p.probs[2 * i + 1]),
        _ => {
            return Err(Error::invalid(
                "binary cross-entropy requires 1 or 2 classes",
            ))
        }
    };
    let target_channel: Box<dyn Fn(usize) -> f64> = match t.classes {
        1 => Box::new(|i| t.targets[i]),
        _ => Box::new(|i| t.targets[2 * i + 1]),
    };
    let n_pixels = (p.width as usize) * (p.height as usize);
    let n = n_pixels as f64;
    let lo = cfg.clamp;
    let hi = 1.0 - cfg.clamp;
    let mut value = 0.0;
    let mut grad = vec![0.0; p.probs.len()];
    for i in 0..n_pixels {
        let y = target_channel(i);
        let raw = prob_channel(i);
        let yh = raw.clamp(lo, hi);
        value -= y * yh.ln() + (1.0 - y) * (1.0 - yh).ln();
        if raw > lo && raw < hi {
            let g = (-y / yh + (1.0 - y) / (1.0 - yh)) / n;
            match p.classes {
                1 => grad[i] = g,
                _ => grad[2 * i + 1] = g,
            }
        }
    }
    Ok(LossValue {
        value: value / n,
        grad,
    })
}

/// Mean categorical cross-entropy over pixels: -Σ_i t_i ln(p_i), p clamped.
pub fn categorical_crossentropy(
    p: &ProbabilityMap,
    t: &GroundTruthMap,
    cfg: &LossConfig,
) -> Result<LossValue> {
    check_shapes(p, t)?;
    cfg.validate()?;
    if p.classes < 2 {
        return Err(Error::invalid(
            "categorical cross-entropy requires at least 2 classes",
        ));
    }
    let n = ((p.width as usize) * (p.height as usize)) as f64;
    let lo = cfg.clamp;
    let hi = 1.0 - cfg.clamp;
    let mut value = 0.0;
    let mut grad = vec![0.0; p.probs.len()];
    for (i, (&pi, &ti)) in p.probs.iter().zip(&t.targets).enumerate() {
        if ti == 0.0 {
            continue;
        }
        let clamped = pi.clamp(lo, hi);
        value -= ti * clamped.ln();
        if pi > lo && pi < hi {
            grad[i] = -ti / clamped / n;
        }
    }
    Ok(LossValue {
        value: value / n,
        grad,
    })
}

/// Composite loss: Dice loss plus cross-entropy. The cross-entropy form is
/// binary for single-class maps and categorical otherwise, unless
/// overridden.
pub fn dice_entropy(
    p: &ProbabilityMap,
    t: &GroundTruthMap,
    cfg: &LossConfig,
    kind: CrossEntropyKind,
) -> Result<LossValue> {
    let dc = dice_loss(p, t, cfg)?;
    let ce = match kind {
        CrossEntropyKind::Auto => {
            if p.classes == 1 {
                binary_crossentropy(p, t, cfg)?
            } else {
                categorical_crossentropy(p, t, cfg)?
            }
        }
        CrossEntropyKind::Binary => binary_crossentropy(p, t, cfg)?,
        CrossEntropyKind::Categorical => categorical_crossentropy(p, t, cfg)?,
    };
    let grad = dc
        .grad
        .iter()
        .zip(&ce.grad)
        .map(|(&a, &b)| a + b)
        .collect();
    Ok(LossValue {
        value: dc.value + ce.value,
        grad,
    })
}

/// (1/N) Σ L over a nonempty batch of losses.
pub fn mean_empirical_risk(losses: &[f64]) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::invalid("empirical risk of an empty batch"));
    }
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn sigmoid_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// Swish activation x·σ(x): smooth, non-monotonic, bounded below,
/// unbounded above.
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn swish_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Derivative of ReLU; defined as 0 at exactly x = 0.
pub fn relu_deriv(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Elementwise map of a scalar activation over a buffer.
pub fn elementwise(xs: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    xs.iter().map(|&x| f(x)).collect()
}
