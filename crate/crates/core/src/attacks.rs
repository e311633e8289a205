//! Untargeted FGSM and BIM in pixel units on the `[0, 255]` scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::Image;
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Fgsm,
    Bim,
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fgsm" => Ok(AttackKind::Fgsm),
            "bim" => Ok(AttackKind::Bim),
            _ => Err(Error::Parameter(format!("unknown attack {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub epsilon: f64,
    /// BIM step size; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// BIM iteration count; defaults to `min(ε + 4, round(1.25 ε))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

impl AttackConfig {
    pub fn fgsm(epsilon: f64) -> Self {
        AttackConfig {
            kind: AttackKind::Fgsm,
            epsilon,
            alpha: None,
            iterations: None,
        }
    }

    pub fn bim(epsilon: f64) -> Self {
        AttackConfig {
            kind: AttackKind::Bim,
            ..Self::fgsm(epsilon)
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(1.0)
    }

    pub fn iterations(&self) -> usize {
        self.iterations.unwrap_or_else(|| {
            let e = self.epsilon;
            ((e + 4.0).min((1.25 * e).round()) as usize).max(1)
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Parameter(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if self.kind == AttackKind::Bim && !(self.alpha() > 0.0 && self.iterations() >= 1) {
            return Err(Error::Parameter(
                "BIM needs alpha > 0 and iterations >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Short label such as `FGSM e=5`.
    pub fn label(&self) -> String {
        let kind = match self.kind {
            AttackKind::Fgsm => "FGSM",
            AttackKind::Bim => "BIM",
        };
        format!("{kind} e={}", self.epsilon)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Rounds to 8-bit values, stepping back toward `x` wherever rounding
/// would leave the ε-ball.
fn requantize(x: &Image, adv: &[f64], epsilon: f64) -> Result<Image> {
    let data = adv
        .iter()
        .zip(x.data())
        .map(|(&a, &o)| {
            let mut q = a.round();
            if (q - o).abs() > epsilon {
                q -= sign(q - o);
            }
            q.clamp(0.0, 255.0)
        })
        .collect();
    Image::from_data(x.width(), x.height(), x.channels(), data)
}

fn step(model: &Model, x: &[f64], img: &Image, label: usize, size: f64) -> Result<Vec<f64>> {
    let cur = Image::from_data_clamped(img.width(), img.height(), img.channels(), x.to_vec())?;
    let (_, grad) = model.loss_and_input_grad(&cur, label)?;
    Ok(x.iter()
        .zip(&grad)
        .map(|(v, g)| (v + size * sign(*g)).clamp(0.0, 255.0))
        .collect())
}

/// `clamp(x + ε·sign(∇J))`, then 8-bit re-quantization.
pub fn fgsm(model: &Model, img: &Image, label: usize, epsilon: f64) -> Result<Image> {
    AttackConfig::fgsm(epsilon).validate()?;
    let adv = step(model, img.data(), img, label, epsilon)?;
    requantize(img, &adv, epsilon)
}

/// Every real-valued BIM iterate, starting after the first step.
pub fn bim_trace(
    model: &Model,
    img: &Image,
    label: usize,
    epsilon: f64,
    alpha: f64,
    iterations: usize,
) -> Result<Vec<Vec<f64>>> {
    AttackConfig {
        kind: AttackKind::Bim,
        epsilon,
        alpha: Some(alpha),
        iterations: Some(iterations),
    }
    .validate()?;
    let x0 = img.data();
    let mut x = x0.to_vec();
    let mut trace = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        x = step(model, &x, img, label, alpha)?;
        for (v, o) in x.iter_mut().zip(x0) {
            *v = v.clamp(o - epsilon, o + epsilon);
        }
        trace.push(x.clone());
    }
    Ok(trace)
}

/// Iterated FGSM with step `alpha`, projected onto the ε-ball after every
/// step, re-quantized once at the end.
pub fn bim(
    model: &Model,
    img: &Image,
    label: usize,
    epsilon: f64,
    alpha: f64,
    iterations: usize,
) -> Result<Image> {
    let trace = bim_trace(model, img, label, epsilon, alpha, iterations)?;
    requantize(img, trace.last().expect("iterations >= 1"), epsilon)
}

pub fn attack(model: &Model, img: &Image, label: usize, cfg: &AttackConfig) -> Result<Image> {
    match cfg.kind {
        AttackKind::Fgsm => fgsm(model, img, label, cfg.epsilon),
        AttackKind::Bim => bim(
            model,
            img,
            label,
            cfg.epsilon,
            cfg.alpha(),
            cfg.iterations(),
        ),
    }
}
