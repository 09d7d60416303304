use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{log_softmax, softmax, DiscriminatorNet, Matrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// Minimize `mean log(1 - D(p))`.
    Minimax,
    /// Minimize `-mean log D(p)`.
    #[default]
    NonSaturating,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GanLosses {
    pub disc: f64,
    pub gen: f64,
}

/// Both objectives from discriminator probabilities `D(·) = P(real)`.
pub fn gan_loss(d_real: &[f64], d_fake: &[f64], variant: GeneratorLoss) -> Result<GanLosses> {
    for &p in d_real.iter().chain(d_fake) {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("discriminator output {p} not in (0, 1)")));
        }
    }
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::shape("empty batch"));
    }
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&p| f(p)).sum::<f64>() / v.len() as f64;
    let disc = -mean(d_real, &|p| p.ln()) - mean(d_fake, &|p| (1.0 - p).ln());
    let gen = match variant {
        GeneratorLoss::NonSaturating => -mean(d_fake, &|p| p.ln()),
        GeneratorLoss::Minimax => mean(d_fake, &|p| (1.0 - p).ln()),
    };
    Ok(GanLosses { disc, gen })
}

/// Discriminator loss on stacked logits whose first `n_real` rows are real
/// samples, with its gradient.
pub fn disc_loss_logits(logits: &Matrix, n_real: usize) -> (f64, Matrix) {
    let n_fake = logits.rows() - n_real;
    assert!(n_real > 0 && n_fake > 0, "both halves must be non-empty");
    let logp = log_softmax(logits);
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for r in 0..logits.rows() {
        let (label, n) = if r < n_real {
            (DiscriminatorNet::REAL, n_real)
        } else {
            (DiscriminatorNet::FAKE, n_fake)
        };
        loss -= logp.get(r, label) / n as f64;
        let row = grad.row_mut(r);
        row[label] -= 1.0;
        row.iter_mut().for_each(|g| *g /= n as f64);
    }
    (loss, grad)
}

/// Generator loss on the logits of fake samples, with its gradient.
pub fn gen_loss_logits(logits: &Matrix, variant: GeneratorLoss) -> (f64, Matrix) {
    let n = logits.rows() as f64;
    let logp = log_softmax(logits);
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for r in 0..logits.rows() {
        let row = grad.row_mut(r);
        match variant {
            GeneratorLoss::NonSaturating => {
                loss -= logp.get(r, DiscriminatorNet::REAL);
                row[DiscriminatorNet::REAL] -= 1.0;
                row.iter_mut().for_each(|g| *g /= n);
            }
            GeneratorLoss::Minimax => {
                loss += logp.get(r, DiscriminatorNet::FAKE);
                row[DiscriminatorNet::FAKE] -= 1.0;
                row.iter_mut().for_each(|g| *g /= -n);
            }
        }
    }
    (loss / n, grad)
}
