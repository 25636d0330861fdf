use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NodeId, ParamStore, Tape};
use crate::error::{Error, Result};


#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference half step.
    pub step: f64,
    /// Components checked per tensor; smaller tensors are checked exhaustively.
    pub samples_per_tensor: usize,
    pub seed: u64,
    /// Negative-control hook: added to every analytic gradient component.
    pub corrupt: Option<f64>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-3,
            samples_per_tensor: 50,
            seed: 0,
            corrupt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.worst() < tolerance
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares tape gradients of `build_loss` against central finite differences.
///
/// A non-positive step or errors from `build_loss` are reported as an infinite error for the affected
/// parameter; the check itself never fails.
pub fn grad_check<F>(build_loss: F, params: &ParamStore, opts: &GradCheckOptions) -> GradCheckReport
where
    F: Fn(&mut Tape<'_>) -> Result<NodeId>,
{
    let analytic = if opts.step > 0.0 && opts.step.is_finite() {
        let mut tape = Tape::new(params);
        build_loss(&mut tape).and_then(|loss| tape.backward(loss))
    } else {
        Err(Error::domain("finite-difference step must be positive"))
    };
    let analytic = match analytic {
        Ok(b) => b.params,
        Err(_) => {
            return GradCheckReport {
                params: params
                    .iter()
                    .map(|(_, name, _)| ParamCheck {
                        name: name.to_string(),
                        checked: 0,
                        max_rel_err: f64::INFINITY,
                    })
                    .collect(),
            }
        }
    };

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(store);
        let loss = build_loss(&mut tape)?;
        Ok(tape.value(loss).item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = params.clone();
    let mut reports = Vec::with_capacity(params.len());
    for (id, name, tensor) in params.iter() {
        let n = tensor.len();
        let components: Vec<usize> = if n <= opts.samples_per_tensor {
            (0..n).collect()
        } else {
            let mut idx = rand::seq::index::sample(&mut rng, n, opts.samples_per_tensor).into_vec();
            idx.sort_unstable();
            idx
        };
        let mut worst: f64 = 0.0;
        for &k in &components {
            let orig = tensor.data()[k];
            work.get_mut(id).data_mut()[k] = orig + opts.step;
            let plus = eval(&work);
            work.get_mut(id).data_mut()[k] = orig - opts.step;
            let minus = eval(&work);
            work.get_mut(id).data_mut()[k] = orig;
            let err = match (plus, minus) {
                (Ok(p), Ok(m)) => {
                    let numeric = (p - m) / (2.0 * opts.step);
                    let a = analytic.get(id).data()[k] + opts.corrupt.unwrap_or(0.0);
                    relative_error(a, numeric)
                }
                _ => f64::INFINITY,
            };
            worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
        }
        reports.push(ParamCheck {
            name: name.to_string(),
            checked: components.len(),
            max_rel_err: worst,
        });
    }
    GradCheckReport { params: reports }
}
