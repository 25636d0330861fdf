use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bleu::{corpus_bleu_from_stats, sentence_stats, SentenceStats};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, Exec};

pub const MIN_SAMPLES: usize = 100;

/// One-sided paired bootstrap test of "system B beats system A".
#[derive(Clone, Debug, PartialEq)]
pub struct SignificanceResult {
    /// Fraction of resamples where B's BLEU is not above A's.
    pub p_value: f64,
    pub samples: usize,
    pub bleu_a: f64,
    pub bleu_b: f64,
    /// Mean of `bleu(B) - bleu(A)` over resamples.
    pub mean_delta: f64,
    /// 2.5th and 97.5th percentiles of the resampled delta.
    pub delta_interval: (f64, f64),
}

impl SignificanceResult {
    pub fn delta(&self) -> f64 {
        self.bleu_b - self.bleu_a
    }
}

fn sum_stats(all: &[SentenceStats], idx: &[usize]) -> SentenceStats {
    let mut s = SentenceStats::default();
    for &i in idx {
        s.add(&all[i]);
    }
    s
}

pub fn bootstrap_significance<S: AsRef<str> + Sync>(
    hyps_a: &[Vec<S>],
    hyps_b: &[Vec<S>],
    refs: &[Vec<Vec<S>>],
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<SignificanceResult> {
    if samples < MIN_SAMPLES {
        return Err(Error::domain(format!("bootstrap needs at least {MIN_SAMPLES} samples, got {samples}")));
    }
    if hyps_a.len() != refs.len() || hyps_b.len() != refs.len() {
        return Err(Error::domain(format!(
            "sentence counts differ: A {}, B {}, references {}",
            hyps_a.len(),
            hyps_b.len(),
            refs.len()
        )));
    }
    if refs.is_empty() {
        return Err(Error::domain("cannot resample an empty test set"));
    }
    let stats = |hyps: &[Vec<S>]| -> Result<Vec<SentenceStats>> {
        hyps.iter().zip(refs).map(|(h, r)| sentence_stats(h, r)).collect()
    };
    let (sa, sb) = (stats(hyps_a)?, stats(hyps_b)?);
    let all: Vec<usize> = (0..refs.len()).collect();
    let bleu_a = corpus_bleu_from_stats(&sum_stats(&sa, &all)).bleu;
    let bleu_b = corpus_bleu_from_stats(&sum_stats(&sb, &all)).bleu;

    let n = refs.len();
    let mut deltas = exec.map_range(samples, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[k as u64]));
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let a = corpus_bleu_from_stats(&sum_stats(&sa, &idx)).bleu;
        let b = corpus_bleu_from_stats(&sum_stats(&sb, &idx)).bleu;
        (b <= a, b - a)
    });
    let not_better = deltas.iter().filter(|d| d.0).count();
    let mean_delta = deltas.iter().map(|d| d.1).sum::<f64>() / samples as f64;
    deltas.sort_by(|x, y| x.1.total_cmp(&y.1));
    let pct = |q: f64| deltas[((q * (samples - 1) as f64).round() as usize).min(samples - 1)].1;
    Ok(SignificanceResult {
        p_value: not_better as f64 / samples as f64,
        samples,
        bleu_a,
        bleu_b,
        mean_delta,
        delta_interval: (pct(0.025), pct(0.975)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn refs() -> Vec<Vec<Vec<String>>> {
        ["a b c d e", "f g h i j", "k l m n o", "p q r s t"]
            .iter()
            .map(|s| vec![toks(s)])
            .collect()
    }

    #[test]
    fn identical_systems_tie_everywhere() {
        let r = refs();
        let h: Vec<Vec<String>> = vec![toks("a b c d x"), toks("f g h i"), toks("k l m n o"), toks("p q")];
        let res = bootstrap_significance(&h, &h, &r, 200, 3, Exec::Sequential).unwrap();
        assert_eq!(res.p_value, 1.0);
        assert_eq!(res.delta(), 0.0);
    }

    #[test]
    fn uniformly_better_system_has_zero_p() {
        let r = refs();
        let a: Vec<Vec<String>> = r.iter().map(|x| x[0][..4].to_vec()).collect();
        let b: Vec<Vec<String>> = r.iter().map(|x| x[0].clone()).collect();
        let res = bootstrap_significance(&a, &b, &r, 300, 9, Exec::Parallel).unwrap();
        assert_eq!(res.p_value, 0.0);
        assert!(res.delta() > 0.0);
        assert!(res.delta_interval.0 > 0.0);
    }

    #[test]
    fn reproducible_and_exec_independent() {
        let r = refs();
        let a: Vec<Vec<String>> = vec![toks("a b c d e"), toks("f g"), toks("k l m x o"), toks("p q r s t")];
        let b: Vec<Vec<String>> = vec![toks("a b c d"), toks("f g h i j"), toks("k l m n o"), toks("p q r")];
        let x = bootstrap_significance(&a, &b, &r, 500, 42, Exec::Sequential).unwrap();
        let y = bootstrap_significance(&a, &b, &r, 500, 42, Exec::Parallel).unwrap();
        assert_eq!(x, y);
        assert!(x.p_value > 0.0 && x.p_value < 1.0);
    }

    #[test]
    fn validates_inputs() {
        let r = refs();
        let h: Vec<Vec<String>> = r.iter().map(|x| x[0].clone()).collect();
        assert!(bootstrap_significance(&h, &h, &r, 99, 0, Exec::Sequential).is_err());
        assert!(bootstrap_significance(&h[..3], &h, &r, 100, 0, Exec::Sequential).is_err());
    }
}
