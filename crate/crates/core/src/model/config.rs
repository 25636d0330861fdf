use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Plain additive attention.
    Baseline,
    /// Attention with a sentinel and sentinel gate.
    Adaptive,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Adaptive => "adaptive",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "adaptive" => Ok(Mode::Adaptive),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected baseline or adaptive)"))),
        }
    }
}

/// Architecture and reproducibility settings of a model.
///
/// `hidden_dim` is the decoder state width; each encoder direction uses half of
/// it, so annotations and decoder states have equal width.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub mode: Mode,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: Mode::Adaptive,
            src_vocab: 16,
            tgt_vocab: 16,
            emb_dim: 32,
            hidden_dim: 64,
            dropout_rate: 0.2,
            max_len: 50,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.src_vocab <= crate::data::SPECIALS.len() || self.tgt_vocab <= crate::data::SPECIALS.len() {
            return fail(format!(
                "vocabularies must hold more than the 4 reserved tokens (src {}, tgt {})",
                self.src_vocab, self.tgt_vocab
            ));
        }
        if self.emb_dim == 0 {
            return fail("emb_dim must be positive".into());
        }
        if self.hidden_dim == 0 || !self.hidden_dim.is_multiple_of(2) {
            return fail(format!("hidden_dim must be positive and even, got {}", self.hidden_dim));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if self.max_len == 0 {
            return fail("max_len must be positive".into());
        }
        Ok(())
    }

    /// Width of one encoder direction.
    pub fn encoder_dim(&self) -> usize {
        self.hidden_dim / 2
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("mode", self.mode.to_string()),
            ("src_vocab", self.src_vocab.to_string()),
            ("tgt_vocab", self.tgt_vocab.to_string()),
            ("emb_dim", self.emb_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("dropout_rate", format!("{:?}", self.dropout_rate)),
            ("max_len", self.max_len.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Applies one `key = value` setting; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" => self.mode = value.parse()?,
            "src_vocab" => self.src_vocab = parse_value(key, value)?,
            "tgt_vocab" => self.tgt_vocab = parse_value(key, value)?,
            "emb_dim" => self.emb_dim = parse_value(key, value)?,
            "hidden_dim" => self.hidden_dim = parse_value(key, value)?,
            "dropout_rate" => self.dropout_rate = parse_value(key, value)?,
            "max_len" => self.max_len = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown model key `{other}`"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (key, value) in parse_kv(text)? {
            cfg.set(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
