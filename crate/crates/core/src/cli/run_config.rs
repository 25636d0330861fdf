use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{parse_kv, parse_value, ModelConfig, TrainConfig};

/// Everything `train` needs, read from a flat `key = value` file.
///
/// Relative paths are resolved against the directory of the config file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Vocabulary sizes inside are filled in after the vocabularies are built.
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Most frequent words kept per side (specials not included).
    pub src_words: usize,
    pub tgt_words: usize,
    pub train_src: Option<PathBuf>,
    pub train_tgt: Option<PathBuf>,
    pub dev_src: Option<PathBuf>,
    pub dev_tgt: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            src_words: 30000,
            tgt_words: 30000,
            train_src: None,
            train_tgt: None,
            dev_src: None,
            dev_tgt: None,
            checkpoint: PathBuf::from("model.ckpt"),
            log: PathBuf::from("train.log"),
        }
    }
}

fn exec_name(e: Exec) -> &'static str {
    match e {
        Exec::Sequential => "sequential",
        Exec::Parallel => "parallel",
    }
}

impl RunConfig {
    /// Applies one setting. Paths are taken relative to `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || Some(base.join(value));
        match key {
            "mode" | "emb_dim" | "hidden_dim" | "dropout_rate" | "max_len" | "seed" => self.model.set(key, value)?,
            "src_words" => self.src_words = parse_value(key, value)?,
            "tgt_words" => self.tgt_words = parse_value(key, value)?,
            "epochs" => self.train.epochs = parse_value(key, value)?,
            "batch_size" => self.train.batch_size = parse_value(key, value)?,
            "rho" => self.train.rho = parse_value(key, value)?,
            "eps" => self.train.eps = parse_value(key, value)?,
            "clip_norm" => {
                let c: f64 = parse_value(key, value)?;
                self.train.clip_norm = (c > 0.0).then_some(c);
            }
            "exec" => {
                self.train.exec = match value {
                    "sequential" => Exec::Sequential,
                    "parallel" => Exec::Parallel,
                    _ => return Err(Error::Config(format!("exec must be sequential or parallel, got `{value}`"))),
                }
            }
            "train_src" => self.train_src = path(),
            "train_tgt" => self.train_tgt = path(),
            "dev_src" => self.dev_src = path(),
            "dev_tgt" => self.dev_tgt = path(),
            "checkpoint" => self.checkpoint = base.join(value),
            "log" => self.log = base.join(value),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Reads `path`, then applies `overrides` (`key=value`) on top.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = RunConfig::default();
        for (k, v) in parse_kv(&text)? {
            cfg.set(&k, &v, base)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            cfg.set(k.trim(), v.trim(), Path::new("."))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let req = |p: &Option<PathBuf>, k: &str| {
            if p.is_none() {
                return Err(Error::Config(format!("`{k}` is required")));
            }
            Ok(())
        };
        req(&self.train_src, "train_src")?;
        req(&self.train_tgt, "train_tgt")?;
        if self.dev_src.is_some() != self.dev_tgt.is_some() {
            return Err(Error::Config("set both dev_src and dev_tgt, or neither".into()));
        }
        if self.train.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.train.rho > 0.0 && self.train.rho < 1.0) || !(self.train.eps > 0.0) {
            return Err(Error::Config("rho must lie in (0, 1) and eps must be positive".into()));
        }
        if self.src_words == 0 || self.tgt_words == 0 {
            return Err(Error::Config("src_words and tgt_words must be positive".into()));
        }
        let mut probe = self.model.clone();
        probe.src_vocab = probe.src_vocab.max(5);
        probe.tgt_vocab = probe.tgt_vocab.max(5);
        probe.validate()
    }

    /// Resolved settings, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let opt = |p: &Option<PathBuf>| p.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("mode", m.mode.to_string());
        line("emb_dim", m.emb_dim.to_string());
        line("hidden_dim", m.hidden_dim.to_string());
        line("dropout_rate", format!("{:?}", m.dropout_rate));
        line("max_len", m.max_len.to_string());
        line("seed", m.seed.to_string());
        line("src_words", self.src_words.to_string());
        line("tgt_words", self.tgt_words.to_string());
        line("epochs", t.epochs.to_string());
        line("batch_size", t.batch_size.to_string());
        line("rho", format!("{:?}", t.rho));
        line("eps", format!("{:?}", t.eps));
        line("clip_norm", format!("{:?}", t.clip_norm.unwrap_or(0.0)));
        line("exec", exec_name(t.exec).to_string());
        line("train_src", opt(&self.train_src));
        line("train_tgt", opt(&self.train_tgt));
        line("dev_src", opt(&self.dev_src));
        line("dev_tgt", opt(&self.dev_tgt));
        line("checkpoint", self.checkpoint.display().to_string());
        line("log", self.log.display().to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_resolves_paths_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "# toy\ntrain_src = a.src\ntrain_tgt = a.tgt\nmode = baseline\nepochs = 3\n").unwrap();
        let cfg = RunConfig::load(&p, &["epochs=5".into(), "clip_norm = 0".into()]).unwrap();
        assert_eq!(cfg.train_src, Some(dir.path().join("a.src")));
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.train.clip_norm, None);
        assert_eq!(cfg.model.mode, crate::model::Mode::Baseline);
        assert!(cfg.to_text().contains("epochs = 5\n"));
    }

    #[test]
    fn rejects_unknown_and_missing_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "train_src = a\ntrain_tgt = b\nlearning_rate = 1\n").unwrap();
        assert!(matches!(RunConfig::load(&p, &[]), Err(Error::Config(_))));
        std::fs::write(&p, "train_src = a\n").unwrap();
        assert!(matches!(RunConfig::load(&p, &[]), Err(Error::Config(_))));
        std::fs::write(&p, "train_src = a\ntrain_tgt = b\n").unwrap();
        assert!(RunConfig::load(&p, &["hidden_dim=9".into()]).is_err());
        assert!(RunConfig::load(&p, &["nonsense".into()]).is_err());
    }
}
