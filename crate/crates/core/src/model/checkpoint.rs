//! Versioned binary checkpoint.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic        8 bytes  "ADNMTCKP"
//! version      u32
//! text length  u64, then UTF-8 `key = value` lines (config, optimizer, metadata, vocabularies)
//! tensor count u64
//! per tensor   u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64
//! ```
//!
//! Model parameters are stored under their own names, AdaDelta accumulators
//! under `adadelta.g2/<name>` and `adadelta.dx2/<name>`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::config::{parse_kv, parse_value, Mode, ModelConfig};
use super::network::Model;
use super::optim::AdaDelta;
use super::train::TrainState;
use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 8] = b"ADNMTCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub state: TrainState,
    /// Source and target vocabularies, when the model was trained from text.
    pub vocabs: Option<(Vocabulary, Vocabulary)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(format!("truncated while reading {what}"));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> std::result::Result<usize, String> {
        usize::try_from(self.u64(what)?).map_err(|_| format!("{what} too large"))
    }
}

fn g2_name(name: &str) -> String {
    format!("adadelta.g2/{name}")
}

fn dx2_name(name: &str) -> String {
    format!("adadelta.dx2/{name}")
}

impl Checkpoint {
    fn header_text(&self) -> String {
        let mut text = self.model.config.to_text();
        let st = &self.state;
        text.push_str(&format!("adadelta.rho = {:?}\n", st.optimizer.rho));
        text.push_str(&format!("adadelta.eps = {:?}\n", st.optimizer.eps));
        text.push_str(&format!("meta.epoch = {}\n", st.epoch));
        let best = st.best_dev_bleu.map_or_else(|| "none".to_string(), |b| format!("{b:?}"));
        text.push_str(&format!("meta.best_dev_bleu = {best}\n"));
        if let Some((src, tgt)) = &self.vocabs {
            text.push_str(&format!("vocab.src = {}\n", src.regular_tokens().join(" ")));
            text.push_str(&format!("vocab.tgt = {}\n", tgt.regular_tokens().join(" ")));
        }
        text
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let text = self.header_text();
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(text.as_bytes());

        let params = &self.model.params;
        let opt = &self.state.optimizer;
        let mut records: Vec<(String, &Tensor)> = Vec::new();
        for (id, name, t) in params.iter() {
            records.push((name.to_string(), t));
            records.push((g2_name(name), &opt.sq_grad[id.index()]));
            records.push((dx2_name(name), &opt.sq_update[id.index()]));
        }
        out.extend_from_slice(&(records.len() as u64).to_le_bytes());
        for (name, t) in records {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err("not a checkpoint file (bad magic)".into());
        }
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported format version {version} (expected {FORMAT_VERSION})"));
        }
        let n = r.len("header length")?;
        let text = std::str::from_utf8(r.take(n, "header")?).map_err(|_| "header is not UTF-8".to_string())?;

        let mut config = ModelConfig::default();
        let (mut rho, mut eps, mut epoch, mut best) = (None, None, None, None);
        let (mut vsrc, mut vtgt) = (None, None);
        for (k, v) in parse_kv(text).map_err(|e| e.to_string())? {
            let e = |e: Error| e.to_string();
            match k.as_str() {
                "adadelta.rho" => rho = Some(parse_value::<f64>(&k, &v).map_err(e)?),
                "adadelta.eps" => eps = Some(parse_value::<f64>(&k, &v).map_err(e)?),
                "meta.epoch" => epoch = Some(parse_value::<usize>(&k, &v).map_err(e)?),
                "meta.best_dev_bleu" if v == "none" => best = Some(None),
                "meta.best_dev_bleu" => best = Some(Some(parse_value::<f64>(&k, &v).map_err(e)?)),
                "vocab.src" => vsrc = Some(v),
                "vocab.tgt" => vtgt = Some(v),
                _ => config.set(&k, &v).map_err(e)?,
            }
        }
        let missing = |what: &str| format!("header lacks `{what}`");
        let vocabs = match (vsrc, vtgt) {
            (Some(s), Some(t)) => {
                let v = |s: &str| Vocabulary::from_tokens(s.split_whitespace()).map_err(|e| e.to_string());
                Some((v(&s)?, v(&t)?))
            }
            (None, None) => None,
            _ => return Err("header has only one vocabulary".into()),
        };
        let mut model = Model::new(config).map_err(|e| e.to_string())?;
        if let Some((s, t)) = &vocabs {
            if s.len() != model.config.src_vocab || t.len() != model.config.tgt_vocab {
                return Err("vocabulary sizes disagree with the configuration".into());
            }
        }
        let mut optimizer = AdaDelta::new(
            &model.params,
            rho.ok_or_else(|| missing("adadelta.rho"))?,
            eps.ok_or_else(|| missing("adadelta.eps"))?,
        )
        .map_err(|e| e.to_string())?;

        let count = r.len("tensor count")?;
        let mut tensors: HashMap<String, Tensor> = HashMap::new();
        for _ in 0..count {
            let len = r.u32("tensor name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "tensor name")?)
                .map_err(|_| "tensor name is not UTF-8".to_string())?
                .to_string();
            let rows = r.len("rows")?;
            let cols = r.len("cols")?;
            let size = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| format!("tensor `{name}` too large"))?;
            let raw = r.take(size, &format!("tensor `{name}`"))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::from_vec(rows, cols, data).map_err(|e| e.to_string())?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(format!("duplicate tensor `{name}`"));
            }
        }
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            let name = model.params.name(id).to_string();
            let mut fetch = |key: String, want: (usize, usize)| -> std::result::Result<Tensor, String> {
                let t = tensors.remove(&key).ok_or_else(|| format!("missing tensor `{key}`"))?;
                if t.shape() != want {
                    return Err(format!("tensor `{key}` has shape {:?}, expected {want:?}", t.shape()));
                }
                Ok(t)
            };
            let shape = model.params.get(id).shape();
            *model.params.get_mut(id) = fetch(name.clone(), shape)?;
            optimizer.sq_grad[id.index()] = fetch(g2_name(&name), shape)?;
            optimizer.sq_update[id.index()] = fetch(dx2_name(&name), shape)?;
        }
        if let Some(extra) = tensors.keys().min() {
            return Err(format!("unexpected tensor `{extra}`"));
        }
        Ok(Checkpoint {
            model,
            state: TrainState {
                optimizer,
                epoch: epoch.ok_or_else(|| missing("meta.epoch"))?,
                best_dev_bleu: best.ok_or_else(|| missing("meta.best_dev_bleu"))?,
            },
            vocabs,
        })
    }

    /// Writes via a temporary sibling file, so a failed save leaves no partial checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("partial");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| {
            let _ = fs::remove_file(&tmp);
            Error::io(path, e)
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|reason| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Loads and checks that the model was built in `mode`.
    pub fn load_expecting(path: &Path, mode: Mode) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        if ck.model.mode() != mode {
            return Err(Error::ModeMismatch {
                expected: mode.to_string(),
                found: ck.model.mode().to_string(),
            });
        }
        Ok(ck)
    }
}
