//! Little-endian binary dataset files with a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, DatasetMeta, Quality, Transition};
use crate::env::{Action, ActionSpace, ReferenceReturns};
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"O2ORLDS1";
pub const DATASET_VERSION: u32 = 1;

pub(crate) struct Writer(pub Vec<u8>);

impl Writer {
    pub fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
    pub fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.f64(*x);
        }
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Self { buf, pos: 0, path }
    }

    pub fn fail<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return self.fail(format!(
                "truncated: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    pub fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let m = self.take(8)?;
        if m != expected {
            return self.fail(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(expected)
            ));
        }
        Ok(())
    }
    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return self.fail(format!("{} trailing bytes", self.buf.len() - self.pos));
        }
        Ok(())
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let meta = &dataset.meta;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.bytes(meta.env.as_bytes());
    w.u8(meta.quality.tag());
    w.u32(meta.state_dim as u32);
    match meta.action_space {
        ActionSpace::Discrete { n } => {
            w.u8(0);
            w.u32(n as u32);
            w.f64(0.0);
            w.f64(0.0);
        }
        ActionSpace::Continuous { dim, low, high } => {
            w.u8(1);
            w.u32(dim as u32);
            w.f64(low);
            w.f64(high);
        }
    }
    w.f64(meta.reference.random_return);
    w.f64(meta.reference.expert_return);
    w.u64(meta.seed);
    w.u64(dataset.transitions.len() as u64);
    for t in &dataset.transitions {
        w.f64s(&t.state);
        match &t.action {
            Action::Discrete(a) => w.u32(*a as u32),
            Action::Continuous(v) => w.f64s(v),
        }
        w.f64(t.reward);
        w.f64s(&t.next_state);
        w.f64(t.discount);
        w.u8(u8::from(t.timeout));
        w.u32(t.episode_step);
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, &w.0)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(format!("dataset {}", path.display()))
        } else {
            e.into()
        }
    })?;
    let mut r = Reader::new(&bytes, path);
    r.magic(DATASET_MAGIC)?;
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return r.fail(format!("unsupported version {version}"));
    }
    let env = String::from_utf8(r.bytes()?.to_vec()).or_else(|_| r.fail("env name is not UTF-8"))?;
    let tag = r.u8()?;
    let quality = match Quality::from_tag(tag) {
        Some(q) => q,
        None => return r.fail(format!("unknown quality tag {tag}")),
    };
    let state_dim = r.u32()? as usize;
    let kind = r.u8()?;
    let width = r.u32()? as usize;
    let (low, high) = (r.f64()?, r.f64()?);
    let action_space = match kind {
        0 => ActionSpace::Discrete { n: width },
        1 => ActionSpace::Continuous { dim: width, low, high },
        k => return r.fail(format!("unknown action kind {k}")),
    };
    let reference = ReferenceReturns {
        random_return: r.f64()?,
        expert_return: r.f64()?,
    };
    let seed = r.u64()?;
    let count = r.u64()? as usize;
    let mut transitions = Vec::with_capacity(count.min(bytes.len()));
    for _ in 0..count {
        let state = r.f64s(state_dim)?;
        let action = match action_space {
            ActionSpace::Discrete { .. } => Action::Discrete(r.u32()? as usize),
            ActionSpace::Continuous { dim, .. } => Action::Continuous(r.f64s(dim)?),
        };
        let reward = r.f64()?;
        let next_state = r.f64s(state_dim)?;
        let discount = r.f64()?;
        let timeout = r.u8()? != 0;
        let episode_step = r.u32()?;
        transitions.push(Transition {
            state,
            action,
            reward,
            next_state,
            discount,
            timeout,
            episode_step,
        });
    }
    r.finish()?;
    let sidecar = fs::read_to_string(sidecar_path(path)).ok();
    let extra: Option<DatasetMeta> = sidecar.and_then(|s| serde_json::from_str(&s).ok());
    let meta = DatasetMeta {
        behavior: extra
            .as_ref()
            .map(|m| m.behavior.clone())
            .unwrap_or_else(|| quality.name().into()),
        behavior_return: extra.and_then(|m| m.behavior_return),
        env,
        quality,
        size: transitions.len(),
        state_dim,
        action_space,
        reference,
        seed,
    };
    Ok(Dataset { meta, transitions })
}
