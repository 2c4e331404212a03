//! Model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "LGANMODL" | version u32 | sha256(spec text) [32]
//! spec length u64 | spec text (UTF-8 key = value lines)
//! block count u64 | per block: ndim u32, dims u64 x ndim, values f64 x len
//! history: three length-prefixed f64 arrays (pretrain, d, g)
//! sha256 of everything above [32]
//! ```
//!
//! Generator blocks come first, then discriminator blocks.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::network::{Discriminator, Generator, RecordLayout};
use super::train::{LganConfig, LganHistory, LganModel};
use crate::{Error, Result, Tensor};

pub const MAGIC: &[u8; 8] = b"LGANMODL";
pub const FORMAT_VERSION: u32 = 1;

fn spec_text(model: &LganModel) -> String {
    let l = model.layout();
    let mut s = String::from("format = lgan-model\n");
    s += &format!("layout.steps = {}\nlayout.height = {}\nlayout.width = {}\n", l.steps, l.height, l.width);
    for (i, c) in model.class_names.iter().enumerate() {
        s += &format!("class.{i} = {c}\n");
    }
    s + &model.config.to_kv()
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn model_to_bytes(model: &LganModel) -> Vec<u8> {
    let spec = spec_text(model);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&Sha256::digest(spec.as_bytes()));
    out.extend_from_slice(&(spec.len() as u64).to_le_bytes());
    out.extend_from_slice(spec.as_bytes());
    let blocks: Vec<&Tensor> = model.generator.params.iter().chain(&model.discriminator.params).collect();
    out.extend_from_slice(&(blocks.len() as u64).to_le_bytes());
    for t in blocks {
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    put_f64s(&mut out, &model.history.pretrain_d_loss);
    put_f64s(&mut out, &model.history.d_loss);
    put_f64s(&mut out, &model.history.g_loss);
    let sum = Sha256::digest(&out);
    out.extend_from_slice(&sum);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::CorruptModel(format!("unexpected end of data at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| Error::CorruptModel(format!("length {n} too large")))?;
        if n > self.buf.len() {
            return Err(Error::CorruptModel(format!("length {n} exceeds file size")));
        }
        Ok(n)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::CorruptModel("block too large".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

fn parse_spec(text: &str) -> Result<(RecordLayout, Vec<String>, LganConfig)> {
    let mut config = LganConfig::default();
    let (mut steps, mut height, mut width) = (0, 0, 0);
    let mut classes: Vec<(usize, String)> = Vec::new();
    for line in text.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::CorruptModel(format!("malformed spec line {line:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        let num = |v: &str| v.parse::<usize>().map_err(|_| Error::CorruptModel(format!("bad value for {k}: {v:?}")));
        match k {
            "format" => {}
            "layout.steps" => steps = num(v)?,
            "layout.height" => height = num(v)?,
            "layout.width" => width = num(v)?,
            _ if k.starts_with("class.") => classes.push((num(&k[6..])?, v.to_string())),
            _ => {
                if !config.set(k, v).map_err(|e| Error::CorruptModel(e.to_string()))? {
                    return Err(Error::CorruptModel(format!("unknown spec key {k:?}")));
                }
            }
        }
    }
    classes.sort();
    if classes.iter().enumerate().any(|(i, (j, _))| i != *j) || classes.is_empty() {
        return Err(Error::CorruptModel("class list is not contiguous".into()));
    }
    let layout = RecordLayout::new(steps, height, width).map_err(|e| Error::CorruptModel(e.to_string()))?;
    Ok((layout, classes.into_iter().map(|(_, c)| c).collect(), config))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<LganModel> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::CorruptModel("missing model header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    if bytes.len() < 12 + 32 + 32 {
        return Err(Error::CorruptModel("file too short".into()));
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(Error::CorruptModel("checksum mismatch".into()));
    }
    let mut c = Cursor { buf: body, pos: 12 };
    let digest = c.take(32)?;
    let n = c.len()?;
    let spec_bytes = c.take(n)?;
    if Sha256::digest(spec_bytes).as_slice() != digest {
        return Err(Error::CorruptModel("spec digest mismatch".into()));
    }
    let text = std::str::from_utf8(spec_bytes).map_err(|_| Error::CorruptModel("spec is not UTF-8".into()))?;
    let (layout, class_names, config) = parse_spec(text)?;
    let k = class_names.len();
    let gen_spec = config.generator_spec(layout, k);
    let disc_spec = config.discriminator_spec(layout, k);
    let count = c.len()?;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let ndim = c.u32()? as usize;
        let dims = (0..ndim).map(|_| c.len()).collect::<Result<Vec<_>>>()?;
        let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let len = len.ok_or_else(|| Error::CorruptModel("block too large".into()))?;
        let data = c.f64s(len)?;
        blocks.push(Tensor::new(dims, data).map_err(|e| Error::CorruptModel(e.to_string()))?);
    }
    let n_gen = gen_spec.param_shapes().len();
    if blocks.len() < n_gen {
        return Err(Error::CorruptModel(format!("{} weight blocks, generator alone needs {n_gen}", blocks.len())));
    }
    let disc_blocks = blocks.split_off(n_gen);
    let corrupt = |e: Error| Error::CorruptModel(e.to_string());
    let generator = Generator::from_params(gen_spec, blocks).map_err(corrupt)?;
    let discriminator = Discriminator::from_params(disc_spec, disc_blocks).map_err(corrupt)?;
    let mut history = LganHistory::default();
    for dst in [&mut history.pretrain_d_loss, &mut history.d_loss, &mut history.g_loss] {
        let n = c.len()?;
        *dst = c.f64s(n)?;
    }
    if c.pos != body.len() {
        return Err(Error::CorruptModel("trailing bytes after history".into()));
    }
    Ok(LganModel { generator, discriminator, history, config, class_names })
}

pub fn save_model(model: &LganModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<LganModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
