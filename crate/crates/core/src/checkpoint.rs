//! Binary checkpoints.
//!
//! A file is a sequence of tagged sections, all integers and floats little
//! endian:
//!
//! - `AMA1` model: `u32` layer count, `u32` skip flag, then `in, out,
//!   activation` as `u32` per layer, then every parameter as `f64` in
//!   declaration order (per layer: weights row-major, then bias).
//! - `PRD1` predictor config: `u32` byte length, then JSON.
//! - `OPT1` optimizer: `u32` kind (0 sgd, 1 adam, 2 rmsprop), three `f64`
//!   hyperparameters, `f64` lr, `u64` step, `u64` buffer length, both buffers.
//! - `NRM1` reward normalization: `u64` count, `f64` mean, `f64` m2.

use std::path::Path;

use crate::agent::ActorCritic;
use crate::error::{Error, Result};
use crate::nn::{Activation, LayerShape, MlpModel, Optimizer, OptimizerKind};
use crate::predict::{DualHeadPredictor, PredictorConfig};
use crate::reward::RunningMoments;

const MODEL_TAG: &[u8; 4] = b"AMA1";
const PREDICTOR_TAG: &[u8; 4] = b"PRD1";
const OPTIMIZER_TAG: &[u8; 4] = b"OPT1";
const MOMENTS_TAG: &[u8; 4] = b"NRM1";

/// Everything a checkpoint file can hold.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub predictor: Option<PredictorConfig>,
    pub models: Vec<MlpModel>,
    pub optimizer: Option<Optimizer>,
    pub moments: Option<RunningMoments>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        if let Some(cfg) = &self.predictor {
            let json = serde_json::to_vec(cfg).map_err(|e| Error::Config(e.to_string()))?;
            out.extend_from_slice(PREDICTOR_TAG);
            put_u32(&mut out, json.len() as u32);
            out.extend_from_slice(&json);
        }
        for m in &self.models {
            write_model(&mut out, m);
        }
        if let Some(opt) = &self.optimizer {
            write_optimizer(&mut out, opt);
        }
        if let Some(m) = &self.moments {
            out.extend_from_slice(MOMENTS_TAG);
            put_u64(&mut out, m.count);
            put_f64(&mut out, m.mean);
            put_f64(&mut out, m.m2);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let mut ck = Checkpoint::default();
        while !r.done() {
            let at = r.pos;
            let tag = r.take(4)?;
            match tag {
                t if t == MODEL_TAG => ck.models.push(read_model_body(&mut r)?),
                t if t == PREDICTOR_TAG => {
                    let n = r.u32()? as usize;
                    let json = r.take(n)?;
                    ck.predictor = Some(serde_json::from_slice(json).map_err(|e| Error::Parse {
                        offset: at,
                        message: format!("predictor config: {e}"),
                    })?);
                }
                t if t == OPTIMIZER_TAG => ck.optimizer = Some(read_optimizer_body(&mut r)?),
                t if t == MOMENTS_TAG => {
                    ck.moments = Some(RunningMoments {
                        count: r.u64()?,
                        mean: r.f64()?,
                        m2: r.f64()?,
                    })
                }
                _ => {
                    return Err(Error::Parse {
                        offset: at,
                        message: format!("unknown section tag {tag:?}"),
                    })
                }
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn from_predictor(
        p: &DualHeadPredictor,
        optimizer: Option<&Optimizer>,
        moments: Option<&RunningMoments>,
    ) -> Self {
        Self {
            predictor: Some(p.config().clone()),
            models: p.models().into_iter().cloned().collect(),
            optimizer: optimizer.cloned(),
            moments: moments.copied(),
        }
    }

    pub fn into_predictor(self) -> Result<DualHeadPredictor> {
        let cfg = self
            .predictor
            .ok_or_else(|| Error::InvalidArgument("checkpoint holds no predictor config".into()))?;
        let mut models = self.models.into_iter();
        let (Some(trunk), Some(mean)) = (models.next(), models.next()) else {
            return Err(Error::InvalidArgument("predictor checkpoint needs trunk and mean head".into()));
        };
        DualHeadPredictor::from_models(cfg, trunk, mean, models.next())
    }

    pub fn from_agent(ac: &ActorCritic, optimizer: &Optimizer, moments: Option<&RunningMoments>) -> Self {
        Self {
            predictor: None,
            models: ac.models().into_iter().cloned().collect(),
            optimizer: Some(optimizer.clone()),
            moments: moments.copied(),
        }
    }

    pub fn to_agent(&self) -> Result<ActorCritic> {
        let [trunk, policy, value] = self.models.as_slice() else {
            return Err(Error::InvalidArgument(format!(
                "agent checkpoint needs 3 models, found {}",
                self.models.len()
            )));
        };
        ActorCritic::from_models(trunk.clone(), policy.clone(), value.clone())
    }
}

/// Appends one `AMA1` model record.
pub fn write_model(out: &mut Vec<u8>, m: &MlpModel) {
    out.extend_from_slice(MODEL_TAG);
    put_u32(out, m.layers().len() as u32);
    put_u32(out, u32::from(m.skip()));
    for l in m.layers() {
        put_u32(out, l.in_dim as u32);
        put_u32(out, l.out_dim as u32);
        put_u32(out, l.activation.tag());
    }
    for &p in m.params() {
        put_f64(out, p);
    }
}

/// Reads a single-model file.
pub fn read_model(bytes: &[u8]) -> Result<MlpModel> {
    let mut r = Reader { bytes, pos: 0 };
    let tag = r.take(4)?;
    if tag != MODEL_TAG {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad magic {tag:?}"),
        });
    }
    let m = read_model_body(&mut r)?;
    if !r.done() {
        return Err(Error::Parse {
            offset: r.pos,
            message: "trailing bytes after model".into(),
        });
    }
    Ok(m)
}

pub fn save_model(path: impl AsRef<Path>, m: &MlpModel) -> Result<()> {
    let mut out = Vec::new();
    write_model(&mut out, m);
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    read_model(&std::fs::read(path)?)
}

fn read_model_body(r: &mut Reader) -> Result<MlpModel> {
    let n = r.u32()? as usize;
    let skip = r.u32()? != 0;
    let mut layers = Vec::with_capacity(n);
    let mut count = 0usize;
    for _ in 0..n {
        let at = r.pos;
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let tag = r.u32()?;
        let activation = Activation::from_tag(tag).ok_or_else(|| Error::Parse {
            offset: at + 8,
            message: format!("unknown activation tag {tag}"),
        })?;
        count += in_dim * out_dim + out_dim;
        layers.push(LayerShape {
            in_dim,
            out_dim,
            activation,
        });
    }
    let params = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    MlpModel::from_parts(layers, params, skip)
}

fn write_optimizer(out: &mut Vec<u8>, opt: &Optimizer) {
    out.extend_from_slice(OPTIMIZER_TAG);
    let (kind, h) = match opt.kind {
        OptimizerKind::Sgd => (0, [0.0; 3]),
        OptimizerKind::Adam { beta1, beta2, eps } => (1, [beta1, beta2, eps]),
        OptimizerKind::RmsProp { alpha, eps } => (2, [alpha, eps, 0.0]),
    };
    put_u32(out, kind);
    for v in h {
        put_f64(out, v);
    }
    put_f64(out, opt.lr);
    put_u64(out, opt.steps());
    let (first, second) = opt.buffers();
    put_u64(out, first.len() as u64);
    for &v in first.iter().chain(second) {
        put_f64(out, v);
    }
}

fn read_optimizer_body(r: &mut Reader) -> Result<Optimizer> {
    let at = r.pos;
    let kind = r.u32()?;
    let h = [r.f64()?, r.f64()?, r.f64()?];
    let kind = match kind {
        0 => OptimizerKind::Sgd,
        1 => OptimizerKind::Adam {
            beta1: h[0],
            beta2: h[1],
            eps: h[2],
        },
        2 => OptimizerKind::RmsProp { alpha: h[0], eps: h[1] },
        k => {
            return Err(Error::Parse {
                offset: at,
                message: format!("unknown optimizer kind {k}"),
            })
        }
    };
    let lr = r.f64()?;
    let step = r.u64()?;
    let n = r.u64()? as usize;
    let first = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let second = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let mut opt = Optimizer::new(kind, lr);
    opt.restore(step, first, second)?;
    Ok(opt)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!("truncated: wanted {n} bytes, {} left", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
