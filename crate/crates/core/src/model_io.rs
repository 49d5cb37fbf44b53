//! Binary model files.
//!
//! Layout: magic `HGPM`, a version byte, then sections `[tag u8][len u64][payload]`.
//! Section `M` holds the method tag and normalization statistics, section `B`
//! the model body. All numbers are little-endian; floats are stored as raw
//! IEEE bits, so a save/load roundtrip is exact.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{GpError, Result};
use crate::exact::{ExactGpModel, Noise};
use crate::kernels::{KernelConfig, KernelFamily, MaternNu, Point2};
use crate::mean::MeanFunction;
use crate::method::MethodId;
use crate::model::{FittedModel, ModelBody};
use crate::svgp::{SvgpLikelihood, SvgpState};
use crate::terrain::{bilinear_prior, DemGrid, NormStats};
use crate::two_stage::{NoiseGp, NoiseModel, TerrainGp, TwoStageModel};

pub const MAGIC: &[u8; 4] = b"HGPM";
pub const VERSION: u8 = 1;

const SEC_META: u8 = b'M';
const SEC_BODY: u8 = b'B';

const BODY_EXACT: u8 = 0;
const BODY_SPARSE: u8 = 1;
const BODY_TWO_STAGE: u8 = 2;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn len(&mut self, n: usize) {
        self.u64(n as u64);
    }

    fn f64s(&mut self, v: &[f64]) {
        self.len(v.len());
        v.iter().for_each(|x| self.f64(*x));
    }

    fn points(&mut self, v: &[Point2]) {
        self.len(v.len());
        for p in v {
            self.f64(p[0]);
            self.f64(p[1]);
        }
    }

    fn section(&mut self, tag: u8, payload: Writer) {
        self.u8(tag);
        self.len(payload.buf.len());
        self.buf.extend_from_slice(&payload.buf);
    }

    fn stats(&mut self, s: &NormStats) {
        for v in [s.x_mean[0], s.x_mean[1], s.x_std[0], s.x_std[1], s.y_mean, s.y_std] {
            self.f64(v);
        }
    }

    fn kernel(&mut self, k: &KernelConfig) {
        self.u8(match k.family {
            KernelFamily::Rbf => 0,
            KernelFamily::RationalQuadratic => 1,
            KernelFamily::AbsoluteExponential => 2,
            KernelFamily::Matern(MaternNu::Half) => 3,
            KernelFamily::Matern(MaternNu::ThreeHalves) => 4,
            KernelFamily::Matern(MaternNu::FiveHalves) => 5,
        });
        self.f64(k.log_lengthscale);
        self.f64(k.log_outputscale);
        self.f64(k.log_alpha);
    }

    fn grid(&mut self, g: &DemGrid) {
        self.len(g.ncols);
        self.len(g.nrows);
        self.f64(g.xllcorner);
        self.f64(g.yllcorner);
        self.f64(g.cellsize);
        self.f64(g.nodata);
        self.f64s(&g.values);
    }

    fn mean(&mut self, m: &MeanFunction) {
        match m {
            MeanFunction::Zero => self.u8(0),
            MeanFunction::Constant(c) => {
                self.u8(1);
                self.f64(*c);
            }
            MeanFunction::Prior(g) => {
                self.u8(2);
                self.grid(g.prior.grid());
                self.stats(&g.stats);
            }
        }
    }

    fn exact(&mut self, m: &ExactGpModel) {
        self.kernel(m.kernel());
        self.mean(m.mean());
        match m.noise() {
            Noise::Homoscedastic { log_variance } => {
                self.u8(0);
                self.f64(*log_variance);
            }
            Noise::PerPoint(v) => {
                self.u8(1);
                self.f64s(v);
            }
        }
        self.points(m.x());
        self.f64s(m.y());
    }

    fn sparse(&mut self, s: &SvgpState) {
        self.points(&s.z);
        self.f64s(s.mvec.as_slice());
        self.f64s(s.l.as_slice());
        self.kernel(&s.kernel);
        self.mean(&s.mean);
        match s.likelihood {
            SvgpLikelihood::Gaussian { log_variance } => {
                self.u8(0);
                self.f64(log_variance);
            }
            SvgpLikelihood::Heteroscedastic => self.u8(1),
        }
    }

    fn noise_model(&mut self, n: &NoiseModel) {
        match n.gp() {
            NoiseGp::Exact(m) => {
                self.u8(BODY_EXACT);
                self.exact(m);
            }
            NoiseGp::Sparse(s) => {
                self.u8(BODY_SPARSE);
                self.sparse(s);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn bad(msg: impl Into<String>) -> GpError {
    GpError::ModelFormat(msg.into())
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(bad(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Element count, bounded by what the remaining bytes could hold.
    fn len(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.u64()?;
        let left = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(elem_size as u64) > left {
            return Err(bad(format!("length {n} exceeds remaining {left} bytes")));
        }
        Ok(n as usize)
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn points(&mut self) -> Result<Vec<Point2>> {
        let n = self.len(16)?;
        (0..n).map(|_| Ok([self.f64()?, self.f64()?])).collect()
    }

    fn section(&mut self, tag: u8) -> Result<Reader<'a>> {
        let t = self.u8()?;
        if t != tag {
            return Err(bad(format!("expected section `{}`, found tag {t}", tag as char)));
        }
        let n = self.len(1)?;
        Ok(Reader::new(self.take(n)?))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(bad(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }

    fn stats(&mut self) -> Result<NormStats> {
        let v: Vec<f64> = (0..6).map(|_| self.f64()).collect::<Result<_>>()?;
        Ok(NormStats {
            x_mean: [v[0], v[1]],
            x_std: [v[2], v[3]],
            y_mean: v[4],
            y_std: v[5],
        })
    }

    fn kernel(&mut self) -> Result<KernelConfig> {
        let family = match self.u8()? {
            0 => KernelFamily::Rbf,
            1 => KernelFamily::RationalQuadratic,
            2 => KernelFamily::AbsoluteExponential,
            3 => KernelFamily::Matern(MaternNu::Half),
            4 => KernelFamily::Matern(MaternNu::ThreeHalves),
            5 => KernelFamily::Matern(MaternNu::FiveHalves),
            t => return Err(bad(format!("unknown kernel tag {t}"))),
        };
        Ok(KernelConfig {
            family,
            log_lengthscale: self.f64()?,
            log_outputscale: self.f64()?,
            log_alpha: self.f64()?,
        })
    }

    fn grid(&mut self) -> Result<DemGrid> {
        let ncols = self.u64()? as usize;
        let nrows = self.u64()? as usize;
        let (xll, yll, cs, nodata) = (self.f64()?, self.f64()?, self.f64()?, self.f64()?);
        let values = self.f64s()?;
        if values.len() != ncols.saturating_mul(nrows) {
            return Err(bad("prior grid value count does not match its dimensions"));
        }
        DemGrid::new(ncols, nrows, xll, yll, cs, nodata, values).map_err(|e| bad(e.to_string()))
    }

    fn mean(&mut self) -> Result<MeanFunction> {
        Ok(match self.u8()? {
            0 => MeanFunction::Zero,
            1 => MeanFunction::Constant(self.f64()?),
            2 => {
                let g = self.grid()?;
                let stats = self.stats()?;
                MeanFunction::grid(bilinear_prior(&g).map_err(|e| bad(e.to_string()))?, stats)
            }
            t => return Err(bad(format!("unknown mean tag {t}"))),
        })
    }

    fn exact(&mut self) -> Result<ExactGpModel> {
        let kernel = self.kernel()?;
        let mean = self.mean()?;
        let noise = match self.u8()? {
            0 => Noise::Homoscedastic {
                log_variance: self.f64()?,
            },
            1 => Noise::PerPoint(self.f64s()?),
            t => return Err(bad(format!("unknown noise tag {t}"))),
        };
        let x = self.points()?;
        let y = self.f64s()?;
        ExactGpModel::new(x, y, kernel, mean, noise)
    }

    fn sparse(&mut self) -> Result<SvgpState> {
        let z = self.points()?;
        let m = z.len();
        let mvec = self.f64s()?;
        let l = self.f64s()?;
        if mvec.len() != m || l.len() != m * m {
            return Err(bad(format!("variational parameters do not match {m} inducing points")));
        }
        let kernel = self.kernel()?;
        let mean = self.mean()?;
        let likelihood = match self.u8()? {
            0 => SvgpLikelihood::Gaussian {
                log_variance: self.f64()?,
            },
            1 => SvgpLikelihood::Heteroscedastic,
            t => return Err(bad(format!("unknown likelihood tag {t}"))),
        };
        let state = SvgpState {
            z,
            mvec: DVector::from_vec(mvec),
            l: DMatrix::from_vec(m, m, l),
            kernel,
            mean,
            likelihood,
        };
        state.validate()?;
        Ok(state)
    }

    fn noise_model(&mut self) -> Result<NoiseModel> {
        Ok(NoiseModel::from_gp(match self.u8()? {
            BODY_EXACT => NoiseGp::Exact(self.exact()?),
            BODY_SPARSE => NoiseGp::Sparse(self.sparse()?),
            t => return Err(bad(format!("unknown noise model tag {t}"))),
        }))
    }
}

/// Serialized form of a noise model alone; used to check it stays frozen.
pub fn encode_noise_model(n: &NoiseModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.noise_model(n);
    w.buf
}

pub fn encode_model(model: &FittedModel) -> Vec<u8> {
    let mut out = Writer::default();
    out.buf.extend_from_slice(MAGIC);
    out.u8(VERSION);
    let mut meta = Writer::default();
    meta.u8(model.method.tag());
    meta.stats(&model.stats);
    out.section(SEC_META, meta);
    let mut body = Writer::default();
    match &model.body {
        ModelBody::Exact(m) => {
            body.u8(BODY_EXACT);
            body.exact(m);
        }
        ModelBody::Sparse(s) => {
            body.u8(BODY_SPARSE);
            body.sparse(s);
        }
        ModelBody::TwoStage(t) => {
            body.u8(BODY_TWO_STAGE);
            body.noise_model(&t.noise);
            match &t.terrain {
                TerrainGp::Exact(m) => {
                    body.u8(BODY_EXACT);
                    body.exact(m);
                }
                TerrainGp::Variational(s) => {
                    body.u8(BODY_SPARSE);
                    body.sparse(s);
                }
            }
        }
    }
    out.section(SEC_BODY, body);
    out.buf
}

pub fn decode_model(bytes: &[u8]) -> Result<FittedModel> {
    let mut r = Reader::new(bytes);
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(bad("not a model file (bad magic)"));
    }
    let v = r.u8()?;
    if v != VERSION {
        return Err(bad(format!("unsupported version {v}")));
    }
    let mut meta = r.section(SEC_META)?;
    let tag = meta.u8()?;
    let method = MethodId::from_tag(tag).ok_or_else(|| bad(format!("unknown method tag {tag}")))?;
    let stats = meta.stats()?;
    meta.finish()?;
    let mut b = r.section(SEC_BODY)?;
    let body = match b.u8()? {
        BODY_EXACT => ModelBody::Exact(b.exact()?),
        BODY_SPARSE => ModelBody::Sparse(b.sparse()?),
        BODY_TWO_STAGE => {
            let noise = b.noise_model()?;
            let terrain = match b.u8()? {
                BODY_EXACT => TerrainGp::Exact(b.exact()?),
                BODY_SPARSE => TerrainGp::Variational(b.sparse()?),
                t => return Err(bad(format!("unknown terrain tag {t}"))),
            };
            ModelBody::TwoStage(TwoStageModel { noise, terrain, stats })
        }
        t => return Err(bad(format!("unknown body tag {t}"))),
    };
    b.finish()?;
    r.finish()?;
    Ok(FittedModel { method, stats, body })
}

pub fn save_model(model: &FittedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(|e| GpError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FittedModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| GpError::io(path, e))?;
    decode_model(&bytes)
}
