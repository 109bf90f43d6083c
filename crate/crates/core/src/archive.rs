//! Versioned, checksummed model archives.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "VFM1"  u32 version  u64 payload_len
//! payload:
//!   u8 kind                    1 = DNN classifier, 2 = DBLSTM regressor
//!   architecture descriptor    classifier: u32 input, u32 n, n × (u32 in, u32 out, u8 activation)
//!                              DBLSTM:     u32 input, u32 layers, u32 hidden, u32 output, u8 activation
//!   u8 has_frontend            MFCC geometry + context (u32/f64 fields)
//!   u8 has_input_norm          u32 dims, f32 mean[dims], f32 std[dims]
//!   u8 has_output_norm         same
//!   u64 param_count, f32 params[param_count]
//! u32 CRC-32 of every preceding byte
//! ```
//!
//! Parameters are written layer by layer, bottom-up. A dense layer is `W`
//! (row-major) then `b`. An LSTM cell is `Wi, Wf, Wo, Wg, bi, bf, bo, bg`,
//! forward cell before backward cell; the DBLSTM output layer comes last.

use std::path::Path;

use crate::binio::{round_f32, Reader, Writer};
use crate::error::{Error, Result};
use crate::features::{MfccConfig, MvnStats};
use crate::nn::{Activation, BlstmLayer, DblstmNetwork, DenseLayer, DnnClassifier, LstmCell, Trainable};

pub const MAGIC: &[u8; 4] = b"VFM1";
pub const VERSION: u32 = 1;

const KIND_CLASSIFIER: u8 = 1;
const KIND_DBLSTM: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Classifier(DnnClassifier),
    Regressor(DblstmNetwork),
}

impl Model {
    pub fn input_dim(&self) -> usize {
        match self {
            Model::Classifier(c) => c.input_dim(),
            Model::Regressor(r) => r.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Model::Classifier(c) => c.num_classes(),
            Model::Regressor(r) => r.output_dim(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Classifier(_) => "dnn-classifier",
            Model::Regressor(_) => "dblstm",
        }
    }

    fn params(&self) -> Vec<&[f64]> {
        match self {
            Model::Classifier(c) => c.params(),
            Model::Regressor(r) => r.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Model::Classifier(c) => c.params_mut(),
            Model::Regressor(r) => r.params_mut(),
        }
    }
}

/// Feature front end a classifier was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEnd {
    pub mfcc: MfccConfig,
    pub context_left: usize,
    pub context_right: usize,
}

/// A model plus everything needed to run it. Constructors round all stored
/// values to f32, so `load(save(a)) == a` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchive {
    model: Model,
    frontend: Option<FrontEnd>,
    input_norm: Option<MvnStats>,
    output_norm: Option<MvnStats>,
}

impl ModelArchive {
    pub fn new(model: Model, frontend: Option<FrontEnd>, input_norm: Option<MvnStats>, output_norm: Option<MvnStats>) -> Result<Self> {
        if let Some(n) = &input_norm {
            if n.dims() != model.input_dim() {
                return Err(Error::DimMismatch { expected: model.input_dim(), got: n.dims() });
            }
        }
        if let Some(n) = &output_norm {
            if n.dims() != model.output_dim() {
                return Err(Error::DimMismatch { expected: model.output_dim(), got: n.dims() });
            }
        }
        if let Some(fe) = &frontend {
            let stacked = fe.mfcc.n_ceps * (fe.context_left + fe.context_right + 1);
            if stacked != model.input_dim() {
                return Err(Error::ArchitectureMismatch(format!(
                    "front end yields {stacked} features but the model reads {}",
                    model.input_dim()
                )));
            }
        }
        let mut model = model;
        for p in model.params_mut() {
            p.iter_mut().for_each(|v| *v = round_f32(*v));
        }
        Ok(Self {
            model,
            frontend,
            input_norm: input_norm.map(|n| n.quantized()),
            output_norm: output_norm.map(|n| n.quantized()),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn frontend(&self) -> Option<&FrontEnd> {
        self.frontend.as_ref()
    }

    pub fn input_norm(&self) -> Option<&MvnStats> {
        self.input_norm.as_ref()
    }

    pub fn output_norm(&self) -> Option<&MvnStats> {
        self.output_norm.as_ref()
    }

    pub fn classifier(&self) -> Result<&DnnClassifier> {
        match &self.model {
            Model::Classifier(c) => Ok(c),
            other => Err(Error::ArchitectureMismatch(format!("expected a classifier archive, found {}", other.kind_name()))),
        }
    }

    pub fn regressor(&self) -> Result<&DblstmNetwork> {
        match &self.model {
            Model::Regressor(r) => Ok(r),
            other => Err(Error::ArchitectureMismatch(format!("expected a DBLSTM archive, found {}", other.kind_name()))),
        }
    }

    pub fn describe(&self) -> String {
        match &self.model {
            Model::Classifier(c) => format!(
                "dnn-classifier: {} -> {:?} -> {} (softmax)",
                c.input_dim(),
                c.hidden_sizes(),
                c.num_classes()
            ),
            Model::Regressor(r) => format!(
                "dblstm: {} -> {} x {} -> {}",
                r.input_dim(),
                r.num_layers(),
                r.hidden_size(),
                r.output_dim()
            ),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut p = Writer::default();
        match &self.model {
            Model::Classifier(c) => {
                p.u8(KIND_CLASSIFIER);
                p.u32(c.input_dim() as u32);
                p.u32(c.layers().len() as u32);
                for l in c.layers() {
                    p.u32(l.inputs() as u32);
                    p.u32(l.outputs() as u32);
                    p.u8(l.activation().id());
                }
            }
            Model::Regressor(r) => {
                p.u8(KIND_DBLSTM);
                p.u32(r.input_dim() as u32);
                p.u32(r.num_layers() as u32);
                p.u32(r.hidden_size() as u32);
                p.u32(r.output_dim() as u32);
                p.u8(r.output_layer().activation().id());
            }
        }
        match &self.frontend {
            None => p.u8(0),
            Some(fe) => {
                p.u8(1);
                let m = &fe.mfcc;
                for v in [m.sample_rate as usize, m.frame_length, m.frame_shift, m.nfft, m.n_mels, m.n_ceps] {
                    p.u32(v as u32);
                }
                for v in [m.preemphasis, m.low_hz, m.high_hz, m.log_floor] {
                    p.f64(v);
                }
                p.u32(fe.context_left as u32);
                p.u32(fe.context_right as u32);
            }
        }
        for norm in [&self.input_norm, &self.output_norm] {
            match norm {
                None => p.u8(0),
                Some(n) => {
                    p.u8(1);
                    p.u32(n.dims() as u32);
                    p.f32s(&n.mean);
                    p.f32s(&n.std);
                }
            }
        }
        let params = self.model.params();
        p.u64(params.iter().map(|s| s.len() as u64).sum());
        for s in params {
            p.f32s(s);
        }

        let mut out = Writer::default();
        out.bytes(MAGIC);
        out.u32(VERSION);
        out.u64(p.buf.len() as u64);
        out.bytes(&p.buf);
        let crc = crc32fast::hash(&out.buf);
        out.u32(crc);
        out.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::VersionMismatch {
                expected: String::from_utf8_lossy(MAGIC).into_owned(),
                found: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::VersionMismatch { expected: format!("VFM1 v{VERSION}"), found: format!("VFM1 v{version}") });
        }
        let payload_len = r.u64()? as usize;
        if r.remaining() < payload_len.saturating_add(4) {
            return Err(Error::Corrupt(format!(
                "truncated archive: payload of {payload_len} bytes plus checksum, {} bytes present",
                r.remaining()
            )));
        }
        if r.remaining() > payload_len + 4 {
            return Err(Error::Corrupt(format!("{} trailing bytes", r.remaining() - payload_len - 4)));
        }
        let body_end = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
        let computed = crc32fast::hash(&bytes[..body_end]);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        parse_payload(&mut Reader::new(&bytes[16..body_end]))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn corrupt(e: Error) -> Error {
    match e {
        Error::Corrupt(_) => e,
        other => Error::Corrupt(other.to_string()),
    }
}

fn activation(id: u8) -> Result<Activation> {
    Activation::from_id(id).ok_or_else(|| Error::Corrupt(format!("unknown activation id {id}")))
}

fn parse_payload(r: &mut Reader) -> Result<ModelArchive> {
    let kind = r.u8()?;
    let mut model = match kind {
        KIND_CLASSIFIER => {
            let _input = r.u32()?;
            let n = r.u32()? as usize;
            if n == 0 || n > 1024 {
                return Err(Error::Corrupt(format!("implausible layer count {n}")));
            }
            let mut layers = Vec::with_capacity(n);
            for _ in 0..n {
                let (i, o) = (r.u32()? as usize, r.u32()? as usize);
                layers.push(DenseLayer::zeros(i, o, activation(r.u8()?)?));
            }
            Model::Classifier(DnnClassifier::from_layers(layers).map_err(corrupt)?)
        }
        KIND_DBLSTM => {
            let (input, layers, hidden, output) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
            let act = activation(r.u8()?)?;
            if layers == 0 || hidden == 0 || layers > 1024 {
                return Err(Error::Corrupt("implausible DBLSTM geometry".into()));
            }
            let blstm = (0..layers)
                .map(|l| {
                    let inp = if l == 0 { input } else { 2 * hidden };
                    BlstmLayer::new(LstmCell::zeros(inp, hidden), LstmCell::zeros(inp, hidden))
                })
                .collect::<Result<Vec<_>>>()?;
            Model::Regressor(DblstmNetwork::from_parts(blstm, DenseLayer::zeros(2 * hidden, output, act)).map_err(corrupt)?)
        }
        other => return Err(Error::Corrupt(format!("unknown model kind {other}"))),
    };
    let frontend = match r.u8()? {
        0 => None,
        1 => {
            let mut u = [0usize; 6];
            for v in &mut u {
                *v = r.u32()? as usize;
            }
            let mut f = [0f64; 4];
            for v in &mut f {
                *v = r.f64()?;
            }
            let mfcc = MfccConfig {
                sample_rate: u[0] as u32,
                frame_length: u[1],
                frame_shift: u[2],
                nfft: u[3],
                n_mels: u[4],
                n_ceps: u[5],
                preemphasis: f[0],
                low_hz: f[1],
                high_hz: f[2],
                log_floor: f[3],
            };
            Some(FrontEnd { mfcc, context_left: r.u32()? as usize, context_right: r.u32()? as usize })
        }
        b => return Err(Error::Corrupt(format!("bad front-end flag {b}"))),
    };
    let mut norms = [None, None];
    for slot in &mut norms {
        *slot = match r.u8()? {
            0 => None,
            1 => {
                let d = r.u32()? as usize;
                Some(MvnStats { mean: r.f32s(d)?, std: r.f32s(d)? })
            }
            b => return Err(Error::Corrupt(format!("bad normalization flag {b}"))),
        };
    }
    let count = r.u64()? as usize;
    let expected: usize = model.params().iter().map(|p| p.len()).sum();
    if count != expected {
        return Err(Error::Corrupt(format!("{count} parameters stored, architecture needs {expected}")));
    }
    for p in model.params_mut() {
        let vals = r.f32s(p.len())?;
        p.copy_from_slice(&vals);
    }
    if r.remaining() != 0 {
        return Err(Error::Corrupt(format!("{} unparsed payload bytes", r.remaining())));
    }
    let [input_norm, output_norm] = norms;
    ModelArchive::new(model, frontend, input_norm, output_norm).map_err(corrupt)
}
