use std::io::{BufRead, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{mix, stream, TAG_INIT};

/// Standard deviation of the gaussian jitter added to the identity at init.
pub const INIT_JITTER: f64 = 0.01;
pub const DEFAULT_LOGIT_SCALE: f64 = 100.0;

/// The three bias-free `d x d` projections and the selection hyperparameters.
/// Row-vector convention: `q = image . w_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorParams {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub tau: f64,
    pub dropout_rate: f64,
    pub logit_scale: f64,
}

/// Learnable scalars for embedding width `d`.
pub fn param_count(d: usize) -> usize {
    3 * d * d
}

impl SelectorParams {
    pub fn identity(d: usize, tau: f64, dropout_rate: f64, logit_scale: f64) -> Result<Self> {
        let p = SelectorParams {
            w_q: Array2::eye(d),
            w_k: Array2::eye(d),
            w_v: Array2::eye(d),
            tau,
            dropout_rate,
            logit_scale,
        };
        p.validate()?;
        Ok(p)
    }

    /// Identity plus seeded gaussian jitter, so an untrained selector ranks
    /// prompts by plain embedding similarity.
    pub fn init(
        d: usize,
        seed: u64,
        tau: f64,
        dropout_rate: f64,
        logit_scale: f64,
    ) -> Result<Self> {
        let mut p = Self::identity(d, tau, dropout_rate, logit_scale)?;
        let normal = Normal::new(0.0, INIT_JITTER).expect("valid std");
        let mut rng = stream(&[TAG_INIT, seed]);
        for w in [&mut p.w_q, &mut p.w_k, &mut p.w_v] {
            w.iter_mut().for_each(|x| *x += normal.sample(&mut rng));
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn param_count(&self) -> usize {
        param_count(self.dim())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for w in [&self.w_q, &self.w_k, &self.w_v] {
            if w.dim() != (d, d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: w.ncols(),
                    context: "projection matrix",
                });
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("projection matrix"));
            }
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::validation(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::validation(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.logit_scale.is_finite() && self.logit_scale > 0.0) {
            return Err(Error::validation(format!(
                "logit scale must be > 0, got {}",
                self.logit_scale
            )));
        }
        Ok(())
    }

    /// Hash of the exact parameter bits.
    pub fn checksum(&self) -> u64 {
        let words: Vec<u64> = [&self.w_q, &self.w_k, &self.w_v]
            .iter()
            .flat_map(|w| w.iter().map(|x| x.to_bits()))
            .chain([
                self.tau.to_bits(),
                self.dropout_rate.to_bits(),
                self.logit_scale.to_bits(),
            ])
            .collect();
        mix(&words)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub d: usize,
    pub tau: f64,
    pub dropout: f64,
    pub logit_scale: f64,
    pub alpha_blend: f64,
    pub seed: u64,
}

/// Writes a one-line JSON header followed by `W_q | W_k | W_v` as row-major
/// little-endian f32.
pub fn write_checkpoint<W: Write>(
    params: &SelectorParams,
    alpha_blend: f64,
    seed: u64,
    mut sink: W,
) -> Result<()> {
    params.validate()?;
    let header = CheckpointHeader {
        d: params.dim(),
        tau: params.tau,
        dropout: params.dropout_rate,
        logit_scale: params.logit_scale,
        alpha_blend,
        seed,
    };
    serde_json::to_writer(&mut sink, &header)?;
    sink.write_all(b"\n")?;
    for w in [&params.w_q, &params.w_k, &params.w_v] {
        for &x in w.iter() {
            sink.write_f32::<LittleEndian>(x as f32)?;
        }
    }
    sink.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(mut source: R) -> Result<(SelectorParams, CheckpointHeader)> {
    let mut line = Vec::new();
    source.read_until(b'\n', &mut line)?;
    let header: CheckpointHeader = serde_json::from_slice(&line)
        .map_err(|e| Error::format(format!("checkpoint header: {e}")))?;
    let d = header.d;
    let mut read_matrix = || -> Result<Array2<f64>> {
        let mut data = Vec::with_capacity(d * d);
        for _ in 0..d * d {
            let x = source
                .read_f32::<LittleEndian>()
                .map_err(|e| match e.kind() {
                    std::io::ErrorKind::UnexpectedEof => Error::format("checkpoint is truncated"),
                    _ => Error::Io(e),
                })?;
            data.push(f64::from(x));
        }
        Ok(Array2::from_shape_vec((d, d), data).expect("d*d values"))
    };
    let w_q = read_matrix()?;
    let w_k = read_matrix()?;
    let w_v = read_matrix()?;
    if source.read(&mut [0u8; 1])? != 0 {
        return Err(Error::format("trailing bytes in checkpoint"));
    }
    let params = SelectorParams {
        w_q,
        w_k,
        w_v,
        tau: header.tau,
        dropout_rate: header.dropout,
        logit_scale: header.logit_scale,
    };
    params.validate()?;
    Ok((params, header))
}
