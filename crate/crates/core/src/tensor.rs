//! Posterior tensors and the `GTCT` binary tensor file format.
//!
//! File layout (little-endian): magic `b"GTCT"`, version `u32 = 1`, rank
//! `u32`, `rank` dimensions as `u32`, then the values as row-major `f64`.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"GTCT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("bad tensor file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Dense row-major `f64` tensor of arbitrary rank.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl RawTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(TensorError::Shape(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TensorError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            let d = u32::try_from(d)
                .map_err(|_| TensorError::Shape(format!("dimension {d} does not fit in u32")))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dims.len() + 8 * self.data.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, TensorError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| TensorError::Format(format!("truncated header: {e}")))?;
        if &magic != MAGIC {
            return Err(TensorError::Format(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(TensorError::Format(format!("unsupported version {version}")));
        }
        let rank = read_u32(&mut r)? as usize;
        if rank > 16 {
            return Err(TensorError::Format(format!("implausible rank {rank}")));
        }
        let dims = (0..rank)
            .map(|_| read_u32(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| TensorError::Format(format!("dims {dims:?} overflow")))?;
        let mut data = Vec::with_capacity(len.min(1 << 24));
        let mut buf = [0u8; 8];
        for idx in 0..len {
            r.read_exact(&mut buf).map_err(|_| {
                TensorError::Format(format!("truncated data: expected {len} values, got {idx}"))
            })?;
            data.push(f64::from_le_bytes(buf));
        }
        Ok(Self { dims, data })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, TensorError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| TensorError::Format(format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

/// Per-utterance network outputs indexed `(frame, decoder state, label)`.
///
/// Holds both the unnormalized logits and their log-softmax over labels.
/// Frames are 0-based here: frame `t` is the `t + 1`-th emission.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorTensor {
    frames: usize,
    states: usize,
    vocab: usize,
    logits: Vec<f64>,
    log_probs: Vec<f64>,
}

impl PosteriorTensor {
    pub fn from_logits(
        frames: usize,
        states: usize,
        vocab: usize,
        logits: Vec<f64>,
    ) -> Result<Self, TensorError> {
        if frames == 0 || states == 0 || vocab == 0 {
            return Err(TensorError::Shape(format!(
                "all dimensions must be positive, got {frames}x{states}x{vocab}"
            )));
        }
        if logits.len() != frames * states * vocab {
            return Err(TensorError::Shape(format!(
                "{frames}x{states}x{vocab} needs {} logits, got {}",
                frames * states * vocab,
                logits.len()
            )));
        }
        if let Some(pos) = logits.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::Shape(format!("non-finite logit at flat index {pos}")));
        }
        let mut log_probs = vec![0.0; logits.len()];
        for (row, out) in logits.chunks(vocab).zip(log_probs.chunks_mut(vocab)) {
            log_softmax_into(row, out);
        }
        Ok(Self {
            frames,
            states,
            vocab,
            logits,
            log_probs,
        })
    }

    pub fn from_raw(raw: &RawTensor) -> Result<Self, TensorError> {
        match raw.dims[..] {
            [t, i, k] => Self::from_logits(t, i, k, raw.data.clone()),
            _ => Err(TensorError::Shape(format!(
                "posterior tensors have rank 3 (T, I, K), got dims {:?}",
                raw.dims
            ))),
        }
    }

    pub fn to_raw(&self) -> RawTensor {
        RawTensor {
            dims: vec![self.frames, self.states, self.vocab],
            data: self.logits.clone(),
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    /// Flat offset of `(t, i, 0)`.
    pub fn offset(&self, t: usize, i: usize) -> usize {
        debug_assert!(t < self.frames && i < self.states);
        (t * self.states + i) * self.vocab
    }

    pub fn log_prob(&self, t: usize, i: usize, k: usize) -> f64 {
        self.log_probs[self.offset(t, i) + k]
    }

    pub fn log_probs_row(&self, t: usize, i: usize) -> &[f64] {
        let o = self.offset(t, i);
        &self.log_probs[o..o + self.vocab]
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// Copy with logits replaced (same shape).
    pub fn with_logits(&self, logits: Vec<f64>) -> Result<Self, TensorError> {
        Self::from_logits(self.frames, self.states, self.vocab, logits)
    }
}

fn log_softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
    let lse = max + sum.ln();
    for (o, v) in out.iter_mut().zip(row) {
        *o = v - lse;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rows_are_normalized() {
        let logits = vec![1.0, -2.0, 0.5, 30.0, 30.0, -30.0];
        let post = PosteriorTensor::from_logits(1, 2, 3, logits).unwrap();
        for i in 0..2 {
            let total: f64 = post.log_probs_row(0, i).iter().map(|v| v.exp()).sum();
            assert!((total.ln()).abs() < 1e-12);
        }
        assert!((post.log_prob(0, 1, 0) - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        assert!(PosteriorTensor::from_logits(2, 1, 2, vec![0.0; 3]).is_err());
        assert!(PosteriorTensor::from_logits(0, 1, 2, vec![]).is_err());
        assert!(PosteriorTensor::from_logits(1, 1, 2, vec![0.0, f64::NAN]).is_err());
        let raw = RawTensor::new(vec![2, 2], vec![0.0; 4]).unwrap();
        assert!(PosteriorTensor::from_raw(&raw).is_err());
    }

    #[test]
    fn header_layout_is_exact() {
        let raw = RawTensor::new(vec![1, 1, 2], vec![1.0, -0.5]).unwrap();
        let bytes = raw.to_bytes();
        assert_eq!(&bytes[..4], b"GTCT");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[3, 0, 0, 0]);
        assert_eq!(&bytes[12..24], &[1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[24..32], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 40);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = RawTensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap().to_bytes();
        assert!(RawTensor::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(RawTensor::read_from(&bad[..]).is_err());
        let mut bad = bytes;
        bad[4] = 2;
        assert!(RawTensor::read_from(&bad[..]).is_err());
    }

    proptest! {
        #[test]
        fn binary_round_trip(dims in proptest::collection::vec(1usize..4, 0..4), seed in any::<u64>()) {
            let len: usize = dims.iter().product();
            let data: Vec<f64> = (0..len).map(|i| (seed.wrapping_mul(i as u64 + 1) as f64).sin()).collect();
            let raw = RawTensor::new(dims, data).unwrap();
            prop_assert_eq!(RawTensor::read_from(&raw.to_bytes()[..]).unwrap(), raw);
        }
    }
}
