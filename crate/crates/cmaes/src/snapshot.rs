//! Compact, versioned binary snapshots of optimizer state.
//!
//! Layout: magic `CMAS`, format version, a kind byte, fixed-width
//! little-endian fields, and a truncated SHA-256 trailer. The covariance is
//! stored as its packed upper triangle and the eigendecomposition cache is
//! never serialized — it is recomputed lazily after a load.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::cmawm::{CmaWm, DiscretizationSpec, MarginConfig};
use crate::constraints::BoxBounds;
use crate::engine::{CmaEs, EvaluatedSolution};
use crate::error::{CmaError, Result};
use crate::lra::LraState;
use crate::params::HyperParams;

const MAGIC: &[u8; 4] = b"CMAS";
const VERSION: u32 = 1;
const KIND_PLAIN: u8 = 0;
const KIND_WM: u8 = 1;
const CHECKSUM_LEN: usize = 8;
/// Upper bound on any decoded count; rejects absurd lengths without
/// allocating.
const MAX_COUNT: usize = 1 << 24;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    fn vector(&mut self, v: &DVector<f64>) {
        for &x in v.iter() {
            self.f64(x);
        }
    }

    /// Row-major upper triangle including the diagonal.
    fn packed_upper(&mut self, m: &DMatrix<f64>) {
        let d = m.nrows();
        for i in 0..d {
            for j in i..d {
                self.f64(m[(i, j)]);
            }
        }
    }

    fn finish(mut self) -> Vec<u8> {
        let digest = Sha256::digest(&self.buf);
        self.buf.extend_from_slice(&digest[..CHECKSUM_LEN]);
        self.buf
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn fail<T>(&self, reason: &str) -> Result<T> {
        Err(CmaError::SnapshotDecode {
            offset: self.pos,
            reason: reason.into(),
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return self.fail("unexpected end of data");
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn count(&mut self) -> Result<usize> {
        let n = self.u32()? as usize;
        if n > MAX_COUNT {
            return self.fail("count out of range");
        }
        Ok(n)
    }

    fn vector(&mut self, len: usize) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(len);
        for i in 0..len {
            v[i] = self.f64()?;
        }
        Ok(v)
    }

    fn packed_upper(&mut self, d: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = self.f64()?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }
}

fn write_flag<T>(w: &mut Writer, opt: &Option<T>, mut body: impl FnMut(&mut Writer, &T)) {
    match opt {
        None => w.u8(0),
        Some(v) => {
            w.u8(1);
            body(w, v);
        }
    }
}

fn read_flag<'a, T>(
    r: &mut Reader<'a>,
    mut body: impl FnMut(&mut Reader<'a>) -> Result<T>,
) -> Result<Option<T>> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some(body(r)?)),
        _ => r.fail("flag byte must be 0 or 1"),
    }
}

fn write_engine(w: &mut Writer, es: &CmaEs) {
    let hp = es.hyperparams();
    let d = hp.dim;
    w.u32(d as u32);
    w.u32(hp.lambda as u32);
    w.u32(hp.mu as u32);
    w.vector(&hp.weights);
    w.f64(hp.mu_w);
    w.f64(hp.c_sigma);
    w.f64(hp.d_sigma);
    w.f64(hp.c_c);
    w.f64(hp.c_1);
    w.f64(hp.c_mu);
    w.f64(hp.c_m);

    w.vector(&es.mean);
    w.f64(es.sigma);
    w.packed_upper(&es.cov);
    w.vector(&es.p_sigma);
    w.vector(&es.p_c);
    w.u64(es.generation);
    w.f64(es.sigma0);

    w.bytes(&es.rng.get_seed());
    w.u64(es.rng.get_stream());
    w.u128(es.rng.get_word_pos());

    write_flag(w, &es.bounds, |w, b| {
        for i in 0..d {
            w.f64(b.lower(i));
        }
        for i in 0..d {
            w.f64(b.upper(i));
        }
    });
    w.u32(es.max_resamples);
    w.u64(es.resample_overflows);
    write_flag(w, &es.max_generations, |w, &g| w.u64(g));

    w.u32(es.tolfun_hist.len() as u32);
    for &v in &es.tolfun_hist {
        w.f64(v);
    }
    w.u32(es.stag_hist.len() as u32);
    for &(b, m) in &es.stag_hist {
        w.f64(b);
        w.f64(m);
    }
    write_flag(w, &es.best, |w, b| {
        w.vector(&b.x);
        w.f64(b.value);
    });
    write_flag(w, &es.lra, |w, l| {
        w.f64(l.eta_mean);
        w.f64(l.eta_sigma);
        w.f64(l.alpha);
        w.f64(l.beta_mean);
        w.f64(l.beta_sigma);
        w.f64(l.gamma);
        w.vector(&l.e_mean);
        w.f64(l.v_mean);
        w.vector(&l.e_sigma);
        w.f64(l.v_sigma);
    });
}

fn read_engine(r: &mut Reader<'_>) -> Result<CmaEs> {
    let dim = r.count()?;
    let lambda = r.count()?;
    let mu = r.count()?;
    if dim == 0 || lambda == 0 {
        return r.fail("dim and lambda must be positive");
    }
    let weights = r.vector(lambda)?;
    let hp = HyperParams {
        dim,
        lambda,
        mu,
        weights,
        mu_w: r.f64()?,
        c_sigma: r.f64()?,
        d_sigma: r.f64()?,
        c_c: r.f64()?,
        c_1: r.f64()?,
        c_mu: r.f64()?,
        c_m: r.f64()?,
    };
    if hp.validate().is_err() {
        return r.fail("hyperparameters fail validation");
    }

    let mean = r.vector(dim)?;
    let sigma = r.f64()?;
    let cov = r.packed_upper(dim)?;
    let p_sigma = r.vector(dim)?;
    let p_c = r.vector(dim)?;
    let generation = r.u64()?;
    let sigma0 = r.f64()?;

    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let stream = r.u64()?;
    let word_pos = r.u128()?;
    let mut rng = ChaCha20Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);

    let bounds = read_flag(r, |r| {
        let lo = r.vector(dim)?;
        let hi = r.vector(dim)?;
        BoxBounds::new(lo.iter().copied().collect(), hi.iter().copied().collect()).map_err(|e| {
            CmaError::SnapshotDecode {
                offset: r.pos,
                reason: format!("invalid bounds: {e}"),
            }
        })
    })?;
    let max_resamples = r.u32()?;
    let resample_overflows = r.u64()?;
    let max_generations = read_flag(r, |r| r.u64())?;

    let n = r.count()?;
    let mut tolfun_hist = VecDeque::with_capacity(n);
    for _ in 0..n {
        tolfun_hist.push_back(r.f64()?);
    }
    let n = r.count()?;
    let mut stag_hist = VecDeque::with_capacity(n);
    for _ in 0..n {
        let b = r.f64()?;
        let m = r.f64()?;
        stag_hist.push_back((b, m));
    }
    let best = read_flag(r, |r| {
        let x = r.vector(dim)?;
        let value = r.f64()?;
        Ok(EvaluatedSolution::new(x, value))
    })?;
    let lra = read_flag(r, |r| {
        let mut l = LraState::new(dim);
        l.eta_mean = r.f64()?;
        l.eta_sigma = r.f64()?;
        l.alpha = r.f64()?;
        l.beta_mean = r.f64()?;
        l.beta_sigma = r.f64()?;
        l.gamma = r.f64()?;
        l.e_mean = r.vector(dim)?;
        l.v_mean = r.f64()?;
        l.e_sigma = r.vector(dim * dim)?;
        l.v_sigma = r.f64()?;
        Ok(l)
    })?;

    Ok(CmaEs {
        hp,
        mean,
        sigma,
        cov,
        eigen_basis: DMatrix::identity(dim, dim),
        eigen_sqrt: DVector::from_element(dim, 1.0),
        eigen_fresh: false,
        p_sigma,
        p_c,
        generation,
        sigma0,
        rng,
        bounds,
        max_resamples,
        resample_overflows,
        max_generations,
        tolfun_hist,
        stag_hist,
        best,
        lra,
    })
}

fn verify_envelope<'a>(bytes: &'a [u8]) -> Result<Reader<'a>> {
    if bytes.len() < 4 + 4 + 1 + CHECKSUM_LEN {
        return Reader::new(bytes).fail("snapshot too short");
    }
    let payload = &bytes[..bytes.len() - CHECKSUM_LEN];
    let digest = Sha256::digest(payload);
    if digest[..CHECKSUM_LEN] != bytes[bytes.len() - CHECKSUM_LEN..] {
        return Err(CmaError::SnapshotDecode {
            offset: bytes.len() - CHECKSUM_LEN,
            reason: "checksum mismatch".into(),
        });
    }
    let mut r = Reader::new(payload);
    if r.take(4)? != MAGIC {
        return Err(CmaError::SnapshotDecode {
            offset: 0,
            reason: "bad magic, not a snapshot".into(),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CmaError::SnapshotVersion {
            found: version,
            supported: VERSION,
        });
    }
    Ok(r)
}

fn finish_decode(r: Reader<'_>) -> Result<()> {
    if r.pos != r.buf.len() {
        return Err(CmaError::SnapshotDecode {
            offset: r.pos,
            reason: "trailing bytes after snapshot payload".into(),
        });
    }
    Ok(())
}

impl CmaEs {
    /// Serializes the full optimizer state (without the eigendecomposition
    /// cache) to a compact binary snapshot.
    pub fn to_snapshot(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u8(KIND_PLAIN);
        write_engine(&mut w, self);
        w.finish()
    }

    /// Restores an optimizer from [`CmaEs::to_snapshot`] bytes. The resumed
    /// instance continues the original trajectory bit-exactly.
    pub fn from_snapshot(bytes: &[u8]) -> Result<Self> {
        let mut r = verify_envelope(bytes)?;
        if r.u8()? != KIND_PLAIN {
            return Err(CmaError::SnapshotDecode {
                offset: 8,
                reason: "snapshot holds a mixed-integer optimizer; use the matching loader".into(),
            });
        }
        let es = read_engine(&mut r)?;
        finish_decode(r)?;
        Ok(es)
    }
}

impl CmaWm {
    pub fn to_snapshot(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u8(KIND_WM);
        write_engine(&mut w, &self.es);
        w.f64(self.alpha);
        let d = self.spec.dim();
        w.u32(d as u32);
        for &(lo, hi) in self.spec.bounds() {
            w.f64(lo);
            w.f64(hi);
        }
        for &s in self.spec.steps() {
            w.f64(s);
        }
        w.finish()
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<Self> {
        let mut r = verify_envelope(bytes)?;
        if r.u8()? != KIND_WM {
            return Err(CmaError::SnapshotDecode {
                offset: 8,
                reason: "snapshot holds a plain optimizer; use the matching loader".into(),
            });
        }
        let es = read_engine(&mut r)?;
        let alpha = r.f64()?;
        let d = r.count()?;
        if d != es.dim() {
            return r.fail("discretization dim mismatch");
        }
        let mut bounds = Vec::with_capacity(d);
        for _ in 0..d {
            let lo = r.f64()?;
            let hi = r.f64()?;
            bounds.push((lo, hi));
        }
        let mut steps = Vec::with_capacity(d);
        for _ in 0..d {
            steps.push(r.f64()?);
        }
        let pos = r.pos;
        finish_decode(r)?;
        let spec = DiscretizationSpec::new(bounds, steps).map_err(|e| {
            CmaError::SnapshotDecode {
                offset: pos,
                reason: format!("invalid discretization: {e}"),
            }
        })?;
        MarginConfig::new(alpha).map_err(|e| CmaError::SnapshotDecode {
            offset: pos,
            reason: format!("invalid margin: {e}"),
        })?;
        Ok(CmaWm { es, spec, alpha })
    }
}
