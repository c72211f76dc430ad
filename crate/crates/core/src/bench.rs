//! Encryption and decryption timing versus payload size.
//!
//! Each repetition runs the crypto half of the gateway's upload path (data key
//! generation, plaintext digest, seal, key wrap) and of its download path (key
//! unwrap, open, digest check). The sealed blob is written to and read back
//! from a blob store between the two timed windows, so the harness exercises
//! the whole round trip while the measurements cover crypto alone. A counting
//! store wrapper records any store call that lands inside a timed window.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Instant;

use rand::RngCore;
use serde::Serialize;
use thiserror::Error;

use crate::crypto::{
    unwrap_key, wrap_key, CryptoError, DataKey, ModulusBits, RoleKeyPair, SealedBlob,
};
use crate::integrity::sha256;
use crate::store::{BlobStore, MemoryBlobStore, StoreError};

pub const MIN_REPETITIONS: usize = 5;
pub const DEFAULT_MAX_PAYLOAD: u64 = 1 << 30;
pub const CSV_HEADER: &str = "size_bytes,encrypt_ms,decrypt_ms,ratio";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("sizes must be strictly ascending")]
    SizesNotAscending,
    #[error("at least {MIN_REPETITIONS} repetitions are required, got {0}")]
    TooFewRepetitions(usize),
    #[error("payload of {requested} bytes exceeds the {limit}-byte limit")]
    InsufficientMemory { requested: u64, limit: u64 },
    #[error("trend needs at least 3 rows, got {0}")]
    TooFewRows(usize),
    #[error("store access inside a timed region")]
    ImpureTiming,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub size_bytes: u64,
    /// Median over repetitions.
    pub encrypt_ms: f64,
    /// Median over repetitions.
    pub decrypt_ms: f64,
    pub repetitions: usize,
    /// `encrypt_ms / decrypt_ms`.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub repetitions: usize,
    /// Untimed runs per size before measuring.
    pub warmup: usize,
    /// Largest accepted payload; each run holds about three copies in memory.
    pub max_payload_bytes: u64,
    pub modulus_bits: ModulusBits,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            repetitions: MIN_REPETITIONS,
            warmup: 1,
            max_payload_bytes: DEFAULT_MAX_PAYLOAD,
            modulus_bits: ModulusBits::Rsa2048,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRun {
    pub rows: Vec<BenchRow>,
    /// Store calls made while a timer was running; always 0 on success.
    pub timed_store_ops: u64,
    /// Store calls made between timed windows.
    pub untimed_store_ops: u64,
}

/// Wraps a store and counts calls, split by whether a timer is running.
struct CountingStore<S> {
    inner: S,
    timing: AtomicBool,
    timed: AtomicU64,
    untimed: AtomicU64,
}

impl<S: BlobStore> CountingStore<S> {
    fn new(inner: S) -> Self {
        Self {
            inner,
            timing: AtomicBool::new(false),
            timed: AtomicU64::new(0),
            untimed: AtomicU64::new(0),
        }
    }

    fn tick(&self) {
        let counter = if self.timing.load(Ordering::SeqCst) {
            &self.timed
        } else {
            &self.untimed
        };
        counter.fetch_add(1, Ordering::SeqCst);
    }

    fn timed<T>(&self, f: impl FnOnce() -> T) -> (T, f64) {
        self.timing.store(true, Ordering::SeqCst);
        let start = Instant::now();
        let out = f();
        let ms = start.elapsed().as_secs_f64() * 1e3;
        self.timing.store(false, Ordering::SeqCst);
        (out, ms)
    }
}

impl<S: BlobStore> BlobStore for CountingStore<S> {
    fn put(&self, name: &str, bytes: &[u8]) -> Result<(), StoreError> {
        self.tick();
        self.inner.put(name, bytes)
    }
    fn get(&self, name: &str) -> Result<Vec<u8>, StoreError> {
        self.tick();
        self.inner.get(name)
    }
    fn delete(&self, name: &str) -> Result<bool, StoreError> {
        self.tick();
        self.inner.delete(name)
    }
    fn list(&self) -> Result<Vec<String>, StoreError> {
        self.tick();
        self.inner.list()
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn validate(sizes: &[u64], opts: &BenchOptions) -> Result<(), BenchError> {
    if opts.repetitions < MIN_REPETITIONS {
        return Err(BenchError::TooFewRepetitions(opts.repetitions));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::SizesNotAscending);
    }
    if let Some(&largest) = sizes.last() {
        if largest > opts.max_payload_bytes {
            return Err(BenchError::InsufficientMemory {
                requested: largest,
                limit: opts.max_payload_bytes,
            });
        }
    }
    Ok(())
}

/// One row per size, using default options and `repetitions`.
pub fn run_matrix(sizes: &[u64], repetitions: usize) -> Result<Vec<BenchRow>, BenchError> {
    let opts = BenchOptions {
        repetitions,
        ..Default::default()
    };
    Ok(run_matrix_with(sizes, &opts)?.rows)
}

pub fn run_matrix_with(sizes: &[u64], opts: &BenchOptions) -> Result<BenchRun, BenchError> {
    validate(sizes, opts)?;
    if sizes.is_empty() {
        return Ok(BenchRun {
            rows: Vec::new(),
            timed_store_ops: 0,
            untimed_store_ops: 0,
        });
    }
    let role_key = RoleKeyPair::generate("bench".into(), opts.modulus_bits)?;
    let store = CountingStore::new(MemoryBlobStore::new());
    let aad = b"bench";
    let mut rows = Vec::with_capacity(sizes.len());

    for &size in sizes {
        let mut payload = vec![0u8; size as usize];
        rand::rngs::OsRng
            .try_fill_bytes(&mut payload)
            .map_err(|_| CryptoError::RandomnessUnavailable)?;
        let mut enc = Vec::with_capacity(opts.repetitions);
        let mut dec = Vec::with_capacity(opts.repetitions);

        for run in 0..opts.warmup + opts.repetitions {
            let (sealed, enc_ms) = store.timed(|| -> Result<_, CryptoError> {
                let dk = DataKey::generate()?;
                let digest = sha256(&payload);
                let blob = SealedBlob::seal(&payload, &dk, aad)?;
                let wrapped = wrap_key(&dk, role_key.role(), role_key.public_key())?;
                Ok((blob.to_bytes(), wrapped, digest))
            });
            let (bytes, wrapped, digest) = sealed?;
            store.put("bench.1.blob", &bytes)?;
            drop(bytes);
            let fetched = store.get("bench.1.blob")?;

            let (opened, dec_ms) = store.timed(|| -> Result<_, CryptoError> {
                let dk = unwrap_key(&wrapped, role_key.private_key())?;
                let plain = SealedBlob::from_bytes(&fetched)?.open(&dk, aad)?;
                Ok(sha256(&plain) == digest)
            });
            if !opened? {
                return Err(CryptoError::AuthFailure.into());
            }
            if run >= opts.warmup {
                enc.push(enc_ms);
                dec.push(dec_ms);
            }
        }
        store.delete("bench.1.blob")?;

        let encrypt_ms = median(&mut enc);
        let decrypt_ms = median(&mut dec);
        rows.push(BenchRow {
            size_bytes: size,
            encrypt_ms,
            decrypt_ms,
            repetitions: opts.repetitions,
            ratio: encrypt_ms / decrypt_ms,
        });
    }

    let timed_store_ops = store.timed.load(Ordering::SeqCst);
    if timed_store_ops != 0 {
        return Err(BenchError::ImpureTiming);
    }
    Ok(BenchRun {
        rows,
        timed_store_ops,
        untimed_store_ops: store.untimed.load(Ordering::SeqCst),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    /// Least-squares slope in milliseconds per MiB.
    pub encrypt_slope: f64,
    pub decrypt_slope: f64,
    /// Mean of the per-row encrypt/decrypt ratios; informational only.
    pub mean_ratio: f64,
    pub passed: bool,
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Passes when both timing series grow with size.
pub fn assert_trend(rows: &[BenchRow]) -> Result<TrendReport, BenchError> {
    if rows.len() < 3 {
        return Err(BenchError::TooFewRows(rows.len()));
    }
    let xs: Vec<f64> = rows
        .iter()
        .map(|r| r.size_bytes as f64 / (1 << 20) as f64)
        .collect();
    let enc: Vec<f64> = rows.iter().map(|r| r.encrypt_ms).collect();
    let dec: Vec<f64> = rows.iter().map(|r| r.decrypt_ms).collect();
    let encrypt_slope = slope(&xs, &enc);
    let decrypt_slope = slope(&xs, &dec);
    Ok(TrendReport {
        encrypt_slope,
        decrypt_slope,
        mean_ratio: rows.iter().map(|r| r.ratio).sum::<f64>() / rows.len() as f64,
        passed: encrypt_slope > 0.0 && decrypt_slope > 0.0,
    })
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            r.size_bytes, r.encrypt_ms, r.decrypt_ms, r.ratio
        ));
    }
    out
}
