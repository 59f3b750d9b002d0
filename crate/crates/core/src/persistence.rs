//! Checkpoint files (`.snsckpt`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SNSB"                       magic
//! u32 len, bytes               format version, "snowball-ns/v1"
//! section*                     CONF, REPT, MEMO, SAMP in that order
//! ```
//!
//! Each section is a 4-byte tag, a `u64` payload length, the payload and
//! the CRC32C of the payload. Floats are stored as their IEEE-754 bit
//! patterns so memo keys survive a round trip exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lrps::WalkResult;
use crate::memo::{MemoKey, MemoTable};
use crate::point::Point;
use crate::problems::ProblemSpec;
use crate::snowball::{SamplerSnapshot, Snowball, SnowballConfig, SnowballReport};

pub const MAGIC: &[u8; 4] = b"SNSB";
pub const FORMAT_VERSION: &str = "snowball-ns/v1";
pub const EXTENSION: &str = "snsckpt";

const TAG_CONFIG: &[u8; 4] = b"CONF";
const TAG_REPORTS: &[u8; 4] = b"REPT";
const TAG_MEMO: &[u8; 4] = b"MEMO";
const TAG_SAMPLER: &[u8; 4] = b"SAMP";

/// Everything needed to continue a snowball loop at an outer-iteration boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: String,
    pub config: SnowballConfig,
    pub completed_outer_iterations: u64,
    pub memo: MemoTable,
    pub reports: Vec<SnowballReport>,
    pub master_seed: u64,
    pub sampler: SamplerSnapshot,
}

impl Checkpoint {
    pub fn capture(sb: &Snowball) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION.to_string(),
            config: sb.config().clone(),
            completed_outer_iterations: sb.completed(),
            memo: sb.memo().clone(),
            reports: sb.reports().to_vec(),
            master_seed: sb.config().seed,
            sampler: sb.sampler_snapshot(),
        }
    }

    pub fn resume(self) -> Result<Snowball> {
        if self.master_seed != self.config.seed {
            return Err(Error::Format("master seed disagrees with config".into()));
        }
        if self.completed_outer_iterations != self.reports.len() as u64 {
            return Err(Error::Format(
                "completed iteration count disagrees with reports".into(),
            ));
        }
        Snowball::restore(self.config, self.memo, self.reports, self.sampler)
    }
}

#[derive(Default)]
struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }
    fn opt_f64(&mut self, v: Option<f64>) {
        match v {
            Some(x) => {
                self.u8(1);
                self.f64(x);
            }
            None => self.u8(0),
        }
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|x| self.f64(*x));
    }
    fn bytes(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.0.extend_from_slice(v);
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Dec<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Dec { buf, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!("truncated {}", self.what)));
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
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?)
            .map_err(|_| Error::Format(format!("count overflow in {}", self.what)))
    }
    fn len(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(elem_size) > self.buf.len() - self.pos {
            return Err(Error::Format(format!("truncated {}", self.what)));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Format(format!("bad boolean {b} in {}", self.what))),
        }
    }
    fn opt_f64(&mut self) -> Result<Option<f64>> {
        Ok(if self.bool()? {
            Some(self.f64()?)
        } else {
            None
        })
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!("trailing bytes in {}", self.what)));
        }
        Ok(())
    }
}

fn encode_problem(e: &mut Enc, p: &ProblemSpec) {
    match *p {
        ProblemSpec::Rosenbrock { dim, lo, hi } => {
            e.u8(0);
            e.usize(dim);
            e.f64(lo);
            e.f64(hi);
        }
        ProblemSpec::Gaussian { dim, sigma, lo, hi } => {
            e.u8(1);
            e.usize(dim);
            e.f64(sigma);
            e.f64(lo);
            e.f64(hi);
        }
        ProblemSpec::Constant { dim, logl, lo, hi } => {
            e.u8(2);
            e.usize(dim);
            e.f64(logl);
            e.f64(lo);
            e.f64(hi);
        }
    }
}

fn decode_problem(d: &mut Dec) -> Result<ProblemSpec> {
    Ok(match d.u8()? {
        0 => ProblemSpec::Rosenbrock {
            dim: d.usize()?,
            lo: d.f64()?,
            hi: d.f64()?,
        },
        1 => ProblemSpec::Gaussian {
            dim: d.usize()?,
            sigma: d.f64()?,
            lo: d.f64()?,
            hi: d.f64()?,
        },
        2 => ProblemSpec::Constant {
            dim: d.usize()?,
            logl: d.f64()?,
            lo: d.f64()?,
            hi: d.f64()?,
        },
        t => return Err(Error::Format(format!("unknown problem tag {t}"))),
    })
}

fn encode_config(ck: &Checkpoint) -> Vec<u8> {
    let c = &ck.config;
    let mut e = Enc::default();
    encode_problem(&mut e, &c.problem);
    e.usize(c.k0);
    e.usize(c.k_inc);
    e.usize(c.m_steps);
    e.f64(c.term_epsilon);
    e.u64(c.max_outer_iterations);
    e.u64(c.seed);
    e.bool(c.memoize);
    e.usize(c.max_dead);
    e.f64(c.adapt_gamma0);
    e.f64(c.adapt_kappa);
    e.u64(ck.completed_outer_iterations);
    e.u64(ck.master_seed);
    e.0
}

fn decode_config(buf: &[u8]) -> Result<(SnowballConfig, u64, u64)> {
    let mut d = Dec::new(buf, "config section");
    let config = SnowballConfig {
        problem: decode_problem(&mut d)?,
        k0: d.usize()?,
        k_inc: d.usize()?,
        m_steps: d.usize()?,
        term_epsilon: d.f64()?,
        max_outer_iterations: d.u64()?,
        seed: d.u64()?,
        memoize: d.bool()?,
        max_dead: d.usize()?,
        adapt_gamma0: d.f64()?,
        adapt_kappa: d.f64()?,
    };
    let completed = d.u64()?;
    let master_seed = d.u64()?;
    d.finish()?;
    Ok((config, completed, master_seed))
}

fn encode_reports(reports: &[SnowballReport]) -> Vec<u8> {
    let mut e = Enc::default();
    e.usize(reports.len());
    for r in reports {
        e.u64(r.outer_iteration);
        e.usize(r.k);
        e.f64(r.log_z);
        e.f64(r.log_z_err);
        e.f64(r.ess);
        e.u64(r.n_dead);
        e.u64(r.n_like_evals_cumulative);
        e.u64(r.n_lrps_calls_new);
        e.u64(r.n_memo_hits);
        e.opt_f64(r.wall_seconds);
        e.bool(r.failed);
    }
    e.0
}

fn decode_reports(buf: &[u8]) -> Result<Vec<SnowballReport>> {
    let mut d = Dec::new(buf, "reports section");
    let n = d.len(8 * 9 + 2)?;
    let reports = (0..n)
        .map(|_| {
            Ok(SnowballReport {
                outer_iteration: d.u64()?,
                k: d.usize()?,
                log_z: d.f64()?,
                log_z_err: d.f64()?,
                ess: d.f64()?,
                n_dead: d.u64()?,
                n_like_evals_cumulative: d.u64()?,
                n_lrps_calls_new: d.u64()?,
                n_memo_hits: d.u64()?,
                wall_seconds: d.opt_f64()?,
                failed: d.bool()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    d.finish()?;
    Ok(reports)
}

fn encode_memo(memo: &MemoTable) -> Vec<u8> {
    let mut e = Enc::default();
    e.u64(memo.n_hits());
    e.u64(memo.n_misses());
    e.usize(memo.len());
    for (key, w) in memo.entries() {
        e.u64(key.bits());
        e.f64s(&w.point.u);
        e.f64s(&w.point.theta);
        e.f64(w.point.logl);
        e.u64(w.point.origin_id);
        e.u64(w.n_accepted);
        e.u64(w.n_proposed);
        e.u64(w.chain_start_id);
    }
    e.0
}

fn decode_memo(buf: &[u8]) -> Result<MemoTable> {
    let mut d = Dec::new(buf, "memo section");
    let n_hits = d.u64()?;
    let n_misses = d.u64()?;
    let n = d.len(8 * 8)?;
    let mut entries = BTreeMap::new();
    for _ in 0..n {
        let key = MemoKey::from_bits(d.u64()?);
        let walk = WalkResult {
            point: Point {
                u: d.f64s()?,
                theta: d.f64s()?,
                logl: d.f64()?,
                origin_id: d.u64()?,
            },
            n_accepted: d.u64()?,
            n_proposed: d.u64()?,
            chain_start_id: d.u64()?,
        };
        if entries.insert(key, walk).is_some() {
            return Err(Error::Format("duplicate memo key".into()));
        }
    }
    d.finish()?;
    Ok(MemoTable::from_parts(entries, n_hits, n_misses))
}

fn encode_sampler(s: &SamplerSnapshot) -> Vec<u8> {
    let mut e = Enc::default();
    e.f64(s.scale);
    e.u64(s.call_index);
    e.usize(s.history_capacity);
    e.usize(s.accept_history.len());
    for (scale, frac) in &s.accept_history {
        e.f64(*scale);
        e.f64(*frac);
    }
    e.0
}

fn decode_sampler(buf: &[u8]) -> Result<SamplerSnapshot> {
    let mut d = Dec::new(buf, "sampler section");
    let scale = d.f64()?;
    let call_index = d.u64()?;
    let history_capacity = d.usize()?;
    let n = d.len(16)?;
    let accept_history = (0..n)
        .map(|_| Ok((d.f64()?, d.f64()?)))
        .collect::<Result<Vec<_>>>()?;
    d.finish()?;
    Ok(SamplerSnapshot {
        scale,
        call_index,
        history_capacity,
        accept_history,
    })
}

fn section_name(tag: &[u8; 4]) -> &'static str {
    match tag {
        TAG_CONFIG => "config",
        TAG_REPORTS => "reports",
        TAG_MEMO => "memo",
        TAG_SAMPLER => "sampler",
        _ => "unknown",
    }
}

fn put_section(out: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc32c::crc32c(payload).to_le_bytes());
}

fn get_section<'a>(d: &mut Dec<'a>, tag: &[u8; 4]) -> Result<&'a [u8]> {
    let name = section_name(tag);
    let found = d
        .take(4)
        .map_err(|_| Error::Format(format!("truncated before {name} section")))?;
    if found != tag {
        return Err(Error::Format(format!(
            "expected {name} section, found tag {:?}",
            String::from_utf8_lossy(found)
        )));
    }
    let truncated = |_| Error::Format(format!("truncated {name} section"));
    let len = d.u64().map_err(truncated)?;
    let len =
        usize::try_from(len).map_err(|_| Error::Format(format!("truncated {name} section")))?;
    let payload = d.take(len).map_err(truncated)?;
    let crc = d.u32().map_err(truncated)?;
    if crc32c::crc32c(payload) != crc {
        return Err(Error::Checksum {
            section: name.to_string(),
        });
    }
    Ok(payload)
}

/// Serializes a checkpoint. Deterministic: equal checkpoints give equal bytes.
pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let mut v = Enc::default();
    v.bytes(ck.format_version.as_bytes());
    out.extend_from_slice(&v.0);
    put_section(&mut out, TAG_CONFIG, &encode_config(ck));
    put_section(&mut out, TAG_REPORTS, &encode_reports(&ck.reports));
    put_section(&mut out, TAG_MEMO, &encode_memo(&ck.memo));
    put_section(&mut out, TAG_SAMPLER, &encode_sampler(&ck.sampler));
    out
}

pub fn decode(buf: &[u8]) -> Result<Checkpoint> {
    let mut d = Dec::new(buf, "header");
    if d.take(4)? != MAGIC {
        return Err(Error::Format(
            "not a snowball checkpoint (bad magic)".into(),
        ));
    }
    let version = String::from_utf8_lossy(d.bytes()?).into_owned();
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION.to_string(),
            found: version,
        });
    }
    let (config, completed_outer_iterations, master_seed) =
        decode_config(get_section(&mut d, TAG_CONFIG)?)?;
    let reports = decode_reports(get_section(&mut d, TAG_REPORTS)?)?;
    let memo = decode_memo(get_section(&mut d, TAG_MEMO)?)?;
    let sampler = decode_sampler(get_section(&mut d, TAG_SAMPLER)?)?;
    d.finish()?;
    Ok(Checkpoint {
        format_version: version,
        config,
        completed_outer_iterations,
        memo,
        reports,
        master_seed,
        sampler,
    })
}

/// Writes `ck` to `path` atomically: a sibling temporary file is written,
/// synced and renamed over the target.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode(ck);
    let file_name = path.file_name().ok_or_else(|| {
        Error::io(
            path,
            std::io::Error::other("checkpoint path has no file name"),
        )
    })?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
