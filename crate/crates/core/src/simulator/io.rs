//! Append-only binary trajectory stream.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! header   magic "ABCTRJ01" (8 bytes)
//!          u32 N
//!          f64 beta, beta_tilde, theta, delta
//!          f64 r_A, r_B, r_E        (left reservoir)
//!          f64 r~_A, r~_B, r~_E     (right reservoir)
//!          u64 seed
//! record   u8 0x01, f64 time, N-1 bytes species code (A=0, B=1, E=2)
//! trailer  u8 0xFF, u64 event count
//! ```
//!
//! Records are written in snapshot order; the trailer is written once at the end.

use std::io::{self, Read, Write};

use super::run::{Snapshot, Trajectory};
use crate::species::{ModelParams, ReservoirDensities, Species};

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"ABCTRJ01";
const TAG_SNAPSHOT: u8 = 0x01;
const TAG_TRAILER: u8 = 0xFF;

pub fn write_trajectory<W: Write>(mut w: W, tr: &Trajectory) -> io::Result<()> {
    let p = &tr.params;
    w.write_all(TRAJECTORY_MAGIC)?;
    w.write_all(&(p.n as u32).to_le_bytes())?;
    let floats = [
        p.beta,
        p.beta_tilde,
        p.theta,
        p.delta,
        p.left.a,
        p.left.b,
        p.left.empty,
        p.right.a,
        p.right.b,
        p.right.empty,
    ];
    for f in floats {
        w.write_all(&f.to_le_bytes())?;
    }
    w.write_all(&tr.seed.to_le_bytes())?;
    let mut buf = Vec::with_capacity(p.n);
    for snap in &tr.snapshots {
        w.write_all(&[TAG_SNAPSHOT])?;
        w.write_all(&snap.time.to_le_bytes())?;
        buf.clear();
        buf.extend(snap.occupancy.iter().map(|s| s.code()));
        w.write_all(&buf)?;
    }
    w.write_all(&[TAG_TRAILER])?;
    w.write_all(&tr.event_count.to_le_bytes())?;
    w.flush()
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_trajectory<R: Read>(mut r: R) -> io::Result<Trajectory> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(invalid("bad trajectory magic"));
    }
    let mut nb = [0u8; 4];
    r.read_exact(&mut nb)?;
    let n = u32::from_le_bytes(nb) as usize;
    if n < 3 {
        return Err(invalid(format!("N = {n} too small")));
    }
    let mut f = [0.0; 10];
    for v in f.iter_mut() {
        *v = read_f64(&mut r)?;
    }
    let params = ModelParams {
        n,
        beta: f[0],
        beta_tilde: f[1],
        theta: f[2],
        delta: f[3],
        left: ReservoirDensities {
            a: f[4],
            b: f[5],
            empty: f[6],
        },
        right: ReservoirDensities {
            a: f[7],
            b: f[8],
            empty: f[9],
        },
    };
    let seed = read_u64(&mut r)?;
    let mut snapshots = Vec::new();
    let mut codes = vec![0u8; n - 1];
    loop {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        match tag[0] {
            TAG_SNAPSHOT => {
                let time = read_f64(&mut r)?;
                r.read_exact(&mut codes)?;
                let occupancy = codes
                    .iter()
                    .map(|c| Species::from_code(*c).ok_or_else(|| invalid(format!("species code {c}"))))
                    .collect::<io::Result<Vec<_>>>()?;
                snapshots.push(Snapshot { time, occupancy });
            }
            TAG_TRAILER => {
                let event_count = read_u64(&mut r)?;
                return Ok(Trajectory {
                    params,
                    seed,
                    snapshots,
                    event_count,
                });
            }
            t => return Err(invalid(format!("unknown record tag {t:#x}"))),
        }
    }
}
