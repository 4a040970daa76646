//! Session snapshots in the stream container.
//!
//! The header is the stream header with [`FLAG_SNAPSHOT`] set, `frames = 0`,
//! `pixels = K`, `channels = C`, `value_channels = C'` and `objects` the
//! number of stored objects. A config block follows:
//!
//! ```text
//! tau f64, epsilon f64, iterations u32, top_l u32, weight_mode u32 (0 fixed, 1 adaptive), seed u64
//! ```
//!
//! then, per object: `id u32`, `frame_count u64`, and the f64 arrays
//! `kappa_fg, kappa_bg (K×C), nu_fg, nu_bg (K×C'), alpha_fg (K×C), beta_fg (K),
//! alpha_bg (K×C), beta_bg (K)`. Snapshots store f64 so a resumed session
//! continues bit-identically.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use swem_core::{
    Accumulator, BasisSet, Class, ClassState, KernelParams, Matrix, ObjectId, ObjectMemory,
    Session, SessionConfig, WeightMode,
};

use crate::error::{format_err, Result};
use crate::format::{Header, FLAG_SNAPSHOT, VERSION};

pub fn write_snapshot<W: Write>(session: &Session, w: &mut W) -> Result<()> {
    let cfg = session.config();
    let first = session.objects().next().map(|(_, m)| m);
    let header = Header {
        version: VERSION,
        frames: 0,
        pixels: cfg.k as u32,
        channels: first.map_or(0, |m| m.key_channels() as u32),
        value_channels: first.map_or(0, |m| m.value_channels() as u32),
        objects: session.objects().count() as u32,
        flags: FLAG_SNAPSHOT,
    };
    header.write(w)?;
    w.write_f64::<LittleEndian>(cfg.kernel.tau)?;
    w.write_f64::<LittleEndian>(cfg.kernel.epsilon)?;
    w.write_u32::<LittleEndian>(cfg.iterations as u32)?;
    w.write_u32::<LittleEndian>(cfg.top_l as u32)?;
    w.write_u32::<LittleEndian>(match cfg.weight_mode {
        WeightMode::Fixed => 0,
        WeightMode::Adaptive => 1,
    })?;
    w.write_u64::<LittleEndian>(cfg.seed)?;
    for (id, m) in session.objects() {
        if m.key_channels() != header.channels as usize
            || m.value_channels() != header.value_channels as usize
        {
            return Err(format_err("objects with differing channel counts"));
        }
        w.write_u32::<LittleEndian>(id.0)?;
        w.write_u64::<LittleEndian>(m.frame_count())?;
        let fg = m.class(Class::Foreground);
        let bg = m.class(Class::Background);
        for arr in [
            fg.bases.as_slice(),
            bg.bases.as_slice(),
            m.values(Class::Foreground).as_slice(),
            m.values(Class::Background).as_slice(),
            fg.acc.alpha.as_slice(),
            &fg.acc.beta,
            bg.acc.alpha.as_slice(),
            &bg.acc.beta,
        ] {
            for &v in arr {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Session> {
    let h = Header::read(r)?;
    if h.flags != FLAG_SNAPSHOT {
        return Err(format_err("not a snapshot"));
    }
    let trunc = |_| format_err("truncated snapshot");
    let tau = r.read_f64::<LittleEndian>().map_err(trunc)?;
    let epsilon = r.read_f64::<LittleEndian>().map_err(trunc)?;
    let iterations = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
    let top_l = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
    let weight_mode = match r.read_u32::<LittleEndian>().map_err(trunc)? {
        0 => WeightMode::Fixed,
        1 => WeightMode::Adaptive,
        other => return Err(format_err(format!("unknown weight mode {other}"))),
    };
    let seed = r.read_u64::<LittleEndian>().map_err(trunc)?;
    let k = h.pixels as usize;
    let c = h.channels as usize;
    let cv = h.value_channels as usize;
    let mut session = Session::new(SessionConfig {
        k,
        iterations,
        top_l,
        kernel: KernelParams::new(tau, epsilon)?,
        weight_mode,
        seed,
    })?;
    let read_matrix = |r: &mut R, rows: usize, cols: usize| -> Result<Matrix> {
        let data = (0..rows * cols)
            .map(|_| r.read_f64::<LittleEndian>().map_err(trunc))
            .collect::<Result<Vec<_>>>()?;
        Ok(Matrix::from_vec(rows, cols, data)?)
    };
    for _ in 0..h.objects {
        let id = ObjectId(r.read_u32::<LittleEndian>().map_err(trunc)?);
        let frame_count = r.read_u64::<LittleEndian>().map_err(trunc)?;
        let kappa_fg = BasisSet::new(read_matrix(r, k, c)?)?;
        let kappa_bg = BasisSet::new(read_matrix(r, k, c)?)?;
        let nu_fg = read_matrix(r, k, cv)?;
        let nu_bg = read_matrix(r, k, cv)?;
        let alpha_fg = read_matrix(r, k, c)?;
        let beta_fg = read_matrix(r, 1, k)?.into_vec();
        let alpha_bg = read_matrix(r, k, c)?;
        let beta_bg = read_matrix(r, 1, k)?.into_vec();
        let fg = ClassState::new(kappa_fg, Accumulator { alpha: alpha_fg, beta: beta_fg })?;
        let bg = ClassState::new(kappa_bg, Accumulator { alpha: alpha_bg, beta: beta_bg })?;
        session.insert_object(id, ObjectMemory::from_parts(fg, bg, nu_fg, nu_bg, frame_count)?)?;
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(format_err("trailing bytes after snapshot"));
    }
    Ok(session)
}

pub fn save_snapshot(session: &Session, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_snapshot(session, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Session> {
    read_snapshot(&mut BufReader::new(File::open(path)?))
}
