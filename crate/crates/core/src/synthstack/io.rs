//! Stack and pixel-table serialization. Layouts are documented in
//! `docs/formats.md`.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;

use super::{InterferogramStack, ScenePixel};
use crate::error::{Error, Result};
use crate::pairnet::PairSet;

pub const STACK_MAGIC: &[u8; 8] = b"INSARSTK";
const STACK_VERSION: u32 = 1;
const FLAG_WRAPPED: u32 = 1;
const FLAG_MASK: u32 = 2;

pub const PIXELS_HEADER: &str = "# insar-ts pixels v1";

/// Writes a stack, with an optional per-pixel selection mask.
pub fn write_stack<W: Write>(out: &mut W, stack: &InterferogramStack, mask: Option<&[bool]>) -> std::io::Result<()> {
    if let Some(m) = mask {
        assert_eq!(m.len(), stack.n_pixels(), "mask length must match pixel count");
    }
    out.write_all(STACK_MAGIC)?;
    out.write_u32::<LittleEndian>(STACK_VERSION)?;
    out.write_u32::<LittleEndian>(stack.n_pairs() as u32)?;
    out.write_u32::<LittleEndian>(stack.n_pixels() as u32)?;
    let mut flags = 0;
    if stack.is_wrapped() {
        flags |= FLAG_WRAPPED;
    }
    if mask.is_some() {
        flags |= FLAG_MASK;
    }
    out.write_u32::<LittleEndian>(flags)?;
    for &(i, j) in stack.pairs().pairs() {
        out.write_u32::<LittleEndian>(i as u32)?;
        out.write_u32::<LittleEndian>(j as u32)?;
    }
    for matrix in [stack.phase(), stack.weights()] {
        for r in 0..stack.n_pairs() {
            for c in 0..stack.n_pixels() {
                out.write_f64::<LittleEndian>(matrix[(r, c)])?;
            }
        }
    }
    if let Some(m) = mask {
        for &b in m {
            out.write_u8(u8::from(b))?;
        }
    }
    Ok(())
}

/// Reads a stack written by [`write_stack`]; returns the mask if present.
pub fn read_stack<R: Read>(input: &mut R, origin: &Path) -> Result<(InterferogramStack, Option<Vec<bool>>)> {
    let bad = |msg: String| Error::parse(origin, msg);
    let io = |e: std::io::Error| Error::parse(origin, format!("truncated or unreadable stack: {e}"));
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io)?;
    if &magic != STACK_MAGIC {
        return Err(bad("not an insar-ts stack (bad magic)".into()));
    }
    let version = input.read_u32::<LittleEndian>().map_err(io)?;
    if version != STACK_VERSION {
        return Err(bad(format!("unsupported stack version {version}")));
    }
    let n_pairs = input.read_u32::<LittleEndian>().map_err(io)? as usize;
    let n_pixels = input.read_u32::<LittleEndian>().map_err(io)? as usize;
    let flags = input.read_u32::<LittleEndian>().map_err(io)?;
    if flags & !(FLAG_WRAPPED | FLAG_MASK) != 0 {
        return Err(bad(format!("unknown stack flags {flags:#x}")));
    }
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let i = input.read_u32::<LittleEndian>().map_err(io)? as usize;
        let j = input.read_u32::<LittleEndian>().map_err(io)? as usize;
        pairs.push((i, j));
    }
    let ps = PairSet::from_pairs(pairs.iter().copied())?;
    if ps.pairs() != pairs.as_slice() {
        return Err(bad("pairs must be sorted, unique and ordered i < j".into()));
    }
    let mut read_matrix = || -> Result<DMatrix<f64>> {
        let mut values = vec![0.0; n_pairs * n_pixels];
        input.read_f64_into::<LittleEndian>(&mut values).map_err(io)?;
        Ok(DMatrix::from_row_slice(n_pairs, n_pixels, &values))
    };
    let phase = read_matrix()?;
    let weights = read_matrix()?;
    let mask = if flags & FLAG_MASK != 0 {
        let mut bytes = vec![0u8; n_pixels];
        input.read_exact(&mut bytes).map_err(io)?;
        Some(bytes.into_iter().map(|b| b != 0).collect())
    } else {
        None
    };
    let stack = InterferogramStack::new(ps, phase, flags & FLAG_WRAPPED != 0, weights)
        .map_err(|e| bad(e.to_string()))?;
    Ok((stack, mask))
}

/// Pixel table: header line, then `id,x,y,lon,lat,elevation_m,incidence_deg`.
pub fn write_pixels(pixels: &[ScenePixel]) -> String {
    let mut out = String::with_capacity(64 * pixels.len() + 32);
    out.push_str(PIXELS_HEADER);
    out.push('\n');
    for (id, p) in pixels.iter().enumerate() {
        let _ = writeln!(
            out,
            "{id},{},{},{},{},{},{}",
            p.x, p.y, p.lon, p.lat, p.elevation_m, p.incidence_deg
        );
    }
    out
}

pub fn read_pixels(text: &str, origin: &Path) -> Result<Vec<ScenePixel>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == PIXELS_HEADER => {}
        _ => return Err(Error::parse(origin, format!("missing `{PIXELS_HEADER}` header"))),
    }
    let mut pixels = Vec::new();
    for (lineno, line) in lines {
        if line.trim_start().starts_with('#') {
            continue;
        }
        let bad = || Error::parse(origin, format!("line {}: malformed pixel record", lineno + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(bad());
        }
        let id: usize = fields[0].parse().map_err(|_| bad())?;
        if id != pixels.len() {
            return Err(Error::parse(
                origin,
                format!("line {}: pixel ids must be 0..n in order", lineno + 1),
            ));
        }
        let mut v = [0.0; 6];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| bad())?;
        }
        pixels.push(ScenePixel {
            x: v[0],
            y: v[1],
            lon: v[2],
            lat: v[3],
            elevation_m: v[4],
            incidence_deg: v[5],
        });
    }
    Ok(pixels)
}
