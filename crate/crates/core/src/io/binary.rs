//! Little-endian primitives shared by every binary container, plus atomic file writes.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use nalgebra::{Quaternion, Vector3};

use crate::error::{Error, Result};
use crate::geom::{FrameTag, Panorama, Pose6D, SemanticClass, Trajectory};

/// Longest string or sequence accepted from a file; guards allocations on corrupt input.
const MAX_LEN: u64 = 1 << 28;

/// Writes to `path` through a sibling temporary file and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_header(w: &mut Vec<u8>, magic: &[u8; 8], version: u32) {
    w.extend_from_slice(magic);
    w.write_u32::<LE>(version).expect("vec write");
}

pub fn read_header<R: Read>(r: &mut R, magic: &[u8; 8], version: u32) -> Result<()> {
    let mut got = [0u8; 8];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let v = r.read_u32::<LE>()?;
    if v != version {
        return Err(Error::Format(format!(
            "{} version {v} is not supported (expected {version})",
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub fn put_u8(w: &mut Vec<u8>, v: u8) {
    w.push(v);
}

pub fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.write_u32::<LE>(v).expect("vec write");
}

pub fn put_u64(w: &mut Vec<u8>, v: u64) {
    w.write_u64::<LE>(v).expect("vec write");
}

pub fn put_f64(w: &mut Vec<u8>, v: f64) {
    w.write_f64::<LE>(v).expect("vec write");
}

pub fn put_len(w: &mut Vec<u8>, n: usize) {
    put_u32(w, u32::try_from(n).expect("length fits in u32"));
}

pub fn put_str(w: &mut Vec<u8>, s: &str) {
    put_len(w, s.len());
    w.extend_from_slice(s.as_bytes());
}

pub fn put_f64s(w: &mut Vec<u8>, xs: &[f64]) {
    put_len(w, xs.len());
    for &x in xs {
        put_f64(w, x);
    }
}

pub fn get_u8<R: Read>(r: &mut R) -> Result<u8> {
    Ok(r.read_u8()?)
}

pub fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(r.read_u32::<LE>()?)
}

pub fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(r.read_u64::<LE>()?)
}

pub fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(r.read_f64::<LE>()?)
}

pub fn get_len<R: Read>(r: &mut R) -> Result<usize> {
    let n = get_u32(r)? as u64;
    if n > MAX_LEN {
        return Err(Error::Format(format!("length {n} exceeds the format limit")));
    }
    Ok(n as usize)
}

pub fn get_str<R: Read>(r: &mut R) -> Result<String> {
    let n = get_len(r)?;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(format!("invalid UTF-8 string: {e}")))
}

pub fn get_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = get_len(r)?;
    (0..n).map(|_| get_f64(r)).collect()
}

/// Pose layout: `t_s`, position xyz, quaternion wxyz; all f64.
pub fn put_trajectory(w: &mut Vec<u8>, t: &Trajectory) {
    put_u8(w, matches!(t.frame, FrameTag::Ego) as u8);
    put_len(w, t.len());
    for p in &t.poses {
        put_f64(w, p.t_s);
        for k in 0..3 {
            put_f64(w, p.position[k]);
        }
        let q = &p.orientation;
        for v in [q.w, q.i, q.j, q.k] {
            put_f64(w, v);
        }
    }
}

pub fn get_trajectory<R: Read>(r: &mut R) -> Result<Trajectory> {
    let frame = match get_u8(r)? {
        0 => FrameTag::World,
        1 => FrameTag::Ego,
        other => return Err(Error::Format(format!("frame tag {other}"))),
    };
    let n = get_len(r)?;
    let mut poses = Vec::with_capacity(n);
    for _ in 0..n {
        let t_s = get_f64(r)?;
        let position = Vector3::new(get_f64(r)?, get_f64(r)?, get_f64(r)?);
        let (qw, qx, qy, qz) = (get_f64(r)?, get_f64(r)?, get_f64(r)?, get_f64(r)?);
        poses.push(Pose6D { t_s, position, orientation: Quaternion::new(qw, qx, qy, qz) });
    }
    Ok(Trajectory::new(poses, frame))
}

/// Panorama layout: width, height, depth f32 × n, rgb u8 × 3n, semantic code u8 × n.
pub fn put_panorama(w: &mut Vec<u8>, p: &Panorama) {
    put_len(w, p.width);
    put_len(w, p.height);
    for &d in &p.depth {
        w.write_f32::<LE>(d).expect("vec write");
    }
    for c in &p.color {
        w.extend_from_slice(c);
    }
    w.extend(p.semantic.iter().map(|s| s.code()));
}

pub fn get_panorama<R: Read>(r: &mut R) -> Result<Panorama> {
    let width = get_len(r)?;
    let height = get_len(r)?;
    let n = width
        .checked_mul(height)
        .filter(|n| (*n as u64) <= MAX_LEN)
        .ok_or_else(|| Error::Format(format!("panorama {width}x{height} too large")))?;
    let mut depth = vec![0f32; n];
    r.read_f32_into::<LE>(&mut depth)?;
    let mut rgb = vec![0u8; 3 * n];
    r.read_exact(&mut rgb)?;
    let mut codes = vec![0u8; n];
    r.read_exact(&mut codes)?;
    Ok(Panorama {
        width,
        height,
        depth,
        color: rgb.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        semantic: codes.into_iter().map(SemanticClass::from_code).collect::<Result<_>>()?,
    })
}
