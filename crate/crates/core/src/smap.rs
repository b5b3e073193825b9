//! SMAP binary priority-map files.
//!
//! Layout: magic `SMAP`, version byte `0x01`, kind byte (`0x00` priority,
//! `0x01` probability), little-endian `u32` width and height, then
//! `width * height` little-endian `f32` values in row-major order, row 0 at
//! the top.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Geometry, MapKind, PriorityMap};

pub const MAGIC: &[u8; 4] = b"SMAP";
pub const VERSION: u8 = 0x01;

pub fn write_smap(map: &PriorityMap, mut w: impl Write) -> std::io::Result<()> {
    let kind = match map.kind() {
        MapKind::Priority => 0u8,
        MapKind::Probability => 1u8,
    };
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, kind])?;
    w.write_all(&(map.width() as u32).to_le_bytes())?;
    w.write_all(&(map.height() as u32).to_le_bytes())?;
    for &v in map.values() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Reads an SMAP stream. The file carries no downsample factor, so the
/// caller supplies it. Probability maps are renormalized in double precision
/// to absorb the `f32` storage rounding.
pub fn read_smap(mut r: impl Read, downsample: u32) -> Result<PriorityMap> {
    let mut header = [0u8; 14];
    r.read_exact(&mut header)
        .map_err(|e| Error::SmapFormat(format!("truncated header: {e}")))?;
    if &header[..4] != MAGIC {
        return Err(Error::SmapFormat("bad magic".into()));
    }
    if header[4] != VERSION {
        return Err(Error::SmapFormat(format!("unsupported version {}", header[4])));
    }
    let kind = match header[5] {
        0 => MapKind::Priority,
        1 => MapKind::Probability,
        k => return Err(Error::SmapFormat(format!("unknown kind byte {k}"))),
    };
    let width = u32::from_le_bytes(header[6..10].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(header[10..14].try_into().unwrap()) as usize;
    let geometry = Geometry::new(width, height, downsample)?;
    let mut bytes = vec![0u8; geometry.cells() * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::SmapFormat(format!("truncated payload: {e}")))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::SmapFormat(e.to_string()))? != 0 {
        return Err(Error::SmapFormat("trailing bytes after payload".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    match kind {
        MapKind::Priority => PriorityMap::priority(geometry, values),
        MapKind::Probability => PriorityMap::from_weights(geometry, values),
    }
}

pub fn save_smap(map: &PriorityMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_smap(map, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_smap(path: impl AsRef<Path>, downsample: u32) -> Result<PriorityMap> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_smap(BufReader::new(file), downsample)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let g = Geometry::new(2, 1, 1).unwrap();
        let map = PriorityMap::priority(g, vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_smap(&map, &mut buf).unwrap();
        let mut expected = b"SMAP\x01\x00".to_vec();
        expected.extend_from_slice(&[2, 0, 0, 0, 1, 0, 0, 0]);
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(buf, expected);
        let back = read_smap(&buf[..], 1).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn probability_maps_round_trip_within_f32() {
        let g = Geometry::new(3, 2, 1).unwrap();
        let map = PriorityMap::from_weights(g, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut buf = Vec::new();
        write_smap(&map, &mut buf).unwrap();
        assert_eq!(buf[5], 1);
        let back = read_smap(&buf[..], 1).unwrap();
        assert!(back.is_probability());
        for (a, b) in back.values().iter().zip(map.values()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn malformed_streams_are_rejected() {
        assert!(read_smap(&b"SMAQ\x01\x00\x01\0\0\0\x01\0\0\0\0\0\0\0"[..], 1).is_err());
        assert!(read_smap(&b"SMAP\x02\x00\x01\0\0\0\x01\0\0\0\0\0\0\0"[..], 1).is_err());
        assert!(read_smap(&b"SMAP\x01\x07\x01\0\0\0\x01\0\0\0\0\0\0\0"[..], 1).is_err());
        assert!(read_smap(&b"SMAP\x01\x00\x01\0\0\0\x01\0\0\0\0\0"[..], 1).is_err());
        assert!(read_smap(&b"SMAP\x01\x00\x01\0\0\0\x01\0\0\0\0\0\0\0\0"[..], 1).is_err());
    }
}
