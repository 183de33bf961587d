//! Binary and CSV containers for feature matrices.
//!
//! Binary layout, all integers little-endian:
//!
//! | offset | size | field        |
//! |--------|------|--------------|
//! | 0      | 4    | magic `TPLF` |
//! | 4      | 4    | version (u32)|
//! | 8      | 8    | frames (u64) |
//! | 16     | 8    | dims (u64)   |
//! | 24     | 8    | config hash  |
//! | 32     | ...  | `frames * dims` f64, row-major |

use std::io::{Read, Write};
use std::path::Path;

use crate::features::FeatureMatrix;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TPLF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

pub fn write_binary<W: Write>(m: &FeatureMatrix, mut w: W) -> Result<()> {
    if m.data.len() != m.frames * m.dims {
        return Err(Error::Shape(format!(
            "{} values for {}x{} matrix",
            m.data.len(),
            m.frames,
            m.dims
        )));
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(m.frames as u64).to_le_bytes())?;
    w.write_all(&(m.dims as u64).to_le_bytes())?;
    w.write_all(&m.config_hash.to_le_bytes())?;
    let mut body = Vec::with_capacity(m.data.len() * 8);
    for v in &m.data {
        body.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&body)?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<FeatureMatrix> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    if &header[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected TPLF".into()));
    }
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().expect("8 bytes"));
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let frames = usize::try_from(u64_at(8)).map_err(|_| Error::Format("frame count overflow".into()))?;
    let dims = usize::try_from(u64_at(16)).map_err(|_| Error::Format("dims overflow".into()))?;
    let config_hash = u64_at(24);
    let n = frames
        .checked_mul(dims)
        .ok_or_else(|| Error::Format("matrix size overflow".into()))?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != n * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            n * 8,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(FeatureMatrix {
        frames,
        dims,
        data,
        source_id: String::new(),
        config_hash,
    })
}

pub fn save_binary(m: &FeatureMatrix, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_binary(m, std::io::BufWriter::new(file))
}

pub fn load_binary(path: &Path) -> Result<FeatureMatrix> {
    let mut m = read_binary(std::io::BufReader::new(std::fs::File::open(path)?))?;
    m.source_id = path.display().to_string();
    Ok(m)
}

/// One frame per row, header `c0,c1,...`. Values use shortest round-trip formatting.
pub fn write_csv<W: Write>(m: &FeatureMatrix, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record((0..m.dims).map(|k| format!("c{k}")))?;
    for row in m.rows() {
        out.write_record(row.iter().map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<FeatureMatrix> {
    let mut rdr = csv::Reader::from_reader(r);
    let dims = rdr.headers()?.len();
    let mut data = Vec::new();
    let mut frames = 0;
    for rec in rdr.records() {
        let rec = rec?;
        for field in rec.iter() {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {frames}: {e}")))?,
            );
        }
        frames += 1;
    }
    Ok(FeatureMatrix {
        frames,
        dims,
        data,
        source_id: String::new(),
        config_hash: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(frames: usize, dims: usize, data: Vec<f64>) -> FeatureMatrix {
        FeatureMatrix {
            frames,
            dims,
            data,
            source_id: String::new(),
            config_hash: 0xdead_beef_0123_4567,
        }
    }

    #[test]
    fn header_layout() {
        let m = matrix(1, 2, vec![1.0, -2.5]);
        let mut buf = Vec::new();
        write_binary(&m, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"TPLF");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[24..32].try_into().unwrap()), 0xdead_beef_0123_4567);
        assert_eq!(f64::from_le_bytes(buf[40..48].try_into().unwrap()), -2.5);
        assert_eq!(buf.len(), 48);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let m = matrix(2, 2, vec![0.0; 4]);
        let mut buf = Vec::new();
        write_binary(&m, &mut buf).unwrap();
        assert!(read_binary(&buf[..buf.len() - 1]).is_err());
        buf[0] = b'X';
        assert!(read_binary(&buf[..]).is_err());
        assert!(read_binary(&b"TPL"[..]).is_err());
    }

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(
            frames in 0usize..6,
            dims in 1usize..6,
            seed in any::<u64>(),
        ) {
            let data: Vec<f64> = (0..frames * dims)
                .map(|i| f64::from_bits(seed.rotate_left(i as u32) >> 2) - 1e10)
                .collect();
            let m = matrix(frames, dims, data);
            let mut buf = Vec::new();
            write_binary(&m, &mut buf).unwrap();
            prop_assert_eq!(&read_binary(&buf[..]).unwrap(), &m);

            let mut text = Vec::new();
            write_csv(&m, &mut text).unwrap();
            let back = read_csv(&text[..]).unwrap();
            prop_assert_eq!(back.frames, frames);
            prop_assert_eq!(&back.data, &m.data);
        }
    }
}
