//! Field files: a magic line, one line of JSON header, then the node values
//! as little-endian `f64` in row-major order (`j` outer, `i` inner),
//! followed by one byte per node when a validity mask is present.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Domain, Grid2D, Point, ScalarField};
use crate::error::{Error, Result};

pub const MAGIC: &str = "OBSTACLE-LAB-FIELD";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub version: u32,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: Point,
    pub domain: Domain,
    pub encoding: String,
    pub has_mask: bool,
}

pub fn write_field(w: &mut impl Write, f: &ScalarField) -> Result<()> {
    let g = f.grid();
    let header = FieldHeader {
        version: FORMAT_VERSION,
        nx: g.nx(),
        ny: g.ny(),
        h: g.h(),
        origin: g.origin(),
        domain: g.domain(),
        encoding: "f64le".into(),
        has_mask: f.mask().is_some(),
    };
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    let mut buf = Vec::with_capacity(8 * f.values().len());
    for v in f.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    if let Some(mask) = f.mask() {
        let bytes: Vec<u8> = mask.iter().map(|&b| b as u8).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_field(r: impl Read) -> Result<ScalarField> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(Error::Format("not a field file (bad magic line)".into()));
    }
    line.clear();
    r.read_line(&mut line)?;
    let header: FieldHeader = serde_json::from_str(line.trim_end())?;
    if header.version != FORMAT_VERSION || header.encoding != "f64le" {
        return Err(Error::Format(format!(
            "unsupported field format version {} / encoding {}",
            header.version, header.encoding
        )));
    }
    let mut grid = Grid2D::new(header.nx, header.ny, header.h, header.origin)?;
    if let Domain::Disk { center, radius } = header.domain {
        grid = grid.with_disk(center, radius)?;
    }
    let n = grid.len();
    let mut bytes = vec![0u8; 8 * n];
    r.read_exact(&mut bytes).map_err(|e| Error::Format(format!("truncated value block: {e}")))?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut field = ScalarField::from_values(grid, values)?;
    if header.has_mask {
        let mut m = vec![0u8; n];
        r.read_exact(&mut m).map_err(|e| Error::Format(format!("truncated mask block: {e}")))?;
        field = field.with_mask(m.into_iter().map(|b| b != 0).collect())?;
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after field data", rest.len())));
    }
    Ok(field)
}

pub fn save(path: impl AsRef<Path>, f: &ScalarField) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_field(&mut w, f)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ScalarField> {
    read_field(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::hessian;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = Grid2D::new(7, 5, 0.1 / 3.0, Point::new(-0.123456789, 1.0 / 7.0))
            .unwrap()
            .with_disk(Point::new(0.01, 0.2), 0.09)
            .unwrap();
        let f = ScalarField::from_fn(g, |p| (p.x * 17.0).sin() / 3.0 + p.y.exp()).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let back = read_field(&buf[..]).unwrap();
        assert_eq!(back.grid(), f.grid());
        let bits = |s: &ScalarField| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&f));

        let masked = hessian(&f).unwrap().f12;
        let mut buf = Vec::new();
        write_field(&mut buf, &masked).unwrap();
        let back = read_field(&buf[..]).unwrap();
        assert_eq!(back.mask(), masked.mask());
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_field(&b"hello\n{}\n"[..]), Err(Error::Format(_))));
        let g = Grid2D::centered(0.5, 1).unwrap();
        let f = ScalarField::constant(g, 1.0).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_field(&buf[..]), Err(Error::Format(_))));
    }
}
