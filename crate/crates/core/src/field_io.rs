//! Field serialization: CSV (index, coordinates, components) and the ODGF
//! binary dump.
//!
//! ODGF layout, all little-endian:
//!   bytes  0..4   magic "ODGF"
//!   bytes  4..8   version (1)
//!   bytes  8..12  dim
//!   bytes 12..16  components
//!   bytes 16..20  shape[0]
//!   bytes 20..24  shape[1]
//!   bytes 24..32  spacing h (f64)
//! then origin (2 x f64), node-major values (f64 each), and one role byte
//! per node (0 free, 1 fixed). Total length is exact; trailing bytes are a
//! format error.

use crate::grid::{Grid, NodeRole, VectorField};
use crate::report::fmt_f64;
use crate::{Error, Result};

pub const ODGF_MAGIC: [u8; 4] = *b"ODGF";
pub const ODGF_VERSION: u32 = 1;
const MAX_COMPONENTS: u32 = 16;

pub fn field_csv(f: &VectorField) -> String {
    let mut out = String::new();
    out.push_str("index");
    for k in 0..f.grid.dim {
        out.push_str(&format!(",x{k}"));
    }
    for c in 0..f.components {
        out.push_str(&format!(",c{c}"));
    }
    out.push('\n');
    for idx in 0..f.grid.node_count() {
        let x = f.grid.coord(idx);
        out.push_str(&idx.to_string());
        for k in 0..f.grid.dim {
            out.push(',');
            out.push_str(&fmt_f64(x[k]));
        }
        for v in f.node(idx) {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_odgf(f: &VectorField) -> Vec<u8> {
    let n = f.grid.node_count();
    let mut out = Vec::with_capacity(48 + n * f.components * 8 + n);
    out.extend_from_slice(&ODGF_MAGIC);
    out.extend_from_slice(&ODGF_VERSION.to_le_bytes());
    out.extend_from_slice(&(f.grid.dim as u32).to_le_bytes());
    out.extend_from_slice(&(f.components as u32).to_le_bytes());
    out.extend_from_slice(&(f.grid.shape[0] as u32).to_le_bytes());
    out.extend_from_slice(&(f.grid.shape[1] as u32).to_le_bytes());
    out.extend_from_slice(&f.grid.h.to_le_bytes());
    out.extend_from_slice(&f.grid.origin[0].to_le_bytes());
    out.extend_from_slice(&f.grid.origin[1].to_le_bytes());
    for v in &f.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for r in &f.role {
        out.push(match r {
            NodeRole::Free => 0,
            NodeRole::Fixed => 1,
        });
    }
    out
}

fn take_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn take_f64(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

pub fn read_odgf(bytes: &[u8]) -> Result<VectorField> {
    if bytes.len() < 48 {
        return Err(Error::format(format!("ODGF data needs at least 48 bytes, got {}", bytes.len())));
    }
    if bytes[0..4] != ODGF_MAGIC {
        return Err(Error::format("bad magic, expected ODGF"));
    }
    let version = take_u32(bytes, 4);
    if version != ODGF_VERSION {
        return Err(Error::format(format!("unsupported ODGF version {version}")));
    }
    let dim = take_u32(bytes, 8);
    let components = take_u32(bytes, 12);
    let shape0 = take_u32(bytes, 16);
    let shape1 = take_u32(bytes, 20);
    if dim != 1 && dim != 2 {
        return Err(Error::format(format!("dim must be 1 or 2, got {dim}")));
    }
    if components == 0 || components > MAX_COMPONENTS {
        return Err(Error::format(format!("components must be in 1..={MAX_COMPONENTS}, got {components}")));
    }
    if dim == 1 && shape1 != 1 {
        return Err(Error::format(format!("1-d field must have shape[1] = 1, got {shape1}")));
    }

    let h = take_f64(bytes, 24);
    let origin = [take_f64(bytes, 32), take_f64(bytes, 40)];
    let shape = [shape0 as usize, shape1 as usize];
    let grid = Grid::new(dim as usize, &shape[..dim as usize], h, &origin[..dim as usize])
        .map_err(|e| Error::format(format!("bad grid header: {e}")))?;

    let n = grid.node_count() as u64;
    let expected = 48u64
        .checked_add(n.checked_mul(components as u64 * 8 + 1).ok_or_else(|| {
            Error::format("field size overflows")
        })?)
        .ok_or_else(|| Error::format("field size overflows"))?;
    if bytes.len() as u64 != expected {
        return Err(Error::format(format!(
            "expected exactly {expected} bytes for this header, got {}",
            bytes.len()
        )));
    }

    let n = n as usize;
    let comp = components as usize;
    let mut values = Vec::with_capacity(n * comp);
    let mut at = 48;
    for _ in 0..n * comp {
        let v = take_f64(bytes, at);
        if !v.is_finite() {
            return Err(Error::format("field values must be finite"));
        }
        values.push(v);
        at += 8;
    }
    let mut role = Vec::with_capacity(n);
    for _ in 0..n {
        role.push(match bytes[at] {
            0 => NodeRole::Free,
            1 => NodeRole::Fixed,
            other => return Err(Error::format(format!("bad role byte {other}"))),
        });
        at += 1;
    }
    VectorField::new(grid, comp, values, role)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_field() -> VectorField {
        let g = Grid::new(2, &[3, 4], 0.5, &[-1.0, 2.0]).unwrap();
        VectorField::from_fn(g, 2, |x| vec![x[0] + x[1], x[0] * x[1]]).unwrap()
    }

    #[test]
    fn odgf_round_trip() {
        let f = sample_field();
        let bytes = write_odgf(&f);
        assert_eq!(&bytes[0..4], b"ODGF");
        let back = read_odgf(&bytes).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn odgf_rejects_corruption() {
        let f = sample_field();
        let good = write_odgf(&f);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(read_odgf(&bad_magic).is_err());

        let mut bad_version = good.clone();
        bad_version[4] = 99;
        assert!(read_odgf(&bad_version).is_err());

        let mut truncated = good.clone();
        truncated.pop();
        assert!(read_odgf(&truncated).is_err());

        let mut extra = good.clone();
        extra.push(0);
        assert!(read_odgf(&extra).is_err());

        let mut bad_role = good.clone();
        let at = good.len() - 1;
        bad_role[at] = 7;
        assert!(read_odgf(&bad_role).is_err());

        assert!(read_odgf(&[]).is_err());
        assert!(read_odgf(&good[..40]).is_err());
    }

    #[test]
    fn odgf_rejects_nonfinite_values() {
        let mut f = sample_field();
        f.values[0] = f64::NAN;
        assert!(read_odgf(&write_odgf(&f)).is_err());
    }

    #[test]
    fn csv_lists_nodes_in_index_order() {
        let g = Grid::new(1, &[3], 0.5, &[0.0]).unwrap();
        let f = VectorField::from_fn(g, 1, |x| vec![x[0]]).unwrap();
        let csv = field_csv(&f);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "index,x0,c0");
        assert_eq!(lines[1], "0,0,0");
        assert_eq!(lines[2], "1,0.5,0.5");
        assert_eq!(lines[3], "2,1,1");
    }
}
