//! Binary field container and CSV emission.
//!
//! Layout of the `.npde` container, all integers unsigned 32-bit in the
//! declared byte order:
//!
//! ```text
//! magic  5 bytes  "NPDE1"
//! endian 1 byte   0 = little, 1 = big (applies to everything below)
//! kind   1 byte   1 = coefficient fields, 2 = trajectory
//! dim    u32      1 or 2
//! n_half u32
//! count  u32      time levels (coefficients) or snapshots (trajectory)
//! payload f64 ...
//! ```
//!
//! Coefficient payload per level: alpha (d*n), beta (nb*n), gamma (n),
//! delta (n), theta (n). Trajectory payload: `count` timestamps, then
//! `count` snapshots of n values each. Round trips are bit exact.

use anyhow::{bail, Context};
use npde_core::grid::{Dim, Grid};
use npde_core::parabolic::{CoefficientFields, LevelCoefficients, Trajectory};
use npde_core::stencil::CoefficientSlice;
use npde_core::Real;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 5] = b"NPDE1";
const KIND_COEFFS: u8 = 1;
const KIND_TRAJECTORY: u8 = 2;

struct Encoder {
    big: bool,
    buf: Vec<u8>,
}

impl Encoder {
    fn new() -> Self {
        Encoder { big: false, buf: Vec::new() }
    }

    fn u32(&mut self, v: u32) {
        let b = if self.big { v.to_be_bytes() } else { v.to_le_bytes() };
        self.buf.extend_from_slice(&b);
    }

    fn f64(&mut self, v: f64) {
        let b = if self.big { v.to_be_bytes() } else { v.to_le_bytes() };
        self.buf.extend_from_slice(&b);
    }
}

struct Decoder<'a> {
    big: bool,
    rest: &'a [u8],
}

impl<'a> Decoder<'a> {
    fn u32(&mut self) -> anyhow::Result<u32> {
        if self.rest.len() < 4 {
            bail!("truncated container");
        }
        let (head, tail) = self.rest.split_at(4);
        self.rest = tail;
        let arr: [u8; 4] = head.try_into().unwrap();
        Ok(if self.big { u32::from_be_bytes(arr) } else { u32::from_le_bytes(arr) })
    }

    fn f64(&mut self) -> anyhow::Result<f64> {
        if self.rest.len() < 8 {
            bail!("truncated container");
        }
        let (head, tail) = self.rest.split_at(8);
        self.rest = tail;
        let arr: [u8; 8] = head.try_into().unwrap();
        Ok(if self.big { f64::from_be_bytes(arr) } else { f64::from_le_bytes(arr) })
    }

    fn f64_vec(&mut self, n: usize) -> anyhow::Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn save_fields(path: &Path, grid: &Grid<Real>, coeffs: &CoefficientFields<Real>) -> anyhow::Result<()> {
    let mut enc = Encoder::new();
    enc.buf.extend_from_slice(MAGIC);
    enc.buf.push(0); // little-endian
    enc.buf.push(KIND_COEFFS);
    enc.u32(grid.dim().as_usize() as u32);
    enc.u32(grid.n_half() as u32);
    enc.u32(coeffs.levels.len() as u32);
    for level in &coeffs.levels {
        for v in level
            .lin
            .alpha
            .iter()
            .chain(&level.lin.beta)
            .chain(&level.gamma)
            .chain(&level.delta)
            .chain(&level.lin.theta)
        {
            enc.f64(*v);
        }
    }
    std::fs::write(path, &enc.buf).with_context(|| format!("writing {}", path.display()))
}

/// Load coefficient fields; the embedded grid descriptor must match.
pub fn load_fields(path: &Path, grid: &Grid<Real>) -> anyhow::Result<CoefficientFields<Real>> {
    let (dim, n_half, coeffs) = load_fields_any(path)?;
    if dim != grid.dim().as_usize() || n_half != grid.n_half() {
        bail!("container grid ({dim}, {n_half}) does not match the requested grid");
    }
    Ok(coeffs)
}

/// Load coefficient fields together with the embedded grid descriptor.
pub fn load_fields_any(path: &Path) -> anyhow::Result<(usize, usize, CoefficientFields<Real>)> {
    let bytes = read_all(path)?;
    let mut dec = open_container(&bytes, KIND_COEFFS)?;
    let dim = dec.u32()? as usize;
    let n_half = dec.u32()? as usize;
    let grid = Grid::<Real>::new(
        Dim::from_usize(dim).map_err(|e| anyhow::anyhow!(e.to_string()))?,
        1.0,
        n_half,
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let nt = dec.u32()? as usize;
    let n = grid.n_total();
    let d = dim;
    let nb = CoefficientSlice::<Real>::beta_components(grid.dim());
    let mut levels = Vec::with_capacity(nt);
    for _ in 0..nt {
        let alpha = dec.f64_vec(d * n)?;
        let beta = dec.f64_vec(nb * n)?;
        let gamma = dec.f64_vec(n)?;
        let delta = dec.f64_vec(n)?;
        let theta = dec.f64_vec(n)?;
        levels.push(LevelCoefficients {
            lin: CoefficientSlice { alpha, beta, theta },
            gamma,
            delta,
        });
    }
    Ok((dim, n_half, CoefficientFields { levels }))
}

pub fn save_trajectory(path: &Path, grid: &Grid<Real>, traj: &Trajectory<Real>) -> anyhow::Result<()> {
    let mut enc = Encoder::new();
    enc.buf.extend_from_slice(MAGIC);
    enc.buf.push(0);
    enc.buf.push(KIND_TRAJECTORY);
    enc.u32(grid.dim().as_usize() as u32);
    enc.u32(grid.n_half() as u32);
    enc.u32(traj.snapshots.len() as u32);
    for t in &traj.times {
        enc.f64(*t);
    }
    for snap in &traj.snapshots {
        for v in snap {
            enc.f64(*v);
        }
    }
    std::fs::write(path, &enc.buf).with_context(|| format!("writing {}", path.display()))
}

/// Load a trajectory; the embedded grid descriptor must match.
pub fn load_trajectory(path: &Path, grid: &Grid<Real>) -> anyhow::Result<Trajectory<Real>> {
    let (dim, n_half, traj) = load_trajectory_any(path)?;
    if dim != grid.dim().as_usize() || n_half != grid.n_half() {
        bail!("container grid ({dim}, {n_half}) does not match the requested grid");
    }
    Ok(traj)
}

/// Load a trajectory together with the embedded grid descriptor.
pub fn load_trajectory_any(path: &Path) -> anyhow::Result<(usize, usize, Trajectory<Real>)> {
    let bytes = read_all(path)?;
    let mut dec = open_container(&bytes, KIND_TRAJECTORY)?;
    let dim = dec.u32()? as usize;
    let n_half = dec.u32()? as usize;
    let n = match dim {
        1 => 2 * n_half + 1,
        2 => (2 * n_half + 1) * (2 * n_half + 1),
        other => bail!("format error: dimension {other}"),
    };
    let count = dec.u32()? as usize;
    let times = dec.f64_vec(count)?;
    let mut snapshots = Vec::with_capacity(count);
    for _ in 0..count {
        snapshots.push(dec.f64_vec(n)?);
    }
    Ok((dim, n_half, Trajectory { times, snapshots }))
}

fn read_all(path: &Path) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_end(&mut buf)?;
    Ok(buf)
}

fn open_container(bytes: &[u8], expected_kind: u8) -> anyhow::Result<Decoder<'_>> {
    if bytes.len() < 7 || &bytes[0..5] != MAGIC {
        bail!("format error: bad magic");
    }
    let big = match bytes[5] {
        0 => false,
        1 => true,
        other => bail!("format error: unknown endianness flag {other}"),
    };
    let kind = bytes[6];
    if kind != expected_kind {
        bail!(
            "format error: container holds kind {kind}, expected {expected_kind} \
             (1 = coefficient fields, 2 = trajectory)"
        );
    }
    Ok(Decoder { big, rest: &bytes[7..] })
}

/// Human-readable container summary for `npde inspect`; fully decodes the
/// payload so truncated files are reported.
pub fn describe(path: &Path) -> anyhow::Result<String> {
    let bytes = read_all(path)?;
    if bytes.len() < 7 || &bytes[0..5] != MAGIC {
        bail!("format error: bad magic");
    }
    let endian = match bytes[5] {
        0 => "little",
        1 => "big",
        other => bail!("format error: unknown endianness flag {other}"),
    };
    match bytes[6] {
        KIND_COEFFS => {
            let (dim, n_half, coeffs) = load_fields_any(path)?;
            Ok(format!(
                "kind=coefficient-fields endian={endian} dim={dim} n_half={n_half} levels={} bytes={}",
                coeffs.levels.len(),
                bytes.len()
            ))
        }
        KIND_TRAJECTORY => {
            let (dim, n_half, traj) = load_trajectory_any(path)?;
            Ok(format!(
                "kind=trajectory endian={endian} dim={dim} n_half={n_half} snapshots={} bytes={}",
                traj.snapshots.len(),
                bytes.len()
            ))
        }
        other => bail!("format error: unknown kind {other}"),
    }
}

/// Columnar CSV export of a trajectory: `t,x[,y],m`.
pub fn trajectory_csv(grid: &Grid<Real>, traj: &Trajectory<Real>) -> String {
    let mut out = String::new();
    let two_d = grid.dim() == Dim::Two;
    out.push_str(if two_d { "t,x,y,m\n" } else { "t,x,m\n" });
    for (t, snap) in traj.times.iter().zip(&traj.snapshots) {
        for (i, v) in snap.iter().enumerate() {
            let c = grid.coords(i);
            if two_d {
                out.push_str(&format!("{t},{},{},{v}\n", c[0], c[1]));
            } else {
                out.push_str(&format!("{t},{},{v}\n", c[0]));
            }
        }
    }
    out
}

/// Spectral state export: one row per retained mode, `index[,index2],a,bdot`.
pub fn state_csv(
    basis: &npde_core::hermite::HermiteBasis<Real>,
    state: &npde_core::hermite::HermiteState<Real>,
) -> String {
    let two_d = basis.dim() == Dim::Two;
    let mut out = String::new();
    out.push_str(if two_d { "index1,index2,a,bdot\n" } else { "index,a,bdot\n" });
    for (k, idx) in basis.indices().iter().enumerate() {
        if two_d {
            out.push_str(&format!("{},{},{},{}\n", idx[0], idx[1], state.a[k], state.bdot[k]));
        } else {
            out.push_str(&format!("{},{},{}\n", idx[0], state.a[k], state.bdot[k]));
        }
    }
    out
}

/// Simple writer collecting rows for `result.csv`.
pub struct CsvTable {
    header: String,
    rows: Vec<String>,
}

impl CsvTable {
    pub fn new(header: &str) -> Self {
        CsvTable { header: header.to_string(), rows: Vec::new() }
    }

    pub fn row(&mut self, row: String) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(&self.header);
        out.push('\n');
        for r in &self.rows {
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut f = std::fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        f.write_all(self.render().as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use npde_core::grid::Dim;

    #[test]
    fn coefficient_roundtrip_bit_exact() {
        let dir = std::env::temp_dir().join("npde_io_test_coeffs");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f.npde");
        let grid = Grid::<Real>::new(Dim::One, 1.5, 6).unwrap();
        let mut coeffs = CoefficientFields::constant(&grid, 3, &[0.25], &[0.75], 0.5, -0.1);
        coeffs.levels[1].lin.alpha[4] = 0.123456789123456789;
        coeffs.levels[2].delta[0] = -3.25e-17;
        save_fields(&path, &grid, &coeffs).unwrap();
        let back = load_fields(&path, &grid).unwrap();
        assert_eq!(coeffs, back);
    }

    #[test]
    fn trajectory_roundtrip_and_kind_check() {
        let dir = std::env::temp_dir().join("npde_io_test_traj");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.npde");
        let grid = Grid::<Real>::new(Dim::One, 1.0, 4).unwrap();
        let traj = Trajectory {
            times: vec![0.0, 0.5],
            snapshots: vec![vec![1.0; 9], vec![0.5; 9]],
        };
        save_trajectory(&path, &grid, &traj).unwrap();
        let back = load_trajectory(&path, &grid).unwrap();
        assert_eq!(traj.times, back.times);
        assert_eq!(traj.snapshots, back.snapshots);
        // loading with the wrong kind is a format error
        let err = load_fields(&path, &grid).unwrap_err();
        assert!(err.to_string().contains("format error"), "{err}");
    }

    #[test]
    fn big_endian_containers_are_honored() {
        // hand-build a big-endian trajectory container
        let grid = Grid::<Real>::new(Dim::One, 1.0, 1).unwrap();
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.push(1); // big endian
        bytes.push(KIND_TRAJECTORY);
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.extend_from_slice(&0.5f64.to_be_bytes());
        for v in [1.0f64, 2.0, 3.0] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let dir = std::env::temp_dir().join("npde_io_test_be");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("be.npde");
        std::fs::write(&path, &bytes).unwrap();
        let traj = load_trajectory(&path, &grid).unwrap();
        assert_eq!(traj.times, vec![0.5]);
        assert_eq!(traj.snapshots, vec![vec![1.0, 2.0, 3.0]]);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let grid = Grid::<Real>::new(Dim::One, 1.0, 1).unwrap();
        let dir = std::env::temp_dir().join("npde_io_test_magic");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.npde");
        std::fs::write(&path, b"NOPE!xxxxxxxx").unwrap();
        assert!(load_fields(&path, &grid).is_err());
    }
}
