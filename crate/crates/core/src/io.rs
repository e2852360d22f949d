//! The `SCIC` cube container and atomic file output.
//!
//! Layout, little-endian: `SCIC`, u32 version (1), u32 n1, u32 n2, u32 B,
//! u8 dtype (0 = f32 samples, 1 = u8 mask bits), then the frame-major
//! payload. Measurements are `B = 1` f32 cubes with an f32 `sigma` between
//! header and payload. Samples are stored as f32, so a cube survives a round
//! trip bit-exactly only if its values are f32-representable.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::cube::{Measurement, VideoCube};
use crate::error::{Error, Result};
use crate::measurement::MaskCube;
use crate::nn::{DvpModel, Real};

pub const MAGIC: [u8; 4] = *b"SCIC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    F32 = 0,
    MaskBits = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub n1: usize,
    pub n2: usize,
    pub frames: usize,
    pub dtype: Dtype,
}

impl Header {
    fn len(&self) -> usize {
        self.n1 * self.n2 * self.frames
    }
}

fn dim_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} does not fit in u32")))
}

pub fn write_header(w: &mut impl Write, h: &Header) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for d in [h.n1, h.n2, h.frames] {
        w.write_all(&dim_u32(d)?.to_le_bytes())?;
    }
    w.write_all(&[h.dtype as u8])?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

/// Reads a header; `Ok(None)` on a clean end of stream.
fn try_read_header(r: &mut impl Read) -> Result<Option<Header>> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut magic[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(Error::Format("truncated header".into())),
            n => got += n,
        }
    }
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n1 = read_u32(r)? as usize;
    let n2 = read_u32(r)? as usize;
    let frames = read_u32(r)? as usize;
    let mut dt = [0u8; 1];
    r.read_exact(&mut dt)?;
    let dtype = match dt[0] {
        0 => Dtype::F32,
        1 => Dtype::MaskBits,
        other => return Err(Error::Format(format!("unknown dtype {other}"))),
    };
    if n1 == 0 || n2 == 0 || frames == 0 {
        return Err(Error::Format(format!("empty cube {n1}×{n2}×{frames}")));
    }
    Ok(Some(Header { n1, n2, frames, dtype }))
}

pub fn read_header(r: &mut impl Read) -> Result<Header> {
    try_read_header(r)?.ok_or_else(|| Error::Format("empty file".into()))
}

fn expect_dtype(h: &Header, dtype: Dtype) -> Result<()> {
    if h.dtype != dtype {
        return Err(Error::Format(format!("expected {dtype:?} payload, found {:?}", h.dtype)));
    }
    Ok(())
}

fn write_f32s(w: &mut impl Write, data: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in data {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_f32s(r: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; len * 4];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

pub fn write_cube(w: &mut impl Write, cube: &VideoCube) -> Result<()> {
    let (n1, n2, frames) = cube.dims();
    write_header(w, &Header { n1, n2, frames, dtype: Dtype::F32 })?;
    write_f32s(w, cube.data().iter().copied())
}

pub fn read_cube(r: &mut impl Read) -> Result<VideoCube> {
    let h = read_header(r)?;
    read_cube_body(r, &h)
}

fn read_cube_body(r: &mut impl Read, h: &Header) -> Result<VideoCube> {
    expect_dtype(h, Dtype::F32)?;
    let data = read_f32s(r, h.len())?;
    VideoCube::new(h.n1, h.n2, h.frames, data)
}

pub fn write_mask(w: &mut impl Write, mask: &MaskCube) -> Result<()> {
    let (n1, n2, frames) = mask.dims();
    write_header(w, &Header { n1, n2, frames, dtype: Dtype::MaskBits })?;
    w.write_all(mask.bits())?;
    Ok(())
}

/// The container does not record `p` or the seed; the loaded mask carries
/// its empirical density and seed 0.
pub fn read_mask(r: &mut impl Read) -> Result<MaskCube> {
    let h = read_header(r)?;
    expect_dtype(&h, Dtype::MaskBits)?;
    let mut bits = vec![0u8; h.len()];
    r.read_exact(&mut bits).map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    let density = bits.iter().map(|&b| b as usize).sum::<usize>() as f64 / bits.len() as f64;
    MaskCube::from_bits(h.n1, h.n2, h.frames, bits, density, 0).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_measurement(w: &mut impl Write, y: &Measurement) -> Result<()> {
    write_header(w, &Header { n1: y.n1(), n2: y.n2(), frames: 1, dtype: Dtype::F32 })?;
    w.write_all(&(y.sigma as f32).to_le_bytes())?;
    write_f32s(w, y.data().iter().copied())
}

pub fn read_measurement(r: &mut impl Read) -> Result<Measurement> {
    let h = read_header(r)?;
    expect_dtype(&h, Dtype::F32)?;
    if h.frames != 1 {
        return Err(Error::Format(format!("a measurement has one frame, found {}", h.frames)));
    }
    let sigma = read_f32(r)? as f64;
    let data = read_f32s(r, h.len())?;
    Measurement::new(h.n1, h.n2, data, sigma)
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never observe a partial file.
pub fn atomic_write(path: &Path, body: impl FnOnce(&mut BufWriter<&mut File>) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn save_cube(path: &Path, cube: &VideoCube) -> Result<()> {
    atomic_write(path, |w| write_cube(w, cube))
}

pub fn load_cube(path: &Path) -> Result<VideoCube> {
    read_cube(&mut open(path)?)
}

pub fn save_mask(path: &Path, mask: &MaskCube) -> Result<()> {
    atomic_write(path, |w| write_mask(w, mask))
}

pub fn load_mask(path: &Path) -> Result<MaskCube> {
    read_mask(&mut open(path)?)
}

pub fn save_measurement(path: &Path, y: &Measurement) -> Result<()> {
    atomic_write(path, |w| write_measurement(w, y))
}

pub fn load_measurement(path: &Path) -> Result<Measurement> {
    read_measurement(&mut open(path)?)
}

/// Debug dump of a decoder: per layer a weight section (`c_out × 9·c_in`)
/// and a bias section (`c_out × 1`), then the latent (`channels × h·w`).
pub fn save_checkpoint<T: Real>(path: &Path, model: &DvpModel<T>) -> Result<()> {
    let arch = model.arch();
    let theta = model.theta();
    atomic_write(path, |w| {
        let mut section = |n1: usize, n2: usize, data: &[T]| -> Result<()> {
            write_header(w, &Header { n1, n2, frames: 1, dtype: Dtype::F32 })?;
            write_f32s(w, data.iter().map(|v| v.f64()))
        };
        for l in arch.layers() {
            section(l.c_out, 9 * l.c_in, &theta[l.weight..l.bias])?;
            section(l.c_out, 1, &theta[l.bias..l.bias + l.c_out])?;
        }
        section(arch.channels, arch.latent_h() * arch.latent_w(), model.latent())
    })
}

/// Reads every f32 section of a multi-section file.
pub fn load_sections(path: &Path) -> Result<Vec<VideoCube>> {
    let mut r = open(path)?;
    let mut out = Vec::new();
    while let Some(h) = try_read_header(&mut r)? {
        out.push(read_cube_body(&mut r, &h)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> VideoCube {
        VideoCube::from_fn(3, 5, 2, |r, c, i| (r * 10 + c + 100 * i) as f64 / 256.0)
    }

    #[test]
    fn header_bytes() {
        let mut buf = Vec::new();
        write_cube(&mut buf, &cube()).unwrap();
        assert_eq!(&buf[..4], b"SCIC");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &3u32.to_le_bytes());
        assert_eq!(&buf[12..16], &5u32.to_le_bytes());
        assert_eq!(&buf[16..20], &2u32.to_le_bytes());
        assert_eq!(buf[20], 0);
        assert_eq!(buf.len(), 21 + 4 * 30);
        // frame-major: second sample is (r=0, c=1, frame 0)
        assert_eq!(f32::from_le_bytes(buf[25..29].try_into().unwrap()), 1.0 / 256.0);
    }

    #[test]
    fn cube_round_trip() {
        let mut buf = Vec::new();
        write_cube(&mut buf, &cube()).unwrap();
        assert_eq!(read_cube(&mut buf.as_slice()).unwrap(), cube());
    }

    #[test]
    fn bad_magic_and_version() {
        let mut buf = Vec::new();
        write_cube(&mut buf, &cube()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_cube(&mut bad.as_slice()), Err(Error::Format(_))));
        let mut v2 = buf.clone();
        v2[4] = 2;
        assert!(matches!(read_cube(&mut v2.as_slice()), Err(Error::UnsupportedVersion(2))));
        assert!(matches!(read_cube(&mut &buf[..30]), Err(Error::Format(_))));
    }

    #[test]
    fn mask_and_measurement_round_trip() {
        let mask = MaskCube::from_bits(2, 2, 2, vec![1, 0, 0, 1, 1, 1, 0, 0], 0.5, 7).unwrap();
        let mut buf = Vec::new();
        write_mask(&mut buf, &mask).unwrap();
        let back = read_mask(&mut buf.as_slice()).unwrap();
        assert_eq!(back.bits(), mask.bits());
        assert_eq!(back.p(), 0.5);
        assert!(matches!(read_cube(&mut buf.as_slice()), Err(Error::Format(_))));

        let y = Measurement::new(2, 3, vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0], 25.0).unwrap();
        let mut buf = Vec::new();
        write_measurement(&mut buf, &y).unwrap();
        assert_eq!(read_measurement(&mut buf.as_slice()).unwrap(), y);
    }
}
