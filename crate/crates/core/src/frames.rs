//! Synthetic photon-counting camera frames and the `SPDCFRM1` stack format.
//!
//! Frames are held sparsely (sorted `(pixel, count)` runs) because
//! photon-counting frames are almost entirely zero; they are densified only
//! when written.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sampling::PairSampler;

pub const MAGIC: &[u8; 8] = b"SPDCFRM1";
pub const HEADER_LEN: u64 = 56;
pub const DEFAULT_PIXEL_PITCH: f64 = 16e-6;
pub const DEFAULT_SENSOR_PIXELS: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGeometry {
    pub width: u32,
    pub height: u32,
    /// Pixel pitch on the sensor (m).
    pub pixel_pitch: f64,
    /// Image size over object size.
    pub magnification: f64,
    /// Optical axis in continuous pixel coordinates (pixel `i` spans `[i, i+1)`).
    pub origin: (f64, f64),
}

impl Default for FrameGeometry {
    fn default() -> Self {
        Self::centred(
            DEFAULT_SENSOR_PIXELS,
            DEFAULT_SENSOR_PIXELS,
            DEFAULT_PIXEL_PITCH,
            1.0,
        )
    }
}

impl FrameGeometry {
    /// Geometry with the optical axis at the sensor centre.
    pub fn centred(width: u32, height: u32, pixel_pitch: f64, magnification: f64) -> Self {
        Self {
            width,
            height,
            pixel_pitch,
            magnification,
            origin: (width as f64 / 2.0, height as f64 / 2.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Geometry("sensor dimensions must be > 0".into()));
        }
        if (self.width as u64) * (self.height as u64) > u32::MAX as u64 {
            return Err(Error::Geometry(
                "sensor has more pixels than fit in u32".into(),
            ));
        }
        if !(self.pixel_pitch > 0.0 && self.pixel_pitch.is_finite()) {
            return Err(Error::Geometry(format!(
                "pixel pitch must be > 0, got {}",
                self.pixel_pitch
            )));
        }
        if !(self.magnification > 0.0 && self.magnification.is_finite()) {
            return Err(Error::Geometry(format!(
                "magnification must be > 0, got {}",
                self.magnification
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Object-plane size of one pixel (m).
    pub fn object_pixel(&self) -> f64 {
        self.pixel_pitch / self.magnification
    }

    /// Row-major pixel index of an object-plane position, if on the sensor.
    pub fn pixel_of(&self, pos: [f64; 2]) -> Option<u32> {
        let col = (self.origin.0 + pos[0] / self.object_pixel()).floor();
        let row = (self.origin.1 + pos[1] / self.object_pixel()).floor();
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            return None;
        }
        Some(row as u32 * self.width + col as u32)
    }

    /// Object-plane x of the centre of column `col`.
    pub fn column_coordinate(&self, col: f64) -> f64 {
        (col + 0.5 - self.origin.0) * self.object_pixel()
    }

    /// Object-plane y of the centre of row `row`.
    pub fn row_coordinate(&self, row: f64) -> f64 {
        (row + 0.5 - self.origin.1) * self.object_pixel()
    }
}

/// One frame: `(pixel index, count)` runs sorted by pixel, counts > 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Frame {
    events: Vec<(u32, u16)>,
}

impl Frame {
    /// Build from a list of detected-photon pixel indices (any order).
    pub fn from_hits(mut hits: Vec<u32>) -> Result<Self> {
        hits.sort_unstable();
        let mut events: Vec<(u32, u16)> = Vec::new();
        for p in hits {
            match events.last_mut() {
                Some((q, c)) if *q == p => {
                    *c = c.checked_add(1).ok_or_else(|| {
                        Error::Generation(format!("pixel {p} exceeds the 16-bit count range"))
                    })?;
                }
                _ => events.push((p, 1)),
            }
        }
        Ok(Self { events })
    }

    fn from_dense(counts: &[u16]) -> Self {
        let events = counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(p, c)| (p as u32, *c))
            .collect();
        Self { events }
    }

    pub fn events(&self) -> &[(u32, u16)] {
        &self.events
    }

    pub fn count(&self, pixel: u32) -> u16 {
        self.events
            .binary_search_by_key(&pixel, |e| e.0)
            .map(|i| self.events[i].1)
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.events.iter().map(|e| e.1 as u64).sum()
    }

    pub fn to_dense(&self, pixels: usize) -> Vec<u16> {
        let mut out = vec![0u16; pixels];
        for &(p, c) in &self.events {
            out[p as usize] = c;
        }
        out
    }
}

/// Generation settings; `None` when the stack was read from disk, which
/// stores only z and the seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationInfo {
    pub pair_rate: f64,
    pub background_rate: f64,
    pub qe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    pub geometry: FrameGeometry,
    pub frames: Vec<Frame>,
    pub z: f64,
    pub seed: u64,
    pub generation: Option<GenerationInfo>,
}

impl FrameStack {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Mean count per frame in each pixel.
    pub fn mean_counts(&self) -> Vec<f64> {
        let mut sum = vec![0u64; self.geometry.pixel_count()];
        for f in &self.frames {
            for &(p, c) in f.events() {
                sum[p as usize] += c as u64;
            }
        }
        let n = self.frames.len() as f64;
        sum.into_iter().map(|s| s as f64 / n).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSettings {
    pub n_frames: usize,
    /// Mean number of pairs per frame.
    pub pair_rate: f64,
    /// Mean background counts per pixel per frame.
    pub background_rate: f64,
    /// Detection probability of each photon.
    pub qe: f64,
    pub seed: u64,
    /// Propagation distance recorded in the stack.
    pub z: f64,
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::Generation(format!("Poisson({mean}): {e}")))?;
    let v: f64 = d.sample(rng);
    Ok(v as u64)
}

/// Simulate `n_frames` frames. Frame `k` uses ChaCha8 substream `k` of
/// `seed`, so the stack does not depend on the number of worker threads.
///
/// Per frame: the pair count is Poisson(pair_rate); each photon of each pair
/// is detected with probability `qe` and dropped if it misses the sensor;
/// background photons total Poisson(background_rate · pixels), placed
/// uniformly, which is the same as independent Poisson counts per pixel.
pub fn generate_frames<S: PairSampler>(
    sampler: &S,
    geometry: FrameGeometry,
    settings: &FrameSettings,
) -> Result<FrameStack> {
    geometry.validate()?;
    if settings.n_frames == 0 {
        return Err(Error::ParameterDomain {
            name: "n_frames",
            reason: "need at least one frame".into(),
        });
    }
    for (name, v) in [
        ("pair_rate", settings.pair_rate),
        ("background_rate", settings.background_rate),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::ParameterDomain {
                name,
                reason: format!("must be finite and >= 0, got {v}"),
            });
        }
    }
    if !(settings.qe > 0.0 && settings.qe <= 1.0) {
        return Err(Error::ParameterDomain {
            name: "qe",
            reason: format!("must lie in (0, 1], got {}", settings.qe),
        });
    }
    let pixels = geometry.pixel_count() as u64;
    let bg_mean = settings.background_rate * pixels as f64;
    let frames = (0..settings.n_frames)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            rng.set_stream(k as u64);
            let n_pairs = poisson(&mut rng, settings.pair_rate)?;
            let mut hits = Vec::new();
            for _ in 0..n_pairs {
                let (s, i) = sampler.sample_pair(&mut rng);
                for pos in [s, i] {
                    if rng.gen::<f64>() < settings.qe {
                        if let Some(p) = geometry.pixel_of(pos) {
                            hits.push(p);
                        }
                    }
                }
            }
            let n_bg = poisson(&mut rng, bg_mean)?;
            hits.extend((0..n_bg).map(|_| rng.gen_range(0..pixels) as u32));
            Frame::from_hits(hits)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameStack {
        geometry,
        frames,
        z: settings.z,
        seed: settings.seed,
        generation: Some(GenerationInfo {
            pair_rate: settings.pair_rate,
            background_rate: settings.background_rate,
            qe: settings.qe,
        }),
    })
}

fn header_bytes(stack: &FrameStack) -> Result<Vec<u8>> {
    let g = &stack.geometry;
    let count = u32::try_from(stack.frames.len()).map_err(|_| Error::Format {
        offset: 16,
        reason: "frame count exceeds u32".into(),
    })?;
    let mut h = Vec::with_capacity(HEADER_LEN as usize);
    h.extend_from_slice(MAGIC);
    h.extend_from_slice(&g.width.to_le_bytes());
    h.extend_from_slice(&g.height.to_le_bytes());
    h.extend_from_slice(&count.to_le_bytes());
    h.extend_from_slice(&0u32.to_le_bytes());
    h.extend_from_slice(&g.pixel_pitch.to_le_bytes());
    h.extend_from_slice(&g.magnification.to_le_bytes());
    h.extend_from_slice(&stack.z.to_le_bytes());
    h.extend_from_slice(&stack.seed.to_le_bytes());
    Ok(h)
}

/// Write `stack` in the `SPDCFRM1` format to any writer.
pub fn write_stack_to<W: Write>(stack: &FrameStack, out: W) -> Result<()> {
    stack.geometry.validate()?;
    let mut out = BufWriter::new(out);
    out.write_all(&header_bytes(stack)?)?;
    let pixels = stack.geometry.pixel_count();
    let mut buf = vec![0u8; pixels * 2];
    for f in &stack.frames {
        buf.fill(0);
        for &(p, c) in f.events() {
            let i = p as usize * 2;
            buf[i..i + 2].copy_from_slice(&c.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_stack(stack: &FrameStack, path: &Path) -> Result<()> {
    write_stack_to(stack, File::create(path)?)
}

fn read_exact_at<R: Read>(input: &mut R, buf: &mut [u8], offset: u64, what: &str) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..])? {
            0 => {
                return Err(Error::Format {
                    offset: offset + filled as u64,
                    reason: format!(
                        "truncated {what}: expected {} bytes, got {filled}",
                        buf.len()
                    ),
                })
            }
            n => filled += n,
        }
    }
    Ok(())
}

/// Read an `SPDCFRM1` stack from any reader. The optical axis is placed at
/// the sensor centre.
pub fn read_stack_from<R: Read>(input: R) -> Result<FrameStack> {
    let mut input = BufReader::new(input);
    let mut h = [0u8; HEADER_LEN as usize];
    read_exact_at(&mut input, &mut h, 0, "header")?;
    if &h[0..8] != MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: "bad magic; expected SPDCFRM1".into(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(h[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(h[o..o + 8].try_into().unwrap());
    let (width, height, count, reserved) = (u32_at(8), u32_at(12), u32_at(16), u32_at(20));
    if reserved != 0 {
        return Err(Error::Format {
            offset: 20,
            reason: format!("reserved field must be 0, got {reserved}"),
        });
    }
    let geometry = FrameGeometry::centred(width, height, f64_at(24), f64_at(32));
    let pixels = (width as u64)
        .checked_mul(height as u64)
        .filter(|p| *p <= u32::MAX as u64);
    let Some(pixels) = pixels.filter(|p| *p > 0) else {
        return Err(Error::Format {
            offset: 8,
            reason: format!("unsupported dimensions {width}x{height}"),
        });
    };
    geometry.validate().map_err(|e| Error::Format {
        offset: 24,
        reason: e.to_string(),
    })?;
    let z = f64_at(40);
    let seed = u64::from_le_bytes(h[48..56].try_into().unwrap());
    let frame_bytes = pixels as usize * 2;
    let mut buf = vec![0u8; frame_bytes];
    let mut counts = vec![0u16; pixels as usize];
    let mut frames = Vec::with_capacity(count as usize);
    for k in 0..count as u64 {
        read_exact_at(
            &mut input,
            &mut buf,
            HEADER_LEN + k * frame_bytes as u64,
            "payload",
        )?;
        for (c, b) in counts.iter_mut().zip(buf.chunks_exact(2)) {
            *c = u16::from_le_bytes([b[0], b[1]]);
        }
        frames.push(Frame::from_dense(&counts));
    }
    let end = HEADER_LEN + count as u64 * frame_bytes as u64;
    if input.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format {
            offset: end,
            reason: "trailing bytes after payload".into(),
        });
    }
    Ok(FrameStack {
        geometry,
        frames,
        z,
        seed,
        generation: None,
    })
}

pub fn read_stack(path: &Path) -> Result<FrameStack> {
    read_stack_from(File::open(path)?)
}
