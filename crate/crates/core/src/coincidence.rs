//! Coincidence estimation from frame stacks.
//!
//! For two detection regions with counts `n_p^k`, `n_q^k` in frame `k`:
//!
//! ```text
//! C_pq = (1/M) Σ_k n_p^k n_q^k − (1/M) Σ_k n_p^k n_q^{k+1},   k = 1..N−1, M = N−1
//! ```
//!
//! The first term holds true and accidental coincidences, the second only
//! accidental ones (photons from adjacent frames are uncorrelated). Both
//! sums run over the same `N−1` frames so that there is no wrap-around.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frames::{Frame, FrameStack};
use crate::stats::wrap_angle;

pub const DEFAULT_STRIP_HEIGHT: u32 = 4;
pub const DEFAULT_SECTORS: usize = 36;
pub const MIN_SECTORS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoincidence {
    pub true_term: f64,
    pub accidental: f64,
    pub net: f64,
    /// Standard error of `net` from the spread of the per-frame terms.
    pub standard_error: f64,
    pub frame_pairs: usize,
}

/// Net coincidence between two count series (one entry per frame).
pub fn coincidence_from_series(np: &[u64], nq: &[u64]) -> Result<PixelCoincidence> {
    if np.len() != nq.len() {
        return Err(Error::InsufficientData(format!(
            "series lengths differ: {} vs {}",
            np.len(),
            nq.len()
        )));
    }
    if np.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 frames, got {}",
            np.len()
        )));
    }
    let m = np.len() - 1;
    let (mut t, mut a) = (0u64, 0u64);
    let (mut s1, mut s2) = (0f64, 0f64);
    for k in 0..m {
        let tk = np[k] * nq[k];
        let ak = np[k] * nq[k + 1];
        t += tk;
        a += ak;
        let x = tk as f64 - ak as f64;
        s1 += x;
        s2 += x * x;
    }
    let mf = m as f64;
    let true_term = t as f64 / mf;
    let accidental = a as f64 / mf;
    let mean = s1 / mf;
    let var = if m > 1 {
        (s2 / mf - mean * mean).max(0.0) * mf / (mf - 1.0)
    } else {
        0.0
    };
    Ok(PixelCoincidence {
        true_term,
        accidental,
        net: true_term - accidental,
        standard_error: (var / mf).sqrt(),
        frame_pairs: m,
    })
}

/// Net coincidence between pixels `p` and `q` (row-major indices).
pub fn coincidence_pixels(stack: &FrameStack, p: u32, q: u32) -> Result<PixelCoincidence> {
    let pixels = stack.geometry.pixel_count() as u32;
    if p >= pixels || q >= pixels {
        return Err(Error::Binning(format!(
            "pixel index out of range (sensor has {pixels})"
        )));
    }
    let np: Vec<u64> = stack.frames.iter().map(|f| f.count(p) as u64).collect();
    let nq: Vec<u64> = stack.frames.iter().map(|f| f.count(q) as u64).collect();
    coincidence_from_series(&np, &nq)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapKind {
    /// Horizontal strips of `height` pixel rows; coordinates are object-plane
    /// y of the strip centres (m).
    Strips { height: u32 },
    /// Angular sectors about `center` (continuous pixel coordinates), the
    /// first starting at `start` (rad); coordinates are sector-centre angles.
    Sectors {
        count: usize,
        center: (f64, f64),
        start: f64,
    },
    /// Map built directly from values.
    Synthetic,
}

/// Square map of coincidences between bins `i` (signal) and `j` (idler),
/// stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceMap {
    pub kind: MapKind,
    pub coords: Vec<f64>,
    pub true_term: Vec<f64>,
    pub accidental: Vec<f64>,
    pub net: Vec<f64>,
    pub excluded: Vec<bool>,
    /// Number of adjacent-frame pairs `M = N − 1`.
    pub frame_pairs: usize,
}

impl CoincidenceMap {
    /// Map with the given net values, no accidental term and the diagonal
    /// excluded.
    pub fn from_net(kind: MapKind, coords: Vec<f64>, net: Vec<f64>) -> Result<Self> {
        let n = coords.len();
        if net.len() != n * n {
            return Err(Error::Binning(format!(
                "expected {} values, got {}",
                n * n,
                net.len()
            )));
        }
        Ok(Self {
            kind,
            true_term: net.clone(),
            accidental: vec![0.0; n * n],
            excluded: (0..n * n).map(|k| k / n == k % n).collect(),
            net,
            coords,
            frame_pairs: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn net(&self, i: usize, j: usize) -> f64 {
        self.net[i * self.len() + j]
    }

    pub fn is_excluded(&self, i: usize, j: usize) -> bool {
        self.excluded[i * self.len() + j]
    }

    /// Non-excluded entries as `(coord_i, coord_j, net)`.
    pub fn included(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let n = self.len();
        (0..n * n)
            .filter(|k| !self.excluded[*k])
            .map(move |k| (self.coords[k / n], self.coords[k % n], self.net[k]))
    }

    /// CSV with columns `i,j,coord_i,coord_j,true,accidental,net,excluded`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "i",
            "j",
            "coord_i",
            "coord_j",
            "true",
            "accidental",
            "net",
            "excluded",
        ])?;
        let n = self.len();
        for k in 0..n * n {
            let (i, j) = (k / n, k % n);
            w.write_record(&[
                i.to_string(),
                j.to_string(),
                self.coords[i].to_string(),
                self.coords[j].to_string(),
                self.true_term[k].to_string(),
                self.accidental[k].to_string(),
                self.net[k].to_string(),
                self.excluded[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-frame bin counts as sorted `(bin, count)` runs.
fn binned_frame(frame: &Frame, bin_of: &[Option<u32>]) -> Vec<(u32, u64)> {
    let mut out: Vec<(u32, u64)> = frame
        .events()
        .iter()
        .filter_map(|&(p, c)| bin_of[p as usize].map(|b| (b, c as u64)))
        .collect();
    out.sort_unstable_by_key(|e| e.0);
    out.dedup_by(|later, earlier| {
        if later.0 == earlier.0 {
            earlier.1 += later.1;
            true
        } else {
            false
        }
    });
    out
}

/// Binned coincidence accumulation with integer sums, reduced in a fixed
/// way so the result is independent of the thread count.
fn binned_map(
    stack: &FrameStack,
    bin_of: &[Option<u32>],
    n: usize,
    kind: MapKind,
    coords: Vec<f64>,
) -> Result<CoincidenceMap> {
    let frames = stack.frame_count();
    if frames < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 frames, got {frames}"
        )));
    }
    let binned: Vec<Vec<(u32, u64)>> = stack
        .frames
        .par_iter()
        .map(|f| binned_frame(f, bin_of))
        .collect();
    let zero = || (vec![0u64; n * n], vec![0u64; n * n]);
    let (t, a) = (0..frames - 1)
        .into_par_iter()
        .fold(zero, |(mut t, mut a), k| {
            let cur = &binned[k];
            for &(bi, ci) in cur {
                let row = bi as usize * n;
                for &(bj, cj) in cur {
                    t[row + bj as usize] += ci * cj;
                }
                for &(bj, cj) in &binned[k + 1] {
                    a[row + bj as usize] += ci * cj;
                }
            }
            (t, a)
        })
        .reduce(zero, |(mut t1, mut a1), (t2, a2)| {
            t1.iter_mut().zip(t2).for_each(|(x, y)| *x += y);
            a1.iter_mut().zip(a2).for_each(|(x, y)| *x += y);
            (t1, a1)
        });
    let m = (frames - 1) as f64;
    let true_term: Vec<f64> = t.iter().map(|&v| v as f64 / m).collect();
    let accidental: Vec<f64> = a.iter().map(|&v| v as f64 / m).collect();
    let net = true_term
        .iter()
        .zip(&accidental)
        .map(|(x, y)| x - y)
        .collect();
    Ok(CoincidenceMap {
        kind,
        coords,
        true_term,
        accidental,
        net,
        excluded: (0..n * n).map(|k| k / n == k % n).collect(),
        frame_pairs: frames - 1,
    })
}

/// Coincidences between horizontal strips of `strip_height` rows. Entries
/// with y_s = y_i are excluded.
pub fn coincidence_strips(stack: &FrameStack, strip_height: u32) -> Result<CoincidenceMap> {
    let g = stack.geometry;
    if strip_height == 0 || g.height % strip_height != 0 {
        return Err(Error::Binning(format!(
            "strip height {strip_height} does not divide sensor height {}",
            g.height
        )));
    }
    let n = (g.height / strip_height) as usize;
    let bin_of: Vec<Option<u32>> = (0..g.pixel_count() as u32)
        .map(|p| Some(p / g.width / strip_height))
        .collect();
    let coords = (0..n)
        .map(|s| {
            g.row_coordinate(s as f64 * strip_height as f64 + (strip_height as f64 - 1.0) / 2.0)
        })
        .collect();
    binned_map(
        stack,
        &bin_of,
        n,
        MapKind::Strips {
            height: strip_height,
        },
        coords,
    )
}

/// Coincidences between `n_sectors` angular sectors about `center`
/// (continuous pixel coordinates), the first sector starting at `start`.
/// Entries with θ_s = θ_i are excluded. A pixel whose centre coincides with
/// `center` belongs to no sector.
pub fn coincidence_sectors(
    stack: &FrameStack,
    n_sectors: usize,
    center: (f64, f64),
    start: f64,
) -> Result<CoincidenceMap> {
    let g = stack.geometry;
    if n_sectors < MIN_SECTORS {
        return Err(Error::Binning(format!(
            "need >= {MIN_SECTORS} sectors, got {n_sectors}"
        )));
    }
    if !(center.0 > 0.0
        && center.0 < g.width as f64
        && center.1 > 0.0
        && center.1 < g.height as f64)
    {
        return Err(Error::Geometry(format!(
            "sector centre {center:?} is not strictly inside the {}x{} sensor",
            g.width, g.height
        )));
    }
    let width = 2.0 * PI / n_sectors as f64;
    let bin_of: Vec<Option<u32>> = (0..g.pixel_count() as u32)
        .map(|p| {
            let x = (p % g.width) as f64 + 0.5 - center.0;
            let y = (p / g.width) as f64 + 0.5 - center.1;
            if x.hypot(y) < 1e-9 {
                return None;
            }
            let rel = (y.atan2(x) - start).rem_euclid(2.0 * PI);
            Some(((rel / width) as usize).min(n_sectors - 1) as u32)
        })
        .collect();
    let coords = (0..n_sectors)
        .map(|s| wrap_angle(start + (s as f64 + 0.5) * width))
        .collect();
    binned_map(
        stack,
        &bin_of,
        n_sectors,
        MapKind::Sectors {
            count: n_sectors,
            center,
            start,
        },
        coords,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{generate_frames, FrameGeometry, FrameSettings};
    use crate::sampling::GaussianPairSampler;
    use proptest::prelude::*;

    fn stack_from(frames: Vec<Vec<u32>>, w: u32, h: u32) -> FrameStack {
        FrameStack {
            geometry: FrameGeometry::centred(w, h, 16e-6, 1.0),
            frames: frames
                .into_iter()
                .map(|f| Frame::from_hits(f).unwrap())
                .collect(),
            z: 0.0,
            seed: 0,
            generation: None,
        }
    }

    #[test]
    fn hand_evaluated_series() {
        let c = coincidence_from_series(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!(c.true_term, 0.5);
        assert_eq!(c.accidental, 0.0);
        assert_eq!(c.net, 0.5);
        let c = coincidence_from_series(&[3; 10], &[3; 10]).unwrap();
        assert_eq!(c.net, 0.0);
        assert!(coincidence_from_series(&[1], &[1]).is_err());
    }

    #[test]
    fn pixels_on_a_stack() {
        let s = stack_from(vec![vec![0, 1], vec![], vec![0, 1, 1]], 2, 2);
        let c = coincidence_pixels(&s, 0, 1).unwrap();
        // k = 1, 2: true (1·1 + 0·0)/2, accidental (1·0 + 0·2)/2
        assert_eq!(c.true_term, 0.5);
        assert_eq!(c.accidental, 0.0);
        assert!(coincidence_pixels(&s, 0, 9).is_err());
    }

    fn random_stack(seed: u64, frames: usize, bg: f64) -> FrameStack {
        let g = GaussianPairSampler {
            sum_sigma: 200e-6,
            diff_sigma: 20e-6,
        };
        let settings = FrameSettings {
            n_frames: frames,
            pair_rate: 3.0,
            background_rate: bg,
            qe: 0.7,
            seed,
            z: 0.0,
        };
        generate_frames(&g, FrameGeometry::centred(32, 32, 16e-6, 1.0), &settings).unwrap()
    }

    #[test]
    fn strips_equal_pixel_estimator_on_strip_sums() {
        let s = random_stack(5, 300, 0.01);
        let map = coincidence_strips(&s, 4).unwrap();
        let n = map.len();
        let series: Vec<Vec<u64>> = (0..n)
            .map(|b| {
                s.frames
                    .iter()
                    .map(|f| {
                        f.events()
                            .iter()
                            .filter(|(p, _)| (p / 32 / 4) as usize == b)
                            .map(|(_, c)| *c as u64)
                            .sum()
                    })
                    .collect()
            })
            .collect();
        for i in 0..n {
            for j in 0..n {
                let c = coincidence_from_series(&series[i], &series[j]).unwrap();
                assert_eq!(map.net(i, j), c.net);
                assert_eq!(map.true_term[i * n + j], c.true_term);
            }
        }
        assert!(map.is_excluded(3, 3) && !map.is_excluded(3, 4));
    }

    #[test]
    fn strip_height_must_divide() {
        let s = random_stack(1, 3, 0.0);
        assert!(matches!(coincidence_strips(&s, 5), Err(Error::Binning(_))));
        assert!(coincidence_strips(&s, 0).is_err());
    }

    #[test]
    fn sector_preconditions() {
        let s = random_stack(1, 3, 0.0);
        assert!(matches!(
            coincidence_sectors(&s, 36, (0.0, 16.0), 0.0),
            Err(Error::Geometry(_))
        ));
        assert!(matches!(
            coincidence_sectors(&s, 36, (16.0, 32.0), 0.0),
            Err(Error::Geometry(_))
        ));
        assert!(coincidence_sectors(&s, 4, (16.0, 16.0), 0.0).is_err());
    }

    #[test]
    fn rotating_sector_labels_translates_map() {
        let s = random_stack(9, 200, 0.02);
        let n = 12;
        let offset = 0.1234;
        let a = coincidence_sectors(&s, n, (16.0, 16.0), offset).unwrap();
        let b = coincidence_sectors(&s, n, (16.0, 16.0), offset + 2.0 * PI / n as f64).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(b.net(i, j), a.net((i + 1) % n, (j + 1) % n));
            }
        }
    }

    #[test]
    fn deterministic_across_threads() {
        let s = random_stack(2, 500, 0.01);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| coincidence_strips(&s, 2).unwrap());
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| coincidence_strips(&s, 2).unwrap());
        assert_eq!(one, four);
    }

    #[test]
    fn csv_header() {
        let map =
            CoincidenceMap::from_net(MapKind::Synthetic, vec![0.0, 1.0], vec![1.0, 2.0, 3.0, 4.0])
                .unwrap();
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "i,j,coord_i,coord_j,true,accidental,net,excluded"
        );
        assert_eq!(lines.next().unwrap(), "0,0,0,0,1,0,1,true");
        assert_eq!(lines.next().unwrap(), "0,1,0,1,2,0,2,false");
    }

    proptest! {
        #[test]
        fn constant_series_has_zero_net(c in 0u64..50, n in 2usize..40) {
            let s = vec![c; n];
            prop_assert_eq!(coincidence_from_series(&s, &s).unwrap().net, 0.0);
        }

        #[test]
        fn net_is_true_minus_accidental(a in proptest::collection::vec(0u64..20, 2..50)) {
            let b: Vec<u64> = a.iter().rev().cloned().collect();
            let c = coincidence_from_series(&a, &b).unwrap();
            prop_assert_eq!(c.net, c.true_term - c.accidental);
        }
    }
}
