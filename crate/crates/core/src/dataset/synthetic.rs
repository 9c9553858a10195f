//! Synthetic two-class, multi-domain ocular imagery.
//!
//! Bonafide samples are band-limited radial iris textures inside a pupil/iris/
//! sclera template. Attacks overlay either a periodic lattice on the iris
//! (lens-like) or a halftone dot screen over the whole frame (print-like).
//! Each domain applies its own photometric and blur shift.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{save_png, DatasetManifest, Label, ManifestEntry, Split};
use crate::error::{config, Result};
use crate::pixels::Image;
use crate::seed;

/// Photometric and sensor differences between capture domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainShift {
    pub gain: f64,
    pub offset: f64,
    /// Contrast factor about mid-grey.
    pub contrast: f64,
    /// Gaussian blur standard deviation in pixels.
    pub blur_sigma: f64,
    /// Multiplier on the attack-pattern period.
    pub pattern_period: f64,
    /// Multiplier on the attack-pattern amplitude.
    pub pattern_amplitude: f64,
    /// Extra brightness offset applied to attack captures only.
    pub attack_offset: f64,
}

impl Default for DomainShift {
    fn default() -> Self {
        Self {
            gain: 1.0,
            offset: 0.0,
            contrast: 1.0,
            blur_sigma: 0.0,
            pattern_period: 1.0,
            pattern_amplitude: 1.0,
            attack_offset: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn test_only() -> Self {
        Self { train: 0.0, val: 0.0, test: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDomain {
    pub name: String,
    pub bonafide: usize,
    pub attack: usize,
    pub splits: SplitFractions,
    #[serde(default)]
    pub shift: DomainShift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub image_size: usize,
    pub noise_sigma: f64,
    pub domains: Vec<SyntheticDomain>,
}

impl Default for SyntheticConfig {
    /// Desk-scale: one training domain and one shifted test-only domain.
    fn default() -> Self {
        Self {
            image_size: 32,
            noise_sigma: 0.02,
            domains: vec![
                SyntheticDomain {
                    name: "A".into(),
                    bonafide: 360,
                    attack: 360,
                    splits: SplitFractions { train: 0.7, val: 0.1, test: 0.2 },
                    shift: DomainShift { attack_offset: 0.06, ..DomainShift::default() },
                },
                SyntheticDomain {
                    name: "B".into(),
                    bonafide: 150,
                    attack: 150,
                    splits: SplitFractions::test_only(),
                    shift: DomainShift {
                        gain: 1.0,
                        offset: 0.0,
                        contrast: 0.85,
                        blur_sigma: 0.6,
                        pattern_period: 1.2,
                        pattern_amplitude: 0.5,
                        attack_offset: 0.0,
                    },
                },
            ],
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(config("synthetic image_size must be at least 8"));
        }
        if self.domains.is_empty() {
            return Err(config("synthetic config has no domains"));
        }
        for d in &self.domains {
            if d.bonafide == 0 || d.attack == 0 {
                return Err(config(format!("domain {} needs non-zero bonafide and attack counts", d.name)));
            }
            let s = &d.splits;
            if [s.train, s.val, s.test].iter().any(|f| *f < 0.0) || ((s.train + s.val + s.test) - 1.0).abs() > 1e-9 {
                return Err(config(format!("domain {} split fractions must be non-negative and sum to 1", d.name)));
            }
        }
        Ok(())
    }
}

/// Writes the image set under `out_dir` plus `out_dir/manifest.csv`.
pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for (di, domain) in cfg.domains.iter().enumerate() {
        fs::create_dir_all(out_dir.join(&domain.name))?;
        for label in Label::BOTH {
            let count = match label {
                Label::Bonafide => domain.bonafide,
                Label::Attack => domain.attack,
            };
            let mut order: Vec<usize> = (0..count).collect();
            order.shuffle(&mut seed::rng(seed, &[di as u64, label as u64, seed::tag("split")]));
            let n_train = (count as f64 * domain.splits.train).round() as usize;
            let n_val = ((count as f64 * domain.splits.val).round() as usize).min(count - n_train.min(count));
            let mut split_of = vec![Split::Test; count];
            for (rank, &i) in order.iter().enumerate() {
                split_of[i] = if rank < n_train {
                    Split::Train
                } else if rank < n_train + n_val {
                    Split::Val
                } else {
                    Split::Test
                };
            }
            for (i, split) in split_of.into_iter().enumerate() {
                jobs.push((di, label, i, split));
            }
        }
    }
    let entries: Vec<ManifestEntry> = jobs
        .par_iter()
        .map(|&(di, label, i, split)| {
            let domain = &cfg.domains[di];
            let mut rng = seed::rng(seed, &[di as u64, label as u64, i as u64]);
            let img = render(label, cfg.image_size, cfg.noise_sigma, &domain.shift, &mut rng);
            let rel = format!("{}/{}_{:05}.png", domain.name, label.name(), i);
            save_png(&img, &out_dir.join(&rel))?;
            Ok(ManifestEntry { path: rel, label, split, domain: domain.name.clone() })
        })
        .collect::<Result<_>>()?;
    let manifest = DatasetManifest::new(out_dir, entries)?;
    manifest.write(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

fn smoothstep(edge: f64, width: f64, x: f64) -> f64 {
    let t = ((x - edge) / width + 0.5).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Renders one `[0,1]` image.
pub(crate) fn render<R: Rng>(label: Label, size: usize, noise: f64, shift: &DomainShift, rng: &mut R) -> Image {
    let s = size as f64;
    let cx = s / 2.0 + rng.gen_range(-0.04..0.04) * s;
    let cy = s / 2.0 + rng.gen_range(-0.04..0.04) * s;
    let r_pupil = s * rng.gen_range(0.12..0.16);
    let r_iris = s * rng.gen_range(0.36..0.44);
    let iris_base = rng.gen_range(0.36..0.48);
    let sclera = rng.gen_range(0.58..0.7);
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.gen_range(3..12) as f64,
                rng.gen_range(0.5..2.5),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.025..0.05),
            )
        })
        .collect();
    let edge = (s / 64.0).max(0.75);

    let lens = rng.gen_bool(0.5);
    let period = shift.pattern_period
        * if lens { s / 4.0 } else { s / 5.0 }
        * rng.gen_range(0.9..1.1);
    let angle: f64 = rng.gen_range(0.0..PI / 2.0);
    let (sa, ca) = angle.sin_cos();
    let (px, py) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
    let amp = shift.pattern_amplitude * if lens { 0.3 } else { 0.5 };

    let mut img = Image::zeros((1, size, size));
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let r = (fx * fx + fy * fy).sqrt();
            let theta = fy.atan2(fx);
            let rho = ((r - r_pupil) / (r_iris - r_pupil)).clamp(0.0, 1.0);
            let texture: f64 = waves
                .iter()
                .map(|&(k, fr, ph, a)| a * (k * theta + 2.0 * PI * fr * rho + ph).cos())
                .sum();
            let iris = iris_base + 0.08 * (1.0 - rho) + texture;
            let bg = sclera + 0.03 * (2.0 * PI * (fx + fy) / s).sin();
            let in_iris = smoothstep(r_pupil, edge, r) * (1.0 - smoothstep(r_iris, edge, r));
            let outside = smoothstep(r_iris, edge, r);
            let mut v = 0.08 * (1.0 - smoothstep(r_pupil, edge, r)) + iris * in_iris + bg * outside;
            if label == Label::Attack {
                let u = ca * fx + sa * fy;
                let w = -sa * fx + ca * fy;
                let lattice = (2.0 * PI * u / period + px).cos() * (2.0 * PI * w / period + py).cos();
                if lens {
                    v += amp * lattice * in_iris;
                } else {
                    v *= 1.0 - amp * 0.5 * (1.0 + lattice);
                }
                v += shift.attack_offset;
            }
            img[[0, y, x]] = v as f32;
        }
    }
    if shift.blur_sigma > 0.0 {
        img = gaussian_blur(&img, shift.blur_sigma);
    }
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite sigma");
    img.mapv_inplace(|v| {
        let v = ((v as f64 - 0.5) * shift.contrast + 0.5) * shift.gain + shift.offset;
        let n = if noise > 0.0 { normal.sample(rng) } else { 0.0 };
        (v + n).clamp(0.0, 1.0) as f32
    });
    img
}

fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let (c, h, w) = img.dim();
    let pass = |src: &Image, horizontal: bool| {
        Image::from_shape_fn((c, h, w), |(ci, y, x)| {
            let mut acc = 0.0f64;
            for (k, wt) in kernel.iter().enumerate() {
                let o = k as i64 - radius;
                let (yy, xx) = if horizontal {
                    (y as i64, (x as i64 + o).clamp(0, w as i64 - 1))
                } else {
                    ((y as i64 + o).clamp(0, h as i64 - 1), x as i64)
                };
                acc += wt * src[[ci, yy as usize, xx as usize]] as f64;
            }
            (acc / norm) as f32
        })
    };
    pass(&pass(img, true), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(count: usize) -> SyntheticConfig {
        let mut cfg = SyntheticConfig::default();
        cfg.image_size = 16;
        for d in &mut cfg.domains {
            d.bonafide = count;
            d.attack = count;
        }
        cfg
    }

    #[test]
    fn counts_match_config() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_synthetic(&small(100), 1, dir.path()).unwrap();
        assert_eq!(m.entries.len(), 400);
        assert_eq!(m.bonafide_count(), 200);
        assert_eq!(m.attack_count(), 200);
        let pngs = walk_pngs(dir.path());
        assert_eq!(pngs.len(), 400);
        assert_eq!(m.select(Split::Train, Some("B")).len(), 0);
        assert_eq!(m.select(Split::Train, Some("A")).len(), 140);
    }

    fn walk_pngs(root: &Path) -> Vec<std::path::PathBuf> {
        let mut out = Vec::new();
        for d in fs::read_dir(root).unwrap() {
            let p = d.unwrap().path();
            if p.is_dir() {
                out.extend(walk_pngs(&p));
            } else if p.extension().is_some_and(|e| e == "png") {
                out.push(p);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn generation_is_byte_identical_for_a_seed() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_synthetic(&small(5), 9, a.path()).unwrap();
        generate_synthetic(&small(5), 9, b.path()).unwrap();
        let (pa, pb) = (walk_pngs(a.path()), walk_pngs(b.path()));
        assert_eq!(pa.len(), pb.len());
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
        assert_eq!(
            fs::read(a.path().join("manifest.csv")).unwrap(),
            fs::read(b.path().join("manifest.csv")).unwrap()
        );
    }

    #[test]
    fn zero_counts_are_rejected() {
        let mut cfg = small(3);
        cfg.domains[0].attack = 0;
        assert!(matches!(generate_synthetic(&cfg, 0, Path::new("/nonexistent")), Err(crate::Error::Config(_))));
    }

    #[test]
    fn rendered_pixels_are_in_unit_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for label in Label::BOTH {
            let img = render(label, 32, 0.02, &DomainShift::default(), &mut rng);
            assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
