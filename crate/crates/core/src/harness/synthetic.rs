//! Synthetic classification set where only a square region carries the label.
//!
//! The background is i.i.d. uniform noise. The region is a mosaic of small
//! tiles, each showing a striped pattern whose colour and stripe orientation
//! identify a class. By default every tile shows the label's pattern. With a
//! smaller `share` the remaining tiles are dealt evenly over the other
//! classes, so the label is always the plurality over the whole region but
//! often not over a part of it.

use crate::error::{Error, Result};
use crate::gradcore::Rng;
use crate::image::{Image, Mask};

/// Region colours, cycled by class index.
pub const PALETTE: [[f64; 3]; 4] = [
    [0.95, 0.15, 0.10],
    [0.10, 0.90, 0.20],
    [0.15, 0.25, 0.95],
    [0.95, 0.90, 0.10],
];

/// Stripe half-period in pixels.
pub const STRIPE_WIDTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassSignature {
    pub colour: [f64; 3],
    pub orientation: Orientation,
}

/// Class `c` gets colour `c mod 4` and horizontal stripes when `c` is even.
pub fn signature(class: usize) -> ClassSignature {
    ClassSignature {
        colour: PALETTE[class % PALETTE.len()],
        orientation: if class % 2 == 0 {
            Orientation::Horizontal
        } else {
            Orientation::Vertical
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    /// Side of the square informative region, placed uniformly at random.
    pub region: usize,
    /// Background channels are uniform on `[noise_low, noise_high]`.
    pub noise_low: f64,
    pub noise_high: f64,
    /// Amplitude of the uniform jitter added inside the region.
    pub region_jitter: f64,
    /// Side of the square tiles the region is divided into.
    pub tile: usize,
    /// Fraction of tiles showing the label's signature, rounded to a count.
    pub share: f64,
    pub train: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            height: 32,
            width: 32,
            classes: 4,
            region: 16,
            noise_low: 0.0,
            noise_high: 1.0,
            region_jitter: 0.05,
            tile: 4,
            share: 1.0,
            train: 1200,
            test: 400,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.region == 0 || self.region > self.height || self.region > self.width {
            return Err(Error::Config(format!(
                "region {} does not fit a {}x{} image",
                self.region, self.height, self.width
            )));
        }
        if self.classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_low)
            || !(0.0..=1.0).contains(&self.noise_high)
            || self.noise_low > self.noise_high
        {
            return Err(Error::Config("noise range must lie inside [0, 1]".into()));
        }
        if self.tile == 0 || self.region % self.tile != 0 {
            return Err(Error::Config(format!(
                "tile {} does not divide region {}",
                self.tile, self.region
            )));
        }
        if !(0.0..=1.0).contains(&self.share) {
            return Err(Error::Config(format!(
                "share {} must lie in [0, 1]",
                self.share
            )));
        }
        let (own, rest) = self.tile_counts();
        if own <= rest.div_ceil(self.classes - 1) {
            return Err(Error::Config(format!(
                "{own} label tiles do not outnumber every other class among {} tiles",
                own + rest
            )));
        }
        if !(0.0..=0.5).contains(&self.region_jitter) {
            return Err(Error::Config("region jitter must lie in [0, 0.5]".into()));
        }
        Ok(())
    }
}

impl SyntheticSpec {
    /// Label tiles and other tiles per region.
    pub fn tile_counts(&self) -> (usize, usize) {
        let per_side = self.region / self.tile.max(1);
        let total = per_side * per_side;
        let own = ((self.share * total as f64).round() as usize).min(total);
        (own, total - own)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub label: usize,
    pub mask: Mask,
    /// Top-left corner of the region.
    pub origin: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let split = |tag: u64, n: usize| {
        (0..n)
            .map(|i| gen_sample(spec, &mut Rng::derive(spec.seed, &[tag, i as u64])))
            .collect::<Vec<_>>()
    };
    Ok(Dataset {
        train: split(0, spec.train),
        test: split(1, spec.test),
    })
}

fn gen_sample(spec: &SyntheticSpec, rng: &mut Rng) -> Sample {
    let label = rng.below(spec.classes);
    let oy = rng.below(spec.height - spec.region + 1);
    let ox = rng.below(spec.width - spec.region + 1);
    let per_side = spec.region / spec.tile;
    let (own, rest) = spec.tile_counts();
    // the other classes take turns from a random starting point
    let start = rng.below(spec.classes - 1);
    let mut tiles: Vec<ClassSignature> = (0..own)
        .map(|_| label)
        .chain((0..rest).map(|i| (label + 1 + (start + i) % (spec.classes - 1)) % spec.classes))
        .map(signature)
        .collect();
    rng.shuffle(&mut tiles);
    let mut image = Image::zeros(spec.height, spec.width, 3);
    let mut mask = Mask::empty(spec.height, spec.width);
    let span = spec.noise_high - spec.noise_low;
    for y in 0..spec.height {
        for x in 0..spec.width {
            let inside = y >= oy && y < oy + spec.region && x >= ox && x < ox + spec.region;
            if inside {
                mask.data[y * spec.width + x] = true;
                let (ry, rx) = (y - oy, x - ox);
                let sig = tiles[(ry / spec.tile) * per_side + rx / spec.tile];
                let phase = match sig.orientation {
                    Orientation::Horizontal => ry,
                    Orientation::Vertical => rx,
                };
                let bright = (phase / STRIPE_WIDTH) % 2 == 0;
                let level = if bright { 1.0 } else { 0.35 };
                for c in 0..3 {
                    let jitter = spec.region_jitter * (2.0 * rng.uniform() - 1.0);
                    image.set(y, x, c, (sig.colour[c] * level + jitter).clamp(0.0, 1.0));
                }
            } else {
                for c in 0..3 {
                    image.set(y, x, c, spec.noise_low + span * rng.uniform());
                }
            }
        }
    }
    Sample {
        image,
        label,
        mask,
        origin: (oy, ox),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            train: 40,
            test: 10,
            seed,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(
            gen_synthetic(&small(3)).unwrap(),
            gen_synthetic(&small(3)).unwrap()
        );
        assert_ne!(
            gen_synthetic(&small(3)).unwrap(),
            gen_synthetic(&small(4)).unwrap()
        );
    }

    #[test]
    fn mask_area_is_region_area() {
        let d = gen_synthetic(&small(5)).unwrap();
        for s in d.train.iter().chain(&d.test) {
            assert_eq!(s.mask.area(), 16 * 16);
            let (oy, ox) = s.origin;
            assert!(s.mask.data[oy * 32 + ox]);
            assert!(s.image.data.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn oversized_region_rejected() {
        let spec = SyntheticSpec {
            region: 33,
            ..SyntheticSpec::default()
        };
        assert!(matches!(gen_synthetic(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn share_must_leave_the_label_ahead() {
        let spec = SyntheticSpec {
            share: 0.25,
            ..SyntheticSpec::default()
        };
        // 4 label tiles against 12 dealt over 3 classes
        assert_eq!(spec.tile_counts(), (4, 12));
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        let spec = SyntheticSpec {
            share: 0.3125,
            ..spec
        };
        assert_eq!(spec.tile_counts(), (5, 11));
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn every_class_appears() {
        let d = gen_synthetic(&small(6)).unwrap();
        for c in 0..4 {
            assert!(d.train.iter().any(|s| s.label == c));
        }
    }
}
