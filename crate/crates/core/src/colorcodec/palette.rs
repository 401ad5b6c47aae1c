use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CodecError, Result};

pub const DEFAULT_MIN_SEPARATION: f64 = 32.0;
pub const MAX_CATEGORIES: usize = 512;
pub const PALETTE_FORMAT_VERSION: u32 = 1;

/// Lattice spacing of the candidate colors; 255 = 51 · 5 so both cube
/// corners are on the lattice.
const LATTICE_STEP: usize = 5;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
#[repr(transparent)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const BLACK: Rgb = Rgb([0, 0, 0]);
    pub const WHITE: Rgb = Rgb([255, 255, 255]);

    /// Squared Euclidean distance, exact.
    pub fn dist2(self, other: Rgb) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(&a, &b)| {
                let d = a as i32 - b as i32;
                (d * d) as u32
            })
            .sum()
    }
}

impl fmt::Debug for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{:02x}{:02x}{:02x}", self.0[0], self.0[1], self.0[2])
    }
}

/// Category index -> color lookup table with reserved void and edge colors.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct Palette {
    version: u32,
    num_categories: usize,
    min_separation: f64,
    void_color: Rgb,
    edge_color: Rgb,
    colors: Vec<Rgb>,
}

/// True when the squared integer distance `d2` reaches `sep`.
pub(crate) fn separated(d2: u32, sep: f64) -> bool {
    d2 as f64 >= sep * sep
}

/// Greedy farthest-point palette over the RGB lattice.
///
/// Void (black) and edge (white) are placed first; each category then takes
/// the lattice color farthest from everything chosen so far, first in
/// traversal order on ties.
pub fn build_palette(num_categories: usize, min_separation: f64) -> Result<Palette> {
    if !(1..=MAX_CATEGORIES).contains(&num_categories) {
        return Err(CodecError::InvalidArgument(format!(
            "num_categories must be in 1..={MAX_CATEGORIES}, got {num_categories}"
        )));
    }
    if !(min_separation.is_finite() && min_separation > 0.0) {
        return Err(CodecError::InvalidArgument(format!("min_separation must be > 0, got {min_separation}")));
    }
    let capacity = |placed| CodecError::Capacity { requested: num_categories, placed, min_separation };
    if !separated(Rgb::BLACK.dist2(Rgb::WHITE), min_separation) {
        return Err(capacity(0));
    }

    let levels: Vec<u8> = (0..=255).step_by(LATTICE_STEP).map(|v| v as u8).collect();
    let mut lattice = Vec::with_capacity(levels.len().pow(3));
    for &r in &levels {
        for &g in &levels {
            for &b in &levels {
                lattice.push(Rgb([r, g, b]));
            }
        }
    }
    let mut nearest: Vec<u32> =
        lattice.iter().map(|c| c.dist2(Rgb::BLACK).min(c.dist2(Rgb::WHITE))).collect();

    let mut colors = Vec::with_capacity(num_categories);
    while colors.len() < num_categories {
        let (best, &best_d2) = nearest
            .iter()
            .enumerate()
            .rev()
            .max_by_key(|(_, d)| **d)
            .expect("lattice is non-empty");
        if !separated(best_d2, min_separation) {
            return Err(capacity(colors.len()));
        }
        let chosen = lattice[best];
        for (d, c) in nearest.iter_mut().zip(&lattice) {
            *d = (*d).min(c.dist2(chosen));
        }
        colors.push(chosen);
    }

    Ok(Palette {
        version: PALETTE_FORMAT_VERSION,
        num_categories,
        min_separation,
        void_color: Rgb::BLACK,
        edge_color: Rgb::WHITE,
        colors,
    })
}

impl Palette {
    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn min_separation(&self) -> f64 {
        self.min_separation
    }

    pub fn void_color(&self) -> Rgb {
        self.void_color
    }

    pub fn edge_color(&self) -> Rgb {
        self.edge_color
    }

    pub fn colors(&self) -> &[Rgb] {
        &self.colors
    }

    pub fn color(&self, category: u16) -> Option<Rgb> {
        self.colors.get(category as usize).copied()
    }

    /// Largest per-channel integer offset `r` such that any perturbation with
    /// every channel in `[-r, r]` stays strictly inside half the separation.
    pub fn max_channel_noise(&self) -> u8 {
        let half = self.min_separation / 2.0;
        (0u8..=255).take_while(|&r| 3.0 * (r as f64).powi(2) < half * half).last().unwrap_or(0)
    }

    /// Checks every palette invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CodecError::InvalidPalette(m));
        if self.version != PALETTE_FORMAT_VERSION {
            return bad(format!("unsupported palette version {}", self.version));
        }
        if !(1..=MAX_CATEGORIES).contains(&self.num_categories) {
            return bad(format!("num_categories {} out of range", self.num_categories));
        }
        if self.colors.len() != self.num_categories {
            return bad(format!("{} colors for {} categories", self.colors.len(), self.num_categories));
        }
        if !(self.min_separation.is_finite() && self.min_separation > 0.0) {
            return bad(format!("min_separation {} must be positive", self.min_separation));
        }
        let mut all: Vec<(String, Rgb)> =
            self.colors.iter().enumerate().map(|(i, &c)| (format!("category {i}"), c)).collect();
        all.push(("void".into(), self.void_color));
        all.push(("edge".into(), self.edge_color));
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                let d2 = all[i].1.dist2(all[j].1);
                if !separated(d2, self.min_separation) {
                    return bad(format!(
                        "{} and {} are {:.2} apart, below {}",
                        all[i].0,
                        all[j].0,
                        (d2 as f64).sqrt(),
                        self.min_separation
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("palette serializes");
        s.push('\n');
        s
    }

    /// Parses and validates a palette document.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let p: Palette =
            serde_json::from_slice(bytes).map_err(|e| CodecError::InvalidPalette(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_palette() {
        let p = build_palette(1, 32.0).unwrap();
        assert_eq!(p.colors().len(), 1);
        let c = p.colors()[0];
        assert!(c.dist2(Rgb::BLACK) as f64 >= 32.0 * 32.0);
        assert!(c.dist2(Rgb::WHITE) as f64 >= 32.0 * 32.0);
        p.validate().unwrap();
    }

    #[test]
    fn deterministic() {
        let a = build_palette(150, 32.0).unwrap();
        let b = build_palette(150, 32.0).unwrap();
        assert_eq!(a.to_json().as_bytes(), b.to_json().as_bytes());
    }

    #[test]
    fn max_categories() {
        build_palette(MAX_CATEGORIES, 24.0).unwrap().validate().unwrap();
        // Greedy placement runs out of room before 512 at the default spacing.
        assert!(matches!(
            build_palette(MAX_CATEGORIES, DEFAULT_MIN_SEPARATION),
            Err(CodecError::Capacity { placed, .. }) if placed >= 400
        ));
    }

    #[test]
    fn capacity_error() {
        assert!(matches!(build_palette(150, 200.0), Err(CodecError::Capacity { requested: 150, .. })));
        assert!(matches!(build_palette(1, 500.0), Err(CodecError::Capacity { placed: 0, .. })));
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(build_palette(0, 32.0), Err(CodecError::InvalidArgument(_))));
        assert!(matches!(build_palette(513, 32.0), Err(CodecError::InvalidArgument(_))));
        assert!(matches!(build_palette(3, 0.0), Err(CodecError::InvalidArgument(_))));
        assert!(matches!(build_palette(3, f64::NAN), Err(CodecError::InvalidArgument(_))));
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let p = build_palette(20, 32.0).unwrap();
        assert_eq!(Palette::from_json(p.to_json().as_bytes()).unwrap(), p);

        let mut v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        v["colors"][1] = v["colors"][0].clone();
        assert!(matches!(
            Palette::from_json(v.to_string().as_bytes()),
            Err(CodecError::InvalidPalette(_))
        ));
    }

    #[test]
    fn channel_noise_bound() {
        let p = build_palette(3, 32.0).unwrap();
        assert_eq!(p.max_channel_noise(), 9);
    }
}
