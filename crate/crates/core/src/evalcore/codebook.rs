use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// The discrete phase set `{2 pi i / 2^b : i = 0 .. 2^b - 1}` of a `b`-bit
/// phase shifter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCodebook {
    bits: u32,
}

impl PhaseCodebook {
    pub fn new(bits: u32) -> Self {
        assert!((1..=16).contains(&bits), "phase resolution must be 1..=16 bits");
        Self { bits }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        1usize << self.bits
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        TAU / self.len() as f64
    }

    pub fn phase(&self, index: usize) -> f64 {
        self.step() * (index % self.len()) as f64
    }

    pub fn phases(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.phase(i)).collect()
    }

    /// Index of the nearest codebook phase. The wrap at `2 pi` maps back to
    /// index 0; exact ties go to the smaller phase.
    pub fn quantize_index(&self, phi: f64) -> usize {
        let reduced = phi.rem_euclid(TAU);
        let x = reduced / self.step();
        // ceil(x - 1/2) rounds half down.
        let idx = (x - 0.5).ceil() as usize;
        idx % self.len()
    }

    /// Nearest codebook phase in radians.
    pub fn quantize(&self, phi: f64) -> f64 {
        self.phase(self.quantize_index(phi))
    }

    /// True if `phi` lies on the codebook grid within `tol` (mod `2 pi`).
    pub fn contains(&self, phi: f64, tol: f64) -> bool {
        let q = self.quantize(phi);
        angular_distance(q, phi) <= tol
    }

    /// `modulus * exp(j * phase(index))`.
    pub fn element(&self, index: usize, modulus: f64) -> Complex64 {
        Complex64::from_polar(modulus, self.phase(index))
    }
}

/// Free function form of [`PhaseCodebook::quantize`].
pub fn quantize_phase(phi: f64, codebook: &PhaseCodebook) -> f64 {
    codebook.quantize(phi)
}

/// Distance between two angles on the circle, in `[0, pi]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn phases_are_uniform_grid() {
        for b in 1..=5 {
            let cb = PhaseCodebook::new(b);
            let p = cb.phases();
            assert_eq!(p.len(), 1 << b);
            assert_eq!(p[0], 0.0);
            for w in p.windows(2) {
                assert!((w[1] - w[0] - cb.step()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn quantize_examples() {
        let cb = PhaseCodebook::new(2);
        assert_eq!(cb.quantize(0.8 * PI), PI);
        assert_eq!(cb.quantize(1.99 * PI - 1e-9), 0.0);
        assert_eq!(cb.quantize(2.0 * PI), 0.0);
        assert_eq!(cb.quantize(PI / 4.0), 0.0);
        assert_eq!(cb.quantize(-0.1), 0.0);
        assert_eq!(cb.quantize(-PI / 2.0), 1.5 * PI);
        assert_eq!(cb.quantize(3.0 * PI / 4.0), PI / 2.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn output_is_member_within_half_step(bits in 1u32..8, phi in -50.0f64..50.0) {
                let cb = PhaseCodebook::new(bits);
                let q = cb.quantize(phi);
                prop_assert!(cb.phases().contains(&q));
                prop_assert!(angular_distance(q, phi) <= PI / cb.len() as f64 + 1e-12);
            }

            #[test]
            fn quantize_is_nearest(bits in 1u32..6, phi in 0.0f64..TAU) {
                let cb = PhaseCodebook::new(bits);
                let q = cb.quantize(phi);
                let best = cb.phases().into_iter().map(|p| angular_distance(p, phi)).fold(f64::INFINITY, f64::min);
                prop_assert!((angular_distance(q, phi) - best).abs() < 1e-12);
            }
        }
    }
}
