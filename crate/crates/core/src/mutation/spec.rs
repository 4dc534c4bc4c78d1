use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SHIFT_RANGE: (f32, f32) = (0.05, 0.15);
pub const ROTATION_RANGE: (f32, f32) = (5.0, 25.0);
pub const SCALE_RANGE: (f32, f32) = (0.8, 1.2);
pub const SHEAR_RANGE: (f32, f32) = (15.0, 30.0);
pub const CONTRAST_RANGE: (f32, f32) = (0.5, 1.5);
pub const BRIGHTNESS_RANGE: (f32, f32) = (0.5, 1.5);
pub const BLUR_KERNELS: [usize; 4] = [2, 3, 5, 7];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    Shift,
    Rotation,
    Scale,
    Shear,
    Contrast,
    Brightness,
    Blur,
}

impl MutationKind {
    pub const ALL: [MutationKind; 7] = [
        MutationKind::Shift,
        MutationKind::Rotation,
        MutationKind::Scale,
        MutationKind::Shear,
        MutationKind::Contrast,
        MutationKind::Brightness,
        MutationKind::Blur,
    ];
}

/// A mutation with its parameter. Directional parameters carry their sign:
/// shift offsets are signed fractions of the image width/height, rotation and
/// shear angles are signed degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MutationSpec {
    Shift { dx: f32, dy: f32 },
    Rotation { degrees: f32 },
    Scale { ratio: f32 },
    Shear { degrees: f32 },
    Contrast { gain: f32 },
    Brightness { gain: f32 },
    Blur { kernel: usize },
}

fn check(name: &str, value: f32, (lo, hi): (f32, f32)) -> Result<()> {
    if value.is_finite() && (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidMutation(format!("{name} {value} outside [{lo}, {hi}]")))
    }
}

impl MutationSpec {
    pub fn kind(&self) -> MutationKind {
        match self {
            MutationSpec::Shift { .. } => MutationKind::Shift,
            MutationSpec::Rotation { .. } => MutationKind::Rotation,
            MutationSpec::Scale { .. } => MutationKind::Scale,
            MutationSpec::Shear { .. } => MutationKind::Shear,
            MutationSpec::Contrast { .. } => MutationKind::Contrast,
            MutationSpec::Brightness { .. } => MutationKind::Brightness,
            MutationSpec::Blur { .. } => MutationKind::Blur,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MutationSpec::Shift { dx, dy } => {
                check("shift x", dx.abs(), SHIFT_RANGE)?;
                check("shift y", dy.abs(), SHIFT_RANGE)
            }
            MutationSpec::Rotation { degrees } => check("rotation", degrees.abs(), ROTATION_RANGE),
            MutationSpec::Scale { ratio } => check("scale", ratio, SCALE_RANGE),
            MutationSpec::Shear { degrees } => check("shear", degrees.abs(), SHEAR_RANGE),
            MutationSpec::Contrast { gain } => check("contrast", gain, CONTRAST_RANGE),
            MutationSpec::Brightness { gain } => check("brightness", gain, BRIGHTNESS_RANGE),
            MutationSpec::Blur { kernel } => {
                if BLUR_KERNELS.contains(&kernel) {
                    Ok(())
                } else {
                    Err(Error::InvalidMutation(format!("blur kernel {kernel} not in {BLUR_KERNELS:?}")))
                }
            }
        }
    }
}

fn signed<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f32, f32)) -> f32 {
    let v = rng.gen_range(lo..=hi);
    if rng.gen::<bool>() {
        v
    } else {
        -v
    }
}

/// Gain drawn from its range with the identity value 1.0 excluded.
fn gain<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f32, f32)) -> f32 {
    loop {
        let v = rng.gen_range(lo..=hi);
        if v != 1.0 {
            return v;
        }
    }
}

/// Draws a mutation kind uniformly, then its parameter uniformly over the
/// kind's range, with a uniform sign for directional parameters.
pub fn sample_spec<R: Rng + ?Sized>(rng: &mut R) -> MutationSpec {
    match MutationKind::ALL[rng.gen_range(0..MutationKind::ALL.len())] {
        MutationKind::Shift => MutationSpec::Shift { dx: signed(rng, SHIFT_RANGE), dy: signed(rng, SHIFT_RANGE) },
        MutationKind::Rotation => MutationSpec::Rotation { degrees: signed(rng, ROTATION_RANGE) },
        MutationKind::Scale => MutationSpec::Scale { ratio: gain(rng, SCALE_RANGE) },
        MutationKind::Shear => MutationSpec::Shear { degrees: signed(rng, SHEAR_RANGE) },
        MutationKind::Contrast => MutationSpec::Contrast { gain: gain(rng, CONTRAST_RANGE) },
        MutationKind::Brightness => MutationSpec::Brightness { gain: gain(rng, BRIGHTNESS_RANGE) },
        MutationKind::Blur => MutationSpec::Blur { kernel: BLUR_KERNELS[rng.gen_range(0..BLUR_KERNELS.len())] },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    #[test]
    fn seeded_sequences_repeat() {
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            (0..50).map(|_| sample_spec(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn kind_frequencies_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = BTreeMap::new();
        let n = 10_000;
        for _ in 0..n {
            let spec = sample_spec(&mut rng);
            spec.validate().unwrap();
            *counts.entry(spec.kind()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 7);
        // binomial sd at n=10k, p=1/7 is 0.0035; 0.02 is well beyond 5 sd
        for (kind, c) in counts {
            let f = c as f64 / n as f64;
            assert!((f - 1.0 / 7.0).abs() <= 0.02, "{kind:?}: {f}");
        }
    }

    #[test]
    fn validation_rejects_out_of_range() {
        assert!(MutationSpec::Rotation { degrees: 30.0 }.validate().is_err());
        assert!(MutationSpec::Rotation { degrees: -20.0 }.validate().is_ok());
        assert!(MutationSpec::Shift { dx: 0.1, dy: 0.01 }.validate().is_err());
        assert!(MutationSpec::Blur { kernel: 4 }.validate().is_err());
        assert!(MutationSpec::Brightness { gain: f32::NAN }.validate().is_err());
        assert!(MutationSpec::Scale { ratio: 0.8 }.validate().is_ok());
    }

    #[test]
    fn serde_form() {
        let s = serde_json::to_string(&MutationSpec::Blur { kernel: 3 }).unwrap();
        assert_eq!(s, r#"{"kind":"blur","kernel":3}"#);
        let spec = MutationSpec::Rotation { degrees: -12.345_678 };
        let back: MutationSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(spec, back);
    }
}
