use crate::error::{Error, Result};
use crate::mutation::spec::MutationSpec;
use crate::tensor::Tensor;

/// Affine map from output pixel coordinates to source coordinates, as
/// `[a, b, c, d, e, f]` with `sx = a*x + b*y + c`, `sy = d*x + e*y + f`.
type Inverse = [f32; 6];

fn inverse_map(spec: &MutationSpec, h: usize, w: usize) -> Option<Inverse> {
    let cx = (w as f32 - 1.0) / 2.0;
    let cy = (h as f32 - 1.0) / 2.0;
    match *spec {
        MutationSpec::Shift { dx, dy } => Some([1.0, 0.0, -dx * w as f32, 0.0, 1.0, -dy * h as f32]),
        MutationSpec::Rotation { degrees } => {
            // destination = R(theta) (source - c) + c, so source = R(-theta) (dest - c) + c
            let (sin, cos) = degrees.to_radians().sin_cos();
            Some([cos, sin, cx - cos * cx - sin * cy, -sin, cos, cy + sin * cx - cos * cy])
        }
        MutationSpec::Scale { ratio } => {
            let inv = 1.0 / ratio;
            Some([inv, 0.0, cx - inv * cx, 0.0, inv, cy - inv * cy])
        }
        MutationSpec::Shear { degrees } => {
            // horizontal shear about the centre row
            let t = degrees.to_radians().tan();
            Some([1.0, -t, t * cy, 0.0, 1.0, 0.0])
        }
        _ => None,
    }
}

/// Bilinear sample with zero outside the plane.
fn bilinear(plane: &[f32], h: usize, w: usize, sx: f32, sy: f32) -> f32 {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let px = |x: f32, y: f32| -> f32 {
        if x < 0.0 || y < 0.0 || x >= w as f32 || y >= h as f32 {
            0.0
        } else {
            plane[y as usize * w + x as usize]
        }
    };
    let top = px(x0, y0) * (1.0 - fx) + px(x0 + 1.0, y0) * fx;
    let bottom = px(x0, y0 + 1.0) * (1.0 - fx) + px(x0 + 1.0, y0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

fn warp(image: &[f32], channels: usize, h: usize, w: usize, m: &Inverse) -> Vec<f32> {
    let mut out = Vec::with_capacity(image.len());
    for c in 0..channels {
        let plane = &image[c * h * w..(c + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f32, y as f32);
                let sx = m[0] * xf + m[1] * yf + m[2];
                let sy = m[3] * xf + m[4] * yf + m[5];
                out.push(bilinear(plane, h, w, sx, sy));
            }
        }
    }
    out
}

/// Mean filter over a `kernel x kernel` window with edge-replicate padding.
/// The window spans offsets `-(k-1)/2 ..= k/2`, so even kernels extend one more
/// pixel right/down than left/up.
fn box_blur(image: &[f32], channels: usize, h: usize, w: usize, kernel: usize) -> Vec<f32> {
    let lo = (kernel as isize - 1) / 2;
    let hi = kernel as isize / 2;
    let norm = (kernel * kernel) as f32;
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = Vec::with_capacity(image.len());
    for c in 0..channels {
        let plane = &image[c * h * w..(c + 1) * h * w];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0f32;
                for dy in -lo..=hi {
                    let yy = clampi(y + dy, h);
                    for dx in -lo..=hi {
                        acc += plane[yy * w + clampi(x + dx, w)];
                    }
                }
                out.push(acc / norm);
            }
        }
    }
    out
}

/// Applies `spec` to a `[c, h, w]` image with pixels in `[0, 1]`. The result
/// has the same shape and is clamped to `[0, 1]`.
pub fn mutate(image: &Tensor<f32>, spec: &MutationSpec) -> Result<Tensor<f32>> {
    spec.validate()?;
    let [c, h, w] = *image.shape() else {
        return Err(Error::InvalidShape(format!("mutation expects [c, h, w], got {:?}", image.shape())));
    };
    let data = image.data();
    let out: Vec<f32> = match *spec {
        MutationSpec::Contrast { gain } => data.iter().map(|&v| gain * (v - 0.5) + 0.5).collect(),
        MutationSpec::Brightness { gain } => data.iter().map(|&v| gain * v).collect(),
        MutationSpec::Blur { kernel } => box_blur(data, c, h, w, kernel),
        _ => warp(data, c, h, w, &inverse_map(spec, h, w).expect("geometric mutation")),
    };
    Tensor::new(image.shape().to_vec(), out.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Tensor<f32> {
        let data = (0..h * w).map(|i| f(i / w, i % w)).collect();
        Tensor::new(vec![1, h, w], data).unwrap()
    }

    fn argmax2(t: &Tensor<f32>, w: usize) -> (usize, usize) {
        let (i, _) = t.data().iter().enumerate().fold((0, f32::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        (i / w, i % w)
    }

    #[test]
    fn unit_brightness_is_identity() {
        let img = image(5, 5, |r, c| ((r * 5 + c) as f32) / 25.0);
        // 1.0 is a valid parameter even though sampling never draws it
        assert_eq!(mutate(&img, &MutationSpec::Brightness { gain: 1.0 }).unwrap(), img);
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let img = image(9, 7, |_, _| 0.3);
        for k in [2, 3, 5, 7] {
            let out = mutate(&img, &MutationSpec::Blur { kernel: k }).unwrap();
            assert!(out.data().iter().all(|&v| (v - 0.3).abs() < 1e-6), "kernel {k}");
        }
    }

    #[test]
    fn blur_preserves_interior_impulse_mass() {
        for k in [2, 3, 5, 7] {
            let img = image(21, 21, |r, c| if r == 10 && c == 10 { 1.0 } else { 0.0 });
            let out = mutate(&img, &MutationSpec::Blur { kernel: k }).unwrap();
            let mass: f32 = out.data().iter().sum();
            assert!((mass - 1.0).abs() < 1e-5, "kernel {k}: {mass}");
        }
    }

    #[test]
    fn even_blur_is_anchored_top_left() {
        // the 2x2 window at (r, c) covers (r..=r+1, c..=c+1)
        let img = image(4, 4, |r, c| if r == 2 && c == 2 { 1.0 } else { 0.0 });
        let out = mutate(&img, &MutationSpec::Blur { kernel: 2 }).unwrap();
        let hits: Vec<usize> = (0..16).filter(|&i| out.data()[i] > 0.0).collect();
        assert_eq!(hits, vec![5, 6, 9, 10]);
    }

    #[test]
    fn rotation_moves_pixel_to_rotated_coordinate() {
        let (h, w) = (29, 29);
        let (r0, c0) = (6usize, 20usize);
        let img = image(h, w, |r, c| if r == r0 && c == c0 { 1.0 } else { 0.0 });
        let out = mutate(&img, &MutationSpec::Rotation { degrees: 10.0 }).unwrap();
        // hand-rotated coordinate about the centre (14, 14), x right / y down
        let t = 10f64.to_radians();
        let (dx, dy) = (c0 as f64 - 14.0, r0 as f64 - 14.0);
        let x = 14.0 + t.cos() * dx - t.sin() * dy;
        let y = 14.0 + t.sin() * dx + t.cos() * dy;
        let (r, c) = argmax2(&out, w);
        assert!((r as f64 - y).abs() <= 1.0 && (c as f64 - x).abs() <= 1.0, "({r},{c}) vs ({y},{x})");
    }

    #[test]
    fn shift_moves_content() {
        let img = image(20, 20, |r, c| if r == 10 && c == 10 { 1.0 } else { 0.0 });
        let out = mutate(&img, &MutationSpec::Shift { dx: 0.1, dy: -0.15 }).unwrap();
        assert_eq!(argmax2(&out, 20), (7, 12));
    }

    #[test]
    fn contrast_pivots_about_half() {
        let img = image(1, 3, |_, c| [0.5, 0.25, 1.0][c]);
        let out = mutate(&img, &MutationSpec::Contrast { gain: 1.5 }).unwrap();
        assert_eq!(out.data(), &[0.5, 0.125, 1.0]);
    }

    #[test]
    fn rejects_invalid_spec() {
        let img = image(3, 3, |_, _| 0.0);
        assert!(mutate(&img, &MutationSpec::Scale { ratio: 2.0 }).is_err());
    }

    fn any_spec() -> impl Strategy<Value = MutationSpec> {
        prop_oneof![
            (0.05f32..=0.15, 0.05f32..=0.15, any::<bool>(), any::<bool>()).prop_map(|(x, y, sx, sy)| {
                MutationSpec::Shift { dx: if sx { x } else { -x }, dy: if sy { y } else { -y } }
            }),
            (5f32..=25.0, any::<bool>()).prop_map(|(d, s)| MutationSpec::Rotation { degrees: if s { d } else { -d } }),
            (0.8f32..=1.2).prop_map(|ratio| MutationSpec::Scale { ratio }),
            (15f32..=30.0, any::<bool>()).prop_map(|(d, s)| MutationSpec::Shear { degrees: if s { d } else { -d } }),
            (0.5f32..=1.5).prop_map(|gain| MutationSpec::Contrast { gain }),
            (0.5f32..=1.5).prop_map(|gain| MutationSpec::Brightness { gain }),
            prop::sample::select(vec![2usize, 3, 5, 7]).prop_map(|kernel| MutationSpec::Blur { kernel }),
        ]
    }

    proptest! {
        #[test]
        fn output_stays_in_range_and_shape(
            spec in any_spec(),
            pixels in prop::collection::vec(0f32..=1.0, 2 * 6 * 5),
        ) {
            let img = Tensor::new(vec![2, 6, 5], pixels).unwrap();
            let out = mutate(&img, &spec).unwrap();
            prop_assert_eq!(out.shape(), img.shape());
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
