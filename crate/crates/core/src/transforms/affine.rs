//! Seven-parameter affine warps of row-major images.
//!
//! `ρ = (tx, ty, θ, log sx, log sy, hx, hy)` builds
//! `M = T(c + t) · R(θ) · H(hx, hy) · S(sx, sy) · T(-c)` where `c` is the image
//! centre. Images are warped by inverse mapping with bilinear interpolation;
//! samples falling outside the source read as 0.

use crate::error::{Error, Result};

/// Scale factors below this make a configuration non-invertible.
const MIN_SCALE: f64 = 1e-6;

/// Homogeneous 2D transform, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn translation(tx: f64, ty: f64) -> Self {
        Mat3([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])
    }

    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn shear(hx: f64, hy: f64) -> Self {
        Mat3([[1.0, hx, 0.0], [hy, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        Mat3([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn mul(&self, rhs: &Mat3) -> Mat3 {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Mat3(out)
    }

    /// Inverse of an affine matrix (last row `0 0 1`).
    pub fn inverse(&self) -> Option<Mat3> {
        let m = &self.0;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if !det.is_finite() || det.abs() < 1e-300 {
            return None;
        }
        let (a, b, c, d) = (m[1][1] / det, -m[0][1] / det, -m[1][0] / det, m[0][0] / det);
        let tx = -(a * m[0][2] + b * m[1][2]);
        let ty = -(c * m[0][2] + d * m[1][2]);
        Some(Mat3([[a, b, tx], [c, d, ty], [0.0, 0.0, 1.0]]))
    }

    pub fn transform(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.0;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
        )
    }

    pub fn max_abs_diff(&self, other: &Mat3) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffineImage {
    width: usize,
    height: usize,
    hints: [f64; 7],
}

impl AffineImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            hints: [
                0.1 * width as f64,
                0.1 * height as f64,
                0.2,
                0.15,
                0.15,
                0.15,
                0.15,
            ],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn hints(&self) -> &[f64; 7] {
        &self.hints
    }

    fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.width as f64 - 1.0),
            0.5 * (self.height as f64 - 1.0),
        )
    }

    /// The five factors of `M` in application order from the left.
    pub fn factors(&self, rho: &[f64]) -> Result<[Mat3; 5]> {
        let (sx, sy) = (rho[3].exp(), rho[4].exp());
        if sx < MIN_SCALE || sy < MIN_SCALE {
            return Err(Error::NotInvertible(format!("scale underflow ({sx:e}, {sy:e})")));
        }
        if 1.0 - rho[5] * rho[6] < MIN_SCALE {
            return Err(Error::NotInvertible("degenerate shear".into()));
        }
        let (cx, cy) = self.center();
        Ok([
            Mat3::translation(cx + rho[0], cy + rho[1]),
            Mat3::rotation(rho[2]),
            Mat3::shear(rho[5], rho[6]),
            Mat3::scale(sx, sy),
            Mat3::translation(-cx, -cy),
        ])
    }

    /// The forward matrix `M(ρ)`.
    pub fn matrix(&self, rho: &[f64]) -> Result<Mat3> {
        let f = self.factors(rho)?;
        Ok(f[0].mul(&f[1]).mul(&f[2]).mul(&f[3]).mul(&f[4]))
    }

    /// Reads a matrix back as parameters, fixing `hy = 0` (a QR split of the
    /// linear part into rotation and upper-triangular scale/shear).
    pub fn decompose(&self, m: &Mat3) -> Result<[f64; 7]> {
        let a = &m.0;
        let (a00, a01, a10, a11) = (a[0][0], a[0][1], a[1][0], a[1][1]);
        let sx = a00.hypot(a10);
        if sx < MIN_SCALE {
            return Err(Error::NotInvertible("scale underflow".into()));
        }
        let (q0, q1) = (a00 / sx, a10 / sx);
        let upper = q0 * a01 + q1 * a11;
        let sy = -q1 * a01 + q0 * a11;
        if sy < MIN_SCALE {
            return Err(Error::NotInvertible(
                "reflection or scale underflow in matrix".into(),
            ));
        }
        let theta = q1.atan2(q0);
        let hx = upper / sy;
        let (cx, cy) = self.center();
        // M p = A (p - c) + c + t
        let tx = a[0][2] - cx + a00 * cx + a01 * cy;
        let ty = a[1][2] - cy + a10 * cx + a11 * cy;
        Ok([tx, ty, theta, sx.ln(), sy.ln(), hx, 0.0])
    }

    pub(super) fn forward(&self, rho: &[f64]) -> Result<AffineWarp> {
        let m = self.matrix(rho)?;
        self.warp_for(m)
    }

    pub(super) fn inverse(&self, rho: &[f64]) -> Result<AffineWarp> {
        let m = self.matrix(rho)?;
        let inv = m
            .inverse()
            .ok_or_else(|| Error::NotInvertible("singular affine matrix".into()))?;
        self.warp_for(inv)
    }

    fn warp_for(&self, forward: Mat3) -> Result<AffineWarp> {
        let sample = forward
            .inverse()
            .ok_or_else(|| Error::NotInvertible("singular affine matrix".into()))?;
        Ok(AffineWarp {
            forward,
            sample,
            width: self.width,
            height: self.height,
        })
    }
}

/// An image warp by a fixed matrix. `sample` maps output pixel coordinates to
/// source coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineWarp {
    pub forward: Mat3,
    pub sample: Mat3,
    width: usize,
    height: usize,
}

impl AffineWarp {
    pub fn apply(&self, src: &[f64]) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let mut out = vec![0.0; w * h];
        let m = &self.sample.0;
        for row in 0..h {
            let y = row as f64;
            let mut sx = m[0][1] * y + m[0][2];
            let mut sy = m[1][1] * y + m[1][2];
            for v in &mut out[row * w..(row + 1) * w] {
                *v = bilinear(src, w, h, sx, sy);
                sx += m[0][0];
                sy += m[1][0];
            }
        }
        out
    }
}

/// Bilinear sample with zero outside the image.
pub(crate) fn bilinear(img: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    if !(x > -1.0 && y > -1.0 && x < w as f64 && y < h as f64) {
        return 0.0;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as isize, y0 as isize);
    let get = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= w as isize || j >= h as isize {
            0.0
        } else {
            img[j as usize * w + i as usize]
        }
    };
    let top = (1.0 - fx) * get(xi, yi) + fx * get(xi + 1, yi);
    let bottom = (1.0 - fx) * get(xi, yi + 1) + fx * get(xi + 1, yi + 1);
    (1.0 - fy) * top + fy * bottom
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::item::Shape;
    use crate::transforms::TransformFamily;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blob(w: usize, h: usize) -> Vec<f64> {
        let (cx, cy) = (0.5 * (w as f64 - 1.0) + 1.0, 0.5 * (h as f64 - 1.0) - 1.5);
        let mut img = vec![0.0; w * h];
        for j in 0..h {
            for i in 0..w {
                let dx = (i as f64 - cx) / 5.0;
                let dy = (j as f64 - cy) / 4.0;
                img[j * w + i] = (-0.5 * (dx * dx + dy * dy)).exp();
            }
        }
        img
    }

    #[test]
    fn zero_params_give_identity_matrix() {
        let a = AffineImage::new(28, 28);
        let m = a.matrix(&[0.0; 7]).unwrap();
        assert!(m.max_abs_diff(&Mat3::IDENTITY) < 1e-15);
    }

    #[test]
    fn identity_warp_is_exact() {
        let fam = TransformFamily::from_name("affine7", Shape::Image { width: 28, height: 28 })
            .unwrap();
        let img = blob(28, 28);
        assert_eq!(fam.apply(&img, &[0.0; 7]).unwrap(), img);
        // Also through the generic warp path with a matrix built from zeros.
        let a = AffineImage::new(28, 28);
        let w = a.forward(&[0.0; 7]).unwrap();
        assert_eq!(w.apply(&img), img);
    }

    #[test]
    fn matrix_times_inverse_is_identity() {
        let a = AffineImage::new(28, 28);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fam = TransformFamily::Affine(a.clone());
        for _ in 0..50 {
            let rho = fam.random_params(1.0, &mut rng);
            let m = a.matrix(&rho).unwrap();
            let p = m.mul(&m.inverse().unwrap());
            assert!(p.max_abs_diff(&Mat3::IDENTITY) < 1e-10);
        }
    }

    #[test]
    fn matrix_matches_factor_product() {
        let a = AffineImage::new(20, 16);
        let rho = [1.5, -2.0, 0.3, 0.1, -0.2, 0.05, -0.1];
        let (cx, cy) = (9.5, 7.5);
        let (sx, sy) = (0.1f64.exp(), (-0.2f64).exp());
        let (s, c) = 0.3f64.sin_cos();
        // Hand-expanded linear part R · H · S.
        let h = [[1.0, 0.05], [-0.1, 1.0]];
        let r = [[c, -s], [s, c]];
        let mut lin = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let scale = if j == 0 { sx } else { sy };
                lin[i][j] = (0..2).map(|k| r[i][k] * h[k][j]).sum::<f64>() * scale;
            }
        }
        let tx = cx + rho[0] - lin[0][0] * cx - lin[0][1] * cy;
        let ty = cy + rho[1] - lin[1][0] * cx - lin[1][1] * cy;
        let expected = Mat3([[lin[0][0], lin[0][1], tx], [lin[1][0], lin[1][1], ty], [0.0, 0.0, 1.0]]);
        assert!(a.matrix(&rho).unwrap().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn decompose_round_trips_hy_zero() {
        let a = AffineImage::new(28, 28);
        let rho = [1.0, -0.5, 0.2, 0.1, -0.05, 0.1, 0.0];
        let back = a.decompose(&a.matrix(&rho).unwrap()).unwrap();
        for (x, y) in rho.iter().zip(back.iter()) {
            assert!((x - y).abs() < 1e-12, "{rho:?} vs {back:?}");
        }
    }

    #[test]
    fn inverse_params_realize_inverse_matrix() {
        let a = AffineImage::new(28, 28);
        let fam = TransformFamily::Affine(a.clone());
        let rho = [2.0, 1.0, -0.15, 0.1, 0.05, 0.1, -0.08];
        let inv = fam.invert_params(&rho).unwrap();
        let prod = a.matrix(&inv).unwrap().mul(&a.matrix(&rho).unwrap());
        assert!(prod.max_abs_diff(&Mat3::IDENTITY) < 1e-10);
    }

    #[test]
    fn scale_underflow_is_rejected() {
        let fam = TransformFamily::Affine(AffineImage::new(8, 8));
        let rho = [0.0, 0.0, 0.0, -20.0, 0.0, 0.0, 0.0];
        assert!(matches!(fam.invert(&rho), Err(Error::NotInvertible(_))));
    }

    #[test]
    fn round_trip_on_smooth_image() {
        let (w, h) = (28, 28);
        let fam = TransformFamily::Affine(AffineImage::new(w, h));
        let img = blob(w, h);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            // Keep every coordinate within one scale hint.
            let rho: Vec<f64> = fam
                .random_params(1.0, &mut rng)
                .iter()
                .zip(fam.scale_hints())
                .map(|(r, h)| r.clamp(-h, h))
                .collect();
            let y = fam.align(&img, &rho).unwrap();
            let back = fam.apply(&y, &rho).unwrap();
            // Interior: pixels whose preimage stays inside the frame, so no
            // content was lost to zero fill on the way through `y`.
            let sample = AffineImage::new(w, h).matrix(&rho).unwrap().inverse().unwrap();
            let inside = |v: f64, n: usize| (1.0..=(n - 2) as f64).contains(&v);
            let mut worst = 0.0f64;
            for j in 1..h - 1 {
                for i in 1..w - 1 {
                    let (sx, sy) = sample.transform(i as f64, j as f64);
                    if inside(sx, w) && inside(sy, h) {
                        worst = worst.max((back[j * w + i] - img[j * w + i]).abs());
                    }
                }
            }
            assert!(worst <= 0.05, "round-trip error {worst} for {rho:?}");
        }
    }

    #[test]
    fn bilinear_zero_fill() {
        let img = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(bilinear(&img, 2, 2, 0.0, 0.0), 1.0);
        assert_eq!(bilinear(&img, 2, 2, 1.0, 1.0), 4.0);
        assert_eq!(bilinear(&img, 2, 2, 0.5, 0.0), 1.5);
        assert_eq!(bilinear(&img, 2, 2, -5.0, 0.0), 0.0);
        assert_eq!(bilinear(&img, 2, 2, 1.5, 0.0), 1.0);
    }
}
