//! HSV post-processing and HSV to RGB conversion.
//!
//! The conversion is the six-sector formulation with every input and output
//! in `[0, 1]`:
//!
//! ```text
//! i = floor(6h) mod 6,  f = 6h - floor(6h)
//! p = v(1 - s),  q = v(1 - s f),  t = v(1 - s(1 - f))
//! i:   0        1        2        3        4        5
//!    (v,t,p)  (q,v,p)  (p,v,t)  (p,q,v)  (t,p,v)  (v,p,q)
//! ```
//!
//! Sector ties are resolved by the floor, so `h = 1/6` lands in sector 1.

/// Wraps `h` into `[0, 1)`, including for negative inputs.
#[inline]
pub fn wrap_unit(h: f64) -> f64 {
    let r = h.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[inline]
pub fn clip_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

#[inline]
fn sector(h: f64) -> (usize, f64) {
    let scaled = 6.0 * h;
    let floor = scaled.floor();
    ((floor as i64).rem_euclid(6) as usize, scaled - floor)
}

/// Standard HSV to RGB conversion, all channels in `[0, 1]`.
pub fn hsv2rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let (i, f) = sector(h);
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// [`hsv2rgb`] plus its Jacobian `d[r,g,b] / d[h,s,v]`, valid almost
/// everywhere. At sector boundaries the derivative of the sector selected by
/// the floor is used.
pub fn hsv2rgb_with_jacobian(h: f64, s: f64, v: f64) -> ([f64; 3], [[f64; 3]; 3]) {
    let (i, f) = sector(h);
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let dv = [0.0, 0.0, 1.0];
    let dp = [0.0, -v, 1.0 - s];
    let dq = [-6.0 * v * s, -v * f, 1.0 - s * f];
    let dt = [6.0 * v * s, -v * (1.0 - f), 1.0 - s * (1.0 - f)];
    match i {
        0 => ([v, t, p], [dv, dt, dp]),
        1 => ([q, v, p], [dq, dv, dp]),
        2 => ([p, v, t], [dp, dv, dt]),
        3 => ([p, q, v], [dp, dq, dv]),
        4 => ([t, p, v], [dt, dp, dv]),
        _ => ([v, p, q], [dv, dp, dq]),
    }
}

/// Maps raw CPPN outputs onto the canonical HSV cube:
/// `(h mod 1, clip(s, 0, 1), clip(|v|, 0, 1))`.
#[inline]
pub fn canonical_hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    [wrap_unit(h), clip_unit(s), clip_unit(v.abs())]
}

/// Almost-everywhere derivative of [`canonical_hsv`] per channel.
///
/// `mod` passes 1; `clip` passes 1 on the closed interval `[0, 1]` and 0
/// outside; `|v|` passes `sign(v)` with `sign(0) = 1`.
#[inline]
pub fn canonical_hsv_derivative(_h: f64, s: f64, v: f64) -> [f64; 3] {
    let ds = if (0.0..=1.0).contains(&s) { 1.0 } else { 0.0 };
    let sign = if v >= 0.0 { 1.0 } else { -1.0 };
    let dv = if v.abs() <= 1.0 { sign } else { 0.0 };
    [1.0, ds, dv]
}

/// Raw `(h, s, v)` to displayable RGB.
pub fn postprocess_hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let [h, s, v] = canonical_hsv(h, s, v);
    hsv2rgb(h, s, v)
}

/// Quantizes a unit channel value to 8 bits as `round(255 c)`.
#[inline]
pub fn to_u8(c: f64) -> u8 {
    (255.0 * clip_unit(c)).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: [f64; 3], b: [f64; 3]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn pure_red_and_black() {
        assert_eq!(postprocess_hsv(0.0, 1.0, 1.0), [1.0, 0.0, 0.0]);
        assert_eq!(postprocess_hsv(0.3, 0.4, 0.0), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn wraps_and_clips_before_conversion() {
        // 1.25 mod 1 = 0.25, clip(2) = 1, clip(|-1.5|) = 1
        let expected = hsv2rgb(0.25, 1.0, 1.0);
        assert_eq!(postprocess_hsv(1.25, 2.0, -1.5), expected);
        // sector 1 at f = 0.5: (q, v, p) = (0.5, 1, 0)
        assert!(close(expected, [0.5, 1.0, 0.0]));
    }

    #[test]
    fn sector_table() {
        // primaries and secondaries at full saturation
        let cases = [
            (0.0, [1.0, 0.0, 0.0]),
            (1.0 / 6.0, [1.0, 1.0, 0.0]),
            (2.0 / 6.0, [0.0, 1.0, 0.0]),
            (3.0 / 6.0, [0.0, 1.0, 1.0]),
            (4.0 / 6.0, [0.0, 0.0, 1.0]),
            (5.0 / 6.0, [1.0, 0.0, 1.0]),
        ];
        for (h, rgb) in cases {
            assert!(close(hsv2rgb(h, 1.0, 1.0), rgb), "h={h}");
        }
        assert!(close(hsv2rgb(0.7, 0.0, 0.6), [0.6, 0.6, 0.6]));
    }

    #[test]
    fn wrap_handles_negatives() {
        assert!((wrap_unit(-0.25) - 0.75).abs() < 1e-15);
        let tiny = wrap_unit(-1e-20);
        assert!((0.0..1.0).contains(&tiny));
        assert_eq!(wrap_unit(3.0), 0.0);
    }

    #[test]
    fn canonical_range_is_fixed_point() {
        for &(h, s, v) in &[(0.0, 0.0, 0.0), (0.999, 1.0, 1.0), (0.4, 0.2, 0.7)] {
            assert_eq!(canonical_hsv(h, s, v), [h, s, v]);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let eps = 1e-7;
        for &(h, s, v) in &[(0.05, 0.3, 0.8), (0.27, 0.9, 0.4), (0.61, 0.5, 0.5), (0.93, 0.7, 0.2)] {
            let (rgb, jac) = hsv2rgb_with_jacobian(h, s, v);
            assert_eq!(rgb, hsv2rgb(h, s, v));
            let x = [h, s, v];
            for k in 0..3 {
                let mut up = x;
                let mut dn = x;
                up[k] += eps;
                dn[k] -= eps;
                let a = hsv2rgb(up[0], up[1], up[2]);
                let b = hsv2rgb(dn[0], dn[1], dn[2]);
                for c in 0..3 {
                    let fd = (a[c] - b[c]) / (2.0 * eps);
                    assert!((fd - jac[c][k]).abs() < 1e-6, "channel {c} wrt {k}");
                }
            }
        }
    }

    #[test]
    fn quantization() {
        assert_eq!(to_u8(0.0), 0);
        assert_eq!(to_u8(1.0), 255);
        assert_eq!(to_u8(0.5), 128);
    }
}
