//! Sobel edge maps used as structural ground truth.

/// Relative threshold on the Sobel magnitude.
pub const EDGE_THRESHOLD: f64 = 0.5;

/// Reflect-pads an index into `[0, n)`: `-1 → 1`, `n → n - 2`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if n == 1 {
        return 0;
    }
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// Sobel gradient magnitude of a square `side x side` image.
pub fn sobel_magnitude(pixels: &[f64], side: usize) -> Vec<f64> {
    assert_eq!(pixels.len(), side * side, "image is not side x side");
    let at = |r: isize, c: isize| pixels[reflect(r, side) * side + reflect(c, side)];
    let mut out = vec![0.0; side * side];
    for r in 0..side as isize {
        for c in 0..side as isize {
            let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            out[r as usize * side + c as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Binary edge map: Sobel magnitude thresholded at half of the image's
/// maximum magnitude. A constant image has no edges.
pub fn extract_sketch(pixels: &[f64], side: usize) -> Vec<u8> {
    let mag = sobel_magnitude(pixels, side);
    let max = mag.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return vec![0; mag.len()];
    }
    let cut = EDGE_THRESHOLD * max;
    mag.iter().map(|&m| u8::from(m >= cut)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_edges() {
        for v in [0.0, 0.3, 1.0] {
            assert!(extract_sketch(&[v; 256], 16).iter().all(|&s| s == 0));
        }
    }

    #[test]
    fn vertical_step_marks_columns_seven_and_eight() {
        let img: Vec<f64> = (0..256)
            .map(|i| if i % 16 >= 8 { 1.0 } else { 0.0 })
            .collect();
        let s = extract_sketch(&img, 16);
        for r in 0..16 {
            for c in 0..16 {
                assert_eq!(s[r * 16 + c] == 1, c == 7 || c == 8, "row {r} col {c}");
            }
        }
    }

    #[test]
    fn reflect_padding_indices() {
        assert_eq!(reflect(-1, 16), 1);
        assert_eq!(reflect(16, 16), 14);
        assert_eq!(reflect(5, 16), 5);
    }
}
