use super::components::BinaryRaster;

/// Exact 1D squared distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance from each foreground pixel to the nearest
/// background pixel; everything outside the raster counts as background.
/// Background pixels map to 0.
pub fn squared_distance_transform(raster: &BinaryRaster) -> Vec<f64> {
    let (w, h) = (raster.width + 2, raster.height + 2);
    // Larger than any attainable squared distance, small enough to stay exact.
    let inf = ((w + h) * (w + h)) as f64;
    let mut grid = vec![0.0; w * h];
    for y in 0..raster.height {
        for x in 0..raster.width {
            if raster.get(x, y) {
                grid[(y + 1) * w + x + 1] = inf;
            }
        }
    }
    let n = w.max(h);
    let (mut f, mut out) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    let mut result = Vec::with_capacity(raster.width * raster.height);
    for y in 0..raster.height {
        for x in 0..raster.width {
            result.push(grid[(y + 1) * w + x + 1]);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(r: &BinaryRaster) -> Vec<f64> {
        let mut out = Vec::new();
        for y in 0..r.height as isize {
            for x in 0..r.width as isize {
                if !r.get(x as usize, y as usize) {
                    out.push(0.0);
                    continue;
                }
                let mut best = f64::INFINITY;
                for by in -1..=r.height as isize {
                    for bx in -1..=r.width as isize {
                        if !r.get_signed(bx, by) {
                            let d = ((bx - x).pow(2) + (by - y).pow(2)) as f64;
                            best = best.min(d);
                        }
                    }
                }
                out.push(best);
            }
        }
        out
    }

    proptest! {
        #[test]
        fn matches_brute_force(w in 1usize..10, h in 1usize..10, bits in proptest::collection::vec(any::<bool>(), 100)) {
            let r = BinaryRaster::from_data(w, h, bits[..w * h].to_vec());
            prop_assert_eq!(squared_distance_transform(&r), brute(&r));
        }
    }
}
