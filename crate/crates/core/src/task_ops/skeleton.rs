use super::components::{label_components, BinaryRaster};

/// Zhang–Suen thinning. Output is a subset of the input with the same number
/// of 8-connected components: a component the two sub-iterations would erase
/// entirely (two-pixel-thick blobs) keeps its first pixel in row-major order.
pub fn medial_axis(component: &BinaryRaster) -> BinaryRaster {
    let (w, h) = (component.width, component.height);
    let mut cur = component.clone();
    if cur.is_empty() {
        return cur;
    }
    let mut to_clear = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            to_clear.clear();
            for y in 0..h {
                for x in 0..w {
                    if cur.get(x, y) && deletable(&cur, x as isize, y as isize, step) {
                        to_clear.push((x, y));
                    }
                }
            }
            changed |= !to_clear.is_empty();
            for &(x, y) in &to_clear {
                cur.set(x, y, false);
            }
        }
        if !changed {
            break;
        }
    }

    let (labels, count) = label_components(component);
    let mut survived = vec![false; count as usize + 1];
    for (i, &l) in labels.iter().enumerate() {
        if cur.data[i] {
            survived[l as usize] = true;
        }
    }
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 && !survived[l as usize] {
            cur.data[i] = true;
            survived[l as usize] = true;
        }
    }
    cur
}

fn deletable(img: &BinaryRaster, x: isize, y: isize, step: usize) -> bool {
    // P2..P9 clockwise from north.
    let p = [
        img.get_signed(x, y - 1),
        img.get_signed(x + 1, y - 1),
        img.get_signed(x + 1, y),
        img.get_signed(x + 1, y + 1),
        img.get_signed(x, y + 1),
        img.get_signed(x - 1, y + 1),
        img.get_signed(x - 1, y),
        img.get_signed(x - 1, y - 1),
    ];
    let b = p.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
    if a != 1 {
        return false;
    }
    let (n, e, s, wst) = (p[0], p[2], p[4], p[6]);
    if step == 0 {
        !(n && e && s) && !(e && s && wst)
    } else {
        !(n && e && wst) && !(n && s && wst)
    }
}
