//! Euclidean projection onto the L1 ball (sort-based).

/// Projects `v` in place onto `{x : ||x||_1 <= radius}`.
pub fn project_l1_ball(v: &mut [f64], radius: f64) {
    if radius <= 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= radius {
        return;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        cumsum += m;
        let t = (cumsum - radius) / (i + 1) as f64;
        if m > t {
            theta = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = x.signum() * (x.abs() - theta).max(0.0);
    }
}

/// Projects every row of a column-major `rows x cols` matrix onto the L1 ball.
pub fn project_rows(data: &mut [f64], rows: usize, cols: usize, radius: f64, scratch: &mut Vec<f64>) {
    scratch.resize(cols, 0.0);
    for r in 0..rows {
        for c in 0..cols {
            scratch[c] = data[c * rows + r];
        }
        project_l1_ball(scratch, radius);
        for c in 0..cols {
            data[c * rows + r] = scratch[c];
        }
    }
}
