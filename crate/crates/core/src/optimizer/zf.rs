use nalgebra::{DMatrix, SymmetricEigen};

use crate::channel::ChannelMatrix;
use crate::signal_model::Precoder;

/// Ridge added (relative to the mean diagonal of `H H^T`) when the channel rows are
/// nearly linearly dependent.
pub const ZF_RIDGE: f64 = 1e-6;

const RANK_TOL: f64 = 1e-12;

/// Zero-forcing precoder with one column per user.
///
/// Columns are the pseudo-inverse directions normalized to unit L2 norm and
/// scaled jointly so that the largest LED row uses the whole budget `epsilon`.
/// Rank-deficient channels fall back to a ridge-regularized inverse.
pub fn zf_precoder(channel: &ChannelMatrix, epsilon: f64) -> Precoder {
    let h = &channel.gains;
    let k = h.nrows();
    let mut gram = h * h.transpose();
    let eig = SymmetricEigen::new(gram.clone());
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    if !(max_eig > 0.0) {
        return Precoder::zeros(h.ncols(), k);
    }
    if min_eig <= RANK_TOL * max_eig || h.ncols() < k {
        let ridge = ZF_RIDGE * gram.trace() / k as f64;
        for i in 0..k {
            gram[(i, i)] += ridge;
        }
    }
    let inv = gram.try_inverse().unwrap_or_else(|| DMatrix::identity(k, k));
    let mut dirs = h.transpose() * inv;
    for mut col in dirs.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    let p = Precoder::new(dirs);
    let max_l1 = p.max_row_l1();
    if max_l1 > 0.0 {
        Precoder::new(p.matrix * (epsilon / max_l1))
    } else {
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diagonal_channel_gives_diagonal_precoder() {
        let ch = ChannelMatrix::from_rows(&[&[2.0, 0.0], &[0.0, 0.5]], &[1.0, 1.0]).unwrap();
        let p = zf_precoder(&ch, 3.0);
        assert_eq!(p.matrix[(0, 1)], 0.0);
        assert_eq!(p.matrix[(1, 0)], 0.0);
        assert_relative_eq!(p.matrix[(0, 0)], 3.0, max_relative = 1e-14);
        assert_relative_eq!(p.matrix[(1, 1)], 3.0, max_relative = 1e-14);
    }

    #[test]
    fn two_by_two_hand_inverse() {
        // H = [[2, 1], [1, 1]], H^-1 = [[1, -1], [-1, 2]].
        let ch = ChannelMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 1.0]], &[1.0, 1.0]).unwrap();
        let p = zf_precoder(&ch, 1.0);
        let s2 = 2f64.sqrt();
        let s5 = 5f64.sqrt();
        // unit columns [1,-1]/sqrt2 and [-1,2]/sqrt5; row 2 has the largest L1.
        let scale = 1.0 / (1.0 / s2 + 2.0 / s5);
        assert_relative_eq!(p.matrix[(0, 0)], scale / s2, max_relative = 1e-12);
        assert_relative_eq!(p.matrix[(1, 0)], -scale / s2, max_relative = 1e-12);
        assert_relative_eq!(p.matrix[(0, 1)], -scale / s5, max_relative = 1e-12);
        assert_relative_eq!(p.matrix[(1, 1)], 2.0 * scale / s5, max_relative = 1e-12);
        assert!(p.max_row_l1() <= 1.0 + 1e-12);
    }

    #[test]
    fn nulls_cross_terms() {
        let ch = ChannelMatrix::from_rows(
            &[&[0.025, 0.025, 0.009, 0.009], &[0.009, 0.009, 0.025, 0.025]],
            &[1.0, 1.0],
        )
        .unwrap();
        let p = zf_precoder(&ch, 100.0);
        for k in 0..2 {
            for j in 0..2 {
                let v = ch.project(k, p.column(j));
                if j != k {
                    assert!(v.abs() < 1e-9, "{v}");
                } else {
                    assert!(v > 0.0);
                }
            }
        }
        assert_relative_eq!(p.max_row_l1(), 100.0, max_relative = 1e-12);
    }

    #[test]
    fn rank_deficient_falls_back() {
        let ch = ChannelMatrix::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]], &[1.0, 1.0]).unwrap();
        let p = zf_precoder(&ch, 1.0);
        assert!(p.matrix.iter().all(|v| v.is_finite()));
        assert!(p.max_row_l1() <= 1.0 + 1e-12);
    }
}
