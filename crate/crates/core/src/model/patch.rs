use crate::numerics::Tensor;

/// Number of patches for a series of `seq_len` steps:
/// `ceil((seq_len - patch_len) / stride) + 1`.
pub fn patch_count(seq_len: usize, patch_len: usize, stride: usize) -> usize {
    assert!(patch_len >= 1 && patch_len <= seq_len && stride >= 1);
    (seq_len - patch_len).div_ceil(stride) + 1
}

pub fn patch_starts(seq_len: usize, patch_len: usize, stride: usize) -> Vec<usize> {
    (0..patch_count(seq_len, patch_len, stride))
        .map(|i| i * stride)
        .collect()
}

/// Cuts one channel into `P x patch_len` patches. Positions past the end of
/// the series repeat its last value.
pub fn patchify(series: &[f64], patch_len: usize, stride: usize) -> Tensor {
    let last = *series.last().expect("non-empty series");
    let starts = patch_starts(series.len(), patch_len, stride);
    let mut data = Vec::with_capacity(starts.len() * patch_len);
    for &s in &starts {
        data.extend((s..s + patch_len).map(|t| series.get(t).copied().unwrap_or(last)));
    }
    Tensor::matrix(starts.len(), patch_len, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(patch_count(8, 4, 2), 3);
        assert_eq!(patch_starts(8, 4, 2), vec![0, 2, 4]);
        assert_eq!(patch_count(512, 16, 8), 63);
        assert_eq!(patch_count(9, 4, 3), 3);
        assert_eq!(patch_count(5, 5, 7), 1);
    }

    #[test]
    fn padding_repeats_last_value() {
        let series: Vec<f64> = (0..9).map(f64::from).collect();
        let p = patchify(&series, 4, 3);
        assert_eq!(p.row(0), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(p.row(2), &[6.0, 7.0, 8.0, 8.0]);
    }
}
