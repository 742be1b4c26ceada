use crate::data::DataView;

/// Column-major quantised copy of a feature matrix.
///
/// Feature `f` has `cuts[f].len() + 1` bins; a value lands in the first bin
/// whose cut is `>= value`, so "bin <= b" is equivalent to `value <= cuts[b]`.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    n_rows: usize,
    bins: Vec<u16>,
    cuts: Vec<Vec<f64>>,
}

impl BinnedMatrix {
    pub fn new(data: &DataView<'_>, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, u16::MAX as usize);
        let n = data.n_rows();
        let m = data.n_features;
        let mut cuts = Vec::with_capacity(m);
        let mut bins = vec![0u16; n * m];
        for f in 0..m {
            let mut uniq: Vec<f64> = (0..n).map(|i| data.x[i * m + f]).collect();
            uniq.sort_by(f64::total_cmp);
            uniq.dedup();
            let c: Vec<f64> = if uniq.len() <= max_bins {
                uniq[..uniq.len() - 1].to_vec()
            } else {
                let mut c: Vec<f64> = (1..max_bins)
                    .map(|k| uniq[k * uniq.len() / max_bins - 1])
                    .collect();
                c.dedup();
                c
            };
            let col = &mut bins[f * n..(f + 1) * n];
            for (i, b) in col.iter_mut().enumerate() {
                let v = data.x[i * m + f];
                *b = c.partition_point(|&cut| cut < v) as u16;
            }
            cuts.push(c);
        }
        Self { n_rows: n, bins, cuts }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }

    #[inline]
    pub fn bin(&self, feature: usize, row: usize) -> u16 {
        self.bins[feature * self.n_rows + row]
    }

    /// Real-valued threshold for the split "bin <= b".
    pub fn threshold(&self, feature: usize, b: u16) -> f64 {
        self.cuts[feature][b as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_order_matches_threshold() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64 * 0.5).collect();
        let y = vec![0.0; 50];
        let d = DataView::new(&x, 1, &y).unwrap();
        let b = BinnedMatrix::new(&d, 8);
        assert!(b.n_bins(0) <= 8);
        for i in 0..50 {
            let bi = b.bin(0, i);
            for cut in 0..(b.n_bins(0) - 1) as u16 {
                assert_eq!(bi <= cut, x[i] <= b.threshold(0, cut));
            }
        }
    }

    #[test]
    fn few_distinct_values_get_own_bins() {
        let x = [3.0, 1.0, 2.0, 1.0];
        let d = DataView::new(&x, 1, &[0.0; 4]).unwrap();
        let b = BinnedMatrix::new(&d, 256);
        assert_eq!(b.n_bins(0), 3);
        assert_eq!((0..4).map(|i| b.bin(0, i)).collect::<Vec<_>>(), vec![2, 0, 1, 0]);
    }
}
