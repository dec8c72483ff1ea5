//! Rank statistics.

/// Fractional ranks (1-based); tied values share the mean of their ranks.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j share rank mean((i+1)..=j)
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            out[k] = rank;
        }
        i = j;
    }
    out
}

/// Pearson correlation; `None` when either side has zero variance or the
/// inputs are shorter than two.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson: length mismatch");
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation (Pearson correlation of fractional ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Rank by counting: rank(v) = #{w < v} + (#{w == v} + 1) / 2.
    fn counted_ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let less = v.iter().filter(|&&b| b < a).count() as f64;
                let eq = v.iter().filter(|&&b| b == a).count() as f64;
                less + (eq + 1.0) / 2.0
            })
            .collect()
    }

    /// Textbook formula for untied data: 1 - 6 sum d^2 / (n (n^2 - 1)).
    fn untied_formula(x: &[f64], y: &[f64]) -> f64 {
        let (rx, ry) = (counted_ranks(x), counted_ranks(y));
        let n = x.len() as f64;
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn perfect_and_reversed() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &[10.0, 20.0, 30.0, 40.0]), Some(1.0));
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&x, &[7.0; 4]), None);
    }

    proptest! {
        #[test]
        fn matches_counting_ranks(v in prop::collection::vec(0u8..6, 1..8)) {
            let f: Vec<f64> = v.iter().map(|&a| a as f64).collect();
            prop_assert_eq!(ranks(&f), counted_ranks(&f));
        }

        #[test]
        fn matches_closed_form_without_ties(perm in Just((0..8).collect::<Vec<u32>>()).prop_shuffle(),
                                            n in 2usize..=8) {
            let y: Vec<f64> = perm.iter().filter(|&&p| (p as usize) < n).map(|&p| p as f64).collect();
            let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let rho = spearman(&x, &y).unwrap();
            prop_assert!((rho - untied_formula(&x, &y)).abs() < 1e-12);
        }

        #[test]
        fn negation_flips_sign(v in prop::collection::vec(-50i32..50, 3..8),
                               w in prop::collection::vec(-50i32..50, 3..8)) {
            let n = v.len().min(w.len());
            let x: Vec<f64> = v[..n].iter().map(|&a| a as f64).collect();
            let y: Vec<f64> = w[..n].iter().map(|&a| a as f64).collect();
            let neg: Vec<f64> = y.iter().map(|a| -a).collect();
            match (spearman(&x, &y), spearman(&x, &neg)) {
                (Some(a), Some(b)) => prop_assert!((a + b).abs() < 1e-12),
                (None, None) => {}
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }
}
