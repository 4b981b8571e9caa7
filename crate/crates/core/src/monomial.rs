//! Multi-index enumeration and monomial evaluation.

/// All exponent vectors of length `dim` with total degree at most `max_degree`,
/// in graded lexicographic order (constant term first).
pub fn multi_indices(dim: usize, max_degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=max_degree {
        let mut current = vec![0u32; dim];
        fill(&mut out, &mut current, 0, total);
    }
    out
}

fn fill(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        current[pos] = 0;
        return;
    }
    if current.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        fill(out, current, pos + 1, remaining - e);
    }
    current[pos] = 0;
}

pub fn eval_monomial(exponents: &[u32], x: &[f64]) -> f64 {
    exponents
        .iter()
        .zip(x)
        .filter(|(&e, _)| e > 0)
        .map(|(&e, &v)| v.powi(e as i32))
        .product()
}

pub fn total_degree(exponents: &[u32]) -> u32 {
    exponents.iter().sum()
}

/// Binomial coefficient, used to size monomial bases.
pub fn count_multi_indices(dim: usize, max_degree: u32) -> usize {
    let (n, k) = (dim as u128 + max_degree as u128, max_degree as u128);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_binomial() {
        for d in 1..5 {
            for deg in 0..5 {
                assert_eq!(multi_indices(d, deg).len(), count_multi_indices(d, deg));
            }
        }
        assert_eq!(count_multi_indices(8, 4), 495);
    }

    #[test]
    fn indices_are_distinct_and_bounded() {
        let mut all = multi_indices(3, 3);
        assert!(all.iter().all(|m| total_degree(m) <= 3));
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 20);
    }

    #[test]
    fn monomial_value() {
        assert_eq!(eval_monomial(&[2, 0, 1], &[3.0, 5.0, -1.0]), -9.0);
        assert_eq!(eval_monomial(&[0, 0], &[3.0, 5.0]), 1.0);
    }
}
