use super::ContrastiveError;
use std::collections::HashMap;

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index between two labelings of the same points.
///
/// Returns 1 when both labelings are trivially identical partitions (the
/// index is otherwise undefined there).
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64, ContrastiveError> {
    if a.len() != b.len() {
        return Err(ContrastiveError::LengthMismatch(a.len(), b.len()));
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    // Integer pair counts keep the sums exact.
    let index: f64 = table.values().map(|&n| pairs(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| pairs(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| pairs(n)).sum();
    let total = pairs(a.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap(), 0.0);
        assert!(matches!(adjusted_rand_index(&[0], &[0, 1]), Err(ContrastiveError::LengthMismatch(1, 2))));
    }

    #[test]
    fn symmetric() {
        let a = [0, 1, 2, 0, 1, 1, 2, 2, 0];
        let b = [1, 1, 0, 0, 2, 1, 0, 2, 2];
        assert_eq!(adjusted_rand_index(&a, &b).unwrap(), adjusted_rand_index(&b, &a).unwrap());
    }
}
