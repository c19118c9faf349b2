use super::AttributeError;
use std::collections::BTreeSet;

/// The `percent` highest-valued scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct TopSubset {
    pub percent: f64,
    /// Scene ids in descending value order.
    pub ids: Vec<String>,
    /// Value of the last admitted scene.
    pub threshold: f64,
}

/// Nested Top-k% subsets over one attribute plus the complement of the
/// largest one.
#[derive(Debug, Clone, PartialEq)]
pub struct StratificationResult {
    /// All scene ids, descending by value, ties by ascending id.
    pub ranking: Vec<String>,
    /// Subsets in ascending percent order; each contains the previous.
    pub subsets: Vec<TopSubset>,
    /// Scenes outside the largest subset, in ranking order.
    pub rest: Vec<String>,
}

impl StratificationResult {
    pub fn subset(&self, percent: f64) -> Option<&TopSubset> {
        self.subsets.iter().find(|s| s.percent == percent)
    }
}

/// `ceil(percent · n / 100)`, guarded against representation error in the
/// product.
pub fn top_count(percent: f64, n: usize) -> usize {
    let raw = percent * n as f64 / 100.0;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
}

pub fn stratify_topk(values: &[(String, f64)], percents: &[f64]) -> Result<StratificationResult, AttributeError> {
    if values.is_empty() {
        return Err(AttributeError::EmptyInput);
    }
    if let Some((id, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
        return Err(AttributeError::InvalidInput(format!("scene {id} has non-finite value {v}")));
    }
    if let Some(p) = percents.iter().find(|p| !(**p > 0.0 && **p <= 100.0)) {
        return Err(AttributeError::InvalidInput(format!("percent {p} outside (0, 100]")));
    }
    let mut order: Vec<&(String, f64)> = values.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let ranking: Vec<String> = order.iter().map(|(id, _)| id.clone()).collect();

    let mut sorted_pct = percents.to_vec();
    sorted_pct.sort_by(f64::total_cmp);
    sorted_pct.dedup();

    let n = values.len();
    let subsets: Vec<TopSubset> = sorted_pct
        .iter()
        .map(|&percent| {
            let count = top_count(percent, n);
            TopSubset {
                percent,
                ids: ranking[..count].to_vec(),
                threshold: if count == 0 { f64::INFINITY } else { order[count - 1].1 },
            }
        })
        .collect();
    let taken = subsets.last().map_or(0, |s| s.ids.len());
    let rest = ranking[taken..].to_vec();
    Ok(StratificationResult {
        ranking,
        subsets,
        rest,
    })
}

/// `|a ∩ b| / |a ∪ b|`, defined as 1 when both are empty.
pub fn jaccard_overlap<'a>(a: impl IntoIterator<Item = &'a str>, b: impl IntoIterator<Item = &'a str>) -> f64 {
    let a: BTreeSet<&str> = a.into_iter().collect();
    let b: BTreeSet<&str> = b.into_iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<(String, f64)> {
        (0..n).map(|i| (format!("s{i:03}"), i as f64)).collect()
    }

    #[test]
    fn five_percent_of_hundred() {
        let r = stratify_topk(&ids(100), &[5.0]).unwrap();
        assert_eq!(r.subsets[0].ids, vec!["s099", "s098", "s097", "s096", "s095"]);
        assert_eq!(r.subsets[0].threshold, 95.0);
        assert_eq!(r.rest.len(), 95);
    }

    #[test]
    fn ties_admit_lower_id_first() {
        let vals = vec![
            ("c".to_string(), 1.0),
            ("b".to_string(), 5.0),
            ("a".to_string(), 5.0),
            ("d".to_string(), 0.0),
        ];
        let r = stratify_topk(&vals, &[25.0]).unwrap();
        assert_eq!(r.subsets[0].ids, vec!["a"]);
    }

    #[test]
    fn empty_percent_list_puts_everything_in_rest() {
        let r = stratify_topk(&ids(7), &[]).unwrap();
        assert!(r.subsets.is_empty());
        assert_eq!(r.rest.len(), 7);
        assert_eq!(stratify_topk(&[], &[1.0]).unwrap_err(), AttributeError::EmptyInput);
    }

    #[test]
    fn jaccard_cases() {
        assert_eq!(jaccard_overlap(["a", "b"], ["b", "a"]), 1.0);
        assert_eq!(jaccard_overlap(["a"], ["b"]), 0.0);
        assert_eq!(jaccard_overlap(["a", "b"], ["b", "c", "d"]), 0.25);
        assert_eq!(jaccard_overlap(Vec::<&str>::new(), Vec::<&str>::new()), 1.0);
    }

    proptest! {
        #[test]
        fn subsets_nest_with_exact_sizes(
            vals in proptest::collection::vec(-10i32..10, 1..300),
            pcts in proptest::collection::vec(1u32..=100, 0..6),
        ) {
            let values: Vec<(String, f64)> = vals.iter().enumerate().map(|(i, v)| (format!("{i:05}"), *v as f64)).collect();
            let percents: Vec<f64> = pcts.iter().map(|p| *p as f64).collect();
            let r = stratify_topk(&values, &percents).unwrap();
            let n = values.len();
            for w in r.subsets.windows(2) {
                prop_assert!(w[1].ids.starts_with(&w[0].ids));
            }
            for s in &r.subsets {
                prop_assert_eq!(s.ids.len(), (s.percent * n as f64 / 100.0).ceil() as usize);
            }
            let largest = r.subsets.last().map_or(0, |s| s.ids.len());
            prop_assert_eq!(largest + r.rest.len(), n);
        }
    }
}
