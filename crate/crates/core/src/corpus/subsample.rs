use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;

/// Indices of a class-balanced subset: every class present in `classes`
/// keeps exactly as many members as the rarest class, drawn uniformly
/// without replacement. Indices come back in ascending order.
pub fn balanced_subsample_indices<R: Rng + ?Sized>(classes: &[usize], rng: &mut R) -> Vec<usize> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in classes.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let Some(keep) = by_class.values().map(Vec::len).min() else {
        return Vec::new();
    };
    let mut out: Vec<usize> = by_class
        .values()
        .flat_map(|members| {
            index::sample(rng, members.len(), keep)
                .into_iter()
                .map(|j| members[j])
                .collect::<Vec<_>>()
        })
        .collect();
    out.sort_unstable();
    out
}

pub fn balanced_subsample<S: Clone, R: Rng + ?Sized>(samples: &[S], class_of: impl Fn(&S) -> usize, rng: &mut R) -> Vec<S> {
    let classes: Vec<usize> = samples.iter().map(class_of).collect();
    balanced_subsample_indices(&classes, rng)
        .into_iter()
        .map(|i| samples[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minority_count_per_class() {
        let classes: Vec<usize> = [vec![0; 10], vec![1; 4], vec![2; 7]].concat();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let idx = balanced_subsample_indices(&classes, &mut rng);
        assert_eq!(idx.len(), 12);
        for c in 0..3 {
            assert_eq!(idx.iter().filter(|&&i| classes[i] == c).count(), 4);
        }
    }

    #[test]
    fn balanced_and_single_class_inputs_are_kept() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let items = vec!["a", "b", "c", "d"];
        assert_eq!(balanced_subsample(&items, |s| (*s == "a" || *s == "b") as usize, &mut rng), items);
        assert_eq!(balanced_subsample(&items, |_| 3, &mut rng), items);
        assert!(balanced_subsample::<&str, _>(&[], |_| 0, &mut rng).is_empty());
    }
}
