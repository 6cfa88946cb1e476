use rand::seq::SliceRandom;
use rand::seq::index;

use super::matrix::Response;
use crate::error::{Error, Result};
use crate::rng;

/// Disjoint train / validation / test student indices, each sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudentSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Part sizes by largest remainder, so every part is within one of
/// `ratio · n` and the sizes add up to `n`.
fn part_sizes(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = (e + 1e-9).floor() as usize;
    }
    let mut rest = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - sizes[a] as f64;
        let fb = exact[b] - sizes[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        sizes[k] += 1;
        rest -= 1;
    }
    sizes
}

/// Seeded shuffle of `0..n_students` partitioned by `ratios` (train,
/// validation, test).
pub fn split_students(n_students: usize, ratios: [f64; 3], seed: u64) -> Result<StudentSplit> {
    if ratios.iter().any(|r| r.is_nan() || *r <= 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios must be positive and sum to 1, got {ratios:?}")));
    }
    let [a, b, c] = part_sizes(n_students, &ratios);
    for (size, name) in [(a, "train"), (b, "validation"), (c, "test")] {
        if size == 0 {
            return Err(Error::EmptySplit(name));
        }
    }
    let mut order: Vec<usize> = (0..n_students).collect();
    order.shuffle(&mut rng::stream(seed, rng::SPLIT));
    let mut train = order[..a].to_vec();
    let mut validation = order[a..a + b].to_vec();
    let mut test = order[a + b..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(StudentSplit { train, validation, test })
}

/// Split a student's row into `(conditioning, targets)`.
///
/// The target count is `max(1, round(fraction · len))`. Both parts come back
/// sorted by question index.
pub fn hold_out_targets(row: &[Response], fraction: f64, seed: u64) -> Result<(Vec<Response>, Vec<Response>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("target fraction must lie in (0, 1), got {fraction}")));
    }
    if row.is_empty() {
        return Err(Error::invalid("cannot hold out targets from an empty row"));
    }
    let n = row.len();
    let k = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut is_target = vec![false; n];
    for t in index::sample(&mut rng::stream(seed, rng::HOLDOUT), n, k) {
        is_target[t] = true;
    }
    let (mut targets, mut cond) = (Vec::with_capacity(k), Vec::with_capacity(n - k));
    for (r, t) in row.iter().zip(is_target) {
        if t {
            targets.push(*r);
        } else {
            cond.push(*r);
        }
    }
    Ok((cond, targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_students_eighty_ten_ten() {
        let s = split_students(10, [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn hundred_students_half_quarter_quarter() {
        let s = split_students(100, [0.5, 0.25, 0.25], 9).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (50, 25, 25));
    }

    #[test]
    fn deterministic() {
        assert_eq!(split_students(57, [0.8, 0.1, 0.1], 4).unwrap(), split_students(57, [0.8, 0.1, 0.1], 4).unwrap());
        assert_ne!(split_students(57, [0.8, 0.1, 0.1], 4).unwrap(), split_students(57, [0.8, 0.1, 0.1], 5).unwrap());
    }

    #[test]
    fn empty_part_is_error() {
        assert!(matches!(split_students(5, [0.8, 0.1, 0.1], 0), Err(Error::EmptySplit(_))));
        assert!(split_students(10, [1.0, 0.0, 0.0], 0).is_err());
    }

    fn row(n: usize) -> Vec<Response> {
        (0..n).map(|j| Response::new(j * 2, (j % 2) as u8)).collect()
    }

    #[test]
    fn holdout_sizes() {
        let (c, t) = hold_out_targets(&row(20), 0.1, 1).unwrap();
        assert_eq!((c.len(), t.len()), (18, 2));
        let (c, t) = hold_out_targets(&row(2), 0.5, 1).unwrap();
        assert_eq!((c.len(), t.len()), (1, 1));
        let (c, t) = hold_out_targets(&row(1), 0.1, 1).unwrap();
        assert_eq!((c.len(), t.len()), (0, 1));
    }

    proptest! {
        #[test]
        fn split_is_partition(n in 10usize..400, seed in any::<u64>()) {
            let s = split_students(n, [0.8, 0.1, 0.1], seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            for (part, ratio) in [(&s.train, 0.8), (&s.validation, 0.1), (&s.test, 0.1)] {
                prop_assert!((part.len() as f64 - ratio * n as f64).abs() <= 1.0);
            }
        }

        #[test]
        fn holdout_is_partition(n in 1usize..80, frac in 0.01f64..0.99, seed in any::<u64>()) {
            let r = row(n);
            let (c, t) = hold_out_targets(&r, frac, seed).unwrap();
            let mut all: Vec<Response> = c.iter().chain(&t).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, r);
            prop_assert_eq!(t.len(), ((frac * n as f64).round() as usize).clamp(1, n));
        }
    }
}
