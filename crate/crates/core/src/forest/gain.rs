//! Shannon entropy and information-gain split objectives.

use crate::error::{Error, Result};

/// Shannon entropy in bits of an (unnormalized) class histogram.
pub fn entropy(histogram: &[f64]) -> Result<f64> {
    let total: f64 = histogram.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyNode);
    }
    Ok(histogram
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum())
}

/// Entropy of integer class counts summing to `total`.
pub(crate) fn entropy_counts(counts: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// `E(node) - sum_p |p|/|node| E(p)` from count histograms.
pub(crate) fn gain_counts(node: &[u32], left: &[u32], n_left: u32, n_right: u32) -> f64 {
    let n = n_left + n_right;
    let right: Vec<u32> = node.iter().zip(left).map(|(a, b)| a - b).collect();
    let parent = entropy_counts(node, n);
    let wl = n_left as f64 / n as f64;
    let wr = n_right as f64 / n as f64;
    parent - wl * entropy_counts(left, n_left) - wr * entropy_counts(&right, n_right)
}

fn histogram_of(labels: &[usize], classes: usize) -> Vec<u32> {
    let mut h = vec![0u32; classes];
    for &l in labels {
        h[l] += 1;
    }
    h
}

/// Expected information gain of splitting `node` into `left` and `right`.
///
/// Label sets are multisets of class indices; `left` and `right` must
/// partition `node`.
pub fn information_gain(node: &[usize], left: &[usize], right: &[usize]) -> Result<f64> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::DegenerateSplit);
    }
    if left.len() + right.len() != node.len() {
        return Err(Error::DimensionMismatch {
            expected: node.len(),
            found: left.len() + right.len(),
        });
    }
    let classes = node.iter().chain(left).chain(right).max().unwrap() + 1;
    let hn = histogram_of(node, classes);
    let hl = histogram_of(left, classes);
    let hr = histogram_of(right, classes);
    if hn.iter().zip(&hl).zip(&hr).any(|((n, l), r)| l + r != *n) {
        return Err(Error::InvalidConfig(
            "left and right labels do not partition the node".into(),
        ));
    }
    Ok(gain_counts(&hn, &hl, left.len() as u32, right.len() as u32))
}

/// Joint coarse+fine gain: the information gain on coarse labels plus the
/// gain on fine labels. Labels are `(coarse, fine)` pairs.
pub fn cofi_gain(
    node: &[(usize, usize)],
    left: &[(usize, usize)],
    right: &[(usize, usize)],
) -> Result<f64> {
    let coarse = |s: &[(usize, usize)]| s.iter().map(|l| l.0).collect::<Vec<_>>();
    let fine = |s: &[(usize, usize)]| s.iter().map(|l| l.1).collect::<Vec<_>>();
    let gc = information_gain(&coarse(node), &coarse(left), &coarse(right))?;
    let gf = information_gain(&fine(node), &fine(left), &fine(right))?;
    Ok(gc + gf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(entropy(&[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(entropy(&[0.25; 4]).unwrap(), 2.0);
        // unnormalized input
        assert_eq!(entropy(&[3.0, 3.0]).unwrap(), 1.0);
        assert!(matches!(entropy(&[0.0, 0.0]), Err(Error::EmptyNode)));
    }

    #[test]
    fn gain_examples() {
        let (a, b) = (0, 1);
        assert_eq!(information_gain(&[a, a, b, b], &[a, a], &[b, b]).unwrap(), 1.0);
        assert!(close(
            information_gain(&[a, a, b, b], &[a, b], &[a, b]).unwrap(),
            0.0,
            1e-15
        ));
        // E([3/4,1/4]) = 0.811278..., children: 0 and 1 bit, half weight each
        let g = information_gain(&[a, a, a, b], &[a, a], &[a, b]).unwrap();
        let oracle = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2()) - 0.5;
        assert!(close(g, oracle, 1e-12));
        assert!(close(g, 0.3113, 1e-4));
    }

    #[test]
    fn degenerate_split_rejected() {
        assert!(matches!(
            information_gain(&[0, 1], &[], &[0, 1]),
            Err(Error::DegenerateSplit)
        ));
        assert!(information_gain(&[0, 1], &[0], &[0]).is_err());
    }

    #[test]
    fn cofi_examples() {
        // constant coarse label: total gain is the fine gain
        let node = [(7, 0), (7, 0), (7, 1), (7, 1)];
        let g = cofi_gain(&node, &node[..2], &node[2..]).unwrap();
        assert_eq!(g, information_gain(&[0, 0, 1, 1], &[0, 0], &[1, 1]).unwrap());
    }

    #[test]
    fn cofi_example_with_coarse_pure_children() {
        // coarse [X,X,Y,Y], fine [a,b,c,d]; split {X:a, X:b} | {Y:c, Y:d}
        let node = [(0, 0), (0, 1), (1, 2), (1, 3)];
        let coarse = information_gain(&[0, 0, 1, 1], &[0, 0], &[1, 1]).unwrap();
        let fine = information_gain(&[0, 1, 2, 3], &[0, 1], &[2, 3]).unwrap();
        assert_eq!(coarse, 1.0);
        // fine: E = 2 bits at the node, 1 bit in each child
        assert_eq!(fine, 1.0);
        assert_eq!(cofi_gain(&node, &node[..2], &node[2..]).unwrap(), coarse + fine);
    }
}
