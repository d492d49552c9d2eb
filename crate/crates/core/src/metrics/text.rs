use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// NFC form with whitespace runs collapsed to single spaces and trimmed.
pub fn normalize_text(s: &str) -> String {
    let nfc: String = s.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn nfc_chars(s: &str) -> Vec<char> {
    s.nfc().collect()
}

/// Levenshtein distance over NFC characters with unit costs.
pub fn edit_distance(hyp: &str, reference: &str) -> usize {
    levenshtein(&nfc_chars(hyp), &nfc_chars(reference))
}

pub(crate) fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `edit_distance / len(reference)` in NFC characters.
pub fn char_error_rate(hyp: &str, reference: &str) -> Result<f64> {
    let r = nfc_chars(reference);
    if r.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(levenshtein(&nfc_chars(hyp), &r) as f64 / r.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Full-table recursion-free DP, written independently of `levenshtein`.
    fn oracle(a: &[char], b: &[char]) -> usize {
        let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in t.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            t[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let c = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                t[i][j] = (t[i - 1][j - 1] + c).min(t[i - 1][j] + 1).min(t[i][j - 1] + 1);
            }
        }
        t[a.len()][b.len()]
    }

    #[test]
    fn examples() {
        assert_eq!(edit_distance("abc", "abc"), 0);
        assert_eq!(char_error_rate("abc", "abc").unwrap(), 0.0);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(char_error_rate("", "abc").unwrap(), 1.0);
        assert!(matches!(char_error_rate("x", ""), Err(Error::EmptyReference)));
        assert_eq!(edit_distance("def\nabc", "abc\ndef"), 6);
    }

    #[test]
    fn nfc_equates_composed_forms() {
        assert_eq!(edit_distance("e\u{301}", "\u{e9}"), 0);
        assert_eq!(normalize_text("  A \n\t B  "), "A B");
    }

    proptest! {
        #[test]
        fn matches_oracle(a in "[a-c]{0,8}", b in "[a-c]{0,8}") {
            let (ca, cb): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
            prop_assert_eq!(edit_distance(&a, &b), oracle(&ca, &cb));
        }

        #[test]
        fn is_a_metric(a in "[ab]{0,6}", b in "[ab]{0,6}", c in "[ab]{0,6}") {
            prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
            prop_assert_eq!(edit_distance(&a, &a), 0);
            prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
            if a != b { prop_assert!(edit_distance(&a, &b) > 0); }
        }
    }
}
