use super::{ngram_counts, words, PrfScore};

/// Clipped n-gram overlap. A candidate shorter than `n` words scores zero.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> PrfScore {
    rouge_n_tokens(&words(candidate), &words(reference), n)
}

pub(crate) fn rouge_n_tokens<T: AsRef<str>>(cand: &[T], refr: &[T], n: usize) -> PrfScore {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(refr, n);
    let overlap: usize = c
        .iter()
        .map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    PrfScore::from_overlap(overlap, c.values().sum(), r.values().sum())
}

/// Longest common subsequence over the word sequences of both texts.
pub fn rouge_l(candidate: &str, reference: &str) -> PrfScore {
    rouge_l_tokens(&words(candidate), &words(reference))
}

pub(crate) fn rouge_l_tokens<T: AsRef<str>>(cand: &[T], refr: &[T]) -> PrfScore {
    PrfScore::from_overlap(lcs_len(cand, refr), cand.len(), refr.len())
}

fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn best_of(scores: impl Iterator<Item = PrfScore>) -> Option<PrfScore> {
    scores.fold(None, |best: Option<PrfScore>, s| match best {
        Some(b) if b.f1 >= s.f1 => Some(b),
        _ => Some(s),
    })
}

/// Best (by F1) ROUGE-N over several references; `None` without references.
pub fn rouge_n_multi<S: AsRef<str>>(candidate: &str, references: &[S], n: usize) -> Option<PrfScore> {
    best_of(references.iter().map(|r| rouge_n(candidate, r.as_ref(), n)))
}

pub fn rouge_l_multi<S: AsRef<str>>(candidate: &str, references: &[S]) -> Option<PrfScore> {
    best_of(references.iter().map(|r| rouge_l(candidate, r.as_ref())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn identical_is_one() {
        let t = "Der Router blinkt rot und grün";
        for n in 1..=3 {
            assert_eq!(rouge_n(t, t, n), PrfScore::new(1.0, 1.0));
        }
        assert_eq!(rouge_l(t, t), PrfScore::new(1.0, 1.0));
    }

    #[test]
    fn unigram_hand_case() {
        let s = rouge_n("a b c", "a b d", 1);
        assert!(close(s.precision, 2.0 / 3.0));
        assert!(close(s.recall, 2.0 / 3.0));
        assert!(close(s.f1, 2.0 / 3.0));
    }

    #[test]
    fn disjoint_and_short() {
        assert_eq!(rouge_n("a b", "c d", 2), PrfScore::default());
        assert_eq!(rouge_n("a", "a b", 2), PrfScore::default());
        assert_eq!(rouge_l("a b", "c d"), PrfScore::default());
    }

    #[test]
    fn clipping() {
        // candidate repeats "a" three times, reference has it once
        let s = rouge_n("a a a", "a b", 1);
        assert!(close(s.precision, 1.0 / 3.0));
        assert!(close(s.recall, 0.5));
    }

    #[test]
    fn lcs_hand_case() {
        let s = rouge_l("a b c d", "a c b d");
        assert!(close(s.precision, 0.75));
        assert!(close(s.recall, 0.75));
    }

    #[test]
    fn multi_reference_takes_best() {
        let refs = ["x y z", "a b c"];
        assert_eq!(rouge_n_multi("a b c", &refs, 1).unwrap().f1, 1.0);
        assert!(rouge_l_multi::<&str>("a", &[]).is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn text() -> impl Strategy<Value = String> {
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 1..10)
                .prop_map(|v| v.join(" "))
        }

        proptest! {
            #[test]
            fn swap_exchanges_precision_and_recall(a in text(), b in text(), n in 1usize..4) {
                let ab = rouge_n(&a, &b, n);
                let ba = rouge_n(&b, &a, n);
                prop_assert_eq!(ab.precision, ba.recall);
                prop_assert_eq!(ab.recall, ba.precision);
                let ab = rouge_l(&a, &b);
                let ba = rouge_l(&b, &a);
                prop_assert_eq!(ab.precision, ba.recall);
                prop_assert_eq!(ab.recall, ba.precision);
            }

            #[test]
            fn whitespace_invariant(a in text(), b in text()) {
                let spaced = a.replace(' ', " \n\t ");
                prop_assert_eq!(rouge_n(&a, &b, 2), rouge_n(&spaced, &b, 2));
                prop_assert_eq!(rouge_l(&a, &b), rouge_l(&spaced, &b));
            }
        }
    }
}
