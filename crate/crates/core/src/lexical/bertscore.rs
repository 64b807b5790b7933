use crate::backend::{BackendError, MaskedLm};

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Greedy cosine matching without IDF weighting.
///
/// Precision averages each candidate vector's best match among the
/// reference vectors, recall the other way round. Returns `(P, R, F)`.
pub fn greedy_match(candidate: &[Vec<f64>], reference: &[Vec<f64>]) -> (f64, f64, f64) {
    if candidate.is_empty() || reference.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let sim: Vec<Vec<f64>> = candidate
        .iter()
        .map(|c| reference.iter().map(|r| cosine(c, r)).collect())
        .collect();
    let precision = sim
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / candidate.len() as f64;
    let recall = (0..reference.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / reference.len() as f64;
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f)
}

/// BERTScore F over backend token embeddings.
pub fn bertscore_f(
    candidate: &str,
    reference: &str,
    backend: &dyn MaskedLm,
    model_id: &str,
) -> Result<f64, BackendError> {
    let c = backend.embed_tokens(candidate, model_id)?;
    let r = backend.embed_tokens(reference, model_id)?;
    Ok(greedy_match(&c, &r).2)
}

/// Best F over several references; `Ok(None)` without references.
pub fn bertscore_multi<S: AsRef<str>>(
    candidate: &str,
    references: &[S],
    backend: &dyn MaskedLm,
    model_id: &str,
) -> Result<Option<f64>, BackendError> {
    if references.is_empty() {
        return Ok(None);
    }
    let c = backend.embed_tokens(candidate, model_id)?;
    let mut best = f64::NEG_INFINITY;
    for r in references {
        let r = backend.embed_tokens(r.as_ref(), model_id)?;
        best = best.max(greedy_match(&c, &r).2);
    }
    Ok(Some(best))
}
