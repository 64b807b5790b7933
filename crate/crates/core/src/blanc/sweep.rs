use super::{BlancConfig, BlancError};

/// Model recommended for German: cased dbmdz BERT.
pub const RECOMMENDED_MODEL: &str = "bert-base-german-dbmdz-cased";

pub const GAP_GRID: [usize; 2] = [2, 6];
pub const L_NORMAL_GRID: [usize; 3] = [4, 5, 6];
pub const L_LEAD_GRID: [usize; 2] = [1, 2];
/// 1 lets every continuation piece be masked, 100 blocks them all.
pub const L_FOLLOW_GRID: [usize; 2] = [1, 100];

/// The 24 parameter choices for each model, in model-major order.
pub fn sweep_grid<S: AsRef<str>>(models: &[S]) -> Result<Vec<BlancConfig>, BlancError> {
    if models.is_empty() {
        return Err(BlancError::InvalidConfig("sweep needs at least one model".into()));
    }
    let mut out = Vec::with_capacity(models.len() * 24);
    for model in models {
        for gap in GAP_GRID {
            for l_normal in L_NORMAL_GRID {
                for l_lead in L_LEAD_GRID {
                    for l_follow in L_FOLLOW_GRID {
                        out.push(BlancConfig::new(model.as_ref(), gap, l_normal, l_lead, l_follow)?);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::GERMAN_MODELS;
    use std::collections::HashSet;

    #[test]
    fn grid_sizes() {
        assert_eq!(sweep_grid(&GERMAN_MODELS).unwrap().len(), 72);
        assert_eq!(sweep_grid(&[RECOMMENDED_MODEL]).unwrap().len(), 24);
        assert!(sweep_grid::<&str>(&[]).is_err());
    }

    #[test]
    fn grid_names_unique_and_ordered() {
        let grid = sweep_grid(&GERMAN_MODELS).unwrap();
        let names: HashSet<_> = grid.iter().map(BlancConfig::name).collect();
        assert_eq!(names.len(), 72);
        assert_eq!(grid, sweep_grid(&GERMAN_MODELS).unwrap());
        assert_eq!(grid[0].model_id, GERMAN_MODELS[0]);
        assert!(grid.iter().any(|c| c.name() == "B_L4_Ll2_Lf1"));
    }
}
