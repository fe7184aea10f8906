use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub test_subject: String,
    pub train_subjects: Vec<String>,
}

/// One fold per distinct subject, in sorted subject order.
pub fn loso_folds<S: AsRef<str>>(subjects: &[S]) -> Result<Vec<Fold>> {
    let mut ids: Vec<String> = subjects.iter().map(|s| s.as_ref().to_string()).collect();
    ids.sort();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::usage(format!("leave-one-subject-out needs at least 2 subjects, got {}", ids.len())));
    }
    Ok(ids
        .iter()
        .map(|test| Fold {
            test_subject: test.clone(),
            train_subjects: ids.iter().filter(|s| *s != test).cloned().collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn thirty_subjects() {
        let ids: Vec<String> = (0..30).map(|i| format!("S{i:02}")).collect();
        let folds = loso_folds(&ids).unwrap();
        assert_eq!(folds.len(), 30);
        let tests: BTreeSet<_> = folds.iter().map(|f| f.test_subject.clone()).collect();
        assert_eq!(tests.len(), 30);
        for f in &folds {
            assert_eq!(f.train_subjects.len(), 29);
            assert!(!f.train_subjects.contains(&f.test_subject));
        }
    }

    #[test]
    fn too_few() {
        assert!(loso_folds(&["A"]).is_err());
        assert!(loso_folds(&["A", "A"]).is_err());
        assert_eq!(loso_folds(&["B", "A"]).unwrap()[0].test_subject, "A");
    }
}
