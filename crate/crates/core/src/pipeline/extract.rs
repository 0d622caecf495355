use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

fn labels(pc: &PointCloud) -> Result<&[u32]> {
    pc.labels
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("cloud carries no labels".into()))
}

/// Points labelled `level`, colors and labels preserved; `None` when the
/// level does not occur.
pub fn extract_vertebra(labeled: &PointCloud, level: u32) -> Result<Option<PointCloud>> {
    let idx: Vec<usize> = labels(labeled)?
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == level)
        .map(|(i, _)| i)
        .collect();
    Ok((!idx.is_empty()).then(|| labeled.select(&idx)))
}

/// Non-background levels present in the cloud, ascending.
pub fn levels_present(labeled: &PointCloud) -> Result<BTreeSet<u32>> {
    Ok(labels(labeled)?.iter().copied().filter(|&l| l != 0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selects_level_and_flags_absent() {
        let pc = PointCloud::new(vec![[0.0; 3], [1.0; 3], [2.0; 3]]).with_labels(vec![1, 1, 2]).unwrap();
        let l1 = extract_vertebra(&pc, 1).unwrap().unwrap();
        assert_eq!(l1.points, vec![[0.0; 3], [1.0; 3]]);
        assert_eq!(l1.labels.unwrap(), vec![1, 1]);
        assert!(extract_vertebra(&pc, 5).unwrap().is_none());
        assert!(extract_vertebra(&PointCloud::new(vec![[0.0; 3]]), 1).is_err());
        assert_eq!(levels_present(&pc).unwrap().into_iter().collect::<Vec<_>>(), vec![1, 2]);
    }
}
