use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Test,
}

/// Supervised (window, target-block) pairs over a normalized slice.
///
/// Window `j` reads `z[j .. j+k)` and its target block is
/// `z[j+k .. j+k+h)`, so `N = len - k - h + 1`.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    past_history: usize,
    forward_look: usize,
    split: SplitTag,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input(&self, j: usize) -> &[f64] {
        &self.inputs[j]
    }

    pub fn target(&self, j: usize) -> &[f64] {
        &self.targets[j]
    }

    pub fn past_history(&self) -> usize {
        self.past_history
    }

    pub fn forward_look(&self) -> usize {
        self.forward_look
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }
}

/// Build all sliding windows over one contiguous normalized slice.
pub fn make_windows(
    slice: &[f64],
    past_history: usize,
    forward_look: usize,
    split: SplitTag,
) -> Result<WindowedDataset> {
    let needed = past_history + forward_look;
    if slice.len() < needed {
        return Err(Error::InsufficientData(format!(
            "slice of {} points cannot fit one window of {past_history}+{forward_look}",
            slice.len()
        )));
    }
    let count = slice.len() - needed + 1;
    let mut inputs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for j in 0..count {
        inputs.push(slice[j..j + past_history].to_vec());
        targets.push(slice[j + past_history..j + needed].to_vec());
    }
    Ok(WindowedDataset { inputs, targets, past_history, forward_look, split })
}

/// First index of the test slice: `floor(ratio * len)`.
pub fn split_point(len: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} outside (0, 1)")));
    }
    Ok((ratio * len as f64).floor() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_formula_hand_cases() {
        let z: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ds = make_windows(&z, 3, 1, SplitTag::Train).unwrap();
        assert_eq!(ds.len(), 7);
        assert_eq!(ds.input(0), &[0.0, 1.0, 2.0]);
        assert_eq!(ds.target(0), &[3.0]);
        assert_eq!(ds.input(6), &[6.0, 7.0, 8.0]);
        assert_eq!(ds.target(6), &[9.0]);
    }

    #[test]
    fn year_of_daily_closes_with_default_window() {
        let z = vec![0.0; 252];
        let ds = make_windows(&z, 60, 1, SplitTag::Train).unwrap();
        assert_eq!(ds.len(), 192);
    }

    #[test]
    fn oversized_horizon_is_insufficient() {
        let z = vec![0.0; 10];
        assert!(matches!(
            make_windows(&z, 3, 10, SplitTag::Train),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn split_point_floor_rule() {
        assert_eq!(split_point(100, 0.8).unwrap(), 80);
        assert_eq!(split_point(101, 0.8).unwrap(), 80);
        assert!(split_point(100, 1.0).is_err());
        assert!(split_point(100, 0.0).is_err());
    }
}
