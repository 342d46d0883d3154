//! Reference models used by the simulation experiments.

use crate::sequences::{Alphabet, VlmcModel};

/// Binary chain of order 3 with five contexts:
///
/// ```text
///            e
///          /   \
///        0       1  (0.40, 0.60)
///      /   \
///    00     10
///   /  \   /  \
/// 000 100 010 110
/// ```
///
/// Paths are written oldest symbol first; probabilities are for `(0, 1)`.
pub fn order3_binary() -> VlmcModel {
    VlmcModel::from_paths(
        Alphabet::new(["0", "1"]).expect("binary alphabet"),
        &[
            ("1", &[0.40, 0.60]),
            ("000", &[0.80, 0.20]),
            ("100", &[0.30, 0.70]),
            ("010", &[0.20, 0.80]),
            ("110", &[0.65, 0.35]),
        ],
    )
    .expect("reference model is valid")
}

/// Two-state order-1 chain with rows `p(·|0)` and `p(·|1)`.
pub fn order1_binary(row0: [f64; 2], row1: [f64; 2]) -> VlmcModel {
    VlmcModel::from_paths(
        Alphabet::new(["0", "1"]).expect("binary alphabet"),
        &[("0", &row0), ("1", &row1)],
    )
    .expect("order-1 model is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_tree_shape() {
        let m = order3_binary();
        assert_eq!(m.depth(), 3);
        assert_eq!(m.leaves().len(), 5);
        assert_eq!(m.nodes().len(), 9);
        let pis = m.leaf_pi(&m.stationary().unwrap()).unwrap();
        assert!(pis.iter().all(|&p| p > 0.05));
    }
}
