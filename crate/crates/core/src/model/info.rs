use serde::{Deserialize, Serialize};

use super::catalog::AffineMap;

/// Box and node counts of an information-variable grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nodes: Vec<usize>,
}

/// The information process `y_t` the price is conditioned on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InformationSpec {
    /// No information: the price is its stage expectation.
    #[default]
    Constant,
    /// `y_t = B w_t + c`.
    Noise { map: AffineMap },
    /// `y_0 = initial(w_0)`, `y_t = A y_{t-1} + B w_t + c`, with one grid per stage.
    Markovian { initial: AffineMap, transition: AffineMap, grids: Vec<InfoGrid> },
}

impl InformationSpec {
    pub fn dim(&self) -> usize {
        match self {
            InformationSpec::Constant => 0,
            InformationSpec::Noise { map } => map.dim(),
            InformationSpec::Markovian { initial, .. } => initial.dim(),
        }
    }

    pub fn is_markovian(&self) -> bool {
        matches!(self, InformationSpec::Markovian { .. })
    }

    /// `y_t` given the previous value (Markovian mode only) and `w_t`.
    pub fn value(&self, t: usize, prev: Option<&[f64]>, w: &[f64]) -> Vec<f64> {
        match self {
            InformationSpec::Constant => Vec::new(),
            InformationSpec::Noise { map } => map.eval(None, w),
            InformationSpec::Markovian { initial, transition, .. } => {
                if t == 0 {
                    initial.eval(None, w)
                } else {
                    transition.eval(prev, w)
                }
            }
        }
    }

    /// Information values `y_0..y_{T-1}` along one noise path.
    pub fn path(&self, noises: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(noises.len());
        for (t, w) in noises.iter().enumerate() {
            let prev = if t == 0 { None } else { Some(out[t - 1].as_slice()) };
            let y = self.value(t, prev, w);
            out.push(y);
        }
        out
    }

    /// Noise coordinates the information depends on.
    pub fn noise_support(&self) -> Vec<usize> {
        let mut coords = match self {
            InformationSpec::Constant => Vec::new(),
            InformationSpec::Noise { map } => map.noise_support(),
            InformationSpec::Markovian { initial, transition, .. } => {
                let mut c = initial.noise_support();
                c.extend(transition.noise_support());
                c
            }
        };
        coords.sort_unstable();
        coords.dedup();
        coords
    }

    pub fn errors(&self, horizon: usize, noise_dim: usize) -> Vec<String> {
        let mut errs = Vec::new();
        let check_map = |name: &str, m: &AffineMap, dim: usize, errs: &mut Vec<String>| {
            if !m.b.has_shape(dim, noise_dim) && !(dim == 0 && m.b.rows() == 0) {
                errs.push(format!("{name} noise matrix must be {dim}x{noise_dim}"));
            }
            if m.c.as_ref().is_some_and(|c| c.len() != dim) {
                errs.push(format!("{name} offset must have length {dim}"));
            }
        };
        match self {
            InformationSpec::Constant => {}
            InformationSpec::Noise { map } => check_map("information map", map, map.dim(), &mut errs),
            InformationSpec::Markovian { initial, transition, grids } => {
                let dim = initial.dim();
                check_map("initial information map", initial, dim, &mut errs);
                check_map("information transition", transition, dim, &mut errs);
                if transition.a.as_ref().is_some_and(|a| !a.has_shape(dim, dim)) {
                    errs.push(format!("information transition matrix a must be {dim}x{dim}"));
                }
                if grids.len() != horizon {
                    errs.push(format!("markovian information needs {horizon} grids, got {}", grids.len()));
                }
                for (t, g) in grids.iter().enumerate() {
                    if g.lower.len() != dim || g.upper.len() != dim || g.nodes.len() != dim {
                        errs.push(format!("information grid {t} must have dimension {dim}"));
                    } else if g.lower.iter().zip(&g.upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite())
                    {
                        errs.push(format!("information grid {t} has an invalid box"));
                    } else if g.nodes.iter().zip(g.lower.iter().zip(&g.upper)).any(|(&n, (l, u))| n == 0 || (n == 1 && l != u))
                    {
                        errs.push(format!("information grid {t} has invalid node counts"));
                    }
                }
            }
        }
        errs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Matrix;

    #[test]
    fn markovian_path_encodes_prefix() {
        // y_0 = w, y_t = 2 y_{t-1} + w with w in {0, 1}
        let info = InformationSpec::Markovian {
            initial: AffineMap { a: None, b: Matrix::identity(1), c: None },
            transition: AffineMap {
                a: Some(Matrix::from_rows(&[vec![2.0]]).unwrap()),
                b: Matrix::identity(1),
                c: None,
            },
            grids: vec![],
        };
        let ys = info.path(&[vec![1.0], vec![0.0], vec![1.0]]);
        assert_eq!(ys, vec![vec![1.0], vec![2.0], vec![5.0]]);
        assert_eq!(info.noise_support(), vec![0]);
    }

    #[test]
    fn serde_uses_mode_tag() {
        let info: InformationSpec = serde_json::from_str(r#"{"mode": "noise", "map": {"b": [[1.0, 0.0]]}}"#).unwrap();
        assert_eq!(info.value(0, None, &[3.0, 9.0]), vec![3.0]);
        let c: InformationSpec = serde_json::from_str(r#"{"mode": "constant"}"#).unwrap();
        assert_eq!(c.dim(), 0);
    }
}
