use serde::{Deserialize, Serialize};

/// Finite-support distribution of one stage's noise vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageDistribution {
    pub points: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
}

impl StageDistribution {
    pub fn degenerate(point: Vec<f64>) -> Self {
        StageDistribution { points: vec![point], probabilities: vec![1.0] }
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Self {
        let p = 1.0 / points.len() as f64;
        let probabilities = vec![p; points.len()];
        StageDistribution { points, probabilities }
    }

    /// Product of independent scalar marginals `(values, probabilities)`,
    /// one per noise coordinate. The last coordinate varies fastest.
    pub fn product(marginals: &[(Vec<f64>, Vec<f64>)]) -> Self {
        let mut points = vec![Vec::new()];
        let mut probabilities = vec![1.0];
        for (values, probs) in marginals {
            let mut next_points = Vec::with_capacity(points.len() * values.len());
            let mut next_probs = Vec::with_capacity(points.len() * values.len());
            for (pt, p) in points.iter().zip(&probabilities) {
                for (v, q) in values.iter().zip(probs) {
                    let mut np = pt.clone();
                    np.push(*v);
                    next_points.push(np);
                    next_probs.push(p * q);
                }
            }
            points = next_points;
            probabilities = next_probs;
        }
        StageDistribution { points, probabilities }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Probability-weighted mean of each coordinate.
    pub fn mean(&self) -> Vec<f64> {
        let dim = self.points.first().map_or(0, Vec::len);
        let mut m = vec![0.0; dim];
        for (pt, p) in self.points.iter().zip(&self.probabilities) {
            for (mi, v) in m.iter_mut().zip(pt) {
                *mi += p * v;
            }
        }
        m
    }

    /// Merges support points that agree on `coords`, summing probabilities.
    /// Zero-probability points are dropped; the first full point of each
    /// class is kept as its representative, in first-appearance order.
    pub fn marginalize(&self, coords: &[usize]) -> Vec<(Vec<f64>, f64)> {
        let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut keys: Vec<Vec<f64>> = Vec::new();
        for (pt, &p) in self.points.iter().zip(&self.probabilities) {
            if p == 0.0 {
                continue;
            }
            let key: Vec<f64> = coords.iter().map(|&c| pt[c]).collect();
            match keys.iter().position(|k| *k == key) {
                Some(i) => out[i].1 += p,
                None => {
                    keys.push(key);
                    out.push((pt.clone(), p));
                }
            }
        }
        out
    }
}

/// Which subsystem a noise coordinate belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseClass {
    Global,
    Local(usize),
}

/// Stage-wise independent finite-support noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub stages: Vec<StageDistribution>,
    pub partition: Vec<NoiseClass>,
}

impl NoiseModel {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn dim(&self) -> usize {
        self.partition.len()
    }

    pub fn stage(&self, t: usize) -> &StageDistribution {
        &self.stages[t]
    }

    /// Number of root-to-leaf paths of the scenario tree.
    pub fn path_count(&self) -> f64 {
        self.stages.iter().map(|s| s.len() as f64).product()
    }

    pub fn errors(&self) -> Vec<(Option<usize>, String)> {
        let mut errs = Vec::new();
        let q = self.dim();
        for (t, st) in self.stages.iter().enumerate() {
            if st.points.is_empty() {
                errs.push((Some(t), "noise support is empty".to_string()));
                continue;
            }
            if st.points.len() != st.probabilities.len() {
                errs.push((Some(t), "noise points and probabilities differ in length".into()));
            }
            if st.points.iter().any(|p| p.len() != q) {
                errs.push((Some(t), format!("noise points must have dimension {q}")));
            }
            if st.points.iter().flatten().any(|v| !v.is_finite()) {
                errs.push((Some(t), "noise point is not finite".into()));
            }
            if st.probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                errs.push((Some(t), "negative or non-finite probability".into()));
            }
            let total: f64 = st.probabilities.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                errs.push((Some(t), format!("probabilities sum to {total}, not 1")));
            }
        }
        errs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_orders_last_coordinate_fastest() {
        let st = StageDistribution::product(&[
            (vec![0.0, 1.0], vec![0.25, 0.75]),
            (vec![5.0, 6.0], vec![0.5, 0.5]),
        ]);
        assert_eq!(st.points, vec![vec![0.0, 5.0], vec![0.0, 6.0], vec![1.0, 5.0], vec![1.0, 6.0]]);
        assert_eq!(st.probabilities, vec![0.125, 0.125, 0.375, 0.375]);
        assert_eq!(st.mean(), vec![0.75, 5.5]);
    }

    #[test]
    fn marginalize_merges_in_first_appearance_order() {
        let st = StageDistribution {
            points: vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![1.0, 1.0], vec![3.0, 1.0]],
            probabilities: vec![0.25, 0.25, 0.5, 0.0],
        };
        let m = st.marginalize(&[0]);
        assert_eq!(m, vec![(vec![1.0, 0.0], 0.75), (vec![2.0, 0.0], 0.25)]);
        assert_eq!(st.marginalize(&[]).len(), 1);
    }

    #[test]
    fn partition_serializes_compactly() {
        let s = serde_json::to_string(&vec![NoiseClass::Global, NoiseClass::Local(1)]).unwrap();
        assert_eq!(s, r#"["global",{"local":1}]"#);
    }
}
