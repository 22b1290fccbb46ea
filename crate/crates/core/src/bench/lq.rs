use nalgebra::{DMatrix, DVector};

use super::tree::ScenarioTree;
use crate::error::{Error, Result};
use crate::model::{Coupling, Dynamics, Matrix, ProblemSpec};

fn dense(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j))
}

fn dense_or_zero(m: &Option<Matrix>, rows: usize, cols: usize) -> DMatrix<f64> {
    m.as_ref().filter(|m| m.rows() > 0).map_or_else(|| DMatrix::zeros(rows, cols), dense)
}

/// One unit's tree problem in its stacked controls `v`:
/// `½ vᵀ H v + hᵀ v + k`, coupling `G v + g0` stacked per node.
#[derive(Clone, Debug)]
struct UnitLq {
    hess: DMatrix<f64>,
    lin: DVector<f64>,
    constant: f64,
    coupling: DMatrix<f64>,
    offset: DVector<f64>,
    control_dim: usize,
}

impl UnitLq {
    fn objective(&self, v: &DVector<f64>) -> f64 {
        0.5 * v.dot(&(&self.hess * v)) + self.lin.dot(v) + self.constant
    }
}

/// Affine-quadratic problem written on its scenario tree, ignoring bounds.
#[derive(Clone, Debug)]
pub struct TreeLq {
    pub tree: ScenarioTree,
    d: usize,
    units: Vec<UnitLq>,
}

/// Joint optimum with the coupling multiplier of every node, scaled by the
/// node probability so that it is a conditional price.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeKkt {
    pub value: f64,
    pub controls: Vec<Vec<Vec<f64>>>,
    pub multipliers: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeUzawa {
    pub multipliers: Vec<Vec<f64>>,
    pub iterations: usize,
    pub max_residual: f64,
    /// Dual function value at each iterate.
    pub duals: Vec<f64>,
}

impl TreeLq {
    pub fn build(spec: &ProblemSpec, tree: ScenarioTree) -> Result<Self> {
        let d = spec.coupling_dim();
        let q = spec.noise.dim();
        let n_nodes = tree.len();
        let units = spec
            .subsystems
            .iter()
            .enumerate()
            .map(|(i, sub)| {
                let (n, m) = (sub.state_dim, sub.control_dim);
                let vars = n_nodes * m;
                let mut hess = DMatrix::zeros(vars, vars);
                let mut lin = DVector::zeros(vars);
                let mut constant = 0.0;
                let mut coupling = DMatrix::zeros(n_nodes * d, vars);
                let mut offset = DVector::zeros(n_nodes * d);
                let mut xs: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(n_nodes);
                let not_lq = || Error::InvalidArgument(format!("subsystem {i} is not affine-quadratic"));
                let mut add_quadratic =
                    |z: &DMatrix<f64>, z0: &DVector<f64>, data: (Matrix, Vec<f64>, f64), p: f64| {
                        let qm = dense(&data.0);
                        let l = DVector::from_vec(data.1);
                        hess += p * z.transpose() * &qm * z;
                        lin += p * z.transpose() * (&qm * z0 + &l);
                        constant += p * (0.5 * z0.dot(&(&qm * z0)) + l.dot(z0) + data.2);
                    };
                for (id, node) in tree.nodes.iter().enumerate() {
                    let t = node.stage;
                    let (x, x0) = match node.parent {
                        None => (DMatrix::zeros(n, vars), DVector::from_vec(sub.initial_state.clone())),
                        Some(p) => step(sub.dynamics.at(t - 1), &xs[p], p, &tree.nodes[p].noise, m, vars),
                    };
                    let mut sel = DMatrix::zeros(m, vars);
                    for j in 0..m {
                        sel[(j, id * m + j)] = 1.0;
                    }
                    let w = DVector::from_vec(node.noise.clone());
                    let mut z = DMatrix::zeros(n + m + q, vars);
                    z.view_mut((0, 0), (n, vars)).copy_from(&x);
                    z.view_mut((n, 0), (m, vars)).copy_from(&sel);
                    let mut z0 = DVector::zeros(n + m + q);
                    z0.rows_mut(0, n).copy_from(&x0);
                    z0.rows_mut(n + m, q).copy_from(&w);
                    let data = sub.stage_cost.at(t).quadratic_data(n + m + q, &node.noise).ok_or_else(not_lq)?;
                    add_quadratic(&z, &z0, data, node.probability);
                    if let Coupling::Affine { gx, gu, gw, c } = sub.coupling.at(t) {
                        let gx = dense_or_zero(gx, d, n);
                        let gu = dense_or_zero(gu, d, m);
                        let gw = dense_or_zero(gw, d, q);
                        coupling.view_mut((id * d, 0), (d, vars)).copy_from(&(&gx * &x + &gu * &sel));
                        let mut g0 = &gx * &x0 + &gw * &w;
                        if let Some(c) = c {
                            g0 += DVector::from_column_slice(c);
                        }
                        offset.rows_mut(id * d, d).copy_from(&g0);
                    }
                    if t + 1 == tree.horizon() {
                        let (xt, xt0) = step(sub.dynamics.at(t), &(x.clone(), x0.clone()), id, &node.noise, m, vars);
                        let data = sub.final_cost.quadratic_data(n, &[]).ok_or_else(not_lq)?;
                        add_quadratic(&xt, &xt0, data, node.probability);
                    }
                    xs.push((x, x0));
                }
                Ok(UnitLq { hess, lin, constant, coupling, offset, control_dim: m })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TreeLq { tree, d, units })
    }

    fn node_weights(&self) -> DVector<f64> {
        DVector::from_iterator(self.tree.len() * self.d, self.tree.nodes.iter().flat_map(|n| std::iter::repeat_n(n.probability, self.d)))
    }

    fn unpack(&self, vs: &[DVector<f64>]) -> Vec<Vec<Vec<f64>>> {
        (0..self.tree.len())
            .map(|id| {
                self.units
                    .iter()
                    .zip(vs)
                    .map(|(u, v)| v.rows(id * u.control_dim, u.control_dim).iter().copied().collect())
                    .collect()
            })
            .collect()
    }

    fn per_node(&self, flat: &DVector<f64>) -> Vec<Vec<f64>> {
        (0..self.tree.len()).map(|id| flat.rows(id * self.d, self.d).iter().copied().collect()).collect()
    }

    /// Solves `[H Cᵀ; C 0][v; μ] = [−h; −g0]` for the whole tree.
    pub fn kkt(&self) -> Result<TreeKkt> {
        let sizes: Vec<usize> = self.units.iter().map(|u| u.lin.len()).collect();
        let nv: usize = sizes.iter().sum();
        let nc = self.tree.len() * self.d;
        let mut k = DMatrix::zeros(nv + nc, nv + nc);
        let mut rhs = DVector::zeros(nv + nc);
        let mut off = 0;
        for u in &self.units {
            let s = u.lin.len();
            k.view_mut((off, off), (s, s)).copy_from(&u.hess);
            k.view_mut((nv, off), (nc, s)).copy_from(&u.coupling);
            k.view_mut((off, nv), (s, nc)).copy_from(&u.coupling.transpose());
            rhs.rows_mut(off, s).copy_from(&(-&u.lin));
            let mut r = rhs.rows_mut(nv, nc);
            r -= &u.offset;
            off += s;
        }
        let sol = k.lu().solve(&rhs).ok_or_else(|| Error::InvalidArgument("tree KKT system is singular".into()))?;
        let mut vs = Vec::with_capacity(self.units.len());
        let mut value = 0.0;
        let mut off = 0;
        for (u, s) in self.units.iter().zip(&sizes) {
            let v = sol.rows(off, *s).into_owned();
            value += u.objective(&v);
            vs.push(v);
            off += s;
        }
        let mu = sol.rows(nv, nc).into_owned();
        let lambda = mu.component_div(&self.node_weights());
        Ok(TreeKkt { value, controls: self.unpack(&vs), multipliers: self.per_node(&lambda) })
    }

    /// Dual gradient ascent with one multiplier per tree node, each unit
    /// solved exactly: the perfect-memory price decomposition.
    pub fn uzawa(&self, step: f64, max_iterations: usize, tolerance: f64) -> Result<TreeUzawa> {
        let chols = self
            .units
            .iter()
            .enumerate()
            .map(|(i, u)| {
                u.hess.clone().cholesky().ok_or_else(|| Error::InvalidArgument(format!("subsystem {i} is not strongly convex on the tree")))
            })
            .collect::<Result<Vec<_>>>()?;
        let weights = self.node_weights();
        let mut lambda = DVector::zeros(self.tree.len() * self.d);
        let mut duals = Vec::new();
        let mut max_residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_iterations {
            let priced = lambda.component_mul(&weights);
            let mut residual = DVector::zeros(lambda.len());
            let mut dual = 0.0;
            for (u, chol) in self.units.iter().zip(&chols) {
                let v = -chol.solve(&(&u.lin + u.coupling.transpose() * &priced));
                let g = &u.coupling * &v + &u.offset;
                dual += u.objective(&v) + priced.dot(&g);
                residual += g;
            }
            duals.push(dual);
            max_residual = residual.amax();
            iterations += 1;
            if max_residual <= tolerance {
                break;
            }
            lambda += step * residual;
        }
        Ok(TreeUzawa { multipliers: self.per_node(&lambda), iterations, max_residual, duals })
    }
}

/// Affine image of `x' = A x + B u + E w + c` for the node `id`.
fn step(
    dyn_t: &Dynamics,
    (x, x0): &(DMatrix<f64>, DVector<f64>),
    id: usize,
    w: &[f64],
    m: usize,
    vars: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let Dynamics::Affine { a, b, e, c } = dyn_t;
    let n = x.nrows();
    let a = dense_or_zero(&Some(a.clone()), n, n);
    let b = dense_or_zero(&Some(b.clone()), n, m);
    let mut sel = DMatrix::zeros(m, vars);
    for j in 0..m {
        sel[(j, id * m + j)] = 1.0;
    }
    let xn = &a * x + &b * sel;
    let mut xn0 = &a * x0;
    if let Some(e) = e {
        xn0 += dense(e) * DVector::from_column_slice(w);
    }
    if let Some(c) = c {
        xn0 += DVector::from_column_slice(c);
    }
    (xn, xn0)
}
