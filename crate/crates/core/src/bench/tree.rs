use std::ops::Range;

use crate::dp::{search_joint, CouplingRule, Resolver, UnitCandidates, UnitModel};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{validate_problem, GridConfig, NoiseModel, ProblemSpec};

/// One decision node: the noise `w_t` of its stage has been revealed.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub stage: usize,
    pub parent: Option<usize>,
    pub noise: Vec<f64>,
    /// Probability of this node given its parent.
    pub conditional: f64,
    /// Path probability from the root.
    pub probability: f64,
}

/// Full scenario tree of a stage-wise independent noise model. Nodes are
/// numbered stage by stage; within a stage, the first stage's outcome varies
/// slowest. Zero-probability outcomes are left out.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioTree {
    pub nodes: Vec<TreeNode>,
    offsets: Vec<usize>,
    branching: Vec<usize>,
}

impl ScenarioTree {
    pub fn new(noise: &NoiseModel, max_nodes: usize) -> Result<Self> {
        let supports: Vec<Vec<(Vec<f64>, f64)>> = noise
            .stages
            .iter()
            .map(|st| st.points.iter().cloned().zip(st.probabilities.iter().copied()).filter(|(_, p)| *p > 0.0).collect())
            .collect();
        let branching: Vec<usize> = supports.iter().map(Vec::len).collect();
        let mut total = 0f64;
        let mut width = 1f64;
        for b in &branching {
            width *= *b as f64;
            total += width;
        }
        if total > max_nodes as f64 {
            return Err(Error::InvalidArgument(format!("scenario tree has {total} nodes, cap is {max_nodes}")));
        }
        let mut nodes: Vec<TreeNode> = Vec::with_capacity(total as usize);
        let mut offsets = Vec::with_capacity(branching.len() + 1);
        let mut prev: Range<usize> = 0..0;
        for (t, support) in supports.iter().enumerate() {
            offsets.push(nodes.len());
            let start = nodes.len();
            let parents: Vec<Option<usize>> = if t == 0 { vec![None] } else { prev.clone().map(Some).collect() };
            for parent in parents {
                let base = parent.map_or(1.0, |p| nodes[p].probability);
                for (w, p) in support {
                    nodes.push(TreeNode { stage: t, parent, noise: w.clone(), conditional: *p, probability: base * p });
                }
            }
            prev = start..nodes.len();
        }
        offsets.push(nodes.len());
        Ok(ScenarioTree { nodes, offsets, branching })
    }

    pub fn horizon(&self) -> usize {
        self.branching.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn stage_nodes(&self, t: usize) -> Range<usize> {
        self.offsets[t]..self.offsets[t + 1]
    }

    pub fn children(&self, id: usize) -> Range<usize> {
        let t = self.nodes[id].stage;
        if t + 1 >= self.horizon() {
            return 0..0;
        }
        let local = id - self.offsets[t];
        let k = self.branching[t + 1];
        let start = self.offsets[t + 1] + local * k;
        start..start + k
    }

    /// Node ids from the first stage down to `id`.
    pub fn path(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    /// Position of a node among its siblings, i.e. its support index.
    fn sibling_index(&self, id: usize) -> usize {
        let t = self.nodes[id].stage;
        (id - self.offsets[t]) % self.branching[t]
    }
}

/// A problem together with its scenario tree and control grids.
#[derive(Clone, Debug)]
pub struct TreeProblem {
    pub spec: ProblemSpec,
    pub grids: GridConfig,
    pub tree: ScenarioTree,
    /// Maximum number of stage evaluations of the exhaustive search.
    pub cap: f64,
}

impl TreeProblem {
    pub fn new(spec: &ProblemSpec, grids: &GridConfig) -> Result<Self> {
        let report = validate_problem(spec);
        if !report.is_valid() {
            return Err(Error::InvalidProblem(report.to_string()));
        }
        Ok(TreeProblem { spec: spec.clone(), grids: grids.clone(), tree: ScenarioTree::new(&spec.noise, 10_000_000)?, cap: 1e7 })
    }
}

/// Optimal expected cost over grid-restricted non-anticipative policies, with
/// the optimal controls and pre-decision states of every node.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeSolution {
    pub value: f64,
    pub controls: Vec<Vec<Vec<f64>>>,
    pub states: Vec<Vec<Vec<f64>>>,
}

struct Search<'a> {
    tree: &'a ScenarioTree,
    units: Vec<UnitModel>,
    resolvers: Vec<Option<Resolver>>,
    supports: Vec<Vec<(Vec<f64>, f64)>>,
    d: usize,
    exec: Execution,
}

impl Search<'_> {
    fn split(&self, next: &[f64]) -> Vec<Vec<f64>> {
        let mut off = 0;
        self.units
            .iter()
            .map(|u| {
                let x = next[off..off + u.spec.state_dim].to_vec();
                off += u.spec.state_dim;
                x
            })
            .collect()
    }

    fn best(&self, t: usize, states: &[Vec<f64>], k: usize) -> Result<Option<(usize, Vec<usize>)>> {
        Ok(self.choose(t, states, k)?.map(|c| (k, c.indices)))
    }

    fn choose(&self, t: usize, states: &[Vec<f64>], k: usize) -> Result<Option<crate::dp::search::Choice>> {
        let w = &self.supports[t][k].0;
        let cands: Vec<UnitCandidates> =
            self.units.iter().zip(states).map(|(u, x)| u.candidates(t, x, w, self.d, None)).collect();
        let refs: Vec<&UnitCandidates> = cands.iter().collect();
        search_joint(&self.units, t, &refs, CouplingRule::Enforce { resolver: self.resolvers[t].as_ref() }, |next| {
            self.value(t + 1, &self.split(next))
        })
    }

    /// Expected optimal cost from stage `t`, recomputed for every state.
    fn value(&self, t: usize, states: &[Vec<f64>]) -> Result<f64> {
        if t == self.supports.len() {
            let mut acc = 0.0;
            for (u, x) in self.units.iter().zip(states) {
                acc += u.spec.final_cost(x);
            }
            return Ok(acc);
        }
        let mins = self.exec.try_map_indexed(self.supports[t].len(), |k| Ok::<_, Error>(self.choose(t, states, k)?.map(|c| c.value)))?;
        let mut acc = 0.0;
        for (m, (_, p)) in mins.into_iter().zip(&self.supports[t]) {
            match m {
                Some(v) => acc += p * v,
                None => return Ok(f64::INFINITY),
            }
        }
        Ok(acc)
    }

    fn forward(&self, id: usize, states: Vec<Vec<f64>>, sol: &mut TreeSolution) -> Result<()> {
        let t = self.tree.nodes[id].stage;
        let k = self.tree.sibling_index(id);
        let (_, indices) = self.best(t, &states, k)?.ok_or(Error::InfeasibleNode(id))?;
        let w = &self.supports[t][k].0;
        let controls: Vec<Vec<f64>> = self.units.iter().zip(indices).map(|(u, i)| u.control_grids[t].point(i)).collect();
        let next: Vec<Vec<f64>> =
            self.units.iter().enumerate().map(|(i, u)| u.spec.next_state(t, &states[i], &controls[i], w)).collect();
        sol.controls[id] = controls;
        sol.states[id] = states;
        for child in self.tree.children(id) {
            self.forward(child, next.clone(), sol)?;
        }
        Ok(())
    }
}

/// Exhaustive backward search over the tree: at every node, every joint grid
/// control satisfying the coupling, with the cost-to-go recomputed rather
/// than interpolated.
pub fn tree_exact_solve(tp: &TreeProblem, exec: Execution) -> Result<TreeSolution> {
    let spec = &tp.spec;
    let units = UnitModel::build_all(&spec.subsystems, &tp.grids, spec.horizon)?;
    let d = spec.coupling_dim();
    let mut evaluations = 1f64;
    for t in 0..spec.horizon {
        let combos: f64 = units.iter().map(|u| u.control_grids[t].len() as f64).product();
        evaluations *= tp.tree.branching[t] as f64 * combos;
    }
    if evaluations > tp.cap {
        return Err(Error::TreeCap { evaluations, cap: tp.cap });
    }
    let supports = (0..spec.horizon)
        .map(|t| {
            let st = spec.noise.stage(t);
            st.points.iter().cloned().zip(st.probabilities.iter().copied()).filter(|(_, p)| *p > 0.0).collect()
        })
        .collect();
    let resolvers = (0..spec.horizon).map(|t| Resolver::find(&units, t, d)).collect();
    let search = Search { tree: &tp.tree, units, resolvers, supports, d, exec };
    let x0: Vec<Vec<f64>> = spec.subsystems.iter().map(|s| s.initial_state.clone()).collect();
    let value = search.value(0, &x0)?;
    let n = tp.tree.len();
    let mut sol = TreeSolution { value, controls: vec![Vec::new(); n], states: vec![Vec::new(); n] };
    for root in tp.tree.stage_nodes(0) {
        search.forward(root, x0.clone(), &mut sol)?;
    }
    Ok(sol)
}
