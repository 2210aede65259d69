//! Per-epoch assignment: pick one action per vehicle, each request served by
//! at most one vehicle, maximising the summed scores.
//!
//! Scores are first shifted by each vehicle's null-action score so that the
//! null action costs nothing; actions that do not beat it are dropped. The
//! remaining actions split into independent components (vehicles linked by
//! shared requests), each solved by branch and bound over a packing LP.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::demand::RequestId;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredAction {
    pub requests: Vec<RequestId>,
    pub score: f64,
}

/// Action lists per vehicle. Every vehicle needs at least one action with
/// no requests (the null action).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AssignmentInstance {
    pub vehicles: Vec<Vec<ScoredAction>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// Chosen action index per vehicle.
    pub choice: Vec<usize>,
    pub objective: f64,
    /// False when the time budget ran out before the search closed.
    pub optimal: bool,
}

impl AssignmentInstance {
    pub fn request_universe(&self) -> Vec<RequestId> {
        let mut all: Vec<RequestId> = self.vehicles.iter().flatten().flat_map(|a| a.requests.iter().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Sum of the chosen scores in vehicle order.
    pub fn objective_of(&self, choice: &[usize]) -> f64 {
        self.vehicles.iter().zip(choice).map(|(acts, &c)| acts[c].score).sum()
    }

    /// Best null action per vehicle, after shape checks.
    fn baselines(&self) -> Result<Vec<usize>> {
        self.vehicles
            .iter()
            .enumerate()
            .map(|(i, acts)| {
                let mut best: Option<usize> = None;
                for (f, a) in acts.iter().enumerate() {
                    if !a.score.is_finite() {
                        return Err(Error::invalid(format!("vehicle {i} action {f}: non-finite score")));
                    }
                    let mut seen = HashSet::new();
                    if !a.requests.iter().all(|r| seen.insert(*r)) {
                        return Err(Error::invalid(format!("vehicle {i} action {f}: repeated request")));
                    }
                    if a.requests.is_empty() && best.is_none_or(|b| a.score > acts[b].score) {
                        best = Some(f);
                    }
                }
                best.ok_or_else(|| Error::invalid(format!("vehicle {i} has no null action")))
            })
            .collect()
    }
}

/// Checks one action per vehicle, disjoint request sets and the objective.
pub fn check_assignment(inst: &AssignmentInstance, a: &Assignment) -> Result<()> {
    if a.choice.len() != inst.vehicles.len() {
        return Err(Error::invalid(format!(
            "{} choices for {} vehicles",
            a.choice.len(),
            inst.vehicles.len()
        )));
    }
    let mut used = HashSet::new();
    for (i, (&c, acts)) in a.choice.iter().zip(&inst.vehicles).enumerate() {
        let act = acts
            .get(c)
            .ok_or_else(|| Error::invalid(format!("vehicle {i}: action {c} out of range")))?;
        for r in &act.requests {
            if !used.insert(*r) {
                return Err(Error::invalid(format!("request {r} assigned twice")));
            }
        }
    }
    let expected = inst.objective_of(&a.choice);
    if expected != a.objective {
        return Err(Error::invalid(format!("objective {} but choices sum to {expected}", a.objective)));
    }
    Ok(())
}

struct Var<'a> {
    vehicle: usize,
    action: usize,
    gain: f64,
    requests: &'a [RequestId],
}

fn reduced_components<'a>(inst: &'a AssignmentInstance, nulls: &[usize]) -> Vec<Vec<Var<'a>>> {
    let mut vars = Vec::new();
    for (i, acts) in inst.vehicles.iter().enumerate() {
        let base = acts[nulls[i]].score;
        for (f, a) in acts.iter().enumerate() {
            let gain = a.score - base;
            if !a.requests.is_empty() && gain > 0.0 {
                vars.push(Var {
                    vehicle: i,
                    action: f,
                    gain,
                    requests: &a.requests,
                });
            }
        }
    }
    // Union vehicles that compete for a request.
    let n = inst.vehicles.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut owner: HashMap<RequestId, usize> = HashMap::new();
    for v in &vars {
        for r in v.requests {
            let o = *owner.entry(*r).or_insert(v.vehicle);
            let (a, b) = (find(&mut parent, o), find(&mut parent, v.vehicle));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut comps: Vec<Vec<Var>> = Vec::new();
    for v in vars {
        let root = find(&mut parent, v.vehicle);
        let k = *slot.entry(root).or_insert_with(|| {
            comps.push(Vec::new());
            comps.len() - 1
        });
        comps[k].push(v);
    }
    comps
}

/// Exact solve with an anytime fallback once `budget` is spent.
pub fn solve(inst: &AssignmentInstance, budget: Duration) -> Result<Assignment> {
    let nulls = inst.baselines()?;
    let deadline = Instant::now().checked_add(budget);
    let mut choice = nulls.clone();
    let mut optimal = true;
    for comp in reduced_components(inst, &nulls) {
        let (chosen, closed) = branch_and_bound(&comp, deadline);
        optimal &= closed;
        for j in chosen {
            choice[comp[j].vehicle] = comp[j].action;
        }
    }
    Ok(Assignment {
        objective: inst.objective_of(&choice),
        choice,
        optimal,
    })
}

/// Optimal value of the LP relaxation (an upper bound on [`solve`]).
pub fn lp_relaxation(inst: &AssignmentInstance) -> Result<f64> {
    let nulls = inst.baselines()?;
    let mut total: f64 = inst.vehicles.iter().zip(&nulls).map(|(a, &n)| a[n].score).sum();
    for comp in reduced_components(inst, &nulls) {
        let alive: Vec<usize> = (0..comp.len()).collect();
        total += packing_lp(&comp, &alive).value;
    }
    Ok(total)
}

/// Exhaustive enumeration of joint actions; refuses more than 10^6 of them.
pub fn brute_force(inst: &AssignmentInstance) -> Result<Assignment> {
    inst.baselines()?;
    let size: f64 = inst.vehicles.iter().map(|a| a.len() as f64).product();
    if size > 1e6 {
        return Err(Error::invalid(format!("{size} joint actions exceed the brute-force limit")));
    }
    struct Search<'a> {
        inst: &'a AssignmentInstance,
        cur: Vec<usize>,
        used: HashSet<RequestId>,
        best: Option<(f64, Vec<usize>)>,
    }
    impl Search<'_> {
        fn go(&mut self, i: usize) {
            if i == self.inst.vehicles.len() {
                let obj = self.inst.objective_of(&self.cur);
                if self.best.as_ref().is_none_or(|(b, _)| obj > *b) {
                    self.best = Some((obj, self.cur.clone()));
                }
                return;
            }
            for (f, a) in self.inst.vehicles[i].iter().enumerate() {
                if a.requests.iter().any(|r| self.used.contains(r)) {
                    continue;
                }
                self.used.extend(a.requests.iter().copied());
                self.cur.push(f);
                self.go(i + 1);
                self.cur.pop();
                for r in &a.requests {
                    self.used.remove(r);
                }
            }
        }
    }
    let mut s = Search {
        inst,
        cur: Vec::new(),
        used: HashSet::new(),
        best: None,
    };
    s.go(0);
    let (objective, choice) = s.best.expect("null actions keep the search feasible");
    Ok(Assignment {
        choice,
        objective,
        optimal: true,
    })
}

fn conflicts(a: &Var, b: &Var) -> bool {
    a.vehicle == b.vehicle || a.requests.iter().any(|r| b.requests.contains(r))
}

fn greedy(vars: &[Var]) -> (f64, Vec<usize>) {
    let mut order: Vec<usize> = (0..vars.len()).collect();
    order.sort_by(|&a, &b| vars[b].gain.total_cmp(&vars[a].gain).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::new();
    for j in order {
        if chosen.iter().all(|&c| !conflicts(&vars[c], &vars[j])) {
            chosen.push(j);
        }
    }
    (chosen.iter().map(|&j| vars[j].gain).sum(), chosen)
}

struct Node {
    alive: Vec<usize>,
    fixed: Vec<usize>,
    value: f64,
}

/// Returns chosen variable indices and whether optimality was proven.
fn branch_and_bound(vars: &[Var], deadline: Option<Instant>) -> (Vec<usize>, bool) {
    if vars.iter().all(|v| v.vehicle == vars[0].vehicle) {
        let best = (0..vars.len()).fold(0, |b, j| if vars[j].gain > vars[b].gain { j } else { b });
        return (vec![best], true);
    }
    let (mut best, mut best_set) = greedy(vars);
    let mut stack = vec![Node {
        alive: (0..vars.len()).collect(),
        fixed: Vec::new(),
        value: 0.0,
    }];
    while let Some(node) = stack.pop() {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return (best_set, false);
        }
        let tol = 1e-9 * best.abs().max(1.0);
        if node.alive.is_empty() {
            if node.value > best {
                best = node.value;
                best_set = node.fixed;
            }
            continue;
        }
        let lp = packing_lp(vars, &node.alive);
        let bound = node.value + lp.value;
        if bound <= best + tol {
            continue;
        }
        let (rounded, set) = round_lp(vars, &node, &lp.x);
        if rounded > best {
            best = rounded;
            best_set = set;
        }
        // Any completion with x_j = 1 is worth at most bound + d_j.
        let alive: Vec<usize> = node
            .alive
            .iter()
            .zip(&lp.reduced)
            .filter(|&(_, &d)| bound + d > best + tol)
            .map(|(&j, _)| j)
            .collect();
        let frac = node
            .alive
            .iter()
            .zip(&lp.x)
            .map(|(&j, &xj)| (j, (xj - xj.round()).abs()))
            .filter(|&(_, d)| d > 1e-7)
            .fold(None::<(usize, f64)>, |acc, (j, d)| match acc {
                Some((_, bd)) if bd >= d - 1e-12 => acc,
                _ => Some((j, d)),
            });
        let Some((branch, _)) = frac else {
            let mut set = node.fixed;
            set.extend(node.alive.iter().zip(&lp.x).filter(|(_, &xj)| xj > 0.5).map(|(&j, _)| j));
            let value = set.iter().map(|&j| vars[j].gain).sum::<f64>();
            if value > best {
                best = value;
                best_set = set;
            }
            continue;
        };
        if !alive.contains(&branch) {
            // Fixing removed the branching variable; re-solve the smaller node.
            stack.push(Node { alive, ..node });
            continue;
        }
        let node = Node { alive, ..node };
        let zero = Node {
            alive: node.alive.iter().copied().filter(|&j| j != branch).collect(),
            fixed: node.fixed.clone(),
            value: node.value,
        };
        let mut fixed = node.fixed;
        fixed.push(branch);
        let one = Node {
            alive: node.alive.iter().copied().filter(|&j| !conflicts(&vars[j], &vars[branch])).collect(),
            fixed,
            value: node.value + vars[branch].gain,
        };
        stack.push(zero);
        stack.push(one);
    }
    best_set.sort_unstable();
    (best_set, true)
}

struct LpSolution {
    value: f64,
    /// Aligned with the `alive` list the LP was built from.
    x: Vec<f64>,
    /// Reduced costs, all non-positive at the optimum.
    reduced: Vec<f64>,
}

/// Greedy completion of `node` taking variables by decreasing LP value.
fn round_lp(vars: &[Var], node: &Node, x: &[f64]) -> (f64, Vec<usize>) {
    let mut order: Vec<usize> = (0..x.len()).filter(|&k| x[k] > 1e-7).collect();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(vars[node.alive[b]].gain.total_cmp(&vars[node.alive[a]].gain)).then(a.cmp(&b)));
    let mut set = node.fixed.clone();
    for k in order {
        let j = node.alive[k];
        if set.iter().all(|&c| !conflicts(&vars[c], &vars[j])) {
            set.push(j);
        }
    }
    (set.iter().map(|&j| vars[j].gain).sum(), set)
}

/// LP relaxation over `alive`: one row per vehicle and per request wanted by
/// two or more vehicles.
fn packing_lp(vars: &[Var], alive: &[usize]) -> LpSolution {
    let mut row_of_vehicle: HashMap<usize, usize> = HashMap::new();
    let mut rows: Vec<Vec<usize>> = Vec::new();
    let mut holders: HashMap<RequestId, Vec<usize>> = HashMap::new();
    for (col, &j) in alive.iter().enumerate() {
        let v = &vars[j];
        let r = *row_of_vehicle.entry(v.vehicle).or_insert_with(|| {
            rows.push(Vec::new());
            rows.len() - 1
        });
        rows[r].push(col);
        for req in v.requests {
            holders.entry(*req).or_default().push(col);
        }
    }
    let mut contested: Vec<(RequestId, Vec<usize>)> = holders
        .into_iter()
        .filter(|(_, cols)| {
            let first = vars[alive[cols[0]]].vehicle;
            cols.iter().any(|&c| vars[alive[c]].vehicle != first)
        })
        .collect();
    contested.sort_unstable_by_key(|(r, _)| *r);
    rows.extend(contested.into_iter().map(|(_, cols)| cols));
    let c: Vec<f64> = alive.iter().map(|&j| vars[j].gain).collect();
    simplex_packing(&c, &rows)
}

const LP_EPS: f64 = 1e-10;

/// Maximises `c·x` subject to `Σ_{j ∈ row} x_j ≤ 1` for each row and `x ≥ 0`.
/// All right-hand sides are 1, so the slack basis is feasible from the start.
fn simplex_packing(c: &[f64], rows: &[Vec<usize>]) -> LpSolution {
    let n = c.len();
    let m = rows.len();
    let w = n + m + 1;
    let mut t = vec![0.0; m * w];
    for (r, cols) in rows.iter().enumerate() {
        for &j in cols {
            t[r * w + j] = 1.0;
        }
        t[r * w + n + r] = 1.0;
        t[r * w + w - 1] = 1.0;
    }
    let mut obj = vec![0.0; w];
    obj[..n].copy_from_slice(c);
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut degenerate = 0usize;
    for _ in 0..100_000 {
        // Dantzig's rule, falling back to Bland's after a run of stalls.
        let entering = if degenerate < 50 {
            (0..w - 1).filter(|&j| obj[j] > LP_EPS).max_by(|&a, &b| obj[a].total_cmp(&obj[b]).then(b.cmp(&a)))
        } else {
            (0..w - 1).find(|&j| obj[j] > LP_EPS)
        };
        let Some(e) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let a = t[r * w + e];
            if a > LP_EPS {
                let ratio = t[r * w + w - 1] / a;
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => ratio < lratio - LP_EPS || (ratio <= lratio + LP_EPS && basis[r] < basis[lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let Some((p, ratio)) = leave else {
            // Unbounded cannot happen: every column sits in a vehicle row.
            break;
        };
        degenerate = if ratio <= LP_EPS { degenerate + 1 } else { 0 };
        let piv = t[p * w + e];
        for j in 0..w {
            t[p * w + j] /= piv;
        }
        let (before, rest) = t.split_at_mut(p * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[e];
            if f != 0.0 {
                for (x, &y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
            }
        }
        let f = obj[e];
        for (x, &y) in obj.iter_mut().zip(prow.iter()) {
            *x -= f * y;
        }
        basis[p] = e;
    }
    let mut x = vec![0.0; n];
    for (r, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] = t[r * w + w - 1];
        }
    }
    LpSolution {
        value: -obj[w - 1],
        x,
        reduced: obj[..n].iter().map(|d| d.min(0.0)).collect(),
    }
}
