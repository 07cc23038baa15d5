//! Stochastic domination for laws on subsets ordered by inclusion.
//!
//! `mu` is dominated by `nu` iff there is a coupling supported on pairs
//! `(A, B)` with `A ⊆ B`. That is a transport problem, decided here by a
//! max-flow: source to each `A` with capacity `mu(A)`, `A` to each superset
//! `B` unbounded, `B` to sink with capacity `nu(B)`. A short flow leaves an
//! up-set `U` with `mu(U) > nu(U)`, read off the residual graph.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{shift_and_add_origin, window_law_half_line, WindowLaw, MAX_LAW_WIDTH};
use crate::error::{Error, Result};
use crate::lattice::Params;

/// Flow shortfall tolerated before domination is rejected.
pub const FLOW_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationResult {
    pub dominated: bool,
    /// Total mass minus max-flow.
    pub max_flow_deficit: f64,
    /// `(A, B, mass)` with `A ⊆ B`; `0` stands for the empty row.
    pub coupling: Vec<(u64, u64, f64)>,
    /// Minimal elements of an up-set charged more by `mu` than by `nu`.
    pub witness: Option<Vec<u64>>,
    /// `mu(U) - nu(U)` for that up-set.
    pub witness_gap: Option<f64>,
}

struct Edge {
    to: usize,
    cap: f64,
}

struct FlowNet {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

const EPS_FLOW: f64 = 1e-15;

impl FlowNet {
    fn new(nodes: usize) -> Self {
        FlowNet {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, a: usize, b: usize, cap: f64) -> usize {
        self.adj[a].push(self.edges.len());
        self.edges.push(Edge { to: b, cap });
        self.adj[b].push(self.edges.len());
        self.edges.push(Edge { to: a, cap: 0.0 });
        self.edges.len() - 2
    }

    fn levels(&self, s: usize) -> Vec<i32> {
        let mut level = vec![-1; self.adj.len()];
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.adj[v] {
                let to = self.edges[e].to;
                if self.edges[e].cap > EPS_FLOW && level[to] < 0 {
                    level[to] = level[v] + 1;
                    queue.push_back(to);
                }
            }
        }
        level
    }

    fn push(&mut self, v: usize, t: usize, f: f64, level: &[i32], it: &mut [usize]) -> f64 {
        if v == t {
            return f;
        }
        while it[v] < self.adj[v].len() {
            let e = self.adj[v][it[v]];
            let to = self.edges[e].to;
            if self.edges[e].cap > EPS_FLOW && level[to] == level[v] + 1 {
                let d = self.push(to, t, f.min(self.edges[e].cap), level, it);
                if d > 0.0 {
                    self.edges[e].cap -= d;
                    self.edges[e ^ 1].cap += d;
                    return d;
                }
            }
            it[v] += 1;
        }
        0.0
    }

    /// Dinic's algorithm.
    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        loop {
            let level = self.levels(s);
            if level[t] < 0 {
                return flow;
            }
            let mut it = vec![0; self.adj.len()];
            loop {
                let f = self.push(s, t, f64::INFINITY, &level, &mut it);
                if f <= 0.0 {
                    break;
                }
                flow += f;
            }
        }
    }
}

fn support(law: &WindowLaw) -> Vec<(u64, f64)> {
    let mut out: Vec<(u64, f64)> = law.masses.iter().map(|(&k, &q)| (k, q)).filter(|&(_, q)| q > 0.0).collect();
    if law.mass_extinct > 0.0 {
        out.insert(0, (0, law.mass_extinct));
    }
    out
}

/// Decide whether `mu` is dominated by `nu` under inclusion.
pub fn check_domination(mu: &WindowLaw, nu: &WindowLaw) -> Result<DominationResult> {
    if mu.w != nu.w {
        return Err(Error::WindowMismatch(mu.w, nu.w));
    }
    if mu.w > MAX_LAW_WIDTH {
        return Err(Error::TooLarge(format!("window width {}", mu.w)));
    }
    let left = support(mu);
    let right = support(nu);
    let (s, t) = (0, 1);
    let mut net = FlowNet::new(2 + left.len() + right.len());
    let mut pair_edges = Vec::new();
    for (i, &(a, q)) in left.iter().enumerate() {
        net.add(s, 2 + i, q);
        for (j, &(b, _)) in right.iter().enumerate() {
            if a & !b == 0 {
                let e = net.add(2 + i, 2 + left.len() + j, f64::INFINITY);
                pair_edges.push((e, a, b));
            }
        }
    }
    for (j, &(_, q)) in right.iter().enumerate() {
        net.add(2 + left.len() + j, t, q);
    }
    let flow = net.max_flow(s, t);
    let total: f64 = left.iter().map(|&(_, q)| q).sum();
    let deficit = (total - flow).max(0.0);
    let dominated = deficit <= FLOW_TOLERANCE;
    let coupling = pair_edges
        .iter()
        .map(|&(e, a, b)| (a, b, net.edges[e ^ 1].cap))
        .filter(|&(_, _, f)| f > 0.0)
        .collect();
    let (witness, witness_gap) = if dominated {
        (None, None)
    } else {
        let level = net.levels(s);
        let reached: Vec<u64> = left
            .iter()
            .enumerate()
            .filter(|&(i, _)| level[2 + i] >= 0)
            .map(|(_, &(a, _))| a)
            .collect();
        let mut gens: Vec<u64> = reached
            .iter()
            .copied()
            .filter(|&a| !reached.iter().any(|&b| b != a && b & !a == 0))
            .collect();
        gens.sort_unstable();
        let in_up = |x: u64| gens.iter().any(|&g| g & !x == 0);
        let up_mass = |law: &[(u64, f64)]| law.iter().filter(|&&(x, _)| in_up(x)).map(|&(_, q)| q).sum::<f64>();
        let gap = up_mass(&left) - up_mass(&right);
        (Some(gens), Some(gap))
    };
    Ok(DominationResult {
        dominated,
        max_flow_deficit: deficit,
        coupling,
        witness,
        witness_gap,
    })
}

/// Outcome of the finite domination check for the half-line start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub params: Params,
    pub n: usize,
    pub w: usize,
    #[serde(rename = "M")]
    pub big_m: usize,
    pub dominated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<Vec<i64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_flow_deficit: Option<f64>,
    /// Coupling of `mu` and `nu` as `(A, B, mass)` column lists.
    pub coupling: Vec<(Vec<i64>, Vec<i64>, f64)>,
}

/// Is the window law of row `n`, conditioned on survival, dominated by its
/// own shift with the origin added?
pub fn verify_lemma_domination(params: &Params, n: usize, w: usize, big_m: usize) -> Result<LemmaReport> {
    let mu = window_law_half_line(params, big_m, n, w)?.conditioned()?;
    let nu = shift_and_add_origin(&mu);
    let res = check_domination(&mu, &nu)?;
    Ok(LemmaReport {
        params: *params,
        n,
        w,
        big_m,
        dominated: res.dominated,
        witness: res.witness.map(|g| g.into_iter().map(WindowLaw::columns).collect()),
        max_flow_deficit: (!res.dominated).then_some(res.max_flow_deficit),
        coupling: res
            .coupling
            .into_iter()
            .map(|(a, b, q)| (WindowLaw::columns(a), WindowLaw::columns(b), q))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(w: usize, items: &[(u64, f64)]) -> WindowLaw {
        WindowLaw::from_masses(w, items.iter().copied())
    }

    #[test]
    fn point_masses() {
        let a = WindowLaw::point(3, 0b001);
        let b = WindowLaw::point(3, 0b011);
        assert!(check_domination(&a, &b).unwrap().dominated);
        let r = check_domination(&b, &a).unwrap();
        assert!(!r.dominated);
        assert_eq!(r.witness, Some(vec![0b011]));
        assert!((r.witness_gap.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn incomparable_halves() {
        let mu = law(2, &[(0b01, 0.5), (0b10, 0.5)]);
        let nu = law(2, &[(0b11, 0.5), (0b01, 0.5)]);
        let r = check_domination(&mu, &nu).unwrap();
        assert!(r.dominated);
        let moved: f64 = r.coupling.iter().map(|c| c.2).sum();
        assert!((moved - 1.0).abs() < 1e-12);
        assert!(r.coupling.iter().all(|&(a, b, _)| a & !b == 0));
        // nu misses {1} entirely: the up-set of {1} has mu mass 1/2 but nu mass 1/2
        // and the up-set of {0} gets 1/2 from mu against 1 from nu
        let nu = law(2, &[(0b01, 1.0)]);
        let r = check_domination(&mu, &nu).unwrap();
        assert!(!r.dominated);
        assert!(r.witness_gap.unwrap() > 0.49);
    }

    #[test]
    fn extinction_is_bottom() {
        let mu = law(2, &[(0, 0.3), (0b01, 0.7)]);
        let nu = law(2, &[(0b01, 1.0)]);
        assert!(check_domination(&mu, &nu).unwrap().dominated);
        assert!(!check_domination(&nu, &mu).unwrap().dominated);
    }

    #[test]
    fn width_mismatch() {
        assert_eq!(
            check_domination(&WindowLaw::point(2, 1), &WindowLaw::point(3, 1)),
            Err(Error::WindowMismatch(2, 3))
        );
    }

    #[test]
    fn lemma_small_case() {
        let r = verify_lemma_domination(&Params { p: 0.7, eps: 0.1 }, 2, 3, 4).unwrap();
        assert!(r.dominated, "{r:?}");
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["M"], 4);
        assert!(json.get("witness").is_none());
    }
}
