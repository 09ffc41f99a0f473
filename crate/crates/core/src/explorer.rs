//! Breadth-first exploration of the reachable state graph.
//!
//! Successors of a BFS level are computed in parallel and merged in frontier
//! order, so node ids, edge order and traces do not depend on the worker
//! count.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::kernel::{FrameReport, GlobalState, Kernel, StepError, StepLabel};
use crate::model::ContractModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    pub max_states: usize,
    pub max_depth: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Self { max_states: 1_000_000, max_depth: 1000 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExploreOptions {
    pub bounds: Bounds,
    /// Worker threads; 0 picks one per core.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub source: usize,
    pub label: StepLabel,
    pub target: usize,
    pub frame: FrameReport,
    pub consumed: Option<String>,
}

/// An enabled step whose execution failed, typically a bounds violation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundError {
    pub source: usize,
    pub label: StepLabel,
    pub error: StepError,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub state: GlobalState,
    pub depth: usize,
    /// Edge that first reached this node.
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct StateGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub bound_errors: Vec<BoundError>,
    pub truncated: bool,
    index: HashMap<GlobalState, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub label: StepLabel,
    pub frame: FrameReport,
    pub state: GlobalState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub initial: GlobalState,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last_state(&self) -> &GlobalState {
        self.steps.last().map_or(&self.initial, |s| &s.state)
    }

    /// Re-executes the trace from the model's initial state.
    pub fn replay(&self, model: &ContractModel) -> Result<(), String> {
        let k = Kernel::new(model);
        if k.initial_state() != self.initial {
            return Err("initial state differs".into());
        }
        let mut g = self.initial.clone();
        for (i, s) in self.steps.iter().enumerate() {
            let out = k.step(&g, &s.label).map_err(|e| format!("step {}: {e}", i + 1))?;
            if out.state != s.state || out.frame != s.frame {
                return Err(format!("step {} ({}) diverges", i + 1, s.label));
            }
            g = out.state;
        }
        Ok(())
    }
}

impl StateGraph {
    pub fn node_id(&self, g: &GlobalState) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn state(&self, id: usize) -> &GlobalState {
        &self.nodes[id].state
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Shortest trace from the initial state to `node`, along BFS parents.
    pub fn trace_to(&self, node: usize) -> Trace {
        let mut edges = Vec::new();
        let mut cur = node;
        while let Some(e) = self.nodes[cur].parent {
            edges.push(e);
            cur = self.edges[e].source;
        }
        edges.reverse();
        self.trace_of(&edges)
    }

    /// Shortest trace to the source of `edge`, followed by `edge`.
    pub fn trace_through(&self, edge: usize) -> Trace {
        let mut t = self.trace_to(self.edges[edge].source);
        let e = &self.edges[edge];
        t.steps.push(TraceStep { label: e.label.clone(), frame: e.frame.clone(), state: self.state(e.target).clone() });
        t
    }

    /// Trace to the first node (in BFS order, hence of minimal depth)
    /// satisfying `pred`.
    pub fn shortest_trace(&self, pred: impl Fn(&GlobalState) -> bool) -> Option<Trace> {
        self.nodes.iter().position(|n| pred(&n.state)).map(|id| self.trace_to(id))
    }

    fn trace_of(&self, edges: &[usize]) -> Trace {
        Trace {
            initial: self.nodes[0].state.clone(),
            steps: edges
                .iter()
                .map(|&e| {
                    let e = &self.edges[e];
                    TraceStep { label: e.label.clone(), frame: e.frame.clone(), state: self.state(e.target).clone() }
                })
                .collect(),
        }
    }

    fn add_node(&mut self, state: GlobalState, depth: usize, parent: Option<usize>) -> usize {
        let id = self.nodes.len();
        self.index.insert(state.clone(), id);
        self.nodes.push(Node { state, depth, parent });
        id
    }
}

pub fn explore(model: &ContractModel, opts: &ExploreOptions) -> StateGraph {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.workers).build().expect("thread pool");
    pool.install(|| explore_in_pool(model, opts.bounds))
}

fn explore_in_pool(model: &ContractModel, bounds: Bounds) -> StateGraph {
    let k = Kernel::new(model);
    let mut graph = StateGraph::default();
    graph.add_node(k.initial_state(), 0, None);
    let mut frontier = vec![0usize];
    let mut depth = 0;

    while !frontier.is_empty() {
        if depth >= bounds.max_depth {
            graph.truncated |= frontier.iter().any(|&id| !k.enabled(graph.state(id)).is_empty());
            break;
        }
        let expanded: Vec<_> = frontier.par_iter().map(|&id| k.successors(graph.state(id))).collect();
        let mut next = Vec::new();
        for (&source, succs) in frontier.iter().zip(expanded) {
            for (label, res) in succs {
                let out = match res {
                    Ok(out) => out,
                    Err(error) => {
                        graph.bound_errors.push(BoundError { source, label, error });
                        continue;
                    }
                };
                let target = match graph.node_id(&out.state) {
                    Some(t) => t,
                    None if graph.nodes.len() >= bounds.max_states => {
                        graph.truncated = true;
                        continue;
                    }
                    None => {
                        let t = graph.add_node(out.state, depth + 1, Some(graph.edges.len()));
                        next.push(t);
                        t
                    }
                };
                graph.edges.push(Edge { source, label, target, frame: out.frame, consumed: out.consumed });
            }
        }
        frontier = next;
        depth += 1;
    }
    graph
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> ContractModel {
        crate::parse(include_str!("../../../fixtures/realestate.csl")).unwrap()
    }

    #[test]
    fn depth_one_is_truncated() {
        let m = fixture();
        let g = explore(&m, &ExploreOptions { bounds: Bounds { max_states: 1000, max_depth: 1 }, workers: 1 });
        assert_eq!(g.nodes.len(), 5);
        assert_eq!(g.edges.len(), 4);
        assert!(g.truncated);
    }

    #[test]
    fn state_cap_truncates() {
        let m = fixture();
        let g = explore(&m, &ExploreOptions { bounds: Bounds { max_states: 3, max_depth: 100 }, workers: 1 });
        assert_eq!(g.nodes.len(), 3);
        assert!(g.truncated);
    }

    #[test]
    fn worker_count_does_not_change_the_graph() {
        let m = fixture();
        let a = explore(&m, &ExploreOptions { workers: 1, ..Default::default() });
        let b = explore(&m, &ExploreOptions { workers: 4, ..Default::default() });
        assert!(!a.truncated);
        assert_eq!(a.edges, b.edges);
        let sa: Vec<_> = a.nodes.iter().map(|n| &n.state).collect();
        let sb: Vec<_> = b.nodes.iter().map(|n| &n.state).collect();
        assert_eq!(sa, sb);
    }

    #[test]
    fn traces_replay() {
        let m = fixture();
        let g = explore(&m, &ExploreOptions::default());
        for id in [1, g.nodes.len() / 2, g.nodes.len() - 1] {
            let t = g.trace_to(id);
            assert_eq!(t.len(), g.nodes[id].depth);
            t.replay(&m).unwrap();
        }
    }
}
