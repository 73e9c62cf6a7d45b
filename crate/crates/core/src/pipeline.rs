//! Splitting plans into pipelines at materialization points.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::plan::{NodeId, PlanNode};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PipelineError {
    #[error("pipeline graph has a cycle through pipeline {0}")]
    Cycle(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    TableScan { table: String, node: NodeId },
    /// Reads what a breaker materialized: groups, or the sorted array.
    BreakerScan { breaker: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Filter(NodeId),
    Project(NodeId),
    /// Looks each tuple up in the hash table built for the join.
    Probe(NodeId),
}

impl Op {
    pub fn node(self) -> NodeId {
        match self {
            Op::Filter(n) | Op::Project(n) | Op::Probe(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sink {
    /// Group-by table or join build table.
    MaterializeHashTable(NodeId),
    MaterializeSortArray(NodeId),
    ResultSink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub id: usize,
    pub source: Source,
    pub ops: Vec<Op>,
    pub sink: Sink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineGraph {
    /// Indexed by pipeline id.
    pub pipelines: Vec<Pipeline>,
    /// `(producer, consumer)` edges.
    pub deps: Vec<(usize, usize)>,
}

struct Partial {
    source: Source,
    ops: Vec<Op>,
    deps: Vec<usize>,
}

struct Dissector {
    ids: HashMap<*const PlanNode, NodeId>,
    graph: PipelineGraph,
}

impl Dissector {
    fn id(&self, n: &PlanNode) -> NodeId {
        self.ids[&(n as *const PlanNode)]
    }

    fn finish(&mut self, p: Partial, sink: Sink) -> usize {
        let id = self.graph.pipelines.len();
        self.graph.deps.extend(p.deps.into_iter().map(|d| (d, id)));
        self.graph.pipelines.push(Pipeline { id, source: p.source, ops: p.ops, sink });
        id
    }

    fn produce(&mut self, n: &PlanNode) -> Partial {
        let me = self.id(n);
        match n {
            PlanNode::Scan { table } => {
                Partial { source: Source::TableScan { table: table.clone(), node: me }, ops: vec![], deps: vec![] }
            }
            PlanNode::Filter { child, .. } => {
                let mut p = self.produce(child);
                p.ops.push(Op::Filter(me));
                p
            }
            PlanNode::Project { child, .. } => {
                let mut p = self.produce(child);
                p.ops.push(Op::Project(me));
                p
            }
            PlanNode::HashGroupBy { child, .. } | PlanNode::Sort { child, .. } => {
                let input = self.produce(child);
                let sink = if matches!(n, PlanNode::Sort { .. }) {
                    Sink::MaterializeSortArray(me)
                } else {
                    Sink::MaterializeHashTable(me)
                };
                let producer = self.finish(input, sink);
                Partial { source: Source::BreakerScan { breaker: me }, ops: vec![], deps: vec![producer] }
            }
            PlanNode::HashJoin { build, probe, .. } => {
                let b = self.produce(build);
                let producer = self.finish(b, Sink::MaterializeHashTable(me));
                let mut p = self.produce(probe);
                p.ops.push(Op::Probe(me));
                p.deps.push(producer);
                p
            }
        }
    }
}

/// Splits `plan` into pipelines. Pipelines are numbered in the order they
/// complete during a post-order walk, so producers get smaller ids than
/// their consumers.
pub fn dissect(plan: &PlanNode) -> PipelineGraph {
    let ids = plan
        .preorder()
        .into_iter()
        .enumerate()
        .map(|(i, n)| (n as *const PlanNode, NodeId(i)))
        .collect();
    let mut d = Dissector { ids, graph: PipelineGraph { pipelines: vec![], deps: vec![] } };
    let root = d.produce(plan);
    d.finish(root, Sink::ResultSink);
    d.graph
}

/// Orders pipelines so every producer runs before its consumers, taking the
/// smallest ready id first.
pub fn topo_order(graph: &PipelineGraph) -> Result<Vec<&Pipeline>, PipelineError> {
    let n = graph.pipelines.len();
    let mut indegree = vec![0usize; n];
    let mut out_edges = vec![Vec::new(); n];
    for &(from, to) in &graph.deps {
        indegree[to] += 1;
        out_edges[from].push(to);
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(&graph.pipelines[i]);
        for &to in &out_edges[i] {
            indegree[to] -= 1;
            if indegree[to] == 0 {
                ready.push(Reverse(to));
            }
        }
    }
    if order.len() < n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
        return Err(PipelineError::Cycle(stuck));
    }
    Ok(order)
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::TableScan { table, .. } => write!(f, "scan {table}"),
            Source::BreakerScan { breaker } => write!(f, "scan #{}", breaker.0),
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Filter(n) => write!(f, "filter #{}", n.0),
            Op::Project(n) => write!(f, "project #{}", n.0),
            Op::Probe(n) => write!(f, "probe #{}", n.0),
        }
    }
}

impl fmt::Display for Sink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sink::MaterializeHashTable(n) => write!(f, "hash table #{}", n.0),
            Sink::MaterializeSortArray(n) => write!(f, "sort array #{}", n.0),
            Sink::ResultSink => f.write_str("result"),
        }
    }
}

/// One pipeline per line: `P<id>: <source> -> <op> -> ... -> <sink>`,
/// followed by one `P<a> -> P<b>` line per dependency. `#n` is a node's
/// pre-order position in the plan.
impl fmt::Display for PipelineGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.pipelines {
            write!(f, "P{}: {}", p.id, p.source)?;
            for op in &p.ops {
                write!(f, " -> {op}")?;
            }
            writeln!(f, " -> {}", p.sink)?;
        }
        for (a, b) in &self.deps {
            writeln!(f, "P{a} -> P{b}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::*;

    fn fig2() -> PlanNode {
        PlanNode::scan("R")
            .filter(col("R", "x").lt(lit_i32(42)))
            .join(PlanNode::scan("S"), vec![(col("R", "id"), col("S", "rid"))])
            .group_by(vec![col("R", "x")], vec![AggFn::min(col("S", "x"))])
            .project(vec![col("R", "x"), col("", "min")])
    }

    fn breakers(p: &PlanNode) -> usize {
        p.preorder().iter().filter(|n| n.is_breaker()).count()
    }

    #[test]
    fn fig2_three_pipelines() {
        let plan = fig2();
        let g = dissect(&plan);
        // pre-order: 0 Project, 1 GroupBy, 2 Join, 3 Filter, 4 Scan R, 5 Scan S
        assert_eq!(
            g.to_string(),
            "P0: scan R -> filter #3 -> hash table #2\n\
             P1: scan S -> probe #2 -> hash table #1\n\
             P2: scan #1 -> project #0 -> result\n\
             P0 -> P1\nP1 -> P2\n"
        );
        let order: Vec<usize> = topo_order(&g).unwrap().iter().map(|p| p.id).collect();
        assert_eq!(order, [0, 1, 2]);
        assert_eq!(g.pipelines.len(), breakers(&plan) + 1);
    }

    #[test]
    fn single_scan() {
        let g = dissect(&PlanNode::scan("R"));
        assert_eq!(g.to_string(), "P0: scan R -> result\n");
        assert_eq!(topo_order(&g).unwrap()[0].id, 0);
    }

    #[test]
    fn sort_over_filter() {
        let plan = PlanNode::scan("R").filter(col("R", "x").lt(lit_i32(1))).sort(vec![SortKey::asc(col("R", "x"))]);
        let g = dissect(&plan);
        assert_eq!(g.to_string(), "P0: scan R -> filter #1 -> sort array #0\nP1: scan #0 -> result\nP0 -> P1\n");
    }

    fn two_builds() -> PlanNode {
        let inner = PlanNode::scan("B").join(PlanNode::scan("C"), vec![(col("B", "k"), col("C", "k"))]);
        PlanNode::scan("A")
            .group_by(vec![col("A", "k")], vec![])
            .join(inner, vec![(col("A", "k"), col("C", "k"))])
    }

    /// Checks the chosen order against every permutation: the order is the
    /// lexicographically smallest permutation that satisfies all edges.
    #[test]
    fn independent_builds_brute_force() {
        let plan = two_builds();
        let g = dissect(&plan);
        assert_eq!(g.pipelines.len(), breakers(&plan) + 1);
        let n = g.pipelines.len();
        let valid = |perm: &[usize]| {
            g.deps.iter().all(|&(a, b)| {
                perm.iter().position(|&x| x == a).unwrap() < perm.iter().position(|&x| x == b).unwrap()
            })
        };
        let mut perms = vec![vec![]];
        for _ in 0..n {
            perms = perms
                .into_iter()
                .flat_map(|p: Vec<usize>| {
                    (0..n)
                        .filter(|x| !p.contains(x))
                        .map(|x| {
                            let mut q = p.clone();
                            q.push(x);
                            q
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
        }
        let smallest_valid = perms.into_iter().filter(|p| valid(p)).min().unwrap();
        let order: Vec<usize> = topo_order(&g).unwrap().iter().map(|p| p.id).collect();
        assert!(valid(&order));
        assert_eq!(order, smallest_valid);
        // both build pipelines (A's groups and B) precede the final probe pipeline
        let last = *order.last().unwrap();
        assert!(matches!(g.pipelines[last].sink, Sink::ResultSink));
        assert_eq!(g.pipelines[last].ops.iter().filter(|o| matches!(o, Op::Probe(_))).count(), 2);
    }

    #[test]
    fn every_operator_visited_once() {
        for plan in [fig2(), two_builds()] {
            let g = dissect(&plan);
            let order = topo_order(&g).unwrap();
            let mut seen = Vec::new();
            for p in &order {
                if let Source::TableScan { .. } = p.source {
                    seen.push("scan");
                }
                for op in &p.ops {
                    seen.push(plan.preorder()[op.node().0].kind_name());
                }
                match p.sink {
                    Sink::MaterializeHashTable(n) | Sink::MaterializeSortArray(n) => {
                        if !matches!(plan.preorder()[n.0], PlanNode::HashJoin { .. }) {
                            seen.push(plan.preorder()[n.0].kind_name())
                        }
                    }
                    Sink::ResultSink => {}
                }
            }
            let mut expected: Vec<&str> = plan
                .preorder()
                .iter()
                .map(|n| if matches!(n, PlanNode::Scan { .. }) { "scan" } else { n.kind_name() })
                .collect();
            seen.sort();
            expected.sort();
            assert_eq!(seen, expected);
        }
    }

    #[test]
    fn cycle_is_reported() {
        let mut g = dissect(&fig2());
        g.deps.push((2, 0));
        assert!(matches!(topo_order(&g), Err(PipelineError::Cycle(_))));
    }
}
