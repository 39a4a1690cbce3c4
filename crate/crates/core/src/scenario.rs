//! Latent-root causal graphs for two interacting units and the
//! d-separation / back-door queries used to reason about identifiability.
//!
//! Undirected edges between the two units (`U1 - U2`, `Z1 - Z2`) stand for
//! inherent spatial dependence. They are compiled to an unobserved common
//! parent (`Uu`, `Zu`) so that ordinary DAG separation applies.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    U1,
    U2,
    Z1,
    Z2,
    Y1,
    Y2,
    Uu,
    Zu,
}

impl Node {
    pub const ALL: [Node; 8] = [
        Node::U1,
        Node::U2,
        Node::Z1,
        Node::Z2,
        Node::Y1,
        Node::Y2,
        Node::Uu,
        Node::Zu,
    ];

    /// Position in [`Node::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_latent_root(self) -> bool {
        matches!(self, Node::Uu | Node::Zu)
    }

    pub fn name(self) -> &'static str {
        match self {
            Node::U1 => "U1",
            Node::U2 => "U2",
            Node::Z1 => "Z1",
            Node::Z2 => "Z2",
            Node::Y1 => "Y1",
            Node::Y2 => "Y2",
            Node::Uu => "Uu",
            Node::Zu => "Zu",
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Node {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Node::ALL
            .into_iter()
            .find(|n| n.name().eq_ignore_ascii_case(t))
            .or(match t {
                "U^u" | "u^u" => Some(Node::Uu),
                "Z^u" | "z^u" => Some(Node::Zu),
                _ => None,
            })
            .ok_or_else(|| invalid(format!("unknown node `{t}`")))
    }
}

/// The six two-unit scenarios plus the full graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Direct spatial confounding.
    A,
    /// Spatial interference.
    B,
    /// Direct and indirect spatial confounding.
    C,
    /// Direct spatial confounding and interference.
    D,
    /// Interference and a spatial predictor of the exposure.
    E,
    /// Direct, indirect confounding and interference.
    F,
    /// Every dependency considered; same edge set as [`Scenario::F`].
    Full,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::A,
        Scenario::B,
        Scenario::C,
        Scenario::D,
        Scenario::E,
        Scenario::F,
        Scenario::Full,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::A => "2a",
            Scenario::B => "2b",
            Scenario::C => "2c",
            Scenario::D => "2d",
            Scenario::E => "2e",
            Scenario::F => "2f",
            Scenario::Full => "full",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::A => "direct spatial confounding",
            Scenario::B => "spatial interference",
            Scenario::C => "direct and indirect spatial confounding",
            Scenario::D => "direct spatial confounding and interference",
            Scenario::E => "interference and a spatial predictor of the exposure",
            Scenario::F => "direct, indirect spatial confounding and interference",
            Scenario::Full => "all dependencies",
        }
    }

    /// Within-pair directed edges among observed-level nodes.
    fn directed_edges(self) -> Vec<(Node, Node)> {
        use Node::*;
        let confounding = [(U1, Z1), (U1, Y1), (U2, Z2), (U2, Y2)];
        let local = [(Z1, Y1), (Z2, Y2)];
        let indirect = [(U1, Y2), (U2, Y1)];
        let interference = [(Z1, Y2), (Z2, Y1)];
        let predictor = [(U1, Z1), (U2, Z2)];
        let mut e: Vec<(Node, Node)> = match self {
            Scenario::A => [&confounding[..], &local[..]].concat(),
            Scenario::B => [&local[..], &interference[..]].concat(),
            Scenario::C => [&confounding[..], &local[..], &indirect[..]].concat(),
            Scenario::D => [&confounding[..], &local[..], &interference[..]].concat(),
            Scenario::E => [&predictor[..], &local[..], &interference[..]].concat(),
            Scenario::F | Scenario::Full => [
                &confounding[..],
                &local[..],
                &indirect[..],
                &interference[..],
            ]
            .concat(),
        };
        e.sort();
        e.dedup();
        e
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let t = t
            .strip_prefix("fig")
            .unwrap_or(&t)
            .trim_start_matches(['.', ' ']);
        match t {
            "2a" | "a" => Ok(Scenario::A),
            "2b" | "b" => Ok(Scenario::B),
            "2c" | "c" => Ok(Scenario::C),
            "2d" | "d" => Ok(Scenario::D),
            "2e" | "e" => Ok(Scenario::E),
            "2f" | "f" => Ok(Scenario::F),
            "full" | "1d" => Ok(Scenario::Full),
            _ => Err(invalid(format!("unknown scenario `{s}`"))),
        }
    }
}

/// A compiled scenario graph over at most eight nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioDag {
    scenario: Scenario,
    nodes: Vec<Node>,
    edges: Vec<(Node, Node)>,
    parents: [u8; 8],
    children: [u8; 8],
}

/// Compiles a scenario. When `z_spatial` (`u_spatial`) is false, the latent
/// root `Zu` (`Uu`) and its edges are left out.
pub fn build_scenario(scenario: Scenario, z_spatial: bool, u_spatial: bool) -> ScenarioDag {
    use Node::*;
    let mut edges = scenario.directed_edges();
    let mut nodes = vec![U1, U2, Z1, Z2, Y1, Y2];
    if u_spatial {
        nodes.push(Uu);
        edges.extend([(Uu, U1), (Uu, U2)]);
    }
    if z_spatial {
        nodes.push(Zu);
        edges.extend([(Zu, Z1), (Zu, Z2)]);
    }
    ScenarioDag::from_edges(scenario, nodes, edges)
}

/// Parses a scenario id and compiles it with both latent roots present.
pub fn build_scenario_by_id(id: &str) -> Result<ScenarioDag> {
    Ok(build_scenario(id.parse()?, true, true))
}

fn bit(n: Node) -> u8 {
    1 << n.index()
}

fn members(mask: u8) -> impl Iterator<Item = Node> {
    Node::ALL.into_iter().filter(move |n| mask & bit(*n) != 0)
}

impl ScenarioDag {
    fn from_edges(scenario: Scenario, nodes: Vec<Node>, mut edges: Vec<(Node, Node)>) -> Self {
        edges.sort();
        edges.dedup();
        let mut parents = [0u8; 8];
        let mut children = [0u8; 8];
        for &(a, b) in &edges {
            children[a.index()] |= bit(b);
            parents[b.index()] |= bit(a);
        }
        Self {
            scenario,
            nodes,
            edges,
            parents,
            children,
        }
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn contains(&self, n: Node) -> bool {
        self.nodes.contains(&n)
    }

    pub fn edges(&self) -> &[(Node, Node)] {
        &self.edges
    }

    pub fn has_edge(&self, from: Node, to: Node) -> bool {
        self.children[from.index()] & bit(to) != 0
    }

    pub fn parents(&self, n: Node) -> impl Iterator<Item = Node> {
        members(self.parents[n.index()])
    }

    pub fn children(&self, n: Node) -> impl Iterator<Item = Node> {
        members(self.children[n.index()])
    }

    /// Kahn's algorithm; false if a cycle exists.
    pub fn is_acyclic(&self) -> bool {
        let mut indeg: Vec<u32> = Node::ALL
            .iter()
            .map(|n| self.parents[n.index()].count_ones())
            .collect();
        let mut stack: Vec<Node> = self
            .nodes
            .iter()
            .copied()
            .filter(|n| indeg[n.index()] == 0)
            .collect();
        let mut seen = 0;
        while let Some(n) = stack.pop() {
            seen += 1;
            for c in self.children(n) {
                indeg[c.index()] -= 1;
                if indeg[c.index()] == 0 {
                    stack.push(c);
                }
            }
        }
        seen == self.nodes.len()
    }

    fn ancestors_mask(&self, set: u8) -> u8 {
        let mut out = set;
        loop {
            let next = members(out).fold(out, |acc, n| acc | self.parents[n.index()]);
            if next == out {
                return out;
            }
            out = next;
        }
    }

    fn descendants_mask(&self, n: Node) -> u8 {
        let mut out = bit(n);
        loop {
            let next = members(out).fold(out, |acc, m| acc | self.children[m.index()]);
            if next == out {
                return out;
            }
            out = next;
        }
    }

    fn check_query(&self, x: Node, y: Node, cond: &[Node]) -> Result<u8> {
        for n in [x, y].iter().chain(cond) {
            if !self.contains(*n) {
                return Err(invalid(format!(
                    "node {n} is not part of scenario {}",
                    self.scenario
                )));
            }
        }
        if x == y {
            return Err(invalid(format!("query endpoints coincide at {x}")));
        }
        let mut mask = 0u8;
        for &c in cond {
            if c.is_latent_root() {
                return Err(invalid(format!(
                    "cannot condition on unobservable root {c}"
                )));
            }
            if c == x || c == y {
                return Err(invalid(format!(
                    "{c} is both an endpoint and in the conditioning set"
                )));
            }
            mask |= bit(c);
        }
        Ok(mask)
    }

    /// True iff every trail between `x` and `y` is blocked by `cond`.
    ///
    /// Reachability over (node, direction) states: a trail may pass a
    /// non-collider only if it is unconditioned, and a collider only if it
    /// has a conditioned descendant.
    pub fn d_separated(&self, x: Node, y: Node, cond: &[Node]) -> Result<bool> {
        let cmask = self.check_query(x, y, cond)?;
        let anc = self.ancestors_mask(cmask);
        // visited[dir][node]; dir 0 = arrived from a child (moving up),
        // dir 1 = arrived from a parent (moving down)
        let mut visited = [[false; 8]; 2];
        let mut stack = vec![(x, 0usize)];
        while let Some((n, dir)) = stack.pop() {
            if visited[dir][n.index()] {
                continue;
            }
            visited[dir][n.index()] = true;
            if n == y {
                return Ok(false);
            }
            let conditioned = cmask & bit(n) != 0;
            if dir == 0 {
                if !conditioned {
                    stack.extend(self.parents(n).map(|p| (p, 0)));
                    stack.extend(self.children(n).map(|c| (c, 1)));
                }
            } else {
                if !conditioned {
                    stack.extend(self.children(n).map(|c| (c, 1)));
                }
                if anc & bit(n) != 0 {
                    stack.extend(self.parents(n).map(|p| (p, 0)));
                }
            }
        }
        Ok(true)
    }

    /// All simple trails from `from` to `to`, as node sequences.
    pub fn trails(&self, from: Node, to: Node) -> Vec<Vec<Node>> {
        let mut out = Vec::new();
        let mut path = vec![from];
        self.extend_trails(to, bit(from), &mut path, &mut out);
        out
    }

    fn extend_trails(&self, to: Node, used: u8, path: &mut Vec<Node>, out: &mut Vec<Vec<Node>>) {
        let last = *path.last().unwrap();
        if last == to {
            out.push(path.clone());
            return;
        }
        let adjacent = self.parents[last.index()] | self.children[last.index()];
        for next in members(adjacent & !used) {
            path.push(next);
            self.extend_trails(to, used | bit(next), path, out);
            path.pop();
        }
    }

    /// Why a trail is blocked by `cond`, or `None` when it is open.
    pub fn trail_status(&self, trail: &[Node], cond: &[Node]) -> Option<BlockReason> {
        let cmask: u8 = cond.iter().fold(0, |m, &c| m | bit(c));
        for w in trail.windows(3) {
            let (a, b, c) = (w[0], w[1], w[2]);
            let collider = self.has_edge(a, b) && self.has_edge(c, b);
            if collider {
                if self.descendants_mask(b) & cmask == 0 {
                    return Some(BlockReason::UnconditionedCollider(b));
                }
            } else if cmask & bit(b) != 0 {
                let kind = if self.has_edge(b, a) && self.has_edge(b, c) {
                    NonCollider::Fork
                } else {
                    NonCollider::Chain
                };
                return Some(BlockReason::ConditionedNonCollider(b, kind));
            }
        }
        None
    }

    /// Trails from `treatment` to `outcome` whose first edge points into
    /// the treatment, each tagged open or blocked given `cond`.
    pub fn backdoor_paths(
        &self,
        treatment: Node,
        outcome: Node,
        cond: &[Node],
    ) -> Result<PathReport> {
        self.check_query(treatment, outcome, cond)?;
        Ok(self.report(treatment, outcome, cond, |t| self.has_edge(t[1], t[0])))
    }

    /// Every trail between `x` and `y`, tagged open or blocked given `cond`.
    /// `x` and `y` are d-separated exactly when none is open.
    pub fn trail_report(&self, x: Node, y: Node, cond: &[Node]) -> Result<PathReport> {
        self.check_query(x, y, cond)?;
        Ok(self.report(x, y, cond, |_| true))
    }

    fn report(
        &self,
        source: Node,
        sink: Node,
        cond: &[Node],
        keep: impl Fn(&[Node]) -> bool,
    ) -> PathReport {
        let paths = self
            .trails(source, sink)
            .into_iter()
            .filter(|t| keep(t))
            .map(|nodes| {
                let blocked = self.trail_status(&nodes, cond);
                let steps = nodes
                    .windows(2)
                    .map(|w| {
                        if self.has_edge(w[0], w[1]) {
                            Step::Forward
                        } else {
                            Step::Backward
                        }
                    })
                    .collect();
                TrailReport {
                    nodes,
                    steps,
                    blocked,
                }
            })
            .collect();
        PathReport {
            source,
            sink,
            conditioning: cond.to_vec(),
            paths,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonCollider {
    Chain,
    Fork,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockReason {
    ConditionedNonCollider(Node, NonCollider),
    UnconditionedCollider(Node),
}

impl fmt::Display for BlockReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockReason::ConditionedNonCollider(n, NonCollider::Chain) => {
                write!(f, "conditioned chain node {n}")
            }
            BlockReason::ConditionedNonCollider(n, NonCollider::Fork) => {
                write!(f, "conditioned fork node {n}")
            }
            BlockReason::UnconditionedCollider(n) => write!(f, "unconditioned collider {n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrailReport {
    nodes: Vec<Node>,
    steps: Vec<Step>,
    blocked: Option<BlockReason>,
}

impl TrailReport {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn is_open(&self) -> bool {
        self.blocked.is_none()
    }

    pub fn blocked_by(&self) -> Option<BlockReason> {
        self.blocked
    }

    /// Chain-graph rendering: `A ← Uu → B` between the two units collapses
    /// to `A - B`.
    pub fn collapsed(&self) -> String {
        let mut out = self.nodes[0].to_string();
        let mut i = 0;
        while i < self.steps.len() {
            let next = self.nodes[i + 1];
            if next.is_latent_root() && i + 1 < self.steps.len() {
                out.push_str(" - ");
                out.push_str(self.nodes[i + 2].name());
                i += 2;
                continue;
            }
            out.push_str(match self.steps[i] {
                Step::Forward => " → ",
                Step::Backward => " ← ",
            });
            out.push_str(next.name());
            i += 1;
        }
        out
    }
}

impl fmt::Display for TrailReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.collapsed())?;
        match self.blocked {
            None => f.write_str("  [open]"),
            Some(r) => write!(f, "  [blocked: {r}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathReport {
    pub source: Node,
    pub sink: Node,
    pub conditioning: Vec<Node>,
    pub paths: Vec<TrailReport>,
}

impl PathReport {
    pub fn open(&self) -> impl Iterator<Item = &TrailReport> {
        self.paths.iter().filter(|p| p.is_open())
    }

    pub fn n_open(&self) -> usize {
        self.open().count()
    }

    /// One `(source, sink, path, status, reason)` row per trail.
    pub fn rows(&self) -> Vec<[String; 5]> {
        self.paths
            .iter()
            .map(|p| {
                [
                    self.source.to_string(),
                    self.sink.to_string(),
                    p.collapsed(),
                    if p.is_open() { "open" } else { "blocked" }.to_string(),
                    p.blocked.map(|r| r.to_string()).unwrap_or_default(),
                ]
            })
            .collect()
    }
}

impl fmt::Display for PathReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cond: Vec<&str> = self.conditioning.iter().map(|n| n.name()).collect();
        writeln!(
            f,
            "trails {} → {} given {{{}}}: {} total, {} open",
            self.source,
            self.sink,
            cond.join(", "),
            self.paths.len(),
            self.n_open()
        )?;
        for p in &self.paths {
            writeln!(f, "  {p}")?;
        }
        Ok(())
    }
}

/// A parsed `X _||_ Y | A,B` independence query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndependenceQuery {
    pub x: Node,
    pub y: Node,
    pub cond: Vec<Node>,
}

impl FromStr for IndependenceQuery {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (x, rest) = s
            .split_once("_||_")
            .ok_or_else(|| invalid(format!("query `{s}` must look like `X _||_ Y | A,B`")))?;
        let (y, cond) = rest.split_once('|').unwrap_or((rest, ""));
        let cond = cond
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Node>>>()?;
        Ok(Self {
            x: x.parse()?,
            y: y.parse()?,
            cond,
        })
    }
}
