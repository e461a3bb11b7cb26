//! Directed road graph, JSON ingestion and time-dependent shortest paths.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2D;

/// Slack allowed between a link's stated length and the straight line.
const LENGTH_SLACK: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

impl Node {
    pub fn location(&self) -> Point2D {
        Point2D::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub from: String,
    pub to: String,
    /// meters
    pub length: f64,
    /// meters / second
    pub free_speed: f64,
    pub lanes: u32,
    /// vehicles / hour
    pub flow_capacity: f64,
}

impl Link {
    pub fn free_flow_time(&self) -> f64 {
        self.length / self.free_speed
    }
}

pub fn free_flow_time(link: &Link) -> f64 {
    link.free_flow_time()
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    nodes: Vec<Node>,
    links: Vec<Link>,
}

#[derive(Serialize)]
struct NetworkDocRef<'a> {
    nodes: &'a [Node],
    links: &'a [Link],
}

/// Immutable road network. Nodes and links keep their input order; the
/// adjacency lists hold link indices sorted by link id.
#[derive(Debug, Clone, Deserialize)]
#[serde(try_from = "NetworkDoc")]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    links: Vec<Link>,
    node_index: HashMap<String, usize>,
    link_index: HashMap<String, usize>,
    link_from: Vec<usize>,
    link_to: Vec<usize>,
    outgoing: Vec<Vec<usize>>,
}

impl TryFrom<NetworkDoc> for RoadNetwork {
    type Error = Error;

    fn try_from(doc: NetworkDoc) -> Result<Self> {
        RoadNetwork::new(doc.nodes, doc.links)
    }
}

impl Serialize for RoadNetwork {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkDocRef {
            nodes: &self.nodes,
            links: &self.links,
        }
        .serialize(serializer)
    }
}

impl PartialEq for RoadNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.links == other.links
    }
}

impl RoadNetwork {
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if !(n.x.is_finite() && n.y.is_finite()) {
                return Err(Error::validation(format!("node {} has non-finite location", n.id)));
            }
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(format!("node {}", n.id)));
            }
        }
        let mut link_index = HashMap::with_capacity(links.len());
        let mut link_from = Vec::with_capacity(links.len());
        let mut link_to = Vec::with_capacity(links.len());
        let mut outgoing = vec![Vec::new(); nodes.len()];
        for (i, l) in links.iter().enumerate() {
            if link_index.insert(l.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(format!("link {}", l.id)));
            }
            let from = *node_index
                .get(&l.from)
                .ok_or_else(|| Error::validation(format!("link {} references missing node {}", l.id, l.from)))?;
            let to = *node_index
                .get(&l.to)
                .ok_or_else(|| Error::validation(format!("link {} references missing node {}", l.id, l.to)))?;
            if from == to {
                return Err(Error::validation(format!("link {} is a self-loop", l.id)));
            }
            if !(l.length > 0.0 && l.length.is_finite()) {
                return Err(Error::validation(format!("link {} has nonpositive length", l.id)));
            }
            if !(l.free_speed > 0.0 && l.free_speed.is_finite()) {
                return Err(Error::validation(format!("link {} has nonpositive free_speed", l.id)));
            }
            if l.lanes == 0 {
                return Err(Error::validation(format!("link {} has zero lanes", l.id)));
            }
            if !(l.flow_capacity > 0.0 && l.flow_capacity.is_finite()) {
                return Err(Error::validation(format!(
                    "link {} has nonpositive flow_capacity",
                    l.id
                )));
            }
            let straight = nodes[from].location().distance(&nodes[to].location());
            if l.length < straight * LENGTH_SLACK {
                return Err(Error::validation(format!(
                    "link {} is shorter ({}) than the straight line between its nodes ({straight})",
                    l.id, l.length
                )));
            }
            link_from.push(from);
            link_to.push(to);
            outgoing[from].push(i);
        }
        for out in &mut outgoing {
            out.sort_by(|&a, &b| links[a].id.cmp(&links[b].id));
        }
        Ok(RoadNetwork {
            nodes,
            links,
            node_index,
            link_index,
            link_from,
            link_to,
            outgoing,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: NetworkDoc = serde_json::from_str(text)?;
        RoadNetwork::new(doc.nodes, doc.links)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("network serializes")
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_idx(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn link_idx(&self, id: &str) -> Option<usize> {
        self.link_index.get(id).copied()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.node_idx(id).map(|i| &self.nodes[i])
    }

    pub fn link(&self, id: &str) -> Option<&Link> {
        self.link_idx(id).map(|i| &self.links[i])
    }

    /// Node indices of a link's endpoints.
    pub fn endpoints(&self, link: usize) -> (usize, usize) {
        (self.link_from[link], self.link_to[link])
    }

    /// Outgoing link indices of a node, sorted by link id.
    pub fn outgoing(&self, node: usize) -> &[usize] {
        &self.outgoing[node]
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Read and validate a network in the JSON exchange format.
pub fn load_network<R: Read>(mut source: R) -> Result<RoadNetwork> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    RoadNetwork::from_json_str(&text)
}

/// A destination on a link, `offset` in [0, 1] along from -> to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkTarget {
    pub link_id: String,
    pub offset: f64,
}

/// A walk through the network ending part-way along a terminal link.
///
/// `nodes` always starts at the origin; `links` are traversed fully and
/// `terminal_link` (if any) is entered and left at `offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub nodes: Vec<String>,
    pub links: Vec<String>,
    pub terminal_link: Option<String>,
    pub offset: f64,
}

impl Route {
    /// Route that stays at `node`.
    pub fn stationary(node: &str) -> Self {
        Route {
            nodes: vec![node.to_string()],
            links: Vec::new(),
            terminal_link: None,
            offset: 0.0,
        }
    }

    /// True when the route neither traverses a link nor moves along one.
    pub fn is_empty(&self) -> bool {
        self.links.is_empty() && (self.terminal_link.is_none() || self.offset == 0.0)
    }

    /// Sum of `link_time` over the walk, including the terminal fraction.
    pub fn travel_time<F: Fn(&Link) -> f64>(&self, net: &RoadNetwork, link_time: F) -> Result<f64> {
        let mut total = 0.0;
        for id in &self.links {
            let l = net.link(id).ok_or_else(|| Error::Lookup(format!("link {id}")))?;
            total += link_time(l);
        }
        if let Some(id) = &self.terminal_link {
            let l = net.link(id).ok_or_else(|| Error::Lookup(format!("link {id}")))?;
            total += self.offset * link_time(l);
        }
        Ok(total)
    }

    /// Checks that the links form a connected walk from the first node.
    pub fn validate(&self, net: &RoadNetwork) -> Result<()> {
        let mut at = self
            .nodes
            .first()
            .ok_or_else(|| Error::validation("route has no origin node"))?
            .clone();
        if net.node(&at).is_none() {
            return Err(Error::Lookup(format!("node {at}")));
        }
        for id in self.links.iter().chain(self.terminal_link.iter()) {
            let l = net.link(id).ok_or_else(|| Error::Lookup(format!("link {id}")))?;
            if l.from != at {
                return Err(Error::validation(format!(
                    "route is not a walk: link {id} starts at {} not {at}",
                    l.from
                )));
            }
            at = l.to.clone();
        }
        if !(0.0..=1.0).contains(&self.offset) {
            return Err(Error::validation("route offset outside [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub route: Route,
    pub travel_time: f64,
}

#[derive(PartialEq)]
struct HeapEntry {
    time: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-origin shortest-path tree over an injected link-time metric.
///
/// Among equal-time paths the tree keeps the one whose node-id sequence is
/// lexicographically smallest.
pub struct ShortestPathTree<'a> {
    net: &'a RoadNetwork,
    origin: usize,
    dist: Vec<f64>,
    pred: Vec<Option<usize>>,
    times: Vec<f64>,
}

impl<'a> ShortestPathTree<'a> {
    pub fn build<F: Fn(&Link) -> f64>(net: &'a RoadNetwork, origin: &str, link_time: F) -> Result<Self> {
        let origin = net
            .node_idx(origin)
            .ok_or_else(|| Error::Lookup(format!("origin node {origin}")))?;
        let times: Vec<f64> = net.links.iter().map(&link_time).collect();
        if let Some(i) = times.iter().position(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::validation(format!(
                "link time for {} is not strictly positive",
                net.links[i].id
            )));
        }
        let n = net.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[origin] = 0.0;
        heap.push(HeapEntry {
            time: 0.0,
            node: origin,
        });
        while let Some(HeapEntry { time, node }) = heap.pop() {
            if done[node] || time > dist[node] {
                continue;
            }
            done[node] = true;
            for &li in net.outgoing(node) {
                let next = net.link_to[li];
                if done[next] {
                    continue;
                }
                let cand = time + times[li];
                let better = match cand.total_cmp(&dist[next]) {
                    Ordering::Less => true,
                    Ordering::Equal => {
                        let current = pred[next].expect("finite distance has a predecessor");
                        let cur_from = net.link_from[current];
                        cur_from != node && path_cmp(net, &pred, node, cur_from, next) == Ordering::Less
                    }
                    Ordering::Greater => false,
                };
                if better {
                    dist[next] = cand;
                    pred[next] = Some(li);
                    heap.push(HeapEntry { time: cand, node: next });
                }
            }
        }
        Ok(ShortestPathTree {
            net,
            origin,
            dist,
            pred,
            times,
        })
    }

    pub fn time_to_node(&self, node: usize) -> Option<f64> {
        self.dist[node].is_finite().then_some(self.dist[node])
    }

    /// Link indices from the origin to `node`.
    fn link_path(&self, node: usize) -> Vec<usize> {
        let mut links = Vec::new();
        let mut at = node;
        while let Some(li) = self.pred[at] {
            links.push(li);
            at = self.net.link_from[li];
        }
        debug_assert_eq!(at, self.origin);
        links.reverse();
        links
    }

    fn node_route(&self, node: usize) -> Vec<usize> {
        node_path(self.net, &self.pred, node)
    }

    /// Route to a point on a link; `None` if the link's from-node is unreachable.
    pub fn route_to(&self, target: &LinkTarget) -> Result<Option<PathResult>> {
        let li = self
            .net
            .link_idx(&target.link_id)
            .ok_or_else(|| Error::Lookup(format!("target link {}", target.link_id)))?;
        if !(0.0..=1.0).contains(&target.offset) {
            return Err(Error::validation(format!(
                "target offset {} outside [0, 1]",
                target.offset
            )));
        }
        let from = self.net.link_from[li];
        let Some(base) = self.time_to_node(from) else {
            return Ok(None);
        };
        let nodes = self
            .node_route(from)
            .into_iter()
            .map(|i| self.net.nodes[i].id.clone())
            .collect();
        let links = self
            .link_path(from)
            .into_iter()
            .map(|i| self.net.links[i].id.clone())
            .collect();
        Ok(Some(PathResult {
            route: Route {
                nodes,
                links,
                terminal_link: Some(target.link_id.clone()),
                offset: target.offset,
            },
            travel_time: base + target.offset * self.times[li],
        }))
    }
}

fn node_path(net: &RoadNetwork, pred: &[Option<usize>], node: usize) -> Vec<usize> {
    let mut nodes = vec![node];
    let mut at = node;
    while let Some(li) = pred[at] {
        at = net.link_from[li];
        nodes.push(at);
    }
    nodes.reverse();
    nodes
}

/// Lexicographic comparison of the node-id sequences `path(a) + [next]`
/// and `path(b) + [next]`.
fn path_cmp(net: &RoadNetwork, pred: &[Option<usize>], a: usize, b: usize, next: usize) -> Ordering {
    let pa = node_path(net, pred, a);
    let pb = node_path(net, pred, b);
    let ia = pa
        .iter()
        .chain(std::iter::once(&next))
        .map(|&i| net.nodes[i].id.as_str());
    let ib = pb
        .iter()
        .chain(std::iter::once(&next))
        .map(|&i| net.nodes[i].id.as_str());
    ia.cmp(ib)
}

/// Minimum-time routes from `origin` to each reachable target.
///
/// The map is keyed by target position in `targets`; unreachable targets
/// are absent.
pub fn shortest_path<F: Fn(&Link) -> f64>(
    net: &RoadNetwork,
    origin: &str,
    targets: &[LinkTarget],
    link_time: F,
) -> Result<std::collections::BTreeMap<usize, PathResult>> {
    for t in targets {
        if net.link(&t.link_id).is_none() {
            return Err(Error::Lookup(format!("target link {}", t.link_id)));
        }
    }
    let tree = ShortestPathTree::build(net, origin, link_time)?;
    let mut out = std::collections::BTreeMap::new();
    for (i, t) in targets.iter().enumerate() {
        if let Some(r) = tree.route_to(t)? {
            out.insert(i, r);
        }
    }
    Ok(out)
}
